// Copyright 2026 The n2dvc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dvc/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dvc/error.hpp"

namespace dvc {

// ---------------------------------------------------------------------------
// KvReader

KvReader::KvReader(const KeyValues& kv, std::string section)
    : kv_(kv), section_(std::move(section)) {}

const std::string* KvReader::find(const std::string& key) {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KvReader::bad(const std::string& key, const std::string& value, const char* expected) const {
  throw ValidationError("[" + section_ + "] " + key + " = '" + value + "' is not " + expected);
}

namespace {

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const std::string t = boost::trim_copy(s);
  const auto* end = t.data() + t.size();
  const auto r = std::from_chars(t.data(), end, out);
  return r.ec == std::errc() && r.ptr == end && !t.empty();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  const std::string t = boost::trim_copy(s);
  if (t.empty()) return out;
  boost::split(out, t, boost::is_any_of(","));
  for (auto& x : out) boost::trim(x);
  return out;
}

}  // namespace

void KvReader::read(const std::string& key, int& value) {
  if (const auto* s = find(key))
    if (!parse_number(*s, value)) bad(key, *s, "an integer");
}

void KvReader::read(const std::string& key, long& value) {
  if (const auto* s = find(key))
    if (!parse_number(*s, value)) bad(key, *s, "an integer");
}

void KvReader::read(const std::string& key, std::uint64_t& value) {
  if (const auto* s = find(key))
    if (!parse_number(*s, value)) bad(key, *s, "a nonnegative integer");
}

void KvReader::read(const std::string& key, double& value) {
  if (const auto* s = find(key))
    if (!parse_number(*s, value)) bad(key, *s, "a number");
}

void KvReader::read(const std::string& key, bool& value) {
  if (const auto* s = find(key)) {
    const std::string t = boost::to_lower_copy(boost::trim_copy(*s));
    if (t == "true" || t == "1" || t == "yes") value = true;
    else if (t == "false" || t == "0" || t == "no") value = false;
    else bad(key, *s, "a boolean");
  }
}

void KvReader::read(const std::string& key, std::string& value) {
  if (const auto* s = find(key)) value = boost::trim_copy(*s);
}

void KvReader::read(const std::string& key, std::vector<int>& value) {
  if (const auto* s = find(key)) {
    value.clear();
    for (const auto& item : split_list(*s)) {
      int v = 0;
      if (!parse_number(item, v)) bad(key, *s, "a comma-separated integer list");
      value.push_back(v);
    }
  }
}

void KvReader::read(const std::string& key, std::vector<double>& value) {
  if (const auto* s = find(key)) {
    value.clear();
    for (const auto& item : split_list(*s)) {
      double v = 0;
      if (!parse_number(item, v)) bad(key, *s, "a comma-separated number list");
      value.push_back(v);
    }
  }
}

void KvReader::read(const std::string& key, std::vector<std::string>& value) {
  if (const auto* s = find(key)) value = split_list(*s);
}

void KvReader::finish() const {
  for (const auto& [k, _] : kv_)
    if (!used_.contains(k)) throw ValidationError("unknown key '" + k + "' in [" + section_ + "]");
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string join(const std::vector<std::string>& v) { return boost::join(v, ","); }

// ---------------------------------------------------------------------------
// PipelineConfig

namespace {

KeyValues corpus_kv(const CorpusSection& c) {
  return {{"root", c.root.string()},
          {"synthetic", c.synthetic ? "true" : "false"},
          {"seed", std::to_string(c.seed)},
          {"n_normal", std::to_string(c.n_normal)},
          {"n_dysarthric", std::to_string(c.n_dysarthric)},
          {"words", std::to_string(c.words)},
          {"stretches", join(c.stretches)},
          {"train_count", std::to_string(c.train_count)},
          {"test_count", std::to_string(c.test_count)}};
}

CorpusSection corpus_from(const KeyValues& kv) {
  CorpusSection c;
  KvReader r(kv, "corpus");
  std::string root;
  r.read("root", root);
  c.root = root;
  r.read("synthetic", c.synthetic);
  r.read("seed", c.seed);
  r.read("n_normal", c.n_normal);
  r.read("n_dysarthric", c.n_dysarthric);
  r.read("words", c.words);
  r.read("stretches", c.stretches);
  r.read("train_count", c.train_count);
  r.read("test_count", c.test_count);
  r.finish();
  return c;
}

KeyValues pipeline_kv(const PipelineSection& p) {
  return {{"targets", join(p.targets)},
          {"sources", join(p.sources)},
          {"pretrain_speaker", p.pretrain_speaker},
          {"seed", std::to_string(p.seed)},
          {"pretrain_steps", std::to_string(p.pretrain_steps)},
          {"finetune_steps", std::to_string(p.finetune_steps)},
          {"vae_steps", std::to_string(p.vae_steps)},
          {"save_interval", std::to_string(p.save_interval)},
          {"vocoder_iterations", std::to_string(p.vocoder_iterations)},
          {"write_wavs", p.write_wavs ? "true" : "false"},
          {"hypotheses", p.hypotheses.string()},
          {"ster", p.ster.string()}};
}

PipelineSection pipeline_from(const KeyValues& kv) {
  PipelineSection p;
  KvReader r(kv, "pipeline");
  r.read("targets", p.targets);
  r.read("sources", p.sources);
  r.read("pretrain_speaker", p.pretrain_speaker);
  r.read("seed", p.seed);
  std::string out = p.out.string(), hyp, ster;
  r.read("out", out);
  r.read("hypotheses", hyp);
  r.read("ster", ster);
  p.out = out;
  p.hypotheses = hyp;
  p.ster = ster;
  r.read("pretrain_steps", p.pretrain_steps);
  r.read("finetune_steps", p.finetune_steps);
  r.read("vae_steps", p.vae_steps);
  r.read("save_interval", p.save_interval);
  r.read("vocoder_iterations", p.vocoder_iterations);
  r.read("write_wavs", p.write_wavs);
  r.finish();
  if (p.vocoder_iterations < 1) throw ValidationError("[pipeline] vocoder_iterations must be >= 1");
  if (p.pretrain_steps < 0 || p.finetune_steps < 0 || p.vae_steps < 0)
    throw ValidationError("[pipeline] step counts must be >= 0");
  return p;
}

}  // namespace

std::string PipelineConfig::canonical_text() const {
  std::ostringstream out;
  const std::pair<const char*, KeyValues> sections[] = {{"corpus", corpus_kv(corpus)},
                                                        {"pipeline", pipeline_kv(pipeline)},
                                                        {"s2s", s2s.to_kv()},
                                                        {"vae", vae.to_kv()}};
  for (const auto& [name, kv] : sections)
    for (const auto& [k, v] : kv) out << name << "." << k << "=" << v << "\n";
  return out.str();
}

std::string PipelineConfig::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : canonical_text()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

void PipelineConfig::apply_seed(std::uint64_t seed) {
  pipeline.seed = seed;
  s2s.seed = seed;
  vae.seed = seed + 1;
}

PipelineConfig parse_config_text(const std::string& text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  std::map<std::string, KeyValues> sections;
  for (const auto& [name, section] : tree) {
    if (!section.data().empty())
      throw ValidationError(origin + ": key '" + name + "' must live inside a section");
    KeyValues kv;
    for (const auto& [k, v] : section) kv[k] = v.data();
    sections[name] = kv;
  }
  PipelineConfig c;
  for (const auto& [name, kv] : sections) {
    if (name == "corpus") c.corpus = corpus_from(kv);
    else if (name == "pipeline") c.pipeline = pipeline_from(kv);
    else if (name == "s2s") c.s2s = S2SConfig::from_kv(kv);
    else if (name == "vae") c.vae = VAEConfig::from_kv(kv);
    else throw ValidationError(origin + ": unknown section [" + name + "]");
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.string());
}

PipelineConfig desk_config() {
  PipelineConfig c;
  c.s2s.d_model = 64;
  c.s2s.n_heads = 2;
  c.s2s.enc_layers = 2;
  c.s2s.dec_layers = 2;
  c.s2s.ff_dim = 128;
  c.s2s.prenet_dims = {64, 64};
  c.s2s.postnet_layers = 3;
  c.s2s.postnet_channels = 64;
  c.s2s.postnet_kernel = 5;
  c.s2s.max_decode_frames = 400;
  c.s2s.lr = 1e-3;
  c.s2s.warmup_steps = 100;
  c.s2s.batch_size = 8;
  c.vae.enc_channels = {64, 64};
  c.vae.latent_dim = 16;
  c.vae.codebook_size = 32;
  c.vae.speaker_dim = 16;
  c.vae.dec_channels = 64;
  c.vae.disc_channels = 32;
  c.vae.lr = 1e-3;
  c.vae.disc_lr = 1e-3;
  c.vae.adv_start = 1000;
  c.vae.batch_size = 4;
  c.vae.segment_frames = 32;
  c.apply_seed(1);
  return c;
}

}  // namespace dvc
