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


#include "dvc/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "dvc/checkpoint.hpp"
#include "dvc/wav.hpp"

namespace dvc {

namespace fs = std::filesystem;

namespace {

std::mutex g_progress_mutex;
ProgressSink g_progress = [](std::string_view msg) { std::cerr << msg << '\n'; };

void progress(const std::string& msg) {
  std::lock_guard lock(g_progress_mutex);
  if (g_progress) g_progress(msg);
}

std::function<void(long, double)> step_logger(const std::string& label, long total) {
  const long every = std::max(1L, total / 10);
  return [label, total, every](long step, double loss) {
    if (step % every == 0 || step == total) {
      std::ostringstream out;
      out << label << " step " << step << "/" << total << " loss " << loss;
      progress(out.str());
    }
  };
}

TrainOptions train_options(const PipelineConfig& cfg, long steps, const fs::path& out,
                           const std::string& label) {
  TrainOptions opt;
  opt.steps = steps;
  opt.save_interval = cfg.pipeline.save_interval;
  opt.out = out;
  opt.on_step = step_logger(label, steps);
  return opt;
}

Checkpoint require_checkpoint(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw PreconditionError("missing checkpoint " + path.string() + " (run " + producer + " first)");
  return load_checkpoint(path);
}

std::vector<std::string> resolve_group(const CorpusIndex& index,
                                       const std::vector<std::string>& requested, Group group,
                                       const char* role) {
  std::vector<std::string> out;
  if (requested.empty()) {
    for (const auto& s : index.speakers())
      if (s.group == group) out.push_back(s.speaker_id);
  } else {
    for (const auto& id : requested) {
      if (!index.has_speaker(id))
        throw ValidationError(std::string(role) + " speaker '" + id + "' is not in the corpus");
      if (index.speaker(id).group != group)
        throw ValidationError(std::string(role) + " speaker '" + id + "' must be " +
                              to_string(group));
      out.push_back(id);
    }
  }
  if (out.empty()) throw ValidationError(std::string("no ") + role + " speakers");
  std::set<std::string> seen;
  for (const auto& id : out)
    if (!seen.insert(id).second)
      throw ValidationError(std::string(role) + " speaker '" + id + "' listed twice");
  return out;
}

}  // namespace

ProgressSink set_progress_sink(ProgressSink sink) {
  std::lock_guard lock(g_progress_mutex);
  return std::exchange(g_progress, std::move(sink));
}

fs::path RunLayout::corpus_root(const PipelineConfig& cfg) const {
  return cfg.corpus.root.empty() ? out / "corpus" : cfg.corpus.root;
}

PreparedCorpus prepare(const PipelineConfig& cfg) {
  const RunLayout layout{cfg.pipeline.out};
  const fs::path root = layout.corpus_root(cfg);
  std::optional<CorpusIndex> index;
  if (fs::exists(root / "speakers.tsv")) {
    index = load_corpus(root);
  } else if (cfg.corpus.synthetic) {
    SyntheticCorpusOptions opt;
    opt.seed = cfg.corpus.seed;
    opt.n_normal = cfg.corpus.n_normal;
    opt.n_dysarthric = cfg.corpus.n_dysarthric;
    opt.words_per_speaker = cfg.corpus.words;
    opt.dysarthric_stretches = cfg.corpus.stretches;
    progress("generating synthetic corpus in " + root.string());
    generate_synthetic_corpus(opt, root);
    // Reload so a fresh run sees the same quantized audio as a rerun.
    index = load_corpus(root);
  } else {
    throw IoError("no corpus at " + root.string() + " (speakers.tsv missing)");
  }
  if (cfg.corpus.train_count > 0 || cfg.corpus.test_count > 0)
    index = split_train_test(*index, cfg.corpus.train_count, cfg.corpus.test_count);

  PreparedCorpus data{std::move(*index), {}, {}, {}};
  data.targets = resolve_group(data.index, cfg.pipeline.targets, Group::dysarthric, "target");
  data.sources = resolve_group(data.index, cfg.pipeline.sources, Group::normal, "source");
  data.pretrain_speaker = cfg.pipeline.pretrain_speaker.empty() ? data.sources.front()
                                                                : cfg.pipeline.pretrain_speaker;
  if (!data.index.has_speaker(data.pretrain_speaker))
    throw ValidationError("pretrain speaker '" + data.pretrain_speaker + "' is not in the corpus");
  return data;
}

void run_pretrain(const PipelineConfig& cfg, const PreparedCorpus& data) {
  const RunLayout layout{cfg.pipeline.out};
  fs::create_directories(layout.pretrain_checkpoint().parent_path());
  s2s_pretrain(data.index, data.pretrain_speaker, cfg.s2s,
               train_options(cfg, cfg.pipeline.pretrain_steps, layout.pretrain_checkpoint(),
                             "pretrain"));
}

void run_train_s2s(const PipelineConfig& cfg, const PreparedCorpus& data) {
  const RunLayout layout{cfg.pipeline.out};
  const Checkpoint pretrained = require_checkpoint(layout.pretrain_checkpoint(), "pretrain");
  require_same_config(cfg.s2s.to_kv(), pretrained.config);
  const std::set<std::string> sources(data.sources.begin(), data.sources.end());
  for (const auto& target : data.targets) {
    const auto pairs = parallel_pairs(data.index, sources, target, Split::train);
    s2s_finetune(pretrained, data.index, pairs,
                 train_options(cfg, cfg.pipeline.finetune_steps, layout.s2s_checkpoint(target),
                               "train-s2s " + target));
  }
}

void run_train_vae(const PipelineConfig& cfg, const PreparedCorpus& data) {
  const RunLayout layout{cfg.pipeline.out};
  fs::create_directories(layout.vae_checkpoint().parent_path());
  vae_train(data.index, data.sources, cfg.vae,
            train_options(cfg, cfg.pipeline.vae_steps, layout.vae_checkpoint(), "train-vae"));
}

const char* to_string(Stage s) { return s == Stage::vtn ? "vtn" : "vtn_vae"; }

Stage parse_stage(const std::string& s) {
  if (s == "vtn") return Stage::vtn;
  if (s == "vtn_vae") return Stage::vtn_vae;
  throw ValidationError("unknown stage '" + s + "' (expected vtn or vtn_vae)");
}

ConversionModels ConversionModels::load(const RunLayout& layout,
                                        const std::vector<std::string>& targets, Stage stage) {
  ConversionModels m;
  for (const auto& target : targets) {
    auto state = S2SState::from_checkpoint(
        require_checkpoint(layout.s2s_checkpoint(target), "train-s2s"));
    if (state.target != target)
      throw FormatError(layout.s2s_checkpoint(target).string() + " converts to '" + state.target +
                        "', not '" + target + "'");
    m.s2s.emplace(target, std::move(state));
  }
  if (stage == Stage::vtn_vae)
    m.vae.emplace(VAEState::from_checkpoint(require_checkpoint(layout.vae_checkpoint(), "train-vae")));
  return m;
}

ConversionResult convert_utterance(const S2SState& s2s, const VAEState* vae,
                                   const Utterance& source, int vocoder_iterations) {
  ConversionResult r;
  r.utt_id = s2s.target + "/" + source.utt_id;
  r.source_utt = source.utt_id;
  r.source_speaker = source.speaker_id;
  r.target_speaker = s2s.target;
  r.word_id = source.word_id;
  r.stage = vae ? Stage::vtn_vae : Stage::vtn;
  if (vae) vae->model.speaker_index(source.speaker_id);  // throws for speakers it never saw

  const MelSpectrogram input = make_mel(utterance_mel(source));
  const MelSpectrogram normalized = normalize(input, s2s.stats_for(source.speaker_id));
  const S2SConversion conv = s2s_convert(s2s.model, normalized.frames);
  r.truncated = conv.truncated;
  r.length_ratio = static_cast<double>(conv.mel.rows()) / static_cast<double>(input.num_frames());
  const MelSpectrogram stage1 = make_mel(conv.mel);
  r.vtn_mel = denormalize(stage1, s2s.stats_for(s2s.target));
  if (vae) {
    const Matrix restored = vae_convert(vae->model, stage1.frames, source.speaker_id);
    r.vae_mel = denormalize(make_mel(restored), vae->stats_for(source.speaker_id));
  }
  if (vocoder_iterations > 0) r.waveform = griffin_lim(r.mel(), vocoder_iterations);
  return r;
}

namespace {

fs::path mel_path(const RunLayout& layout, const std::string& target, const std::string& utt,
                  const char* tag, const char* ext) {
  return layout.converted_dir() / target / (utt + "." + tag + "." + ext);
}

}  // namespace

std::vector<ConversionResult> run_convert(const PipelineConfig& cfg, const PreparedCorpus& data,
                                          Stage stage) {
  const RunLayout layout{cfg.pipeline.out};
  const ConversionModels models = ConversionModels::load(layout, data.targets, stage);
  if (models.vae)
    for (const auto& s : data.sources)
      if (std::find(models.vae->model.speakers().begin(), models.vae->model.speakers().end(), s) ==
          models.vae->model.speakers().end())
        throw PreconditionError("source speaker '" + s +
                                "' is not in the VAE training set; its identity cannot be restored");

  struct Task {
    const S2SState* s2s;
    const Utterance* source;
  };
  std::vector<Task> tasks;
  for (const auto& target : data.targets)
    for (const auto& source : data.sources)
      for (const Utterance* u : data.index.utterances_of(source, Split::test))
        tasks.push_back({&models.s2s.at(target), u});
  if (tasks.empty()) throw ValidationError("no test-split utterances to convert");

  const int iterations = cfg.pipeline.write_wavs ? cfg.pipeline.vocoder_iterations : 0;
  const VAEState* vae = models.vae ? &*models.vae : nullptr;
  std::vector<ConversionResult> results(tasks.size());
  std::vector<std::string> errors(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(tasks.size()); ++i) {
    try {
      results[i] = convert_utterance(*tasks[i].s2s, vae, *tasks[i].source, iterations);
    } catch (const std::exception& e) {
      errors[i] = tasks[i].source->utt_id + ": " + e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(e);

  fs::create_directories(layout.converted_dir());
  std::ofstream index(layout.converted_dir() / "index.tsv");
  if (!index) throw IoError("cannot write " + (layout.converted_dir() / "index.tsv").string());
  index << "# utt_id\tsource_utt\tsource\ttarget\tword\tstage\tlength_ratio\ttruncated\n";
  long truncated = 0;
  for (const auto& r : results) {
    fs::create_directories(layout.converted_dir() / r.target_speaker);
    save_mel(mel_path(layout, r.target_speaker, r.source_utt, "vtn", "mel"), r.vtn_mel);
    if (r.stage == Stage::vtn_vae)
      save_mel(mel_path(layout, r.target_speaker, r.source_utt, "vtn_vae", "mel"), r.vae_mel);
    if (!r.waveform.empty())
      write_wav(mel_path(layout, r.target_speaker, r.source_utt, to_string(r.stage), "wav"),
                r.waveform, kSampleRate);
    index << r.utt_id << '\t' << r.source_utt << '\t' << r.source_speaker << '\t'
          << r.target_speaker << '\t' << r.word_id << '\t' << to_string(r.stage) << '\t'
          << format_double(r.length_ratio) << '\t' << (r.truncated ? 1 : 0) << '\n';
    truncated += r.truncated;
  }
  if (!index) throw IoError("failed writing " + (layout.converted_dir() / "index.tsv").string());
  progress("convert: " + std::to_string(results.size()) + " utterances (" + to_string(stage) +
           "), " + std::to_string(truncated) + " truncated");
  return results;
}

std::vector<ConversionResult> load_conversions(const RunLayout& layout) {
  const fs::path path = layout.converted_dir() / "index.tsv";
  std::ifstream in(path);
  if (!in) throw PreconditionError("missing " + path.string() + " (run convert first)");
  std::vector<ConversionResult> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ConversionResult r;
    std::string stage;
    int truncated = 0;
    if (!(fields >> r.utt_id >> r.source_utt >> r.source_speaker >> r.target_speaker >>
          r.word_id >> stage >> r.length_ratio >> truncated))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed line");
    r.stage = parse_stage(stage);
    r.truncated = truncated != 0;
    r.vtn_mel = load_mel(mel_path(layout, r.target_speaker, r.source_utt, "vtn", "mel"));
    if (r.stage == Stage::vtn_vae)
      r.vae_mel = load_mel(mel_path(layout, r.target_speaker, r.source_utt, "vtn_vae", "mel"));
    out.push_back(std::move(r));
  }
  return out;
}

EvalReport run_evaluate(const PipelineConfig& cfg, const PreparedCorpus& data,
                        const std::vector<ConversionResult>& conversions) {
  const RunLayout layout{cfg.pipeline.out};
  if (conversions.empty()) throw PreconditionError("no converted utterances to evaluate");
  std::vector<ScoredUtterance> utts;
  for (const auto& c : conversions) {
    utts.push_back({"VTN/" + c.utt_id, "VTN", c.target_speaker, c.word_id,
                    data.index.speaker(c.target_speaker).gender, c.vtn_mel});
    if (c.stage == Stage::vtn_vae)
      utts.push_back({"VTN-VAE/" + c.utt_id, "VTN-VAE", c.target_speaker, c.word_id,
                      data.index.speaker(c.source_speaker).gender, c.vae_mel});
  }
  std::vector<const Utterance*> gt;
  for (const auto& target : data.targets)
    for (const Utterance* u : data.index.utterances_of(target, Split::test)) gt.push_back(u);
  const std::size_t first_gt = utts.size();
  for (const Utterance* u : gt)
    utts.push_back({u->utt_id, "GT", u->speaker_id, u->word_id,
                    data.index.speaker(u->speaker_id).gender, {}});
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(gt.size()); ++i)
    utts[first_gt + i].mel = make_mel(utterance_mel(*gt[i]));

  Transcripts hypotheses;
  if (!cfg.pipeline.hypotheses.empty()) {
    hypotheses = read_transcripts(cfg.pipeline.hypotheses);
  } else {
    const TemplateRecognizer recognizer = TemplateRecognizer::from_corpus(data.index);
    std::vector<std::vector<std::string>> hyp(utts.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(utts.size()); ++i) hyp[i] = recognizer.recognize(utts[i].mel);
    for (std::size_t i = 0; i < utts.size(); ++i) hypotheses[utts[i].utt_id] = hyp[i];
    fs::create_directories(layout.out);
    write_transcripts(layout.hypotheses(), hypotheses);
  }

  std::map<std::string, double> ster;
  if (!cfg.pipeline.ster.empty()) {
    ster = read_ster_table(cfg.pipeline.ster);
  } else {
    for (const auto& s : data.index.speakers())
      if (s.ster) ster[s.speaker_id] = *s.ster;
  }

  EvalReport report = evaluate_system(utts, data.index, hypotheses, ster);
  fs::create_directories(layout.out);
  write_report(report, layout.out);
  return report;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

EvalReport run_experiment(const PipelineConfig& cfg) {
  const RunLayout layout{cfg.pipeline.out};
  fs::create_directories(layout.out);
  const PreparedCorpus data = run_stage("prepare", [&] { return prepare(cfg); });
  run_stage("pretrain", [&] { run_pretrain(cfg, data); });
  run_stage("train-s2s", [&] { run_train_s2s(cfg, data); });
  run_stage("train-vae", [&] { run_train_vae(cfg, data); });
  const auto conversions =
      run_stage("convert", [&] { return run_convert(cfg, data, Stage::vtn_vae); });
  EvalReport report =
      run_stage("evaluate", [&] { return run_evaluate(cfg, data, conversions); });

  run_stage("manifest", [&] {
    std::ofstream out(layout.manifest());
    out << "config_hash " << cfg.hash() << '\n'
        << "seed " << cfg.pipeline.seed << '\n'
        << "s2s_seed " << cfg.s2s.seed << '\n'
        << "vae_seed " << cfg.vae.seed << '\n'
        << "corpus " << layout.corpus_root(cfg).string() << '\n'
        << "checkpoint pretrain " << layout.pretrain_checkpoint().string() << '\n';
    for (const auto& t : data.targets)
      out << "checkpoint s2s_" << t << ' ' << layout.s2s_checkpoint(t).string() << '\n';
    out << "checkpoint vae " << layout.vae_checkpoint().string() << '\n'
        << "report " << (layout.out / "report.tsv").string() << ' '
        << file_hash(layout.out / "report.tsv") << '\n';
    std::istringstream lines(cfg.canonical_text());
    for (std::string line; std::getline(lines, line);) out << "config " << line << '\n';
    if (!out) throw IoError("cannot write " + layout.manifest().string());
  });
  return report;
}

}  // namespace dvc
