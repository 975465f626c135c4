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

#include "dvc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dvc/error.hpp"
#include "dvc/rng.hpp"
#include "dvc/types.hpp"
#include "dvc/wav.hpp"

namespace fs = std::filesystem;

namespace dvc {

const char* to_string(Group g) { return g == Group::normal ? "normal" : "dysarthric"; }
const char* to_string(Gender g) { return g == Gender::m ? "m" : "f"; }
const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }
const char* to_string(IntelligibilityBand b) {
  switch (b) {
    case IntelligibilityBand::high: return "high";
    case IntelligibilityBand::mid: return "mid";
    case IntelligibilityBand::low: return "low";
    case IntelligibilityBand::none: return "none";
  }
  return "none";
}

Group parse_group(const std::string& s) {
  if (s == "normal") return Group::normal;
  if (s == "dysarthric") return Group::dysarthric;
  throw FormatError("unknown speaker group '" + s + "'");
}

Gender parse_gender(const std::string& s) {
  if (s == "m" || s == "M") return Gender::m;
  if (s == "f" || s == "F") return Gender::f;
  throw FormatError("unknown gender '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

IntelligibilityBand parse_band(const std::string& s) {
  if (s == "high") return IntelligibilityBand::high;
  if (s == "mid") return IntelligibilityBand::mid;
  if (s == "low") return IntelligibilityBand::low;
  if (s == "none" || s == "-") return IntelligibilityBand::none;
  throw FormatError("unknown intelligibility band '" + s + "'");
}

// ---------------------------------------------------------------------------
// CorpusIndex

CorpusIndex CorpusIndex::build(std::vector<SpeakerProfile> speakers,
                               std::vector<Utterance> utterances,
                               std::map<std::string, std::vector<std::string>> lexicon) {
  CorpusIndex idx;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    const SpeakerProfile& s = speakers[i];
    if (s.speaker_id.empty()) throw ValidationError("speaker with empty id");
    if (!idx.speaker_pos_.emplace(s.speaker_id, i).second)
      throw ValidationError("duplicate speaker " + s.speaker_id);
    if (s.group == Group::dysarthric && !s.ster)
      throw ValidationError("dysarthric speaker " + s.speaker_id + " has no STER");
    if (s.group == Group::normal && s.ster)
      throw ValidationError("normal speaker " + s.speaker_id + " must not carry STER");
    if (s.ster && (*s.ster < 0.0 || *s.ster > 100.0))
      throw ValidationError("STER out of [0,100] for " + s.speaker_id);
    if (s.synth && !(s.synth->stretch > 0.0))
      throw ValidationError("non-positive stretch for " + s.speaker_id);
  }
  std::set<std::string> inventory;
  for (const auto& [word, phones] : lexicon) {
    if (phones.empty()) throw ValidationError("lexicon entry " + word + " has no phonemes");
    inventory.insert(phones.begin(), phones.end());
  }

  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    if (!idx.speaker_pos_.contains(u.speaker_id))
      throw ValidationError("utterance " + u.utt_id + " has unknown speaker " + u.speaker_id);
    const auto lex = lexicon.find(u.word_id);
    if (lex == lexicon.end())
      throw ValidationError("utterance " + u.utt_id + ": word " + u.word_id +
                            " is not in the lexicon");
    if (!u.samples || u.samples->empty())
      throw ValidationError("utterance " + u.utt_id + " has no samples");
    if (u.sample_rate <= 0) throw ValidationError("utterance " + u.utt_id + " has no sample rate");
    const double dur = u.duration_seconds();
    if (dur < 0.05 || dur > 30.0)
      throw ValidationError("utterance " + u.utt_id + " duration " + std::to_string(dur) +
                            " s outside [0.05, 30]");
    if (u.phonemes.empty()) throw ValidationError("utterance " + u.utt_id + " has no phonemes");
    for (const auto& p : u.phonemes)
      if (!inventory.contains(p))
        throw ValidationError("utterance " + u.utt_id + " uses unknown phoneme " + p);
    if (!idx.utt_pos_.emplace(u.utt_id, i).second)
      throw ValidationError("duplicate utterance " + u.utt_id);
    idx.parallel_index_[{u.word_id, u.split}].insert(u.utt_id);
  }
  idx.speakers_ = std::move(speakers);
  idx.utterances_ = std::move(utterances);
  idx.lexicon_ = std::move(lexicon);
  return idx;
}

const SpeakerProfile& CorpusIndex::speaker(const std::string& id) const {
  const auto it = speaker_pos_.find(id);
  if (it == speaker_pos_.end()) throw PreconditionError("unknown speaker " + id);
  return speakers_[it->second];
}

bool CorpusIndex::has_speaker(const std::string& id) const { return speaker_pos_.contains(id); }

const Utterance& CorpusIndex::utterance(const std::string& utt_id) const {
  const auto it = utt_pos_.find(utt_id);
  if (it == utt_pos_.end()) throw PreconditionError("unknown utterance " + utt_id);
  return utterances_[it->second];
}

std::vector<const Utterance*> CorpusIndex::utterances_of(const std::string& speaker_id) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances_)
    if (u.speaker_id == speaker_id) out.push_back(&u);
  return out;
}

std::vector<const Utterance*> CorpusIndex::utterances_of(const std::string& speaker_id,
                                                         Split split) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances_)
    if (u.speaker_id == speaker_id && u.split == split) out.push_back(&u);
  return out;
}

std::set<std::string> CorpusIndex::phoneme_inventory() const {
  std::set<std::string> inv;
  for (const auto& [w, phones] : lexicon_) inv.insert(phones.begin(), phones.end());
  return inv;
}

// ---------------------------------------------------------------------------
// Loading and saving

namespace {

std::vector<std::string> split_ws(const std::string& line, char sep) {
  std::vector<std::string> out;
  if (sep == '\t') {
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, '\t')) out.push_back(field);
  } else {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::optional<double> parse_optional(const std::string& field, const fs::path& file, int line) {
  if (field == "-" || field.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw FormatError(file.string() + ":" + std::to_string(line) + ": bad number '" + field + "'");
  }
}

std::vector<SpeakerProfile> read_speakers(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("missing metadata file " + file.string());
  std::vector<SpeakerProfile> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_ws(line, '\t');
    if (f.size() != 6 && f.size() != 7)
      throw FormatError(file.string() + ":" + std::to_string(n) + ": expected 6 or 7 fields");
    SpeakerProfile s;
    s.speaker_id = f[0];
    s.group = parse_group(f[1]);
    s.gender = parse_gender(f[2]);
    s.ster = parse_optional(f[3], file, n);
    const auto stretch = parse_optional(f[4], file, n);
    const auto tilt = parse_optional(f[5], file, n);
    if (stretch.has_value() != tilt.has_value())
      throw FormatError(file.string() + ":" + std::to_string(n) +
                        ": stretch and tilt must both be present or both '-'");
    if (stretch) s.synth = SynthParams{*stretch, *tilt};
    if (f.size() == 7) s.band = parse_band(f[6]);
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, std::vector<std::string>> read_lexicon(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("missing metadata file " + file.string());
  std::map<std::string, std::vector<std::string>> lex;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = strip_cr(line);
    auto f = split_ws(line, ' ');
    if (f.empty()) continue;
    if (f.size() < 2)
      throw FormatError(file.string() + ":" + std::to_string(n) + ": word without phonemes");
    std::string word = f.front();
    f.erase(f.begin());
    if (!lex.emplace(word, std::move(f)).second)
      throw FormatError(file.string() + ":" + std::to_string(n) + ": duplicate word " + word);
  }
  return lex;
}

std::map<std::string, Split> read_splits(const fs::path& file) {
  std::map<std::string, Split> out;
  std::ifstream in(file);
  if (!in) return out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_ws(line, '\t');
    if (f.size() != 2)
      throw FormatError(file.string() + ":" + std::to_string(n) + ": expected 2 fields");
    out[f[0]] = parse_split(f[1]);
  }
  return out;
}

std::string fmt_num(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

CorpusIndex load_corpus(const fs::path& root) {
  auto speakers = read_speakers(root / "speakers.tsv");
  auto lexicon = read_lexicon(root / "lexicon.txt");
  const auto splits = read_splits(root / "splits.tsv");

  struct Entry {
    fs::path path;
    std::string speaker_id;
    std::string stem;
  };
  std::vector<Entry> entries;
  const fs::path audio = root / "audio";
  if (fs::exists(audio)) {
    for (const auto& s : speakers) {
      const fs::path dir = audio / s.speaker_id;
      if (!fs::exists(dir)) continue;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".wav") continue;
        entries.push_back({e.path(), s.speaker_id, e.path().stem().string()});
      }
    }
    for (const auto& e : fs::directory_iterator(audio)) {
      if (!e.is_directory()) continue;
      const std::string id = e.path().filename().string();
      if (std::none_of(speakers.begin(), speakers.end(),
                       [&](const SpeakerProfile& s) { return s.speaker_id == id; }))
        throw ValidationError("audio directory " + e.path().string() +
                              " has no entry in speakers.tsv");
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.path < b.path; });

  std::vector<Utterance> utts(entries.size());
  std::vector<std::string> errors(entries.size());
  const long n = static_cast<long>(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const Entry& e = entries[i];
    try {
      const std::string prefix = e.speaker_id + "_";
      if (e.stem.rfind(prefix, 0) != 0)
        throw FormatError("file " + e.path.string() + " is not named <speaker_id>_<word_id>.wav");
      WavData wav = read_wav(e.path);
      if (wav.sample_rate != kSampleRate)
        throw FormatError("file " + e.path.string() + " has sample rate " +
                          std::to_string(wav.sample_rate) + " Hz; expected " +
                          std::to_string(kSampleRate) + " Hz");
      Utterance& u = utts[i];
      u.utt_id = e.stem;
      u.speaker_id = e.speaker_id;
      u.word_id = e.stem.substr(prefix.size());
      u.sample_rate = wav.sample_rate;
      u.samples = std::make_shared<const std::vector<double>>(std::move(wav.samples));
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw FormatError(errors[i]);

  for (auto& u : utts) {
    const auto lex = lexicon.find(u.word_id);
    if (lex == lexicon.end())
      throw ValidationError("utterance " + u.utt_id + ": word " + u.word_id +
                            " is not in the lexicon");
    u.phonemes = lex->second;
    const auto sp = splits.find(u.utt_id);
    u.split = sp == splits.end() ? Split::train : sp->second;
  }
  return CorpusIndex::build(std::move(speakers), std::move(utts), std::move(lexicon));
}

void write_splits(const CorpusIndex& index, const fs::path& root) {
  std::ofstream sp(root / "splits.tsv");
  if (!sp) throw IoError("cannot write " + (root / "splits.tsv").string());
  for (const auto& u : index.utterances()) sp << u.utt_id << '\t' << to_string(u.split) << '\n';
}

void save_corpus(const CorpusIndex& index, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "audio", ec);
  if (ec) throw IoError("cannot create " + (root / "audio").string() + ": " + ec.message());
  {
    std::ofstream spk(root / "speakers.tsv");
    if (!spk) throw IoError("cannot write " + (root / "speakers.tsv").string());
    spk << "# speaker_id\tgroup\tgender\tster\tstretch\ttilt\tband\n";
    for (const auto& s : index.speakers()) {
      spk << s.speaker_id << '\t' << to_string(s.group) << '\t' << to_string(s.gender) << '\t'
          << (s.ster ? fmt_num(*s.ster) : "-") << '\t'
          << (s.synth ? fmt_num(s.synth->stretch) : "-") << '\t'
          << (s.synth ? fmt_num(s.synth->tilt_db_per_octave) : "-") << '\t' << to_string(s.band)
          << '\n';
    }
  }
  {
    std::ofstream lex(root / "lexicon.txt");
    if (!lex) throw IoError("cannot write " + (root / "lexicon.txt").string());
    for (const auto& [w, phones] : index.lexicon()) {
      lex << w;
      for (const auto& p : phones) lex << ' ' << p;
      lex << '\n';
    }
  }
  write_splits(index, root);
  for (const auto& s : index.speakers()) fs::create_directories(root / "audio" / s.speaker_id);
  const auto& utts = index.utterances();
  const long n = static_cast<long>(utts.size());
  std::vector<std::string> errors(utts.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const Utterance& u = utts[i];
    try {
      write_wav(root / "audio" / u.speaker_id / (u.utt_id + ".wav"), *u.samples, u.sample_rate);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw IoError(e);
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stable pseudo-random order of word ids, so test words are spread over the
// lexicon instead of being its alphabetical head.
bool word_order(const std::string& a, const std::string& b) {
  const auto ha = mix64(fnv1a(a)), hb = mix64(fnv1a(b));
  return ha != hb ? ha < hb : a < b;
}

}  // namespace

CorpusIndex split_train_test(const CorpusIndex& index, int train_count, int test_count) {
  if (train_count < 0 || test_count < 0)
    throw PreconditionError("split counts must be nonnegative");
  const std::size_t need = static_cast<std::size_t>(train_count + test_count);
  std::map<std::string, std::set<std::string>> words_of;
  for (const auto& s : index.speakers()) words_of[s.speaker_id];
  for (const auto& u : index.utterances()) words_of[u.speaker_id].insert(u.word_id);
  for (const auto& s : index.speakers()) {
    const auto have = index.utterances_of(s.speaker_id).size();
    if (have < need)
      throw PreconditionError("speaker " + s.speaker_id + " has " + std::to_string(have) +
                              " utterances; split needs " + std::to_string(need));
  }

  // Words shared by every speaker that has any audio.
  std::vector<std::string> common;
  bool first = true;
  for (const auto& [spk, words] : words_of) {
    if (words.empty() && need == 0) continue;
    if (first) {
      common.assign(words.begin(), words.end());
      first = false;
    } else {
      std::vector<std::string> keep;
      std::set_intersection(common.begin(), common.end(), words.begin(), words.end(),
                            std::back_inserter(keep));
      common = std::move(keep);
    }
  }
  std::sort(common.begin(), common.end(), word_order);
  if (common.size() < static_cast<std::size_t>(test_count)) {
    // Name the speaker whose vocabulary is smallest; it limits the overlap.
    std::string worst;
    std::size_t fewest = SIZE_MAX;
    for (const auto& [spk, words] : words_of)
      if (words.size() < fewest) fewest = words.size(), worst = spk;
    throw PreconditionError("only " + std::to_string(common.size()) +
                            " words are shared by all speakers; test split needs " +
                            std::to_string(test_count) + " (smallest vocabulary: speaker " +
                            worst + ")");
  }
  const std::set<std::string> test_words(common.begin(), common.begin() + test_count);

  std::vector<Utterance> out;
  for (const auto& s : index.speakers()) {
    auto mine = index.utterances_of(s.speaker_id);
    std::sort(mine.begin(), mine.end(), [](const Utterance* a, const Utterance* b) {
      return a->word_id != b->word_id ? word_order(a->word_id, b->word_id) : a->utt_id < b->utt_id;
    });
    int n_train = 0;
    std::set<std::string> test_seen;
    for (const Utterance* u : mine) {
      Utterance copy = *u;
      if (test_words.contains(u->word_id)) {
        if (!test_seen.insert(u->word_id).second) continue;
        copy.split = Split::test;
      } else {
        if (n_train >= train_count) continue;
        copy.split = Split::train;
        ++n_train;
      }
      out.push_back(std::move(copy));
    }
    if (n_train < train_count)
      throw PreconditionError("speaker " + s.speaker_id + " has only " + std::to_string(n_train) +
                              " utterances outside the shared test words; needs " +
                              std::to_string(train_count));
  }
  return CorpusIndex::build(index.speakers(), std::move(out), index.lexicon());
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct PhonemeVoice {
  double formant[3];
  double duration;    // seconds
  double pitch_glide; // relative f0 change across the syllable
  double level;
};

constexpr double kLead = 0.05;
constexpr double kGap = 0.05;
constexpr double kTrail = 0.05;
constexpr double kTiltRefHz = 500.0;
constexpr double kUndershootPerStretch = 0.6;

PhonemeVoice phoneme_voice(std::uint64_t seed, std::size_t phone) {
  Rng rng(derive_seed({seed, 0x70686f6eULL, phone}));
  PhonemeVoice v{};
  v.formant[0] = rng.uniform(250.0, 900.0);
  v.formant[1] = rng.uniform(900.0, 2600.0);
  v.formant[2] = rng.uniform(2300.0, 3400.0);
  v.duration = rng.uniform(0.12, 0.22);
  v.pitch_glide = rng.uniform(-0.2, 0.2);
  v.level = rng.uniform(0.6, 1.0);
  return v;
}

std::size_t phone_index(const std::string& p) {
  const auto& inv = synthetic_phoneme_inventory();
  const auto it = std::find(inv.begin(), inv.end(), p);
  if (it == inv.end()) throw PreconditionError("phoneme " + p + " is not in the synthetic inventory");
  return static_cast<std::size_t>(it - inv.begin());
}

struct VoiceTraits {
  double f0;
  double formant_scale;
};

VoiceTraits voice_traits(const SpeakerProfile& s) {
  VoiceTraits t{};
  t.f0 = s.gender == Gender::m ? 120.0 : 210.0;
  t.formant_scale = s.gender == Gender::m ? 1.0 : 1.1;
  return t;
}

void render_syllable(std::vector<double>& out, std::size_t start, std::size_t len,
                     const PhonemeVoice& v, const VoiceTraits& traits, double tilt) {
  if (len == 0) return;
  const double nyquist_guard = 7800.0;
  const int max_harm = static_cast<int>(nyquist_guard / (traits.f0 * 0.8));
  std::vector<double> amp(static_cast<std::size_t>(max_harm) + 1, 0.0);
  static constexpr double kBandwidth[3] = {90.0, 130.0, 180.0};
  static constexpr double kGain[3] = {1.0, 0.6, 0.3};
  for (int h = 1; h <= max_harm; ++h) {
    const double f = h * traits.f0;
    double env = 0.02;
    for (int k = 0; k < 3; ++k) {
      const double d = (f - v.formant[k] * traits.formant_scale) / kBandwidth[k];
      env += kGain[k] * std::exp(-0.5 * d * d);
    }
    env *= std::pow(10.0, tilt * std::log2(f / kTiltRefHz) / 20.0);
    amp[static_cast<std::size_t>(h)] = env;
  }
  const double attack = 0.015 * kSampleRate, release = 0.025 * kSampleRate;
  const double two_pi = 2.0 * std::numbers::pi;
  double phase = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double pos = static_cast<double>(i) / static_cast<double>(len);
    const double f0 = traits.f0 * (1.0 + v.pitch_glide * (pos - 0.5));
    phase += two_pi * f0 / kSampleRate;
    if (phase > two_pi * 1e6) phase = std::fmod(phase, two_pi);
    double s = 0.0;
    for (int h = 1; h <= max_harm; ++h) {
      if (h * f0 >= nyquist_guard) break;
      s += amp[static_cast<std::size_t>(h)] * std::sin(h * phase);
    }
    double env = 1.0;
    const double di = static_cast<double>(i), dr = static_cast<double>(len - 1 - i);
    if (di < attack) env = 0.5 - 0.5 * std::cos(std::numbers::pi * di / attack);
    if (dr < release) env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * dr / release));
    out[start + i] += v.level * env * s;
  }
}

std::size_t to_samples(double seconds) {
  return static_cast<std::size_t>(std::lround(seconds * kSampleRate));
}

}  // namespace

const std::vector<std::string>& synthetic_phoneme_inventory() {
  static const std::vector<std::string> inv = {"aa", "ae", "ah", "ao", "aw", "ay", "eh",
                                               "er", "ey", "ih", "iy", "ow", "oy", "uh",
                                               "uw", "b",  "d",  "g",  "m",  "n"};
  return inv;
}

double synthetic_template_duration(std::uint64_t seed, const std::vector<std::string>& phonemes) {
  double d = kLead + kTrail + kGap * static_cast<double>(phonemes.size() - 1);
  for (const auto& p : phonemes) d += phoneme_voice(seed, phone_index(p)).duration;
  return d;
}

SynthParams synthetic_normal_params(int i, int n_normal) {
  SynthParams p;
  p.stretch = 1.0;
  p.tilt_db_per_octave = n_normal > 1 ? -6.0 + 12.0 * i / (n_normal - 1) : 0.0;
  return p;
}

SynthParams synthetic_dysarthric_params(int j, const SyntheticCorpusOptions& opt) {
  SynthParams p;
  p.stretch = static_cast<std::size_t>(j) < opt.dysarthric_stretches.size()
                  ? opt.dysarthric_stretches[static_cast<std::size_t>(j)]
                  : 1.25 + 0.25 * j;
  p.tilt_db_per_octave = -3.0;
  return p;
}

double pseudo_ster(const SynthParams& p) {
  return std::min(100.0, 60.0 * (p.stretch - 1.0) + 20.0 * std::abs(p.tilt_db_per_octave) / 6.0);
}

std::vector<double> render_synthetic_word(std::uint64_t seed, const SpeakerProfile& speaker,
                                          const std::vector<std::string>& phonemes,
                                          std::uint64_t utterance_salt) {
  if (!speaker.synth) throw PreconditionError("speaker " + speaker.speaker_id + " is not synthetic");
  if (phonemes.empty()) throw PreconditionError("word has no phonemes");
  const SynthParams sp = *speaker.synth;
  const VoiceTraits traits = voice_traits(speaker);
  const double template_dur = synthetic_template_duration(seed, phonemes);

  // Dysarthric speakers spend 40% of the extra duration on inserted pauses
  // at syllable boundaries; total duration stays stretch * template.
  const bool pauses = speaker.group == Group::dysarthric && phonemes.size() > 1;
  const double extra = (sp.stretch - 1.0) * template_dur;
  const double pause_total = pauses ? 0.4 * extra : 0.0;
  const double uniform = pauses ? 1.0 + 0.6 * (sp.stretch - 1.0) : sp.stretch;
  const double pause_each = pauses ? pause_total / static_cast<double>(phonemes.size() - 1) : 0.0;

  std::vector<std::pair<std::size_t, std::size_t>> spans;
  double t = kLead * uniform;
  for (std::size_t k = 0; k < phonemes.size(); ++k) {
    const PhonemeVoice v = phoneme_voice(seed, phone_index(phonemes[k]));
    const double dur = v.duration * uniform;
    spans.emplace_back(to_samples(t), to_samples(t + dur) - to_samples(t));
    t += dur;
    if (k + 1 < phonemes.size()) t += kGap * uniform + pause_each;
  }
  t += kTrail * uniform;
  std::vector<double> out(to_samples(t), 0.0);
  // Articulatory undershoot: dysarthric formants drift toward a neutral vowel
  // in proportion to severity.
  static constexpr double kNeutral[3] = {500.0, 1500.0, 2500.0};
  const double undershoot =
      speaker.group == Group::dysarthric ? std::clamp(kUndershootPerStretch * (sp.stretch - 1.0), 0.0, 0.9) : 0.0;
  for (std::size_t k = 0; k < phonemes.size(); ++k) {
    PhonemeVoice v = phoneme_voice(seed, phone_index(phonemes[k]));
    for (int f = 0; f < 3; ++f) v.formant[f] += undershoot * (kNeutral[f] - v.formant[f]);
    render_syllable(out, spans[k].first, spans[k].second, v, traits, sp.tilt_db_per_octave);
  }
  double peak = 0.0;
  for (double s : out) peak = std::max(peak, std::abs(s));
  Rng noise(derive_seed({seed, 0x6e6f6973ULL, utterance_salt}));
  for (double& s : out) {
    if (peak > 0) s *= 0.5 / peak;
    s += 1e-4 * noise.normal();
    // Store exactly what a 16-bit file round trip yields.
    s = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0) / 32768.0;
  }
  return out;
}

CorpusIndex generate_synthetic_corpus(const SyntheticCorpusOptions& opt, const fs::path& out) {
  if (opt.n_normal < 1 || opt.n_dysarthric < 1 || opt.words_per_speaker < 1)
    throw PreconditionError("synthetic corpus counts must be >= 1");
  const auto& inv = synthetic_phoneme_inventory();

  std::map<std::string, std::vector<std::string>> lexicon;
  Rng lex_rng(derive_seed({opt.seed, 0x6c6578ULL}));
  std::set<std::vector<std::string>> used;
  for (int w = 0; w < opt.words_per_speaker; ++w) {
    std::vector<std::string> phones;
    do {
      phones.clear();
      const int n = 2 + static_cast<int>(lex_rng.below(3));
      for (int k = 0; k < n; ++k) phones.push_back(inv[lex_rng.below(inv.size())]);
    } while (!used.insert(phones).second);
    char id[16];
    std::snprintf(id, sizeof id, "W%03d", w + 1);
    lexicon[id] = phones;
  }

  std::vector<SpeakerProfile> speakers;
  for (int i = 0; i < opt.n_normal; ++i) {
    SpeakerProfile s;
    s.gender = i % 2 == 0 ? Gender::m : Gender::f;
    char id[16];
    std::snprintf(id, sizeof id, "C%s%02d", s.gender == Gender::m ? "M" : "F", i + 1);
    s.speaker_id = id;
    s.group = Group::normal;
    s.synth = synthetic_normal_params(i, opt.n_normal);
    speakers.push_back(s);
  }
  for (int j = 0; j < opt.n_dysarthric; ++j) {
    SpeakerProfile s;
    char id[16];
    std::snprintf(id, sizeof id, "M%02d", j + 1);
    s.speaker_id = id;
    s.group = Group::dysarthric;
    s.gender = Gender::m;
    s.synth = synthetic_dysarthric_params(j, opt);
    s.ster = pseudo_ster(*s.synth);
    speakers.push_back(s);
  }

  struct Job {
    std::size_t speaker;
    std::string word;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < speakers.size(); ++s)
    for (const auto& [w, p] : lexicon) jobs.push_back({s, w});
  std::vector<Utterance> utts(jobs.size());
  const long n = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const Job& job = jobs[i];
    const SpeakerProfile& s = speakers[job.speaker];
    Utterance& u = utts[i];
    u.speaker_id = s.speaker_id;
    u.word_id = job.word;
    u.utt_id = s.speaker_id + "_" + job.word;
    u.sample_rate = kSampleRate;
    u.phonemes = lexicon.at(job.word);
    u.samples = std::make_shared<const std::vector<double>>(
        render_synthetic_word(opt.seed, s, u.phonemes, static_cast<std::uint64_t>(i)));
  }
  auto full = CorpusIndex::build(speakers, std::move(utts), lexicon);
  const int test = opt.words_per_speaker / 3;
  auto split = split_train_test(full, opt.words_per_speaker - test, test);
  if (!out.empty()) save_corpus(split, out);
  return split;
}

// ---------------------------------------------------------------------------

std::vector<UtterancePair> parallel_pairs(const CorpusIndex& index,
                                          const std::set<std::string>& sources,
                                          const std::string& target, Split split) {
  if (!index.has_speaker(target)) throw PreconditionError("unknown target speaker " + target);
  if (sources.empty()) throw PreconditionError("parallel_pairs needs at least one source speaker");
  if (sources.contains(target))
    throw PreconditionError("target speaker " + target + " is also listed as a source");
  for (const auto& s : sources)
    if (!index.has_speaker(s)) throw PreconditionError("unknown source speaker " + s);

  std::map<std::string, std::vector<const Utterance*>> target_by_word;
  for (const Utterance* u : index.utterances_of(target, split))
    target_by_word[u->word_id].push_back(u);

  std::vector<std::tuple<std::string, std::string, const Utterance*, const Utterance*>> rows;
  for (const auto& src : sources) {
    for (const Utterance* u : index.utterances_of(src, split)) {
      const auto it = target_by_word.find(u->word_id);
      if (it == target_by_word.end()) continue;
      for (const Utterance* t : it->second) rows.emplace_back(u->word_id, src, u, t);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a)->utt_id < std::get<2>(b)->utt_id;
  });
  std::vector<UtterancePair> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({*std::get<2>(r), *std::get<3>(r)});
  if (out.empty())
    warn("parallel_pairs: no word ids shared between target " + target + " and the sources in " +
         std::string(to_string(split)) + " split");
  return out;
}

}  // namespace dvc
