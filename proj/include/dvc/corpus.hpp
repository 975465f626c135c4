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

// Corpus data model. On-disk layout (UTF-8, LF):
//
//   root/speakers.tsv   speaker_id group gender ster stretch tilt [band]
//                       ("-" for absent values, '#' starts a comment line)
//   root/lexicon.txt    WORD_ID phoneme phoneme ...
//   root/splits.tsv     utt_id train|test     (optional; absent = all train)
//   root/audio/<speaker_id>/<speaker_id>_<word_id>.wav   16-bit PCM mono 16 kHz

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace dvc {

enum class Group { normal, dysarthric };
enum class IntelligibilityBand { high, mid, low, none };
enum class Gender { m, f };
enum class Split { train, test };

const char* to_string(Group g);
const char* to_string(Gender g);
const char* to_string(Split s);
const char* to_string(IntelligibilityBand b);
Group parse_group(const std::string& s);
Gender parse_gender(const std::string& s);
Split parse_split(const std::string& s);
IntelligibilityBand parse_band(const std::string& s);

struct SynthParams {
  double stretch = 1.0;
  double tilt_db_per_octave = 0.0;
};

struct SpeakerProfile {
  std::string speaker_id;
  Group group = Group::normal;
  IntelligibilityBand band = IntelligibilityBand::none;
  std::optional<double> ster;  // percent; dysarthric speakers only
  Gender gender = Gender::m;
  std::optional<SynthParams> synth;  // synthetic speakers only
};

struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  std::string word_id;
  std::shared_ptr<const std::vector<double>> samples;
  int sample_rate = 0;
  std::vector<std::string> phonemes;
  Split split = Split::train;

  double duration_seconds() const {
    return samples ? static_cast<double>(samples->size()) / sample_rate : 0.0;
  }
};

/// Immutable, validated view of one corpus. Build through `CorpusIndex::build`
/// (or the loaders below); every invariant is checked there.
class CorpusIndex {
 public:
  static CorpusIndex build(std::vector<SpeakerProfile> speakers,
                           std::vector<Utterance> utterances,
                           std::map<std::string, std::vector<std::string>> lexicon);

  const std::vector<SpeakerProfile>& speakers() const { return speakers_; }
  const std::vector<Utterance>& utterances() const { return utterances_; }
  const std::map<std::string, std::vector<std::string>>& lexicon() const { return lexicon_; }
  const std::map<std::pair<std::string, Split>, std::set<std::string>>& parallel_index() const {
    return parallel_index_;
  }

  const SpeakerProfile& speaker(const std::string& id) const;
  bool has_speaker(const std::string& id) const;
  const Utterance& utterance(const std::string& utt_id) const;
  std::vector<const Utterance*> utterances_of(const std::string& speaker_id) const;
  std::vector<const Utterance*> utterances_of(const std::string& speaker_id, Split split) const;
  /// Symbols used anywhere in the lexicon.
  std::set<std::string> phoneme_inventory() const;

 private:
  std::vector<SpeakerProfile> speakers_;
  std::vector<Utterance> utterances_;
  std::map<std::string, std::vector<std::string>> lexicon_;
  std::map<std::pair<std::string, Split>, std::set<std::string>> parallel_index_;
  std::map<std::string, std::size_t> speaker_pos_;
  std::map<std::string, std::size_t> utt_pos_;
};

CorpusIndex load_corpus(const std::filesystem::path& root);

/// Writes speakers.tsv, lexicon.txt, splits.tsv and the audio tree.
void save_corpus(const CorpusIndex& index, const std::filesystem::path& root);
void write_splits(const CorpusIndex& index, const std::filesystem::path& root);

/// Deterministic per-speaker split. Test words are shared by every speaker;
/// utterances beyond train_count + test_count are dropped from the result.
CorpusIndex split_train_test(const CorpusIndex& index, int train_count, int test_count);

struct SyntheticCorpusOptions {
  std::uint64_t seed = 7;
  int n_normal = 4;
  int n_dysarthric = 3;
  int words_per_speaker = 30;
  // Overrides for the default stretch ladder (1.25, 1.5, ...); empty = default.
  std::vector<double> dysarthric_stretches;
};

/// Stretch and tilt assignments used by the generator.
SynthParams synthetic_normal_params(int i, int n_normal);
SynthParams synthetic_dysarthric_params(int j, const SyntheticCorpusOptions& opt);
double pseudo_ster(const SynthParams& p);

/// Renders one word for one synthetic speaker. Exposed for tests.
std::vector<double> render_synthetic_word(std::uint64_t seed, const SpeakerProfile& speaker,
                                          const std::vector<std::string>& phonemes,
                                          std::uint64_t utterance_salt);
/// Unstretched template duration of a word, in seconds.
double synthetic_template_duration(std::uint64_t seed, const std::vector<std::string>& phonemes);
const std::vector<std::string>& synthetic_phoneme_inventory();

CorpusIndex generate_synthetic_corpus(const SyntheticCorpusOptions& options,
                                      const std::filesystem::path& out);

struct UtterancePair {
  Utterance source;
  Utterance target;
};

/// One pair per (source utterance, target utterance) sharing a word id in
/// `split`, ordered by (word_id, source speaker_id).
std::vector<UtterancePair> parallel_pairs(const CorpusIndex& index,
                                          const std::set<std::string>& sources,
                                          const std::string& target, Split split);

}  // namespace dvc
