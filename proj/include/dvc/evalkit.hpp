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

// Intelligibility scoring against healthy references, phoneme error rate,
// speaker-level aggregation and severity correlation.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dvc/corpus.hpp"
#include "dvc/dsp.hpp"

namespace dvc {

struct ReferenceModel {
  Gender gender = Gender::m;
  std::string word_id;
  MelSpectrogram ref_mel;
  std::string medoid_utt;
};

/// Medoid (least summed DTW cost) of `mels`, index into the input.
std::size_t medoid_index(const std::vector<MelSpectrogram>& mels);
/// Average of all inputs aligned onto the medoid's time axis.
MelSpectrogram reference_from(const std::vector<MelSpectrogram>& mels);
/// Reference from every normal speaker of `gender` who recorded `word_id`.
ReferenceModel build_reference(const CorpusIndex& index, const std::string& word_id,
                               Gender gender);

inline constexpr int kSegmentFrames = 30;
inline constexpr int kSegmentHop = 15;
inline constexpr int kMinSegmentFrames = 10;

/// [start, end) frame ranges scored for a reference of `frames` frames.
std::vector<std::pair<long, long>> score_segments(long frames);

/// Raw scores in [-1, 1]; reports clip to [0, 1].
double p_stoi(const MelSpectrogram& test, const MelSpectrogram& ref);
double p_estoi(const MelSpectrogram& test, const MelSpectrogram& ref);
/// Same measures on frames already on the reference time axis.
double stoi_aligned(const Matrix& test, const Matrix& ref);
double estoi_aligned(const Matrix& test, const Matrix& ref);

/// Nearest-exemplar phoneme recognizer: emits the phonemes of the exemplar
/// with the least length-normalized DTW cost.
class TemplateRecognizer {
 public:
  void add(const std::string& label, MelSpectrogram mel, std::vector<std::string> phonemes);
  /// Exemplars: every normal-speaker utterance in the corpus.
  static TemplateRecognizer from_corpus(const CorpusIndex& index);
  std::vector<std::string> recognize(const MelSpectrogram& mel) const;
  std::size_t size() const { return mels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::vector<MelSpectrogram> mels_;
  std::vector<std::vector<std::string>> phonemes_;
};

using Transcripts = std::map<std::string, std::vector<std::string>>;
/// "utt_id<TAB>phoneme list" per line.
Transcripts read_transcripts(const std::filesystem::path& path);
void write_transcripts(const std::filesystem::path& path, const Transcripts& t);
/// "speaker_id<TAB>ster" per line.
std::map<std::string, double> read_ster_table(const std::filesystem::path& path);
void write_ster_table(const std::filesystem::path& path, const std::map<std::string, double>& t);

struct ScoredUtterance {
  std::string utt_id;
  std::string system;   // e.g. "VTN", "VTN-VAE", "GT"
  std::string speaker;  // aggregation key (the dysarthric target)
  std::string word_id;
  Gender gender = Gender::m;  // reference gender
  MelSpectrogram mel;         // log-mel in absolute (denormalized) units
};

struct UtteranceScore {
  std::string utt_id, system, speaker, word_id;
  double p_stoi = 0.0;
  double p_estoi = 0.0;
  std::optional<double> per;
};

struct SpeakerScore {
  std::string system, speaker;
  double p_stoi = 0.0;
  double p_estoi = 0.0;
  std::optional<double> per;
  int n = 0;
};

struct Correlation {
  std::string system, metric;
  std::optional<double> r;
  std::optional<double> r_gt;
};

struct EvalReport {
  std::vector<UtteranceScore> utterances;
  std::vector<SpeakerScore> speakers;  // sorted by (system, speaker)
  std::vector<Correlation> correlations;
  std::map<std::string, double> ster;

  const SpeakerScore* speaker_score(const std::string& system, const std::string& speaker) const;
};

/// Scores every utterance against a gender-matched per-word reference.
/// `hypotheses` supplies PER transcripts (missing entries warn and leave PER
/// absent). Utterances of system `gt_system`, when present, provide r_GT.
EvalReport evaluate_system(const std::vector<ScoredUtterance>& utterances,
                           const CorpusIndex& index, const Transcripts& hypotheses,
                           const std::map<std::string, double>& ster,
                           const std::string& gt_system = "GT");

/// report.tsv (machine-readable) and report.txt (aligned table).
void write_report(const EvalReport& report, const std::filesystem::path& dir);
std::string format_table(const EvalReport& report);
EvalReport read_report_tsv(const std::filesystem::path& path);

}  // namespace dvc
