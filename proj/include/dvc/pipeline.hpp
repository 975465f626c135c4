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


// Two-stage conversion pipeline: corpus preparation, model training,
// conversion and evaluation, each runnable on its own against one run
// directory.
//
//   <out>/corpus/                       synthetic corpus (when generated)
//   <out>/checkpoints/pretrain.ckpt
//   <out>/checkpoints/s2s_<target>.ckpt
//   <out>/checkpoints/vae.ckpt
//   <out>/converted/index.tsv           one line per converted utterance
//   <out>/converted/<target>/<utt>.{vtn,vtn_vae}.{mel,wav}
//   <out>/hypotheses.txt, report.tsv, report.txt, manifest.txt

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dvc/config.hpp"
#include "dvc/corpus.hpp"
#include "dvc/dsp.hpp"
#include "dvc/error.hpp"
#include "dvc/evalkit.hpp"
#include "dvc/framewise.hpp"
#include "dvc/seq2seq.hpp"

namespace dvc {

/// Failure inside a named pipeline stage; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Runs `fn`, rethrowing any library error as a StageError for `stage`.
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

/// Progress lines from the training and conversion stages. The default sink
/// writes to stderr; returns the previous sink.
using ProgressSink = std::function<void(std::string_view)>;
ProgressSink set_progress_sink(ProgressSink sink);

struct RunLayout {
  std::filesystem::path out;

  std::filesystem::path corpus_root(const PipelineConfig& cfg) const;
  std::filesystem::path pretrain_checkpoint() const { return out / "checkpoints" / "pretrain.ckpt"; }
  std::filesystem::path s2s_checkpoint(const std::string& target) const {
    return out / "checkpoints" / ("s2s_" + target + ".ckpt");
  }
  std::filesystem::path vae_checkpoint() const { return out / "checkpoints" / "vae.ckpt"; }
  std::filesystem::path converted_dir() const { return out / "converted"; }
  std::filesystem::path hypotheses() const { return out / "hypotheses.txt"; }
  std::filesystem::path manifest() const { return out / "manifest.txt"; }
};

struct PreparedCorpus {
  CorpusIndex index;
  std::vector<std::string> targets;  // dysarthric
  std::vector<std::string> sources;  // normal
  std::string pretrain_speaker;
};

/// Loads (or generates) the corpus and resolves the speaker roles. Every
/// referenced speaker must exist and belong to the right group.
PreparedCorpus prepare(const PipelineConfig& cfg);

void run_pretrain(const PipelineConfig& cfg, const PreparedCorpus& data);
/// One many-to-one model per target, fine-tuned from the pretrained checkpoint.
void run_train_s2s(const PipelineConfig& cfg, const PreparedCorpus& data);
void run_train_vae(const PipelineConfig& cfg, const PreparedCorpus& data);

enum class Stage { vtn, vtn_vae };
const char* to_string(Stage s);
Stage parse_stage(const std::string& s);

struct ConversionResult {
  std::string utt_id;  // "<target>/<source utt_id>"
  std::string source_utt, source_speaker, target_speaker, word_id;
  Stage stage = Stage::vtn;
  MelSpectrogram vtn_mel;  // absolute log-mel after stage 1
  MelSpectrogram vae_mel;  // absolute log-mel after stage 2 (vtn_vae only)
  std::vector<double> waveform;  // vocoded final-stage mel
  double length_ratio = 0.0;     // stage-1 output frames / input frames
  bool truncated = false;

  const MelSpectrogram& mel() const { return stage == Stage::vtn_vae ? vae_mel : vtn_mel; }
};

struct ConversionModels {
  std::map<std::string, S2SState> s2s;  // by target
  std::optional<VAEState> vae;

  static ConversionModels load(const RunLayout& layout, const std::vector<std::string>& targets,
                               Stage stage);
};

/// Stage 1 for one source utterance, then stage 2 when `vae` is given. The
/// waveform is left empty when `vocoder_iterations` is 0.
ConversionResult convert_utterance(const S2SState& s2s, const VAEState* vae,
                                   const Utterance& source, int vocoder_iterations);

/// Converts every test-split utterance of every source toward every target
/// and persists mels, waveforms and converted/index.tsv.
std::vector<ConversionResult> run_convert(const PipelineConfig& cfg, const PreparedCorpus& data,
                                          Stage stage);
/// Reads back what run_convert persisted (waveforms are not loaded).
std::vector<ConversionResult> load_conversions(const RunLayout& layout);

/// Scores VTN, VTN-VAE (when present) and the targets' own test recordings.
EvalReport run_evaluate(const PipelineConfig& cfg, const PreparedCorpus& data,
                        const std::vector<ConversionResult>& conversions);

/// Every stage in order, then manifest.txt.
EvalReport run_experiment(const PipelineConfig& cfg);

/// FNV-1a 64 of a file's bytes, hex.
std::string file_hash(const std::filesystem::path& path);

}  // namespace dvc
