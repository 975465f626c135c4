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

// Experiment configuration. INI-style text with sections [corpus],
// [pipeline], [s2s] and [vae]; every key is optional and unknown keys or
// sections are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dvc/framewise.hpp"
#include "dvc/kv.hpp"
#include "dvc/seq2seq.hpp"

namespace dvc {

struct CorpusSection {
  std::filesystem::path root;  // empty = <out>/corpus
  bool synthetic = true;  // generate when root has no speakers.tsv
  std::uint64_t seed = 7;
  int n_normal = 4;
  int n_dysarthric = 3;
  int words = 30;
  std::vector<double> stretches;
  int train_count = 0;  // > 0 re-splits the loaded corpus
  int test_count = 0;
};

struct PipelineSection {
  std::vector<std::string> targets;  // empty = every dysarthric speaker
  std::vector<std::string> sources;  // empty = every normal speaker
  std::string pretrain_speaker;      // empty = first source
  std::uint64_t seed = 1;
  std::filesystem::path out = "runs/default";
  long pretrain_steps = 1000;
  long finetune_steps = 1500;
  long vae_steps = 1500;
  long save_interval = 0;
  int vocoder_iterations = 60;
  bool write_wavs = true;
  std::filesystem::path hypotheses;  // empty = template recognizer
  std::filesystem::path ster;        // empty = STER from speakers.tsv
};

struct PipelineConfig {
  CorpusSection corpus;
  PipelineSection pipeline;
  S2SConfig s2s;
  VAEConfig vae;

  /// Canonical "section.key=value" lines, sorted. The output directory is left out.
  std::string canonical_text() const;
  /// FNV-1a 64 of canonical_text, hex.
  std::string hash() const;
  /// Sets the pipeline seed and derives both model seeds from it.
  void apply_seed(std::uint64_t seed);
};

PipelineConfig parse_config_text(const std::string& text, const std::string& origin = "<text>");
PipelineConfig load_config(const std::filesystem::path& path);
/// Desk-scale defaults used by the tests and the shipped example config.
PipelineConfig desk_config();

}  // namespace dvc
