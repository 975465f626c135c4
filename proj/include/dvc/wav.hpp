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

#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace dvc {

struct WavData {
  int sample_rate = 0;
  std::vector<double> samples;  // mono, scaled to [-1, 1)
};

// 16-bit PCM mono only. Multi-channel or non-PCM input is a FormatError.
WavData read_wav(const std::filesystem::path& path);

// Samples are clipped to [-1, 1] and rounded to the nearest 16-bit code.
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate);

}  // namespace dvc
