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
#include <string>
#include <utility>
#include <vector>

#include "dvc/corpus.hpp"
#include "dvc/kernels.hpp"
#include "dvc/types.hpp"

namespace dvc {

// Analysis parameters shared by every model and metric.
inline constexpr int kNfft = 1024;
inline constexpr int kHop = 256;
inline constexpr int kMelBands = 80;
inline constexpr double kMelFmin = 80.0;
inline constexpr double kMelFmax = 7600.0;
inline constexpr double kMelFloor = 1e-10;

struct MelSpectrogram {
  Matrix frames;  // T x B, natural-log mel magnitudes
  int n_fft = kNfft;
  int hop = kHop;
  int sample_rate = kSampleRate;
  int n_bands = kMelBands;

  long num_frames() const { return frames.rows(); }
};

/// B x (n_fft/2 + 1) triangular filterbank on the HTK mel scale, unit peak.
const Matrix& mel_filterbank();
/// Centre frequency (Hz) of each mel band.
std::vector<double> mel_band_centers();

/// Hann/1024/256, 80 bands over 80-7600 Hz, magnitude -> mel -> max(., 1e-10) -> log.
/// Throws PreconditionError for a rate other than 16 kHz or a signal shorter
/// than one window.
MelSpectrogram melspec(std::span<const double> samples, int sample_rate,
                       kernels::Exec exec = kernels::Exec::parallel);

MelSpectrogram make_mel(Matrix frames);
/// melspec of one corpus utterance (serial kernels; callers parallelize across utterances).
Matrix utterance_mel(const Utterance& u);

struct FeatureStats {
  std::string speaker_id;
  RowVector mean;
  RowVector std;  // each entry >= 1e-8
};

inline constexpr double kStdFloor = 1e-8;

/// Per-band population mean/std over all frames of `mels`.
FeatureStats compute_stats(const std::string& speaker_id, std::span<const Matrix> mels);
/// Statistics over the speaker's train-split utterances.
FeatureStats speaker_stats(const CorpusIndex& index, const std::string& speaker_id);

MelSpectrogram normalize(const MelSpectrogram& m, const FeatureStats& s);
MelSpectrogram denormalize(const MelSpectrogram& m, const FeatureStats& s);

struct WarpPath {
  std::vector<std::pair<int, int>> pairs;
  double cost = 0.0;
};

/// Globally optimal alignment under Euclidean frame distance with steps
/// (1,0), (0,1), (1,1). Backtrace ties prefer (1,1), then (1,0), then (0,1).
WarpPath dtw(const Matrix& x, const Matrix& y);
WarpPath dtw(const MelSpectrogram& x, const MelSpectrogram& y);
/// Same recursion over a precomputed local-cost grid.
WarpPath dtw_from_costs(const Matrix& local_cost);

/// Resamples x onto ref's time axis: row j is the mean of the x frames
/// paired with ref frame j.
MelSpectrogram align_to(const MelSpectrogram& x, const MelSpectrogram& ref);

struct GriffinLimOptions {
  int iterations = 60;
  int nnls_iterations = 50;
  double peak = 0.95;
  std::uint64_t phase_seed = 0x5eed;
};

struct GriffinLimResult {
  std::vector<double> samples;
  /// Spectral convergence ||S(x_k) - A e^{i phi_k}|| / ||A|| after each
  /// iteration, in the full-spectrum norm.
  std::vector<double> convergence;
};

/// Mel pseudo-inverse (per-frame NNLS by multiplicative updates) followed by
/// iterative phase reconstruction. Output length (T-1)*hop + n_fft, peak 0.95.
GriffinLimResult griffin_lim_trace(const MelSpectrogram& m, const GriffinLimOptions& opt);
std::vector<double> griffin_lim(const MelSpectrogram& m, int iterations = 60);

/// Nonnegative magnitude spectrogram (T x bins) whose mel projection best
/// matches exp(m.frames).
Matrix mel_to_magnitude(const MelSpectrogram& m, int nnls_iterations);

/// Slope (dB per octave) of the time-averaged log-mel profile regressed on
/// log2 of band centre frequency.
double spectral_tilt(const MelSpectrogram& m);

// Binary mel file: "DVCMEL 1 <rows> <cols>\n" followed by little-endian float64.
void save_mel(const std::filesystem::path& path, const MelSpectrogram& m);
MelSpectrogram load_mel(const std::filesystem::path& path);

}  // namespace dvc
