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

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant; both write each output element from exactly one iteration
// with the same arithmetic, so the two must agree bit for bit.

#pragma once

#include <complex>
#include <span>
#include <vector>

#include "dvc/types.hpp"

namespace dvc::kernels {

enum class Exec { serial, parallel };

/// Real-to-complex FFT of fixed size backed by a shared FFTW plan.
/// Thread-safe: planning is serialized, execution uses the new-array API.
class RealFft {
 public:
  explicit RealFft(int n);
  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
  /// Unnormalized inverse (FFTW convention): forward then inverse scales by n.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  int n_;
  void* plan_fwd_;
  void* plan_inv_;
};

/// Periodic Hann window of length n.
std::vector<double> hann(int n);

/// Complex STFT without centre padding: frame t covers samples
/// [t*hop, t*hop + n_fft). Rows are frames, columns rfft bins.
using ComplexMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
ComplexMatrix stft(std::span<const double> samples, int n_fft, int hop, Exec exec);

/// Weighted overlap-add inverse of `stft` (least-squares signal estimate for
/// the same analysis window). Samples with zero window support are set to 0.
std::vector<double> istft(const ComplexMatrix& spec, int n_fft, int hop, Exec exec);

/// D(i, j) = ||x_i - y_j||_2.
Matrix pairwise_distances(const Matrix& x, const Matrix& y, Exec exec);

/// Index of the nearest row of `book` for each row of `z` under squared
/// Euclidean distance; ties go to the lowest index.
std::vector<int> nearest_rows(const Matrix& z, const Matrix& book, Exec exec);

}  // namespace dvc::kernels
