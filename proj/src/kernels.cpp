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

#include "dvc/kernels.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "dvc/error.hpp"

namespace dvc::kernels {
namespace {

struct Plans {
  fftw_plan fwd;
  fftw_plan inv;
};

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// Plans are created once per size and live for the whole process.
Plans plans_for(int n) {
  std::lock_guard lock(plan_mutex());
  static std::map<int, Plans> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  Plans p{fftw_plan_dft_r2c_1d(n, in, out, flags), fftw_plan_dft_c2r_1d(n, out, in, flags)};
  fftw_free(in);
  fftw_free(out);
  if (!p.fwd || !p.inv) throw Error("FFTW planning failed for size " + std::to_string(n));
  cache.emplace(n, p);
  return p;
}

}  // namespace

RealFft::RealFft(int n) : n_(n) {
  if (n < 2 || n % 2 != 0) throw PreconditionError("FFT size must be even and >= 2");
  const Plans p = plans_for(n);
  plan_fwd_ = p.fwd;
  plan_inv_ = p.inv;
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  if (static_cast<int>(in.size()) != n_ || static_cast<int>(out.size()) != bins())
    throw PreconditionError("RealFft::forward size mismatch");
  std::vector<double> buf(in.begin(), in.end());
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_fwd_), buf.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
  if (static_cast<int>(in.size()) != bins() || static_cast<int>(out.size()) != n_)
    throw PreconditionError("RealFft::inverse size mismatch");
  std::vector<std::complex<double>> buf(in.begin(), in.end());  // c2r clobbers its input
  fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_inv_),
                       reinterpret_cast<fftw_complex*>(buf.data()), out.data());
}

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

namespace {

void stft_frame(std::span<const double> samples, const std::vector<double>& window,
                const RealFft& fft, int hop, long t, ComplexMatrix& out) {
  const int n = fft.size();
  std::vector<double> frame(static_cast<std::size_t>(n));
  const std::size_t start = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
  for (int i = 0; i < n; ++i) frame[i] = samples[start + i] * window[i];
  std::vector<std::complex<double>> bins(static_cast<std::size_t>(fft.bins()));
  fft.forward(frame, bins);
  for (int k = 0; k < fft.bins(); ++k) out(t, k) = bins[k];
}

}  // namespace

ComplexMatrix stft(std::span<const double> samples, int n_fft, int hop, Exec exec) {
  if (static_cast<long>(samples.size()) < n_fft)
    throw PreconditionError("signal of " + std::to_string(samples.size()) +
                            " samples is shorter than one analysis window (" +
                            std::to_string(n_fft) + ")");
  const long frames = 1 + (static_cast<long>(samples.size()) - n_fft) / hop;
  const RealFft fft(n_fft);
  const auto window = hann(n_fft);
  ComplexMatrix out(frames, fft.bins());
  if (exec == Exec::serial) {
    for (long t = 0; t < frames; ++t) stft_frame(samples, window, fft, hop, t, out);
  } else {
#pragma omp parallel for schedule(static)
    for (long t = 0; t < frames; ++t) stft_frame(samples, window, fft, hop, t, out);
  }
  return out;
}

std::vector<double> istft(const ComplexMatrix& spec, int n_fft, int hop, Exec exec) {
  const long frames = spec.rows();
  if (frames < 1 || spec.cols() != n_fft / 2 + 1)
    throw PreconditionError("istft: spectrogram shape does not match n_fft");
  const RealFft fft(n_fft);
  const auto window = hann(n_fft);
  const std::size_t len = static_cast<std::size_t>((frames - 1) * hop + n_fft);
  Matrix time_frames(frames, n_fft);
  const auto invert = [&](long t) {
    std::vector<std::complex<double>> bins(spec.row(t).data(), spec.row(t).data() + spec.cols());
    std::vector<double> frame(static_cast<std::size_t>(n_fft));
    fft.inverse(bins, frame);
    for (int i = 0; i < n_fft; ++i) time_frames(t, i) = frame[i] / n_fft * window[i];
  };
  if (exec == Exec::serial) {
    for (long t = 0; t < frames; ++t) invert(t);
  } else {
#pragma omp parallel for schedule(static)
    for (long t = 0; t < frames; ++t) invert(t);
  }
  // Overlap-add stays serial so the summation order is fixed.
  std::vector<double> num(len, 0.0), den(len, 0.0);
  for (long t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t * hop);
    for (int i = 0; i < n_fft; ++i) {
      num[start + i] += time_frames(t, i);
      den[start + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < len; ++i) num[i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
  return num;
}

namespace {

double row_distance(const Matrix& x, const Matrix& y, long i, long j) {
  double acc = 0.0;
  for (long b = 0; b < x.cols(); ++b) {
    const double d = x(i, b) - y(j, b);
    acc += d * d;
  }
  return std::sqrt(acc);
}

int nearest_one(const Matrix& z, const Matrix& book, long i) {
  int best = 0;
  double best_d = INFINITY;
  for (long k = 0; k < book.rows(); ++k) {
    double acc = 0.0;
    for (long c = 0; c < z.cols(); ++c) {
      const double d = z(i, c) - book(k, c);
      acc += d * d;
    }
    if (acc < best_d) {
      best_d = acc;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace

Matrix pairwise_distances(const Matrix& x, const Matrix& y, Exec exec) {
  if (x.cols() != y.cols())
    throw PreconditionError("pairwise_distances: band count mismatch (" +
                            std::to_string(x.cols()) + " vs " + std::to_string(y.cols()) + ")");
  Matrix d(x.rows(), y.rows());
  const long rows = x.rows();
  if (exec == Exec::serial) {
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < y.rows(); ++j) d(i, j) = row_distance(x, y, i, j);
  } else {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < y.rows(); ++j) d(i, j) = row_distance(x, y, i, j);
  }
  return d;
}

std::vector<int> nearest_rows(const Matrix& z, const Matrix& book, Exec exec) {
  if (z.cols() != book.cols()) throw PreconditionError("nearest_rows: dimension mismatch");
  if (book.rows() < 1) throw PreconditionError("nearest_rows: empty codebook");
  std::vector<int> idx(static_cast<std::size_t>(z.rows()));
  const long rows = z.rows();
  if (exec == Exec::serial) {
    for (long i = 0; i < rows; ++i) idx[i] = nearest_one(z, book, i);
  } else {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < rows; ++i) idx[i] = nearest_one(z, book, i);
  }
  return idx;
}

}  // namespace dvc::kernels
