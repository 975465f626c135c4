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

#include "dvc/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "dvc/error.hpp"
#include "dvc/rng.hpp"

namespace dvc {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_edges() {
  std::vector<double> edges(kMelBands + 2);
  const double lo = hz_to_mel(kMelFmin), hi = hz_to_mel(kMelFmax);
  for (int i = 0; i < kMelBands + 2; ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (kMelBands + 1));
  return edges;
}

}  // namespace

const Matrix& mel_filterbank() {
  static const Matrix fb = [] {
    const int bins = kNfft / 2 + 1;
    Matrix m = Matrix::Zero(kMelBands, bins);
    const auto edges = mel_edges();
    for (int b = 0; b < kMelBands; ++b) {
      const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
      for (int k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kNfft;
        double w = 0.0;
        if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
        else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
        m(b, k) = w;
      }
    }
    return m;
  }();
  return fb;
}

std::vector<double> mel_band_centers() {
  const auto edges = mel_edges();
  return {edges.begin() + 1, edges.end() - 1};
}

MelSpectrogram make_mel(Matrix frames) {
  MelSpectrogram m;
  m.n_bands = static_cast<int>(frames.cols());
  m.frames = std::move(frames);
  return m;
}

MelSpectrogram melspec(std::span<const double> samples, int sample_rate, kernels::Exec exec) {
  if (sample_rate != kSampleRate)
    throw PreconditionError("melspec expects " + std::to_string(kSampleRate) + " Hz input, got " +
                            std::to_string(sample_rate));
  const auto spec = kernels::stft(samples, kNfft, kHop, exec);
  const Matrix mag = spec.cwiseAbs();
  Matrix mel = mag * mel_filterbank().transpose();
  mel = mel.cwiseMax(kMelFloor).array().log().matrix();
  return make_mel(std::move(mel));
}

Matrix utterance_mel(const Utterance& u) {
  if (!u.samples) throw PreconditionError("utterance " + u.utt_id + " has no audio");
  return melspec(*u.samples, u.sample_rate, kernels::Exec::serial).frames;
}

// ---------------------------------------------------------------------------

FeatureStats compute_stats(const std::string& speaker_id, std::span<const Matrix> mels) {
  if (mels.empty()) throw PreconditionError("no frames to compute statistics for " + speaker_id);
  const long bands = mels.front().cols();
  RowVector sum = RowVector::Zero(bands);
  long n = 0;
  for (const auto& m : mels) {
    if (m.cols() != bands) throw PreconditionError("band count mismatch in statistics input");
    sum += m.colwise().sum();
    n += m.rows();
  }
  if (n == 0) throw PreconditionError("no frames to compute statistics for " + speaker_id);
  FeatureStats s;
  s.speaker_id = speaker_id;
  s.mean = sum / static_cast<double>(n);
  RowVector sq = RowVector::Zero(bands);
  for (const auto& m : mels) sq += (m.rowwise() - s.mean).array().square().matrix().colwise().sum();
  s.std = (sq / static_cast<double>(n)).array().sqrt().max(kStdFloor).matrix();
  return s;
}

FeatureStats speaker_stats(const CorpusIndex& index, const std::string& speaker_id) {
  const auto utts = index.utterances_of(speaker_id, Split::train);
  if (utts.empty())
    throw PreconditionError("speaker " + speaker_id + " has no train utterances for statistics");
  std::vector<Matrix> mels(utts.size());
  const long n = static_cast<long>(utts.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i)
    mels[i] = utterance_mel(*utts[i]);
  return compute_stats(speaker_id, mels);
}

MelSpectrogram normalize(const MelSpectrogram& m, const FeatureStats& s) {
  if (m.frames.cols() != s.mean.size())
    throw PreconditionError("normalize: mel has " + std::to_string(m.frames.cols()) +
                            " bands, stats have " + std::to_string(s.mean.size()));
  MelSpectrogram out = m;
  out.frames = ((m.frames.rowwise() - s.mean).array().rowwise() / s.std.array()).matrix();
  return out;
}

MelSpectrogram denormalize(const MelSpectrogram& m, const FeatureStats& s) {
  if (m.frames.cols() != s.mean.size())
    throw PreconditionError("denormalize: mel has " + std::to_string(m.frames.cols()) +
                            " bands, stats have " + std::to_string(s.mean.size()));
  MelSpectrogram out = m;
  out.frames = ((m.frames.array().rowwise() * s.std.array()).matrix().rowwise() + s.mean);
  return out;
}

// ---------------------------------------------------------------------------

WarpPath dtw_from_costs(const Matrix& c) {
  const long tx = c.rows(), ty = c.cols();
  if (tx < 1 || ty < 1) throw PreconditionError("dtw on an empty sequence");
  constexpr double inf = std::numeric_limits<double>::infinity();
  Matrix acc = Matrix::Constant(tx, ty, inf);
  for (long i = 0; i < tx; ++i) {
    for (long j = 0; j < ty; ++j) {
      double best;
      if (i == 0 && j == 0) best = 0.0;
      else {
        best = inf;
        if (i > 0 && j > 0) best = std::min(best, acc(i - 1, j - 1));
        if (i > 0) best = std::min(best, acc(i - 1, j));
        if (j > 0) best = std::min(best, acc(i, j - 1));
      }
      acc(i, j) = best + c(i, j);
    }
  }
  WarpPath path;
  path.cost = acc(tx - 1, ty - 1);
  long i = tx - 1, j = ty - 1;
  path.pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
  while (i > 0 || j > 0) {
    const double diag = (i > 0 && j > 0) ? acc(i - 1, j - 1) : inf;
    const double up = i > 0 ? acc(i - 1, j) : inf;
    const double left = j > 0 ? acc(i, j - 1) : inf;
    if (diag <= up && diag <= left) --i, --j;
    else if (up <= left) --i;
    else --j;
    path.pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return path;
}

WarpPath dtw(const Matrix& x, const Matrix& y) {
  if (x.rows() < 1 || y.rows() < 1) throw PreconditionError("dtw on an empty sequence");
  if (x.cols() != y.cols())
    throw PreconditionError("dtw: band count mismatch (" + std::to_string(x.cols()) + " vs " +
                            std::to_string(y.cols()) + ")");
  return dtw_from_costs(kernels::pairwise_distances(x, y, kernels::Exec::parallel));
}

WarpPath dtw(const MelSpectrogram& x, const MelSpectrogram& y) { return dtw(x.frames, y.frames); }

MelSpectrogram align_to(const MelSpectrogram& x, const MelSpectrogram& ref) {
  const WarpPath path = dtw(x, ref);
  Matrix out = Matrix::Zero(ref.frames.rows(), x.frames.cols());
  std::vector<int> count(static_cast<std::size_t>(ref.frames.rows()), 0);
  for (const auto& [i, j] : path.pairs) {
    out.row(j) += x.frames.row(i);
    ++count[j];
  }
  for (long j = 0; j < out.rows(); ++j) out.row(j) /= count[j];
  MelSpectrogram m = ref;
  m.frames = std::move(out);
  return m;
}

// ---------------------------------------------------------------------------

Matrix mel_to_magnitude(const MelSpectrogram& m, int nnls_iterations) {
  const Matrix& fb = mel_filterbank();
  if (m.frames.cols() != fb.rows())
    throw PreconditionError("mel_to_magnitude: expected " + std::to_string(fb.rows()) + " bands");
  const Matrix target = m.frames.array().exp().matrix();  // T x B
  const RowVector weight = fb.colwise().sum();             // 1 x F
  Matrix s = target * fb;                                  // T x F
  for (long f = 0; f < s.cols(); ++f) s.col(f) /= std::max(weight(f), 1e-12);
  const Matrix gram = fb.transpose() * fb;  // F x F
  const Matrix numer = target * fb;
  constexpr double eps = 1e-30;
  for (int it = 0; it < nnls_iterations; ++it) {
    const Matrix denom = s * gram;
    s = (s.array() * numer.array() / (denom.array() + eps)).matrix();
  }
  return s;
}

namespace {

double full_spectrum_norm(const kernels::ComplexMatrix& x) {
  double acc = 0.0;
  const long last = x.cols() - 1;
  for (long t = 0; t < x.rows(); ++t)
    for (long k = 0; k <= last; ++k) {
      const double w = (k == 0 || k == last) ? 1.0 : 2.0;
      acc += w * std::norm(x(t, k));
    }
  return std::sqrt(acc);
}

}  // namespace

GriffinLimResult griffin_lim_trace(const MelSpectrogram& m, const GriffinLimOptions& opt) {
  if (opt.iterations < 1) throw PreconditionError("griffin_lim needs iterations >= 1");
  if (m.frames.rows() < 1) throw PreconditionError("griffin_lim on an empty spectrogram");
  const Matrix mag = mel_to_magnitude(m, opt.nnls_iterations);
  const long frames = mag.rows(), bins = mag.cols();

  Rng rng(opt.phase_seed);
  kernels::ComplexMatrix x(frames, bins);
  for (long t = 0; t < frames; ++t)
    for (long k = 0; k < bins; ++k)
      x(t, k) = std::polar(mag(t, k), 2.0 * std::numbers::pi * rng.uniform());
  const double ref_norm = std::max(full_spectrum_norm(x), 1e-300);

  GriffinLimResult result;
  std::vector<double> signal;
  for (int it = 0; it < opt.iterations; ++it) {
    signal = kernels::istft(x, kNfft, kHop, kernels::Exec::parallel);
    kernels::ComplexMatrix s = kernels::stft(signal, kNfft, kHop, kernels::Exec::parallel);
    for (long t = 0; t < frames; ++t)
      for (long k = 0; k < bins; ++k) {
        const double a = std::abs(s(t, k));
        x(t, k) = a > 0.0 ? mag(t, k) * (s(t, k) / a) : std::complex<double>(mag(t, k), 0.0);
      }
    result.convergence.push_back(full_spectrum_norm(s - x) / ref_norm);
  }
  signal = kernels::istft(x, kNfft, kHop, kernels::Exec::parallel);
  double peak = 0.0;
  for (double v : signal) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : signal) v *= opt.peak / peak;
  result.samples = std::move(signal);
  return result;
}

std::vector<double> griffin_lim(const MelSpectrogram& m, int iterations) {
  GriffinLimOptions opt;
  opt.iterations = iterations;
  return griffin_lim_trace(m, opt).samples;
}

double spectral_tilt(const MelSpectrogram& m) {
  const auto centers = mel_band_centers();
  if (m.frames.cols() != static_cast<long>(centers.size()) || m.frames.rows() < 1)
    throw PreconditionError("spectral_tilt expects a non-empty 80-band mel");
  const RowVector profile = m.frames.colwise().mean() * (20.0 / std::log(10.0));
  const long n = profile.size();
  double mx = 0, my = 0;
  for (long b = 0; b < n; ++b) mx += std::log2(centers[b]), my += profile(b);
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (long b = 0; b < n; ++b) {
    const double dx = std::log2(centers[b]) - mx;
    sxy += dx * (profile(b) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------------

void save_mel(const std::filesystem::path& path, const MelSpectrogram& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "DVCMEL 1 " << m.frames.rows() << ' ' << m.frames.cols() << '\n';
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(m.frames.data()),
            static_cast<std::streamsize>(m.frames.size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path.string());
}

MelSpectrogram load_mel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  long rows = -1, cols = -1;
  hs >> magic >> version >> rows >> cols;
  if (magic != "DVCMEL" || version != 1 || rows < 0 || cols < 1)
    throw FormatError("bad mel file header in " + path.string());
  Matrix frames(rows, cols);
  in.read(reinterpret_cast<char*>(frames.data()),
          static_cast<std::streamsize>(frames.size() * sizeof(double)));
  if (!in) throw FormatError("truncated mel file " + path.string());
  return make_mel(std::move(frames));
}

}  // namespace dvc
