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


#include <gtest/gtest.h>

#include <cmath>

#include "dvc/kernels.hpp"
#include "dvc/rng.hpp"
#include "grad_check.hpp"

namespace dvc::kernels {
namespace {

using testing::random_matrix;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

TEST(Kernels, StftSerialEqualsParallel) {
  const auto x = noise(9000, 1);
  EXPECT_EQ(stft(x, 1024, 256, Exec::serial), stft(x, 1024, 256, Exec::parallel));
}

TEST(Kernels, IstftInvertsStftInTheInterior) {
  const auto x = noise(9000, 2);
  const auto spec = stft(x, 1024, 256, Exec::serial);
  const auto y = istft(spec, 1024, 256, Exec::parallel);
  EXPECT_EQ(y, istft(spec, 1024, 256, Exec::serial));
  for (std::size_t i = 1024; i + 1024 < y.size(); ++i) ASSERT_NEAR(y[i], x[i], 1e-9);
}

TEST(Kernels, FftMatchesNaiveDft) {
  const RealFft fft(16);
  const auto x = noise(16, 3);
  std::vector<std::complex<double>> out(9);
  fft.forward(x, out);
  for (int k = 0; k < 9; ++k) {
    std::complex<double> acc = 0;
    for (int n = 0; n < 16; ++n) acc += x[n] * std::polar(1.0, -2 * M_PI * k * n / 16.0);
    EXPECT_NEAR(std::abs(acc - out[k]), 0.0, 1e-12);
  }
}

TEST(Kernels, PairwiseDistancesSerialEqualsParallelAndBruteForce) {
  const Matrix x = random_matrix(17, 5, 4), y = random_matrix(9, 5, 5);
  const Matrix d = pairwise_distances(x, y, Exec::serial);
  EXPECT_EQ(d, pairwise_distances(x, y, Exec::parallel));
  for (long i = 0; i < x.rows(); ++i)
    for (long j = 0; j < y.rows(); ++j) EXPECT_NEAR(d(i, j), (x.row(i) - y.row(j)).norm(), 1e-12);
}

TEST(Kernels, NearestRowsSerialEqualsParallelWithLowestIndexTies) {
  const Matrix z = random_matrix(50, 4, 6);
  Matrix book = random_matrix(8, 4, 7);
  book.row(5) = book.row(2);
  const auto a = nearest_rows(z, book, Exec::serial);
  EXPECT_EQ(a, nearest_rows(z, book, Exec::parallel));
  for (long i = 0; i < z.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < book.rows(); ++k)
      if ((z.row(i) - book.row(k)).squaredNorm() < (z.row(i) - book.row(best)).squaredNorm())
        best = k;
    EXPECT_EQ(a[i], best);
    EXPECT_NE(a[i], 5);
  }
}

}  // namespace
}  // namespace dvc::kernels
