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
#include <functional>
#include <numeric>

#include "dvc/error.hpp"
#include "dvc/rng.hpp"
#include "dvc/stats.hpp"

namespace dvc {
namespace {

// Levenshtein by plain recursion, no memo.
int edit_distance_recursive(const std::vector<std::string>& a, std::size_t i,
                            const std::vector<std::string>& b, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  const int sub = edit_distance_recursive(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1);
  const int del = edit_distance_recursive(a, i + 1, b, j) + 1;
  const int ins = edit_distance_recursive(a, i, b, j + 1) + 1;
  return std::min({sub, del, ins});
}

std::vector<std::vector<std::string>> all_sequences(int max_len, const std::vector<std::string>& alphabet) {
  std::vector<std::vector<std::string>> out{{}};
  std::vector<std::vector<std::string>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<std::string>> next;
    for (const auto& s : frontier)
      for (const auto& a : alphabet) {
        auto t = s;
        t.push_back(a);
        next.push_back(t);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

TEST(Levenshtein, MatchesRecursionOnSampledPairs) {
  const auto seqs = all_sequences(6, {"a", "b", "c", "d"});
  Rng rng(4);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto& a = seqs[rng.below(seqs.size())];
    const auto& b = seqs[rng.below(seqs.size())];
    ASSERT_EQ(levenshtein(a, b), edit_distance_recursive(a, 0, b, 0));
  }
}

TEST(Per, Examples) {
  EXPECT_DOUBLE_EQ(per({"p1", "p2", "p3"}, {"p1", "p2", "p3"}), 0.0);
  EXPECT_DOUBLE_EQ(per({"p1", "p2", "p3", "p4", "p5"}, {"p1", "p2", "p4", "p5"}), 20.0);
  EXPECT_GT(per({"a", "b"}, {"c", "d", "e", "f"}), 100.0);
  EXPECT_THROW(per({}, {"a"}), PreconditionError);
}

TEST(Pearson, LinearMapsGiveSign) {
  const std::vector<double> x{1, 2, 4, 7, 11};
  std::vector<double> y(x.size()), z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = 2 * x[i] + 1;
    z[i] = -0.5 * x[i] + 3;
  }
  EXPECT_NEAR(pearson_r(x, y), 1.0, 1e-12);
  EXPECT_NEAR(pearson_r(x, z), -1.0, 1e-12);
}

TEST(Pearson, PermutationInvariantAndValidated) {
  const std::vector<double> x{0.37, 0.37, 0.20, 0.16, 0.09, 0.08};
  const std::vector<double> y{7.0, 7.0, 42.0, 38.0, 98.0, 92.6};
  const std::vector<double> xp{0.09, 0.37, 0.16, 0.37, 0.08, 0.20};
  const std::vector<double> yp{98.0, 7.0, 38.0, 7.0, 92.6, 42.0};
  EXPECT_NEAR(pearson_r(x, y), pearson_r(xp, yp), 1e-12);
  EXPECT_THROW(pearson_r(std::vector<double>{1, 2}, std::vector<double>{1, 2}), PreconditionError);
  EXPECT_THROW(pearson_r(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}),
               PreconditionError);
  EXPECT_THROW(pearson_r(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}),
               PreconditionError);
}

double choose(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

TEST(Binomial, TailsMatchDirectSums) {
  for (int n = 1; n <= 25; ++n)
    for (int k = 0; k <= n; ++k) {
      double upper = 0, lower = 0;
      for (int i = k; i <= n; ++i) upper += choose(n, i);
      for (int i = 0; i <= k; ++i) lower += choose(n, i);
      const double total = std::ldexp(1.0, n);
      ASSERT_NEAR(binomial_test(k, n, 0.5, Sided::greater), upper / total, 1e-12);
      ASSERT_NEAR(binomial_test(k, n, 0.5, Sided::less), lower / total, 1e-12);
    }
}

TEST(Binomial, KnownValues) {
  EXPECT_NEAR(binomial_test(20, 20), 9.5367431640625e-07, 1e-18);
  EXPECT_NEAR(binomial_test(19, 20), 2.002716064453125e-05, 1e-16);
  EXPECT_NEAR(binomial_test(17, 20), 0.0012884140014648438, 1e-15);
  EXPECT_NEAR(binomial_test(17, 20, 0.5, Sided::two), 0.0025768280029296875, 1e-15);
  EXPECT_EQ(significance_stars(binomial_test(19, 20)), "***");
  EXPECT_EQ(significance_stars(0.01), "*");
  EXPECT_EQ(significance_stars(0.2), "");
  EXPECT_THROW(binomial_test(5, 4), PreconditionError);
}

TEST(Binomial, PmfSumsToOne) {
  for (int n = 0; n <= 30; ++n)
    for (double p : {0.1, 0.5, 0.73}) {
      double s = 0;
      for (int k = 0; k <= n; ++k) s += binomial_pmf(k, n, p);
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
}

// Two-sided exact p by listing all sign patterns of the |d| ranks.
double wilcoxon_enumerated(const std::vector<double>& d, double* statistic) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(d.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = (i + j + 2) / 2.0;
    i = j + 1;
  }
  double wp = 0, total = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total += rank[i];
    if (d[i] > 0) wp += rank[i];
  }
  *statistic = std::min(wp, total - wp);
  long hits = 0;
  const long patterns = 1L << d.size();
  for (long mask = 0; mask < patterns; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (mask >> i & 1) w += rank[i];
    if (std::min(w, total - w) <= *statistic + 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(patterns);
}

TEST(Wilcoxon, HandCase) {
  const std::vector<double> a{1.2, -0.5, 2.3, 0.7, -1.9, 3.1}, b(6, 0.0);
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_DOUBLE_EQ(r.statistic, 5.0);
  EXPECT_NEAR(r.p, 0.3125, 1e-12);
  EXPECT_TRUE(r.exact);
}

TEST(Wilcoxon, ExactMatchesEnumeration) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(10));
    std::vector<double> a(n), b(n, 0.0);
    for (auto& x : a) x = std::round(rng.normal() * 4) / 2;  // ties on purpose
    for (auto& x : a)
      if (x == 0) x = 0.5;
    double stat = 0;
    const double p = wilcoxon_enumerated(a, &stat);
    const auto r = wilcoxon_signed_rank(a, b);
    ASSERT_DOUBLE_EQ(r.statistic, stat);
    ASSERT_NEAR(r.p, p, 1e-12);
  }
}

TEST(Wilcoxon, DegenerateAndScaleInvariant) {
  const std::vector<double> a{1, 2, 3}, c{0.3, -1.2, 2.5, 0.4, -0.1, 1.9, 0.8};
  const auto same = wilcoxon_signed_rank(a, a);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_EQ(same.p, 1.0);
  std::vector<double> scaled(c.size()), zero(c.size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) scaled[i] = 3.5 * c[i];
  const auto r1 = wilcoxon_signed_rank(c, zero), r2 = wilcoxon_signed_rank(scaled, zero);
  EXPECT_EQ(r1.statistic, r2.statistic);
  EXPECT_EQ(r1.p, r2.p);
  EXPECT_THROW(wilcoxon_signed_rank(a, c), PreconditionError);
}

TEST(Wilcoxon, LargeSampleUsesNormalApproximation) {
  Rng rng(2);
  std::vector<double> a(40), b(40, 0.0);
  for (auto& x : a) x = rng.normal() + 0.8;
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_FALSE(r.exact);
  EXPECT_LT(r.p, 0.001);
}

}  // namespace
}  // namespace dvc
