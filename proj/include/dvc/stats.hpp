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

#include <span>
#include <string>
#include <vector>

namespace dvc {

/// Sample Pearson correlation. Needs >= 3 paired points and nonzero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);

enum class Sided { greater, less, two };

/// P(K = k) for K ~ Binomial(n, p).
double binomial_pmf(int k, int n, double p);
/// Exact tail probability; `two` sums every outcome no more likely than k.
double binomial_test(int k, int n, double p0 = 0.5, Sided sided = Sided::greater);

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double p = 1.0;          // two-sided
  int n = 0;               // nonzero differences
  bool exact = true;
};

/// Paired signed-rank test: zero differences dropped, average ranks for ties,
/// exact enumeration for n <= 12, tie-corrected normal approximation above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

/// Unit-cost edit distance.
int levenshtein(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);
/// 100 * edits / |ref|. Throws for an empty reference.
double per(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

/// "***" for p < 0.001, "*" for p < 0.05, "" otherwise.
std::string significance_stars(double p);

}  // namespace dvc
