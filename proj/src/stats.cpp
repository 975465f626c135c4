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

#include "dvc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dvc/error.hpp"

namespace dvc {

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw PreconditionError("pearson_r: " + std::to_string(x.size()) + " vs " +
                            std::to_string(y.size()) + " values");
  if (x.size() < 3) throw PreconditionError("pearson_r needs at least 3 paired values");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw PreconditionError("pearson_r: zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double binomial_pmf(int k, int n, double p) {
  if (n < 0 || k < 0 || k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  const double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  return std::exp(log_c + k * std::log(p) + (n - k) * std::log1p(-p));
}

double binomial_test(int k, int n, double p0, Sided sided) {
  if (n < 0 || k < 0 || k > n)
    throw PreconditionError("binomial_test: need 0 <= k <= n (k=" + std::to_string(k) +
                            ", n=" + std::to_string(n) + ")");
  if (p0 < 0.0 || p0 > 1.0) throw PreconditionError("binomial_test: p0 outside [0, 1]");
  double p = 0.0;
  switch (sided) {
    case Sided::greater:
      for (int i = k; i <= n; ++i) p += binomial_pmf(i, n, p0);
      break;
    case Sided::less:
      for (int i = 0; i <= k; ++i) p += binomial_pmf(i, n, p0);
      break;
    case Sided::two: {
      const double observed = binomial_pmf(k, n, p0);
      for (int i = 0; i <= n; ++i) {
        const double q = binomial_pmf(i, n, p0);
        if (q <= observed * (1.0 + 1e-7)) p += q;
      }
      break;
    }
  }
  return std::min(1.0, p);
}

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw PreconditionError("wilcoxon_signed_rank: unpaired inputs (" + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()) + ")");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  WilcoxonResult res;
  res.n = static_cast<int>(d.size());
  if (d.empty()) return res;

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<double> rank(d.size());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double avg = (static_cast<double>(i + j) + 2.0) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? w_plus : w_minus) += rank[i];
  res.statistic = std::min(w_plus, w_minus);
  const double total = w_plus + w_minus;

  if (res.n <= 12) {
    // Every sign assignment of the observed ranks is equally likely under H0.
    const unsigned long patterns = 1ul << res.n;
    unsigned long extreme = 0;
    for (unsigned long mask = 0; mask < patterns; ++mask) {
      double w = 0.0;
      for (int i = 0; i < res.n; ++i)
        if (mask & (1ul << i)) w += rank[static_cast<std::size_t>(i)];
      if (std::min(w, total - w) <= res.statistic + 1e-9) ++extreme;
    }
    res.p = std::min(1.0, static_cast<double>(extreme) / static_cast<double>(patterns));
    res.exact = true;
  } else {
    const double n = res.n;
    const double mean = n * (n + 1) / 4.0;
    const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
    res.exact = false;
    if (var <= 0.0) {
      res.p = 1.0;
    } else {
      const double z = (mean - res.statistic) / std::sqrt(var);
      res.p = std::min(1.0, 2.0 * normal_sf(z));
    }
  }
  return res;
}

int levenshtein(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  std::vector<int> prev(hyp.size() + 1), cur(hyp.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double per(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw PreconditionError("PER needs a nonempty reference");
  return 100.0 * levenshtein(ref, hyp) / static_cast<double>(ref.size());
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.05) return "*";
  return "";
}

}  // namespace dvc
