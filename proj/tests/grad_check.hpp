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

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dvc/autograd.hpp"
#include "dvc/rng.hpp"

namespace dvc::testing {

inline Matrix random_matrix(long rows, long cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Loss built on a tape from the parameters of a store.
using LossFn = std::function<ag::Var(ag::Tape&)>;

inline double loss_value(const ag::ParamStore& ps, const LossFn& f) {
  ag::Tape t(ps, false);
  return f(t).scalar();
}

/// Largest ||analytic - numeric|| / max(||analytic||, ||numeric||, floor) over
/// parameters, with central differences of step h on every entry.
inline double grad_check(ag::ParamStore& ps, const LossFn& f, double h = 1e-6,
                         double floor = 1e-8) {
  ag::Tape t(ps);
  t.backward(f(t));
  const auto grads = t.param_grads();
  double worst = 0.0;
  for (int id = 0; id < ps.size(); ++id) {
    Matrix& p = ps.value(id);
    Matrix numeric(p.rows(), p.cols());
    for (long i = 0; i < p.size(); ++i) {
      const double keep = p.data()[i];
      p.data()[i] = keep + h;
      const double up = loss_value(ps, f);
      p.data()[i] = keep - h;
      const double down = loss_value(ps, f);
      p.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const Matrix analytic = grads[id].size() ? grads[id] : Matrix::Zero(p.rows(), p.cols());
    const double denom = std::max({analytic.norm(), numeric.norm(), floor});
    worst = std::max(worst, (analytic - numeric).norm() / denom);
  }
  return worst;
}

}  // namespace dvc::testing
