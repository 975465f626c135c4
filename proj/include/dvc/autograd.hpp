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

// Tape-based reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation applied to its Vars; `backward` walks the
// record in reverse and leaves d(loss)/d(param) per parameter id. Tapes only
// read the ParamStore, so independent tapes over the same store can run on
// different threads (one per batch item) and have their gradients summed
// afterwards in a fixed order.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dvc/rng.hpp"
#include "dvc/types.hpp"

namespace dvc::ag {

/// Named, ordered parameter arrays.
class ParamStore {
 public:
  int add(const std::string& name, Matrix init);
  int find(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int id) const { return names_[id]; }
  Matrix& value(int id) { return values_[id]; }
  const Matrix& value(int id) const { return values_[id]; }
  std::vector<Matrix> zeros_like() const;
  long num_scalars() const;
  /// Rounds every value to the nearest float32, the checkpoint precision.
  void round_to_float();

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, int> index_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(const ParamStore& params, bool record = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  const ParamStore& params() const { return *params_; }

  Var constant(Matrix value);
  Var param(int id);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first use.
  Matrix& grad(int id);
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }

  /// Adds a computed node. `backward` may be empty for non-differentiable
  /// results; it is dropped when nothing upstream needs a gradient.
  Var push(Matrix value, std::initializer_list<int> parents, Backward backward);
  Var push(Matrix value, const std::vector<int>& parents, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and back-propagates.
  void backward(Var loss);

  /// Gradient per parameter id after `backward`; untouched params are empty.
  std::vector<Matrix> param_grads() const;
  /// into[id] += grad for every touched parameter (into sized by zeros_like).
  void accumulate_param_grads(std::vector<Matrix>& into) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    int param = -1;
    bool requires_grad = false;
  };
  const ParamStore* params_;
  bool record_;
  std::vector<Node> nodes_;
  std::map<int, int> param_nodes_;
};

// ---- elementwise and linear algebra ----
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a * s where s is a 1x1 Var.
Var scale_by(Var a, Var s);
/// Adds a 1 x C row to every row of a.
Var add_row(Var a, Var row);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
/// Row-wise layer normalization with 1 x C gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Multiplies by a constant mask scaled by 1/(1-rate); identity when rate == 0.
Var dropout(Var x, double rate, Rng& rng);
/// Value copy with no gradient path (stop-gradient).
Var detach(Var a);
/// Takes the value of `replacement` and passes gradients to `a` unchanged
/// (straight-through estimator); `replacement` receives none.
Var straight_through(Var a, Var replacement);

// ---- shape ----
Var slice_rows(Var a, long start, long count);
Var slice_cols(Var a, long start, long count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
/// Repeats each row `factor` times and keeps the first `total` rows.
Var repeat_rows(Var a, int factor, long total);
/// Row-major reinterpretation to rows x cols (same element count).
Var reshape(Var a, long rows, long cols);
/// Row i of the result is row idx[i] of a.
Var gather_rows(Var a, const std::vector<int>& idx);
/// Unfolds a (T x C) into windows: row t holds rows t*stride - pad_left ..
/// + kernel - 1 concatenated (zeros outside), giving T_out x (kernel*C).
Var im2col(Var a, int kernel, int stride, int pad_left, int pad_right);

// ---- reductions / losses (all return 1x1) ----
Var sum_all(Var a);
Var sum_abs(Var a);
Var sum_squares(Var a);
/// sum of w_ij * BCE(sigmoid(logit_ij), label_ij), with w = pos_weight where label = 1.
Var bce_with_logits_sum(Var logits, const Matrix& labels, double pos_weight);
/// sum over rows of -log softmax(logits)[label].
Var cross_entropy_sum(Var logits, const std::vector<int>& labels);

}  // namespace dvc::ag
