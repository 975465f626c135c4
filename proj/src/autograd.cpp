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

#include "dvc/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "dvc/error.hpp"

namespace dvc::ag {

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(const std::string& name, Matrix init) {
  if (index_.contains(name)) throw PreconditionError("duplicate parameter name " + name);
  const int id = static_cast<int>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(init));
  index_.emplace(name, id);
  return id;
}

int ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::vector<Matrix> ParamStore::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(Matrix::Zero(v.rows(), v.cols()));
  return out;
}

long ParamStore::num_scalars() const {
  long n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

void ParamStore::round_to_float() {
  for (auto& v : values_)
    v = v.cast<float>().cast<double>();
}

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const { return tape->value(id); }

Tape::Tape(const ParamStore& params, bool record) : params_(&params), record_(record) {
  nodes_.reserve(256);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(int id) {
  if (id < 0 || id >= params_->size()) throw PreconditionError("unknown parameter id");
  const auto it = param_nodes_.find(id);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = params_->value(id);
  n.param = id;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  const int node = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(id, node);
  return {this, node};
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::push(Matrix value, std::initializer_list<int> parents, Backward backward) {
  return push(std::move(value), std::vector<int>(parents), std::move(backward));
}

Var Tape::push(Matrix value, const std::vector<int>& parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (int p : parents)
      if (nodes_[p].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (!record_) throw PreconditionError("backward on a non-recording tape");
  if (loss.tape != this) throw PreconditionError("loss belongs to another tape");
  if (value(loss.id).rows() != 1 || value(loss.id).cols() != 1)
    throw PreconditionError("backward needs a 1x1 loss");
  grad(loss.id)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() > 0) n.backward(*this, i);
  }
}

std::vector<Matrix> Tape::param_grads() const {
  std::vector<Matrix> out(static_cast<std::size_t>(params_->size()));
  for (const auto& [pid, node] : param_nodes_)
    if (nodes_[node].grad.size() > 0) out[pid] = nodes_[node].grad;
  return out;
}

void Tape::accumulate_param_grads(std::vector<Matrix>& into) const {
  for (const auto& [pid, node] : param_nodes_)
    if (nodes_[node].grad.size() > 0) into[pid] += nodes_[node].grad;
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void check_same(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw PreconditionError(std::string(op) + ": operands on different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw PreconditionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
}

Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw PreconditionError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                            std::to_string(b.rows()) + " differ");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw PreconditionError("matmul_nt: column counts differ");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value().transpose(), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
    if (t.requires_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
  });
}

Var transpose(Var a) {
  const int ia = a.id;
  return a.tape->push(a.value().transpose(), {ia}, [ia](Tape& t, int self) {
    t.grad(ia) += t.grad(self).transpose();
  });
}

Var add(Var a, Var b) {
  check_same(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g;
  });
}

Var sub(Var a, Var b) {
  check_same(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  check_same(a, b, "mul");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var scale(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value() * s, {ia}, [ia, s](Tape& t, int self) {
    t.grad(ia) += t.grad(self) * s;
  });
}

Var scale_by(Var a, Var s) {
  if (s.rows() != 1 || s.cols() != 1) throw PreconditionError("scale_by needs a 1x1 factor");
  const int ia = a.id, is = s.id;
  return a.tape->push(a.value() * s.scalar(), {ia, is}, [ia, is](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g * t.value(is)(0, 0);
    if (t.requires_grad(is)) t.grad(is)(0, 0) += g.cwiseProduct(t.value(ia)).sum();
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw PreconditionError("add_row: expected a 1x" + std::to_string(a.cols()) + " row");
  const int ia = a.id, ir = row.id;
  Matrix v = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(v), {ia, ir}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

Var relu(Var a) {
  const int ia = a.id;
  return a.tape->push(a.value().cwiseMax(0.0), {ia}, [ia](Tape& t, int self) {
    t.grad(ia) += (t.value(ia).array() > 0.0).cast<double>().matrix().cwiseProduct(t.grad(self));
  });
}

Var tanh(Var a) {
  const int ia = a.id;
  return a.tape->push(a.value().array().tanh().matrix(), {ia}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia) += (t.grad(self).array() * (1.0 - y.array().square())).matrix();
  });
}

Var sigmoid(Var a) {
  const int ia = a.id;
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape->push(std::move(y), {ia}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia) += (t.grad(self).array() * y.array() * (1.0 - y.array())).matrix();
  });
}

Var softmax_rows(Var a) {
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return a.tape->push(std::move(y), {ia}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    t.grad(ia) += (y.array() * (g.colwise() - dot).array()).matrix();
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const long c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
    throw PreconditionError("layer_norm: gain/bias must be 1x" + std::to_string(c));
  const Matrix& v = x.value();
  Matrix xhat(v.rows(), c);
  Eigen::VectorXd inv_sigma(v.rows());
  for (long r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    inv_sigma(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_sigma(r);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix().rowwise() +
             bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(std::move(y), {ix, ig, ib},
                      [ix, ig, ib, xhat = std::move(xhat), inv_sigma](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        if (t.requires_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
                        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
                        if (!t.requires_grad(ix)) return;
                        const Matrix dxhat =
                            (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                        const double n = static_cast<double>(dxhat.cols());
                        Matrix& gx = t.grad(ix);
                        for (long r = 0; r < dxhat.rows(); ++r) {
                          const double m1 = dxhat.row(r).sum() / n;
                          const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                          gx.row(r).array() += inv_sigma(r) * (dxhat.row(r).array() - m1 -
                                                               xhat.row(r).array() * m2);
                        }
                      });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw PreconditionError("dropout rate must be < 1");
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (long i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep;
  return mul(x, x.tape->constant(std::move(mask)));
}

Var detach(Var a) { return a.tape->constant(a.value()); }

Var straight_through(Var a, Var replacement) {
  check_same(a, replacement, "straight_through");
  const int ia = a.id;
  return a.tape->push(replacement.value(), {ia}, [ia](Tape& t, int self) {
    t.grad(ia) += t.grad(self);
  });
}

Var slice_rows(Var a, long start, long count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw PreconditionError("slice_rows out of range");
  const int ia = a.id;
  return a.tape->push(a.value().middleRows(start, count), {ia},
                      [ia, start, count](Tape& t, int self) {
                        t.grad(ia).middleRows(start, count) += t.grad(self);
                      });
}

Var slice_cols(Var a, long start, long count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw PreconditionError("slice_cols out of range");
  const int ia = a.id;
  return a.tape->push(a.value().middleCols(start, count), {ia},
                      [ia, start, count](Tape& t, int self) {
                        t.grad(ia).middleCols(start, count) += t.grad(self);
                      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw PreconditionError("concat_rows of nothing");
  const long cols = parts.front().cols();
  long rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw PreconditionError("concat_rows: column mismatch");
    rows += p.rows();
    ids.push_back(p.id);
  }
  Matrix v(rows, cols);
  long at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape->push(std::move(v), ids, [ids](Tape& t, int self) {
    long at = 0;
    for (int id : ids) {
      const long n = t.value(id).rows();
      if (t.requires_grad(id)) t.grad(id) += t.grad(self).middleRows(at, n);
      at += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw PreconditionError("concat_cols of nothing");
  const long rows = parts.front().rows();
  long cols = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw PreconditionError("concat_cols: row mismatch");
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix v(rows, cols);
  long at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape->push(std::move(v), ids, [ids](Tape& t, int self) {
    long at = 0;
    for (int id : ids) {
      const long n = t.value(id).cols();
      if (t.requires_grad(id)) t.grad(id) += t.grad(self).middleCols(at, n);
      at += n;
    }
  });
}

Var repeat_rows(Var a, int factor, long total) {
  if (factor < 1 || total < 0 || total > a.rows() * factor)
    throw PreconditionError("repeat_rows: bad factor/total");
  const int ia = a.id;
  Matrix v(total, a.cols());
  for (long r = 0; r < total; ++r) v.row(r) = a.value().row(r / factor);
  return a.tape->push(std::move(v), {ia}, [ia, factor](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (long r = 0; r < g.rows(); ++r) ga.row(r / factor) += g.row(r);
  });
}

Var reshape(Var a, long rows, long cols) {
  if (rows * cols != a.value().size()) throw PreconditionError("reshape: element count differs");
  const int ia = a.id;
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape->push(std::move(v), {ia}, [ia](Tape& t, int self) {
    Matrix& ga = t.grad(ia);
    ga += Eigen::Map<const Matrix>(t.grad(self).data(), ga.rows(), ga.cols());
  });
}

Var gather_rows(Var a, const std::vector<int>& idx) {
  Matrix v(static_cast<long>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw PreconditionError("gather_rows index out of range");
    v.row(static_cast<long>(i)) = a.value().row(idx[i]);
  }
  const int ia = a.id;
  return a.tape->push(std::move(v), {ia}, [ia, idx](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<long>(i));
  });
}

Var im2col(Var a, int kernel, int stride, int pad_left, int pad_right) {
  if (kernel < 1 || stride < 1 || pad_left < 0 || pad_right < 0)
    throw PreconditionError("im2col: bad geometry");
  const long t_in = a.rows(), c = a.cols();
  const long span = t_in + pad_left + pad_right - kernel;
  if (span < 0) throw PreconditionError("im2col: input shorter than kernel");
  const long t_out = span / stride + 1;
  Matrix v = Matrix::Zero(t_out, kernel * c);
  const Matrix& x = a.value();
  for (long t = 0; t < t_out; ++t)
    for (int k = 0; k < kernel; ++k) {
      const long src = t * stride - pad_left + k;
      if (src >= 0 && src < t_in) v.block(t, k * c, 1, c) = x.row(src);
    }
  const int ia = a.id;
  return a.tape->push(std::move(v), {ia},
                      [ia, kernel, stride, pad_left, t_in, c](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        Matrix& ga = t.grad(ia);
                        for (long r = 0; r < g.rows(); ++r)
                          for (int k = 0; k < kernel; ++k) {
                            const long src = r * stride - pad_left + k;
                            if (src >= 0 && src < t_in) ga.row(src) += g.block(r, k * c, 1, c);
                          }
                      });
}

Var sum_all(Var a) {
  const int ia = a.id;
  return a.tape->push(scalar_matrix(a.value().sum()), {ia}, [ia](Tape& t, int self) {
    t.grad(ia).array() += t.grad(self)(0, 0);
  });
}

Var sum_abs(Var a) {
  const int ia = a.id;
  return a.tape->push(scalar_matrix(a.value().cwiseAbs().sum()), {ia}, [ia](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    t.grad(ia) += (t.value(ia).array().sign() * g).matrix();
  });
}

Var sum_squares(Var a) {
  const int ia = a.id;
  return a.tape->push(scalar_matrix(a.value().squaredNorm()), {ia}, [ia](Tape& t, int self) {
    t.grad(ia) += t.value(ia) * (2.0 * t.grad(self)(0, 0));
  });
}

Var bce_with_logits_sum(Var logits, const Matrix& labels, double pos_weight) {
  if (labels.rows() != logits.rows() || labels.cols() != logits.cols())
    throw PreconditionError("bce_with_logits_sum: label shape mismatch");
  const Matrix& x = logits.value();
  double total = 0.0;
  for (long i = 0; i < x.size(); ++i) {
    const double z = x.data()[i], y = labels.data()[i];
    total += pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z);
  }
  const int il = logits.id;
  return logits.tape->push(scalar_matrix(total), {il}, [il, labels, pos_weight](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    const Matrix& x = t.value(il);
    Matrix& gx = t.grad(il);
    for (long i = 0; i < x.size(); ++i) {
      const double z = x.data()[i], y = labels.data()[i];
      const double s = 1.0 / (1.0 + std::exp(-z));
      gx.data()[i] += g * (pos_weight * y * (s - 1.0) + (1.0 - y) * s);
    }
  });
}

Var cross_entropy_sum(Var logits, const std::vector<int>& labels) {
  const Matrix& x = logits.value();
  if (static_cast<long>(labels.size()) != x.rows())
    throw PreconditionError("cross_entropy_sum: one label per row required");
  Matrix prob(x.rows(), x.cols());
  double total = 0.0;
  for (long r = 0; r < x.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= x.cols()) throw PreconditionError("cross_entropy_sum: label out of range");
    const double m = x.row(r).maxCoeff();
    prob.row(r) = (x.row(r).array() - m).exp().matrix();
    const double z = prob.row(r).sum();
    prob.row(r) /= z;
    total += std::log(z) + m - x(r, y);
  }
  const int il = logits.id;
  return logits.tape->push(scalar_matrix(total), {il},
                           [il, labels, prob = std::move(prob)](Tape& t, int self) {
                             const double g = t.grad(self)(0, 0);
                             Matrix d = prob;
                             for (long r = 0; r < d.rows(); ++r)
                               d(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
                             t.grad(il) += d * g;
                           });
}

}  // namespace dvc::ag
