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

#include "dvc/nn.hpp"

#include <cmath>

#include "dvc/error.hpp"

namespace dvc::nn {

Linear Linear::make(ParamStore& ps, const std::string& name, long in, long out, Rng& rng,
                    bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (long i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  l.weight = ps.add(name + ".weight", std::move(w));
  if (with_bias) l.bias = ps.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& t, Var x) const {
  if (x.cols() != in)
    throw PreconditionError("linear layer expects " + std::to_string(in) + " inputs, got " +
                            std::to_string(x.cols()));
  Var y = ag::matmul(x, t.param(weight));
  return bias >= 0 ? ag::add_row(y, t.param(bias)) : y;
}

LayerNorm LayerNorm::make(ParamStore& ps, const std::string& name, long dim) {
  LayerNorm n;
  n.gain = ps.add(name + ".gain", Matrix::Ones(1, dim));
  n.bias = ps.add(name + ".bias", Matrix::Zero(1, dim));
  return n;
}

Var LayerNorm::operator()(Tape& t, Var x) const {
  return ag::layer_norm(x, t.param(gain), t.param(bias));
}

Conv1d Conv1d::make(ParamStore& ps, const std::string& name, long in, long out, int kernel,
                    Rng& rng, int stride, Padding padding) {
  if (kernel < 1 || stride < 1) throw PreconditionError("conv1d: bad kernel/stride");
  Conv1d c;
  c.proj = Linear::make(ps, name, kernel * in, out, rng);
  c.kernel = kernel;
  c.stride = stride;
  c.padding = padding;
  return c;
}

long Conv1d::out_frames(long frames) const { return (frames - 1) / stride + 1; }

Var Conv1d::operator()(Tape& t, Var x) const {
  int left = 0, right = 0;
  if (padding == Padding::causal) {
    left = kernel - 1;
  } else {
    left = (kernel - 1) / 2;
    right = kernel - 1 - left;
  }
  // Extra right padding so strided outputs cover every input frame.
  const long needed = (out_frames(x.rows()) - 1) * stride + kernel;
  const long have = x.rows() + left + right;
  if (needed > have) right += static_cast<int>(needed - have);
  return proj(t, ag::im2col(x, kernel, stride, left, right));
}

FeedForward FeedForward::make(ParamStore& ps, const std::string& name, long dim, long hidden,
                              Rng& rng) {
  return {Linear::make(ps, name + ".up", dim, hidden, rng),
          Linear::make(ps, name + ".down", hidden, dim, rng)};
}

Var FeedForward::operator()(Tape& t, Var x) const { return down(t, ag::relu(up(t, x))); }

MultiHeadAttention MultiHeadAttention::make(ParamStore& ps, const std::string& name, long dim,
                                            int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0)
    throw PreconditionError("attention width " + std::to_string(dim) +
                            " is not divisible by head count " + std::to_string(heads));
  MultiHeadAttention a;
  a.q = Linear::make(ps, name + ".q", dim, dim, rng);
  a.k = Linear::make(ps, name + ".k", dim, dim, rng);
  a.v = Linear::make(ps, name + ".v", dim, dim, rng);
  a.o = Linear::make(ps, name + ".o", dim, dim, rng);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(Tape& t, Var query, Var memory, const Matrix& mask,
                                   std::vector<Matrix>* weights) const {
  return attend(t, q(t, query), k(t, memory), v(t, memory), mask, weights);
}

Var MultiHeadAttention::attend(Tape& t, Var qs, Var ks, Var vs, const Matrix& mask,
                               std::vector<Matrix>* weights) const {
  const long dk = q.out / heads;
  const bool masked = mask.size() > 0;
  if (masked && (mask.rows() != qs.rows() || mask.cols() != ks.rows()))
    throw PreconditionError("attention mask shape mismatch");
  const Var mask_var = masked ? t.constant(mask) : Var{};
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = ag::slice_cols(qs, h * dk, dk);
    const Var kh = ag::slice_cols(ks, h * dk, dk);
    const Var vh = ag::slice_cols(vs, h * dk, dk);
    Var scores = ag::scale(ag::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dk)));
    if (masked) scores = ag::add(scores, mask_var);
    const Var attn = ag::softmax_rows(scores);
    if (weights) weights->push_back(attn.value());
    outs.push_back(ag::matmul(attn, vh));
  }
  return o(t, heads == 1 ? outs.front() : ag::concat_cols(outs));
}

Matrix causal_mask(long frames) {
  Matrix m = Matrix::Zero(frames, frames);
  for (long i = 0; i < frames; ++i)
    for (long j = i + 1; j < frames; ++j) m(i, j) = -1e9;
  return m;
}

Matrix positional_encoding(long frames, long dim) {
  Matrix pe(frames, dim);
  for (long p = 0; p < frames; ++p)
    for (long i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(p, i) = i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate);
    }
  return pe;
}

Adam::Adam(const ParamStore& ps, AdamConfig cfg)
    : cfg_(cfg), m_(ps.zeros_like()), v_(ps.zeros_like()) {}

double Adam::current_lr() const {
  if (cfg_.warmup_steps <= 0) return cfg_.lr;
  return cfg_.lr * std::min(1.0, static_cast<double>(steps_ + 1) / cfg_.warmup_steps);
}

double Adam::step(ParamStore& ps, std::vector<Matrix>& grads) {
  if (static_cast<int>(grads.size()) != ps.size() || m_.size() != grads.size())
    throw PreconditionError("optimizer/parameter count mismatch");
  double sq = 0.0;
  for (const auto& g : grads)
    if (g.size() > 0) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip = cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
  const double lr = current_lr();
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (int i = 0; i < ps.size(); ++i) {
    if (grads[i].size() == 0) continue;
    const Matrix g = grads[i] * clip;
    m_[i] = (cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g).cast<float>().cast<double>();
    v_[i] = (cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2()).cast<float>().cast<double>();
    Matrix& p = ps.value(i);
    p.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
  ps.round_to_float();
  return norm;
}

}  // namespace dvc::nn
