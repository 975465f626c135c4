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

// Layers built on the autograd tape. A layer only holds parameter ids; the
// values live in a ParamStore so a whole model can be checkpointed by name.

#pragma once

#include <string>
#include <vector>

#include "dvc/autograd.hpp"
#include "dvc/rng.hpp"

namespace dvc::nn {

using ag::ParamStore;
using ag::Tape;
using ag::Var;

struct Linear {
  int weight = -1;  // in x out
  int bias = -1;    // 1 x out, -1 when disabled
  long in = 0, out = 0;

  static Linear make(ParamStore& ps, const std::string& name, long in, long out, Rng& rng,
                     bool with_bias = true);
  Var operator()(Tape& t, Var x) const;
};

struct LayerNorm {
  int gain = -1, bias = -1;

  static LayerNorm make(ParamStore& ps, const std::string& name, long dim);
  Var operator()(Tape& t, Var x) const;
};

enum class Padding { same, causal };

/// 1-D convolution over the time axis of a (T x C) input.
struct Conv1d {
  Linear proj;  // (kernel*in) x out
  int kernel = 1, stride = 1;
  Padding padding = Padding::same;

  static Conv1d make(ParamStore& ps, const std::string& name, long in, long out, int kernel,
                     Rng& rng, int stride = 1, Padding padding = Padding::same);
  Var operator()(Tape& t, Var x) const;
  /// Output frame count for an input of T frames.
  long out_frames(long frames) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward make(ParamStore& ps, const std::string& name, long dim, long hidden,
                          Rng& rng);
  Var operator()(Tape& t, Var x) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention make(ParamStore& ps, const std::string& name, long dim, int heads,
                                 Rng& rng);
  /// `mask` (Tq x Tk) is added to the scores; pass an empty matrix for none.
  /// When `weights` is non-null the per-head attention maps are appended.
  Var operator()(Tape& t, Var query, Var memory, const Matrix& mask,
                 std::vector<Matrix>* weights = nullptr) const;
  /// Same computation on already projected queries, keys and values.
  Var attend(Tape& t, Var qs, Var ks, Var vs, const Matrix& mask,
             std::vector<Matrix>* weights = nullptr) const;
};

/// Additive mask blocking key j > query i.
Matrix causal_mask(long frames);

/// Standard sinusoidal table, T x dim.
Matrix positional_encoding(long frames, long dim);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  int warmup_steps = 400;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// Adam with linear warmup and global-norm clipping. Parameters and moments
/// are rounded to float32 after every step so a checkpoint holds the exact
/// training state.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& ps, AdamConfig cfg);

  /// Applies one update and returns the pre-clip gradient norm.
  double step(ParamStore& ps, std::vector<Matrix>& grads);
  long steps() const { return steps_; }
  double current_lr() const;
  const AdamConfig& config() const { return cfg_; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(long s) { steps_ = s; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long steps_ = 0;
};

}  // namespace dvc::nn
