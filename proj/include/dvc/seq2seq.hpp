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

// Transformer encoder-decoder mel converter (stage 1). The decoder emits r
// frames per step from the last frame of the previous step; a causal conv
// postnet refines the frames and a per-step logit predicts the end.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dvc/autograd.hpp"
#include "dvc/checkpoint.hpp"
#include "dvc/corpus.hpp"
#include "dvc/dsp.hpp"
#include "dvc/nn.hpp"

namespace dvc {

struct S2SConfig {
  int n_bands = kMelBands;
  int d_model = 256;
  int n_heads = 4;
  int enc_layers = 4;
  int dec_layers = 4;
  int ff_dim = 1024;
  double dropout = 0.1;
  int reduction = 2;
  std::vector<int> prenet_dims{256, 256};
  double prenet_dropout = 0.5;
  int postnet_layers = 5;
  int postnet_channels = 256;
  int postnet_kernel = 5;
  int max_decode_frames = 1200;
  double stop_threshold = 0.5;
  double stop_pos_weight = 5.0;
  double lr = 1e-4;
  int warmup_steps = 400;
  double clip_norm = 1.0;
  int batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  /// Unknown keys are errors; absent keys keep their defaults.
  static S2SConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// Padded batch. Frames beyond an item's length are zero and never read.
struct S2SBatch {
  std::vector<Matrix> source;  // each Ts_max x B, source-speaker normalized
  std::vector<Matrix> target;  // each Tt_max x B, target-speaker normalized
  std::vector<long> source_lengths;
  std::vector<long> target_lengths;
  Matrix stop_labels;  // N x ceil(Tt_max / r); 1 from the step holding the last frame

  std::size_t size() const { return source.size(); }
  static S2SBatch make(const std::vector<Matrix>& sources, const std::vector<Matrix>& targets,
                       int reduction);
  /// Same items with `extra` more zero frames of padding on both sides.
  S2SBatch padded(long extra_source, long extra_target, int reduction) const;
};

struct S2SOutput {
  std::vector<Matrix> mel_pre;   // each Tt_max x B (zeros in padding)
  std::vector<Matrix> mel_post;  // each Tt_max x B
  Matrix stop_logits;            // N x ceil(Tt_max / r)
};

struct S2SLoss {
  double total = 0.0;
  double mel_pre = 0.0;
  double mel_post = 0.0;
  double stop = 0.0;
};

struct S2SConversion {
  Matrix mel;  // target-speaker normalized
  bool truncated = false;
  long steps = 0;
  /// Cross-attention maps (steps x Ts) of the final pass, layer-major then head.
  std::vector<Matrix> attention;
};

class S2SModel {
 public:
  explicit S2SModel(const S2SConfig& cfg);

  const S2SConfig& config() const { return cfg_; }
  ag::ParamStore& params() { return ps_; }
  const ag::ParamStore& params() const { return ps_; }

  /// Encoder memory for one unpadded source.
  ag::Var encode(ag::Tape& t, const Matrix& source, Rng* dropout_rng) const;
  struct DecoderOut {
    ag::Var pre;   // (steps*r) x B
    ag::Var stop;  // steps x 1
  };
  /// Decoder over `inputs` (steps x B): row s is the frame fed at step s.
  DecoderOut decode(ag::Tape& t, ag::Var memory, const Matrix& inputs, Rng* dropout_rng,
                    std::vector<Matrix>* attention) const;
  ag::Var postnet(ag::Tape& t, ag::Var pre, Rng* dropout_rng) const;

  /// Incremental inference state: projected cross-attention memory and the
  /// self-attention keys/values of every step decoded so far.
  struct DecoderCache {
    std::vector<Matrix> cross_k, cross_v, self_k, self_v;
    long steps = 0;
  };
  DecoderCache start_decoding(const Matrix& memory) const;
  struct StepOut {
    Matrix pre;  // r x B
    double stop_logit = 0.0;
  };
  /// Decoder output for the next step given its input frame; equal to row
  /// `cache.steps` of `decode` over all inputs fed so far. Cross-attention
  /// rows are appended to `attention` (layer-major, then head) when non-null.
  StepOut decode_step(DecoderCache& cache, const Matrix& input,
                      std::vector<Matrix>* attention) const;

 private:
  struct EncoderLayer {
    nn::LayerNorm ln1, ln2;
    nn::MultiHeadAttention attn;
    nn::FeedForward ff;
  };
  struct DecoderLayer {
    nn::LayerNorm ln1, ln2, ln3;
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::FeedForward ff;
  };

  S2SConfig cfg_;
  ag::ParamStore ps_;
  nn::Linear enc_prenet_;
  int enc_alpha_ = -1;
  std::vector<EncoderLayer> enc_;
  nn::LayerNorm enc_norm_;
  std::vector<nn::Linear> dec_prenet_;
  nn::Linear dec_proj_;
  int dec_alpha_ = -1;
  std::vector<DecoderLayer> dec_;
  nn::LayerNorm dec_norm_;
  nn::Linear mel_out_, stop_out_;
  std::vector<nn::Conv1d> post_;
};

/// Decoder input rows for a target of Tt frames: zeros, then frame s*r - 1.
Matrix decoder_inputs(const Matrix& target, long target_frames, int reduction);
long decoder_steps(long target_frames, int reduction);

S2SOutput s2s_forward_teacher_forced(const S2SModel& model, const S2SBatch& batch);
S2SLoss s2s_loss(const S2SOutput& out, const S2SBatch& batch, const S2SConfig& cfg);
/// Loss and d(loss)/d(param) with dropout off when `dropout_seed` is 0.
S2SLoss s2s_loss_and_grad(const S2SModel& model, const S2SBatch& batch,
                          std::vector<Matrix>& grads, std::uint64_t dropout_seed = 0);

S2SConversion s2s_convert(const S2SModel& model, const Matrix& source);

struct S2SExample {
  Matrix source;
  Matrix target;
};

struct TrainOptions {
  long steps = 1000;
  long save_interval = 0;  // 0 = only the final checkpoint
  std::filesystem::path out;  // checkpoint path; empty = keep in memory
  std::function<void(long step, double loss)> on_step;
};

/// Mutable training state that round-trips through a checkpoint.
struct S2SState {
  S2SModel model;
  nn::Adam opt;
  long step = 0;
  std::string phase;   // "pretrain" or "finetune"
  std::string target;  // speaker the outputs are normalized for
  std::vector<FeatureStats> stats;
  std::vector<double> losses;

  explicit S2SState(const S2SConfig& cfg);
  Checkpoint to_checkpoint() const;
  static S2SState from_checkpoint(const Checkpoint& ckpt);
  const FeatureStats& stats_for(const std::string& speaker) const;
};

/// Runs `opt.steps` further updates. Batch k draws items with an RNG seeded
/// from (seed, k), so resuming at any step reproduces an uninterrupted run.
void s2s_train(S2SState& state, const std::vector<S2SExample>& data, const TrainOptions& opt);

/// Autoencoding warm start on one speaker's train utterances.
S2SState s2s_pretrain(const CorpusIndex& index, const std::string& speaker,
                      const S2SConfig& cfg, const TrainOptions& opt);

/// Many-to-one training from a pretrained state. Every pair must share one target.
S2SState s2s_finetune(const Checkpoint& pretrained, const CorpusIndex& index,
                      const std::vector<UtterancePair>& pairs, const TrainOptions& opt);

}  // namespace dvc
