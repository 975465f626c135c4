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

// Length-preserving VQVAE converter (stage 2). A conv encoder feeds one
// quantized stream per level (level l runs at stride 2^l); the decoder
// upsamples every stream back to T frames and is conditioned on a speaker
// embedding at each layer.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dvc/autograd.hpp"
#include "dvc/checkpoint.hpp"
#include "dvc/corpus.hpp"
#include "dvc/dsp.hpp"
#include "dvc/nn.hpp"
#include "dvc/seq2seq.hpp"

namespace dvc {

struct VAEConfig {
  int n_bands = kMelBands;
  std::vector<int> enc_channels{128, 128};
  int latent_dim = 64;
  int levels = 2;
  int codebook_size = 128;
  double beta = 0.25;
  double lambda_cyc = 1.0;
  double lambda_adv = 0.1;
  long adv_start = 5000;
  int speaker_dim = 32;
  int dec_channels = 128;
  int dec_layers = 3;
  int kernel = 5;
  int disc_channels = 64;
  double lr = 2e-4;
  double disc_lr = 2e-4;
  int warmup_steps = 0;
  double clip_norm = 1.0;
  int batch_size = 8;
  int segment_frames = 48;
  std::uint64_t seed = 2;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static VAEConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct VQResult {
  std::vector<int> indices;
  Matrix quantized;
  double codebook_loss = 0.0;    // mean ||sg(z) - e||^2
  double commitment_loss = 0.0;  // beta * mean ||z - sg(e)||^2
};

/// Nearest codeword per row (squared Euclidean, lowest index on ties).
VQResult vq_quantize(const Matrix& z, const Matrix& codebook, double beta);

struct VQVars {
  std::vector<int> indices;
  ag::Var quantized;  // codeword values, straight-through gradient to z
  ag::Var codebook_loss;
  ag::Var commitment_loss;
};
VQVars vq_quantize(ag::Tape& t, ag::Var z, ag::Var codebook, double beta);

class VAEModel {
 public:
  VAEModel(const VAEConfig& cfg, std::vector<std::string> speakers);

  const VAEConfig& config() const { return cfg_; }
  ag::ParamStore& params() { return ps_; }
  const ag::ParamStore& params() const { return ps_; }
  const std::vector<std::string>& speakers() const { return speakers_; }
  /// Throws PreconditionError for a speaker outside the embedding table.
  int speaker_index(const std::string& id) const;

  /// One latent stream per level; level l has ceil(T / 2^l) rows.
  std::vector<ag::Var> encode(ag::Tape& t, ag::Var x) const;
  std::vector<VQVars> quantize(ag::Tape& t, const std::vector<ag::Var>& z) const;
  ag::Var decode(ag::Tape& t, const std::vector<ag::Var>& q, int speaker, long frames) const;
  int codebook_param(int level) const { return codebooks_[level]; }

 private:
  VAEConfig cfg_;
  std::vector<std::string> speakers_;
  ag::ParamStore ps_;
  std::vector<nn::Conv1d> trunk_;
  std::vector<nn::Conv1d> heads_;
  std::vector<int> codebooks_;
  int speaker_table_ = -1;
  std::vector<nn::Conv1d> dec_;
};

/// Frame classifier over S speakers plus one "converted" class (index S).
class Discriminator {
 public:
  Discriminator(const VAEConfig& cfg, int n_speakers);

  ag::ParamStore& params() { return ps_; }
  const ag::ParamStore& params() const { return ps_; }
  int fake_class() const { return n_speakers_; }
  /// Per-frame logits (T x S+1). With `frozen`, weights enter `t` as constants
  /// so gradients reach only the input.
  ag::Var operator()(ag::Tape& t, ag::Var x, bool frozen) const;

 private:
  struct Layer {
    int weight, bias, kernel;
  };
  int n_speakers_;
  ag::ParamStore ps_;
  std::vector<Layer> layers_;
};

struct VAEForward {
  Matrix recon;
  std::vector<std::vector<int>> indices;
  double recon_loss = 0.0;
  double vq_loss = 0.0;
  double total = 0.0;
};

VAEForward vae_forward(const VAEModel& model, const Matrix& mel, const std::string& speaker);
/// recon + vq loss and its parameter gradient for one utterance.
double vae_loss_and_grad(const VAEModel& model, const Matrix& mel, const std::string& speaker,
                         std::vector<Matrix>& grads);
double vae_cyclic_loss(const VAEModel& model, const Matrix& mel, const std::string& speaker_a,
                       const std::string& speaker_b);
/// Output has exactly mel.rows() frames.
Matrix vae_convert(const VAEModel& model, const Matrix& mel, const std::string& target_speaker);
/// Codeword hit counts per level over `mels`.
std::vector<std::vector<long>> codebook_usage(const VAEModel& model,
                                              const std::vector<Matrix>& mels);

struct VAEItem {
  Matrix mel;
  int speaker = 0;
  int other = 0;  // conversion target for the cyclic/adversarial terms
};

struct VAEStepLosses {
  double total = 0.0;
  double recon = 0.0;
  double vq = 0.0;
  double cyclic = 0.0;
  double adv = 0.0;
  double disc = 0.0;
};

struct VAEGradients {
  std::vector<Matrix> generator;
  std::vector<Matrix> discriminator;
};

/// Generator and discriminator losses and gradients for one batch. The
/// discriminator sees detached generator output; the generator sees a frozen
/// discriminator. `adversarial` switches both adversarial terms.
VAEStepLosses vae_batch_grads(const VAEModel& model, const Discriminator& disc,
                              const std::vector<VAEItem>& batch, bool adversarial,
                              VAEGradients& grads);

struct VAEState {
  VAEModel model;
  Discriminator disc;
  nn::Adam opt, disc_opt;
  long step = 0;
  std::vector<FeatureStats> stats;
  std::vector<double> losses;

  VAEState(const VAEConfig& cfg, std::vector<std::string> speakers);
  Checkpoint to_checkpoint() const;
  static VAEState from_checkpoint(const Checkpoint& ckpt);
  const FeatureStats& stats_for(const std::string& speaker) const;
};

/// One alternating update: discriminator first (when adversarial), then generator.
VAEStepLosses vae_adversarial_step(VAEState& state, const std::vector<VAEItem>& batch,
                                   bool adversarial);

/// Batch for step k: random crops drawn with an RNG seeded from (seed, k).
std::vector<VAEItem> vae_sample_batch(const VAEState& state,
                                      const std::vector<std::vector<Matrix>>& per_speaker,
                                      long step);

void vae_train_steps(VAEState& state, const std::vector<std::vector<Matrix>>& per_speaker,
                     const TrainOptions& opt);

/// Trains on the train split of `speakers`, all of which must be normal.
VAEState vae_train(const CorpusIndex& index, const std::vector<std::string>& speakers,
                   const VAEConfig& cfg, const TrainOptions& opt);

/// Normalized train mels per speaker, in model speaker order.
std::vector<std::vector<Matrix>> vae_training_data(const CorpusIndex& index,
                                                   const VAEState& state);

}  // namespace dvc
