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

#include "dvc/framewise.hpp"

#include <algorithm>
#include <cmath>

#include "dvc/error.hpp"
#include "dvc/kernels.hpp"
#include "dvc/kv.hpp"

namespace dvc {

using ag::Tape;
using ag::Var;

// ---------------------------------------------------------------------------
// Config

void VAEConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("vae config: " + what);
  };
  need(n_bands >= 1, "n_bands must be >= 1");
  need(!enc_channels.empty(), "enc_channels must not be empty");
  for (int c : enc_channels) need(c >= 1, "enc_channels entries must be >= 1");
  need(latent_dim >= 1, "latent_dim must be >= 1");
  need(levels >= 1, "levels must be >= 1");
  need(codebook_size >= 2, "codebook_size must be >= 2");
  need(beta >= 0 && lambda_cyc >= 0 && lambda_adv >= 0, "loss weights must be >= 0");
  need(adv_start >= 0, "adv_start must be >= 0");
  need(speaker_dim >= 1 && dec_channels >= 1 && dec_layers >= 1, "decoder sizes must be >= 1");
  need(kernel >= 1 && disc_channels >= 1, "kernel and disc_channels must be >= 1");
  need(lr > 0 && disc_lr > 0, "learning rates must be > 0");
  need(batch_size >= 1 && segment_frames >= 1, "batch_size and segment_frames must be >= 1");
}

std::map<std::string, std::string> VAEConfig::to_kv() const {
  return {{"n_bands", std::to_string(n_bands)},
          {"enc_channels", join(enc_channels)},
          {"latent_dim", std::to_string(latent_dim)},
          {"levels", std::to_string(levels)},
          {"codebook_size", std::to_string(codebook_size)},
          {"beta", format_double(beta)},
          {"lambda_cyc", format_double(lambda_cyc)},
          {"lambda_adv", format_double(lambda_adv)},
          {"adv_start", std::to_string(adv_start)},
          {"speaker_dim", std::to_string(speaker_dim)},
          {"dec_channels", std::to_string(dec_channels)},
          {"dec_layers", std::to_string(dec_layers)},
          {"kernel", std::to_string(kernel)},
          {"disc_channels", std::to_string(disc_channels)},
          {"lr", format_double(lr)},
          {"disc_lr", format_double(disc_lr)},
          {"warmup_steps", std::to_string(warmup_steps)},
          {"clip_norm", format_double(clip_norm)},
          {"batch_size", std::to_string(batch_size)},
          {"segment_frames", std::to_string(segment_frames)},
          {"seed", std::to_string(seed)}};
}

VAEConfig VAEConfig::from_kv(const std::map<std::string, std::string>& kv) {
  VAEConfig c;
  KvReader r(kv, "vae");
  r.read("n_bands", c.n_bands);
  r.read("enc_channels", c.enc_channels);
  r.read("latent_dim", c.latent_dim);
  r.read("levels", c.levels);
  r.read("codebook_size", c.codebook_size);
  r.read("beta", c.beta);
  r.read("lambda_cyc", c.lambda_cyc);
  r.read("lambda_adv", c.lambda_adv);
  r.read("adv_start", c.adv_start);
  r.read("speaker_dim", c.speaker_dim);
  r.read("dec_channels", c.dec_channels);
  r.read("dec_layers", c.dec_layers);
  r.read("kernel", c.kernel);
  r.read("disc_channels", c.disc_channels);
  r.read("lr", c.lr);
  r.read("disc_lr", c.disc_lr);
  r.read("warmup_steps", c.warmup_steps);
  r.read("clip_norm", c.clip_norm);
  r.read("batch_size", c.batch_size);
  r.read("segment_frames", c.segment_frames);
  r.read("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Quantization

VQResult vq_quantize(const Matrix& z, const Matrix& codebook, double beta) {
  if (z.cols() != codebook.cols())
    throw PreconditionError("vq_quantize: latent dim " + std::to_string(z.cols()) +
                            " vs codebook dim " + std::to_string(codebook.cols()));
  VQResult r;
  r.indices = kernels::nearest_rows(z, codebook, kernels::Exec::serial);
  r.quantized.resize(z.rows(), z.cols());
  for (long i = 0; i < z.rows(); ++i) r.quantized.row(i) = codebook.row(r.indices[i]);
  const double n = static_cast<double>(std::max<long>(1, z.size()));
  const double sq = (z - r.quantized).squaredNorm() / n;
  r.codebook_loss = sq;
  r.commitment_loss = beta * sq;
  return r;
}

VQVars vq_quantize(Tape&, Var z, Var codebook, double beta) {
  if (z.cols() != codebook.cols())
    throw PreconditionError("vq_quantize: latent dim " + std::to_string(z.cols()) +
                            " vs codebook dim " + std::to_string(codebook.cols()));
  VQVars v;
  v.indices = kernels::nearest_rows(z.value(), codebook.value(), kernels::Exec::serial);
  const Var e = ag::gather_rows(codebook, v.indices);
  const double inv_n = 1.0 / static_cast<double>(std::max<long>(1, z.value().size()));
  v.codebook_loss = ag::scale(ag::sum_squares(ag::sub(ag::detach(z), e)), inv_n);
  v.commitment_loss = ag::scale(ag::sum_squares(ag::sub(z, ag::detach(e))), beta * inv_n);
  v.quantized = ag::straight_through(z, e);
  return v;
}

// ---------------------------------------------------------------------------
// Model

namespace {

int level_stride(int level) { return 1 << level; }

}  // namespace

VAEModel::VAEModel(const VAEConfig& cfg, std::vector<std::string> speakers)
    : cfg_(cfg), speakers_(std::move(speakers)) {
  cfg_.validate();
  if (speakers_.empty()) throw PreconditionError("VAE needs at least one speaker");
  Rng rng(derive_seed({cfg.seed, 0x7AE}));
  long in = cfg.n_bands;
  for (std::size_t i = 0; i < cfg.enc_channels.size(); ++i) {
    trunk_.push_back(nn::Conv1d::make(ps_, "enc.trunk." + std::to_string(i), in,
                                      cfg.enc_channels[i], cfg.kernel, rng));
    in = cfg.enc_channels[i];
  }
  for (int l = 0; l < cfg.levels; ++l) {
    const int stride = level_stride(l);
    heads_.push_back(nn::Conv1d::make(ps_, "enc.level." + std::to_string(l), in, cfg.latent_dim,
                                      std::max(3, 2 * stride), rng, stride));
    Matrix book(cfg.codebook_size, cfg.latent_dim);
    for (long i = 0; i < book.size(); ++i) book.data()[i] = rng.normal() * 0.5;
    codebooks_.push_back(ps_.add("vq." + std::to_string(l) + ".codebook", std::move(book)));
  }
  Matrix table(static_cast<long>(speakers_.size()), cfg.speaker_dim);
  for (long i = 0; i < table.size(); ++i) table.data()[i] = rng.normal() * 0.1;
  speaker_table_ = ps_.add("spk.table", std::move(table));
  long dec_in = static_cast<long>(cfg.levels) * cfg.latent_dim;
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const long out = l + 1 == cfg.dec_layers ? cfg.n_bands : cfg.dec_channels;
    dec_.push_back(nn::Conv1d::make(ps_, "dec." + std::to_string(l), dec_in + cfg.speaker_dim,
                                    out, cfg.kernel, rng));
    dec_in = out;
  }
  ps_.round_to_float();
}

int VAEModel::speaker_index(const std::string& id) const {
  for (std::size_t i = 0; i < speakers_.size(); ++i)
    if (speakers_[i] == id) return static_cast<int>(i);
  throw PreconditionError("speaker " + id + " is not in the VAE speaker table");
}

std::vector<Var> VAEModel::encode(Tape& t, Var x) const {
  if (x.cols() != cfg_.n_bands)
    throw PreconditionError("VAE expects " + std::to_string(cfg_.n_bands) + " bands, got " +
                            std::to_string(x.cols()));
  if (x.rows() < 1) throw PreconditionError("VAE input is empty");
  Var h = x;
  for (const auto& c : trunk_) h = ag::relu(c(t, h));
  std::vector<Var> z;
  for (const auto& head : heads_) z.push_back(head(t, h));
  return z;
}

std::vector<VQVars> VAEModel::quantize(Tape& t, const std::vector<Var>& z) const {
  std::vector<VQVars> out;
  for (std::size_t l = 0; l < z.size(); ++l)
    out.push_back(vq_quantize(t, z[l], t.param(codebooks_[l]), cfg_.beta));
  return out;
}

Var VAEModel::decode(Tape& t, const std::vector<Var>& q, int speaker, long frames) const {
  if (speaker < 0 || speaker >= static_cast<int>(speakers_.size()))
    throw PreconditionError("speaker index out of range");
  std::vector<Var> streams;
  for (std::size_t l = 0; l < q.size(); ++l)
    streams.push_back(ag::repeat_rows(q[l], level_stride(static_cast<int>(l)), frames));
  const Var spk =
      ag::gather_rows(t.param(speaker_table_), std::vector<int>(static_cast<std::size_t>(frames), speaker));
  Var h = streams.size() == 1 ? streams.front() : ag::concat_cols(streams);
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    h = dec_[l](t, ag::concat_cols({h, spk}));
    if (l + 1 < dec_.size()) h = ag::relu(h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(const VAEConfig& cfg, int n_speakers) : n_speakers_(n_speakers) {
  Rng rng(derive_seed({cfg.seed, 0xD15C}));
  const int kernels[3] = {3, 3, 5};
  long in = cfg.n_bands;
  for (int l = 0; l < 3; ++l) {
    const long out = l == 2 ? n_speakers + 1 : cfg.disc_channels;
    const auto lin = nn::Linear::make(ps_, "disc." + std::to_string(l), kernels[l] * in, out, rng);
    layers_.push_back({lin.weight, lin.bias, kernels[l]});
    in = out;
  }
  ps_.round_to_float();
}

Var Discriminator::operator()(Tape& t, Var x, bool frozen) const {
  Var h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const Var w = frozen ? t.constant(ps_.value(L.weight)) : t.param(L.weight);
    const Var b = frozen ? t.constant(ps_.value(L.bias)) : t.param(L.bias);
    const int left = (L.kernel - 1) / 2;
    h = ag::add_row(ag::matmul(ag::im2col(h, L.kernel, 1, left, L.kernel - 1 - left), w), b);
    if (l + 1 < layers_.size()) h = ag::relu(h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Single-utterance operations

namespace {

struct Reconstruction {
  Var recon;
  std::vector<VQVars> vq;
  Var vq_loss;
};

Reconstruction reconstruct(Tape& t, const VAEModel& m, Var x, int speaker) {
  Reconstruction r;
  r.vq = m.quantize(t, m.encode(t, x));
  std::vector<Var> q;
  std::vector<Var> losses;
  for (const auto& v : r.vq) {
    q.push_back(v.quantized);
    losses.push_back(ag::add(v.codebook_loss, v.commitment_loss));
  }
  r.recon = m.decode(t, q, speaker, x.rows());
  r.vq_loss = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) r.vq_loss = ag::add(r.vq_loss, losses[i]);
  return r;
}

Var mean_abs_diff(Var a, Var b) {
  return ag::scale(ag::sum_abs(ag::sub(a, b)), 1.0 / static_cast<double>(a.value().size()));
}

Var cycle(Tape& t, const VAEModel& m, const Reconstruction& first, Var x, int a, int b) {
  std::vector<Var> q;
  for (const auto& v : first.vq) q.push_back(v.quantized);
  const Var xb = m.decode(t, q, b, x.rows());
  const Reconstruction back = reconstruct(t, m, xb, a);
  return mean_abs_diff(back.recon, x);
}

}  // namespace

VAEForward vae_forward(const VAEModel& model, const Matrix& mel, const std::string& speaker) {
  const int s = model.speaker_index(speaker);
  Tape t(model.params(), false);
  const Var x = t.constant(mel);
  const auto r = reconstruct(t, model, x, s);
  VAEForward out;
  out.recon = r.recon.value();
  for (const auto& v : r.vq) out.indices.push_back(v.indices);
  out.recon_loss = mean_abs_diff(r.recon, x).scalar();
  out.vq_loss = r.vq_loss.scalar();
  out.total = out.recon_loss + out.vq_loss;
  return out;
}

double vae_loss_and_grad(const VAEModel& model, const Matrix& mel, const std::string& speaker,
                         std::vector<Matrix>& grads) {
  const int s = model.speaker_index(speaker);
  Tape t(model.params(), true);
  const Var x = t.constant(mel);
  const auto r = reconstruct(t, model, x, s);
  const Var loss = ag::add(mean_abs_diff(r.recon, x), r.vq_loss);
  t.backward(loss);
  grads = model.params().zeros_like();
  t.accumulate_param_grads(grads);
  return loss.scalar();
}

double vae_cyclic_loss(const VAEModel& model, const Matrix& mel, const std::string& speaker_a,
                       const std::string& speaker_b) {
  const int a = model.speaker_index(speaker_a);
  const int b = model.speaker_index(speaker_b);
  Tape t(model.params(), false);
  const Var x = t.constant(mel);
  const auto first = reconstruct(t, model, x, a);
  return cycle(t, model, first, x, a, b).scalar();
}

Matrix vae_convert(const VAEModel& model, const Matrix& mel, const std::string& target_speaker) {
  const int s = model.speaker_index(target_speaker);
  Tape t(model.params(), false);
  return reconstruct(t, model, t.constant(mel), s).recon.value();
}

std::vector<std::vector<long>> codebook_usage(const VAEModel& model,
                                              const std::vector<Matrix>& mels) {
  std::vector<std::vector<long>> counts(
      static_cast<std::size_t>(model.config().levels),
      std::vector<long>(static_cast<std::size_t>(model.config().codebook_size), 0));
  for (const auto& m : mels) {
    Tape t(model.params(), false);
    const auto vq = model.quantize(t, model.encode(t, t.constant(m)));
    for (std::size_t l = 0; l < vq.size(); ++l)
      for (int i : vq[l].indices) ++counts[l][static_cast<std::size_t>(i)];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Batched gradients

VAEStepLosses vae_batch_grads(const VAEModel& model, const Discriminator& disc,
                              const std::vector<VAEItem>& batch, bool adversarial,
                              VAEGradients& grads) {
  if (batch.empty()) throw PreconditionError("empty VAE batch");
  const VAEConfig& cfg = model.config();
  const long n = static_cast<long>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool use_cycle = cfg.lambda_cyc > 0;
  const bool use_adv = adversarial && cfg.lambda_adv > 0;
  std::vector<std::vector<Matrix>> gen_items(batch.size()), disc_items(batch.size());
  std::vector<VAEStepLosses> parts(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const VAEItem& item = batch[static_cast<std::size_t>(i)];
    VAEStepLosses& p = parts[static_cast<std::size_t>(i)];
    const double inv_t = 1.0 / static_cast<double>(item.mel.rows());
    Matrix converted;
    {
      Tape t(model.params(), true);
      const Var x = t.constant(item.mel);
      const auto r = reconstruct(t, model, x, item.speaker);
      const Var rec = mean_abs_diff(r.recon, x);
      Var total = ag::add(rec, r.vq_loss);
      p.recon = rec.scalar();
      p.vq = r.vq_loss.scalar();
      std::vector<Var> q;
      for (const auto& v : r.vq) q.push_back(v.quantized);
      const Var xb = model.decode(t, q, item.other, item.mel.rows());
      converted = xb.value();
      if (use_cycle) {
        const Reconstruction back = reconstruct(t, model, xb, item.speaker);
        const Var cyc = mean_abs_diff(back.recon, x);
        p.cyclic = cyc.scalar();
        total = ag::add(total, ag::scale(cyc, cfg.lambda_cyc));
      }
      if (use_adv) {
        const Var logits = disc(t, xb, true);
        const Var adv = ag::scale(
            ag::cross_entropy_sum(logits, std::vector<int>(static_cast<std::size_t>(logits.rows()),
                                                           item.other)),
            inv_t);
        p.adv = adv.scalar();
        total = ag::add(total, ag::scale(adv, cfg.lambda_adv));
      }
      p.total = total.scalar();
      t.backward(ag::scale(total, inv_n));
      gen_items[static_cast<std::size_t>(i)] = t.param_grads();
    }
    if (use_adv) {
      Tape t(disc.params(), true);
      const Var real = disc(t, t.constant(item.mel), false);
      const Var fake = disc(t, t.constant(converted), false);
      const Var loss = ag::scale(
          ag::add(ag::cross_entropy_sum(
                      real, std::vector<int>(static_cast<std::size_t>(real.rows()), item.speaker)),
                  ag::cross_entropy_sum(
                      fake, std::vector<int>(static_cast<std::size_t>(fake.rows()),
                                             disc.fake_class()))),
          inv_t);
      p.disc = loss.scalar();
      t.backward(ag::scale(loss, inv_n));
      disc_items[static_cast<std::size_t>(i)] = t.param_grads();
    }
  }
  grads.generator = model.params().zeros_like();
  grads.discriminator = disc.params().zeros_like();
  VAEStepLosses total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < grads.generator.size(); ++k)
      if (gen_items[i][k].size() > 0) grads.generator[k] += gen_items[i][k];
    if (use_adv)
      for (std::size_t k = 0; k < grads.discriminator.size(); ++k)
        if (disc_items[i][k].size() > 0) grads.discriminator[k] += disc_items[i][k];
    total.total += parts[i].total * inv_n;
    total.recon += parts[i].recon * inv_n;
    total.vq += parts[i].vq * inv_n;
    total.cyclic += parts[i].cyclic * inv_n;
    total.adv += parts[i].adv * inv_n;
    total.disc += parts[i].disc * inv_n;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Training state

VAEState::VAEState(const VAEConfig& cfg, std::vector<std::string> speakers)
    : model(cfg, std::move(speakers)),
      disc(cfg, static_cast<int>(model.speakers().size())),
      opt(model.params(), nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.warmup_steps, cfg.clip_norm}),
      disc_opt(disc.params(),
               nn::AdamConfig{cfg.disc_lr, 0.5, 0.999, 1e-8, 0, cfg.clip_norm}) {}

const FeatureStats& VAEState::stats_for(const std::string& speaker) const {
  for (const auto& s : stats)
    if (s.speaker_id == speaker) return s;
  throw PreconditionError("no feature statistics for speaker " + speaker + " in VAE checkpoint");
}

Checkpoint VAEState::to_checkpoint() const {
  Checkpoint c;
  c.stage = "vae";
  c.step = step;
  c.config = model.config().to_kv();
  c.meta["speakers"] = join(model.speakers());
  store_params(c, "model.", model.params());
  store_optimizer(c, "opt.", model.params(), opt);
  store_params(c, "disc.", disc.params());
  store_optimizer(c, "disc_opt.", disc.params(), disc_opt);
  for (const auto& s : stats) {
    c.set_tensor("stats." + s.speaker_id + ".mean", s.mean);
    c.set_tensor("stats." + s.speaker_id + ".std", s.std);
  }
  if (!losses.empty())
    c.set_tensor("train.losses", Eigen::Map<const Matrix>(losses.data(), 1,
                                                          static_cast<long>(losses.size())));
  return c;
}

VAEState VAEState::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.stage != "vae")
    throw FormatError("expected a vae checkpoint, found stage '" + ckpt.stage + "'");
  std::vector<std::string> speakers;
  KvReader r({{"speakers", ckpt.meta_value("speakers")}}, "checkpoint");
  r.read("speakers", speakers);
  VAEState s(VAEConfig::from_kv(ckpt.config), speakers);
  restore_params(ckpt, "model.", s.model.params());
  restore_optimizer(ckpt, "opt.", s.model.params(), s.opt);
  restore_params(ckpt, "disc.", s.disc.params());
  restore_optimizer(ckpt, "disc_opt.", s.disc.params(), s.disc_opt);
  s.step = ckpt.step;
  for (const auto& id : speakers)
    if (ckpt.has_tensor("stats." + id + ".mean"))
      s.stats.push_back(
          {id, ckpt.tensor("stats." + id + ".mean"), ckpt.tensor("stats." + id + ".std")});
  if (ckpt.has_tensor("train.losses")) {
    const Matrix& l = ckpt.tensor("train.losses");
    s.losses.assign(l.data(), l.data() + l.size());
  }
  return s;
}

VAEStepLosses vae_adversarial_step(VAEState& state, const std::vector<VAEItem>& batch,
                                   bool adversarial) {
  VAEGradients g;
  const VAEStepLosses losses = vae_batch_grads(state.model, state.disc, batch, adversarial, g);
  if (adversarial && state.model.config().lambda_adv > 0)
    state.disc_opt.step(state.disc.params(), g.discriminator);
  state.opt.step(state.model.params(), g.generator);
  return losses;
}

std::vector<VAEItem> vae_sample_batch(const VAEState& state,
                                      const std::vector<std::vector<Matrix>>& per_speaker,
                                      long step) {
  const VAEConfig& cfg = state.model.config();
  const std::size_t n_spk = per_speaker.size();
  if (n_spk != state.model.speakers().size())
    throw PreconditionError("training data does not match the VAE speaker table");
  std::vector<std::pair<int, std::size_t>> pool;
  for (std::size_t s = 0; s < n_spk; ++s)
    for (std::size_t u = 0; u < per_speaker[s].size(); ++u) pool.emplace_back(static_cast<int>(s), u);
  if (pool.empty()) throw PreconditionError("no VAE training utterances");
  Rng rng(derive_seed({cfg.seed, 0xC40B, static_cast<std::uint64_t>(step)}));
  std::vector<VAEItem> batch;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const auto& [s, u] = pool[rng.below(pool.size())];
    const Matrix& m = per_speaker[static_cast<std::size_t>(s)][u];
    const long len = std::min<long>(cfg.segment_frames, m.rows());
    const long start = static_cast<long>(rng.below(static_cast<std::uint64_t>(m.rows() - len + 1)));
    VAEItem item;
    item.mel = m.middleRows(start, len);
    item.speaker = s;
    item.other = s;
    if (n_spk > 1) {
      const int o = static_cast<int>(rng.below(n_spk - 1));
      item.other = o >= s ? o + 1 : o;
    }
    batch.push_back(std::move(item));
  }
  return batch;
}

void vae_train_steps(VAEState& state, const std::vector<std::vector<Matrix>>& per_speaker,
                     const TrainOptions& opt) {
  const VAEConfig& cfg = state.model.config();
  for (long k = 0; k < opt.steps; ++k) {
    const auto batch = vae_sample_batch(state, per_speaker, state.step);
    const bool adversarial = state.step >= cfg.adv_start;
    const VAEStepLosses l = vae_adversarial_step(state, batch, adversarial);
    ++state.step;
    state.losses.push_back(l.recon);
    if (opt.on_step) opt.on_step(state.step, l.total);
    if (opt.save_interval > 0 && state.step % opt.save_interval == 0 && !opt.out.empty())
      save_checkpoint(opt.out, state.to_checkpoint());
  }
  if (!opt.out.empty()) save_checkpoint(opt.out, state.to_checkpoint());
}

std::vector<std::vector<Matrix>> vae_training_data(const CorpusIndex& index,
                                                   const VAEState& state) {
  std::vector<std::vector<Matrix>> data;
  for (const auto& id : state.model.speakers()) {
    const auto utts = index.utterances_of(id, Split::train);
    std::vector<Matrix> mels(utts.size());
    const long n = static_cast<long>(utts.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i)
      mels[i] = normalize(make_mel(utterance_mel(*utts[i])), state.stats_for(id)).frames;
    data.push_back(std::move(mels));
  }
  return data;
}

VAEState vae_train(const CorpusIndex& index, const std::vector<std::string>& speakers,
                   const VAEConfig& cfg, const TrainOptions& opt) {
  if (speakers.empty()) throw PreconditionError("VAE training needs at least one speaker");
  for (const auto& id : speakers) {
    if (!index.has_speaker(id)) throw PreconditionError("speaker " + id + " is not in the corpus");
    if (index.speaker(id).group != Group::normal)
      throw ValidationError("VAE training accepts normal speakers only; " + id +
                            " is dysarthric");
  }
  VAEState state(cfg, speakers);
  for (const auto& id : speakers) state.stats.push_back(speaker_stats(index, id));
  vae_train_steps(state, vae_training_data(index, state), opt);
  return state;
}

}  // namespace dvc
