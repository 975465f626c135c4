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

#include "dvc/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dvc/error.hpp"
#include "dvc/kv.hpp"

namespace dvc {

using ag::Tape;
using ag::Var;

// ---------------------------------------------------------------------------
// Config

void S2SConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("s2s config: " + what);
  };
  need(n_bands >= 1, "n_bands must be >= 1");
  need(d_model >= 1 && n_heads >= 1, "d_model and n_heads must be >= 1");
  need(d_model % n_heads == 0, "d_model (" + std::to_string(d_model) +
                                   ") must be divisible by n_heads (" +
                                   std::to_string(n_heads) + ")");
  need(enc_layers >= 0 && dec_layers >= 1, "need >= 1 decoder layer");
  need(ff_dim >= 1, "ff_dim must be >= 1");
  need(reduction >= 1, "reduction factor must be >= 1");
  need(dropout >= 0 && dropout < 1 && prenet_dropout >= 0 && prenet_dropout < 1,
       "dropout rates must lie in [0, 1)");
  for (int p : prenet_dims) need(p >= 1, "prenet dims must be >= 1");
  need(postnet_layers >= 0, "postnet_layers must be >= 0");
  need(postnet_layers == 0 || (postnet_channels >= 1 && postnet_kernel >= 1),
       "postnet channels/kernel must be >= 1");
  need(max_decode_frames >= reduction, "max_decode_frames must be >= reduction");
  need(stop_threshold > 0 && stop_threshold < 1, "stop_threshold must lie in (0, 1)");
  need(lr > 0 && batch_size >= 1, "lr must be > 0 and batch_size >= 1");
}

std::map<std::string, std::string> S2SConfig::to_kv() const {
  return {{"n_bands", std::to_string(n_bands)},
          {"d_model", std::to_string(d_model)},
          {"n_heads", std::to_string(n_heads)},
          {"enc_layers", std::to_string(enc_layers)},
          {"dec_layers", std::to_string(dec_layers)},
          {"ff_dim", std::to_string(ff_dim)},
          {"dropout", format_double(dropout)},
          {"reduction", std::to_string(reduction)},
          {"prenet_dims", join(prenet_dims)},
          {"prenet_dropout", format_double(prenet_dropout)},
          {"postnet_layers", std::to_string(postnet_layers)},
          {"postnet_channels", std::to_string(postnet_channels)},
          {"postnet_kernel", std::to_string(postnet_kernel)},
          {"max_decode_frames", std::to_string(max_decode_frames)},
          {"stop_threshold", format_double(stop_threshold)},
          {"stop_pos_weight", format_double(stop_pos_weight)},
          {"lr", format_double(lr)},
          {"warmup_steps", std::to_string(warmup_steps)},
          {"clip_norm", format_double(clip_norm)},
          {"batch_size", std::to_string(batch_size)},
          {"seed", std::to_string(seed)}};
}

S2SConfig S2SConfig::from_kv(const std::map<std::string, std::string>& kv) {
  S2SConfig c;
  KvReader r(kv, "s2s");
  r.read("n_bands", c.n_bands);
  r.read("d_model", c.d_model);
  r.read("n_heads", c.n_heads);
  r.read("enc_layers", c.enc_layers);
  r.read("dec_layers", c.dec_layers);
  r.read("ff_dim", c.ff_dim);
  r.read("dropout", c.dropout);
  r.read("reduction", c.reduction);
  r.read("prenet_dims", c.prenet_dims);
  r.read("prenet_dropout", c.prenet_dropout);
  r.read("postnet_layers", c.postnet_layers);
  r.read("postnet_channels", c.postnet_channels);
  r.read("postnet_kernel", c.postnet_kernel);
  r.read("max_decode_frames", c.max_decode_frames);
  r.read("stop_threshold", c.stop_threshold);
  r.read("stop_pos_weight", c.stop_pos_weight);
  r.read("lr", c.lr);
  r.read("warmup_steps", c.warmup_steps);
  r.read("clip_norm", c.clip_norm);
  r.read("batch_size", c.batch_size);
  r.read("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Batches

long decoder_steps(long target_frames, int reduction) {
  return (target_frames + reduction - 1) / reduction;
}

Matrix decoder_inputs(const Matrix& target, long target_frames, int reduction) {
  const long steps = decoder_steps(target_frames, reduction);
  Matrix in = Matrix::Zero(steps, target.cols());
  for (long s = 1; s < steps; ++s) in.row(s) = target.row(s * reduction - 1);
  return in;
}

S2SBatch S2SBatch::make(const std::vector<Matrix>& sources, const std::vector<Matrix>& targets,
                        int reduction) {
  if (sources.size() != targets.size() || sources.empty())
    throw PreconditionError("batch needs matching, nonempty source/target lists");
  const long bands = sources.front().cols();
  long ts = 0, tt = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].cols() != bands || targets[i].cols() != bands)
      throw PreconditionError("batch item " + std::to_string(i) + " has a band count mismatch");
    if (sources[i].rows() < 1 || targets[i].rows() < 1)
      throw PreconditionError("batch item " + std::to_string(i) + " is empty");
    ts = std::max(ts, static_cast<long>(sources[i].rows()));
    tt = std::max(tt, static_cast<long>(targets[i].rows()));
  }
  S2SBatch b;
  const long steps = decoder_steps(tt, reduction);
  b.stop_labels = Matrix::Zero(static_cast<long>(sources.size()), steps);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    Matrix s = Matrix::Zero(ts, bands), t = Matrix::Zero(tt, bands);
    s.topRows(sources[i].rows()) = sources[i];
    t.topRows(targets[i].rows()) = targets[i];
    b.source.push_back(std::move(s));
    b.target.push_back(std::move(t));
    b.source_lengths.push_back(sources[i].rows());
    b.target_lengths.push_back(targets[i].rows());
    const long last = decoder_steps(targets[i].rows(), reduction) - 1;
    b.stop_labels.row(static_cast<long>(i)).tail(steps - last).setOnes();
  }
  return b;
}

S2SBatch S2SBatch::padded(long extra_source, long extra_target, int reduction) const {
  std::vector<Matrix> s, t;
  for (std::size_t i = 0; i < size(); ++i) {
    s.push_back(source[i].topRows(source_lengths[i]));
    t.push_back(target[i].topRows(target_lengths[i]));
  }
  S2SBatch b = make(s, t, reduction);
  for (auto& m : b.source) m.conservativeResizeLike(Matrix::Zero(m.rows() + extra_source, m.cols()));
  for (auto& m : b.target) m.conservativeResizeLike(Matrix::Zero(m.rows() + extra_target, m.cols()));
  const long steps = decoder_steps(b.target.front().rows(), reduction);
  Matrix labels = Matrix::Ones(b.stop_labels.rows(), steps);
  labels.leftCols(b.stop_labels.cols()) = b.stop_labels;
  b.stop_labels = std::move(labels);
  return b;
}

// ---------------------------------------------------------------------------
// Model

S2SModel::S2SModel(const S2SConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed({cfg.seed, 0x5325}));
  const long d = cfg.d_model, b = cfg.n_bands;
  enc_prenet_ = nn::Linear::make(ps_, "enc.prenet", b, d, rng);
  enc_alpha_ = ps_.add("enc.alpha", Matrix::Ones(1, 1));
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    enc_.push_back({nn::LayerNorm::make(ps_, p + ".ln1", d), nn::LayerNorm::make(ps_, p + ".ln2", d),
                    nn::MultiHeadAttention::make(ps_, p + ".attn", d, cfg.n_heads, rng),
                    nn::FeedForward::make(ps_, p + ".ff", d, cfg.ff_dim, rng)});
  }
  enc_norm_ = nn::LayerNorm::make(ps_, "enc.norm", d);
  long in = b;
  for (std::size_t i = 0; i < cfg.prenet_dims.size(); ++i) {
    dec_prenet_.push_back(
        nn::Linear::make(ps_, "dec.prenet." + std::to_string(i), in, cfg.prenet_dims[i], rng));
    in = cfg.prenet_dims[i];
  }
  dec_proj_ = nn::Linear::make(ps_, "dec.proj", in, d, rng);
  dec_alpha_ = ps_.add("dec.alpha", Matrix::Ones(1, 1));
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    dec_.push_back({nn::LayerNorm::make(ps_, p + ".ln1", d), nn::LayerNorm::make(ps_, p + ".ln2", d),
                    nn::LayerNorm::make(ps_, p + ".ln3", d),
                    nn::MultiHeadAttention::make(ps_, p + ".self", d, cfg.n_heads, rng),
                    nn::MultiHeadAttention::make(ps_, p + ".cross", d, cfg.n_heads, rng),
                    nn::FeedForward::make(ps_, p + ".ff", d, cfg.ff_dim, rng)});
  }
  dec_norm_ = nn::LayerNorm::make(ps_, "dec.norm", d);
  mel_out_ = nn::Linear::make(ps_, "dec.mel_out", d, b * cfg.reduction, rng);
  stop_out_ = nn::Linear::make(ps_, "dec.stop_out", d, 1, rng);
  for (int l = 0; l < cfg.postnet_layers; ++l) {
    const long cin = l == 0 ? b : cfg.postnet_channels;
    const long cout = l + 1 == cfg.postnet_layers ? b : cfg.postnet_channels;
    post_.push_back(nn::Conv1d::make(ps_, "post." + std::to_string(l), cin, cout,
                                     cfg.postnet_kernel, rng, 1, nn::Padding::causal));
  }
  ps_.round_to_float();
}

namespace {

Var maybe_dropout(Var x, double rate, Rng* rng) {
  return rng ? ag::dropout(x, rate, *rng) : x;
}

}  // namespace

Var S2SModel::encode(Tape& t, const Matrix& source, Rng* rng) const {
  if (source.cols() != cfg_.n_bands)
    throw PreconditionError("encoder expects " + std::to_string(cfg_.n_bands) + " bands, got " +
                            std::to_string(source.cols()));
  if (source.rows() < 1) throw PreconditionError("empty source sequence");
  Var x = enc_prenet_(t, t.constant(source));
  const Var pe = t.constant(nn::positional_encoding(source.rows(), cfg_.d_model));
  x = maybe_dropout(ag::add(x, ag::scale_by(pe, t.param(enc_alpha_))), cfg_.dropout, rng);
  const Matrix none;
  for (const auto& l : enc_) {
    Var h = l.ln1(t, x);
    x = ag::add(x, maybe_dropout(l.attn(t, h, h, none), cfg_.dropout, rng));
    h = l.ln2(t, x);
    x = ag::add(x, maybe_dropout(l.ff(t, h), cfg_.dropout, rng));
  }
  return enc_norm_(t, x);
}

S2SModel::DecoderOut S2SModel::decode(Tape& t, Var memory, const Matrix& inputs, Rng* rng,
                                      std::vector<Matrix>* attention) const {
  if (inputs.cols() != cfg_.n_bands) throw PreconditionError("decoder input band mismatch");
  const long steps = inputs.rows();
  Var y = t.constant(inputs);
  for (const auto& p : dec_prenet_) y = maybe_dropout(ag::relu(p(t, y)), cfg_.prenet_dropout, rng);
  y = dec_proj_(t, y);
  const Var pe = t.constant(nn::positional_encoding(steps, cfg_.d_model));
  Var x = maybe_dropout(ag::add(y, ag::scale_by(pe, t.param(dec_alpha_))), cfg_.dropout, rng);
  const Matrix mask = nn::causal_mask(steps);
  const Matrix none;
  for (const auto& l : dec_) {
    Var h = l.ln1(t, x);
    x = ag::add(x, maybe_dropout(l.self_attn(t, h, h, mask), cfg_.dropout, rng));
    h = l.ln2(t, x);
    x = ag::add(x, maybe_dropout(l.cross_attn(t, h, memory, none, attention), cfg_.dropout, rng));
    h = l.ln3(t, x);
    x = ag::add(x, maybe_dropout(l.ff(t, h), cfg_.dropout, rng));
  }
  x = dec_norm_(t, x);
  return {ag::reshape(mel_out_(t, x), steps * cfg_.reduction, cfg_.n_bands), stop_out_(t, x)};
}

Var S2SModel::postnet(Tape& t, Var pre, Rng* rng) const {
  if (post_.empty()) return pre;
  Var h = pre;
  for (std::size_t i = 0; i < post_.size(); ++i) {
    h = post_[i](t, h);
    if (i + 1 < post_.size()) h = maybe_dropout(ag::tanh(h), cfg_.dropout, rng);
  }
  return ag::add(pre, h);
}

// ---------------------------------------------------------------------------
// Teacher forcing and loss

namespace {

struct ItemGraph {
  Var pre, post, stop;
};

ItemGraph forward_item(Tape& t, const S2SModel& m, const Matrix& src, const Matrix& tgt,
                       Rng* rng) {
  const int r = m.config().reduction;
  const Var memory = m.encode(t, src, rng);
  const auto dec = m.decode(t, memory, decoder_inputs(tgt, tgt.rows(), r), rng, nullptr);
  const Var pre = ag::slice_rows(dec.pre, 0, tgt.rows());
  return {pre, m.postnet(t, pre, rng), dec.stop};
}

void check_batch(const S2SModel& m, const S2SBatch& b) {
  if (b.size() == 0) throw PreconditionError("empty batch");
  if (b.target.size() != b.size() || b.source_lengths.size() != b.size() ||
      b.target_lengths.size() != b.size())
    throw PreconditionError("inconsistent batch");
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.source[i].cols() != m.config().n_bands || b.target[i].cols() != m.config().n_bands)
      throw PreconditionError("batch item " + std::to_string(i) + ": expected " +
                              std::to_string(m.config().n_bands) + " bands");
    if (b.source_lengths[i] < 1 || b.source_lengths[i] > b.source[i].rows() ||
        b.target_lengths[i] < 1 || b.target_lengths[i] > b.target[i].rows())
      throw PreconditionError("batch item " + std::to_string(i) + ": bad length");
  }
}

Matrix item_stop_labels(long target_frames, int r) {
  Matrix l = Matrix::Zero(decoder_steps(target_frames, r), 1);
  l(l.rows() - 1, 0) = 1.0;
  return l;
}

struct Totals {
  double mel = 0.0;
  double steps = 0.0;
};

Totals batch_totals(const S2SBatch& b, int r, long bands) {
  Totals t;
  for (std::size_t i = 0; i < b.size(); ++i) {
    t.mel += static_cast<double>(b.target_lengths[i] * bands);
    t.steps += static_cast<double>(decoder_steps(b.target_lengths[i], r));
  }
  return t;
}

}  // namespace

S2SOutput s2s_forward_teacher_forced(const S2SModel& model, const S2SBatch& batch) {
  check_batch(model, batch);
  const int r = model.config().reduction;
  const long bands = model.config().n_bands;
  long tt = 0;
  for (const auto& t : batch.target) tt = std::max(tt, static_cast<long>(t.rows()));
  const long n = static_cast<long>(batch.size());
  S2SOutput out;
  out.mel_pre.assign(batch.size(), Matrix::Zero(tt, bands));
  out.mel_post.assign(batch.size(), Matrix::Zero(tt, bands));
  out.stop_logits = Matrix::Zero(n, decoder_steps(tt, r));
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    Tape t(model.params(), false);
    const auto g = forward_item(t, model, batch.source[i].topRows(batch.source_lengths[i]),
                                batch.target[i].topRows(batch.target_lengths[i]), nullptr);
    out.mel_pre[i].topRows(batch.target_lengths[i]) = g.pre.value();
    out.mel_post[i].topRows(batch.target_lengths[i]) = g.post.value();
    out.stop_logits.row(i).head(g.stop.rows()) = g.stop.value().col(0).transpose();
  }
  return out;
}

S2SLoss s2s_loss(const S2SOutput& out, const S2SBatch& batch, const S2SConfig& cfg) {
  const int r = cfg.reduction;
  const Totals tot = batch_totals(batch, r, cfg.n_bands);
  S2SLoss loss;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const long len = batch.target_lengths[i];
    const auto tgt = batch.target[i].topRows(len);
    loss.mel_pre += (out.mel_pre[i].topRows(len) - tgt).cwiseAbs().sum();
    loss.mel_post += (out.mel_post[i].topRows(len) - tgt).cwiseAbs().sum();
    const long steps = decoder_steps(len, r);
    for (long s = 0; s < steps; ++s) {
      const double z = out.stop_logits(static_cast<long>(i), s);
      const double y = batch.stop_labels(static_cast<long>(i), s);
      const double sp_neg = z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
      const double sp_pos = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      loss.stop += cfg.stop_pos_weight * y * sp_neg + (1.0 - y) * sp_pos;
    }
  }
  loss.mel_pre /= tot.mel;
  loss.mel_post /= tot.mel;
  loss.stop /= tot.steps;
  loss.total = loss.mel_pre + loss.mel_post + loss.stop;
  return loss;
}

S2SLoss s2s_loss_and_grad(const S2SModel& model, const S2SBatch& batch,
                          std::vector<Matrix>& grads, std::uint64_t dropout_seed) {
  check_batch(model, batch);
  const S2SConfig& cfg = model.config();
  const Totals tot = batch_totals(batch, cfg.reduction, cfg.n_bands);
  const long n = static_cast<long>(batch.size());
  std::vector<std::vector<Matrix>> item_grads(batch.size());
  std::vector<S2SLoss> parts(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    Rng rng(derive_seed({dropout_seed, static_cast<std::uint64_t>(i)}));
    Rng* dr = dropout_seed != 0 ? &rng : nullptr;
    Tape t(model.params(), true);
    const long len = batch.target_lengths[i];
    const Matrix tgt = batch.target[i].topRows(len);
    const auto g = forward_item(t, model, batch.source[i].topRows(batch.source_lengths[i]), tgt, dr);
    const Var target = t.constant(tgt);
    const Var pre = ag::scale(ag::sum_abs(ag::sub(g.pre, target)), 1.0 / tot.mel);
    const Var post = ag::scale(ag::sum_abs(ag::sub(g.post, target)), 1.0 / tot.mel);
    const Var stop = ag::scale(
        ag::bce_with_logits_sum(g.stop, item_stop_labels(len, cfg.reduction), cfg.stop_pos_weight),
        1.0 / tot.steps);
    const Var total = ag::add(ag::add(pre, post), stop);
    t.backward(total);
    item_grads[i] = t.param_grads();
    parts[i] = {total.scalar(), pre.scalar(), post.scalar(), stop.scalar()};
  }
  grads = model.params().zeros_like();
  S2SLoss loss;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t p = 0; p < grads.size(); ++p)
      if (item_grads[i][p].size() > 0) grads[p] += item_grads[i][p];
    loss.total += parts[i].total;
    loss.mel_pre += parts[i].mel_pre;
    loss.mel_post += parts[i].mel_post;
    loss.stop += parts[i].stop;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Decoding

S2SModel::DecoderCache S2SModel::start_decoding(const Matrix& memory) const {
  DecoderCache c;
  Tape t(ps_, false);
  const Var mem = t.constant(memory);
  for (const auto& l : dec_) {
    c.cross_k.push_back(l.cross_attn.k(t, mem).value());
    c.cross_v.push_back(l.cross_attn.v(t, mem).value());
    c.self_k.emplace_back(0, cfg_.d_model);
    c.self_v.emplace_back(0, cfg_.d_model);
  }
  return c;
}

namespace {

void append_row(Matrix& m, const Matrix& row) {
  m.conservativeResize(m.rows() + 1, Eigen::NoChange);
  m.row(m.rows() - 1) = row.row(0);
}

}  // namespace

S2SModel::StepOut S2SModel::decode_step(DecoderCache& cache, const Matrix& input,
                                        std::vector<Matrix>* attention) const {
  if (input.rows() != 1 || input.cols() != cfg_.n_bands)
    throw PreconditionError("decode_step expects one frame of " + std::to_string(cfg_.n_bands) +
                            " bands");
  Tape t(ps_, false);
  Var y = t.constant(input);
  for (const auto& p : dec_prenet_) y = ag::relu(p(t, y));
  y = dec_proj_(t, y);
  const Matrix pe = nn::positional_encoding(cache.steps + 1, cfg_.d_model).bottomRows(1);
  Var x = ag::add(y, ag::scale_by(t.constant(pe), t.param(dec_alpha_)));
  const Matrix none;
  std::vector<Matrix> weights;
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const auto& l = dec_[i];
    Var h = l.ln1(t, x);
    append_row(cache.self_k[i], l.self_attn.k(t, h).value());
    append_row(cache.self_v[i], l.self_attn.v(t, h).value());
    x = ag::add(x, l.self_attn.attend(t, l.self_attn.q(t, h), t.constant(cache.self_k[i]),
                                      t.constant(cache.self_v[i]), none));
    h = l.ln2(t, x);
    x = ag::add(x, l.cross_attn.attend(t, l.cross_attn.q(t, h), t.constant(cache.cross_k[i]),
                                       t.constant(cache.cross_v[i]), none,
                                       attention ? &weights : nullptr));
    h = l.ln3(t, x);
    x = ag::add(x, l.ff(t, h));
  }
  x = dec_norm_(t, x);
  ++cache.steps;
  if (attention) {
    if (attention->empty()) attention->resize(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k) {
      Matrix& a = (*attention)[k];
      if (a.rows() == 0) a.resize(0, weights[k].cols());
      append_row(a, weights[k]);
    }
  }
  StepOut out;
  out.pre = ag::reshape(mel_out_(t, x), cfg_.reduction, cfg_.n_bands).value();
  out.stop_logit = stop_out_(t, x).value()(0, 0);
  return out;
}

S2SConversion s2s_convert(const S2SModel& model, const Matrix& source) {
  const S2SConfig& cfg = model.config();
  if (source.rows() < 1) throw PreconditionError("cannot convert an empty source");
  Matrix memory;
  {
    Tape t(model.params(), false);
    memory = model.encode(t, source, nullptr).value();
  }
  const int r = cfg.reduction;
  const long max_steps = cfg.max_decode_frames / r;
  auto cache = model.start_decoding(memory);
  S2SConversion out;
  Matrix pre(0, cfg.n_bands);
  Matrix input = Matrix::Zero(1, cfg.n_bands);
  bool stopped = false;
  for (long s = 0; s < max_steps; ++s) {
    const auto step = model.decode_step(cache, input, &out.attention);
    pre.conservativeResize(pre.rows() + r, Eigen::NoChange);
    pre.bottomRows(r) = step.pre;
    out.steps = s + 1;
    if (1.0 / (1.0 + std::exp(-step.stop_logit)) > cfg.stop_threshold) {
      stopped = true;
      break;
    }
    input = step.pre.bottomRows(1);
  }
  Tape t(model.params(), false);
  out.mel = model.postnet(t, t.constant(pre), nullptr).value();
  out.truncated = !stopped;
  return out;
}

// ---------------------------------------------------------------------------
// Training

S2SState::S2SState(const S2SConfig& cfg)
    : model(cfg),
      opt(model.params(), nn::AdamConfig{cfg.lr, 0.9, 0.98, 1e-9, cfg.warmup_steps, cfg.clip_norm}) {}

const FeatureStats& S2SState::stats_for(const std::string& speaker) const {
  for (const auto& s : stats)
    if (s.speaker_id == speaker) return s;
  throw PreconditionError("no feature statistics for speaker " + speaker + " in s2s checkpoint");
}

Checkpoint S2SState::to_checkpoint() const {
  Checkpoint c;
  c.stage = "s2s";
  c.step = step;
  c.config = model.config().to_kv();
  c.meta["phase"] = phase;
  c.meta["target"] = target;
  std::vector<std::string> ids;
  for (const auto& s : stats) ids.push_back(s.speaker_id);
  c.meta["stats_speakers"] = join(ids);
  store_params(c, "model.", model.params());
  store_optimizer(c, "opt.", model.params(), opt);
  for (const auto& s : stats) {
    c.set_tensor("stats." + s.speaker_id + ".mean", s.mean);
    c.set_tensor("stats." + s.speaker_id + ".std", s.std);
  }
  if (!losses.empty())
    c.set_tensor("train.losses", Eigen::Map<const Matrix>(losses.data(), 1,
                                                          static_cast<long>(losses.size())));
  return c;
}

S2SState S2SState::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.stage != "s2s")
    throw FormatError("expected an s2s checkpoint, found stage '" + ckpt.stage + "'");
  S2SState s(S2SConfig::from_kv(ckpt.config));
  restore_params(ckpt, "model.", s.model.params());
  restore_optimizer(ckpt, "opt.", s.model.params(), s.opt);
  s.step = ckpt.step;
  s.phase = ckpt.meta_value("phase");
  s.target = ckpt.meta_value("target");
  std::vector<std::string> ids;
  KvReader r({{"ids", ckpt.meta_value("stats_speakers")}}, "checkpoint");
  r.read("ids", ids);
  for (const auto& id : ids)
    s.stats.push_back({id, ckpt.tensor("stats." + id + ".mean"), ckpt.tensor("stats." + id + ".std")});
  if (ckpt.has_tensor("train.losses")) {
    const Matrix& l = ckpt.tensor("train.losses");
    s.losses.assign(l.data(), l.data() + l.size());
  }
  return s;
}

void s2s_train(S2SState& state, const std::vector<S2SExample>& data, const TrainOptions& opt) {
  if (data.empty()) throw PreconditionError("no training examples");
  const S2SConfig& cfg = state.model.config();
  const std::size_t n = data.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  std::vector<std::size_t> order(n);
  for (long k = 0; k < opt.steps; ++k) {
    const auto step = static_cast<std::uint64_t>(state.step);
    Rng rng(derive_seed({cfg.seed, 0xBA7C, step}));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < bs; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
    std::vector<Matrix> src, tgt;
    for (std::size_t i = 0; i < bs; ++i) {
      src.push_back(data[order[i]].source);
      tgt.push_back(data[order[i]].target);
    }
    std::vector<Matrix> grads;
    const auto batch = S2SBatch::make(src, tgt, cfg.reduction);
    const S2SLoss loss =
        s2s_loss_and_grad(state.model, batch, grads, derive_seed({cfg.seed, 0xD809, step}));
    state.opt.step(state.model.params(), grads);
    ++state.step;
    state.losses.push_back(loss.total);
    if (opt.on_step) opt.on_step(state.step, loss.total);
    if (opt.save_interval > 0 && state.step % opt.save_interval == 0 && !opt.out.empty())
      save_checkpoint(opt.out, state.to_checkpoint());
  }
  if (!opt.out.empty()) save_checkpoint(opt.out, state.to_checkpoint());
}

namespace {

std::vector<Matrix> mels_of(const std::vector<const Utterance*>& utts) {
  std::vector<Matrix> mels(utts.size());
  const long n = static_cast<long>(utts.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) mels[i] = utterance_mel(*utts[i]);
  return mels;
}

Matrix normalized(const Matrix& m, const FeatureStats& s) {
  return normalize(make_mel(m), s).frames;
}

}  // namespace

S2SState s2s_pretrain(const CorpusIndex& index, const std::string& speaker,
                      const S2SConfig& cfg, const TrainOptions& opt) {
  if (!index.has_speaker(speaker))
    throw PreconditionError("pretraining speaker " + speaker + " is not in the corpus");
  const auto utts = index.utterances_of(speaker, Split::train);
  if (utts.empty())
    throw PreconditionError("pretraining corpus is empty: speaker " + speaker +
                            " has no train utterances");
  const auto mels = mels_of(utts);
  const FeatureStats st = compute_stats(speaker, mels);
  std::vector<S2SExample> data;
  for (const auto& m : mels) {
    Matrix x = normalized(m, st);
    data.push_back({x, x});
  }
  S2SState state(cfg);
  state.phase = "pretrain";
  state.target = speaker;
  state.stats = {st};
  s2s_train(state, data, opt);
  return state;
}

S2SState s2s_finetune(const Checkpoint& pretrained, const CorpusIndex& index,
                      const std::vector<UtterancePair>& pairs, const TrainOptions& opt) {
  if (pairs.empty()) throw PreconditionError("fine-tuning needs at least one parallel pair");
  const std::string target = pairs.front().target.speaker_id;
  std::set<std::string> speakers{target};
  for (const auto& p : pairs) {
    if (p.target.speaker_id != target)
      throw PreconditionError("fine-tuning pairs name multiple target speakers (" + target +
                              ", " + p.target.speaker_id + ")");
    if (p.source.speaker_id == target)
      throw PreconditionError("source speaker equals target " + target);
    speakers.insert(p.source.speaker_id);
  }
  S2SState pre = S2SState::from_checkpoint(pretrained);
  S2SState state(pre.model.config());
  state.model.params() = pre.model.params();
  state.phase = "finetune";
  state.target = target;
  for (const auto& s : speakers) state.stats.push_back(speaker_stats(index, s));

  std::vector<const UtterancePair*> sorted;
  for (const auto& p : pairs) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](const UtterancePair* a, const UtterancePair* b) {
    return std::tie(a->target.word_id, a->source.speaker_id, a->source.utt_id,
                    a->target.utt_id) <
           std::tie(b->target.word_id, b->source.speaker_id, b->source.utt_id, b->target.utt_id);
  });
  std::vector<const Utterance*> utts;
  for (const auto* p : sorted) {
    utts.push_back(&p->source);
    utts.push_back(&p->target);
  }
  const auto mels = mels_of(utts);
  std::vector<S2SExample> data;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    data.push_back({normalized(mels[2 * i], state.stats_for(sorted[i]->source.speaker_id)),
                    normalized(mels[2 * i + 1], state.stats_for(target))});
  s2s_train(state, data, opt);
  return state;
}

}  // namespace dvc
