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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any fails. Optional arguments: a scratch directory, then
// criterion numbers to run (default: all).

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dvc/pipeline.hpp"
#include "dvc/stats.hpp"
#include "grad_check.hpp"

namespace fs = std::filesystem;
using namespace dvc;
using testing::random_matrix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path g_scratch;

fs::path scratch(const std::string& name) {
  const fs::path p = g_scratch / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// 1. Correlations of the published speaker-level rows with severity

Outcome published_correlations() {
  const std::vector<double> ster{7.0, 7.0, 42.0, 38.0, 98.0, 92.6};
  struct Row {
    const char* name;
    std::vector<double> scores;
    double expected;
  };
  const std::vector<Row> rows{
      {"P-ESTOI VTN", {0.37, 0.37, 0.20, 0.16, 0.09, 0.08}, 0.93},
      {"P-STOI VTN", {0.73, 0.75, 0.62, 0.60, 0.58, 0.45}, 0.88},
      {"P-ESTOI VTN-VAE", {0.37, 0.35, 0.21, 0.19, 0.12, 0.06}, 0.94},
      {"P-STOI VTN-VAE", {0.73, 0.75, 0.62, 0.63, 0.61, 0.45}, 0.84},
  };
  Outcome o{true, ""};
  for (const auto& r : rows) {
    const double got = std::abs(pearson_r(r.scores, ster));
    o.pass &= std::abs(got - r.expected) <= 0.01;
    o.detail += std::string(o.detail.empty() ? "" : ", ") + r.name + fmt(" |r|=%.4f", got);
  }
  return o;
}

// ---------------------------------------------------------------------------
// 2. Metric oracles

int edit_distance_recursive(const std::vector<int>& a, const std::vector<int>& b, std::size_t i,
                            std::size_t j, std::vector<int>& memo) {
  if (i == 0) return static_cast<int>(j);
  if (j == 0) return static_cast<int>(i);
  int& slot = memo[i * 8 + j];
  if (slot >= 0) return slot;
  slot = std::min({edit_distance_recursive(a, b, i - 1, j, memo) + 1,
                   edit_distance_recursive(a, b, i, j - 1, memo) + 1,
                   edit_distance_recursive(a, b, i - 1, j - 1, memo) + (a[i - 1] != b[j - 1])});
  return slot;
}

double min_path_cost(const Matrix& c, long i, long j) {
  if (i == 0 && j == 0) return c(0, 0);
  double best = std::numeric_limits<double>::infinity();
  if (i > 0) best = std::min(best, min_path_cost(c, i - 1, j));
  if (j > 0) best = std::min(best, min_path_cost(c, i, j - 1));
  if (i > 0 && j > 0) best = std::min(best, min_path_cost(c, i - 1, j - 1));
  return best + c(i, j);
}

long double choose(int n, int k) {
  long double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Outcome metric_oracles() {
  std::vector<std::string> fails;

  // Edit distance: every pair of sequences of length <= 6 over 4 symbols.
  std::vector<std::vector<int>> seqs{{}};
  for (std::size_t start = 0; start < seqs.size(); ++start)
    if (seqs[start].size() < 6)
      for (int s = 0; s < 4; ++s) {
        auto next = seqs[start];
        next.push_back(s);
        seqs.push_back(next);
      }
  const char* names[4] = {"AA", "B", "CH", "D"};
  std::vector<std::vector<std::string>> words;
  for (const auto& s : seqs) {
    std::vector<std::string> w;
    for (int x : s) w.push_back(names[x]);
    words.push_back(w);
  }
  long pairs = 0, edit_bad = 0;
  std::vector<int> memo(64);
  for (std::size_t a = 0; a < seqs.size(); ++a)
    for (std::size_t b = 0; b < seqs.size(); ++b, ++pairs) {
      std::fill(memo.begin(), memo.end(), -1);
      const int want = edit_distance_recursive(seqs[a], seqs[b], seqs[a].size(), seqs[b].size(), memo);
      if (levenshtein(words[a], words[b]) != want) ++edit_bad;
      if (!seqs[a].empty() && b % 97 == 0 &&
          std::abs(per(words[a], words[b]) - 100.0 * want / seqs[a].size()) > 1e-12)
        ++edit_bad;
    }
  if (edit_bad) fails.push_back(std::to_string(edit_bad) + " edit-distance mismatches");

  // DTW: minimum over every monotone path, for random grids up to 6 x 6.
  Rng rng(2024);
  int dtw_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const long tx = 1 + static_cast<long>(rng.below(6)), ty = 1 + static_cast<long>(rng.below(6));
    Matrix x(tx, 3), y(ty, 3);
    for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    for (long i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
    Matrix local(tx, ty);
    for (long i = 0; i < tx; ++i)
      for (long j = 0; j < ty; ++j) local(i, j) = (x.row(i) - y.row(j)).norm();
    const WarpPath p = dtw(x, y);
    double along = 0.0;
    bool valid = p.pairs.front() == std::make_pair(0, 0) &&
                 p.pairs.back() == std::make_pair(static_cast<int>(tx - 1), static_cast<int>(ty - 1));
    for (std::size_t k = 0; k < p.pairs.size(); ++k) {
      along += local(p.pairs[k].first, p.pairs[k].second);
      if (k > 0) {
        const int di = p.pairs[k].first - p.pairs[k - 1].first;
        const int dj = p.pairs[k].second - p.pairs[k - 1].second;
        valid &= (di == 0 || di == 1) && (dj == 0 || dj == 1) && (di + dj > 0);
      }
    }
    const double best = min_path_cost(local, tx - 1, ty - 1);
    if (!valid || std::abs(p.cost - best) > 1e-9 || std::abs(along - best) > 1e-9) ++dtw_bad;
  }
  if (dtw_bad) fails.push_back(std::to_string(dtw_bad) + " DTW mismatches");

  // Binomial: direct tail sums of exact coefficients.
  int binom_bad = 0;
  for (double p0 : {0.5, 0.3}) {
    for (int n = 0; n <= 25; ++n) {
      std::vector<long double> pmf(n + 1);
      for (int k = 0; k <= n; ++k)
        pmf[k] = choose(n, k) * std::pow(static_cast<long double>(p0), k) *
                 std::pow(1.0L - p0, n - k);
      for (int k = 0; k <= n; ++k) {
        long double up = 0, down = 0, two = 0;
        for (int i = k; i <= n; ++i) up += pmf[i];
        for (int i = 0; i <= k; ++i) down += pmf[i];
        for (int i = 0; i <= n; ++i)
          if (pmf[i] <= pmf[k] * (1 + 1e-7L)) two += pmf[i];
        const auto close = [](double got, long double want) {
          return std::abs(got - static_cast<double>(std::min(want, 1.0L))) <= 1e-12 + 1e-9 * got;
        };
        binom_bad += !close(binomial_test(k, n, p0, Sided::greater), up);
        binom_bad += !close(binomial_test(k, n, p0, Sided::less), down);
        binom_bad += !close(binomial_test(k, n, p0, Sided::two), two);
      }
    }
  }
  const double p19 = binomial_test(19, 20, 0.5, Sided::greater);
  if (std::abs(p19 - 2.002716064453125e-05) > 1e-15) ++binom_bad;
  if (binom_bad) fails.push_back(std::to_string(binom_bad) + " binomial mismatches");

  // Wilcoxon: enumerate all 2^n sign flips of the observed absolute differences.
  int wil_bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 10;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = std::round(rng.normal() * 4) / 2;
      b[i] = std::round(rng.normal() * 4) / 2;
    }
    std::vector<double> d;
    for (int i = 0; i < n; ++i)
      if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    const auto res = wilcoxon_signed_rank(a, b);
    if (d.empty()) {
      wil_bad += res.n != 0;
      continue;
    }
    // Midranks of |d| by counting.
    std::vector<double> rank(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      double less = 0, equal = 0;
      for (double e : d) {
        less += std::abs(e) < std::abs(d[i]);
        equal += std::abs(e) == std::abs(d[i]);
      }
      rank[i] = less + (equal + 1) / 2;
    }
    const auto stat = [&](unsigned long signs) {
      double plus = 0, minus = 0;
      for (std::size_t i = 0; i < d.size(); ++i) ((signs >> i) & 1 ? plus : minus) += rank[i];
      return std::min(plus, minus);
    };
    unsigned long observed = 0;
    for (std::size_t i = 0; i < d.size(); ++i) observed |= static_cast<unsigned long>(d[i] > 0) << i;
    const double w = stat(observed);
    double hits = 0;
    const unsigned long total = 1ul << d.size();
    for (unsigned long s = 0; s < total; ++s) hits += stat(s) <= w + 1e-9;
    wil_bad += std::abs(res.statistic - w) > 1e-12 || std::abs(res.p - hits / total) > 1e-12 ||
               !res.exact;
  }
  const std::vector<double> x{1.2, -0.5, 2.3, 0.7, -1.9, 3.1}, zero(6, 0.0);
  const auto known = wilcoxon_signed_rank(x, zero);
  wil_bad += known.statistic != 5.0 || std::abs(known.p - 0.3125) > 1e-12;
  if (wil_bad) fails.push_back(std::to_string(wil_bad) + " Wilcoxon mismatches");

  Outcome o{fails.empty(), ""};
  o.detail = std::to_string(pairs) + " edit pairs, 100 DTW grids, n<=25 binomial tails, 200 "
             "Wilcoxon enumerations, p(19/20)=" + fmt("%.6g", p19);
  for (const auto& f : fails) o.detail += "; " + f;
  return o;
}

// ---------------------------------------------------------------------------
// 3. Intelligibility score sanity

Outcome score_sanity() {
  SyntheticCorpusOptions opt;
  const CorpusIndex index = generate_synthetic_corpus(opt, "");
  Outcome o{true, ""};

  const Utterance& u = *index.utterances_of(index.speakers().front().speaker_id, Split::test).front();
  const auto ref = make_mel(utterance_mel(u));
  const double self_stoi = p_stoi(ref, ref), self_estoi = p_estoi(ref, ref);
  o.pass &= std::abs(self_stoi - 1) <= 1e-6 && std::abs(self_estoi - 1) <= 1e-6;
  o.detail = fmt("self %.9f", self_stoi) + fmt("/%.9f", self_estoi);

  const auto& clean = *u.samples;
  double power = 0;
  for (double s : clean) power += s * s / static_cast<double>(clean.size());
  std::vector<double> stoi_means, estoi_means;
  for (double snr : {20.0, 15.0, 10.0, 5.0, 0.0}) {
    std::vector<double> st(20), es(20);
#pragma omp parallel for
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(derive_seed({0x5A, static_cast<std::uint64_t>(snr), static_cast<std::uint64_t>(trial)}));
      std::vector<double> x = clean;
      const double sd = std::sqrt(power / std::pow(10.0, snr / 10));
      for (auto& s : x) s += sd * rng.normal();
      const auto m = melspec(x, kSampleRate, kernels::Exec::serial);
      st[trial] = p_stoi(m, ref);
      es[trial] = p_estoi(m, ref);
    }
    double a = 0, b = 0;
    for (int t = 0; t < 20; ++t) a += st[t] / 20, b += es[t] / 20;
    stoi_means.push_back(a);
    estoi_means.push_back(b);
  }
  std::string noise = "; noise P-ESTOI";
  for (std::size_t i = 0; i < estoi_means.size(); ++i) {
    noise += fmt(" %.3f", estoi_means[i]);
    if (i > 0) o.pass &= estoi_means[i] < estoi_means[i - 1] && stoi_means[i] < stoi_means[i - 1];
  }
  o.detail += noise;

  // Each dysarthric speaker's recordings scored against normal references.
  std::vector<std::pair<double, double>> by_stretch;
  for (const auto& spk : index.speakers()) {
    if (spk.group != Group::dysarthric) continue;
    const auto utts = index.utterances_of(spk.speaker_id, Split::test);
    std::vector<double> scores(utts.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(utts.size()); ++i) {
      const auto r = build_reference(index, utts[i]->word_id, spk.gender);
      scores[i] = p_estoi(make_mel(utterance_mel(*utts[i])), r.ref_mel);
    }
    double mean = 0;
    for (double s : scores) mean += s / static_cast<double>(scores.size());
    by_stretch.emplace_back(spk.synth->stretch, mean);
  }
  std::sort(by_stretch.begin(), by_stretch.end());
  o.pass &= by_stretch.size() >= 3;
  o.detail += "; stretch->P-ESTOI";
  for (std::size_t i = 0; i < by_stretch.size(); ++i) {
    o.detail += fmt(" %.2f", by_stretch[i].first) + fmt(":%.3f", by_stretch[i].second);
    if (i > 0) o.pass &= by_stretch[i].second < by_stretch[i - 1].second;
  }
  return o;
}

// ---------------------------------------------------------------------------
// 4 and 5. Gradients, causality and masking on tiny models

S2SConfig tiny_s2s(int reduction) {
  S2SConfig c;
  c.n_bands = 6;
  c.d_model = 8;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ff_dim = 16;
  c.dropout = 0.0;
  c.prenet_dropout = 0.0;
  c.reduction = reduction;
  c.prenet_dims = {8};
  c.postnet_layers = 2;
  c.postnet_channels = 8;
  c.postnet_kernel = 3;
  c.seed = 5;
  return c;
}

VAEConfig tiny_vae() {
  VAEConfig c;
  c.n_bands = 6;
  c.enc_channels = {8};
  c.latent_dim = 3;
  c.levels = 2;
  c.codebook_size = 5;
  c.speaker_dim = 3;
  c.dec_channels = 8;
  c.dec_layers = 2;
  c.kernel = 3;
  c.beta = 0.4;
  c.seed = 9;
  return c;
}

void jitter(ag::ParamStore& ps, std::uint64_t seed) {
  for (int id = 0; id < ps.size(); ++id)
    ps.value(id) += random_matrix(ps.value(id).rows(), ps.value(id).cols(), seed + id, 0.1);
}

double worst_relative_error(ag::ParamStore& ps, const std::vector<Matrix>& analytic,
                            const std::function<double()>& loss) {
  const double h = 1e-5;
  double worst = 0.0;
  for (int id = 0; id < ps.size(); ++id) {
    Matrix& p = ps.value(id);
    Matrix numeric(p.rows(), p.cols());
    for (long i = 0; i < p.size(); ++i) {
      const double keep = p.data()[i];
      p.data()[i] = keep + h;
      const double up = loss();
      p.data()[i] = keep - h;
      const double down = loss();
      p.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double denom = std::max({analytic[id].norm(), numeric.norm(), 1e-6});
    worst = std::max(worst, (analytic[id] - numeric).norm() / denom);
  }
  return worst;
}

Outcome gradient_checks() {
  S2SModel s2s(tiny_s2s(2));
  jitter(s2s.params(), 500);
  const auto batch = S2SBatch::make({random_matrix(7, 6, 1), random_matrix(5, 6, 2)},
                                    {random_matrix(9, 6, 3), random_matrix(6, 6, 4)}, 2);
  std::vector<Matrix> g;
  s2s_loss_and_grad(s2s, batch, g);
  const double s2s_err = worst_relative_error(s2s.params(), g, [&] {
    return s2s_loss(s2s_forward_teacher_forced(s2s, batch), batch, s2s.config()).total;
  });

  // VQVAE against the stop-gradient surrogate evaluated at the current point.
  VAEModel vae(tiny_vae(), {"A", "B"});
  jitter(vae.params(), 700);
  const Matrix x = random_matrix(11, 6, 77);
  std::vector<Matrix> vg;
  vae_loss_and_grad(vae, x, "B", vg);
  std::vector<std::vector<int>> idx;
  std::vector<Matrix> z0, e0;
  {
    ag::Tape t(vae.params(), false);
    for (const auto& z : vae.encode(t, t.constant(x))) {
      const int l = static_cast<int>(z0.size());
      const auto r = vq_quantize(z.value(), vae.params().value(vae.codebook_param(l)), vae.config().beta);
      idx.push_back(r.indices);
      z0.push_back(z.value());
      e0.push_back(r.quantized);
    }
  }
  const auto surrogate = [&] {
    ag::Tape t(vae.params(), false);
    const auto z = vae.encode(t, t.constant(x));
    std::vector<ag::Var> q;
    double loss = 0.0;
    for (std::size_t l = 0; l < z.size(); ++l) {
      q.push_back(ag::add(z[l], t.constant(e0[l] - z0[l])));
      const auto e = ag::gather_rows(t.param(vae.codebook_param(static_cast<int>(l))), idx[l]);
      const double n = static_cast<double>(z0[l].size());
      loss += ag::sum_squares(ag::sub(t.constant(z0[l]), e)).scalar() / n;
      loss += vae.config().beta * ag::sum_squares(ag::sub(z[l], t.constant(e0[l]))).scalar() / n;
    }
    const auto recon = vae.decode(t, q, 1, x.rows());
    return loss + ag::sum_abs(ag::sub(recon, t.constant(x))).scalar() / static_cast<double>(x.size());
  };
  const double vae_err = worst_relative_error(vae.params(), vg, surrogate);
  return {s2s_err < 1e-3 && vae_err < 1e-3,
          fmt("seq2seq worst rel err %.2e", s2s_err) + fmt(", VQVAE worst rel err %.2e", vae_err)};
}

Outcome causality_and_masking() {
  double worst = 0.0;
  for (const int r : {1, 2, 4}) {
    const S2SModel m(tiny_s2s(r));
    const Matrix src = random_matrix(6, 6, 10), tgt = random_matrix(12, 6, 11);
    const auto base = s2s_forward_teacher_forced(m, S2SBatch::make({src}, {tgt}, r));
    for (long t = 0; t < decoder_steps(12, r); ++t) {
      Matrix changed = tgt;
      changed.bottomRows(12 - t * r) = random_matrix(12 - t * r, 6, 100 + t);
      const auto out = s2s_forward_teacher_forced(m, S2SBatch::make({src}, {changed}, r));
      const long f = std::min<long>(12, (t + 1) * r);
      worst = std::max({worst,
                        (out.mel_pre[0].topRows(f) - base.mel_pre[0].topRows(f)).cwiseAbs().maxCoeff(),
                        (out.mel_post[0].topRows(f) - base.mel_post[0].topRows(f)).cwiseAbs().maxCoeff(),
                        (out.stop_logits.leftCols(t + 1) - base.stop_logits.leftCols(t + 1))
                            .cwiseAbs().maxCoeff()});
    }
  }
  const S2SModel m(tiny_s2s(2));
  const auto b = S2SBatch::make({random_matrix(7, 6, 1), random_matrix(5, 6, 2)},
                                {random_matrix(9, 6, 3), random_matrix(6, 6, 4)}, 2);
  std::vector<Matrix> g;
  const double base = s2s_loss_and_grad(m, b, g).total;
  double pad = 0.0;
  for (long extra : {1L, 4L, 13L})
    pad = std::max(pad, std::abs(s2s_loss_and_grad(m, b.padded(extra, extra + 3, 2), g).total - base));
  return {worst < 1e-6 && pad < 1e-6,
          fmt("max change before t*r %.2e", worst) + fmt(", padding loss change %.2e", pad)};
}

// ---------------------------------------------------------------------------
// 6. Overfitting single examples

const CorpusIndex& desk_corpus() {
  static const CorpusIndex index = generate_synthetic_corpus(SyntheticCorpusOptions{}, "");
  return index;
}

Outcome overfit() {
  const CorpusIndex& index = desk_corpus();
  const auto pairs = parallel_pairs(index, {index.speakers().front().speaker_id}, "M02", Split::train);
  const UtterancePair& pair = pairs.front();
  const auto src_stats = speaker_stats(index, pair.source.speaker_id);
  const auto tgt_stats = speaker_stats(index, "M02");
  const Matrix src = normalize(make_mel(utterance_mel(pair.source)), src_stats).frames;
  const Matrix tgt = normalize(make_mel(utterance_mel(pair.target)), tgt_stats).frames;

  const PipelineConfig desk = desk_config();
  S2SConfig sc = desk.s2s;
  sc.dropout = 0.0;
  sc.prenet_dropout = 0.0;
  sc.warmup_steps = 50;
  const auto train_s2s = [&] {
    S2SState s(sc);
    TrainOptions opt;
    opt.steps = 500;
    s2s_train(s, {{src, tgt}}, opt);
    return s;
  };
  const S2SState a = train_s2s();
  const S2SState b = train_s2s();
  const double first = a.losses.front(), last = a.losses.back();
  bool same = a.losses == b.losses;
  for (int i = 0; i < a.model.params().size(); ++i)
    same &= a.model.params().value(i) == b.model.params().value(i);

  VAEConfig vc = desk.vae;
  vc.adv_start = 1L << 40;
  vc.lambda_cyc = 0.0;
  vc.batch_size = 1;
  vc.segment_frames = static_cast<int>(src.rows());
  const auto train_vae = [&] {
    VAEState s(vc, {pair.source.speaker_id});
    TrainOptions opt;
    opt.steps = 1000;
    vae_train_steps(s, {{src}}, opt);
    return s;
  };
  const VAEState va = train_vae();
  const VAEState vb = train_vae();
  const double l1 = vae_forward(va.model, src, pair.source.speaker_id).recon_loss;
  for (int i = 0; i < va.model.params().size(); ++i)
    same &= va.model.params().value(i) == vb.model.params().value(i);

  return {last < 0.1 * first && l1 < 0.1 && same,
          fmt("seq2seq loss %.4f", first) + fmt(" -> %.4f", last) +
              fmt(" (%.1f%%)", 100 * last / first) + fmt(", VAE recon L1 %.4f", l1) +
              (same ? ", repeat runs identical" : ", repeat runs DIFFER")};
}

// ---------------------------------------------------------------------------
// 7 and 8. Severity transfer and identity direction on trained models

PipelineConfig severity_config(const fs::path& out) {
  PipelineConfig c = desk_config();
  c.pipeline.out = out;
  c.pipeline.targets = {"M02"};
  c.pipeline.write_wavs = false;
  c.pipeline.pretrain_steps = 400;
  c.pipeline.finetune_steps = 1200;
  c.pipeline.vae_steps = 3000;
  return c;
}

struct SeverityRun {
  PipelineConfig cfg;
  PreparedCorpus data;
  std::vector<ConversionResult> results;
};

const SeverityRun& severity_run() {
  static const SeverityRun run = [] {
    SeverityRun r;
    r.cfg = severity_config(scratch("severity"));
    r.data = prepare(r.cfg);
    run_pretrain(r.cfg, r.data);
    run_train_s2s(r.cfg, r.data);
    run_train_vae(r.cfg, r.data);
    r.results = run_convert(r.cfg, r.data, Stage::vtn_vae);
    return r;
  }();
  return run;
}

Outcome severity_transfer() {
  const SeverityRun& run = severity_run();
  const double stretch = run.data.index.speaker("M02").synth->stretch;
  std::vector<double> ratios;
  long preserved = 0, truncated = 0;
  for (const auto& r : run.results) {
    ratios.push_back(r.length_ratio);
    preserved += r.vae_mel.num_frames() == r.vtn_mel.num_frames();
    truncated += r.truncated;
  }
  std::sort(ratios.begin(), ratios.end());
  const std::size_t n = ratios.size();
  const double median = n % 2 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
  const bool in_band = median >= 0.85 * stretch && median <= 1.15 * stretch;
  return {n > 0 && in_band && preserved == static_cast<long>(n),
          fmt("target stretch %.2f", stretch) + fmt(", median length ratio %.3f", median) + " over " +
              std::to_string(n) + " held-out utterances (" + std::to_string(truncated) +
              " truncated), stage 2 kept frame counts on " + std::to_string(preserved) + "/" +
              std::to_string(n)};
}

Outcome identity_direction() {
  const SeverityRun& run = severity_run();
  const auto vae = VAEState::from_checkpoint(load_checkpoint(RunLayout{run.cfg.pipeline.out}.vae_checkpoint()));
  const auto s2s = S2SState::from_checkpoint(
      load_checkpoint(RunLayout{run.cfg.pipeline.out}.s2s_checkpoint("M02")));
  std::string low, high;
  double low_tilt = 1e9, high_tilt = -1e9;
  for (const auto& id : vae.model.speakers()) {
    const double t = run.data.index.speaker(id).synth->tilt_db_per_octave;
    if (t < low_tilt) low_tilt = t, low = id;
    if (t > high_tilt) high_tilt = t, high = id;
  }
  int correct = 0, model_correct = 0, used = 0;
  for (const auto& r : run.results) {
    if (used == 10) break;
    ++used;
    const Matrix stage1 = normalize(r.vtn_mel, s2s.stats_for("M02")).frames;
    const auto to_low = make_mel(vae_convert(vae.model, stage1, low));
    const auto to_high = make_mel(vae_convert(vae.model, stage1, high));
    correct += spectral_tilt(denormalize(to_high, vae.stats_for(high))) >
               spectral_tilt(denormalize(to_low, vae.stats_for(low)));
    model_correct += spectral_tilt(to_high) > spectral_tilt(to_low);
  }
  const double p = binomial_test(correct, used, 0.5, Sided::greater);
  return {used == 10 && correct >= 8,
          std::to_string(correct) + "/" + std::to_string(used) + " outputs tilt toward " + high +
              fmt(" (%+.0f dB/oct)", high_tilt) + " over " + low + fmt(" (%+.0f dB/oct)", low_tilt) +
              fmt(", sign test p=%.3g", p) + "; normalized-domain decoder output alone " +
              std::to_string(model_correct) + "/" + std::to_string(used)};
}

// ---------------------------------------------------------------------------
// 9. Repeated command-line runs

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(N2DVC_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome reproducible_runs() {
  const fs::path dir = scratch("repro");
  const fs::path cfg = dir / "run.ini";
  std::ofstream(cfg) << "[pipeline]\npretrain_steps = 60\nfinetune_steps = 60\nvae_steps = 60\n"
                        "vocoder_iterations = 4\n"
                        "[s2s]\nd_model = 32\nn_heads = 2\nenc_layers = 1\ndec_layers = 1\n"
                        "ff_dim = 64\nprenet_dims = 32\npostnet_layers = 2\npostnet_channels = 32\n"
                        "max_decode_frames = 200\nlr = 0.001\nwarmup_steps = 20\nbatch_size = 4\n"
                        "[vae]\nenc_channels = 32\nlatent_dim = 8\ncodebook_size = 16\n"
                        "speaker_dim = 8\ndec_channels = 32\ndisc_channels = 16\nadv_start = 30\n"
                        "batch_size = 2\nsegment_frames = 32\n"
                        "[corpus]\nwords = 10\n";
  std::vector<std::string> reports;
  for (const char* name : {"a", "b"}) {
    const fs::path out = dir / name;
    const int code = run_cli("run-all --config " + cfg.string() + " --seed 11 --out " + out.string(),
                             dir / (std::string(name) + ".log"));
    if (code != 0) return {false, std::string("run-all ") + name + " exited " + std::to_string(code)};
    reports.push_back(slurp(out / "report.tsv") + slurp(out / "report.txt"));
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, same ? "two seeded run-all invocations wrote byte-identical reports (" +
                           std::to_string(reports[0].size()) + " bytes)"
                     : "reports differ"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  g_scratch = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "n2dvc_acceptance";
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  set_progress_sink([](std::string_view) {});

  const std::vector<Criterion> criteria{
      {1, "published correlations", 1, published_correlations},
      {2, "metric oracles", 30, metric_oracles},
      {3, "score sanity", 120, score_sanity},
      {4, "gradient checks", 0, gradient_checks},
      {5, "causality and masking", 0, causality_and_masking},
      {6, "overfit and determinism", 600, overfit},
      {7, "severity transfer", 1800, severity_transfer},
      {8, "identity direction", 0, identity_direction},
      {9, "reproducible run-all", 0, reproducible_runs},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
