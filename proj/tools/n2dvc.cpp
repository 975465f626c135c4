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


#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dvc/config.hpp"
#include "dvc/corpus.hpp"
#include "dvc/evalkit.hpp"
#include "dvc/pipeline.hpp"
#include "dvc/stats.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string stage = "vtn_vae";
};

void add_common(CLI::App* app, CommonFlags& f, bool with_stage) {
  app->add_option("--config", f.config, "Experiment config (INI); default is the desk-scale setup");
  app->add_option("--seed", f.seed, "Pipeline seed; model seeds derive from it");
  app->add_option("--out", f.out, "Run directory");
  if (with_stage)
    app->add_option("--stage", f.stage, "Conversion stages to apply")
        ->check(CLI::IsMember({"vtn", "vtn_vae"}));
}

dvc::PipelineConfig load(const CommonFlags& f) {
  return dvc::run_stage("config", [&] {
    dvc::PipelineConfig cfg = f.config.empty() ? dvc::desk_config() : dvc::load_config(f.config);
    if (f.seed) cfg.apply_seed(*f.seed);
    if (!f.out.empty()) cfg.pipeline.out = f.out;
    return cfg;
  });
}

dvc::PreparedCorpus prepared(const dvc::PipelineConfig& cfg) {
  return dvc::run_stage("prepare", [&] { return dvc::prepare(cfg); });
}

std::string system_key(const std::string& utt_id) {
  const auto slash = utt_id.find('/');
  return slash == std::string::npos ? utt_id : utt_id.substr(slash + 1);
}

double metric_of(const dvc::UtteranceScore& u, const std::string& metric) {
  if (metric == "p_stoi") return u.p_stoi;
  if (metric == "p_estoi") return u.p_estoi;
  if (!u.per) throw dvc::PreconditionError("utterance " + u.utt_id + " has no PER");
  return *u.per;
}

void report_tests(const dvc::EvalReport& report, const std::vector<std::string>& wilcoxon,
                  const std::string& metric, const std::vector<int>& binomial) {
  if (!binomial.empty()) {
    const int k = binomial[0], n = binomial[1];
    const double p = dvc::binomial_test(k, n);
    std::printf("binomial k=%d n=%d p=%.6g %s\n", k, n, p, dvc::significance_stars(p).c_str());
  }
  if (!wilcoxon.empty()) {
    std::map<std::string, double> a, b;
    for (const auto& u : report.utterances) {
      if (u.system == wilcoxon[0]) a[system_key(u.utt_id)] = metric_of(u, metric);
      if (u.system == wilcoxon[1]) b[system_key(u.utt_id)] = metric_of(u, metric);
    }
    std::vector<double> xa, xb;
    for (const auto& [key, v] : a)
      if (const auto it = b.find(key); it != b.end()) {
        xa.push_back(v);
        xb.push_back(it->second);
      }
    if (xa.empty())
      throw dvc::PreconditionError("no paired utterances between " + wilcoxon[0] + " and " +
                                   wilcoxon[1]);
    const auto w = dvc::wilcoxon_signed_rank(xa, xb);
    std::printf("wilcoxon %s vs %s on %s: n=%d W=%.1f p=%.6g%s %s\n", wilcoxon[0].c_str(),
                wilcoxon[1].c_str(), metric.c_str(), w.n, w.statistic, w.p,
                w.exact ? " (exact)" : "", dvc::significance_stars(w.p).c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage normal-to-dysarthric voice conversion"};
  app.require_subcommand(1);

  CommonFlags synth_f, prep_f, pre_f, s2s_f, vae_f, conv_f, eval_f, rep_f, all_f;

  auto* synth = app.add_subcommand("synth-corpus", "Generate the synthetic corpus");
  add_common(synth, synth_f, false);
  auto* prep = app.add_subcommand("prepare", "Load or generate the corpus and check speaker roles");
  add_common(prep, prep_f, false);
  auto* pre = app.add_subcommand("pretrain", "Autoencoding warm start of the seq2seq model");
  add_common(pre, pre_f, false);
  auto* s2s = app.add_subcommand("train-s2s", "Fine-tune one seq2seq model per target");
  add_common(s2s, s2s_f, false);
  auto* vae = app.add_subcommand("train-vae", "Train the frame-wise VQ-VAE on normal speakers");
  add_common(vae, vae_f, false);
  auto* conv = app.add_subcommand("convert", "Convert test utterances");
  add_common(conv, conv_f, true);
  auto* eval = app.add_subcommand("evaluate", "Score converted utterances");
  add_common(eval, eval_f, false);
  auto* rep = app.add_subcommand("report", "Print a saved report and run significance tests");
  add_common(rep, rep_f, false);
  std::vector<std::string> wilcoxon;
  std::string metric = "p_estoi";
  std::vector<int> binomial;
  rep->add_option("--wilcoxon", wilcoxon, "Paired signed-rank test between two systems")
      ->expected(2);
  rep->add_option("--metric", metric, "Metric for --wilcoxon")
      ->check(CLI::IsMember({"p_stoi", "p_estoi", "per"}));
  rep->add_option("--binomial", binomial, "Exact one-sided binomial test: K N")->expected(2);
  auto* all = app.add_subcommand("run-all", "Every stage in order");
  add_common(all, all_f, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto cfg = load(synth_f);
      const dvc::RunLayout layout{cfg.pipeline.out};
      dvc::run_stage("synth-corpus", [&] {
        dvc::SyntheticCorpusOptions opt;
        opt.seed = synth_f.seed ? *synth_f.seed : cfg.corpus.seed;
        opt.n_normal = cfg.corpus.n_normal;
        opt.n_dysarthric = cfg.corpus.n_dysarthric;
        opt.words_per_speaker = cfg.corpus.words;
        opt.dysarthric_stretches = cfg.corpus.stretches;
        const fs::path root = layout.corpus_root(cfg);
        const auto index = dvc::generate_synthetic_corpus(opt, root);
        std::printf("%zu speakers, %zu utterances in %s\n", index.speakers().size(),
                    index.utterances().size(), root.string().c_str());
      });
    } else if (*prep) {
      const auto data = prepared(load(prep_f));
      std::printf("%zu speakers, %zu utterances\n", data.index.speakers().size(),
                  data.index.utterances().size());
      for (const auto& t : data.targets) std::printf("target %s\n", t.c_str());
      for (const auto& s : data.sources) std::printf("source %s\n", s.c_str());
      std::printf("pretrain %s\n", data.pretrain_speaker.c_str());
    } else if (*pre) {
      const auto cfg = load(pre_f);
      const auto data = prepared(cfg);
      dvc::run_stage("pretrain", [&] { dvc::run_pretrain(cfg, data); });
    } else if (*s2s) {
      const auto cfg = load(s2s_f);
      const auto data = prepared(cfg);
      dvc::run_stage("train-s2s", [&] { dvc::run_train_s2s(cfg, data); });
    } else if (*vae) {
      const auto cfg = load(vae_f);
      const auto data = prepared(cfg);
      dvc::run_stage("train-vae", [&] { dvc::run_train_vae(cfg, data); });
    } else if (*conv) {
      const auto cfg = load(conv_f);
      const auto data = prepared(cfg);
      dvc::run_stage("convert",
                     [&] { dvc::run_convert(cfg, data, dvc::parse_stage(conv_f.stage)); });
    } else if (*eval) {
      const auto cfg = load(eval_f);
      const auto data = prepared(cfg);
      const auto report = dvc::run_stage("evaluate", [&] {
        return dvc::run_evaluate(cfg, data,
                                 dvc::load_conversions(dvc::RunLayout{cfg.pipeline.out}));
      });
      std::cout << dvc::format_table(report);
    } else if (*rep) {
      const auto cfg = load(rep_f);
      dvc::run_stage("report", [&] {
        const auto report = dvc::read_report_tsv(cfg.pipeline.out / "report.tsv");
        std::cout << dvc::format_table(report);
        report_tests(report, wilcoxon, metric, binomial);
      });
    } else if (*all) {
      const auto report = dvc::run_experiment(load(all_f));
      std::cout << dvc::format_table(report);
    }
  } catch (const dvc::StageError& e) {
    std::cerr << "n2dvc: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "n2dvc: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
