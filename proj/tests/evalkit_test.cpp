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


#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dvc/evalkit.hpp"
#include "dvc/error.hpp"
#include "dvc/rng.hpp"
#include "dvc/stats.hpp"
#include "grad_check.hpp"

namespace dvc {
namespace {

namespace fs = std::filesystem;
using testing::random_matrix;

const CorpusIndex& small_corpus() {
  static const CorpusIndex idx = [] {
    SyntheticCorpusOptions o;
    o.n_normal = 4;
    o.n_dysarthric = 3;
    o.words_per_speaker = 6;
    return generate_synthetic_corpus(o, "");
  }();
  return idx;
}

// Smooth, band-correlated structure resembling a spectrogram.
Matrix structured(long frames, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(frames, kMelBands);
  const double a = rng.uniform(0.05, 0.2), b = rng.uniform(0.05, 0.3);
  for (long t = 0; t < frames; ++t)
    for (long k = 0; k < kMelBands; ++k)
      m(t, k) = std::sin(a * t + b * k) + 0.5 * std::cos(0.03 * t * (1 + k % 5));
  return m;
}

TEST(Segments, CoverageRules) {
  using Segs = std::vector<std::pair<long, long>>;
  EXPECT_EQ(score_segments(30), (Segs{{0, 30}}));
  EXPECT_EQ(score_segments(45), (Segs{{0, 30}, {15, 45}}));
  EXPECT_EQ(score_segments(50), (Segs{{0, 30}, {15, 45}, {30, 50}}));
  EXPECT_EQ(score_segments(56), (Segs{{0, 30}, {15, 45}, {30, 56}}));
  EXPECT_EQ(score_segments(12), (Segs{{0, 12}}));
  EXPECT_TRUE(score_segments(9).empty());
}

TEST(Scores, SelfScoreIsOne) {
  const auto& u = small_corpus().utterances().front();
  const auto m = make_mel(utterance_mel(u));
  EXPECT_NEAR(p_stoi(m, m), 1.0, 1e-6);
  EXPECT_NEAR(p_estoi(m, m), 1.0, 1e-6);
}

TEST(Scores, OneBandClosedForm) {
  Rng rng(3);
  Matrix x(30, 1), y(30, 1);
  for (long i = 0; i < 30; ++i) {
    x(i, 0) = rng.normal();
    y(i, 0) = 0.5 * x(i, 0) + rng.normal();
  }
  const std::vector<double> xv(x.data(), x.data() + 30), yv(y.data(), y.data() + 30);
  EXPECT_NEAR(stoi_aligned(x, y), pearson_r(xv, yv), 1e-12);
}

TEST(Scores, WhiteNoiseScoresNearZero) {
  const auto ref = make_mel(structured(300, 1));
  double stoi = 0, estoi = 0;
  for (int draw = 0; draw < 20; ++draw) {
    const auto noise = make_mel(random_matrix(300, kMelBands, 1000 + draw));
    stoi += p_stoi(noise, ref) / 20;
    estoi += p_estoi(noise, ref) / 20;
  }
  EXPECT_LT(std::abs(stoi), 0.15);
  EXPECT_LT(std::abs(estoi), 0.15);
}

TEST(Scores, EstoiDegradesWithOneNoisyBand) {
  const Matrix ref = structured(30, 2);
  Matrix one = ref;
  one.col(7) = random_matrix(30, 1, 5);
  const Matrix all = random_matrix(30, kMelBands, 6);
  const double identity = estoi_aligned(ref, ref), partial = estoi_aligned(one, ref),
               noise = estoi_aligned(all, ref);
  EXPECT_LT(partial, identity);
  EXPECT_GT(partial, noise);
}

TEST(Scores, ConstantSegmentContributesZero) {
  const Matrix c = Matrix::Constant(30, kMelBands, 2.0);
  EXPECT_EQ(stoi_aligned(c, c), 0.0);
  EXPECT_EQ(estoi_aligned(c, c), 0.0);
  EXPECT_FALSE(std::isnan(estoi_aligned(c, structured(30, 3))));
}

TEST(Scores, InvariantToCommonOffset) {
  const auto a = make_mel(structured(80, 4));
  auto b = make_mel(structured(70, 5));
  auto a2 = a, b2 = b;
  a2.frames.array() += 3.7;
  b2.frames.array() += 3.7;
  EXPECT_NEAR(p_stoi(b, a), p_stoi(b2, a2), 1e-9);
  EXPECT_NEAR(p_estoi(b, a), p_estoi(b2, a2), 1e-9);
}

TEST(Scores, Preconditions) {
  const auto a = make_mel(structured(80, 4));
  EXPECT_THROW(p_stoi(a, make_mel(structured(9, 1))), PreconditionError);
  EXPECT_THROW(p_estoi(make_mel(Matrix::Zero(20, 10)), a), PreconditionError);
}

TEST(Scores, MeanDecreasesWithNoiseLevel) {
  const auto& u = small_corpus().utterances().front();
  const auto clean = *u.samples;
  const auto ref = make_mel(utterance_mel(u));
  double power = 0;
  for (double s : clean) power += s * s / static_cast<double>(clean.size());
  double last = 2.0;
  for (double snr : {20.0, 15.0, 10.0, 5.0, 0.0}) {
    double mean = 0;
    for (int trial = 0; trial < 5; ++trial) {
      Rng rng(derive_seed({static_cast<std::uint64_t>(snr), static_cast<std::uint64_t>(trial)}));
      std::vector<double> x = clean;
      const double sd = std::sqrt(power / std::pow(10.0, snr / 10));
      for (auto& s : x) s += sd * rng.normal();
      mean += p_estoi(melspec(x, kSampleRate), ref) / 5;
    }
    EXPECT_LT(mean, last) << snr;
    last = mean;
  }
}

TEST(Reference, MedoidAndIdenticalInputs) {
  const Matrix a = structured(20, 1), b = structured(20, 2);
  const auto ma = make_mel(a), mb = make_mel(b);
  EXPECT_EQ(reference_from({ma, ma}).frames, a);
  const auto idx = medoid_index({mb, ma, ma});
  EXPECT_TRUE(idx == 1 || idx == 2);
  const Matrix c = structured(25, 3);
  EXPECT_EQ(reference_from({make_mel(c), ma, ma}).num_frames(), 20);
}

TEST(Reference, BuiltFromNormalSpeakersOfOneGender) {
  const auto& idx = small_corpus();
  const auto& w = idx.lexicon().begin()->first;
  const auto r = build_reference(idx, w, Gender::m);
  EXPECT_EQ(r.word_id, w);
  EXPECT_EQ(idx.speaker(idx.utterance(r.medoid_utt).speaker_id).group, Group::normal);
  EXPECT_EQ(idx.speaker(idx.utterance(r.medoid_utt).speaker_id).gender, Gender::m);
  EXPECT_EQ(r.ref_mel.num_frames(), make_mel(utterance_mel(idx.utterance(r.medoid_utt))).num_frames());

  SyntheticCorpusOptions o;
  o.n_normal = 2;
  o.n_dysarthric = 1;
  o.words_per_speaker = 3;
  const auto tiny = generate_synthetic_corpus(o, "");
  EXPECT_THROW(build_reference(tiny, tiny.lexicon().begin()->first, Gender::m), PreconditionError);
}

TEST(Recognizer, RecognizesItsOwnExemplars) {
  const auto& idx = small_corpus();
  const auto rec = TemplateRecognizer::from_corpus(idx);
  for (const auto* u : idx.utterances_of("CF02"))
    EXPECT_EQ(rec.recognize(make_mel(utterance_mel(*u))), u->phonemes);
}

TEST(TextFiles, TranscriptsAndSterRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "dvc_evalkit_files";
  fs::create_directories(dir);
  const Transcripts t{{"u1", {"aa", "b"}}, {"u2", {}}, {"u3", {"m"}}};
  write_transcripts(dir / "hyp.txt", t);
  EXPECT_EQ(read_transcripts(dir / "hyp.txt"), t);
  const std::map<std::string, double> s{{"M01", 25.0}, {"M02", 42.5}};
  write_ster_table(dir / "ster.txt", s);
  EXPECT_EQ(read_ster_table(dir / "ster.txt"), s);
  fs::remove_all(dir);
}

TEST(Evaluate, AggregatesAndCorrelates) {
  const auto& idx = small_corpus();
  std::vector<ScoredUtterance> utts;
  Transcripts hyp;
  for (const auto& s : idx.speakers()) {
    if (s.group != Group::dysarthric) continue;
    for (const auto* u : idx.utterances_of(s.speaker_id)) {
      utts.push_back({u->utt_id, "GT", s.speaker_id, u->word_id, s.gender,
                      make_mel(utterance_mel(*u))});
      utts.push_back({"X/" + u->utt_id, "X", s.speaker_id, u->word_id, s.gender,
                      make_mel(utterance_mel(*u))});
      hyp[u->utt_id] = u->phonemes;
    }
  }
  std::map<std::string, double> ster;
  for (const auto& s : idx.speakers())
    if (s.ster) ster[s.speaker_id] = *s.ster;

  std::vector<std::string> warnings;
  auto old = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
  const auto rep = evaluate_system(utts, idx, hyp, ster);
  set_warning_sink(old);
  EXPECT_EQ(warnings.size(), utts.size() / 2);

  for (const auto& sp : rep.speakers) {
    double sum = 0;
    int n = 0;
    for (const auto& u : rep.utterances)
      if (u.system == sp.system && u.speaker == sp.speaker) sum += u.p_estoi, ++n;
    EXPECT_NEAR(sp.p_estoi, sum / n, 1e-12);
    EXPECT_EQ(sp.n, n);
    if (sp.system == "GT") {
      ASSERT_TRUE(sp.per.has_value());
      EXPECT_EQ(*sp.per, 0.0);
    } else {
      EXPECT_FALSE(sp.per.has_value());
    }
  }
  bool seen = false;
  for (const auto& c : rep.correlations)
    if (c.system == "X" && c.metric == "P-ESTOI") {
      seen = true;
      ASSERT_TRUE(c.r && c.r_gt);
      EXPECT_NEAR(*c.r, *c.r_gt, 1e-12);
      EXPECT_LE(std::abs(*c.r), 1.0);
    }
  EXPECT_TRUE(seen);

  const fs::path dir = fs::temp_directory_path() / "dvc_evalkit_report";
  write_report(rep, dir);
  const auto back = read_report_tsv(dir / "report.tsv");
  EXPECT_EQ(back.utterances.size(), rep.utterances.size());
  EXPECT_EQ(format_table(back), format_table(rep));
  EXPECT_NE(format_table(rep).find("P-ESTOI  X"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace dvc
