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

#include <filesystem>
#include <fstream>

#include "dvc/corpus.hpp"
#include "dvc/dsp.hpp"
#include "dvc/error.hpp"

namespace dvc {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dvc_corpus_" + name);
  fs::remove_all(p);
  return p;
}

SyntheticCorpusOptions small_options() {
  SyntheticCorpusOptions o;
  o.n_normal = 2;
  o.n_dysarthric = 2;
  o.words_per_speaker = 6;
  return o;
}

TEST(SyntheticCorpus, DeterministicAndRoundTripsThroughDisk) {
  const fs::path root = scratch("roundtrip");
  const auto a = generate_synthetic_corpus(small_options(), root);
  const auto b = generate_synthetic_corpus(small_options(), "");
  ASSERT_EQ(a.utterances().size(), b.utterances().size());
  for (std::size_t i = 0; i < a.utterances().size(); ++i)
    EXPECT_EQ(*a.utterances()[i].samples, *b.utterances()[i].samples);

  const auto loaded = load_corpus(root);
  ASSERT_EQ(loaded.speakers().size(), a.speakers().size());
  ASSERT_EQ(loaded.utterances().size(), a.utterances().size());
  for (const auto& u : a.utterances()) {
    const auto& v = loaded.utterance(u.utt_id);
    EXPECT_EQ(*v.samples, *u.samples) << u.utt_id;
    EXPECT_EQ(v.split, u.split);
    EXPECT_EQ(v.phonemes, u.phonemes);
  }
  for (const auto& s : a.speakers()) {
    const auto& t = loaded.speaker(s.speaker_id);
    EXPECT_EQ(t.group, s.group);
    EXPECT_EQ(t.gender, s.gender);
    EXPECT_EQ(t.ster.has_value(), s.ster.has_value());
    if (s.ster) EXPECT_NEAR(*t.ster, *s.ster, 1e-9);
  }
  fs::remove_all(root);
}

TEST(SyntheticCorpus, IdentityRenderingMatchesTemplateDuration) {
  SpeakerProfile s{"X", Group::normal, IntelligibilityBand::none, std::nullopt, Gender::m,
                   SynthParams{1.0, 0.0}};
  const std::vector<std::string> word{"aa", "m", "iy"};
  const auto x = render_synthetic_word(7, s, word, 0);
  EXPECT_NEAR(static_cast<double>(x.size()) / kSampleRate, synthetic_template_duration(7, word),
              static_cast<double>(kHop) / kSampleRate);
}

TEST(SyntheticCorpus, DurationTracksStretch) {
  const std::vector<std::string> word{"aa", "m", "iy", "d"};
  double last = 0;
  for (double stretch : {1.0, 1.25, 1.5, 1.75}) {
    SpeakerProfile s{"D", Group::dysarthric, IntelligibilityBand::none, 30.0, Gender::m,
                     SynthParams{stretch, -3.0}};
    const double d = static_cast<double>(render_synthetic_word(7, s, word, 0).size());
    EXPECT_GT(d, last);
    last = d;
  }
  SpeakerProfile n{"N", Group::normal, IntelligibilityBand::none, std::nullopt, Gender::m,
                   SynthParams{1.0, 0.0}};
  SpeakerProfile d{"D", Group::dysarthric, IntelligibilityBand::none, 30.0, Gender::m,
                   SynthParams{1.5, 0.0}};
  const double ratio = static_cast<double>(render_synthetic_word(7, d, word, 0).size()) /
                       static_cast<double>(render_synthetic_word(7, n, word, 0).size());
  EXPECT_NEAR(ratio, 1.5, 0.075);
}

TEST(SyntheticCorpus, PseudoSterIsMonotoneInStretch) {
  EXPECT_LT(pseudo_ster({1.25, -3}), pseudo_ster({1.5, -3}));
  EXPECT_LT(pseudo_ster({1.5, -3}), pseudo_ster({1.75, -3}));
  EXPECT_LE(pseudo_ster({5.0, -3}), 100.0);
}

TEST(SyntheticCorpus, TestWordsAreSharedAndDisjointFromTrain) {
  SyntheticCorpusOptions o = small_options();
  o.words_per_speaker = 9;
  const auto idx = generate_synthetic_corpus(o, "");
  std::set<std::string> test_words, train_words;
  for (const auto& s : idx.speakers()) {
    std::set<std::string> mine;
    for (const auto* u : idx.utterances_of(s.speaker_id, Split::test)) mine.insert(u->word_id);
    for (const auto* u : idx.utterances_of(s.speaker_id, Split::train)) train_words.insert(u->word_id);
    EXPECT_EQ(mine.size(), 3u);
    if (test_words.empty()) test_words = mine;
    EXPECT_EQ(mine, test_words);
  }
  for (const auto& w : test_words) EXPECT_FALSE(train_words.contains(w));
}

TEST(Corpus, ParallelPairsShareWordsAndAreOrdered) {
  const auto idx = generate_synthetic_corpus(small_options(), "");
  const auto pairs = parallel_pairs(idx, {"CM01", "CF02"}, "M01", Split::train);
  ASSERT_FALSE(pairs.empty());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(pairs[i].source.word_id, pairs[i].target.word_id);
    EXPECT_EQ(pairs[i].target.speaker_id, "M01");
    if (i > 0)
      EXPECT_LE(std::tie(pairs[i - 1].source.word_id, pairs[i - 1].source.speaker_id),
                std::tie(pairs[i].source.word_id, pairs[i].source.speaker_id));
  }
  EXPECT_THROW(parallel_pairs(idx, {"M01"}, "M01", Split::train), PreconditionError);
  EXPECT_THROW(parallel_pairs(idx, {"NOPE"}, "M01", Split::train), PreconditionError);
}

TEST(Corpus, BuildRejectsBrokenInvariants) {
  const auto samples = std::make_shared<const std::vector<double>>(8000, 0.0);
  std::map<std::string, std::vector<std::string>> lex{{"W1", {"aa"}}};
  SpeakerProfile d{"D", Group::dysarthric, IntelligibilityBand::none, std::nullopt, Gender::m, {}};
  EXPECT_THROW(CorpusIndex::build({d}, {}, lex), ValidationError);
  SpeakerProfile n{"N", Group::normal, IntelligibilityBand::none, 20.0, Gender::m, {}};
  EXPECT_THROW(CorpusIndex::build({n}, {}, lex), ValidationError);
  n.ster.reset();
  Utterance u{"N_W2", "N", "W2", samples, kSampleRate, {"aa"}, Split::train};
  EXPECT_THROW(CorpusIndex::build({n}, {u}, lex), ValidationError);
  u.word_id = "W1";
  Utterance dup = u;
  EXPECT_THROW(CorpusIndex::build({n}, {u, dup}, lex), ValidationError);
  EXPECT_NO_THROW(CorpusIndex::build({n}, {u}, lex));
}

TEST(Corpus, LoaderReportsMalformedFiles) {
  const fs::path root = scratch("malformed");
  generate_synthetic_corpus(small_options(), root);
  {
    std::ofstream out(root / "speakers.tsv", std::ios::app);
    out << "BAD\tweird\tm\t-\t-\t-\n";
  }
  EXPECT_THROW(load_corpus(root), FormatError);
  fs::remove_all(root);
  EXPECT_THROW(load_corpus(root), FormatError);
}

TEST(Corpus, ResplitKeepsRequestedCounts) {
  SyntheticCorpusOptions o = small_options();
  o.words_per_speaker = 9;
  const auto idx = generate_synthetic_corpus(o, "");
  const auto s = split_train_test(idx, 4, 2);
  for (const auto& sp : s.speakers()) {
    EXPECT_EQ(s.utterances_of(sp.speaker_id, Split::train).size(), 4u);
    EXPECT_EQ(s.utterances_of(sp.speaker_id, Split::test).size(), 2u);
  }
  EXPECT_THROW(split_train_test(idx, 9, 2), PreconditionError);
}

}  // namespace
}  // namespace dvc
