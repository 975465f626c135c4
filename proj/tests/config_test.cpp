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

#include <map>
#include <sstream>

#include "dvc/config.hpp"
#include "dvc/error.hpp"

namespace dvc {
namespace {

// Rebuilds INI text from canonical "section.key=value" lines.
std::string to_ini(const std::string& canonical) {
  std::map<std::string, std::vector<std::string>> sections;
  std::istringstream in(canonical);
  std::string line;
  while (std::getline(in, line)) {
    const auto dot = line.find('.');
    sections[line.substr(0, dot)].push_back(line.substr(dot + 1));
  }
  std::string ini;
  for (const auto& [name, lines] : sections) {
    ini += "[" + name + "]\n";
    for (const auto& l : lines) {
      const auto eq = l.find('=');
      ini += l.substr(0, eq) + " = " + l.substr(eq + 1) + "\n";
    }
  }
  return ini;
}

TEST(Config, EmptyTextGivesDefaults) {
  EXPECT_EQ(parse_config_text("").canonical_text(), PipelineConfig{}.canonical_text());
}

TEST(Config, CanonicalTextRoundTrips) {
  PipelineConfig c = desk_config();
  c.corpus.stretches = {1.0, 1.5, 2.25};
  c.pipeline.targets = {"D01", "D02"};
  c.pipeline.sources = {"N01"};
  c.pipeline.write_wavs = false;
  c.s2s.lr = 0.000123;
  c.apply_seed(42);
  const auto back = parse_config_text(to_ini(c.canonical_text()));
  EXPECT_EQ(back.canonical_text(), c.canonical_text());
  EXPECT_EQ(back.hash(), c.hash());
}

TEST(Config, CanonicalTextIsSortedPerSection) {
  const std::string text = PipelineConfig{}.canonical_text();
  EXPECT_NE(text.find("corpus.seed=7\n"), std::string::npos);
  EXPECT_NE(text.find("vae.beta=0.25\n"), std::string::npos);
  EXPECT_EQ(text.find("pipeline.out="), std::string::npos);
}

TEST(Config, ValuesAreParsed) {
  const auto c = parse_config_text(
      "[corpus]\nwords = 12\nstretches = 1.0, 1.5 ,2\n"
      "[pipeline]\ntargets = D01,D02\nwrite_wavs = no\nout = runs/x\n"
      "[s2s]\nd_model = 32\n[vae]\nlevels = 1\n");
  EXPECT_EQ(c.corpus.words, 12);
  EXPECT_EQ(c.corpus.stretches, (std::vector<double>{1.0, 1.5, 2.0}));
  EXPECT_EQ(c.pipeline.targets, (std::vector<std::string>{"D01", "D02"}));
  EXPECT_FALSE(c.pipeline.write_wavs);
  EXPECT_EQ(c.pipeline.out, "runs/x");
  EXPECT_EQ(c.s2s.d_model, 32);
  EXPECT_EQ(c.vae.levels, 1);
}

TEST(Config, RejectsUnknownOrMalformedInput) {
  EXPECT_THROW(parse_config_text("[corpus]\nwordz = 3\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[extras]\na = 1\n"), ValidationError);
  EXPECT_THROW(parse_config_text("seed = 3\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[corpus]\nwords = many\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[corpus]\nwords = 3.5\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[pipeline]\nwrite_wavs = maybe\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[pipeline]\nvocoder_iterations = 0\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[pipeline]\nfinetune_steps = -1\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[s2s]\nno_such = 1\n"), ValidationError);
  EXPECT_THROW(parse_config_text("[corpus\nwords = 3\n"), FormatError);
  EXPECT_THROW(load_config("/nonexistent/dir/cfg.ini"), IoError);
}

TEST(Config, HashTracksContentButNotOutputDirectory) {
  PipelineConfig a = desk_config();
  PipelineConfig b = a;
  b.pipeline.out = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.apply_seed(2);
  EXPECT_NE(a.hash(), b.hash());
  PipelineConfig c = a;
  c.vae.beta = 0.3;
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Config, SeedDrivesBothModels) {
  PipelineConfig c;
  c.apply_seed(10);
  EXPECT_EQ(c.pipeline.seed, 10u);
  EXPECT_EQ(c.s2s.seed, 10u);
  EXPECT_EQ(c.vae.seed, 11u);
}

TEST(Config, ShippedDeskConfigMatchesBuiltIn) {
  EXPECT_EQ(load_config(DVC_SOURCE_DIR "/configs/desk.ini").canonical_text(),
            desk_config().canonical_text());
}

TEST(KeyValues, FormatsShortestRoundTrip) {
  for (double v : {0.1, 1e-300, 123456.789, -2.5, 1.0 / 3.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.25), "0.25");
  EXPECT_EQ(join(std::vector<int>{1, 2, 3}), "1,2,3");
  EXPECT_EQ(join(std::vector<std::string>{}), "");
}

}  // namespace
}  // namespace dvc
