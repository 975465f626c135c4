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

#include "dvc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "dvc/error.hpp"
#include "dvc/stats.hpp"

namespace dvc {

// ---------------------------------------------------------------------------
// References

std::size_t medoid_index(const std::vector<MelSpectrogram>& mels) {
  if (mels.empty()) throw PreconditionError("medoid of an empty set");
  const std::size_t n = mels.size();
  Matrix cost = Matrix::Zero(static_cast<long>(n), static_cast<long>(n));
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) jobs.emplace_back(i, j);
  const long nj = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < nj; ++k) {
    const auto [i, j] = jobs[static_cast<std::size_t>(k)];
    const double c = dtw(mels[i], mels[j]).cost;
    cost(static_cast<long>(i), static_cast<long>(j)) = c;
    cost(static_cast<long>(j), static_cast<long>(i)) = c;
  }
  std::size_t best = 0;
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double s = cost.row(static_cast<long>(i)).sum();
    if (s < best_sum) {
      best_sum = s;
      best = i;
    }
  }
  return best;
}

MelSpectrogram reference_from(const std::vector<MelSpectrogram>& mels) {
  const std::size_t m = medoid_index(mels);
  const MelSpectrogram& base = mels[m];
  Matrix sum = Matrix::Zero(base.frames.rows(), base.frames.cols());
  for (std::size_t i = 0; i < mels.size(); ++i)
    sum += i == m ? base.frames : align_to(mels[i], base).frames;
  MelSpectrogram out = base;
  out.frames = sum / static_cast<double>(mels.size());
  return out;
}

ReferenceModel build_reference(const CorpusIndex& index, const std::string& word_id,
                               Gender gender) {
  std::vector<const Utterance*> picks;
  for (const auto& u : index.utterances()) {
    if (u.word_id != word_id) continue;
    const auto& spk = index.speaker(u.speaker_id);
    if (spk.group == Group::normal && spk.gender == gender) picks.push_back(&u);
  }
  if (picks.size() < 2)
    throw PreconditionError("reference for word " + word_id + " (" + to_string(gender) +
                            ") needs >= 2 normal utterances, found " +
                            std::to_string(picks.size()));
  std::sort(picks.begin(), picks.end(),
            [](const Utterance* a, const Utterance* b) { return a->utt_id < b->utt_id; });
  std::vector<MelSpectrogram> mels(picks.size());
  const long n = static_cast<long>(picks.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) mels[i] = make_mel(utterance_mel(*picks[i]));
  ReferenceModel r;
  r.gender = gender;
  r.word_id = word_id;
  r.medoid_utt = picks[medoid_index(mels)]->utt_id;
  r.ref_mel = reference_from(mels);
  return r;
}

// ---------------------------------------------------------------------------
// Scores

std::vector<std::pair<long, long>> score_segments(long frames) {
  std::vector<std::pair<long, long>> segs;
  long next = 0;
  long covered = 0;
  for (long s = 0; s + kSegmentFrames <= frames; s += kSegmentHop) {
    segs.emplace_back(s, s + kSegmentFrames);
    covered = s + kSegmentFrames;
    next = s + kSegmentHop;
  }
  if (covered < frames && frames - next >= kMinSegmentFrames) segs.emplace_back(next, frames);
  return segs;
}

namespace {

// Centres and unit-normalizes v in place; returns false (and zeroes v) when
// v has no variation.
bool centre_unit(Eigen::Ref<Eigen::VectorXd> v) {
  v.array() -= v.mean();
  const double n = v.norm();
  if (n < 1e-12) {
    v.setZero();
    return false;
  }
  v /= n;
  return true;
}

void check_pair(const Matrix& test, const Matrix& ref) {
  if (test.cols() != ref.cols())
    throw PreconditionError("score: band count mismatch (" + std::to_string(test.cols()) +
                            " vs " + std::to_string(ref.cols()) + ")");
  if (test.rows() != ref.rows()) throw PreconditionError("score: inputs are not aligned");
  if (ref.rows() < kMinSegmentFrames)
    throw PreconditionError("reference has " + std::to_string(ref.rows()) +
                            " frames; at least " + std::to_string(kMinSegmentFrames) +
                            " are needed");
}

}  // namespace

double stoi_aligned(const Matrix& test, const Matrix& ref) {
  check_pair(test, ref);
  const auto segs = score_segments(ref.rows());
  double sum = 0.0;
  for (const auto& [a, b] : segs) {
    for (long band = 0; band < ref.cols(); ++band) {
      Eigen::VectorXd x = test.col(band).segment(a, b - a);
      Eigen::VectorXd y = ref.col(band).segment(a, b - a);
      if (centre_unit(x) && centre_unit(y)) sum += x.dot(y);
    }
  }
  return sum / static_cast<double>(segs.size() * static_cast<std::size_t>(ref.cols()));
}

double estoi_aligned(const Matrix& test, const Matrix& ref) {
  check_pair(test, ref);
  const auto segs = score_segments(ref.rows());
  double sum = 0.0;
  for (const auto& [a, b] : segs) {
    Matrix x = test.middleRows(a, b - a);
    Matrix y = ref.middleRows(a, b - a);
    for (long band = 0; band < x.cols(); ++band) {
      Eigen::VectorXd cx = x.col(band), cy = y.col(band);
      centre_unit(cx);
      centre_unit(cy);
      x.col(band) = cx;
      y.col(band) = cy;
    }
    double seg = 0.0;
    for (long f = 0; f < x.rows(); ++f) {
      Eigen::VectorXd rx = x.row(f).transpose(), ry = y.row(f).transpose();
      if (centre_unit(rx) && centre_unit(ry)) seg += rx.dot(ry);
    }
    sum += seg / static_cast<double>(x.rows());
  }
  return sum / static_cast<double>(segs.size());
}

double p_stoi(const MelSpectrogram& test, const MelSpectrogram& ref) {
  if (test.frames.cols() != ref.frames.cols())
    throw PreconditionError("p_stoi: band count mismatch");
  if (ref.num_frames() < kMinSegmentFrames)
    throw PreconditionError("p_stoi: reference shorter than " +
                            std::to_string(kMinSegmentFrames) + " frames");
  return stoi_aligned(align_to(test, ref).frames, ref.frames);
}

double p_estoi(const MelSpectrogram& test, const MelSpectrogram& ref) {
  if (test.frames.cols() != ref.frames.cols())
    throw PreconditionError("p_estoi: band count mismatch");
  if (ref.num_frames() < kMinSegmentFrames)
    throw PreconditionError("p_estoi: reference shorter than " +
                            std::to_string(kMinSegmentFrames) + " frames");
  return estoi_aligned(align_to(test, ref).frames, ref.frames);
}

// ---------------------------------------------------------------------------
// Recognizer

void TemplateRecognizer::add(const std::string& label, MelSpectrogram mel,
                             std::vector<std::string> phonemes) {
  labels_.push_back(label);
  mels_.push_back(std::move(mel));
  phonemes_.push_back(std::move(phonemes));
}

TemplateRecognizer TemplateRecognizer::from_corpus(const CorpusIndex& index) {
  std::vector<const Utterance*> picks;
  for (const auto& u : index.utterances())
    if (index.speaker(u.speaker_id).group == Group::normal) picks.push_back(&u);
  std::vector<MelSpectrogram> mels(picks.size());
  const long n = static_cast<long>(picks.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) mels[i] = make_mel(utterance_mel(*picks[i]));
  TemplateRecognizer r;
  for (std::size_t i = 0; i < picks.size(); ++i)
    r.add(picks[i]->utt_id, std::move(mels[i]), picks[i]->phonemes);
  return r;
}

std::vector<std::string> TemplateRecognizer::recognize(const MelSpectrogram& mel) const {
  if (mels_.empty()) throw PreconditionError("recognizer has no exemplars");
  std::vector<double> cost(mels_.size());
  const long n = static_cast<long>(mels_.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i)
    cost[i] = dtw(mel, mels_[i]).cost / static_cast<double>(mel.num_frames() + mels_[i].num_frames());
  const auto best = std::min_element(cost.begin(), cost.end()) - cost.begin();
  return phonemes_[static_cast<std::size_t>(best)];
}

// ---------------------------------------------------------------------------
// Text files

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "-"; }

std::optional<double> parse_opt(const std::string& s) {
  if (s == "-") return std::nullopt;
  return std::stod(s);
}

}  // namespace

Transcripts read_transcripts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read transcripts " + path.string());
  Transcripts t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected utt_id<TAB>phonemes");
    t[line.substr(0, tab)] = split_ws(line.substr(tab + 1));
  }
  return t;
}

void write_transcripts(const std::filesystem::path& path, const Transcripts& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [id, ph] : t) {
    out << id << '\t';
    for (std::size_t i = 0; i < ph.size(); ++i) out << (i ? " " : "") << ph[i];
    out << '\n';
  }
}

std::map<std::string, double> read_ster_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read STER table " + path.string());
  std::map<std::string, double> t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_ws(line);
    if (f.size() != 2)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected speaker_id<TAB>ster");
    t[f[0]] = std::stod(f[1]);
  }
  return t;
}

void write_ster_table(const std::filesystem::path& path, const std::map<std::string, double>& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [id, v] : t) out << id << '\t' << fmt(v) << '\n';
}

// ---------------------------------------------------------------------------
// System evaluation

const SpeakerScore* EvalReport::speaker_score(const std::string& system,
                                              const std::string& speaker) const {
  for (const auto& s : speakers)
    if (s.system == system && s.speaker == speaker) return &s;
  return nullptr;
}

namespace {

void fill_correlations(EvalReport& rep, const std::string& gt_system) {
  std::set<std::string> systems;
  for (const auto& s : rep.speakers) systems.insert(s.system);
  const char* metrics[] = {"P-STOI", "P-ESTOI", "PER"};
  auto corr = [&](const std::string& system, const std::string& metric) -> std::optional<double> {
    std::vector<double> x, y;
    for (const auto& [spk, ster] : rep.ster) {
      const SpeakerScore* s = rep.speaker_score(system, spk);
      if (!s) continue;
      if (metric == "P-STOI") x.push_back(s->p_stoi);
      else if (metric == "P-ESTOI") x.push_back(s->p_estoi);
      else if (s->per) x.push_back(*s->per);
      else continue;
      y.push_back(ster);
    }
    if (x.size() < 3) return std::nullopt;
    try {
      return pearson_r(x, y);
    } catch (const PreconditionError&) {
      return std::nullopt;
    }
  };
  for (const auto& system : systems)
    for (const char* m : metrics) {
      Correlation c{system, m, corr(system, m), std::nullopt};
      if (systems.contains(gt_system)) c.r_gt = corr(gt_system, m);
      rep.correlations.push_back(c);
    }
}

}  // namespace

EvalReport evaluate_system(const std::vector<ScoredUtterance>& utterances,
                           const CorpusIndex& index, const Transcripts& hypotheses,
                           const std::map<std::string, double>& ster,
                           const std::string& gt_system) {
  std::map<std::pair<std::string, Gender>, ReferenceModel> refs;
  for (const auto& u : utterances) refs.try_emplace({u.word_id, u.gender});
  for (auto& [key, ref] : refs) ref = build_reference(index, key.first, key.second);

  EvalReport rep;
  rep.ster = ster;
  rep.utterances.resize(utterances.size());
  const long n = static_cast<long>(utterances.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& u = utterances[static_cast<std::size_t>(i)];
    const auto& ref = refs.at({u.word_id, u.gender}).ref_mel;
    UtteranceScore& s = rep.utterances[static_cast<std::size_t>(i)];
    s.utt_id = u.utt_id;
    s.system = u.system;
    s.speaker = u.speaker;
    s.word_id = u.word_id;
    const Matrix aligned = align_to(u.mel, ref).frames;
    s.p_stoi = std::clamp(stoi_aligned(aligned, ref.frames), 0.0, 1.0);
    s.p_estoi = std::clamp(estoi_aligned(aligned, ref.frames), 0.0, 1.0);
  }
  for (auto& s : rep.utterances) {
    const auto it = hypotheses.find(s.utt_id);
    if (it == hypotheses.end()) {
      warn("no hypothesis transcript for " + s.utt_id + "; PER left absent");
      continue;
    }
    s.per = per(index.lexicon().at(s.word_id), it->second);
  }

  std::map<std::pair<std::string, std::string>, std::vector<const UtteranceScore*>> groups;
  for (const auto& s : rep.utterances) groups[{s.system, s.speaker}].push_back(&s);
  for (const auto& [key, list] : groups) {
    SpeakerScore sp;
    sp.system = key.first;
    sp.speaker = key.second;
    sp.n = static_cast<int>(list.size());
    double per_sum = 0.0;
    int per_n = 0;
    for (const auto* s : list) {
      sp.p_stoi += s->p_stoi;
      sp.p_estoi += s->p_estoi;
      if (s->per) {
        per_sum += *s->per;
        ++per_n;
      }
    }
    sp.p_stoi /= sp.n;
    sp.p_estoi /= sp.n;
    if (per_n > 0) sp.per = per_sum / per_n;
    rep.speakers.push_back(sp);
  }
  fill_correlations(rep, gt_system);
  return rep;
}

// ---------------------------------------------------------------------------
// Report files

std::string format_table(const EvalReport& rep) {
  std::vector<std::string> speakers;
  for (const auto& [id, _] : rep.ster) speakers.push_back(id);
  std::ostringstream out;
  out << std::left << std::setw(9) << "Metric" << std::setw(9) << "System";
  for (const auto& s : speakers) out << std::right << std::setw(8) << s;
  out << std::right << std::setw(10) << "r" << std::setw(8) << "|r|" << std::setw(9) << "r_GT"
      << "\n";
  out << std::left << std::setw(18) << "STER";
  for (const auto& s : speakers) out << std::right << std::setw(8) << std::fixed
                                     << std::setprecision(1) << rep.ster.at(s);
  out << "\n";
  for (const char* metric : {"P-STOI", "P-ESTOI", "PER"}) {
    for (const auto& c : rep.correlations) {
      if (c.metric != metric || c.system == "GT") continue;
      out << std::left << std::setw(9) << metric << std::setw(9) << c.system;
      for (const auto& s : speakers) {
        const SpeakerScore* sc = rep.speaker_score(c.system, s);
        out << std::right << std::setw(8);
        if (!sc) {
          out << "-";
        } else if (std::string(metric) == "PER") {
          if (sc->per) out << std::fixed << std::setprecision(1) << *sc->per;
          else out << "-";
        } else {
          out << std::fixed << std::setprecision(2)
              << (std::string(metric) == "P-STOI" ? sc->p_stoi : sc->p_estoi);
        }
      }
      out << std::right << std::fixed << std::setprecision(3);
      if (c.r) out << std::setw(10) << *c.r << std::setw(8) << std::abs(*c.r);
      else out << std::setw(10) << "-" << std::setw(8) << "-";
      if (c.r_gt) out << std::setw(9) << *c.r_gt;
      else out << std::setw(9) << "-";
      out << "\n";
    }
  }
  return out.str();
}

void write_report(const EvalReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.tsv");
    if (!out) throw IoError("cannot write " + (dir / "report.tsv").string());
    out << "# kind\tfields...\n";
    for (const auto& [id, v] : rep.ster) out << "ster\t" << id << '\t' << fmt(v) << '\n';
    for (const auto& u : rep.utterances)
      out << "utt\t" << u.utt_id << '\t' << u.system << '\t' << u.speaker << '\t' << u.word_id
          << '\t' << fmt(u.p_stoi) << '\t' << fmt(u.p_estoi) << '\t' << fmt_opt(u.per) << '\n';
    for (const auto& s : rep.speakers)
      out << "speaker\t" << s.system << '\t' << s.speaker << '\t' << fmt(s.p_stoi) << '\t'
          << fmt(s.p_estoi) << '\t' << fmt_opt(s.per) << '\t' << s.n << '\n';
    for (const auto& c : rep.correlations)
      out << "corr\t" << c.system << '\t' << c.metric << '\t' << fmt_opt(c.r) << '\t'
          << fmt_opt(c.r_gt) << '\n';
  }
  std::ofstream out(dir / "report.txt");
  if (!out) throw IoError("cannot write " + (dir / "report.txt").string());
  out << format_table(rep);
}

EvalReport read_report_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report " + path.string());
  EvalReport rep;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) f.push_back(field);
    auto need = [&](std::size_t n) {
      if (f.size() != n)
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(n) + " fields");
    };
    if (f[0] == "ster") {
      need(3);
      rep.ster[f[1]] = std::stod(f[2]);
    } else if (f[0] == "utt") {
      need(8);
      rep.utterances.push_back({f[1], f[2], f[3], f[4], std::stod(f[5]), std::stod(f[6]),
                                parse_opt(f[7])});
    } else if (f[0] == "speaker") {
      need(7);
      rep.speakers.push_back({f[1], f[2], std::stod(f[3]), std::stod(f[4]), parse_opt(f[5]),
                              std::stoi(f[6])});
    } else if (f[0] == "corr") {
      need(5);
      rep.correlations.push_back({f[1], f[2], parse_opt(f[3]), parse_opt(f[4])});
    } else {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unknown row kind '" +
                        f[0] + "'");
    }
  }
  return rep;
}

}  // namespace dvc
