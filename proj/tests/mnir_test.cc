// Copyright 2026 The TextDesign Authors.
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

#include "textdesign/mnir.h"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "synthetic.h"
#include "test_util.h"
#include "textdesign/error.h"

namespace textdesign {
namespace {

using testing::TokenNames;

Corpus LabeledCorpus(
    const std::vector<std::tuple<std::vector<int>, std::optional<std::string>,
                                 std::optional<int>>>& rows) {
  Corpus c;
  c.vocab = Vocabulary(TokenNames(std::get<0>(rows.at(0)).size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& [x, subject, label] = rows[i];
    std::vector<CountEntry> e;
    for (size_t j = 0; j < x.size(); ++j) {
      if (x[j] > 0) e.push_back({static_cast<int>(j), x[j]});
    }
    c.AddRow("d" + std::to_string(i), "", subject, label, e);
  }
  return c;
}

CollapsedCell Cell(int subject, int y, const Eigen::VectorXd& x) {
  CollapsedCell c;
  c.subject = subject;
  c.y = y;
  c.x = x;
  c.m = x.sum();
  c.documents = 1;
  return c;
}

TEST(SentimentScaleTest, ParsesAndValidates) {
  EXPECT_EQ(SentimentScale().levels(), (std::vector<int>{-1, 0, 1}));
  const SentimentScale s = SentimentScale::Parse("1,2,3,4,5");
  EXPECT_EQ(s.size(), 5);
  EXPECT_EQ(s.IndexOf(4), 3);
  EXPECT_EQ(s.IndexOf(9), -1);
  EXPECT_THROW(SentimentScale::Parse("1"), Error);
  EXPECT_THROW(SentimentScale::Parse("1,1"), Error);
  EXPECT_THROW(SentimentScale::Parse("2,1"), Error);
  EXPECT_THROW(SentimentScale::Parse("a,b"), Error);
}

TEST(PenaltyConfigTest, ParseValueAndSlope) {
  const PenaltyConfig d;
  EXPECT_DOUBLE_EQ(d.Value(0.5), 1.0 * std::log(2.0));
  EXPECT_DOUBLE_EQ(d.SlopeAtZero(), 2.0);
  const PenaltyConfig p = PenaltyConfig::Parse("lambda=3,tau=2,tol=1e-9");
  EXPECT_DOUBLE_EQ(p.lambda, 3);
  EXPECT_DOUBLE_EQ(p.tau, 2);
  EXPECT_DOUBLE_EQ(p.tol, 1e-9);
  const PenaltyConfig l1 = PenaltyConfig::Parse("l1=4");
  EXPECT_TRUE(l1.pure_l1);
  EXPECT_DOUBLE_EQ(l1.Value(-0.5), 2.0);
  EXPECT_THROW(PenaltyConfig::Parse("tau=0"), Error);
  EXPECT_THROW(PenaltyConfig::Parse("gamma=1"), Error);
  EXPECT_THROW(PenaltyConfig::Parse("lambda=x"), Error);
}

TEST(PenaltyConfigTest, LargeTauApproachesL1) {
  PenaltyConfig p;
  p.tau = 1e8;
  p.lambda = 2e8;
  EXPECT_NEAR(p.Value(0.3), 2.0 * 0.3, 1e-6);
}

TEST(CollapseCountsTest, SumsLabelOneDocuments) {
  const Corpus c = LabeledCorpus({{{1, 0}, {}, 1}, {{0, 1}, {}, 1}});
  const CollapsedCounts cc = CollapseCounts(c, {}, false);
  ASSERT_EQ(cc.cells.size(), 1u);
  EXPECT_EQ(cc.cells[0].x, Eigen::Vector2d(1, 1));
  EXPECT_EQ(cc.cells[0].m, 2);
  EXPECT_EQ(cc.cells[0].documents, 2);
}

TEST(CollapseCountsTest, SeventeenCellsForFiveSubjectsPlusGeneric) {
  std::vector<std::tuple<std::vector<int>, std::optional<std::string>,
                         std::optional<int>>>
      rows;
  for (const char* s : {"bachmann", "cain", "paul", "perry", "romney"}) {
    for (int y : {-1, 0, 1}) rows.push_back({{1, 2}, s, y});
  }
  rows.push_back({{3, 1}, std::nullopt, -1});
  rows.push_back({{1, 3}, std::nullopt, 1});
  rows.push_back({{1, 1}, "romney", std::nullopt});
  const CollapsedCounts cc = CollapseCounts(LabeledCorpus(rows), {}, true);
  EXPECT_EQ(cc.cells.size(), 17u);
  EXPECT_EQ(cc.excluded_unlabeled, 1);
  EXPECT_EQ(cc.cells[0].subject, kGenericSubject);
  EXPECT_EQ(cc.cells[1].subject, kGenericSubject);
  EXPECT_EQ(cc.subjects.size(), 5u);
}

TEST(CollapseCountsTest, SingletonCellsEqualDocumentCounts) {
  const Corpus c = LabeledCorpus(
      {{{1, 4, 0}, {}, -1}, {{2, 0, 3}, {}, 0}, {{0, 0, 5}, {}, 1}});
  const CollapsedCounts cc = CollapseCounts(c, {}, false);
  ASSERT_EQ(cc.cells.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(cc.cells[k].x, c.counts.DenseRow(k));
    EXPECT_EQ(cc.cells[k].m, c.total(k));
  }
}

TEST(CollapseCountsTest, CellTotalsMatchContributingColumns) {
  auto d = testing::DrawTopicCorpus(60, 15, 2, 20, 3);
  Eigen::VectorXd beta(2);
  beta << 2, -2;
  testing::AttachSentiment(d, beta, -0.5, 0.5, 1);
  const CollapsedCounts cc = CollapseCounts(d.corpus, {}, false);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(15);
  for (const auto& cell : cc.cells) {
    sum += cell.x;
    EXPECT_DOUBLE_EQ(cell.m, cell.x.sum());
  }
  EXPECT_EQ(sum, d.corpus.counts.ColumnTotals());
}

TEST(CollapseCountsTest, Errors) {
  const Corpus unlabeled = LabeledCorpus({{{1}, {}, std::nullopt}});
  EXPECT_THROW(CollapseCounts(unlabeled, {}, false), Error);
  const Corpus off = LabeledCorpus({{{1}, {}, 2}});
  EXPECT_THROW(CollapseCounts(off, {}, false), Error);
}

TEST(FitMnirTest, IdenticalCellsGiveZeroLoadingsAndPooledFrequencies) {
  CollapsedCounts cc;
  cc.vocab = Vocabulary(TokenNames(4));
  const Eigen::Vector4d x(5, 3, 1, 7);
  cc.cells = {Cell(kGenericSubject, -1, x), Cell(kGenericSubject, 1, x)};
  const MnirModel m = FitMnir(cc, {}, false);
  EXPECT_EQ(m.params.phi0, Eigen::Vector4d::Zero());
  const Eigen::VectorXd q = m.Probabilities(kGenericSubject, 1);
  EXPECT_LT((q - x / x.sum()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitMnirTest, ProbabilitiesSumToOne) {
  auto d = testing::DrawTopicCorpus(80, 20, 2, 30, 7);
  Eigen::VectorXd beta(2);
  beta << 3, -3;
  testing::AttachSentiment(d, beta, -0.7, 0.7, 2);
  for (int i = 0; i < d.corpus.size(); ++i) {
    d.corpus.subjects[i] = i % 3 == 0 ? std::optional<std::string>("a")
                                      : std::optional<std::string>();
  }
  const MnirModel m = FitMnir(CollapseCounts(d.corpus, {}, true), {}, true);
  for (int s : {kGenericSubject, 0}) {
    for (int y : {-1, 0, 1}) {
      EXPECT_NEAR(m.Probabilities(s, y).sum(), 1.0, 1e-10);
    }
  }
}

struct Simulated {
  CollapsedCounts cells;
  Eigen::VectorXd alpha, phi;
};

Simulated SimulateCells(int p, int nonzero, double m, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0, 1);
  std::uniform_real_distribution<double> mag(1, 2);
  Simulated s;
  s.alpha.resize(p);
  s.phi = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < p; ++j) s.alpha(j) = normal(rng);
  for (int k = 0; k < nonzero; ++k) {
    s.phi(k * (p / nonzero)) = (k % 2 ? 1 : -1) * mag(rng);
  }
  s.cells.vocab = Vocabulary(TokenNames(p));
  for (int y : {-1, 0, 1}) {
    const Eigen::VectorXd eta = s.alpha + y * s.phi;
    Eigen::VectorXd q = (eta.array() - eta.maxCoeff()).exp();
    q /= q.sum();
    const auto x = testing::DrawMultinomial(rng, static_cast<int>(m), q);
    Eigen::VectorXd xv(p);
    for (int j = 0; j < p; ++j) xv(j) = x[j];
    s.cells.cells.push_back(Cell(kGenericSubject, y, xv));
  }
  return s;
}

TEST(FitMnirTest, RecoversSparseLoadings) {
  const Simulated s = SimulateCells(50, 10, 1e5, 4);
  const MnirModel m = FitMnir(s.cells, {}, false);
  const Eigen::VectorXd& est = m.params.phi0;
  for (int j = 0; j < 50; ++j) {
    if (s.phi(j) != 0) {
      EXPECT_GT(est(j) * s.phi(j), 0) << "token " << j;
    }
  }
  const Eigen::ArrayXd a = est.array() - est.mean();
  const Eigen::ArrayXd b = s.phi.array() - s.phi.mean();
  EXPECT_GE((a * b).sum() / std::sqrt(a.square().sum() * b.square().sum()),
            0.9);
}

TEST(FitMnirTest, SatisfiesKktConditions) {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    const Simulated s = SimulateCells(30, 5, 2000, 10 + seed);
    const PenaltyConfig penalty;
    const MnirModel m = FitMnir(s.cells, penalty, false);
    EXPECT_TRUE(m.report.converged);
    const MnirParameters g = MnirLogLikelihoodGradient(m.params, s.cells);
    for (int j = 0; j < 30; ++j) {
      const double phi = m.params.phi0(j);
      if (phi == 0) {
        EXPECT_LE(std::abs(g.phi0(j)), penalty.SlopeAtZero() + 1e-6);
      } else {
        EXPECT_NEAR(g.phi0(j), std::copysign(penalty.Slope(std::abs(phi)), phi),
                    1e-6);
      }
    }
    EXPECT_LE(m.report.kkt_violation, 1e-6);
  }
}

TEST(FitMnirTest, PureL1GivesExactZerosAndKkt) {
  const Simulated s = SimulateCells(30, 3, 500, 21);
  const PenaltyConfig penalty = PenaltyConfig::Parse("l1=20");
  const MnirModel m = FitMnir(s.cells, penalty, false);
  EXPECT_GT((m.params.phi0.array() == 0).count(), 0);
  EXPECT_LE(MnirKktViolation(m.params, s.cells, penalty, false), 1e-6);
}

TEST(FitMnirTest, ObjectiveNeverIncreases) {
  const Simulated s = SimulateCells(40, 6, 3000, 5);
  const MnirModel m = FitMnir(s.cells, {}, false);
  const auto& path = m.report.objective_path;
  ASSERT_GE(path.size(), 2u);
  for (size_t t = 1; t < path.size(); ++t) {
    EXPECT_LE(path[t], path[t - 1] + 1e-9 * std::abs(path[t - 1]));
  }
}

TEST(FitMnirTest, InteractionFitConvergesWithKkt) {
  auto d = testing::DrawTopicCorpus(150, 25, 3, 40, 17);
  Eigen::VectorXd beta(3);
  beta << 4, 0, -4;
  testing::AttachSentiment(d, beta, -0.8, 0.8, 5);
  for (int i = 0; i < d.corpus.size(); ++i) {
    if (i % 3 == 1) d.corpus.subjects[i] = "x";
    if (i % 3 == 2) d.corpus.subjects[i] = "y";
  }
  const CollapsedCounts cc = CollapseCounts(d.corpus, {}, true);
  const MnirModel m = FitMnir(cc, {}, true);
  EXPECT_TRUE(m.interactions);
  EXPECT_TRUE(m.report.converged);
  EXPECT_LE(MnirKktViolation(m.params, cc, m.penalty, true), 1e-6);
}

TEST(FitMnirTest, ZeroSubjectBlocksReproduceMainEffectObjective) {
  auto d = testing::DrawTopicCorpus(90, 20, 2, 30, 18);
  Eigen::VectorXd beta(2);
  beta << 3, -3;
  testing::AttachSentiment(d, beta, -0.6, 0.6, 6);
  for (int i = 0; i < d.corpus.size(); ++i) {
    if (i % 2) d.corpus.subjects[i] = "s" + std::to_string(i % 4);
  }
  const CollapsedCounts pooled = CollapseCounts(d.corpus, {}, false);
  const CollapsedCounts split = CollapseCounts(d.corpus, {}, true);
  const MnirModel main = FitMnir(pooled, {}, false);
  MnirParameters padded =
      MnirParameters::Zero(static_cast<int>(split.subjects.size()), 20);
  padded.alpha0 = main.params.alpha0;
  padded.phi0 = main.params.phi0;
  const double a = MnirObjective(main.params, pooled, main.penalty);
  const double b = MnirObjective(padded, split, main.penalty);
  EXPECT_NEAR(a, b, 1e-8 * std::abs(a));
  // Fitting the split cells without interactions is the same problem.
  const MnirModel no_inter = FitMnir(split, {}, false);
  EXPECT_NEAR(MnirObjective(no_inter.params, split, no_inter.penalty), a,
              1e-6 * std::abs(a));
}

TEST(FitMnirTest, Errors) {
  CollapsedCounts cc;
  cc.vocab = Vocabulary(TokenNames(2));
  cc.cells = {Cell(kGenericSubject, 1, Eigen::Vector2d(1, 2))};
  EXPECT_THROW(FitMnir(cc, {}, false), Error);
  cc.cells.clear();
  EXPECT_THROW(FitMnir(cc, {}, false), Error);
  CollapsedCounts empty;
  EXPECT_THROW(FitMnir(empty, {}, false), Error);
}

TEST(FitMnirTest, ReportsNonConvergence) {
  const Simulated s = SimulateCells(30, 5, 2000, 30);
  PenaltyConfig penalty;
  penalty.max_sweeps = 1;
  const MnirModel m = FitMnir(s.cells, penalty, false);
  EXPECT_FALSE(m.report.converged);
  EXPECT_EQ(m.report.sweeps, 1);
  EXPECT_TRUE(m.params.phi0.allFinite());
}

double RelErr(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

TEST(MnirGradientTest, MatchesCentralDifferences) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal(0, 0.7);
  std::uniform_int_distribution<int> count(0, 9);
  for (int inst = 0; inst < 20; ++inst) {
    const int p = 3 + inst % 18;
    const int subjects = inst % 3;
    CollapsedCounts cc;
    cc.vocab = Vocabulary(TokenNames(p));
    for (int s = 0; s < subjects; ++s) cc.subjects.push_back("s" + std::to_string(s));
    for (int s = kGenericSubject; s < subjects; ++s) {
      for (int y : {-1, 0, 1}) {
        Eigen::VectorXd x(p);
        for (int j = 0; j < p; ++j) x(j) = count(rng);
        x(0) += 1;
        cc.cells.push_back(Cell(s, y, x));
      }
    }
    MnirParameters params = MnirParameters::Zero(subjects, p);
    for (int j = 0; j < p; ++j) {
      params.alpha0(j) = normal(rng);
      params.phi0(j) = normal(rng);
      for (int s = 0; s < subjects; ++s) {
        params.alpha_s(s, j) = normal(rng);
        params.phi_s(s, j) = normal(rng);
      }
    }
    const MnirParameters g = MnirLogLikelihoodGradient(params, cc);
    const double h = 1e-5;
    const auto check = [&](double& coord, double analytic) {
      const double saved = coord;
      coord = saved + h;
      const double up = MnirLogLikelihood(params, cc);
      coord = saved - h;
      const double down = MnirLogLikelihood(params, cc);
      coord = saved;
      EXPECT_LT(RelErr((up - down) / (2 * h), analytic), 1e-6);
    };
    for (int j = 0; j < p; ++j) {
      check(params.alpha0(j), g.alpha0(j));
      check(params.phi0(j), g.phi0(j));
      for (int s = 0; s < subjects; ++s) {
        check(params.alpha_s(s, j), g.alpha_s(s, j));
        check(params.phi_s(s, j), g.phi_s(s, j));
      }
    }
  }
}

// Every count vector of total m over p tokens.
void Compositions(int p, int m, std::vector<int>& x, int j,
                  const std::function<void(const std::vector<int>&)>& visit) {
  if (j == p - 1) {
    x[j] = m;
    visit(x);
    return;
  }
  for (int c = 0; c <= m; ++c) {
    x[j] = c;
    Compositions(p, m - c, x, j + 1, visit);
  }
}

TEST(SufficiencyTest, ProjectionCarriesAllSentimentInformation) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0, 1);
  std::uniform_int_distribution<int> loading(-2, 2);
  for (int p : {3, 6, 10}) {
    for (int m : {1, 4, 6}) {
      Eigen::VectorXd alpha(p), phi(p);
      for (int j = 0; j < p; ++j) {
        alpha(j) = normal(rng);
        phi(j) = loading(rng);
      }
      const std::vector<int> ys = {-1, 0, 1};
      const std::vector<double> prior = {0.3, 0.5, 0.2};
      std::vector<Eigen::VectorXd> logq;
      for (int y : ys) {
        const Eigen::VectorXd eta = alpha + y * phi;
        logq.push_back(eta.array() - std::log(eta.array().exp().sum()));
      }
      // Joint p(y, x) for every x, grouped by the integer projection.
      std::map<int, std::vector<double>> by_projection;
      std::vector<std::pair<int, std::vector<double>>> outcomes;
      std::vector<int> x(p);
      Compositions(p, m, x, 0, [&](const std::vector<int>& xs) {
        double log_coef = std::lgamma(m + 1.0);
        for (int c : xs) log_coef -= std::lgamma(c + 1.0);
        int z = 0;
        for (int j = 0; j < p; ++j) z += static_cast<int>(phi(j)) * xs[j];
        std::vector<double> joint(3);
        for (int k = 0; k < 3; ++k) {
          double ll = log_coef;
          for (int j = 0; j < p; ++j) ll += xs[j] * logq[k](j);
          joint[k] = prior[k] * std::exp(ll);
        }
        auto& group = by_projection[z];
        group.resize(3, 0.0);
        for (int k = 0; k < 3; ++k) group[k] += joint[k];
        outcomes.push_back({z, joint});
      });
      for (const auto& [z, joint] : outcomes) {
        const double full = joint[0] + joint[1] + joint[2];
        const auto& g = by_projection[z];
        const double reduced = g[0] + g[1] + g[2];
        for (int k = 0; k < 3; ++k) {
          EXPECT_NEAR(joint[k] / full, g[k] / reduced, 1e-12);
        }
      }
    }
  }
}

TEST(SrScoresTest, DotProductOverFrequencies) {
  MnirModel m;
  m.vocab = Vocabulary(std::vector<std::string>{"a", "b", "c"});
  m.params = MnirParameters::Zero(0, 3);
  m.params.phi0 << 1, -1, 0;
  const Corpus c = LabeledCorpus({{{2, 1, 1}, {}, {}}, {{20, 10, 10}, {}, {}}});
  Corpus renamed = c;
  renamed.vocab = m.vocab;
  const SRScores z = ComputeSrScores(m, renamed);
  EXPECT_DOUBLE_EQ(z.z0(0), 0.25);
  EXPECT_DOUBLE_EQ(z.z0(1), 0.25);
  EXPECT_FALSE(z.has_subject_scores);
}

TEST(SrScoresTest, SubjectScores) {
  MnirModel m;
  m.vocab = Vocabulary(TokenNames(2));
  m.subjects = {"a", "b"};
  m.interactions = true;
  m.params = MnirParameters::Zero(2, 2);
  m.params.phi_s.row(0) << 2, 0;  // subject b stays all zero
  const Corpus c = LabeledCorpus(
      {{{1, 1}, "a", {}}, {{3, 1}, "b", {}}, {{1, 0}, std::nullopt, {}},
       {{1, 0}, "zz", {}}});
  const SRScores z = ComputeSrScores(m, c);
  EXPECT_TRUE(z.has_subject_scores);
  EXPECT_DOUBLE_EQ(z.zs(0), 1.0);
  EXPECT_DOUBLE_EQ(z.zs(1), 0.0);
  EXPECT_DOUBLE_EQ(z.zs(2), 0.0);
  EXPECT_DOUBLE_EQ(z.zs(3), 0.0);
  EXPECT_EQ(z.subjects[2], "");
}

TEST(SrScoresTest, VocabularyMismatchNamesToken) {
  MnirModel m;
  m.vocab = Vocabulary(std::vector<std::string>{"a", "b"});
  m.params = MnirParameters::Zero(0, 2);
  Corpus c = LabeledCorpus({{{1, 1}, {}, {}}});
  c.vocab = Vocabulary(std::vector<std::string>{"a", "q"});
  try {
    ComputeSrScores(m, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'q'"), std::string::npos);
  }
}

TEST(MnirIoTest, ModelAndScoresRoundTrip) {
  testing::TempDir dir;
  const Simulated s = SimulateCells(12, 3, 500, 2);
  const MnirModel m = FitMnir(s.cells, PenaltyConfig::Parse("lambda=2"), false);
  WriteMnirModel(m, dir.File("m.bin"));
  const MnirModel r = ReadMnirModel(dir.File("m.bin"));
  EXPECT_EQ(r.params.phi0, m.params.phi0);
  EXPECT_EQ(r.params.alpha0, m.params.alpha0);
  EXPECT_EQ(r.vocab, m.vocab);
  EXPECT_EQ(r.penalty.lambda, 2);
  EXPECT_EQ(r.report.sweeps, m.report.sweeps);

  SRScores z;
  z.doc_ids = {"x", "y,z"};
  z.subjects = {"", "romney"};
  z.z0 = Eigen::Vector2d(0.1, -1.0 / 3);
  z.zs = Eigen::Vector2d(0, 2.5);
  z.has_subject_scores = true;
  WriteSrScores(z, dir.File("z.csv"));
  const SRScores zr = ReadSrScores(dir.File("z.csv"));
  EXPECT_EQ(zr.doc_ids, z.doc_ids);
  EXPECT_EQ(zr.subjects, z.subjects);
  EXPECT_EQ(zr.z0, z.z0);
  EXPECT_EQ(zr.zs, z.zs);
}

}  // namespace
}  // namespace textdesign
