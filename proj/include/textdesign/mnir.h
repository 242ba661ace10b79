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

#ifndef TEXTDESIGN_MNIR_H_
#define TEXTDESIGN_MNIR_H_

// Multinomial inverse regression on collapsed counts.
//
// Token counts summed over every (subject s, sentiment y) cell follow
// x_sy ~ MN(q_sy, m_sy) with q_syj proportional to exp(eta_syj) and
//
//   eta_syj = alpha0_j + alpha_sj + y (phi0_j + phi_sj),
//
// where the subject blocks are absent for the generic stratum. Loadings are
// estimated by penalized MAP with the log penalty lambda log(1 + |phi|/tau),
// and documents are summarized by z0 = phi0' f_i and zs = phi_s' f_i.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "textdesign/corpus.h"

namespace textdesign {

class SentimentScale {
 public:
  // Levels must be strictly increasing, at least two of them.
  SentimentScale();
  explicit SentimentScale(std::vector<int> levels);
  // Comma-separated codes, e.g. "-1,0,1".
  static SentimentScale Parse(const std::string& text);

  const std::vector<int>& levels() const { return levels_; }
  int size() const { return static_cast<int>(levels_.size()); }
  bool Contains(int level) const;
  // Position of `level`, or -1.
  int IndexOf(int level) const;

 private:
  std::vector<int> levels_;
};

// Subject index for the generic (subject-free) stratum.
inline constexpr int kGenericSubject = -1;

struct CollapsedCell {
  int subject = kGenericSubject;
  int y = 0;
  Eigen::VectorXd x;  // summed token counts
  double m = 0;       // sum of x
  int documents = 0;
};

struct CollapsedCounts {
  Vocabulary vocab;
  std::vector<std::string> subjects;
  std::vector<CollapsedCell> cells;
  int excluded_unlabeled = 0;

  int vocab_size() const { return static_cast<int>(vocab.size()); }
};

// One cell per observed (subject, label) pair, in (subject, label) order
// with the generic stratum first. Without `with_subjects` every labeled row
// lands in the generic stratum.
CollapsedCounts CollapseCounts(const Corpus& corpus,
                               const SentimentScale& scale,
                               bool with_subjects);

struct PenaltyConfig {
  double lambda = 1.0;
  double tau = 0.5;
  // Plain L1 with rate `l1_rate` (the tau -> infinity limit).
  bool pure_l1 = false;
  double l1_rate = 2.0;
  double intercept_ridge = 1e-6;
  double tol = 1e-7;  // relative objective change between sweeps
  // Largest allowed stationarity violation (see MnirKktViolation) before a
  // fit counts as converged.
  double kkt_tol = 1e-7;
  int max_sweeps = 10000;

  double Value(double phi) const;
  // Derivative of the penalty in |phi|.
  double Slope(double abs_phi) const;
  double SlopeAtZero() const { return Slope(0.0); }

  // "lambda=1,tau=0.5" or "l1=2", plus optional tol= and kkt=; unspecified keys keep their defaults.
  static PenaltyConfig Parse(const std::string& text);
};

struct MnirParameters {
  Eigen::VectorXd alpha0;
  Eigen::VectorXd phi0;
  Eigen::MatrixXd alpha_s;  // subjects x p
  Eigen::MatrixXd phi_s;    // subjects x p

  static MnirParameters Zero(int subjects, int p);
};

struct MnirFitReport {
  int sweeps = 0;
  bool converged = false;
  std::vector<double> objective_path;  // penalized objective per sweep
  double kkt_violation = 0;
  int nonzero_main = 0;
  std::vector<int> nonzero_subject;
};

struct MnirModel {
  Vocabulary vocab;
  std::vector<std::string> subjects;
  bool interactions = false;
  MnirParameters params;
  PenaltyConfig penalty;
  MnirFitReport report;

  // Token probabilities q for a subject (or kGenericSubject) and level y.
  Eigen::VectorXd Probabilities(int subject, double y) const;
  int SubjectIndex(const std::string& subject) const;
  int NonzeroSubjectLoadings(int subject) const;
};

// Multinomial log likelihood of the cells, dropping multinomial
// coefficients: sum_c [x_c' eta_c - m_c log sum_j exp(eta_cj)].
double MnirLogLikelihood(const MnirParameters& params,
                         const CollapsedCounts& cells);
MnirParameters MnirLogLikelihoodGradient(const MnirParameters& params,
                                         const CollapsedCounts& cells);
// Negative log likelihood plus loading penalties plus intercept ridge.
double MnirObjective(const MnirParameters& params, const CollapsedCounts& cells,
                     const PenaltyConfig& penalty);

// Largest violation of the first-order conditions of MnirObjective over the
// free coordinates: intercept gradients, and for loadings either
// |dL/dphi| - slope(0) at zero or |dL/dphi - sign(phi) slope(|phi|)|.
// Subject blocks count only when `interactions` is set.
double MnirKktViolation(const MnirParameters& params,
                        const CollapsedCounts& cells,
                        const PenaltyConfig& penalty, bool interactions);

// Coordinate descent: tokens in vocabulary order, main effects before
// interactions. Loadings use a majorize-minimize step on the concave
// penalty, so the objective never increases. With `interactions` false, the
// subject blocks stay at zero.
MnirModel FitMnir(const CollapsedCounts& cells, const PenaltyConfig& penalty,
                  bool interactions = true);

struct SRScores {
  std::vector<std::string> doc_ids;
  std::vector<std::string> subjects;  // empty for generic
  Eigen::VectorXd z0;
  Eigen::VectorXd zs;  // zero without interactions or unknown subject
  bool has_subject_scores = false;

  int size() const { return static_cast<int>(z0.size()); }
  SRScores Subset(const std::vector<int>& rows) const;
};

SRScores ComputeSrScores(const MnirModel& model, const Corpus& corpus);

// Format, version 1: magic "TDMNIRMD", u32 version, vocabulary, subjects,
// bool interactions, penalty (lambda, tau, pure_l1, l1_rate, ridge, tol,
// kkt_tol, i32 sweep limit), report (i32 sweeps, bool converged, f64 KKT
// violation), alpha0, phi0, alpha_s, phi_s.
void WriteMnirModel(const MnirModel& model, const std::string& path);
MnirModel ReadMnirModel(const std::string& path);

// CSV with columns doc_id, subject, z0, zs.
void WriteSrScores(const SRScores& scores, const std::string& path);
SRScores ReadSrScores(const std::string& path);

}  // namespace textdesign

#endif  // TEXTDESIGN_MNIR_H_
