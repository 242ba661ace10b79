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

#ifndef TEXTDESIGN_FORWARD_H_
#define TEXTDESIGN_FORWARD_H_

// Proportional-odds forward regression of ordered sentiment on SR scores:
//
//   p(y <= c) = 1 / (1 + exp(beta0 z0 + beta_s zs - gamma_c)),
//
// with one cutpoint per non-top level and no subject-specific cutpoints, so
// a document with z = 0 receives the cutpoint-only baseline distribution.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "textdesign/mnir.h"

namespace textdesign {

// Student-t prior on each slope coefficient.
struct TPrior {
  double df = 7;
  double scale = 2.5;
  double center = 0;

  double LogDensity(double beta) const;  // up to a constant
  double Gradient(double beta) const;
  double Curvature(double beta) const;
};

struct ForwardOptions {
  TPrior prior;
  double tol = 1e-9;  // max-norm of the gradient
  int max_iter = 200;
};

struct ForwardFitReport {
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0;
  double log_likelihood = 0;
  double log_posterior = 0;
};

struct ForwardModel {
  // Levels seen in training, increasing. Unseen scale levels get no
  // probability mass.
  std::vector<int> levels;
  Eigen::VectorXd cutpoints;  // levels.size() - 1, strictly increasing
  double beta0 = 0;
  std::vector<std::string> subjects;
  Eigen::VectorXd beta_s;
  TPrior prior;
  ForwardFitReport report;

  int SubjectIndex(const std::string& subject) const;
};

// Log likelihood of the proportional-odds model in the unconstrained
// parametrization theta = (gamma_1, log gaps..., beta0, beta_s...).
class OrdinalLikelihood {
 public:
  // `level_index[i]` is in [0, num_levels); `subjects` names the beta_s
  // slots and rows whose subject is not listed contribute no zs term.
  OrdinalLikelihood(const SRScores& scores, std::vector<int> level_index,
                    int num_levels, std::vector<std::string> subjects);

  int num_params() const { return num_levels_ - 1 + 1 + num_subjects(); }
  int num_subjects() const { return static_cast<int>(subjects_.size()); }

  double Value(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd Gradient(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd Hessian(const Eigen::VectorXd& theta) const;

  // Cutpoints implied by theta.
  Eigen::VectorXd Cutpoints(const Eigen::VectorXd& theta) const;

 private:
  struct Row {
    double z0;
    double zs;
    int subject;  // -1 when no beta_s applies
    int level;
  };

  double Eta(const Eigen::VectorXd& theta, const Row& row) const;

  int num_levels_;
  std::vector<std::string> subjects_;
  std::vector<Row> rows_;
};

// MAP fit by damped Newton with step halving. Throws when fewer than two
// levels occur in `labels`.
ForwardModel FitForward(const SRScores& scores, const std::vector<int>& labels,
                        const SentimentScale& scale,
                        const ForwardOptions& options = {});

// n x levels matrix of class probabilities.
Eigen::MatrixXd PredictProbs(const ForwardModel& model,
                             const SRScores& scores);

struct Classification {
  std::vector<int> levels;
  Eigen::VectorXd entropy;  // nats
};

// Most probable level; ties resolve toward the middle of the scale.
Classification Classify(const ForwardModel& model, const SRScores& scores);
int ArgmaxTowardMiddle(const Eigen::VectorXd& probs);
double Entropy(const Eigen::VectorXd& probs);

// Format, version 1: magic "TDFORWRD", u32 version, i32 level count,
// levels as i32, cutpoints, f64 beta0, subjects, beta_s, prior (3 f64).
void WriteForwardModel(const ForwardModel& model, const std::string& path);
ForwardModel ReadForwardModel(const std::string& path);

}  // namespace textdesign

#endif  // TEXTDESIGN_FORWARD_H_
