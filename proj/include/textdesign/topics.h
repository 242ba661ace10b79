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

#ifndef TEXTDESIGN_TOPICS_H_
#define TEXTDESIGN_TOPICS_H_

// K-topic multinomial factor model
//
//   x_i ~ MN(omega_i1 theta_1 + ... + omega_iK theta_K, m_i),
//   omega_i ~ Dir(1/K),  theta_k ~ Dir(1/(K p)),
//
// fit by joint MAP in the natural (softmax) parametrization, which amounts to
// adding one to every Dirichlet concentration. The log posterior maximized is
//
//   L = sum_ij x_ij log(sum_k omega_ik theta_kj)
//       + a_w sum_ik log omega_ik + a_t sum_kj log theta_kj + const.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "textdesign/corpus.h"

namespace textdesign {

struct TopicPrior {
  double omega_concentration = 0;  // a_w, default 1/K
  double theta_concentration = 0;  // a_t, default 1/(K p)

  static TopicPrior Default(int k, int p);
};

struct TopicFitOptions {
  double tol = 1e-7;  // relative change in log posterior
  int max_iter = 1000;
  uint64_t seed = 0;
  // Independent initializations; the highest log posterior is kept.
  int restarts = 1;
};

struct TopicFitReport {
  int iterations = 0;
  double relative_change = 0;
  bool converged = false;
  // Log posterior after every EM iteration of the kept restart.
  std::vector<double> objective_path;
};

struct TopicModel {
  int k = 0;
  Eigen::MatrixXd theta;  // K x p, rows on the simplex
  Eigen::MatrixXd omega;  // n x K, rows on the simplex
  TopicPrior prior;
  double log_posterior = 0;
  TopicFitReport report;
  std::vector<std::string> doc_ids;
  Eigen::VectorXd doc_totals;  // m_i

  int num_docs() const { return static_cast<int>(omega.rows()); }
  int vocab_size() const { return static_cast<int>(theta.cols()); }

  // n x (K-1) natural parameters with lambda_i0 = 0 dropped:
  // lambda_{i,k-1} = log(omega_ik / omega_i1).
  Eigen::MatrixXd Lambda() const;
};

// EM-style block coordinate ascent; topics are returned sorted by usage
// sum_i omega_ik m_i, descending.
TopicModel FitTopics(const Corpus& corpus, int k, const TopicPrior& prior,
                     const TopicFitOptions& options = {});

// Log posterior L (without the multinomial and Dirichlet normalizing
// constants) for arbitrary simplex-valued theta and omega.
double TopicLogPosterior(const Corpus& corpus, const Eigen::MatrixXd& theta,
                         const Eigen::MatrixXd& omega,
                         const TopicPrior& prior);

struct MarginalLikelihood {
  double log_marginal = 0;
  double log_posterior = 0;      // including normalizing constants
  double log_det_hessian = 0;    // sum over blocks
  int dimension = 0;             // n (K-1) + K (p-1)
  int jittered_blocks = 0;       // blocks that needed diagonal jitter
};

// Laplace approximation of log p(X | K) with a block-diagonal Hessian: one
// (K-1) block per document and one (p-1) block per topic, each the
// curvature of a Dirichlet-multinomial log density in natural coordinates,
// c (diag(v) - v v') restricted to the free coordinates. Document blocks use
// c = m_i + K a_w; topic blocks use c = (expected topic token count) + p a_t.
MarginalLikelihood LogMarginal(const TopicModel& model, const Corpus& corpus);

struct TopicSelection {
  std::vector<int> ks;
  std::vector<double> log_marginals;
  int best_index = 0;
  TopicModel best;
};

// Fits every K in `grid` and keeps the largest approximate marginal
// likelihood. Ties go to the smaller K.
TopicSelection SelectTopicCount(const Corpus& corpus,
                                const std::vector<int>& grid,
                                const TopicFitOptions& options = {});

// Conditional posterior of one document's natural weights given theta.
struct WeightPosterior {
  std::string doc_id;
  Eigen::VectorXd mean;            // lambda-hat, K-1
  Eigen::MatrixXd precision;       // H_i, (K-1) x (K-1)
  Eigen::MatrixXd lambda_samples;  // B x (K-1)
  Eigen::MatrixXd samples;         // B x K, rows on the simplex
  bool jittered = false;
};

// H = scale (diag(w) - w w') over coordinates 2..K, scale = m + K a_w.
Eigen::MatrixXd WeightPrecision(const Eigen::VectorXd& omega, double scale);

WeightPosterior SampleWeights(const TopicModel& model, int doc_index, int draws,
                              uint64_t seed);

// Per-document draws for every document (B x K each).
std::vector<Eigen::MatrixXd> SampleAllWeights(const TopicModel& model,
                                              int draws, uint64_t seed);

// lift_kj = theta_kj / (column total j / grand total).
Eigen::MatrixXd TopicLift(const TopicModel& model, const Corpus& corpus);

Eigen::VectorXd Softmax(const Eigen::VectorXd& eta);

// Format, version 1: magic "TDTOPICS", u32 version, i32 K, f64 a_w, f64 a_t,
// f64 log_posterior, i32 iterations, f64 relative_change, bool converged,
// string list doc ids, vector totals, matrix theta, matrix omega.
void WriteTopicModel(const TopicModel& model, const std::string& path);
TopicModel ReadTopicModel(const std::string& path);

}  // namespace textdesign

#endif  // TEXTDESIGN_TOPICS_H_
