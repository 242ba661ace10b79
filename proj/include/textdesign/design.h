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

#ifndef TEXTDESIGN_DESIGN_H_
#define TEXTDESIGN_DESIGN_H_

// Greedy D-optimal document ranking in a K-dimensional factor space.
//
// With A_t = W_t' W_t for the t selected factor rows, adding row w gives
// |A_t + w w'| = |A_t| (1 + w' A_t^{-1} w), so each step picks the candidate
// with the largest gain g(w) = w' A_t^{-1} w and updates A_t^{-1} by
// Sherman-Morrison.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "textdesign/corpus.h"

namespace textdesign {

enum class FactorSource { kTopicWeights, kPrincipalComponents, kOther };

struct FactorScores {
  Eigen::MatrixXd values;  // n x K
  FactorSource source = FactorSource::kOther;
  // Component variances, principal components only.
  Eigen::VectorXd explained_variance;
  double total_variance = 0;

  int rows() const { return static_cast<int>(values.rows()); }
  int dims() const { return static_cast<int>(values.cols()); }
};

class DesignState {
 public:
  // Full inverse and log-determinant refresh cadence.
  static constexpr int kRefreshInterval = 50;

  explicit DesignState(int dims);

  const std::vector<int>& selected() const { return selected_; }
  const Eigen::MatrixXd& info() const { return info_; }
  const Eigen::MatrixXd& info_inv() const { return info_inv_; }
  double log_det() const { return log_det_; }
  bool nonsingular() const { return nonsingular_; }
  int dims() const { return static_cast<int>(info_.rows()); }

  bool Contains(int index) const;
  // Adds a row to the information matrix only; inverse is recomputed.
  void AddSeed(int index, const Eigen::VectorXd& w);
  // Rank-one update given the precomputed gain g = w' A^{-1} w.
  void AddUpdate(int index, const Eigen::VectorXd& w, double gain);
  // Recomputes inverse and log-determinant from `info`.
  void Refresh();
  double Gain(const Eigen::VectorXd& w) const;

  // max |A A^{-1} - I|.
  double InverseResidual() const;
  // Log-determinant of `info` computed directly.
  double DirectLogDet() const;

 private:
  std::vector<int> selected_;
  std::vector<bool> in_design_;
  Eigen::MatrixXd info_;
  Eigen::MatrixXd info_inv_;
  double log_det_ = -std::numeric_limits<double>::infinity();
  bool nonsingular_ = false;
  int updates_since_refresh_ = 0;
};

struct SeedReport {
  int extra_draws = 0;  // documents beyond K needed for nonsingularity
};

// Simple random sample of K documents, extended at random until the
// information matrix is nonsingular.
DesignState SeedDesign(const FactorScores& scores, int k, uint64_t seed,
                       SeedReport* report = nullptr);

// Seeds from an explicit, already-ordered index list.
DesignState SeedDesignFrom(const FactorScores& scores,
                           const std::vector<int>& indices);

enum class DesignVariant { kMap, kMarginal };

struct RankStep {
  int index;
  double gain;
  double log_det;
};

// Extends `state` greedily until it holds `t_max` documents (the seeds
// count toward the total) or the pool is exhausted. For kMarginal,
// `samples[i]` holds B x K weight draws for document i; the selection score
// is the average gain over draws and the information update uses the row of
// `scores`. Ties go to the lowest index.
std::vector<RankStep> GreedyRank(
    const FactorScores& scores, DesignState& state, int t_max,
    DesignVariant variant = DesignVariant::kMap,
    const std::vector<Eigen::MatrixXd>* samples = nullptr);

// First K principal-component scores of the centered row-frequency matrix.
// Each component's largest-magnitude loading is positive.
FactorScores PcaScores(const Corpus& corpus, int k);
FactorScores PcaScores(const Eigen::MatrixXd& frequencies, int k,
                       Eigen::MatrixXd* loadings = nullptr);

FactorScores TopicScores(const Eigen::MatrixXd& omega);

}  // namespace textdesign

#endif  // TEXTDESIGN_DESIGN_H_
