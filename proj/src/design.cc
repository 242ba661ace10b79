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

#include "textdesign/design.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "textdesign/error.h"

namespace textdesign {

namespace {
// Relative eigenvalue floor below which the information matrix is singular.
constexpr double kSingularTol = 1e-10;

double QuadraticForm(const Eigen::VectorXd& w, const Eigen::MatrixXd& a_inv) {
  return w.dot(a_inv * w);
}
}  // namespace

DesignState::DesignState(int dims)
    : info_(Eigen::MatrixXd::Zero(dims, dims)),
      info_inv_(Eigen::MatrixXd::Zero(dims, dims)) {
  if (dims < 1) throw Error("design dimension must be >= 1");
}

bool DesignState::Contains(int index) const {
  return index >= 0 && static_cast<size_t>(index) < in_design_.size() &&
         in_design_[index];
}

void DesignState::AddSeed(int index, const Eigen::VectorXd& w) {
  if (Contains(index)) {
    throw Error("document " + std::to_string(index) + " already selected");
  }
  if (static_cast<size_t>(index) >= in_design_.size()) {
    in_design_.resize(index + 1, false);
  }
  in_design_[index] = true;
  selected_.push_back(index);
  info_.noalias() += w * w.transpose();
  Refresh();
}

void DesignState::AddUpdate(int index, const Eigen::VectorXd& w, double gain) {
  if (!nonsingular_) throw Error("rank-one update on singular design");
  if (Contains(index)) {
    throw Error("document " + std::to_string(index) + " already selected");
  }
  if (static_cast<size_t>(index) >= in_design_.size()) {
    in_design_.resize(index + 1, false);
  }
  in_design_[index] = true;
  selected_.push_back(index);
  info_.noalias() += w * w.transpose();
  if (++updates_since_refresh_ >= kRefreshInterval) {
    Refresh();
    return;
  }
  const Eigen::VectorXd u = info_inv_ * w;
  info_inv_.noalias() -= (u * u.transpose()) / (1.0 + gain);
  info_inv_ = 0.5 * (info_inv_ + info_inv_.transpose()).eval();
  log_det_ += std::log1p(gain);
}

void DesignState::Refresh() {
  updates_since_refresh_ = 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info_,
                                                     Eigen::EigenvaluesOnly);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  nonsingular_ = top > 0 && eig.eigenvalues().minCoeff() > kSingularTol * top;
  if (!nonsingular_) {
    info_inv_.setZero();
    log_det_ = -std::numeric_limits<double>::infinity();
    return;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(info_);
  if (llt.info() != Eigen::Success) {
    nonsingular_ = false;
    info_inv_.setZero();
    log_det_ = -std::numeric_limits<double>::infinity();
    return;
  }
  info_inv_ = llt.solve(Eigen::MatrixXd::Identity(dims(), dims()));
  log_det_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double DesignState::Gain(const Eigen::VectorXd& w) const {
  return QuadraticForm(w, info_inv_);
}

double DesignState::InverseResidual() const {
  return (info_ * info_inv_ - Eigen::MatrixXd::Identity(dims(), dims()))
      .cwiseAbs()
      .maxCoeff();
}

double DesignState::DirectLogDet() const {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(info_);
  return lu.matrixLU().diagonal().cwiseAbs().array().log().sum();
}

DesignState SeedDesignFrom(const FactorScores& scores,
                           const std::vector<int>& indices) {
  DesignState state(scores.dims());
  for (int i : indices) {
    if (i < 0 || i >= scores.rows()) throw Error("seed index out of range");
    state.AddSeed(i, scores.values.row(i).transpose());
  }
  return state;
}

DesignState SeedDesign(const FactorScores& scores, int k, uint64_t seed,
                       SeedReport* report) {
  const int n = scores.rows();
  if (k < 1) throw Error("seed size must be >= 1");
  if (n < k) {
    throw Error("pool of " + std::to_string(n) +
                " documents is smaller than K=" + std::to_string(k));
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DesignState state(scores.dims());
  int used = 0;
  for (; used < k; ++used) {
    state.AddSeed(order[used], scores.values.row(order[used]).transpose());
  }
  while (!state.nonsingular() && used < n) {
    state.AddSeed(order[used], scores.values.row(order[used]).transpose());
    ++used;
  }
  if (!state.nonsingular()) {
    throw Error("information matrix singular after drawing all " +
                std::to_string(n) + " documents");
  }
  if (report) report->extra_draws = used - k;
  return state;
}

std::vector<RankStep> GreedyRank(const FactorScores& scores,
                                 DesignState& state, int t_max,
                                 DesignVariant variant,
                                 const std::vector<Eigen::MatrixXd>* samples) {
  const int n = scores.rows();
  if (scores.dims() != state.dims()) {
    throw Error("factor scores and design state differ in dimension");
  }
  if (!state.nonsingular()) throw Error("design state is singular");
  if (t_max < static_cast<int>(state.selected().size())) {
    throw Error("t_max=" + std::to_string(t_max) +
                " is below the current design size " +
                std::to_string(state.selected().size()));
  }
  if (variant == DesignVariant::kMarginal) {
    if (!samples || static_cast<int>(samples->size()) != n) {
      throw Error("marginal design needs weight draws for every document");
    }
    for (const auto& s : *samples) {
      if (s.rows() < 1 || s.cols() != scores.dims()) {
        throw Error("marginal design draws must be B x K with B >= 1");
      }
    }
  }

  std::vector<RankStep> steps;
  const int target = std::min(t_max, n);
  while (static_cast<int>(state.selected().size()) < target) {
    const Eigen::MatrixXd& a_inv = state.info_inv();
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (state.Contains(i)) continue;
      double score = 0;
      if (variant == DesignVariant::kMap) {
        score = QuadraticForm(scores.values.row(i).transpose(), a_inv);
      } else {
        // Same arithmetic per draw as the MAP branch, so a single MAP draw
        // reproduces the MAP ranking bit for bit.
        const Eigen::MatrixXd& draws = (*samples)[i];
        for (Eigen::Index b = 0; b < draws.rows(); ++b) {
          score += QuadraticForm(draws.row(b).transpose(), a_inv);
        }
        score /= static_cast<double>(draws.rows());
      }
      if (!std::isfinite(score)) {
        throw Error("non-finite design gain for document " +
                    std::to_string(i));
      }
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    const Eigen::VectorXd w = scores.values.row(best).transpose();
    const double gain =
        variant == DesignVariant::kMap ? best_score : state.Gain(w);
    state.AddUpdate(best, w, gain);
    steps.push_back({best, best_score, state.log_det()});
  }
  return steps;
}

FactorScores TopicScores(const Eigen::MatrixXd& omega) {
  FactorScores s;
  s.values = omega;
  s.source = FactorSource::kTopicWeights;
  return s;
}

FactorScores PcaScores(const Corpus& corpus, int k) {
  return PcaScores(corpus.counts.Frequencies(), k);
}

FactorScores PcaScores(const Eigen::MatrixXd& frequencies, int k,
                       Eigen::MatrixXd* loadings) {
  const Eigen::Index n = frequencies.rows();
  const Eigen::Index p = frequencies.cols();
  if (k < 1) throw Error("number of components must be >= 1");
  if (n <= k) {
    throw Error("PCA needs more documents than components (n=" +
                std::to_string(n) + ", K=" + std::to_string(k) + ")");
  }
  const Eigen::MatrixXd centered =
      frequencies.rowwise() - frequencies.colwise().mean();

  // Eigendecomposition of whichever Gram matrix is smaller.
  const bool tall = p <= n;
  const Eigen::MatrixXd gram = tall ? Eigen::MatrixXd(centered.transpose() * centered)
                                    : Eigen::MatrixXd(centered * centered.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw Error("PCA eigensolver failed");
  const Eigen::VectorXd& evals = eig.eigenvalues();  // ascending
  const Eigen::Index m = evals.size();
  const double top = std::max(evals[m - 1], 0.0);
  int rank = 0;
  for (Eigen::Index c = 0; c < m; ++c) {
    if (top > 0 && evals[c] > 1e-10 * top) ++rank;
  }
  if (rank < k) {
    throw Error("centered frequency matrix has rank " + std::to_string(rank) +
                " < K=" + std::to_string(k));
  }

  Eigen::MatrixXd v(p, k);
  Eigen::VectorXd variance(k);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index col = m - 1 - c;
    if (tall) {
      v.col(c) = eig.eigenvectors().col(col);
    } else {
      v.col(c) = centered.transpose() * eig.eigenvectors().col(col) /
                 std::sqrt(evals[col]);
    }
    variance[c] = evals[col] / static_cast<double>(n - 1);
    Eigen::Index arg;
    v.col(c).cwiseAbs().maxCoeff(&arg);
    if (v(arg, c) < 0) v.col(c) = -v.col(c);
  }

  FactorScores s;
  s.values = centered * v;
  s.source = FactorSource::kPrincipalComponents;
  s.explained_variance = variance;
  s.total_variance = centered.squaredNorm() / static_cast<double>(n - 1);
  if (loadings) *loadings = v;
  return s;
}

}  // namespace textdesign
