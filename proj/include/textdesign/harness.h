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

#ifndef TEXTDESIGN_HARNESS_H_
#define TEXTDESIGN_HARNESS_H_

// Repeated-design learning-curve experiments and sequential learning
// metrics over the full MNIR + forward pipeline.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "textdesign/corpus.h"
#include "textdesign/forward.h"
#include "textdesign/mnir.h"
#include "textdesign/topics.h"

namespace textdesign {

enum class Strategy { kMap, kMarginal, kPca, kRandom };
enum class ErrorMetric { kMisclassification, kMeanAbsoluteError };

std::string StrategyName(Strategy s);
Strategy ParseStrategy(const std::string& name);
std::string MetricName(ErrorMetric m);
ErrorMetric ParseMetric(const std::string& name);

struct ExperimentPlan {
  std::vector<Strategy> strategies = {Strategy::kMap, Strategy::kRandom};
  // Cumulative design sizes (seed documents included), strictly increasing.
  std::vector<int> sizes;
  int repetitions = 1;
  uint64_t seed = 0;
  ErrorMetric metric = ErrorMetric::kMisclassification;
  // When nonempty, every subject is run as an independent stratum.
  std::vector<std::string> strata;
  int topics = 5;  // K for the factorization and PCA
  int posterior_draws = 50;
  SentimentScale scale;
  PenaltyConfig penalty;
  ForwardOptions forward;
  TopicFitOptions topic_options;
};

struct LearningCurve {
  std::vector<std::string> strata;  // {""} when unstratified
  std::vector<Strategy> strategies;
  std::vector<int> sizes;
  // values[stratum][strategy][size][repetition]
  std::vector<std::vector<std::vector<std::vector<double>>>> values;

  double Mean(size_t stratum, size_t strategy, size_t size) const;
};

// Misclassification rate or mean absolute error of `predicted` vs `truth`.
double ErrorRate(ErrorMetric metric, const std::vector<int>& predicted,
                 const std::vector<int>& truth);

// Fits MNIR + forward on `train` rows of `corpus` and returns the error of
// the maximum-probability class over every row.
double EvaluateDesign(const Corpus& corpus, const std::vector<int>& train,
                      const ExperimentPlan& plan);

// Everything needed to order one stratum's pool, computed once.
struct DesignInputs {
  std::optional<TopicModel> topics;
  Eigen::MatrixXd pca;
};

DesignInputs PrepareDesignInputs(const Corpus& corpus,
                                 const ExperimentPlan& plan);

// Full ordering of `max_size` documents for one strategy and repetition.
// Every strategy starts from the same seeded random permutation, whose first
// K documents seed the D-optimal searches.
std::vector<int> DesignOrder(const Corpus& corpus, const DesignInputs& inputs,
                             Strategy strategy, int max_size, int repetition,
                             const ExperimentPlan& plan);

LearningCurve RunDesignExperiment(const Corpus& corpus,
                                  const ExperimentPlan& plan);

// Tidy CSV: stratum, strategy, size, repetition, error.
void WriteLearningCurve(const LearningCurve& curve, const std::string& path);

struct LabeledDocument {
  std::string doc_id;
  int label;
};

struct LearningPoint {
  int size = 0;
  bool skipped = false;
  int nonzero_subject_loadings = 0;
  double mean_entropy = 0;
};

struct LearningOptions {
  SentimentScale scale;
  PenaltyConfig penalty;
  ForwardOptions forward;
};

// One point for a given labeled prefix: refits the interaction MNIR on the
// prefix plus any pool rows that carry a label and no subject, then reports
// the subject's nonzero loadings and the mean entropy of the forward
// predictions over the subject's pool rows.
LearningPoint LearningPointFor(const Corpus& pool,
                               const std::vector<LabeledDocument>& labeled,
                               const std::string& subject,
                               const LearningOptions& options = {});

// Points for every prefix size in `prefix_sizes`. Prefixes that miss one
// of the levels present in the full sequence are skipped and flagged.
std::vector<LearningPoint> LearningMetrics(
    const Corpus& pool, const std::vector<LabeledDocument>& sequence,
    const std::string& subject, const std::vector<int>& prefix_sizes,
    const LearningOptions& options = {});

}  // namespace textdesign

#endif  // TEXTDESIGN_HARNESS_H_
