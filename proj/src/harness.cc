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

#include "textdesign/harness.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "textdesign/design.h"
#include "textdesign/error.h"
#include "textdesign/io.h"

namespace textdesign {

namespace {

uint64_t SplitMix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t RepetitionSeed(uint64_t seed, int repetition, uint64_t salt = 0) {
  return SplitMix(SplitMix(seed ^ salt) + static_cast<uint64_t>(repetition));
}

std::vector<int> Permutation(int n, uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::string StrategyName(Strategy s) {
  switch (s) {
    case Strategy::kMap:
      return "map";
    case Strategy::kMarginal:
      return "marginal";
    case Strategy::kPca:
      return "pca";
    case Strategy::kRandom:
      return "random";
  }
  return "?";
}

Strategy ParseStrategy(const std::string& name) {
  if (name == "map") return Strategy::kMap;
  if (name == "marginal") return Strategy::kMarginal;
  if (name == "pca") return Strategy::kPca;
  if (name == "random") return Strategy::kRandom;
  throw Error("unknown strategy: " + name);
}

std::string MetricName(ErrorMetric m) {
  return m == ErrorMetric::kMisclassification ? "misclassification" : "mae";
}

ErrorMetric ParseMetric(const std::string& name) {
  if (name == "misclassification" || name == "error") {
    return ErrorMetric::kMisclassification;
  }
  if (name == "mae") return ErrorMetric::kMeanAbsoluteError;
  throw Error("unknown metric: " + name);
}

double LearningCurve::Mean(size_t stratum, size_t strategy,
                           size_t size) const {
  const auto& reps = values.at(stratum).at(strategy).at(size);
  if (reps.empty()) return std::nan("");
  return std::accumulate(reps.begin(), reps.end(), 0.0) /
         static_cast<double>(reps.size());
}

double ErrorRate(ErrorMetric metric, const std::vector<int>& predicted,
                 const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw Error("prediction and truth sizes differ or are empty");
  }
  double total = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    total += metric == ErrorMetric::kMisclassification
                 ? (predicted[i] != truth[i])
                 : std::abs(predicted[i] - truth[i]);
  }
  return total / static_cast<double>(truth.size());
}

double EvaluateDesign(const Corpus& corpus, const std::vector<int>& train,
                      const ExperimentPlan& plan) {
  std::vector<int> truth;
  truth.reserve(corpus.size());
  for (int i = 0; i < corpus.size(); ++i) {
    if (!corpus.labels[i]) {
      throw Error("document " + corpus.ids[i] + " has no ground-truth label");
    }
    truth.push_back(*corpus.labels[i]);
  }
  const Corpus training = corpus.Subset(train);
  std::vector<int> train_labels;
  for (int i : train) train_labels.push_back(truth[i]);
  const std::set<int> distinct(train_labels.begin(), train_labels.end());

  std::vector<int> predicted;
  if (distinct.size() < 2) {
    // Nothing to regress on: every document gets the only observed level.
    predicted.assign(truth.size(), *distinct.begin());
  } else {
    const MnirModel mnir = FitMnir(CollapseCounts(training, plan.scale, false),
                                   plan.penalty, false);
    const SRScores all = ComputeSrScores(mnir, corpus);
    const ForwardModel fwd =
        FitForward(all.Subset(train), train_labels, plan.scale, plan.forward);
    predicted = Classify(fwd, all).levels;
  }
  return ErrorRate(plan.metric, predicted, truth);
}

DesignInputs PrepareDesignInputs(const Corpus& corpus,
                                 const ExperimentPlan& plan) {
  DesignInputs inputs;
  const auto uses = [&](Strategy s) {
    return std::find(plan.strategies.begin(), plan.strategies.end(), s) !=
           plan.strategies.end();
  };
  if (uses(Strategy::kMap) || uses(Strategy::kMarginal)) {
    TopicFitOptions options = plan.topic_options;
    options.seed = SplitMix(plan.seed ^ options.seed);
    inputs.topics = FitTopics(
        corpus, plan.topics,
        TopicPrior::Default(plan.topics, corpus.vocab_size()), options);
  }
  if (uses(Strategy::kPca)) {
    inputs.pca = PcaScores(corpus, plan.topics).values;
  }
  return inputs;
}

std::vector<int> DesignOrder(const Corpus& corpus, const DesignInputs& inputs,
                             Strategy strategy, int max_size, int repetition,
                             const ExperimentPlan& plan) {
  const int n = corpus.size();
  const std::vector<int> perm =
      Permutation(n, RepetitionSeed(plan.seed, repetition));
  if (strategy == Strategy::kRandom) {
    return {perm.begin(), perm.begin() + std::min(max_size, n)};
  }

  FactorScores scores;
  if (strategy == Strategy::kPca) {
    if (inputs.pca.size() == 0) throw Error("PCA scores not prepared");
    scores.values = inputs.pca;
    scores.source = FactorSource::kPrincipalComponents;
  } else {
    if (!inputs.topics) throw Error("topic model not prepared");
    scores = TopicScores(inputs.topics->omega);
  }

  DesignState state(scores.dims());
  int used = 0;
  while ((used < scores.dims() || !state.nonsingular()) && used < n) {
    state.AddSeed(perm[used], scores.values.row(perm[used]).transpose());
    ++used;
  }
  if (!state.nonsingular()) throw Error("could not seed a nonsingular design");
  const int target = std::max(max_size, used);

  if (strategy == Strategy::kMarginal) {
    const auto samples =
        SampleAllWeights(*inputs.topics, plan.posterior_draws,
                         RepetitionSeed(plan.seed, repetition, 0x5A5A));
    GreedyRank(scores, state, target, DesignVariant::kMarginal, &samples);
  } else {
    GreedyRank(scores, state, target, DesignVariant::kMap);
  }
  std::vector<int> order = state.selected();
  order.resize(std::min<size_t>(order.size(), max_size));
  return order;
}

LearningCurve RunDesignExperiment(const Corpus& corpus,
                                  const ExperimentPlan& plan) {
  if (plan.repetitions < 1) throw Error("repetitions must be >= 1");
  if (plan.sizes.empty()) throw Error("empty size grid");
  if (plan.strategies.empty()) throw Error("no strategies");
  for (size_t i = 1; i < plan.sizes.size(); ++i) {
    if (plan.sizes[i] <= plan.sizes[i - 1]) {
      throw Error("design sizes must be strictly increasing");
    }
  }
  if (plan.sizes.front() < plan.topics) {
    throw Error("smallest design size is below K=" +
                std::to_string(plan.topics));
  }
  for (int i = 0; i < corpus.size(); ++i) {
    if (!corpus.labels[i]) {
      throw Error("document " + corpus.ids[i] + " has no ground-truth label");
    }
  }

  LearningCurve curve;
  curve.strategies = plan.strategies;
  curve.sizes = plan.sizes;
  curve.strata = plan.strata.empty() ? std::vector<std::string>{""}
                                     : plan.strata;
  const int max_size = plan.sizes.back();
  for (const auto& stratum : curve.strata) {
    const Corpus pool =
        stratum.empty() ? corpus : corpus.SubjectSubset(stratum);
    if (max_size > pool.size()) {
      throw Error("design size " + std::to_string(max_size) +
                  " exceeds pool of " + std::to_string(pool.size()) +
                  (stratum.empty() ? "" : " for subject " + stratum));
    }
    const DesignInputs inputs = PrepareDesignInputs(pool, plan);
    auto& table = curve.values.emplace_back(
        plan.strategies.size(),
        std::vector<std::vector<double>>(plan.sizes.size()));
    for (int r = 0; r < plan.repetitions; ++r) {
      for (size_t s = 0; s < plan.strategies.size(); ++s) {
        const std::vector<int> order =
            DesignOrder(pool, inputs, plan.strategies[s], max_size, r, plan);
        for (size_t z = 0; z < plan.sizes.size(); ++z) {
          const std::vector<int> train(order.begin(),
                                       order.begin() + plan.sizes[z]);
          table[s][z].push_back(EvaluateDesign(pool, train, plan));
        }
      }
    }
  }
  return curve;
}

void WriteLearningCurve(const LearningCurve& curve, const std::string& path) {
  std::vector<CsvRow> rows;
  for (size_t t = 0; t < curve.strata.size(); ++t) {
    for (size_t s = 0; s < curve.strategies.size(); ++s) {
      for (size_t z = 0; z < curve.sizes.size(); ++z) {
        const auto& reps = curve.values[t][s][z];
        for (size_t r = 0; r < reps.size(); ++r) {
          rows.push_back({curve.strata[t], StrategyName(curve.strategies[s]),
                          std::to_string(curve.sizes[z]), std::to_string(r),
                          FormatDouble(reps[r])});
        }
      }
    }
  }
  WriteCsv(path, {"stratum", "strategy", "size", "repetition", "error"}, rows);
}

LearningPoint LearningPointFor(const Corpus& pool,
                               const std::vector<LabeledDocument>& labeled,
                               const std::string& subject,
                               const LearningOptions& options) {
  LearningPoint point;
  point.size = static_cast<int>(labeled.size());

  std::vector<int> rows;
  for (int i = 0; i < pool.size(); ++i) {
    if (pool.labels[i] && !pool.subjects[i]) rows.push_back(i);
  }
  const size_t generic = rows.size();
  for (const auto& doc : labeled) {
    const auto row = pool.FindId(doc.doc_id);
    if (!row) throw Error("labeled document not in pool: " + doc.doc_id);
    rows.push_back(*row);
  }
  Corpus training = pool.Subset(rows);
  std::set<int> levels;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (r >= generic) {
      training.labels[r] = labeled[r - generic].label;
      if (!training.subjects[r]) training.subjects[r] = subject;
    }
    levels.insert(*training.labels[r]);
  }
  if (levels.size() < 2) {
    point.skipped = true;
    return point;
  }

  const MnirModel mnir =
      FitMnir(CollapseCounts(training, options.scale, true), options.penalty,
              true);
  point.nonzero_subject_loadings =
      mnir.NonzeroSubjectLoadings(mnir.SubjectIndex(subject));
  std::vector<int> train_labels;
  for (const auto& l : training.labels) train_labels.push_back(*l);
  const ForwardModel fwd =
      FitForward(ComputeSrScores(mnir, training), train_labels, options.scale,
                 options.forward);

  std::vector<int> subject_rows;
  for (int i = 0; i < pool.size(); ++i) {
    if (pool.subjects[i] && *pool.subjects[i] == subject) {
      subject_rows.push_back(i);
    }
  }
  if (subject_rows.empty()) {
    subject_rows.resize(pool.size());
    std::iota(subject_rows.begin(), subject_rows.end(), 0);
  }
  Corpus target = pool.Subset(subject_rows);
  for (auto& s : target.subjects) {
    if (!s) s = subject;
  }
  const Classification cls = Classify(fwd, ComputeSrScores(mnir, target));
  point.mean_entropy = cls.entropy.mean();
  return point;
}

std::vector<LearningPoint> LearningMetrics(
    const Corpus& pool, const std::vector<LabeledDocument>& sequence,
    const std::string& subject, const std::vector<int>& prefix_sizes,
    const LearningOptions& options) {
  std::set<int> all_levels;
  for (const auto& doc : sequence) all_levels.insert(doc.label);
  std::vector<LearningPoint> points;
  for (int size : prefix_sizes) {
    if (size < 1 || size > static_cast<int>(sequence.size())) {
      throw Error("prefix size " + std::to_string(size) +
                  " outside labeled sequence of " +
                  std::to_string(sequence.size()));
    }
    const std::vector<LabeledDocument> prefix(sequence.begin(),
                                              sequence.begin() + size);
    std::set<int> seen;
    for (const auto& doc : prefix) seen.insert(doc.label);
    if (seen != all_levels) {
      LearningPoint skipped;
      skipped.size = size;
      skipped.skipped = true;
      points.push_back(skipped);
      continue;
    }
    points.push_back(LearningPointFor(pool, prefix, subject, options));
  }
  return points;
}

}  // namespace textdesign
