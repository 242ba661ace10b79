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

// Synthetic corpora drawn from the topic model, shared by the unit and
// acceptance tests.

#ifndef TEXTDESIGN_TESTS_SYNTHETIC_H_
#define TEXTDESIGN_TESTS_SYNTHETIC_H_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "textdesign/corpus.h"

namespace textdesign::testing {

inline Eigen::VectorXd DrawDirichlet(std::mt19937_64& rng, int dim,
                                     double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd v(dim);
  for (int j = 0; j < dim; ++j) v(j) = gamma(rng) + 1e-300;
  return v / v.sum();
}

inline std::vector<int> DrawMultinomial(std::mt19937_64& rng, int m,
                                        const Eigen::VectorXd& q) {
  std::vector<int> x(q.size(), 0);
  double rest = 1.0;
  int left = m;
  for (Eigen::Index j = 0; j + 1 < q.size() && left > 0; ++j) {
    const double pj = rest > 0 ? std::clamp(q(j) / rest, 0.0, 1.0) : 0.0;
    std::binomial_distribution<int> b(left, pj);
    x[j] = b(rng);
    left -= x[j];
    rest -= q(j);
  }
  x[q.size() - 1] += left;
  return x;
}

inline std::vector<std::string> TokenNames(int p) {
  std::vector<std::string> v;
  for (int j = 0; j < p; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%04d", j);
    v.emplace_back(buf);
  }
  return v;
}

struct TopicData {
  Corpus corpus;
  Eigen::MatrixXd theta;  // K x p
  Eigen::MatrixXd omega;  // n x K
};

// Documents from the topic model. With `disjoint`, topic k puts all of its
// mass uniformly on its own block of p/K tokens.
inline TopicData DrawTopicCorpus(int n, int p, int k, int length,
                                 uint64_t seed, bool disjoint = false,
                                 double topic_alpha = 0.1,
                                 double weight_alpha = 0.5) {
  std::mt19937_64 rng(seed);
  TopicData d;
  d.theta.resize(k, p);
  for (int t = 0; t < k; ++t) {
    if (disjoint) {
      d.theta.row(t).setZero();
      const int block = p / k;
      for (int j = t * block; j < (t + 1) * block; ++j) {
        d.theta(t, j) = 1.0 / block;
      }
    } else {
      d.theta.row(t) = DrawDirichlet(rng, p, topic_alpha).transpose();
    }
  }
  d.omega.resize(n, k);
  d.corpus.vocab = Vocabulary(TokenNames(p));
  d.corpus.counts = CountMatrix(p);
  for (int i = 0; i < n; ++i) {
    d.omega.row(i) = DrawDirichlet(rng, k, weight_alpha).transpose();
    const Eigen::VectorXd q = (d.omega.row(i) * d.theta).transpose();
    const auto x = DrawMultinomial(rng, length, q);
    std::vector<CountEntry> row;
    for (int j = 0; j < p; ++j) {
      if (x[j] > 0) row.push_back({j, x[j]});
    }
    d.corpus.AddRow("d" + std::to_string(i), "", std::nullopt, std::nullopt,
                    std::move(row));
  }
  return d;
}

// Ordered labels in {-1, 0, 1} from a latent score linear in omega with
// logistic noise.
inline void AttachSentiment(TopicData& d, const Eigen::VectorXd& beta,
                            double c1, double c2, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  for (int i = 0; i < d.corpus.size(); ++i) {
    const double uu = u(rng);
    const double s = d.omega.row(i).dot(beta) + std::log(uu / (1.0 - uu));
    d.corpus.labels[i] = s < c1 ? -1 : (s < c2 ? 0 : 1);
  }
}

}  // namespace textdesign::testing

#endif  // TEXTDESIGN_TESTS_SYNTHETIC_H_
