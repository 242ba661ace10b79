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

#include "textdesign/topics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "textdesign/error.h"
#include "textdesign/io.h"

namespace textdesign {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kJitter = 1e-8;

double SafeLog(double v) { return std::log(std::max(v, kProbFloor)); }

void CheckInputs(const Corpus& corpus, int k) {
  if (k < 1) throw Error("number of topics must be >= 1");
  if (corpus.size() == 0) throw Error("empty corpus");
  if (k > corpus.size()) {
    throw Error("number of topics K=" + std::to_string(k) +
                " exceeds number of documents n=" +
                std::to_string(corpus.size()));
  }
}

// Expected token counts per (document, topic) and (topic, token) under the
// current parameters. Returns the data log likelihood sum x log(omega theta).
double EStep(const Corpus& corpus, const Eigen::MatrixXd& theta,
             const Eigen::MatrixXd& omega, Eigen::MatrixXd& doc_topic,
             Eigen::MatrixXd& topic_token) {
  const int k = static_cast<int>(theta.rows());
  doc_topic.setZero(corpus.size(), k);
  topic_token.setZero(k, corpus.vocab_size());
  Eigen::VectorXd w(k), r(k);
  double loglik = 0;
  for (int i = 0; i < corpus.size(); ++i) {
    w = omega.row(i).transpose();
    for (const auto& e : corpus.counts.Row(i)) {
      r = w.cwiseProduct(theta.col(e.col));
      const double s = r.sum();
      loglik += e.count * SafeLog(s);
      r *= e.count / std::max(s, kProbFloor * kProbFloor);
      doc_topic.row(i) += r.transpose();
      topic_token.col(e.col) += r;
    }
  }
  return loglik;
}

double PriorTerm(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& omega,
                 const TopicPrior& prior) {
  double lp = 0;
  for (Eigen::Index i = 0; i < omega.size(); ++i) {
    lp += prior.omega_concentration * SafeLog(omega.data()[i]);
  }
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    lp += prior.theta_concentration * SafeLog(theta.data()[i]);
  }
  return lp;
}

Eigen::MatrixXd InitialTheta(const Corpus& corpus, int k, std::mt19937_64& rng) {
  const int n = corpus.size();
  const int p = corpus.vocab_size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  // Each topic starts from a disjoint batch of random documents.
  const int batch = std::clamp(n / (10 * k), 1, 20);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Ones(k, p);
  int next = 0;
  for (int t = 0; t < k; ++t) {
    for (int b = 0; b < batch && next < n; ++b, ++next) {
      for (const auto& e : corpus.counts.Row(order[next])) {
        theta(t, e.col) += e.count;
      }
    }
    theta.row(t) /= theta.row(t).sum();
  }
  return theta;
}

struct FitResult {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd omega;
  double log_posterior;
  TopicFitReport report;
};

FitResult FitOnce(const Corpus& corpus, int k, const TopicPrior& prior,
                  const TopicFitOptions& options, uint64_t seed) {
  const int n = corpus.size();
  const int p = corpus.vocab_size();
  std::mt19937_64 rng(seed);
  FitResult fit;
  fit.theta = InitialTheta(corpus, k, rng);
  fit.omega = Eigen::MatrixXd::Constant(n, k, 1.0 / k);
  const double aw = prior.omega_concentration;
  const double at = prior.theta_concentration;

  Eigen::MatrixXd doc_topic, topic_token;
  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 1;; ++iter) {
    const double current =
        EStep(corpus, fit.theta, fit.omega, doc_topic, topic_token) +
        PriorTerm(fit.theta, fit.omega, prior);
    if (!std::isfinite(current)) {
      throw Error("non-finite topic log posterior at iteration " +
                  std::to_string(iter));
    }
    fit.report.objective_path.push_back(current);
    if (iter > 1) {
      fit.report.relative_change =
          std::abs(current - previous) / std::max(1.0, std::abs(previous));
      if (fit.report.relative_change < options.tol) {
        fit.report.converged = true;
        fit.report.iterations = iter - 1;
        fit.log_posterior = current;
        return fit;
      }
    }
    if (iter > options.max_iter) {
      fit.report.iterations = options.max_iter;
      fit.log_posterior = current;
      return fit;
    }
    previous = current;

    for (int i = 0; i < n; ++i) {
      fit.omega.row(i) = (doc_topic.row(i).array() + aw) /
                         (corpus.total(i) + k * aw);
    }
    for (int t = 0; t < k; ++t) {
      const double mass = topic_token.row(t).sum();
      fit.theta.row(t) = (topic_token.row(t).array() + at) / (mass + p * at);
    }
  }
}

}  // namespace

TopicPrior TopicPrior::Default(int k, int p) {
  if (k < 1 || p < 1) throw Error("topic prior needs K >= 1 and p >= 1");
  return {1.0 / k, 1.0 / (static_cast<double>(k) * p)};
}

Eigen::MatrixXd TopicModel::Lambda() const {
  Eigen::MatrixXd lambda(omega.rows(), std::max(k - 1, 0));
  for (Eigen::Index i = 0; i < omega.rows(); ++i) {
    for (int h = 1; h < k; ++h) {
      lambda(i, h - 1) = std::log(omega(i, h)) - std::log(omega(i, 0));
    }
  }
  return lambda;
}

double TopicLogPosterior(const Corpus& corpus, const Eigen::MatrixXd& theta,
                         const Eigen::MatrixXd& omega,
                         const TopicPrior& prior) {
  double loglik = 0;
  for (int i = 0; i < corpus.size(); ++i) {
    for (const auto& e : corpus.counts.Row(i)) {
      loglik += e.count * SafeLog(omega.row(i).dot(theta.col(e.col)));
    }
  }
  return loglik + PriorTerm(theta, omega, prior);
}

TopicModel FitTopics(const Corpus& corpus, int k, const TopicPrior& prior,
                     const TopicFitOptions& options) {
  CheckInputs(corpus, k);
  if (prior.omega_concentration <= 0 || prior.theta_concentration <= 0) {
    throw Error("topic prior concentrations must be positive");
  }
  if (options.restarts < 1) throw Error("restarts must be >= 1");

  FitResult best;
  for (int r = 0; r < options.restarts; ++r) {
    FitResult fit = FitOnce(corpus, k, prior, options,
                            options.seed + 0x9E3779B97F4A7C15ULL * r);
    if (r == 0 || fit.log_posterior > best.log_posterior) best = std::move(fit);
  }

  // Present topics by total usage, heaviest first.
  Eigen::VectorXd usage = best.omega.transpose() * corpus.totals();
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return usage[a] > usage[b]; });

  TopicModel model;
  model.k = k;
  model.prior = prior;
  model.theta.resize(k, corpus.vocab_size());
  model.omega.resize(corpus.size(), k);
  for (int t = 0; t < k; ++t) {
    model.theta.row(t) = best.theta.row(order[t]);
    model.omega.col(t) = best.omega.col(order[t]);
  }
  model.log_posterior = best.log_posterior;
  model.report = std::move(best.report);
  model.doc_ids = corpus.ids;
  model.doc_totals = corpus.totals();
  return model;
}

namespace {

// log det of c (diag(v) - v v') over coordinates 1..d-1 of a probability
// vector v. By the determinant lemma this is (d-1) log c + sum_j log v_j.
// Near-boundary vectors get `kJitter` added to the block diagonal.
double DirichletBlockLogDet(const Eigen::VectorXd& v, double c,
                            bool* jittered) {
  const Eigen::Index d = v.size();
  if (d <= 1) return 0;
  if (v.minCoeff() > kProbFloor) {
    return (d - 1) * std::log(c) + v.array().log().sum();
  }
  *jittered = true;
  const double eps = kJitter / c;
  double log_det = (d - 1) * std::log(c);
  double quad = 0;
  for (Eigen::Index j = 1; j < d; ++j) {
    const double dj = std::max(v[j], 0.0) + eps;
    log_det += std::log(dj);
    quad += v[j] * v[j] / dj;
  }
  return log_det + std::log(std::max(1.0 - quad, kProbFloor));
}

}  // namespace

MarginalLikelihood LogMarginal(const TopicModel& model, const Corpus& corpus) {
  if (model.num_docs() != corpus.size() ||
      model.vocab_size() != corpus.vocab_size()) {
    throw Error("topic model does not match corpus dimensions");
  }
  const int n = corpus.size();
  const int p = corpus.vocab_size();
  const int k = model.k;
  const double aw = model.prior.omega_concentration;
  const double at = model.prior.theta_concentration;

  Eigen::MatrixXd doc_topic, topic_token;
  double value = EStep(corpus, model.theta, model.omega, doc_topic,
                       topic_token) +
                 PriorTerm(model.theta, model.omega, model.prior);
  // Normalizing constants: multinomial coefficients and Dirichlet densities
  // of the natural parameters.
  for (int i = 0; i < n; ++i) {
    value += std::lgamma(corpus.total(i) + 1);
    for (const auto& e : corpus.counts.Row(i)) value -= std::lgamma(e.count + 1);
  }
  value += n * (std::lgamma(k * aw) - k * std::lgamma(aw));
  value += k * (std::lgamma(p * at) - p * std::lgamma(at));

  MarginalLikelihood out;
  out.log_posterior = value;
  out.dimension = n * (k - 1) + k * (p - 1);
  for (int i = 0; i < n; ++i) {
    bool jittered = false;
    out.log_det_hessian += DirichletBlockLogDet(
        model.omega.row(i).transpose(), corpus.total(i) + k * aw, &jittered);
    out.jittered_blocks += jittered;
  }
  for (int t = 0; t < k; ++t) {
    bool jittered = false;
    out.log_det_hessian += DirichletBlockLogDet(
        model.theta.row(t).transpose(), topic_token.row(t).sum() + p * at,
        &jittered);
    out.jittered_blocks += jittered;
  }
  out.log_marginal = value + 0.5 * out.dimension * std::log(2 * M_PI) -
                     0.5 * out.log_det_hessian;
  return out;
}

TopicSelection SelectTopicCount(const Corpus& corpus,
                                const std::vector<int>& grid,
                                const TopicFitOptions& options) {
  if (grid.empty()) throw Error("empty K grid");
  TopicSelection sel;
  for (int k : grid) {
    TopicModel model = FitTopics(corpus, k,
                                 TopicPrior::Default(k, corpus.vocab_size()),
                                 options);
    const double lm = LogMarginal(model, corpus).log_marginal;
    sel.ks.push_back(k);
    sel.log_marginals.push_back(lm);
    const size_t idx = sel.ks.size() - 1;
    if (idx == 0 || lm > sel.log_marginals[sel.best_index] ||
        (lm == sel.log_marginals[sel.best_index] &&
         k < sel.ks[sel.best_index])) {
      sel.best_index = static_cast<int>(idx);
      sel.best = std::move(model);
    }
  }
  return sel;
}

Eigen::VectorXd Softmax(const Eigen::VectorXd& eta) {
  const double top = eta.maxCoeff();
  Eigen::VectorXd e = (eta.array() - top).exp();
  return e / e.sum();
}

Eigen::MatrixXd WeightPrecision(const Eigen::VectorXd& omega, double scale) {
  const Eigen::Index d = omega.size() - 1;
  if (d <= 0) return Eigen::MatrixXd(0, 0);
  const Eigen::VectorXd w = omega.tail(d);
  Eigen::MatrixXd h = -w * w.transpose();
  h.diagonal() += w;
  return scale * h;
}

WeightPosterior SampleWeights(const TopicModel& model, int doc_index, int draws,
                              uint64_t seed) {
  if (draws < 1) throw Error("number of posterior draws must be >= 1");
  if (doc_index < 0 || doc_index >= model.num_docs()) {
    throw Error("document index out of range");
  }
  const int k = model.k;
  const Eigen::VectorXd omega = model.omega.row(doc_index).transpose();
  WeightPosterior post;
  if (!model.doc_ids.empty()) post.doc_id = model.doc_ids[doc_index];
  post.mean.resize(k - 1);
  for (int h = 1; h < k; ++h) {
    post.mean[h - 1] = std::log(omega[h]) - std::log(omega[0]);
  }
  post.precision = WeightPrecision(
      omega, model.doc_totals[doc_index] + k * model.prior.omega_concentration);

  Eigen::LLT<Eigen::MatrixXd> llt(post.precision);
  if (llt.info() != Eigen::Success) {
    post.jittered = true;
    llt.compute(post.precision +
                kJitter * Eigen::MatrixXd::Identity(k - 1, k - 1));
    if (llt.info() != Eigen::Success) {
      throw Error("weight precision not positive definite for document " +
                  std::to_string(doc_index));
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  post.lambda_samples.resize(draws, k - 1);
  post.samples.resize(draws, k);
  Eigen::VectorXd z(k - 1), eta(k);
  for (int b = 0; b < draws; ++b) {
    for (int h = 0; h < k - 1; ++h) z[h] = normal(rng);
    // H = L L', so L'^{-1} z has covariance H^{-1}.
    Eigen::VectorXd lambda =
        post.mean + llt.matrixU().solve(z);
    post.lambda_samples.row(b) = lambda.transpose();
    eta[0] = 0;
    eta.tail(k - 1) = lambda;
    post.samples.row(b) = Softmax(eta).transpose();
  }
  return post;
}

std::vector<Eigen::MatrixXd> SampleAllWeights(const TopicModel& model,
                                              int draws, uint64_t seed) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(model.num_docs());
  std::mt19937_64 seeder(seed);
  for (int i = 0; i < model.num_docs(); ++i) {
    out.push_back(SampleWeights(model, i, draws, seeder()).samples);
  }
  return out;
}

Eigen::MatrixXd TopicLift(const TopicModel& model, const Corpus& corpus) {
  if (model.vocab_size() != corpus.vocab_size()) {
    throw Error("topic model does not match corpus vocabulary");
  }
  const Eigen::VectorXd totals = corpus.counts.ColumnTotals();
  const double grand = totals.sum();
  Eigen::MatrixXd lift(model.k, model.vocab_size());
  for (int j = 0; j < model.vocab_size(); ++j) {
    if (totals[j] <= 0) {
      throw Error("token " + corpus.vocab.token(j) + " never occurs");
    }
    lift.col(j) = model.theta.col(j) / (totals[j] / grand);
  }
  return lift;
}

namespace {
constexpr std::string_view kTopicMagic = "TDTOPICS";
constexpr uint32_t kTopicVersion = 1;
}  // namespace

void WriteTopicModel(const TopicModel& model, const std::string& path) {
  BinaryWriter w(path, kTopicMagic, kTopicVersion);
  w.I32(model.k);
  w.F64(model.prior.omega_concentration);
  w.F64(model.prior.theta_concentration);
  w.F64(model.log_posterior);
  w.I32(model.report.iterations);
  w.F64(model.report.relative_change);
  w.Bool(model.report.converged);
  w.StringList(model.doc_ids);
  w.Vector(model.doc_totals);
  w.Matrix(model.theta);
  w.Matrix(model.omega);
  w.Close();
}

TopicModel ReadTopicModel(const std::string& path) {
  BinaryReader r(path, kTopicMagic, kTopicVersion);
  TopicModel model;
  model.k = r.I32();
  model.prior.omega_concentration = r.F64();
  model.prior.theta_concentration = r.F64();
  model.log_posterior = r.F64();
  model.report.iterations = r.I32();
  model.report.relative_change = r.F64();
  model.report.converged = r.Bool();
  model.doc_ids = r.StringList();
  model.doc_totals = r.Vector();
  model.theta = r.Matrix();
  model.omega = r.Matrix();
  if (model.theta.rows() != model.k || model.omega.cols() != model.k ||
      model.omega.rows() != static_cast<Eigen::Index>(model.doc_ids.size())) {
    throw Error(path + ": inconsistent topic model dimensions");
  }
  return model;
}

}  // namespace textdesign
