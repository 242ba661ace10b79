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

#include "textdesign/forward.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "textdesign/error.h"
#include "textdesign/io.h"

namespace textdesign {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double Logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double Softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Logistic density F(1 - F) and its derivative; both vanish at +-inf.
double Density(double x) {
  if (std::isinf(x)) return 0;
  const double f = Logistic(x);
  return f * (1 - f);
}
double DensitySlope(double x) {
  if (std::isinf(x)) return 0;
  const double f = Logistic(x);
  return f * (1 - f) * (1 - 2 * f);
}

// F(upper) - F(lower), computed on whichever tail keeps precision.
double IntervalMass(double upper, double lower) {
  if (lower == -kInf) return Logistic(upper);
  if (upper == kInf) return Logistic(-lower);
  if (lower > 0) return Logistic(-lower) - Logistic(-upper);
  return Logistic(upper) - Logistic(lower);
}

double LogIntervalMass(double upper, double lower) {
  if (lower == -kInf) return -Softplus(-upper);
  if (upper == kInf) return -Softplus(lower);
  return std::log(std::max(IntervalMass(upper, lower), 1e-300));
}

}  // namespace

double TPrior::LogDensity(double beta) const {
  const double u = (beta - center) / scale;
  return -0.5 * (df + 1) * std::log1p(u * u / df);
}

double TPrior::Gradient(double beta) const {
  const double d = beta - center;
  return -(df + 1) * d / (df * scale * scale + d * d);
}

double TPrior::Curvature(double beta) const {
  const double d = beta - center;
  const double v = df * scale * scale;
  return -(df + 1) * (v - d * d) / ((v + d * d) * (v + d * d));
}

int ForwardModel::SubjectIndex(const std::string& subject) const {
  auto it = std::find(subjects.begin(), subjects.end(), subject);
  return it == subjects.end() ? -1 : static_cast<int>(it - subjects.begin());
}

OrdinalLikelihood::OrdinalLikelihood(const SRScores& scores,
                                     std::vector<int> level_index,
                                     int num_levels,
                                     std::vector<std::string> subjects)
    : num_levels_(num_levels), subjects_(std::move(subjects)) {
  if (num_levels_ < 2) throw Error("ordinal model needs >= 2 levels");
  if (static_cast<int>(level_index.size()) != scores.size()) {
    throw Error("scores and labels differ in length");
  }
  rows_.reserve(level_index.size());
  for (int i = 0; i < scores.size(); ++i) {
    if (level_index[i] < 0 || level_index[i] >= num_levels_) {
      throw Error("level index out of range");
    }
    int s = -1;
    if (scores.has_subject_scores && !scores.subjects[i].empty()) {
      auto it = std::find(subjects_.begin(), subjects_.end(),
                          scores.subjects[i]);
      if (it != subjects_.end()) s = static_cast<int>(it - subjects_.begin());
    }
    rows_.push_back({scores.z0[i], scores.zs[i], s, level_index[i]});
  }
}

Eigen::VectorXd OrdinalLikelihood::Cutpoints(
    const Eigen::VectorXd& theta) const {
  Eigen::VectorXd gamma(num_levels_ - 1);
  gamma[0] = theta[0];
  for (int c = 1; c < num_levels_ - 1; ++c) {
    gamma[c] = gamma[c - 1] + std::exp(theta[c]);
  }
  return gamma;
}

double OrdinalLikelihood::Eta(const Eigen::VectorXd& theta,
                              const Row& row) const {
  const int base = num_levels_ - 1;
  double eta = theta[base] * row.z0;
  if (row.subject >= 0) eta += theta[base + 1 + row.subject] * row.zs;
  return eta;
}

double OrdinalLikelihood::Value(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd gamma = Cutpoints(theta);
  double ll = 0;
  for (const auto& row : rows_) {
    const double eta = Eta(theta, row);
    const double upper =
        row.level == num_levels_ - 1 ? kInf : gamma[row.level] - eta;
    const double lower = row.level == 0 ? -kInf : gamma[row.level - 1] - eta;
    ll += LogIntervalMass(upper, lower);
  }
  return ll;
}

namespace {

// Derivatives of log(F(a) - F(b)) in (a, b).
struct IntervalDerivs {
  double da, db, haa, hbb, hab;
};

IntervalDerivs Derivs(double upper, double lower) {
  const double mass = std::max(IntervalMass(upper, lower), 1e-300);
  IntervalDerivs d;
  d.da = Density(upper) / mass;
  d.db = -Density(lower) / mass;
  d.haa = DensitySlope(upper) / mass - d.da * d.da;
  d.hbb = -DensitySlope(lower) / mass - d.db * d.db;
  d.hab = -d.da * d.db;
  return d;
}

}  // namespace

Eigen::VectorXd OrdinalLikelihood::Gradient(
    const Eigen::VectorXd& theta) const {
  const int ncut = num_levels_ - 1;
  const Eigen::VectorXd gamma = Cutpoints(theta);
  Eigen::VectorXd g_gamma = Eigen::VectorXd::Zero(ncut);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(num_params());
  for (const auto& row : rows_) {
    const double eta = Eta(theta, row);
    const bool top = row.level == ncut;
    const bool bottom = row.level == 0;
    const double upper = top ? kInf : gamma[row.level] - eta;
    const double lower = bottom ? -kInf : gamma[row.level - 1] - eta;
    const IntervalDerivs d = Derivs(upper, lower);
    if (!top) g_gamma[row.level] += d.da;
    if (!bottom) g_gamma[row.level - 1] += d.db;
    const double g_eta = -(d.da + d.db);
    grad[ncut] += g_eta * row.z0;
    if (row.subject >= 0) grad[ncut + 1 + row.subject] += g_eta * row.zs;
  }
  // Chain rule through gamma_c = theta_0 + sum_{k<=c} exp(theta_k).
  for (int k = 0; k < ncut; ++k) {
    const double jac = k == 0 ? 1.0 : std::exp(theta[k]);
    grad[k] = jac * g_gamma.tail(ncut - k).sum();
  }
  return grad;
}

Eigen::MatrixXd OrdinalLikelihood::Hessian(
    const Eigen::VectorXd& theta) const {
  const int ncut = num_levels_ - 1;
  const int nb = 1 + num_subjects();
  const Eigen::VectorXd gamma = Cutpoints(theta);
  Eigen::VectorXd g_gamma = Eigen::VectorXd::Zero(ncut);
  Eigen::MatrixXd h_gg = Eigen::MatrixXd::Zero(ncut, ncut);
  Eigen::MatrixXd h_gb = Eigen::MatrixXd::Zero(ncut, nb);
  Eigen::MatrixXd h_bb = Eigen::MatrixXd::Zero(nb, nb);
  for (const auto& row : rows_) {
    const double eta = Eta(theta, row);
    const bool top = row.level == ncut;
    const bool bottom = row.level == 0;
    const double upper = top ? kInf : gamma[row.level] - eta;
    const double lower = bottom ? -kInf : gamma[row.level - 1] - eta;
    const IntervalDerivs d = Derivs(upper, lower);
    const int a = row.level;
    const int b = row.level - 1;
    if (!top) {
      g_gamma[a] += d.da;
      h_gg(a, a) += d.haa;
    }
    if (!bottom) {
      g_gamma[b] += d.db;
      h_gg(b, b) += d.hbb;
    }
    if (!top && !bottom) {
      h_gg(a, b) += d.hab;
      h_gg(b, a) += d.hab;
    }
    // eta enters as a - eta and b - eta.
    const double h_ee = d.haa + 2 * d.hab + d.hbb;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(nb);
    u[0] = row.z0;
    if (row.subject >= 0) u[1 + row.subject] = row.zs;
    h_bb.noalias() += h_ee * u * u.transpose();
    if (!top) h_gb.row(a) -= (d.haa + d.hab) * u.transpose();
    if (!bottom) h_gb.row(b) -= (d.hab + d.hbb) * u.transpose();
  }

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(ncut, ncut);
  for (int c = 0; c < ncut; ++c) {
    jac(c, 0) = 1.0;
    for (int k = 1; k <= c; ++k) jac(c, k) = std::exp(theta[k]);
  }
  Eigen::MatrixXd hess(num_params(), num_params());
  hess.topLeftCorner(ncut, ncut) = jac.transpose() * h_gg * jac;
  for (int k = 1; k < ncut; ++k) {
    hess(k, k) += std::exp(theta[k]) * g_gamma.tail(ncut - k).sum();
  }
  hess.topRightCorner(ncut, nb) = jac.transpose() * h_gb;
  hess.bottomLeftCorner(nb, ncut) = hess.topRightCorner(ncut, nb).transpose();
  hess.bottomRightCorner(nb, nb) = h_bb;
  return hess;
}

ForwardModel FitForward(const SRScores& scores, const std::vector<int>& labels,
                        const SentimentScale& scale,
                        const ForwardOptions& options) {
  if (static_cast<int>(labels.size()) != scores.size()) {
    throw Error("scores and labels differ in length");
  }
  std::vector<int> counts(scale.size(), 0);
  for (int y : labels) {
    const int idx = scale.IndexOf(y);
    if (idx < 0) {
      throw Error("label " + std::to_string(y) + " outside sentiment scale");
    }
    ++counts[idx];
  }
  ForwardModel model;
  model.prior = options.prior;
  std::vector<int> scale_to_model(scale.size(), -1);
  for (int c = 0; c < scale.size(); ++c) {
    if (counts[c] > 0) {
      scale_to_model[c] = static_cast<int>(model.levels.size());
      model.levels.push_back(scale.levels()[c]);
    }
  }
  const int num_levels = static_cast<int>(model.levels.size());
  if (num_levels < 2) {
    throw Error("forward regression needs at least two observed levels");
  }
  if (scores.has_subject_scores) {
    for (const auto& s : scores.subjects) {
      if (!s.empty() && model.SubjectIndex(s) < 0) model.subjects.push_back(s);
    }
    std::sort(model.subjects.begin(), model.subjects.end());
  }

  std::vector<int> level_index;
  level_index.reserve(labels.size());
  for (int y : labels) level_index.push_back(scale_to_model[scale.IndexOf(y)]);
  const OrdinalLikelihood lik(scores, level_index, num_levels, model.subjects);
  const int ncut = num_levels - 1;
  const int np = lik.num_params();

  // Start at the intercept-only solution: logits of cumulative frequencies.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(np);
  {
    double cum = 0;
    double prev_gamma = 0;
    for (int c = 0; c < ncut; ++c) {
      cum += counts[std::find(scale.levels().begin(), scale.levels().end(),
                              model.levels[c]) -
                    scale.levels().begin()];
      const double frac = cum / static_cast<double>(labels.size());
      const double gamma = std::log(frac / (1 - frac));
      theta[c] = c == 0 ? gamma : std::log(gamma - prev_gamma);
      prev_gamma = gamma;
    }
  }

  const TPrior& prior = options.prior;
  auto objective = [&](const Eigen::VectorXd& t) {
    double v = lik.Value(t);
    for (int k = ncut; k < np; ++k) v += prior.LogDensity(t[k]);
    return v;
  };
  auto gradient = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd g = lik.Gradient(t);
    for (int k = ncut; k < np; ++k) g[k] += prior.Gradient(t[k]);
    return g;
  };

  double value = objective(theta);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const Eigen::VectorXd grad = gradient(theta);
    model.report.gradient_norm = grad.cwiseAbs().maxCoeff();
    model.report.iterations = iter;
    if (model.report.gradient_norm < options.tol) {
      model.report.converged = true;
      break;
    }
    Eigen::MatrixXd neg_hess = -lik.Hessian(theta);
    for (int k = ncut; k < np; ++k) neg_hess(k, k) -= prior.Curvature(theta[k]);

    // Levenberg damping until the system is positive definite.
    Eigen::VectorXd step;
    double damping = 0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::LLT<Eigen::MatrixXd> llt(
          neg_hess + damping * Eigen::MatrixXd::Identity(np, np));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(grad);
        if (step.allFinite()) break;
      }
      damping = damping == 0 ? 1e-8 * (1 + neg_hess.diagonal().cwiseAbs().maxCoeff())
                             : damping * 10;
    }
    if (step.size() != np) throw Error("forward Newton system unsolvable");

    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd candidate = theta + t * step;
      const double v = objective(candidate);
      if (std::isfinite(v) && v >= value) {
        theta = candidate;
        improved = v > value || t * step.cwiseAbs().maxCoeff() == 0;
        value = v;
        break;
      }
    }
    if (!improved) {
      // No ascent possible at machine precision.
      model.report.converged =
          model.report.gradient_norm < std::sqrt(options.tol);
      break;
    }
  }

  model.cutpoints = lik.Cutpoints(theta);
  model.beta0 = theta[ncut];
  model.beta_s = theta.tail(np - ncut - 1);
  model.report.log_likelihood = lik.Value(theta);
  model.report.log_posterior = value;
  return model;
}

Eigen::MatrixXd PredictProbs(const ForwardModel& model,
                             const SRScores& scores) {
  const int nl = static_cast<int>(model.levels.size());
  const int ncut = nl - 1;
  Eigen::MatrixXd probs(scores.size(), nl);
  for (int i = 0; i < scores.size(); ++i) {
    double eta = model.beta0 * scores.z0[i];
    if (scores.has_subject_scores && !scores.subjects[i].empty()) {
      const int s = model.SubjectIndex(scores.subjects[i]);
      if (s >= 0) eta += model.beta_s[s] * scores.zs[i];
    }
    for (int c = 0; c < nl; ++c) {
      const double upper = c == ncut ? kInf : model.cutpoints[c] - eta;
      const double lower = c == 0 ? -kInf : model.cutpoints[c - 1] - eta;
      probs(i, c) = IntervalMass(upper, lower);
    }
  }
  return probs;
}

int ArgmaxTowardMiddle(const Eigen::VectorXd& probs) {
  const int nl = static_cast<int>(probs.size());
  const double top = probs.maxCoeff();
  const double middle = 0.5 * (nl - 1);
  int best = -1;
  for (int c = 0; c < nl; ++c) {
    if (probs[c] < top - 1e-12 * std::max(1.0, top)) continue;
    if (best < 0 || std::abs(c - middle) < std::abs(best - middle)) best = c;
  }
  return best;
}

double Entropy(const Eigen::VectorXd& probs) {
  double h = 0;
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    if (probs[c] > 0) h -= probs[c] * std::log(probs[c]);
  }
  return h;
}

Classification Classify(const ForwardModel& model, const SRScores& scores) {
  const Eigen::MatrixXd probs = PredictProbs(model, scores);
  Classification out;
  out.entropy.resize(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const Eigen::VectorXd row = probs.row(i).transpose();
    out.levels.push_back(model.levels[ArgmaxTowardMiddle(row)]);
    out.entropy[i] = Entropy(row);
  }
  return out;
}

namespace {
constexpr std::string_view kForwardMagic = "TDFORWRD";
constexpr uint32_t kForwardVersion = 1;
}  // namespace

void WriteForwardModel(const ForwardModel& model, const std::string& path) {
  BinaryWriter w(path, kForwardMagic, kForwardVersion);
  w.I32(static_cast<int32_t>(model.levels.size()));
  for (int level : model.levels) w.I32(level);
  w.Vector(model.cutpoints);
  w.F64(model.beta0);
  w.StringList(model.subjects);
  w.Vector(model.beta_s);
  w.F64(model.prior.df);
  w.F64(model.prior.scale);
  w.F64(model.prior.center);
  w.Close();
}

ForwardModel ReadForwardModel(const std::string& path) {
  BinaryReader r(path, kForwardMagic, kForwardVersion);
  ForwardModel model;
  const int nl = r.I32();
  if (nl < 2) throw Error(path + ": forward model needs >= 2 levels");
  for (int c = 0; c < nl; ++c) model.levels.push_back(r.I32());
  model.cutpoints = r.Vector();
  model.beta0 = r.F64();
  model.subjects = r.StringList();
  model.beta_s = r.Vector();
  model.prior.df = r.F64();
  model.prior.scale = r.F64();
  model.prior.center = r.F64();
  if (model.cutpoints.size() != nl - 1 ||
      model.beta_s.size() != static_cast<Eigen::Index>(model.subjects.size())) {
    throw Error(path + ": inconsistent forward model dimensions");
  }
  return model;
}

}  // namespace textdesign
