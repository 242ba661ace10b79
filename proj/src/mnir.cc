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

#include "textdesign/mnir.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "textdesign/error.h"
#include "textdesign/io.h"

namespace textdesign {

SentimentScale::SentimentScale() : SentimentScale(std::vector<int>{-1, 0, 1}) {}

SentimentScale::SentimentScale(std::vector<int> levels)
    : levels_(std::move(levels)) {
  if (levels_.size() < 2) throw Error("sentiment scale needs >= 2 levels");
  for (size_t i = 1; i < levels_.size(); ++i) {
    if (levels_[i] <= levels_[i - 1]) {
      throw Error("sentiment levels must be strictly increasing");
    }
  }
}

SentimentScale SentimentScale::Parse(const std::string& text) {
  std::vector<int> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      levels.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error("bad sentiment level: " + item);
    }
  }
  return SentimentScale(std::move(levels));
}

bool SentimentScale::Contains(int level) const { return IndexOf(level) >= 0; }

int SentimentScale::IndexOf(int level) const {
  auto it = std::find(levels_.begin(), levels_.end(), level);
  return it == levels_.end() ? -1 : static_cast<int>(it - levels_.begin());
}

CollapsedCounts CollapseCounts(const Corpus& corpus,
                               const SentimentScale& scale,
                               bool with_subjects) {
  CollapsedCounts out;
  out.vocab = corpus.vocab;
  if (with_subjects) out.subjects = corpus.DistinctSubjects();
  std::map<std::pair<int, int>, size_t> cell_index;
  std::map<std::pair<int, int>, CollapsedCell> cells;
  const int p = corpus.vocab_size();
  for (int i = 0; i < corpus.size(); ++i) {
    if (!corpus.labels[i]) {
      ++out.excluded_unlabeled;
      continue;
    }
    const int y = *corpus.labels[i];
    if (!scale.Contains(y)) {
      throw Error("document " + corpus.ids[i] + " has label " +
                  std::to_string(y) + " outside the sentiment scale");
    }
    int s = kGenericSubject;
    if (with_subjects && corpus.subjects[i]) {
      s = static_cast<int>(std::lower_bound(out.subjects.begin(),
                                            out.subjects.end(),
                                            *corpus.subjects[i]) -
                           out.subjects.begin());
    }
    auto [it, fresh] = cells.try_emplace({s, y});
    CollapsedCell& cell = it->second;
    if (fresh) {
      cell.subject = s;
      cell.y = y;
      cell.x = Eigen::VectorXd::Zero(p);
    }
    for (const auto& e : corpus.counts.Row(i)) cell.x[e.col] += e.count;
    cell.m += corpus.total(i);
    ++cell.documents;
  }
  if (cells.empty()) throw Error("no labeled documents to collapse");
  for (auto& [key, cell] : cells) out.cells.push_back(std::move(cell));
  return out;
}

double PenaltyConfig::Value(double phi) const {
  const double a = std::abs(phi);
  return pure_l1 ? l1_rate * a : lambda * std::log1p(a / tau);
}

double PenaltyConfig::Slope(double abs_phi) const {
  return pure_l1 ? l1_rate : lambda / (tau + abs_phi);
}

PenaltyConfig PenaltyConfig::Parse(const std::string& text) {
  PenaltyConfig config;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("bad penalty setting: " + item);
    const std::string key = item.substr(0, eq);
    double value;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error("bad penalty value: " + item);
    }
    if (key == "lambda") {
      config.lambda = value;
    } else if (key == "tau") {
      config.tau = value;
    } else if (key == "l1") {
      config.pure_l1 = true;
      config.l1_rate = value;
    } else if (key == "tol") {
      config.tol = value;
    } else if (key == "kkt") {
      config.kkt_tol = value;
    } else {
      throw Error("unknown penalty key: " + key);
    }
  }
  if (config.lambda < 0 || config.tau <= 0 || config.l1_rate < 0) {
    throw Error("penalty requires lambda >= 0, tau > 0, l1 >= 0");
  }
  return config;
}

MnirParameters MnirParameters::Zero(int subjects, int p) {
  return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p),
          Eigen::MatrixXd::Zero(subjects, p),
          Eigen::MatrixXd::Zero(subjects, p)};
}

namespace {

Eigen::VectorXd CellEta(const MnirParameters& params, int subject, double y) {
  Eigen::VectorXd eta = params.alpha0 + y * params.phi0;
  if (subject != kGenericSubject && params.alpha_s.rows() > subject) {
    eta += params.alpha_s.row(subject).transpose() +
           y * params.phi_s.row(subject).transpose();
  }
  return eta;
}

double LogSumExp(const Eigen::VectorXd& v) {
  const double top = v.maxCoeff();
  return top + std::log((v.array() - top).exp().sum());
}

double PenaltySum(const Eigen::VectorXd& v, const PenaltyConfig& penalty) {
  double s = 0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (v[j] != 0) s += penalty.Value(v[j]);
  }
  return s;
}

// Monotone root finder for an increasing function on [lo, hi] with
// h(lo) <= 0 <= h(hi): Newton steps, bisection when they leave the bracket.
template <typename F>
double SolveIncreasing(F&& h, double lo, double hi, double start) {
  double t = (start > lo && start < hi) ? start : 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    auto [value, slope] = h(t);
    if (value == 0) return t;
    if (value < 0) {
      lo = t;
    } else {
      hi = t;
    }
    double next = slope > 0 ? t - value / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-13 * (1.0 + std::abs(t))) return next;
    t = next;
  }
  return t;
}

// Working state for coordinate descent. Each cell keeps its linear
// predictor and the shifted normalizer sum_l exp(eta_l - ref).
// The cell likelihood is unchanged when every intercept of a block, or
// every loading of a block, moves by the same constant: each cell's linear
// predictor shifts uniformly and the softmax absorbs it. Coordinate descent
// crawls along these directions, so they are solved exactly after each
// sweep. Intercepts center (the ridge optimum); loadings move to the shift
// with the smallest penalty, which for a concave or linear penalty sits
// where some loading becomes zero.
template <typename Row>
void CenterIntercepts(Row&& alpha) {
  alpha.array() -= alpha.mean();
}

template <typename Row>
void ShiftLoadings(Row&& phi, const PenaltyConfig& penalty) {
  const auto cost = [&](double c) {
    double total = 0;
    for (Eigen::Index j = 0; j < phi.size(); ++j) {
      total += penalty.Value(phi[j] + c);
    }
    return total;
  };
  const double current = cost(0.0);
  double best = current, best_shift = 0;
  for (Eigen::Index j = 0; j < phi.size(); ++j) {
    if (phi[j] == 0) continue;
    const double v = cost(-phi[j]);
    if (v < best) {
      best = v;
      best_shift = -phi[j];
    }
  }
  if (best_shift == 0 || best >= current - 1e-12 * (1.0 + current)) return;
  for (Eigen::Index j = 0; j < phi.size(); ++j) {
    // Exact zero for the coordinate defining the shift.
    phi[j] = phi[j] == -best_shift ? 0.0 : phi[j] + best_shift;
  }
}

class CoordinateSolver {
 public:
  CoordinateSolver(const CollapsedCounts& cells, MnirParameters& params,
                   const PenaltyConfig& penalty)
      : cells_(cells), params_(params), penalty_(penalty) {
    const size_t c = cells.cells.size();
    eta_.resize(c);
    ref_.resize(c);
    norm_.resize(c);
    members_.resize(cells.subjects.size());
    for (size_t k = 0; k < c; ++k) {
      const auto& cell = cells.cells[k];
      if (cell.subject != kGenericSubject) {
        members_[cell.subject].push_back(k);
      } else {
        generic_.push_back(k);
      }
      all_.push_back(k);
    }
    Renormalize();
  }

  // Exact normalizers, refreshed once per sweep.
  void Renormalize() {
    for (size_t k = 0; k < cells_.cells.size(); ++k) {
      const auto& cell = cells_.cells[k];
      eta_[k] = CellEta(params_, cell.subject, cell.y);
      ref_[k] = eta_[k].maxCoeff();
      norm_[k] = (eta_[k].array() - ref_[k]).exp().sum();
    }
  }

  // Returns the new value of an intercept coordinate.
  double SolveIntercept(double t0, int j, const std::vector<size_t>& set) {
    const double ridge = penalty_.intercept_ridge;
    auto h = [&](double t) {
      auto [g, c] = Derivatives(j, set, false, t - t0);
      return std::pair{g + ridge * t, c + ridge};
    };
    const auto [lo, hi] = Bracket(h, t0);
    const double t = SolveIncreasing(h, lo, hi, t0);
    Apply(j, set, false, t - t0);
    return t;
  }

  // Moves alpha0_j by t and every active alpha_sj by -t. Subject cells see
  // no change, so the main and subject intercepts stop trading off one
  // coordinate at a time when generic cells are rare or absent.
  void SolveInterceptSplit(int j, const std::vector<int>& active) {
    if (active.empty()) return;
    const double ridge = penalty_.intercept_ridge;
    double offset = params_.alpha0[j];
    for (int s : active) offset -= params_.alpha_s(s, j);
    const double weight = 1.0 + static_cast<double>(active.size());
    auto h = [&](double t) {
      auto [g, c] = Derivatives(j, generic_, false, t);
      return std::pair{g + ridge * (offset + weight * t), c + ridge * weight};
    };
    const auto [lo, hi] = Bracket(h, 0.0);
    const double t = SolveIncreasing(h, lo, hi, 0.0);
    Apply(j, generic_, false, t);
    params_.alpha0[j] += t;
    for (int s : active) params_.alpha_s(s, j) -= t;
  }

  // Returns the new value of a loading coordinate.
  double SolveLoading(double t0, int j, const std::vector<size_t>& set) {
    double t = t0;
    for (int mm = 0; mm < 100; ++mm) {
      const double w = penalty_.Slope(std::abs(t));
      const double g0 = Derivatives(j, set, true, -t0).first;
      double next = 0;
      if (g0 < -w) {
        auto h = [&](double u) {
          auto [g, c] = Derivatives(j, set, true, u - t0);
          return std::pair{g + w, c};
        };
        next = SolveIncreasing(h, 0.0, UpperBound(h, std::max(t, 1.0)),
                               t > 0 ? t : -1.0);
      } else if (g0 > w) {
        auto h = [&](double u) {
          auto [g, c] = Derivatives(j, set, true, u - t0);
          return std::pair{g - w, c};
        };
        next = SolveIncreasing(h, LowerBound(h, std::min(t, -1.0)), 0.0,
                               t < 0 ? t : 1.0);
      }
      const bool done =
          std::abs(next - t) <= 1e-12 * (1.0 + std::abs(t)) || penalty_.pure_l1;
      t = next;
      if (done) break;
    }
    Apply(j, set, true, t - t0);
    return t;
  }

 private:
  // First and second derivative in the coordinate of the negative log
  // likelihood, at offset delta from the stored state.
  std::pair<double, double> Derivatives(int j, const std::vector<size_t>& set,
                                        bool loading, double delta) const {
    double g = 0, c = 0;
    for (size_t k : set) {
      const auto& cell = cells_.cells[k];
      const double a = loading ? cell.y : 1.0;
      if (a == 0) continue;
      const double e = std::exp(eta_[k][j] - ref_[k]);
      const double moved = e * std::exp(a * delta);
      const double q = moved / std::max(norm_[k] - e + moved, 1e-300);
      g += a * (cell.m * q - cell.x[j]);
      c += a * a * cell.m * q * (1 - q);
    }
    return {g, c};
  }

  void Apply(int j, const std::vector<size_t>& set, bool loading,
             double delta) {
    if (delta == 0) return;
    for (size_t k : set) {
      const auto& cell = cells_.cells[k];
      const double a = loading ? cell.y : 1.0;
      if (a == 0) continue;
      const double e = std::exp(eta_[k][j] - ref_[k]);
      eta_[k][j] += a * delta;
      norm_[k] += std::exp(eta_[k][j] - ref_[k]) - e;
    }
  }

  template <typename H>
  std::pair<double, double> Bracket(H&& h, double t0) const {
    double step = 1.0;
    if (h(t0).first > 0) {
      double lo = t0 - step;
      while (h(lo).first > 0 && step < 1e6) {
        step *= 2;
        lo = t0 - step;
      }
      return {lo, t0};
    }
    double hi = t0 + step;
    while (h(hi).first < 0 && step < 1e6) {
      step *= 2;
      hi = t0 + step;
    }
    return {t0, hi};
  }

  template <typename H>
  double UpperBound(H&& h, double start) const {
    double hi = start;
    while (h(hi).first < 0 && hi < 1e3) hi *= 2;
    return hi;
  }

  template <typename H>
  double LowerBound(H&& h, double start) const {
    double lo = start;
    while (h(lo).first > 0 && lo > -1e3) lo *= 2;
    return lo;
  }

 public:
  const std::vector<size_t>& all() const { return all_; }
  const std::vector<size_t>& members(int s) const { return members_[s]; }

 private:
  const CollapsedCounts& cells_;
  MnirParameters& params_;
  const PenaltyConfig& penalty_;
  std::vector<Eigen::VectorXd> eta_;
  std::vector<double> ref_;
  std::vector<double> norm_;
  std::vector<size_t> all_;
  std::vector<size_t> generic_;
  std::vector<std::vector<size_t>> members_;
};

}  // namespace

double MnirLogLikelihood(const MnirParameters& params,
                         const CollapsedCounts& cells) {
  double ll = 0;
  for (const auto& cell : cells.cells) {
    const Eigen::VectorXd eta = CellEta(params, cell.subject, cell.y);
    ll += cell.x.dot(eta) - cell.m * LogSumExp(eta);
  }
  return ll;
}

MnirParameters MnirLogLikelihoodGradient(const MnirParameters& params,
                                         const CollapsedCounts& cells) {
  const int p = cells.vocab_size();
  MnirParameters grad =
      MnirParameters::Zero(static_cast<int>(params.alpha_s.rows()), p);
  for (const auto& cell : cells.cells) {
    const Eigen::VectorXd eta = CellEta(params, cell.subject, cell.y);
    const Eigen::VectorXd q = (eta.array() - LogSumExp(eta)).exp();
    const Eigen::VectorXd r = cell.x - cell.m * q;
    grad.alpha0 += r;
    grad.phi0 += cell.y * r;
    if (cell.subject != kGenericSubject && grad.alpha_s.rows() > cell.subject) {
      grad.alpha_s.row(cell.subject) += r.transpose();
      grad.phi_s.row(cell.subject) += cell.y * r.transpose();
    }
  }
  return grad;
}

double MnirObjective(const MnirParameters& params, const CollapsedCounts& cells,
                     const PenaltyConfig& penalty) {
  double obj = -MnirLogLikelihood(params, cells);
  obj += PenaltySum(params.phi0, penalty);
  for (Eigen::Index s = 0; s < params.phi_s.rows(); ++s) {
    obj += PenaltySum(params.phi_s.row(s).transpose(), penalty);
  }
  obj += 0.5 * penalty.intercept_ridge *
         (params.alpha0.squaredNorm() + params.alpha_s.squaredNorm());
  return obj;
}

double MnirKktViolation(const MnirParameters& params,
                        const CollapsedCounts& cells,
                        const PenaltyConfig& penalty, bool interactions) {
  const MnirParameters g = MnirLogLikelihoodGradient(params, cells);
  std::vector<bool> active(params.alpha_s.rows(), false);
  for (const auto& c : cells.cells) {
    if (c.subject != kGenericSubject) active[c.subject] = true;
  }
  double worst = 0;
  const auto loading = [&](double phi, double grad) {
    if (phi == 0) return std::abs(grad) - penalty.SlopeAtZero();
    const double sign = phi > 0 ? 1.0 : -1.0;
    return std::abs(grad - sign * penalty.Slope(std::abs(phi)));
  };
  for (Eigen::Index j = 0; j < params.alpha0.size(); ++j) {
    worst = std::max(worst, std::abs(g.alpha0[j] -
                                     penalty.intercept_ridge * params.alpha0[j]));
    worst = std::max(worst, loading(params.phi0[j], g.phi0[j]));
  }
  if (!interactions) return worst;
  for (Eigen::Index s = 0; s < params.alpha_s.rows(); ++s) {
    if (!active[s]) continue;
    for (Eigen::Index j = 0; j < params.alpha_s.cols(); ++j) {
      worst = std::max(
          worst, std::abs(g.alpha_s(s, j) -
                          penalty.intercept_ridge * params.alpha_s(s, j)));
      worst = std::max(worst, loading(params.phi_s(s, j), g.phi_s(s, j)));
    }
  }
  return worst;
}

namespace {

// One damped Newton step on a block: its intercepts plus its nonzero
// loadings (alpha0 and phi0 when `subject` is generic, else alpha_s and
// phi_s). Coordinate updates converge slowly once frequent tokens share each
// cell's normalizer. The step minimizes the convex surrogate in which each
// loading's penalty is replaced by its tangent, as in the coordinate
// updates. The Hessian is 2x2 blocks per token minus one rank-one term per
// cell, so a small dense solve suffices. Loadings that would change sign
// stop at zero, and the step is halved until the objective does not rise.
void NewtonBlockStep(MnirParameters& params, int subject,
                     const CollapsedCounts& cells,
                     const PenaltyConfig& penalty) {
  const int p = cells.vocab_size();
  std::vector<const CollapsedCell*> set;
  for (const auto& c : cells.cells) {
    if (subject == kGenericSubject || c.subject == subject) set.push_back(&c);
  }
  if (set.empty()) return;
  const bool main = subject == kGenericSubject;
  const Eigen::VectorXd alpha =
      main ? params.alpha0 : Eigen::VectorXd(params.alpha_s.row(subject));
  const Eigen::VectorXd phi =
      main ? params.phi0 : Eigen::VectorXd(params.phi_s.row(subject));
  std::vector<int> active;
  for (int j = 0; j < p; ++j) {
    if (phi[j] != 0) active.push_back(j);
  }
  const int na = static_cast<int>(active.size());
  const double ridge = penalty.intercept_ridge;

  // Gradient and the per-token 2x2 blocks (a b; b d).
  Eigen::VectorXd ga = ridge * alpha, gp = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd ba = Eigen::VectorXd::Constant(p, ridge);
  Eigen::VectorXd bb = Eigen::VectorXd::Zero(p), bd = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd w(p + na, set.size());
  for (size_t k = 0; k < set.size(); ++k) {
    const CollapsedCell& c = *set[k];
    const Eigen::VectorXd eta = CellEta(params, c.subject, c.y);
    const Eigen::VectorXd q = (eta.array() - LogSumExp(eta)).exp();
    const Eigen::VectorXd r = c.m * q - c.x;
    ga += r;
    gp += c.y * r;
    ba += c.m * q;
    bb += c.m * c.y * q;
    bd += c.m * c.y * c.y * q;
    const double sm = std::sqrt(c.m);
    w.col(k).head(p) = sm * q;
    for (int i = 0; i < na; ++i) w(p + i, k) = sm * c.y * q[active[i]];
  }
  // B^{-1} v for a stacked (alpha, active phi) vector.
  std::vector<bool> is_active(p, false);
  std::vector<int> slot(p, -1);
  for (int i = 0; i < na; ++i) {
    is_active[active[i]] = true;
    slot[active[i]] = i;
  }
  const auto apply_binv = [&](const Eigen::MatrixXd& v) {
    Eigen::MatrixXd out(v.rows(), v.cols());
    for (int j = 0; j < p; ++j) {
      if (!is_active[j]) {
        out.row(j) = v.row(j) / ba[j];
        continue;
      }
      const int i = p + slot[j];
      const double d = bd[j] * (1 + 1e-10) + 1e-12;
      const double det = ba[j] * d - bb[j] * bb[j];
      out.row(j) = (d * v.row(j) - bb[j] * v.row(i)) / det;
      out.row(i) = (ba[j] * v.row(i) - bb[j] * v.row(j)) / det;
    }
    return out;
  };
  Eigen::VectorXd g(p + na);
  g.head(p) = ga;
  for (int i = 0; i < na; ++i) {
    const int j = active[i];
    g[p + i] = gp[j] + std::copysign(penalty.Slope(std::abs(phi[j])), phi[j]);
  }
  const Eigen::MatrixXd bw = apply_binv(w);
  const Eigen::VectorXd bg = apply_binv(g);
  const Eigen::MatrixXd inner =
      Eigen::MatrixXd::Identity(w.cols(), w.cols()) - w.transpose() * bw;
  const Eigen::VectorXd step = bg + bw * inner.ldlt().solve(w.transpose() * bg);
  if (!step.allFinite()) return;

  const auto set_block = [&](const Eigen::VectorXd& a,
                             const Eigen::VectorXd& f) {
    if (main) {
      params.alpha0 = a;
      params.phi0 = f;
    } else {
      params.alpha_s.row(subject) = a.transpose();
      params.phi_s.row(subject) = f.transpose();
    }
  };
  const double before = MnirObjective(params, cells, penalty);
  double t = 1.0;
  for (int halving = 0; halving < 30; ++halving, t *= 0.5) {
    Eigen::VectorXd f = phi;
    for (int i = 0; i < na; ++i) {
      const int j = active[i];
      const double next = phi[j] - t * step[p + i];
      f[j] = next * phi[j] > 0 ? next : 0.0;
    }
    set_block(alpha - t * step.head(p), f);
    if (MnirObjective(params, cells, penalty) <= before) return;
  }
  set_block(alpha, phi);
}

}  // namespace

MnirModel FitMnir(const CollapsedCounts& cells, const PenaltyConfig& penalty,
                  bool interactions) {
  const int p = cells.vocab_size();
  if (p == 0) throw Error("empty vocabulary");
  if (cells.cells.empty()) throw Error("no collapsed cells");
  {
    std::vector<int> levels;
    for (const auto& c : cells.cells) levels.push_back(c.y);
    std::sort(levels.begin(), levels.end());
    if (levels.front() == levels.back()) {
      throw Error("MNIR needs at least two distinct sentiment levels");
    }
  }

  MnirModel model;
  model.vocab = cells.vocab;
  model.subjects = cells.subjects;
  model.interactions = interactions && !cells.subjects.empty();
  model.penalty = penalty;
  const int num_subjects = static_cast<int>(cells.subjects.size());
  MnirParameters& params = model.params;
  params = MnirParameters::Zero(num_subjects, p);

  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(p);
  double total = 0;
  for (const auto& c : cells.cells) {
    pooled += c.x;
    total += c.m;
  }
  params.alpha0 =
      ((pooled.array() + 0.01) / (total + 0.01 * p)).log().matrix();
  params.alpha0.array() -= params.alpha0.mean();

  // Subjects with at least one cell.
  std::vector<int> active;
  CoordinateSolver solver(cells, params, penalty);
  if (model.interactions) {
    for (int s = 0; s < num_subjects; ++s) {
      if (!solver.members(s).empty()) active.push_back(s);
    }
  }

  double previous = MnirObjective(params, cells, penalty);
  model.report.objective_path.push_back(previous);
  for (int sweep = 1; sweep <= penalty.max_sweeps; ++sweep) {
    for (int j = 0; j < p; ++j) {
      params.alpha0[j] = solver.SolveIntercept(params.alpha0[j], j,
                                               solver.all());
      params.phi0[j] = solver.SolveLoading(params.phi0[j], j, solver.all());
    }
    for (int s : active) {
      for (int j = 0; j < p; ++j) {
        params.alpha_s(s, j) =
            solver.SolveIntercept(params.alpha_s(s, j), j, solver.members(s));
        params.phi_s(s, j) =
            solver.SolveLoading(params.phi_s(s, j), j, solver.members(s));
      }
    }
    for (int j = 0; j < p; ++j) solver.SolveInterceptSplit(j, active);
    NewtonBlockStep(params, kGenericSubject, cells, penalty);
    for (int s : active) NewtonBlockStep(params, s, cells, penalty);
    CenterIntercepts(params.alpha0);
    ShiftLoadings(params.phi0, penalty);
    for (int s : active) {
      CenterIntercepts(params.alpha_s.row(s));
      ShiftLoadings(params.phi_s.row(s), penalty);
    }
    solver.Renormalize();
    const double current = MnirObjective(params, cells, penalty);
    if (!std::isfinite(current)) {
      throw Error("non-finite MNIR objective at sweep " +
                  std::to_string(sweep));
    }
    model.report.objective_path.push_back(current);
    model.report.sweeps = sweep;
    if (std::abs(previous - current) <=
        penalty.tol * std::max(1.0, std::abs(previous))) {
      model.report.kkt_violation =
          MnirKktViolation(params, cells, penalty, model.interactions);
      if (model.report.kkt_violation <= penalty.kkt_tol) {
        model.report.converged = true;
        break;
      }
    }
    previous = current;
  }

  if (!model.report.converged) {
    model.report.kkt_violation =
        MnirKktViolation(params, cells, penalty, model.interactions);
  }
  model.report.nonzero_main = static_cast<int>((params.phi0.array() != 0).count());
  model.report.nonzero_subject.assign(num_subjects, 0);
  for (int s = 0; s < num_subjects; ++s) {
    model.report.nonzero_subject[s] = model.NonzeroSubjectLoadings(s);
  }
  return model;
}

Eigen::VectorXd MnirModel::Probabilities(int subject, double y) const {
  const Eigen::VectorXd eta = CellEta(params, subject, y);
  return (eta.array() - LogSumExp(eta)).exp();
}

int MnirModel::SubjectIndex(const std::string& subject) const {
  auto it = std::lower_bound(subjects.begin(), subjects.end(), subject);
  if (it == subjects.end() || *it != subject) return kGenericSubject;
  return static_cast<int>(it - subjects.begin());
}

int MnirModel::NonzeroSubjectLoadings(int subject) const {
  if (subject < 0 || subject >= params.phi_s.rows()) return 0;
  return static_cast<int>((params.phi_s.row(subject).array() != 0).count());
}

SRScores SRScores::Subset(const std::vector<int>& rows) const {
  SRScores out;
  out.has_subject_scores = has_subject_scores;
  out.z0.resize(static_cast<Eigen::Index>(rows.size()));
  out.zs.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    out.doc_ids.push_back(doc_ids[rows[r]]);
    out.subjects.push_back(subjects[rows[r]]);
    out.z0[r] = z0[rows[r]];
    out.zs[r] = zs[rows[r]];
  }
  return out;
}

SRScores ComputeSrScores(const MnirModel& model, const Corpus& corpus) {
  if (!(model.vocab == corpus.vocab)) {
    const size_t common = std::min(model.vocab.size(), corpus.vocab.size());
    size_t j = 0;
    while (j < common && model.vocab.token(j) == corpus.vocab.token(j)) ++j;
    const std::string first = j < corpus.vocab.size()
                                  ? corpus.vocab.token(j)
                                  : model.vocab.token(j);
    throw Error("vocabulary mismatch at column " + std::to_string(j) +
                ": first mismatched token '" + first + "'");
  }
  SRScores out;
  out.has_subject_scores = model.interactions;
  out.z0 = Eigen::VectorXd::Zero(corpus.size());
  out.zs = Eigen::VectorXd::Zero(corpus.size());
  for (int i = 0; i < corpus.size(); ++i) {
    out.doc_ids.push_back(corpus.ids[i]);
    out.subjects.push_back(corpus.subjects[i].value_or(""));
    const int s = corpus.subjects[i] && model.interactions
                      ? model.SubjectIndex(*corpus.subjects[i])
                      : kGenericSubject;
    double z0 = 0, zs = 0;
    for (const auto& e : corpus.counts.Row(i)) {
      z0 += model.params.phi0[e.col] * e.count;
      if (s != kGenericSubject) zs += model.params.phi_s(s, e.col) * e.count;
    }
    out.z0[i] = z0 / corpus.total(i);
    out.zs[i] = zs / corpus.total(i);
  }
  return out;
}

namespace {
constexpr std::string_view kMnirMagic = "TDMNIRMD";
constexpr uint32_t kMnirVersion = 1;
}  // namespace

void WriteMnirModel(const MnirModel& model, const std::string& path) {
  BinaryWriter w(path, kMnirMagic, kMnirVersion);
  w.StringList(model.vocab.tokens());
  w.StringList(model.subjects);
  w.Bool(model.interactions);
  w.F64(model.penalty.lambda);
  w.F64(model.penalty.tau);
  w.Bool(model.penalty.pure_l1);
  w.F64(model.penalty.l1_rate);
  w.F64(model.penalty.intercept_ridge);
  w.F64(model.penalty.tol);
  w.F64(model.penalty.kkt_tol);
  w.I32(model.penalty.max_sweeps);
  w.I32(model.report.sweeps);
  w.Bool(model.report.converged);
  w.F64(model.report.kkt_violation);
  w.Vector(model.params.alpha0);
  w.Vector(model.params.phi0);
  w.Matrix(model.params.alpha_s);
  w.Matrix(model.params.phi_s);
  w.Close();
}

MnirModel ReadMnirModel(const std::string& path) {
  BinaryReader r(path, kMnirMagic, kMnirVersion);
  MnirModel model;
  model.vocab = Vocabulary(r.StringList());
  model.subjects = r.StringList();
  model.interactions = r.Bool();
  model.penalty.lambda = r.F64();
  model.penalty.tau = r.F64();
  model.penalty.pure_l1 = r.Bool();
  model.penalty.l1_rate = r.F64();
  model.penalty.intercept_ridge = r.F64();
  model.penalty.tol = r.F64();
  model.penalty.kkt_tol = r.F64();
  model.penalty.max_sweeps = r.I32();
  model.report.sweeps = r.I32();
  model.report.converged = r.Bool();
  model.report.kkt_violation = r.F64();
  model.params.alpha0 = r.Vector();
  model.params.phi0 = r.Vector();
  model.params.alpha_s = r.Matrix();
  model.params.phi_s = r.Matrix();
  const auto p = static_cast<Eigen::Index>(model.vocab.size());
  if (model.params.phi0.size() != p || model.params.alpha0.size() != p ||
      model.params.phi_s.rows() !=
          static_cast<Eigen::Index>(model.subjects.size())) {
    throw Error(path + ": inconsistent MNIR model dimensions");
  }
  model.report.nonzero_main =
      static_cast<int>((model.params.phi0.array() != 0).count());
  for (size_t s = 0; s < model.subjects.size(); ++s) {
    model.report.nonzero_subject.push_back(
        model.NonzeroSubjectLoadings(static_cast<int>(s)));
  }
  return model;
}

void WriteSrScores(const SRScores& scores, const std::string& path) {
  std::vector<CsvRow> rows;
  rows.reserve(scores.doc_ids.size());
  for (int i = 0; i < scores.size(); ++i) {
    rows.push_back({scores.doc_ids[i], scores.subjects[i],
                    FormatDouble(scores.z0[i]), FormatDouble(scores.zs[i])});
  }
  WriteCsv(path, {"doc_id", "subject", "z0", "zs"}, rows);
}

SRScores ReadSrScores(const std::string& path) {
  const CsvTable table = ReadCsv(path);
  const size_t id = table.Column("doc_id");
  const size_t subject = table.Column("subject");
  const size_t z0 = table.Column("z0");
  const size_t zs = table.Column("zs");
  SRScores out;
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  out.z0.resize(n);
  out.zs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    out.doc_ids.push_back(row[id]);
    out.subjects.push_back(row[subject]);
    out.z0[i] = std::stod(row[z0]);
    out.zs[i] = std::stod(row[zs]);
    if (!row[subject].empty()) out.has_subject_scores = true;
  }
  return out;
}

}  // namespace textdesign
