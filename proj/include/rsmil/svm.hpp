#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "rsmil/core.hpp"

namespace rsmil {

/// Rows of (feature vector, sign label, weight). Each weight scales the
/// row's hinge contribution; zero-weight rows do not participate at all.
struct WeightedTrainingSet {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  std::vector<double> weights;

  std::size_t size() const { return features.size(); }

  void add_row(std::vector<double> x, int y, double q) {
    features.push_back(std::move(x));
    labels.push_back(y);
    weights.push_back(q);
  }
};

/// Optional solver introspection. `dual_objective` is the minimization-form
/// dual objective after every pair update; it is non-increasing by
/// construction of the exact two-variable subproblem solve.
struct SvmDiagnostics {
  std::vector<double> dual_objective;
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  std::size_t pair_updates = 0;
};

inline double decision_value(const ClassifierModel& model,
                             const std::vector<double>& x) {
  if (x.size() != model.w.size())
    throw DataError("decision_value: feature length " +
                    std::to_string(x.size()) + " does not match model dimension " +
                    std::to_string(model.w.size()));
  return detail::dot(model.w, x) + model.b;
}

/// (1/2)||w||^2 + c * sum_i q_i * hinge_i at the given model.
inline double weighted_primal_objective(const ClassifierModel& model,
                                        const WeightedTrainingSet& data,
                                        double c) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double margin = static_cast<double>(data.labels[i]) *
                          (detail::dot(model.w, data.features[i]) + model.b);
    hinge += data.weights[i] * std::max(0.0, 1.0 - margin);
  }
  return 0.5 * detail::dot(model.w, model.w) + c * hinge;
}

namespace detail {

/// Exact minimizer over b of sum_i u_i * max(0, 1 - y_i (margin_i + b)).
/// The objective is piecewise linear with breakpoints at y_i - margin_i;
/// returns the midpoint of the optimal interval when it is flat.
inline double optimal_bias(const std::vector<double>& margins,
                           const std::vector<int>& labels,
                           const std::vector<double>& bounds,
                           const std::vector<std::size_t>& active) {
  struct Event {
    double b;
    double du;
  };
  std::vector<Event> events;
  events.reserve(active.size());
  double slope = 0.0;
  for (std::size_t i : active) {
    events.push_back({static_cast<double>(labels[i]) - margins[i], bounds[i]});
    if (labels[i] == 1) slope -= bounds[i];
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.b < b.b; });
  for (std::size_t k = 0; k < events.size(); ++k) {
    slope += events[k].du;
    if (slope > 0.0) return events[k].b;
    if (slope == 0.0) {
      return k + 1 < events.size() ? 0.5 * (events[k].b + events[k + 1].b)
                                   : events[k].b;
    }
  }
  return events.empty() ? 0.0 : events.back().b;
}

}  // namespace detail

/// Trains the instance-weighted linear SVM
///
///   min_{w,b} (1/2)||w||^2 + c * sum_i q_i * max(0, 1 - y_i (w.x_i + b))
///
/// by maximal-violating-pair coordinate ascent on the dual, with the bias
/// kept out of the regularizer (dual equality constraint sum_i y_i a_i = 0).
/// The returned model is certified: the duality gap at return satisfies
/// (primal - dual) <= tol * max(1, |primal|). The bias is the exact
/// minimizer of the primal in b given the final w. Fully deterministic:
/// fixed scan order, ties broken by the lowest row index.
inline ClassifierModel train_weighted_svm(const WeightedTrainingSet& data,
                                          double c, double tol,
                                          SvmDiagnostics* diag = nullptr) {
  const std::size_t n = data.size();
  if (data.labels.size() != n || data.weights.size() != n)
    throw DataError("weighted training set: ragged row arrays");
  if (!(c > 0.0)) throw DataError("svm: c must be > 0");
  if (!(tol > 0.0)) throw DataError("svm: tol must be > 0");

  const std::size_t p = n == 0 ? 0 : data.features[0].size();
  std::vector<std::size_t> active;
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (data.labels[i] != 1 && data.labels[i] != -1)
      throw DataError("svm: row " + std::to_string(i) +
                      ": label must be +1 or -1");
    if (!(data.weights[i] >= 0.0) || !std::isfinite(data.weights[i]))
      throw DataError("svm: row " + std::to_string(i) + ": bad weight");
    if (data.features[i].size() != p)
      throw DataError("svm: row " + std::to_string(i) +
                      ": inconsistent feature length");
    if (!detail::all_finite(data.features[i]))
      throw DataError("svm: row " + std::to_string(i) +
                      ": non-finite feature");
    if (data.weights[i] > 0.0) {
      active.push_back(i);
      has_pos = has_pos || data.labels[i] == 1;
      has_neg = has_neg || data.labels[i] == -1;
    }
  }
  if (!has_pos || !has_neg)
    throw InfeasibleTrainingError(
        "svm: need at least one positive and one negative row with weight > 0");

  std::vector<double> bound(n, 0.0);  // per-row dual upper bound c * q_i
  for (std::size_t i : active) bound[i] = c * data.weights[i];

  std::vector<double> alpha(n, 0.0);
  std::vector<double> w(p, 0.0);
  std::vector<double> margin(n, 0.0);  // w.x_i for active rows
  double sum_alpha = 0.0;

  constexpr double kTau = 1e-12;
  constexpr std::size_t kMaxPairUpdates = 200000;
  std::size_t updates = 0;
  double kkt_eps = 1e-3;

  auto refresh_margins = [&]() {
    for (std::size_t i : active) margin[i] = detail::dot(w, data.features[i]);
  };

  // Recomputes w from alpha to cancel incremental drift, then certifies the
  // current iterate by its duality gap with the primal-optimal bias.
  auto certify = [&](ClassifierModel& model) {
    std::fill(w.begin(), w.end(), 0.0);
    sum_alpha = 0.0;
    for (std::size_t i : active) {
      if (alpha[i] == 0.0) continue;
      const double coef = alpha[i] * data.labels[i];
      for (std::size_t k = 0; k < p; ++k) w[k] += coef * data.features[i][k];
      sum_alpha += alpha[i];
    }
    refresh_margins();
    model.w = w;
    model.b = detail::optimal_bias(margin, data.labels, bound, active);
    const double primal = weighted_primal_objective(model, data, c);
    const double dual = sum_alpha - 0.5 * detail::dot(w, w);
    if (diag) {
      diag->primal = primal;
      diag->dual = dual;
      diag->gap = primal - dual;
      diag->pair_updates = updates;
    }
    return (primal - dual) <= tol * std::max(1.0, std::abs(primal));
  };

  ClassifierModel model;
  refresh_margins();
  while (true) {
    // Maximal violating pair over d_i = y_i - w.x_i.
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double up_best = -kInf, low_best = kInf;
    std::size_t up_idx = n, low_idx = n;
    for (std::size_t i : active) {
      const double d = static_cast<double>(data.labels[i]) - margin[i];
      const bool in_up = data.labels[i] == 1 ? alpha[i] < bound[i]
                                             : alpha[i] > 0.0;
      const bool in_low = data.labels[i] == -1 ? alpha[i] < bound[i]
                                               : alpha[i] > 0.0;
      if (in_up && d > up_best) {
        up_best = d;
        up_idx = i;
      }
      if (in_low && d < low_best) {
        low_best = d;
        low_idx = i;
      }
    }

    const bool converged =
        up_idx == n || low_idx == n || up_best - low_best < kkt_eps;
    if (converged) {
      if (certify(model)) return model;
      if (up_idx == n || low_idx == n) return model;  // dual vertex, done
      kkt_eps *= 0.1;
      if (kkt_eps < 1e-14) return model;
      continue;
    }
    if (updates >= kMaxPairUpdates) {
      certify(model);
      return model;
    }

    const std::size_t i = up_idx, j = low_idx;
    const int yi = data.labels[i], yj = data.labels[j];
    const std::vector<double>& xi = data.features[i];
    const std::vector<double>& xj = data.features[j];
    double quad = detail::dot(xi, xi) + detail::dot(xj, xj) -
                  2.0 * detail::dot(xi, xj);
    if (quad < kTau) quad = kTau;
    const double gi = yi * margin[i] - 1.0;
    const double gj = yj * margin[j] - 1.0;
    const double old_ai = alpha[i], old_aj = alpha[j];

    // Exact two-variable solve with pairwise clipping that preserves the
    // equality constraint bit-for-bit (same fix-up branches as libsvm).
    if (yi != yj) {
      const double delta = (-gi - gj) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else {
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = -diff;
        }
      }
      if (diff > bound[i] - bound[j]) {
        if (alpha[i] > bound[i]) {
          alpha[i] = bound[i];
          alpha[j] = bound[i] - diff;
        }
      } else {
        if (alpha[j] > bound[j]) {
          alpha[j] = bound[j];
          alpha[i] = bound[j] + diff;
        }
      }
    } else {
      const double delta = (gi - gj) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > bound[i]) {
        if (alpha[i] > bound[i]) {
          alpha[i] = bound[i];
          alpha[j] = sum - bound[i];
        }
      } else {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = sum;
        }
      }
      if (sum > bound[j]) {
        if (alpha[j] > bound[j]) {
          alpha[j] = bound[j];
          alpha[i] = sum - bound[j];
        }
      } else {
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = sum;
        }
      }
    }

    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (std::size_t k = 0; k < p; ++k)
      w[k] += dai * yi * xi[k] + daj * yj * xj[k];
    sum_alpha += dai + daj;
    refresh_margins();
    ++updates;
    if (diag)
      diag->dual_objective.push_back(0.5 * detail::dot(w, w) - sum_alpha);
  }
}

}  // namespace rsmil
