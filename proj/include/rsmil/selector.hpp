#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "rsmil/core.hpp"

namespace rsmil {

/// One bag's selection subproblem: instance losses are constants once the
/// classifier is fixed, and at least `min_count` instances must be kept.
struct SelectionProblem {
  std::vector<double> losses;
  double lambda = 0.0;
  double gamma = 0.0;
  int min_count = 0;
};

namespace detail {

inline void check_selection_problem(const SelectionProblem& problem) {
  if (!all_finite(problem.losses))
    throw DataError("selection: non-finite loss");
  if (problem.min_count < 0 ||
      problem.min_count > static_cast<int>(problem.losses.size()))
    throw DataError("selection: min_count out of range");
  if (!(problem.lambda >= 0.0) || !(problem.gamma >= 0.0))
    throw DataError("selection: lambda and gamma must be >= 0");
}

/// Rank-t admission threshold. It decreases as t grows, which is what
/// spreads the extra selections across ranks instead of piling them up.
inline double selection_threshold(double lambda, double gamma, int t) {
  return lambda + gamma / (std::sqrt(static_cast<double>(t)) +
                           std::sqrt(static_cast<double>(t - 1)));
}

}  // namespace detail

/// q . losses - lambda * ||q||_1 - gamma * ||q||_2. For binary q the l1
/// norm is the selected count and the l2 norm its square root.
inline double selection_objective(const std::vector<double>& losses,
                                  const std::vector<std::uint8_t>& q,
                                  double lambda, double gamma) {
  if (losses.size() != q.size())
    throw DataError("selection_objective: length mismatch");
  double loss_sum = 0.0;
  double count = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j]) {
      loss_sum += losses[j];
      count += 1.0;
    }
  }
  return loss_sum - lambda * count - gamma * std::sqrt(count);
}

/// Closed-form minimizer of the per-bag selection problem. Sort losses
/// ascending (ties by ascending original index); the instance at sorted
/// rank t is kept iff t <= min_count or its loss is strictly below
/// lambda + gamma / (sqrt(t) + sqrt(t-1)). Because sorted losses are
/// non-decreasing while the threshold is non-increasing, the kept set is a
/// prefix of the sorted order, and the prefix length minimizes the
/// objective over all feasible prefix lengths.
inline std::vector<std::uint8_t> select_reliable(
    const SelectionProblem& problem) {
  detail::check_selection_problem(problem);
  const std::size_t m = problem.losses.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&problem](std::size_t a, std::size_t b) {
                     return problem.losses[a] < problem.losses[b];
                   });
  std::vector<std::uint8_t> q(m, 0);
  for (std::size_t t = 1; t <= m; ++t) {
    const bool forced = static_cast<int>(t) <= problem.min_count;
    const bool admitted =
        problem.losses[order[t - 1]] <
        detail::selection_threshold(problem.lambda, problem.gamma,
                                    static_cast<int>(t));
    q[order[t - 1]] = forced || admitted ? 1 : 0;
  }
  return q;
}

/// Exhaustive oracle for the same problem: enumerates every binary vector
/// with at least min_count ones and returns one attaining the minimum
/// objective. Ties within 1e-12 resolve toward the select_reliable vector.
/// Verification tool only; refuses m > 20.
inline std::vector<std::uint8_t> brute_force_select(
    const SelectionProblem& problem) {
  detail::check_selection_problem(problem);
  const std::size_t m = problem.losses.size();
  if (m > 20)
    throw SizeLimitError("brute_force_select: m = " + std::to_string(m) +
                         " exceeds the enumeration limit of 20");

  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    const int count = std::popcount(mask);
    if (count < problem.min_count) continue;
    double loss_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (mask & (1u << j)) loss_sum += problem.losses[j];
    const double obj = loss_sum - problem.lambda * count -
                       problem.gamma * std::sqrt(static_cast<double>(count));
    if (obj < best) {
      best = obj;
      best_mask = mask;
    }
  }

  const std::vector<std::uint8_t> greedy = select_reliable(problem);
  if (selection_objective(problem.losses, greedy, problem.lambda,
                          problem.gamma) <= best + 1e-12)
    return greedy;
  std::vector<std::uint8_t> q(m, 0);
  for (std::size_t j = 0; j < m; ++j) q[j] = (best_mask >> j) & 1u;
  return q;
}

}  // namespace rsmil
