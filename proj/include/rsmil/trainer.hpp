#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rsmil/core.hpp"
#include "rsmil/eval.hpp"
#include "rsmil/loss.hpp"
#include "rsmil/selector.hpp"
#include "rsmil/semantics.hpp"
#include "rsmil/svm.hpp"

namespace rsmil {

struct IterationRecord {
  /// Joint objective after the full iteration: the per-bag selection
  /// objectives plus the SVM regularizer scaled into loss units,
  /// alpha/(2c) * ||w||^2. Both alternating steps minimize exactly this
  /// quantity, so the recorded sequence is non-increasing.
  double objective = 0.0;
  std::size_t selected_count = 0;
  std::size_t q_changes = 0;
  /// Selection emptied one class; its lowest-loss instances were restored
  /// for the SVM step of this iteration.
  bool class_rescue = false;
};

struct RValueRecord {
  int r = 1;
  double final_objective = 0.0;
  std::optional<double> validation_ap;
};

struct TrainingHistory {
  std::vector<IterationRecord> iterations;
  std::vector<RValueRecord> per_r;
};

struct TrainedDetector {
  ClassifierModel model;
  ReliabilityAssignment reliability;
  int chosen_r = 1;
  TrainingHistory history;
  Hyperparameters hyper;
};

/// Sum over bags of q_i . L_i - lambda ||q_i||_1 - gamma ||q_i||_2, with
/// the loss vectors evaluated at the given model and related level.
inline double global_objective(const Dataset& dataset,
                               const ClassifierModel& model,
                               const ReliabilityAssignment& reliability,
                               const SimilarityTable& similarities,
                               const Hyperparameters& hyper, int r) {
  const double gamma = effective_gamma(hyper);
  double total = 0.0;
  for (const Bag& bag : dataset.bags) {
    const auto qit = reliability.per_bag.find(bag.id);
    if (qit == reliability.per_bag.end())
      throw DataError("global_objective: no reliability vector for bag " +
                      bag.id);
    const auto sit = similarities.per_bag.find(bag.id);
    if (sit == similarities.per_bag.end())
      throw DataError("global_objective: no similarities for bag " + bag.id);
    const BagLossVector losses =
        combined_bag_losses(model, bag, sit->second.values, hyper, r);
    total +=
        selection_objective(losses.losses, qit->second, hyper.lambda, gamma);
  }
  return total;
}

namespace detail {

/// All-zero similarity table of the right shape, used when the semantic
/// branch is ablated away and embeddings never need to be touched.
inline SimilarityTable zero_similarity_table(const Dataset& dataset) {
  SimilarityTable table;
  for (const Bag& bag : dataset.bags) {
    SimilarityTable::BagEntry entry;
    entry.values.assign(bag.size(), 0.0);
    entry.ranks = similarity_ranks(entry.values);
    table.per_bag.emplace(bag.id, entry);
  }
  return table;
}

}  // namespace detail

/// One full run of the alternating optimization at a fixed related level:
/// initialize every reliability variable to 1 and every instance label to
/// its bag label, then alternate (a) weighted-SVM training with the current
/// selection as row weights and (b) per-bag reliable-instance selection on
/// the visual-semantic losses, until the selection stops changing, the
/// objective change falls below tol, or max_outer_iters is reached.
inline TrainedDetector train_for_r(const Dataset& dataset,
                                   const EventEmbedding& event,
                                   const Hyperparameters& hyper, int r) {
  validate_hyperparameters(hyper);
  if (r < 1 || r > 10)
    throw DataError("train_for_r: related level must lie in {1,...,10}");
  {
    const ValidationReport report = validate_dataset(dataset);
    if (!report.ok())
      throw DataError("train_for_r: invalid dataset:\n" + report.to_string());
  }

  const double alpha = effective_alpha(hyper);
  const double gamma = effective_gamma(hyper);
  const bool select_step = hyper.ablation != Ablation::NoReliability;
  const SimilarityTable similarities =
      alpha == 1.0 ? detail::zero_similarity_table(dataset)
                   : compute_similarity_table(dataset, event);

  const std::size_t n_bags = dataset.bags.size();
  std::vector<std::vector<double>> semantic_losses(n_bags);
  std::vector<int> min_counts(n_bags);
  WeightedTrainingSet rows;
  std::vector<std::pair<std::size_t, std::size_t>> spans(n_bags);
  for (std::size_t i = 0; i < n_bags; ++i) {
    const Bag& bag = dataset.bags[i];
    const std::vector<double>& sims = similarities.per_bag.at(bag.id).values;
    semantic_losses[i] =
        alpha == 1.0 ? std::vector<double>(bag.size(), 0.0)
                     : semantic_losses_for_bag(sims, bag.label, r);
    const double p_i = bag.p_ratio_override.value_or(hyper.p_ratio);
    min_counts[i] = min_reliable_count(p_i, bag.size());
    spans[i].first = rows.size();
    for (const Instance& inst : bag.instances)
      rows.add_row(inst.feature, bag.label, 1.0);
    spans[i].second = rows.size();
  }

  std::vector<std::vector<std::uint8_t>> q(n_bags);
  for (std::size_t i = 0; i < n_bags; ++i)
    q[i].assign(dataset.bags[i].size(), 1);
  std::vector<double> last_losses(rows.size(), 0.0);

  // Restores the k lowest-loss rows of a class that selection emptied, so
  // the SVM subproblem stays well-posed. Only reachable when every min
  // count of that class is zero.
  auto rescue_class = [&](int label) {
    std::vector<std::size_t> candidates;
    int k = 0;
    for (std::size_t i = 0; i < n_bags; ++i) {
      if (dataset.bags[i].label != label) continue;
      k += min_counts[i];
      for (std::size_t idx = spans[i].first; idx < spans[i].second; ++idx)
        candidates.push_back(idx);
    }
    k = std::max(k, 1);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) {
                       return last_losses[a] < last_losses[b];
                     });
    for (std::size_t t = 0;
         t < std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
         ++t)
      rows.weights[candidates[t]] = 1.0;
  };

  TrainedDetector detector;
  detector.chosen_r = r;
  detector.hyper = hyper;
  double prev_objective = std::numeric_limits<double>::quiet_NaN();

  for (int iter = 1; iter <= hyper.max_outer_iters; ++iter) {
    // (a) weighted SVM on the current selection.
    for (std::size_t i = 0; i < n_bags; ++i)
      for (std::size_t j = 0; j < q[i].size(); ++j)
        rows.weights[spans[i].first + j] = q[i][j];
    bool rescued = false;
    bool has_pos = false, has_neg = false;
    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
      if (rows.weights[idx] > 0.0) {
        if (rows.labels[idx] == 1)
          has_pos = true;
        else
          has_neg = true;
      }
    }
    if (!has_pos) {
      rescue_class(1);
      rescued = true;
    }
    if (!has_neg) {
      rescue_class(-1);
      rescued = true;
    }
    detector.model = train_weighted_svm(rows, hyper.svm_c, hyper.tol);

    // (b) per-bag reliable-instance selection on the combined losses.
    double objective = 0.0;
    std::size_t selected = 0, changes = 0;
    for (std::size_t i = 0; i < n_bags; ++i) {
      const Bag& bag = dataset.bags[i];
      std::vector<double> losses(bag.size());
      for (std::size_t j = 0; j < bag.size(); ++j) {
        const double lv =
            visual_loss(detector.model, bag.instances[j].feature, bag.label);
        losses[j] = alpha * lv + (1.0 - alpha) * semantic_losses[i][j];
        last_losses[spans[i].first + j] = losses[j];
      }
      std::vector<std::uint8_t> q_new =
          select_step
              ? select_reliable({losses, hyper.lambda, gamma, min_counts[i]})
              : q[i];
      for (std::size_t j = 0; j < bag.size(); ++j) {
        if (q_new[j] != q[i][j]) ++changes;
        selected += q_new[j];
      }
      objective += selection_objective(losses, q_new, hyper.lambda, gamma);
      q[i] = std::move(q_new);
    }
    objective += alpha / (2.0 * hyper.svm_c) *
                 detail::dot(detector.model.w, detector.model.w);

    detector.history.iterations.push_back(
        {objective, selected, changes, rescued});
    const bool q_stable = changes == 0;
    const bool objective_stable =
        iter >= 2 && std::abs(objective - prev_objective) <=
                         hyper.tol * (1.0 + std::abs(prev_objective));
    prev_objective = objective;
    if (q_stable || objective_stable) break;
  }

  for (std::size_t i = 0; i < n_bags; ++i)
    detector.reliability.per_bag[dataset.bags[i].id] = q[i];
  detector.reliability.refresh_count();
  detector.history.per_r.push_back(
      {r, detector.history.iterations.back().objective, std::nullopt});
  return detector;
}

/// Scores every bag of a labeled dataset with the model and returns the
/// average precision of the resulting ranking.
inline double dataset_average_precision(const ClassifierModel& model,
                                        const Dataset& dataset,
                                        Aggregation rule, int top_k) {
  RankedPredictions preds;
  preds.rows.reserve(dataset.bags.size());
  for (const Bag& bag : dataset.bags)
    preds.rows.push_back({bag.id, bag_score(model, bag, rule, top_k), bag.label});
  return average_precision(preds);
}

/// Trains one detector per related level in the grid and keeps the one
/// with the best validation average precision; ties go to the smaller r.
inline TrainedDetector select_related_level(const Dataset& dataset,
                                            const Dataset& validation,
                                            const EventEmbedding& event,
                                            const Hyperparameters& hyper) {
  validate_hyperparameters(hyper);
  if (hyper.related_level_grid.empty())
    throw DataError("select_related_level: empty related-level grid");
  {
    std::set<std::string> train_ids;
    for (const Bag& bag : dataset.bags) train_ids.insert(bag.id);
    for (const Bag& bag : validation.bags)
      if (train_ids.count(bag.id))
        throw DataError("select_related_level: bag " + bag.id +
                        " appears in both training and validation sets");
  }

  std::vector<int> grid = hyper.related_level_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::optional<TrainedDetector> best;
  double best_ap = -1.0;
  std::vector<RValueRecord> records;
  for (int r : grid) {
    TrainedDetector det = train_for_r(dataset, event, hyper, r);
    const double ap = dataset_average_precision(det.model, validation,
                                                hyper.aggregation, hyper.top_k);
    RValueRecord record = det.history.per_r.front();
    record.validation_ap = ap;
    det.history.per_r.front() = record;
    records.push_back(record);
    if (ap > best_ap) {
      best_ap = ap;
      best = std::move(det);
    }
  }
  best->history.per_r = std::move(records);
  return *best;
}

}  // namespace rsmil
