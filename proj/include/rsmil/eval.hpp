#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "rsmil/core.hpp"
#include "rsmil/svm.hpp"

namespace rsmil {

struct PredictionRow {
  std::string bag_id;
  double score = 0.0;
  int label = 0;
};

struct RankedPredictions {
  std::vector<PredictionRow> rows;
};

/// Aggregates per-instance decision values into one bag score. `max` keeps
/// the strongest shot (the positive-bag semantics: one good shot makes the
/// bag positive); `mean` averages everything; `top_k` averages the k
/// largest values (all of them when the bag is smaller than k).
inline double bag_score(const ClassifierModel& model, const Bag& bag,
                        Aggregation rule, int top_k = 2) {
  if (bag.instances.empty())
    throw DataError("bag " + bag.id + ": cannot score an empty bag");
  std::vector<double> scores;
  scores.reserve(bag.size());
  for (const Instance& inst : bag.instances)
    scores.push_back(decision_value(model, inst.feature));
  switch (rule) {
    case Aggregation::Max:
      return *std::max_element(scores.begin(), scores.end());
    case Aggregation::Mean:
      return std::accumulate(scores.begin(), scores.end(), 0.0) /
             static_cast<double>(scores.size());
    case Aggregation::TopKMean: {
      if (top_k < 1) throw DataError("bag_score: top_k must be >= 1");
      const std::size_t k =
          std::min<std::size_t>(static_cast<std::size_t>(top_k), scores.size());
      std::partial_sort(scores.begin(), scores.begin() + k, scores.end(),
                        std::greater<double>());
      return std::accumulate(scores.begin(), scores.begin() + k, 0.0) /
             static_cast<double>(k);
    }
  }
  throw DataError("bag_score: unknown aggregation rule");
}

/// Plain (non-interpolated) average precision: sort by descending score,
/// ties by ascending bag id, then average precision-at-rank over the
/// positive rows.
inline double average_precision(const RankedPredictions& predictions) {
  std::map<std::string, int> seen;
  for (const PredictionRow& row : predictions.rows)
    if (++seen[row.bag_id] == 2)
      throw DataError("average_precision: duplicate bag id: " + row.bag_id);

  std::vector<const PredictionRow*> sorted;
  sorted.reserve(predictions.rows.size());
  for (const PredictionRow& row : predictions.rows) sorted.push_back(&row);
  std::sort(sorted.begin(), sorted.end(),
            [](const PredictionRow* a, const PredictionRow* b) {
              if (a->score != b->score) return a->score > b->score;
              return a->bag_id < b->bag_id;
            });

  double positives_so_far = 0.0;
  double precision_sum = 0.0;
  for (std::size_t rank = 1; rank <= sorted.size(); ++rank) {
    if (sorted[rank - 1]->label == 1) {
      positives_so_far += 1.0;
      precision_sum += positives_so_far / static_cast<double>(rank);
    }
  }
  if (positives_so_far == 0.0)
    throw UndefinedMetricError(
        "average_precision: no positive rows, metric undefined");
  return precision_sum / positives_so_far;
}

inline double mean_average_precision(const std::vector<double>& per_event) {
  if (per_event.empty())
    throw UndefinedMetricError(
        "mean_average_precision: empty per-event sequence");
  return std::accumulate(per_event.begin(), per_event.end(), 0.0) /
         static_cast<double>(per_event.size());
}

}  // namespace rsmil
