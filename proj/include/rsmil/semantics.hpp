#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "rsmil/core.hpp"

namespace rsmil {

/// Instance-event similarity: cosine of the shot's text embedding against
/// the event embedding, affinely rescaled from [-1,1] into [0,1]. The
/// rescale is monotone, so within-bag ranks are unchanged.
inline double instance_event_similarity(const Instance& instance,
                                        const EventEmbedding& event) {
  if (instance.text_embedding.size() != event.embedding.size())
    throw DataError("instance " + instance.id + ": text_embedding length " +
                    std::to_string(instance.text_embedding.size()) +
                    " does not match event embedding length " +
                    std::to_string(event.embedding.size()));
  const double tt =
      detail::dot(instance.text_embedding, instance.text_embedding);
  if (tt == 0.0)
    throw DataError("instance " + instance.id +
                    ": zero-norm text embedding, similarity undefined");
  const double ee = detail::dot(event.embedding, event.embedding);
  if (ee == 0.0)
    throw DataError("event " + event.event_id + ": zero-norm embedding");
  // Single square root so that exactly (anti)parallel vectors land on
  // cosine +/-1 without rounding residue.
  const double c = detail::dot(instance.text_embedding, event.embedding) /
                   std::sqrt(tt * ee);
  return std::clamp(0.5 * (1.0 + c), 0.0, 1.0);
}

/// Descending similarity ranks within one bag, 1-based; rank 1 is the
/// largest similarity. Ties are broken by ascending instance index so the
/// result is a permutation of {1,...,m}.
inline std::vector<int> similarity_ranks(const std::vector<double>& sims) {
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&sims](std::size_t a, std::size_t b) {
                     return sims[a] > sims[b];
                   });
  std::vector<int> ranks(sims.size());
  for (std::size_t t = 0; t < order.size(); ++t)
    ranks[order[t]] = static_cast<int>(t) + 1;
  return ranks;
}

/// Rank-threshold label prediction: entry j is +1 iff the within-bag
/// descending rank of sims[j] is <= r. Exactly min(r, m) entries are +1.
inline std::vector<int> semantic_labels_for_bag(const std::vector<double>& sims,
                                                int r) {
  if (r < 1) throw DataError("related level r must be >= 1");
  const std::vector<int> ranks = similarity_ranks(sims);
  std::vector<int> labels(sims.size());
  for (std::size_t j = 0; j < sims.size(); ++j)
    labels[j] = ranks[j] <= r ? 1 : -1;
  return labels;
}

/// Mismatch penalty between the rank-predicted label and the instance
/// label. Zero when they agree; otherwise y*(1 - 2s) + 1, which is 2 - 2s
/// for mispredicted positives and 2s for mispredicted negatives.
inline double semantic_loss(int predicted, int y, double s) {
  if (predicted == y) return 0.0;
  return static_cast<double>(y) * (1.0 - 2.0 * s) + 1.0;
}

/// Per-bag similarities and their descending ranks for one event.
struct SimilarityTable {
  struct BagEntry {
    std::vector<double> values;
    std::vector<int> ranks;
  };
  std::map<std::string, BagEntry> per_bag;
};

inline SimilarityTable compute_similarity_table(const Dataset& dataset,
                                                const EventEmbedding& event) {
  SimilarityTable table;
  for (const Bag& bag : dataset.bags) {
    SimilarityTable::BagEntry entry;
    entry.values.reserve(bag.size());
    for (const Instance& inst : bag.instances)
      entry.values.push_back(instance_event_similarity(inst, event));
    entry.ranks = similarity_ranks(entry.values);
    table.per_bag.emplace(bag.id, std::move(entry));
  }
  return table;
}

}  // namespace rsmil
