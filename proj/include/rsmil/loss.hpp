#pragma once

#include <string>
#include <vector>

#include "rsmil/core.hpp"
#include "rsmil/semantics.hpp"

namespace rsmil {

/// Hinge loss of the linear decision function on one shot.
inline double visual_loss(const ClassifierModel& model,
                          const std::vector<double>& x, int y) {
  if (x.size() != model.w.size())
    throw DataError("visual_loss: feature length " + std::to_string(x.size()) +
                    " does not match model dimension " +
                    std::to_string(model.w.size()));
  const double margin =
      static_cast<double>(y) * (detail::dot(model.w, x) + model.b);
  return std::max(0.0, 1.0 - margin);
}

/// Effective loss mix: the no_semantic ablation runs on visual loss alone.
inline double effective_alpha(const Hyperparameters& hyper) {
  return hyper.ablation == Ablation::NoSemantic ? 1.0 : hyper.alpha;
}

/// Effective diversity weight: the no_diversity ablation drops the l2 term.
inline double effective_gamma(const Hyperparameters& hyper) {
  return hyper.ablation == Ablation::NoDiversity ? 0.0 : hyper.gamma;
}

/// Semantic mismatch penalties for one bag at related level r. Instance
/// labels stay fixed at the bag label, so for a given r these are constants
/// of the training run and can be computed once.
inline std::vector<double> semantic_losses_for_bag(
    const std::vector<double>& sims, int bag_label, int r) {
  const std::vector<int> predicted = semantic_labels_for_bag(sims, r);
  std::vector<double> losses(sims.size());
  for (std::size_t j = 0; j < sims.size(); ++j)
    losses[j] = semantic_loss(predicted[j], bag_label, sims[j]);
  return losses;
}

/// Componentwise convex combination of the visual and semantic losses of
/// one bag.
struct BagLossVector {
  std::string bag_id;
  std::vector<double> losses;
  std::vector<double> visual_part;
  std::vector<double> semantic_part;
};

inline BagLossVector combined_bag_losses(const ClassifierModel& model,
                                         const Bag& bag,
                                         const std::vector<double>& sims,
                                         const Hyperparameters& hyper, int r) {
  if (sims.size() != bag.size())
    throw DataError("bag " + bag.id + ": similarity vector length " +
                    std::to_string(sims.size()) + " does not match bag size " +
                    std::to_string(bag.size()));
  const double alpha = effective_alpha(hyper);

  BagLossVector out;
  out.bag_id = bag.id;
  out.visual_part.reserve(bag.size());
  for (const Instance& inst : bag.instances)
    out.visual_part.push_back(visual_loss(model, inst.feature, bag.label));
  out.semantic_part = alpha == 1.0
                          ? std::vector<double>(bag.size(), 0.0)
                          : semantic_losses_for_bag(sims, bag.label, r);
  out.losses.resize(bag.size());
  for (std::size_t j = 0; j < bag.size(); ++j)
    out.losses[j] =
        alpha * out.visual_part[j] + (1.0 - alpha) * out.semantic_part[j];
  return out;
}

}  // namespace rsmil
