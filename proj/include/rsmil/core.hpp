#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsmil {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input: bad file contents, dimension mismatches, invalid values.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

/// The weighted training set has no usable rows for one of the two classes.
class InfeasibleTrainingError : public Error {
 public:
  explicit InfeasibleTrainingError(const std::string& what) : Error(what) {}
};

/// A metric was requested on data for which it is undefined.
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what) : Error(what) {}
};

/// Input exceeds a hard size limit (e.g. exhaustive enumeration bounds).
class SizeLimitError : public Error {
 public:
  explicit SizeLimitError(const std::string& what) : Error(what) {}
};

/// One video shot: a visual feature vector plus a text-embedding vector.
struct Instance {
  std::string id;
  std::vector<double> feature;
  std::vector<double> text_embedding;
};

/// A labeled video: a nonempty ordered sequence of shots.
/// `label` is +1 when the bag contains the event, -1 otherwise.
struct Bag {
  std::string id;
  int label = 1;
  std::vector<Instance> instances;
  /// Optional per-bag override of the global reliability ratio.
  std::optional<double> p_ratio_override;

  std::size_t size() const { return instances.size(); }
};

struct Dataset {
  std::vector<Bag> bags;
  std::size_t feature_dim = 0;
  std::size_t embedding_dim = 0;
};

/// Vector representation of the event's textual description.
struct EventEmbedding {
  std::string event_id;
  std::vector<double> embedding;
};

/// Linear decision function over visual features: score(x) = w.x + b.
struct ClassifierModel {
  std::vector<double> w;
  double b = 0.0;
};

enum class Ablation { Full, NoReliability, NoDiversity, NoSemantic };
enum class Aggregation { Max, Mean, TopKMean };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoReliability: return "no_reliability";
    case Ablation::NoDiversity: return "no_diversity";
    case Ablation::NoSemantic: return "no_semantic";
  }
  return "full";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "no_reliability") return Ablation::NoReliability;
  if (s == "no_diversity") return Ablation::NoDiversity;
  if (s == "no_semantic") return Ablation::NoSemantic;
  throw DataError("unknown ablation mode: " + s);
}

inline std::string to_string(Aggregation a, int top_k) {
  switch (a) {
    case Aggregation::Max: return "max";
    case Aggregation::Mean: return "mean";
    case Aggregation::TopKMean: return "top" + std::to_string(top_k);
  }
  return "max";
}

/// Parses "max", "mean" or "top<k>" (e.g. "top3"). On the "top<k>" form the
/// parsed k is written through `top_k`.
inline Aggregation parse_aggregation(const std::string& s, int& top_k) {
  if (s == "max") return Aggregation::Max;
  if (s == "mean") return Aggregation::Mean;
  if (s.rfind("top", 0) == 0 && s.size() > 3) {
    const std::string digits = s.substr(3);
    if (std::all_of(digits.begin(), digits.end(),
                    [](unsigned char c) { return std::isdigit(c); })) {
      const int k = std::stoi(digits);
      if (k >= 1) {
        top_k = k;
        return Aggregation::TopKMean;
      }
    }
  }
  throw DataError("unknown aggregation rule: " + s +
                  " (expected max, mean or top<k>)");
}

/// All knobs of the training pipeline. Defaults match the CLI defaults.
struct Hyperparameters {
  double alpha = 0.5;    // visual/semantic loss mix, in [0,1]
  double lambda = 0.1;   // reliability regularization weight, >= 0
  double gamma = 0.1;    // diversity regularization weight, >= 0
  /// Candidate related levels; a single entry pins r.
  std::vector<int> related_level_grid = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double p_ratio = 0.3;  // per-bag minimum selected fraction, in [0,1]
  double svm_c = 1.0;    // hinge-loss trade-off of the weighted SVM, > 0
  int max_outer_iters = 50;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::Full;
  Aggregation aggregation = Aggregation::Max;
  int top_k = 2;  // k of the top-k mean bag-scoring rule
};

inline void validate_hyperparameters(const Hyperparameters& h) {
  if (!(h.alpha >= 0.0 && h.alpha <= 1.0))
    throw DataError("alpha must lie in [0,1]");
  if (!(h.lambda >= 0.0)) throw DataError("lambda must be >= 0");
  if (!(h.gamma >= 0.0)) throw DataError("gamma must be >= 0");
  if (h.related_level_grid.empty())
    throw DataError("related-level grid must be nonempty");
  for (int r : h.related_level_grid)
    if (r < 1 || r > 10)
      throw DataError("related level must lie in {1,...,10}, got " +
                      std::to_string(r));
  if (!(h.p_ratio >= 0.0 && h.p_ratio <= 1.0))
    throw DataError("p_ratio must lie in [0,1]");
  if (!(h.svm_c > 0.0)) throw DataError("svm_c must be > 0");
  if (h.max_outer_iters < 1) throw DataError("max_outer_iters must be >= 1");
  if (!(h.tol > 0.0)) throw DataError("tol must be > 0");
  if (h.top_k < 1) throw DataError("top_k must be >= 1");
}

/// Per-bag binary selection vectors plus the total selected count.
struct ReliabilityAssignment {
  std::map<std::string, std::vector<std::uint8_t>> per_bag;
  std::size_t selected_count = 0;

  /// Recomputes `selected_count` from the per-bag vectors.
  void refresh_count() {
    selected_count = 0;
    for (const auto& [id, q] : per_bag)
      for (std::uint8_t v : q) selected_count += v;
  }
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) {
  return std::sqrt(dot(a, a));
}

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/// Minimum number of selected instances for a bag of size m at ratio p.
/// Ceiling with a small guard so that exact products (0.1 * 30) do not
/// spill over to the next integer through floating-point representation.
inline int min_reliable_count(double p_ratio, std::size_t m) {
  const double raw = p_ratio * static_cast<double>(m);
  int c = static_cast<int>(std::ceil(raw - 1e-9));
  if (c < 0) c = 0;
  if (c > static_cast<int>(m)) c = static_cast<int>(m);
  return c;
}

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }

  std::string to_string() const {
    if (ok()) return "ok";
    std::ostringstream os;
    for (const auto& v : violations) os << v << "\n";
    return os.str();
  }
};

/// Checks every dataset invariant and enumerates violations with bag and
/// instance ids. Violations are data, not failures: this never throws.
inline ValidationReport validate_dataset(const Dataset& ds) {
  ValidationReport report;
  auto add = [&report](const std::string& msg) {
    report.violations.push_back(msg);
  };

  if (ds.feature_dim == 0) add("feature_dim must be positive");
  if (ds.embedding_dim == 0) add("embedding_dim must be positive");

  std::map<std::string, int> bag_ids;
  bool has_pos = false, has_neg = false;
  for (const Bag& bag : ds.bags) {
    if (++bag_ids[bag.id] == 2) add("duplicate bag id: " + bag.id);
    if (bag.label != 1 && bag.label != -1)
      add("bag " + bag.id + ": label must be +1 or -1");
    if (bag.label == 1) has_pos = true;
    if (bag.label == -1) has_neg = true;
    if (bag.instances.empty()) add("bag " + bag.id + ": empty bag");
    if (bag.p_ratio_override &&
        !(*bag.p_ratio_override >= 0.0 && *bag.p_ratio_override <= 1.0))
      add("bag " + bag.id + ": p_ratio override must lie in [0,1]");

    std::map<std::string, int> inst_ids;
    for (const Instance& inst : bag.instances) {
      if (++inst_ids[inst.id] == 2)
        add("bag " + bag.id + ": duplicate instance id: " + inst.id);
      if (inst.feature.size() != ds.feature_dim)
        add("bag " + bag.id + ": instance " + inst.id + ": feature length " +
            std::to_string(inst.feature.size()) + ", expected " +
            std::to_string(ds.feature_dim));
      if (inst.text_embedding.size() != ds.embedding_dim)
        add("bag " + bag.id + ": instance " + inst.id +
            ": text_embedding length " +
            std::to_string(inst.text_embedding.size()) + ", expected " +
            std::to_string(ds.embedding_dim));
      if (!detail::all_finite(inst.feature) ||
          !detail::all_finite(inst.text_embedding))
        add("bag " + bag.id + ": instance " + inst.id +
            ": non-finite component");
    }
  }
  if (!has_pos) add("no positive bag");
  if (!has_neg) add("no negative bag");
  return report;
}

}  // namespace rsmil
