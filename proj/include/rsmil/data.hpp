#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsmil/core.hpp"

namespace rsmil {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset files: line-oriented text, one bag per line, each line one object
// {"bag_id": str, "label": 1|-1, "instances": [{"id", "feature",
// "text_embedding"}], "p_ratio": optional}. Numbers are written as
// shortest-round-trip decimals, so write-then-read is value-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> parse_number_array(const json& j,
                                              const std::string& context) {
  if (!j.is_array()) throw DataError(context + ": expected a number array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(context + ": non-numeric entry");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw DataError(context + ": non-finite entry");
    out.push_back(x);
  }
  return out;
}

inline std::string zero_pad(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, value);
  return buf;
}

}  // namespace detail

inline Bag parse_bag_line(const std::string& line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError("dataset line " + std::to_string(line_number) +
                    ": malformed: " + e.what());
  }
  const std::string where = "dataset line " + std::to_string(line_number);
  if (!j.is_object() || !j.contains("bag_id") || !j.contains("label") ||
      !j.contains("instances"))
    throw DataError(where + ": expected {bag_id, label, instances}");

  Bag bag;
  if (!j["bag_id"].is_string()) throw DataError(where + ": bag_id must be a string");
  bag.id = j["bag_id"].get<std::string>();
  if (!j["label"].is_number_integer())
    throw DataError(where + ": label must be 1 or -1");
  bag.label = j["label"].get<int>();
  if (bag.label != 1 && bag.label != -1)
    throw DataError(where + ": bag " + bag.id + ": label must be 1 or -1");
  if (j.contains("p_ratio")) {
    if (!j["p_ratio"].is_number())
      throw DataError(where + ": bag " + bag.id + ": p_ratio must be a number");
    const double pr = j["p_ratio"].get<double>();
    if (!(pr >= 0.0 && pr <= 1.0))
      throw DataError(where + ": bag " + bag.id +
                      ": p_ratio must lie in [0,1]");
    bag.p_ratio_override = pr;
  }
  if (!j["instances"].is_array() || j["instances"].empty())
    throw DataError(where + ": bag " + bag.id +
                    ": instances must be a nonempty array");
  for (const auto& ji : j["instances"]) {
    if (!ji.is_object() || !ji.contains("id") || !ji.contains("feature") ||
        !ji.contains("text_embedding"))
      throw DataError(where + ": bag " + bag.id +
                      ": instance must have {id, feature, text_embedding}");
    Instance inst;
    inst.id = ji["id"].get<std::string>();
    const std::string ictx = where + ": bag " + bag.id + ": instance " + inst.id;
    inst.feature = detail::parse_number_array(ji["feature"], ictx + ": feature");
    inst.text_embedding =
        detail::parse_number_array(ji["text_embedding"], ictx + ": text_embedding");
    bag.instances.push_back(std::move(inst));
  }
  return bag;
}

inline Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_number = 0;
  std::map<std::string, bool> seen;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    Bag bag = parse_bag_line(line, line_number);
    if (seen.count(bag.id))
      throw DataError("dataset line " + std::to_string(line_number) +
                      ": duplicate bag id: " + bag.id);
    seen[bag.id] = true;

    if (ds.bags.empty()) {
      ds.feature_dim = bag.instances.front().feature.size();
      ds.embedding_dim = bag.instances.front().text_embedding.size();
      if (ds.feature_dim == 0 || ds.embedding_dim == 0)
        throw DataError("bag " + bag.id +
                        ": first instance has an empty feature or embedding");
    }
    std::map<std::string, bool> inst_seen;
    for (const Instance& inst : bag.instances) {
      if (inst_seen.count(inst.id))
        throw DataError("bag " + bag.id + ": duplicate instance id: " + inst.id);
      inst_seen[inst.id] = true;
      if (inst.feature.size() != ds.feature_dim)
        throw DataError("bag " + bag.id + ": instance " + inst.id +
                        ": feature length " + std::to_string(inst.feature.size()) +
                        ", expected " + std::to_string(ds.feature_dim));
      if (inst.text_embedding.size() != ds.embedding_dim)
        throw DataError("bag " + bag.id + ": instance " + inst.id +
                        ": text_embedding length " +
                        std::to_string(inst.text_embedding.size()) +
                        ", expected " + std::to_string(ds.embedding_dim));
    }
    ds.bags.push_back(std::move(bag));
  }
  if (ds.bags.empty()) throw DataError("dataset: no bags found");
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  return read_dataset(in);
}

inline json bag_to_json(const Bag& bag) {
  json jb;
  jb["bag_id"] = bag.id;
  jb["label"] = bag.label;
  if (bag.p_ratio_override) jb["p_ratio"] = *bag.p_ratio_override;
  jb["instances"] = json::array();
  for (const Instance& inst : bag.instances) {
    json ji;
    ji["id"] = inst.id;
    ji["feature"] = inst.feature;
    ji["text_embedding"] = inst.text_embedding;
    jb["instances"].push_back(std::move(ji));
  }
  return jb;
}

inline void write_dataset(const Dataset& ds, std::ostream& out) {
  for (const Bag& bag : ds.bags) out << bag_to_json(bag).dump() << "\n";
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  write_dataset(ds, out);
}

// ---------------------------------------------------------------------------
// Event files: {"event_id": str, "embedding": [real...]}.
// ---------------------------------------------------------------------------

inline EventEmbedding load_event(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("event file " + path + ": malformed: " + e.what());
  }
  if (!j.is_object() || !j.contains("event_id") || !j.contains("embedding"))
    throw DataError("event file " + path +
                    ": expected {event_id, embedding}");
  EventEmbedding ev;
  ev.event_id = j["event_id"].get<std::string>();
  ev.embedding = detail::parse_number_array(j["embedding"], "event embedding");
  if (detail::norm2(ev.embedding) == 0.0)
    throw DataError("event " + ev.event_id + ": zero embedding");
  return ev;
}

inline void save_event(const EventEmbedding& ev, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write event file: " + path);
  json j;
  j["event_id"] = ev.event_id;
  j["embedding"] = ev.embedding;
  out << j.dump() << "\n";
}

// ---------------------------------------------------------------------------
// Model files, format_version 1.
// ---------------------------------------------------------------------------

constexpr int kModelFormatVersion = 1;

struct ModelRecord {
  ClassifierModel model;
  Hyperparameters hyper;
  int chosen_r = 1;
};

inline json hyperparameters_to_json(const Hyperparameters& h) {
  json j;
  j["alpha"] = h.alpha;
  j["lambda"] = h.lambda;
  j["gamma"] = h.gamma;
  j["related_level_grid"] = h.related_level_grid;
  j["p_ratio"] = h.p_ratio;
  j["svm_c"] = h.svm_c;
  j["max_outer_iters"] = h.max_outer_iters;
  j["tol"] = h.tol;
  j["seed"] = h.seed;
  j["ablation"] = to_string(h.ablation);
  j["aggregation"] = to_string(h.aggregation, h.top_k);
  j["top_k"] = h.top_k;
  return j;
}

inline Hyperparameters hyperparameters_from_json(const json& j) {
  Hyperparameters h;
  h.alpha = j.at("alpha").get<double>();
  h.lambda = j.at("lambda").get<double>();
  h.gamma = j.at("gamma").get<double>();
  h.related_level_grid = j.at("related_level_grid").get<std::vector<int>>();
  h.p_ratio = j.at("p_ratio").get<double>();
  h.svm_c = j.at("svm_c").get<double>();
  h.max_outer_iters = j.at("max_outer_iters").get<int>();
  h.tol = j.at("tol").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.ablation = parse_ablation(j.at("ablation").get<std::string>());
  h.top_k = j.at("top_k").get<int>();
  h.aggregation =
      parse_aggregation(j.at("aggregation").get<std::string>(), h.top_k);
  return h;
}

inline void persist_model(const ModelRecord& record, const std::string& path) {
  if (!detail::all_finite(record.model.w) || !std::isfinite(record.model.b))
    throw DataError("refusing to write model with non-finite parameters");
  json j;
  j["format_version"] = kModelFormatVersion;
  j["w"] = record.model.w;
  j["b"] = record.model.b;
  j["chosen_r"] = record.chosen_r;
  j["hyperparameters"] = hyperparameters_to_json(record.hyper);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << j.dump(2) << "\n";
}

inline ModelRecord load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("model file " + path + ": malformed: " + e.what());
  }
  if (!j.is_object() || !j.contains("format_version"))
    throw DataError("model file " + path + ": missing format_version");
  const int version = j["format_version"].get<int>();
  if (version != kModelFormatVersion)
    throw DataError("model file " + path + ": unknown format_version " +
                    std::to_string(version));
  ModelRecord record;
  try {
    record.model.w = j.at("w").get<std::vector<double>>();
    record.model.b = j.at("b").get<double>();
    record.chosen_r = j.at("chosen_r").get<int>();
    record.hyper = hyperparameters_from_json(j.at("hyperparameters"));
  } catch (const json::exception& e) {
    throw DataError("model file " + path + ": " + e.what());
  }
  return record;
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar: one object mapping instance id -> +/-1.
// ---------------------------------------------------------------------------

inline void save_ground_truth(const std::map<std::string, int>& truth,
                              const std::string& path) {
  json j = json::object();
  for (const auto& [id, label] : truth) j[id] = label;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ground-truth file: " + path);
  out << j.dump() << "\n";
}

inline std::map<std::string, int> load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground-truth file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("ground-truth file " + path + ": malformed: " + e.what());
  }
  std::map<std::string, int> truth;
  for (const auto& [key, value] : j.items()) truth[key] = value.get<int>();
  return truth;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generator.
// ---------------------------------------------------------------------------

/// Generator algorithm tag recorded in the corpus manifest. mt19937_64 is
/// bit-exact by the standard; normal deviates come from an Irwin-Hall
/// transform (sum of 12 uniforms minus 6), which uses IEEE-exact arithmetic
/// only, so identical seeds give byte-identical corpora on any platform.
constexpr const char* kRngAlgorithm = "mt19937_64/irwin-hall-12/v1";

namespace detail {

class CorpusRng {
 public:
  explicit CorpusRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return lo + engine_() % (hi - lo + 1);
  }

  /// Approximate standard normal (Irwin-Hall with k = 12).
  double normal() {
    double s = 0.0;
    for (int k = 0; k < 12; ++k) s += uniform();
    return s - 6.0;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[uniform_int(0, i - 1)]);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<double> normalized(std::vector<double> v) {
  const double n = norm2(v);
  if (n < 1e-12) {
    v.assign(v.size(), 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= n;
  return v;
}

}  // namespace detail

struct SyntheticConfig {
  int num_pos_bags = 20;
  int num_neg_bags = 60;
  int m_min = 5;
  int m_max = 10;
  std::size_t feature_dim = 16;
  std::size_t embedding_dim = 12;
  double relevant_fraction = 0.7;
  double feature_noise = 0.3;
  double embedding_noise = 0.2;
  double confuser_rate = 0.0;
  double semantic_only_rate = 0.0;
  std::uint64_t seed = 1;
  std::string event_id = "synthetic_event";
};

inline void validate_config(const SyntheticConfig& cfg) {
  if (cfg.num_pos_bags < 1 || cfg.num_neg_bags < 1)
    throw DataError("synthetic config: bag counts must be positive");
  if (cfg.m_min < 1 || cfg.m_max < cfg.m_min)
    throw DataError("synthetic config: need 1 <= m_min <= m_max");
  if (cfg.feature_dim == 0 || cfg.embedding_dim == 0)
    throw DataError("synthetic config: dimensions must be positive");
  if (!(cfg.relevant_fraction > 0.0 && cfg.relevant_fraction <= 1.0))
    throw DataError("synthetic config: relevant_fraction must lie in (0,1]");
  if (!(cfg.feature_noise >= 0.0) || !(cfg.embedding_noise >= 0.0))
    throw DataError("synthetic config: noise levels must be >= 0");
  if (!(cfg.confuser_rate >= 0.0 && cfg.confuser_rate <= 1.0))
    throw DataError("synthetic config: confuser_rate must lie in [0,1]");
  if (!(cfg.semantic_only_rate >= 0.0 && cfg.semantic_only_rate <= 1.0))
    throw DataError("synthetic config: semantic_only_rate must lie in [0,1]");
}

inline json config_to_json(const SyntheticConfig& cfg) {
  json j;
  j["num_pos_bags"] = cfg.num_pos_bags;
  j["num_neg_bags"] = cfg.num_neg_bags;
  j["m_min"] = cfg.m_min;
  j["m_max"] = cfg.m_max;
  j["feature_dim"] = cfg.feature_dim;
  j["embedding_dim"] = cfg.embedding_dim;
  j["relevant_fraction"] = cfg.relevant_fraction;
  j["feature_noise"] = cfg.feature_noise;
  j["embedding_noise"] = cfg.embedding_noise;
  j["confuser_rate"] = cfg.confuser_rate;
  j["semantic_only_rate"] = cfg.semantic_only_rate;
  j["seed"] = cfg.seed;
  j["event_id"] = cfg.event_id;
  return j;
}

/// Writes the generator manifest next to a synthetic corpus: the exact
/// config plus the RNG algorithm tag, so any machine can regenerate the
/// same bytes.
inline void save_synthetic_manifest(const SyntheticConfig& cfg,
                                    const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["rng"] = kRngAlgorithm;
  j["config"] = config_to_json(cfg);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest file: " + path);
  out << j.dump(2) << "\n";
}

struct SyntheticDataset {
  Dataset dataset;
  EventEmbedding event;
  /// True per-instance relevance, diagnostics only (never used in training).
  std::map<std::string, int> ground_truth;
};

/// Draws a deterministic synthetic corpus mirroring the shot taxonomy of
/// event videos: relevant shots (event-like feature, event-like embedding),
/// semantic-only shots (background feature, event-like embedding),
/// confusers (event-like feature, unrelated embedding) and background.
/// Fully determined by the seed; the draw order below is part of the
/// format and must not be reordered.
inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  validate_config(cfg);
  detail::CorpusRng rng(cfg.seed);
  const std::size_t p = cfg.feature_dim;
  const std::size_t d = cfg.embedding_dim;
  const double fscale = cfg.feature_noise / std::sqrt(static_cast<double>(p));
  const double escale =
      cfg.embedding_noise / std::sqrt(static_cast<double>(d));
  const double bscale = 1.0 / std::sqrt(static_cast<double>(p));

  auto gauss_vec = [&rng](std::size_t len, double scale) {
    std::vector<double> v(len);
    for (double& x : v) x = scale * rng.normal();
    return v;
  };

  SyntheticDataset out;
  out.event.event_id = cfg.event_id;
  out.event.embedding = detail::normalized(gauss_vec(d, 1.0));
  const std::vector<double> prototype = detail::normalized(gauss_vec(p, 1.0));

  enum class Kind { Relevant, SemanticOnly, Confuser, Background };

  // Confusers resemble the event visually without duplicating it; an
  // attenuated prototype keeps bag-level ranking learnable while still
  // planting mislabeled near-positives in the negative bags.
  constexpr double kConfuserScale = 0.7;

  auto make_instance = [&](const std::string& id, Kind kind) {
    Instance inst;
    inst.id = id;
    switch (kind) {
      case Kind::Relevant:
      case Kind::Confuser: {
        const double scale = kind == Kind::Relevant ? 1.0 : kConfuserScale;
        inst.feature = gauss_vec(p, fscale);
        for (std::size_t k = 0; k < p; ++k)
          inst.feature[k] += scale * prototype[k];
        break;
      }
      case Kind::SemanticOnly:
      case Kind::Background:
        inst.feature = gauss_vec(p, bscale);
        break;
    }
    switch (kind) {
      case Kind::Relevant:
      case Kind::SemanticOnly: {
        inst.text_embedding = gauss_vec(d, escale);
        for (std::size_t k = 0; k < d; ++k)
          inst.text_embedding[k] += out.event.embedding[k];
        inst.text_embedding = detail::normalized(std::move(inst.text_embedding));
        break;
      }
      case Kind::Confuser:
      case Kind::Background:
        inst.text_embedding = detail::normalized(gauss_vec(d, 1.0));
        break;
    }
    return inst;
  };

  auto make_bag = [&](const std::string& bag_id, int label,
                      std::vector<Kind> kinds) {
    rng.shuffle(kinds);
    Bag bag;
    bag.id = bag_id;
    bag.label = label;
    for (std::size_t j = 0; j < kinds.size(); ++j) {
      const std::string inst_id = bag_id + "_s" + detail::zero_pad(j, 2);
      bag.instances.push_back(make_instance(inst_id, kinds[j]));
      const bool relevant =
          kinds[j] == Kind::Relevant || kinds[j] == Kind::SemanticOnly;
      out.ground_truth[inst_id] = relevant ? 1 : -1;
    }
    return bag;
  };

  for (int i = 0; i < cfg.num_pos_bags; ++i) {
    const auto m = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::uint64_t>(cfg.m_min), static_cast<std::uint64_t>(cfg.m_max)));
    const auto n_rel = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::lround(cfg.relevant_fraction * static_cast<double>(m))));
    const auto n_sem = static_cast<std::size_t>(
        std::lround(cfg.semantic_only_rate * static_cast<double>(n_rel)));
    std::vector<Kind> kinds;
    kinds.insert(kinds.end(), n_sem, Kind::SemanticOnly);
    kinds.insert(kinds.end(), n_rel - n_sem, Kind::Relevant);
    kinds.insert(kinds.end(), m - n_rel, Kind::Background);
    out.dataset.bags.push_back(
        make_bag("pos" + detail::zero_pad(static_cast<std::size_t>(i), 3), 1,
                 std::move(kinds)));
  }
  for (int i = 0; i < cfg.num_neg_bags; ++i) {
    const auto m = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::uint64_t>(cfg.m_min), static_cast<std::uint64_t>(cfg.m_max)));
    const auto n_conf = static_cast<std::size_t>(
        std::lround(cfg.confuser_rate * static_cast<double>(m)));
    std::vector<Kind> kinds;
    kinds.insert(kinds.end(), n_conf, Kind::Confuser);
    kinds.insert(kinds.end(), m - n_conf, Kind::Background);
    out.dataset.bags.push_back(
        make_bag("neg" + detail::zero_pad(static_cast<std::size_t>(i), 3), -1,
                 std::move(kinds)));
  }
  out.dataset.feature_dim = p;
  out.dataset.embedding_dim = d;
  return out;
}

}  // namespace rsmil
