#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "rsmil/data.hpp"
#include "rsmil/semantics.hpp"
#include "test_util.hpp"

using namespace rsmil;

namespace {

Dataset awkward_dataset() {
  Dataset ds = testutil::two_bag_dataset();
  // Values that only survive a round trip if serialization is exact.
  ds.bags[0].instances[0].feature = {0.1 + 0.2, -1.0 / 3.0};
  ds.bags[0].instances[0].text_embedding = {1e-17, 123456789.123456789};
  ds.bags[1].p_ratio_override = 0.35;
  return ds;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.feature_dim != b.feature_dim || a.embedding_dim != b.embedding_dim ||
      a.bags.size() != b.bags.size())
    return false;
  for (std::size_t i = 0; i < a.bags.size(); ++i) {
    const Bag& x = a.bags[i];
    const Bag& y = b.bags[i];
    if (x.id != y.id || x.label != y.label ||
        x.p_ratio_override != y.p_ratio_override ||
        x.instances.size() != y.instances.size())
      return false;
    for (std::size_t j = 0; j < x.instances.size(); ++j) {
      if (x.instances[j].id != y.instances[j].id ||
          x.instances[j].feature != y.instances[j].feature ||
          x.instances[j].text_embedding != y.instances[j].text_embedding)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST(DatasetIo, RoundTripIsValueExact) {
  testutil::TempDir tmp;
  const Dataset ds = awkward_dataset();
  save_dataset(ds, tmp.file("data.jsonl"));
  const Dataset loaded = load_dataset(tmp.file("data.jsonl"));
  EXPECT_TRUE(datasets_equal(ds, loaded));
  // Saving the loaded dataset again reproduces the same bytes.
  save_dataset(loaded, tmp.file("data2.jsonl"));
  EXPECT_EQ(testutil::read_file(tmp.file("data.jsonl")),
            testutil::read_file(tmp.file("data2.jsonl")));
}

TEST(DatasetIo, MalformedLineReportsLineNumber) {
  std::istringstream in(
      R"({"bag_id":"a","label":1,"instances":[{"id":"i","feature":[1],"text_embedding":[1]}]})"
      "\nnot json\n");
  try {
    read_dataset(in);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(DatasetIo, EmbeddingLengthMismatchNamesInstance) {
  std::istringstream in(
      R"({"bag_id":"a","label":1,"instances":[)"
      R"({"id":"i0","feature":[1,2],"text_embedding":[1,0]},)"
      R"({"id":"i1","feature":[1,2],"text_embedding":[1]}]})"
      "\n"
      R"({"bag_id":"b","label":-1,"instances":[{"id":"i2","feature":[0,0],"text_embedding":[0,1]}]})"
      "\n");
  try {
    read_dataset(in);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("i1"), std::string::npos);
  }
}

TEST(DatasetIo, DuplicateBagIdRejected) {
  const std::string bag =
      R"({"bag_id":"a","label":1,"instances":[{"id":"i","feature":[1],"text_embedding":[1]}]})";
  std::istringstream in(bag + "\n" + bag + "\n");
  EXPECT_THROW(read_dataset(in), DataError);
}

TEST(DatasetIo, DuplicateInstanceIdRejected) {
  std::istringstream in(
      R"({"bag_id":"a","label":1,"instances":[)"
      R"({"id":"i","feature":[1],"text_embedding":[1]},)"
      R"({"id":"i","feature":[2],"text_embedding":[0]}]})"
      "\n");
  EXPECT_THROW(read_dataset(in), DataError);
}

TEST(DatasetIo, BadLabelAndEmptinessRejected) {
  std::istringstream bad_label(
      R"({"bag_id":"a","label":2,"instances":[{"id":"i","feature":[1],"text_embedding":[1]}]})");
  EXPECT_THROW(read_dataset(bad_label), DataError);
  std::istringstream no_instances(R"({"bag_id":"a","label":1,"instances":[]})");
  EXPECT_THROW(read_dataset(no_instances), DataError);
  std::istringstream empty("\n\n");
  EXPECT_THROW(read_dataset(empty), DataError);
}

TEST(ModelIo, RoundTripIsBitExact) {
  testutil::TempDir tmp;
  ModelRecord record;
  record.model.w = {M_PI, -1.0 / 3.0, 1e-300, 0.1 + 0.2};
  record.model.b = std::sqrt(2.0);
  record.chosen_r = 4;
  record.hyper.alpha = 0.37;
  record.hyper.related_level_grid = {2, 4, 6};
  record.hyper.seed = 0xDEADBEEFCAFEF00DULL;
  record.hyper.aggregation = Aggregation::TopKMean;
  record.hyper.top_k = 3;
  persist_model(record, tmp.file("model.json"));
  const ModelRecord loaded = load_model(tmp.file("model.json"));
  EXPECT_EQ(record.model.w, loaded.model.w);
  EXPECT_EQ(record.model.b, loaded.model.b);
  EXPECT_EQ(record.chosen_r, loaded.chosen_r);
  EXPECT_EQ(record.hyper.alpha, loaded.hyper.alpha);
  EXPECT_EQ(record.hyper.related_level_grid, loaded.hyper.related_level_grid);
  EXPECT_EQ(record.hyper.seed, loaded.hyper.seed);
  EXPECT_EQ(loaded.hyper.aggregation, Aggregation::TopKMean);
  EXPECT_EQ(loaded.hyper.top_k, 3);
}

TEST(ModelIo, UnknownFormatVersionRejected) {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("model.json"),
                       R"({"format_version": 99, "w": [1.0], "b": 0.0})");
  try {
    load_model(tmp.file("model.json"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("format_version 99"),
              std::string::npos);
  }
}

TEST(ModelIo, TruncatedFileRejected) {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("model.json"),
                       R"({"format_version": 1, "w": [1.0)");
  EXPECT_THROW(load_model(tmp.file("model.json")), DataError);
}

TEST(ModelIo, RefusesNonFiniteParameters) {
  testutil::TempDir tmp;
  ModelRecord record;
  record.model.w = {std::numeric_limits<double>::infinity()};
  EXPECT_THROW(persist_model(record, tmp.file("model.json")), DataError);
}

TEST(EventIo, RoundTripAndZeroRejection) {
  testutil::TempDir tmp;
  const EventEmbedding ev{"parade", {0.3, -0.4, 0.5}};
  save_event(ev, tmp.file("event.json"));
  const EventEmbedding loaded = load_event(tmp.file("event.json"));
  EXPECT_EQ(loaded.event_id, ev.event_id);
  EXPECT_EQ(loaded.embedding, ev.embedding);

  testutil::write_file(tmp.file("zero.json"),
                       R"({"event_id":"z","embedding":[0,0]})");
  EXPECT_THROW(load_event(tmp.file("zero.json")), DataError);
}

TEST(GroundTruthIo, RoundTrip) {
  testutil::TempDir tmp;
  const std::map<std::string, int> truth = {{"a_s00", 1}, {"a_s01", -1}};
  save_ground_truth(truth, tmp.file("truth.json"));
  EXPECT_EQ(load_ground_truth(tmp.file("truth.json")), truth);
}

TEST(Generator, PerfectSimilarityAtFullRelevanceZeroNoise) {
  SyntheticConfig cfg;
  cfg.num_pos_bags = 3;
  cfg.num_neg_bags = 2;
  cfg.relevant_fraction = 1.0;
  cfg.feature_noise = 0.0;
  cfg.embedding_noise = 0.0;
  cfg.seed = 5;
  const SyntheticDataset corpus = generate_synthetic(cfg);
  for (const Bag& bag : corpus.dataset.bags) {
    if (bag.label != 1) continue;
    for (const Instance& inst : bag.instances)
      EXPECT_DOUBLE_EQ(instance_event_similarity(inst, corpus.event), 1.0);
  }
}

TEST(Generator, SameSeedSameBytesDifferentSeedDiffers) {
  SyntheticConfig cfg;
  cfg.num_pos_bags = 4;
  cfg.num_neg_bags = 6;
  cfg.confuser_rate = 0.2;
  cfg.semantic_only_rate = 0.15;
  cfg.seed = 99;
  std::ostringstream a, b;
  write_dataset(generate_synthetic(cfg).dataset, a);
  write_dataset(generate_synthetic(cfg).dataset, b);
  EXPECT_EQ(a.str(), b.str());

  cfg.seed = 100;
  std::ostringstream c;
  write_dataset(generate_synthetic(cfg).dataset, c);
  EXPECT_NE(a.str(), c.str());
}

TEST(Generator, RelevantCountPerPositiveBag) {
  SyntheticConfig cfg;
  cfg.num_pos_bags = 5;
  cfg.num_neg_bags = 1;
  cfg.m_min = 4;
  cfg.m_max = 4;
  cfg.relevant_fraction = 0.5;
  cfg.seed = 7;
  const SyntheticDataset corpus = generate_synthetic(cfg);
  for (const Bag& bag : corpus.dataset.bags) {
    if (bag.label != 1) continue;
    int relevant = 0;
    for (const Instance& inst : bag.instances)
      relevant += corpus.ground_truth.at(inst.id) == 1 ? 1 : 0;
    EXPECT_EQ(relevant, 2);  // round(0.5 * 4)
  }
}

TEST(Generator, EveryPositiveBagHasARelevantShot) {
  SyntheticConfig cfg;
  cfg.num_pos_bags = 10;
  cfg.num_neg_bags = 10;
  cfg.m_min = 1;
  cfg.m_max = 6;
  cfg.relevant_fraction = 0.3;
  cfg.confuser_rate = 0.4;
  cfg.semantic_only_rate = 0.5;
  cfg.seed = 31;
  const SyntheticDataset corpus = generate_synthetic(cfg);
  const ValidationReport report = validate_dataset(corpus.dataset);
  EXPECT_TRUE(report.ok()) << report.to_string();
  for (const Bag& bag : corpus.dataset.bags) {
    int relevant = 0;
    for (const Instance& inst : bag.instances)
      relevant += corpus.ground_truth.at(inst.id) == 1 ? 1 : 0;
    if (bag.label == 1)
      EXPECT_GE(relevant, 1) << "positive bag " << bag.id;
    else
      EXPECT_EQ(relevant, 0) << "negative bag " << bag.id;
  }
}

TEST(Generator, ConfigValidation) {
  SyntheticConfig cfg;
  cfg.relevant_fraction = 0.0;
  EXPECT_THROW(generate_synthetic(cfg), DataError);
  cfg = SyntheticConfig{};
  cfg.m_min = 5;
  cfg.m_max = 3;
  EXPECT_THROW(generate_synthetic(cfg), DataError);
  cfg = SyntheticConfig{};
  cfg.confuser_rate = 1.5;
  EXPECT_THROW(generate_synthetic(cfg), DataError);
}

TEST(Generator, ManifestRecordsRngAlgorithm) {
  testutil::TempDir tmp;
  save_synthetic_manifest(SyntheticConfig{}, tmp.file("manifest.json"));
  const json j = json::parse(testutil::read_file(tmp.file("manifest.json")));
  EXPECT_EQ(j.at("rng").get<std::string>(), kRngAlgorithm);
  EXPECT_TRUE(j.contains("config"));
}
