#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "rsmil/data.hpp"
#include "test_util.hpp"

using namespace rsmil;
using testutil::run_cli;

namespace {

// Generates a corpus through the CLI and returns the directory.
void synth_corpus(const testutil::TempDir& tmp, const std::string& sub,
                  const std::string& extra_flags) {
  const std::string dir = tmp.file(sub);
  ASSERT_EQ(run_cli("synth --out-dir " + dir + " " + extra_flags), 0);
}

std::vector<std::pair<std::string, double>> parse_predictions(
    const std::string& path) {
  std::istringstream in(testutil::read_file(path));
  std::vector<std::pair<std::string, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    rows.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
  }
  return rows;
}

}  // namespace

TEST(Cli, SynthWritesAllArtifacts) {
  testutil::TempDir tmp;
  synth_corpus(tmp, "corpus", "--pos-bags 3 --neg-bags 4 --seed 5");
  const Dataset ds = load_dataset(tmp.file("corpus/dataset.jsonl"));
  EXPECT_EQ(ds.bags.size(), 7u);
  EXPECT_NO_THROW(load_event(tmp.file("corpus/event.json")));
  EXPECT_FALSE(load_ground_truth(tmp.file("corpus/ground_truth.json")).empty());
  const json manifest =
      json::parse(testutil::read_file(tmp.file("corpus/manifest.json")));
  EXPECT_EQ(manifest.at("rng").get<std::string>(), kRngAlgorithm);
}

TEST(Cli, TrainOnSeparableCorpusConvergesFast) {
  testutil::TempDir tmp;
  synth_corpus(tmp, "c",
               "--pos-bags 5 --neg-bags 8 --relevant-fraction 1.0 "
               "--feature-noise 0 --embedding-noise 0 --seed 3");
  const int rc = run_cli(
      "train --data " + tmp.file("c/dataset.jsonl") + " --event " +
          tmp.file("c/event.json") + " --r 2 --p-ratio 1.0 --model-out " +
          tmp.file("model.json") + " --history-out " + tmp.file("hist.json"),
      tmp.file("train.out"));
  ASSERT_EQ(rc, 0) << testutil::read_file(tmp.file("train.out"));
  EXPECT_TRUE(std::filesystem::exists(tmp.file("model.json")));
  const json hist = json::parse(testutil::read_file(tmp.file("hist.json")));
  EXPECT_LE(hist.at("iterations").size(), 2u);
  const ModelRecord record = load_model(tmp.file("model.json"));
  EXPECT_EQ(record.chosen_r, 2);
}

TEST(Cli, TrainIsByteDeterministic) {
  testutil::TempDir tmp;
  synth_corpus(tmp, "c", "--pos-bags 4 --neg-bags 6 --confuser-rate 0.2 --seed 9");
  const std::string base = "train --data " + tmp.file("c/dataset.jsonl") +
                           " --event " + tmp.file("c/event.json") +
                           " --r 3 --seed 42 --model-out ";
  ASSERT_EQ(run_cli(base + tmp.file("m1.json")), 0);
  ASSERT_EQ(run_cli(base + tmp.file("m2.json")), 0);
  EXPECT_EQ(testutil::read_file(tmp.file("m1.json")),
            testutil::read_file(tmp.file("m2.json")));
}

TEST(Cli, TrainWithGridRequiresValidation) {
  testutil::TempDir tmp;
  synth_corpus(tmp, "c", "--pos-bags 3 --neg-bags 4 --seed 2");
  const int rc = run_cli("train --data " + tmp.file("c/dataset.jsonl") +
                         " --event " + tmp.file("c/event.json") +
                         " --model-out " + tmp.file("m.json"));
  EXPECT_EQ(rc, 1);  // usage error: grid search without --val
}

TEST(Cli, TrainGridSearchWithValidation) {
  testutil::TempDir tmp;
  synth_corpus(tmp, "train", "--pos-bags 5 --neg-bags 8 --seed 21");
  synth_corpus(tmp, "val", "--pos-bags 3 --neg-bags 5 --seed 22");
  // Synthetic bag ids collide across corpora; prefix the validation ones.
  Dataset val = load_dataset(tmp.file("val/dataset.jsonl"));
  for (Bag& bag : val.bags) {
    bag.id = "val_" + bag.id;
    for (Instance& inst : bag.instances) inst.id = "val_" + inst.id;
  }
  save_dataset(val, tmp.file("val/dataset.jsonl"));

  const int rc = run_cli(
      "train --data " + tmp.file("train/dataset.jsonl") + " --event " +
          tmp.file("train/event.json") + " --val " +
          tmp.file("val/dataset.jsonl") + " --r-grid 1,2,3 --model-out " +
          tmp.file("m.json") + " --history-out " + tmp.file("h.json"),
      tmp.file("train.out"));
  ASSERT_EQ(rc, 0) << testutil::read_file(tmp.file("train.out"));
  const json hist = json::parse(testutil::read_file(tmp.file("h.json")));
  EXPECT_EQ(hist.at("per_r").size(), 3u);
  for (const auto& rec : hist.at("per_r"))
    EXPECT_TRUE(rec.contains("validation_ap"));
}

TEST(Cli, PredictWritesDescendingScores) {
  testutil::TempDir tmp;
  synth_corpus(tmp, "c",
               "--pos-bags 4 --neg-bags 6 --relevant-fraction 1.0 "
               "--feature-noise 0 --embedding-noise 0 --seed 13");
  ASSERT_EQ(run_cli("train --data " + tmp.file("c/dataset.jsonl") +
                    " --event " + tmp.file("c/event.json") +
                    " --r 1 --model-out " + tmp.file("m.json")),
            0);
  ASSERT_EQ(run_cli("predict --data " + tmp.file("c/dataset.jsonl") +
                    " --model " + tmp.file("m.json") + " --out " +
                    tmp.file("pred.csv")),
            0);
  const auto rows = parse_predictions(tmp.file("pred.csv"));
  ASSERT_EQ(rows.size(), 10u);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_GE(rows[i - 1].second, rows[i].second);
}

TEST(Cli, EvalPerfectRankingGivesApOne) {
  testutil::TempDir tmp;
  // Labels file: one positive, two negatives.
  Dataset ds;
  ds.feature_dim = 1;
  ds.embedding_dim = 1;
  ds.bags.push_back(testutil::make_bag(
      "p0", 1, {testutil::make_instance("p0_a", {1.0}, {1.0})}));
  ds.bags.push_back(testutil::make_bag(
      "n0", -1, {testutil::make_instance("n0_a", {-1.0}, {1.0})}));
  ds.bags.push_back(testutil::make_bag(
      "n1", -1, {testutil::make_instance("n1_a", {-0.5}, {1.0})}));
  save_dataset(ds, tmp.file("labels.jsonl"));
  testutil::write_file(tmp.file("pred.csv"), "p0,0.9\nn0,-0.3\nn1,0.1\n");
  ASSERT_EQ(run_cli("eval --predictions " + tmp.file("pred.csv") +
                    " --labels " + tmp.file("labels.jsonl") + " --out " +
                    tmp.file("report.json")),
            0);
  const json report = json::parse(testutil::read_file(tmp.file("report.json")));
  EXPECT_DOUBLE_EQ(report.at("ap").get<double>(), 1.0);
}

TEST(Cli, EvalMultipleEventsReportsMap) {
  testutil::TempDir tmp;
  Dataset ds;
  ds.feature_dim = 1;
  ds.embedding_dim = 1;
  ds.bags.push_back(testutil::make_bag(
      "p0", 1, {testutil::make_instance("p0_a", {1.0}, {1.0})}));
  ds.bags.push_back(testutil::make_bag(
      "n0", -1, {testutil::make_instance("n0_a", {-1.0}, {1.0})}));
  save_dataset(ds, tmp.file("labels.jsonl"));
  testutil::write_file(tmp.file("perfect.csv"), "p0,1.0\nn0,0.0\n");
  testutil::write_file(tmp.file("inverted.csv"), "p0,0.0\nn0,1.0\n");
  ASSERT_EQ(run_cli("eval --predictions " + tmp.file("perfect.csv") + " " +
                    tmp.file("inverted.csv") + " --labels " +
                    tmp.file("labels.jsonl") + " " + tmp.file("labels.jsonl") +
                    " --out " + tmp.file("report.json")),
            0);
  const json report = json::parse(testutil::read_file(tmp.file("report.json")));
  ASSERT_TRUE(report.at("ap").is_array());
  EXPECT_DOUBLE_EQ(report.at("ap")[0].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(report.at("ap")[1].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(report.at("map").get<double>(), 0.75);
}

TEST(Cli, AblateWritesAllFourModes) {
  testutil::TempDir tmp;
  synth_corpus(tmp, "train",
               "--pos-bags 4 --neg-bags 8 --confuser-rate 0.2 --seed 41");
  synth_corpus(tmp, "test",
               "--pos-bags 3 --neg-bags 6 --confuser-rate 0.2 --seed 42");
  const int rc = run_cli(
      "ablate --data " + tmp.file("train/dataset.jsonl") + " --test " +
          tmp.file("test/dataset.jsonl") + " --event " +
          tmp.file("train/event.json") + " --r 2 --out " + tmp.file("table.json"),
      tmp.file("ablate.out"));
  ASSERT_EQ(rc, 0) << testutil::read_file(tmp.file("ablate.out"));
  const json table = json::parse(testutil::read_file(tmp.file("table.json")));
  for (const char* mode :
       {"full", "no_reliability", "no_diversity", "no_semantic"}) {
    ASSERT_TRUE(table.contains(mode)) << mode;
    EXPECT_TRUE(table.at(mode).contains("ap"));
  }
}

TEST(Cli, SelectCheckPasses) {
  testutil::TempDir tmp;
  ASSERT_EQ(run_cli("select-check --trials 300 --max-m 10 --seed 77",
                    tmp.file("out.txt")),
            0);
  EXPECT_NE(testutil::read_file(tmp.file("out.txt")).find("300/300"),
            std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("train"), 1);  // missing required flags
  EXPECT_EQ(run_cli(""), 1);      // subcommand required
}

TEST(Cli, DataErrorsExitTwo) {
  testutil::TempDir tmp;
  EXPECT_EQ(run_cli("train --data /nonexistent.jsonl --event /nope.json "
                    "--r 1 --model-out " +
                    tmp.file("m.json")),
            2);
  testutil::write_file(tmp.file("garbage.jsonl"), "not a json line\n");
  testutil::write_file(tmp.file("event.json"),
                       R"({"event_id":"e","embedding":[1.0]})");
  EXPECT_EQ(run_cli("train --data " + tmp.file("garbage.jsonl") + " --event " +
                    tmp.file("event.json") + " --r 1 --model-out " +
                    tmp.file("m.json")),
            2);
}

TEST(Cli, HelpEnumeratesFlagsPerSubcommand) {
  testutil::TempDir tmp;
  ASSERT_EQ(run_cli("train --help", tmp.file("help.txt")), 0);
  const std::string help = testutil::read_file(tmp.file("help.txt"));
  for (const char* flag : {"--alpha", "--lambda", "--gamma", "--r", "--r-grid",
                           "--p-ratio", "--svm-c", "--tol", "--max-iters",
                           "--seed", "--ablation", "--aggregation"})
    EXPECT_NE(help.find(flag), std::string::npos) << flag;
}
