// Command-line front end: batch workflows over the rsmil library.
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 training infeasibility.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsmil/rsmil.hpp"

namespace {

namespace fs = std::filesystem;
using rsmil::json;

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

std::string format_double(double x) { return json(x).dump(); }

struct HyperFlags {
  rsmil::Hyperparameters hyper;
  int fixed_r = 0;  // 0 means "not fixed"
  std::vector<int> r_grid;
  std::string ablation = "full";
  std::string aggregation = "max";

  void add_to(CLI::App* cmd, bool with_r = true) {
    cmd->add_option("--alpha", hyper.alpha,
                    "Visual/semantic loss mix in [0,1]")
        ->capture_default_str();
    cmd->add_option("--lambda", hyper.lambda,
                    "Reliability regularization weight (>= 0)")
        ->capture_default_str();
    cmd->add_option("--gamma", hyper.gamma,
                    "Diversity regularization weight (>= 0)")
        ->capture_default_str();
    if (with_r) {
      cmd->add_option("--r", fixed_r, "Fixed related level in {1,...,10}");
      cmd->add_option("--r-grid", r_grid,
                      "Comma-separated related-level grid (default 1,...,10)")
          ->delimiter(',');
    }
    cmd->add_option("--p-ratio", hyper.p_ratio,
                    "Minimum selected fraction per bag in [0,1]")
        ->capture_default_str();
    cmd->add_option("--svm-c", hyper.svm_c, "SVM hinge trade-off (> 0)")
        ->capture_default_str();
    cmd->add_option("--tol", hyper.tol, "Convergence tolerance (> 0)")
        ->capture_default_str();
    cmd->add_option("--max-iters", hyper.max_outer_iters,
                    "Maximum outer iterations")
        ->capture_default_str();
    cmd->add_option("--seed", hyper.seed, "Random seed (reporting only)")
        ->capture_default_str();
    cmd->add_option("--ablation", ablation,
                    "One of full, no_reliability, no_diversity, no_semantic")
        ->capture_default_str();
    cmd->add_option("--aggregation", aggregation,
                    "Bag scoring rule: max, mean or top<k>")
        ->capture_default_str();
  }

  rsmil::Hyperparameters resolve() const {
    rsmil::Hyperparameters h = hyper;
    h.ablation = rsmil::parse_ablation(ablation);
    h.aggregation = rsmil::parse_aggregation(aggregation, h.top_k);
    if (fixed_r != 0)
      h.related_level_grid = {fixed_r};
    else if (!r_grid.empty())
      h.related_level_grid = r_grid;
    rsmil::validate_hyperparameters(h);
    return h;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw rsmil::DataError("cannot write file: " + path);
  out << text;
}

json history_to_json(const rsmil::TrainedDetector& det) {
  json j;
  j["chosen_r"] = det.chosen_r;
  j["selected_count"] = det.reliability.selected_count;
  j["iterations"] = json::array();
  for (const rsmil::IterationRecord& rec : det.history.iterations) {
    json ji;
    ji["objective"] = rec.objective;
    ji["selected_count"] = rec.selected_count;
    ji["q_changes"] = rec.q_changes;
    ji["class_rescue"] = rec.class_rescue;
    j["iterations"].push_back(std::move(ji));
  }
  j["per_r"] = json::array();
  for (const rsmil::RValueRecord& rec : det.history.per_r) {
    json jr;
    jr["r"] = rec.r;
    jr["final_objective"] = rec.final_objective;
    if (rec.validation_ap) jr["validation_ap"] = *rec.validation_ap;
    j["per_r"].push_back(std::move(jr));
  }
  return j;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  rsmil::SyntheticConfig config;
  std::string out_dir = ".";
};

void run_synth(const SynthArgs& args) {
  const rsmil::SyntheticDataset corpus = rsmil::generate_synthetic(args.config);
  fs::create_directories(args.out_dir);
  const std::string base = args.out_dir + "/";
  rsmil::save_dataset(corpus.dataset, base + "dataset.jsonl");
  rsmil::save_event(corpus.event, base + "event.json");
  rsmil::save_ground_truth(corpus.ground_truth, base + "ground_truth.json");
  rsmil::save_synthetic_manifest(args.config, base + "manifest.json");
  std::cout << "wrote " << corpus.dataset.bags.size() << " bags to " << base
            << "dataset.jsonl (+ event.json, ground_truth.json, manifest.json)\n";
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  HyperFlags flags;
  std::string data_path;
  std::string event_path;
  std::string val_path;
  std::string model_out;
  std::string history_out;
};

rsmil::TrainedDetector train_detector(const rsmil::Dataset& dataset,
                                      const rsmil::EventEmbedding& event,
                                      const HyperFlags& flags,
                                      const std::string& val_path) {
  const rsmil::Hyperparameters hyper = flags.resolve();
  if (flags.fixed_r != 0)
    return rsmil::train_for_r(dataset, event, hyper, flags.fixed_r);
  if (val_path.empty())
    throw UsageError(
        "--val is required when training over a related-level grid "
        "(or fix the level with --r)");
  const rsmil::Dataset validation = rsmil::load_dataset(val_path);
  return rsmil::select_related_level(dataset, validation, event, hyper);
}

void run_train(const TrainArgs& args) {
  const rsmil::Dataset dataset = rsmil::load_dataset(args.data_path);
  const rsmil::EventEmbedding event = rsmil::load_event(args.event_path);
  const rsmil::TrainedDetector det =
      train_detector(dataset, event, args.flags, args.val_path);
  rsmil::persist_model({det.model, det.hyper, det.chosen_r}, args.model_out);
  if (!args.history_out.empty())
    write_text(args.history_out, history_to_json(det).dump(2) + "\n");
  std::cout << "trained: chosen_r=" << det.chosen_r
            << " iterations=" << det.history.iterations.size()
            << " selected=" << det.reliability.selected_count
            << " objective=" << format_double(
                   det.history.iterations.back().objective)
            << "\n";
}

// --- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string data_path;
  std::string model_path;
  std::string out_path = "-";
  std::string aggregation;  // empty: use the model file's rule
};

void run_predict(const PredictArgs& args) {
  const rsmil::ModelRecord record = rsmil::load_model(args.model_path);
  const rsmil::Dataset dataset = rsmil::load_dataset(args.data_path);
  rsmil::Aggregation rule = record.hyper.aggregation;
  int top_k = record.hyper.top_k;
  if (!args.aggregation.empty())
    rule = rsmil::parse_aggregation(args.aggregation, top_k);

  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(dataset.bags.size());
  for (const rsmil::Bag& bag : dataset.bags)
    scored.emplace_back(bag.id,
                        rsmil::bag_score(record.model, bag, rule, top_k));
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::ostringstream out;
  for (const auto& [id, score] : scored)
    out << id << "," << format_double(score) << "\n";
  write_text(args.out_path, out.str());
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> prediction_paths;
  std::vector<std::string> label_paths;
  std::string out_path = "-";
};

rsmil::RankedPredictions read_predictions(const std::string& pred_path,
                                          const std::string& labels_path) {
  const rsmil::Dataset labels = rsmil::load_dataset(labels_path);
  std::map<std::string, int> label_of;
  for (const rsmil::Bag& bag : labels.bags) label_of[bag.id] = bag.label;

  std::ifstream in(pred_path);
  if (!in) throw rsmil::DataError("cannot open predictions file: " + pred_path);
  rsmil::RankedPredictions preds;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw rsmil::DataError("predictions line " + std::to_string(line_number) +
                             ": expected bag_id,score");
    const std::string id = line.substr(0, comma);
    double score = 0.0;
    try {
      score = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw rsmil::DataError("predictions line " + std::to_string(line_number) +
                             ": bad score");
    }
    const auto it = label_of.find(id);
    if (it == label_of.end())
      throw rsmil::DataError("predictions line " + std::to_string(line_number) +
                             ": bag " + id + " not present in labels file");
    preds.rows.push_back({id, score, it->second});
  }
  return preds;
}

void run_eval(const EvalArgs& args) {
  if (args.prediction_paths.size() != args.label_paths.size())
    throw UsageError("--predictions and --labels must be given in pairs");
  std::vector<double> aps;
  for (std::size_t i = 0; i < args.prediction_paths.size(); ++i)
    aps.push_back(rsmil::average_precision(
        read_predictions(args.prediction_paths[i], args.label_paths[i])));
  json j;
  if (aps.size() == 1) {
    j["ap"] = aps.front();
  } else {
    j["ap"] = aps;
    j["map"] = rsmil::mean_average_precision(aps);
  }
  write_text(args.out_path, j.dump() + "\n");
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  HyperFlags flags;
  std::string data_path;
  std::string test_path;
  std::string event_path;
  std::string val_path;
  std::string out_path = "-";
};

void run_ablate(const AblateArgs& args) {
  const rsmil::Dataset dataset = rsmil::load_dataset(args.data_path);
  const rsmil::Dataset test = rsmil::load_dataset(args.test_path);
  const rsmil::EventEmbedding event = rsmil::load_event(args.event_path);

  json table = json::object();
  for (const rsmil::Ablation mode :
       {rsmil::Ablation::Full, rsmil::Ablation::NoReliability,
        rsmil::Ablation::NoDiversity, rsmil::Ablation::NoSemantic}) {
    HyperFlags flags = args.flags;
    flags.ablation = rsmil::to_string(mode);
    const rsmil::TrainedDetector det =
        train_detector(dataset, event, flags, args.val_path);
    const double ap = rsmil::dataset_average_precision(
        det.model, test, det.hyper.aggregation, det.hyper.top_k);
    json entry;
    entry["ap"] = ap;
    entry["chosen_r"] = det.chosen_r;
    entry["iterations"] = det.history.iterations.size();
    entry["selected_count"] = det.reliability.selected_count;
    table[rsmil::to_string(mode)] = std::move(entry);
    std::cout << rsmil::to_string(mode) << ": ap=" << format_double(ap) << "\n";
  }
  if (args.out_path != "-") write_text(args.out_path, table.dump(2) + "\n");
}

// --- select-check ----------------------------------------------------------

struct SelectCheckArgs {
  int trials = 1000;
  int max_m = 12;
  std::uint64_t seed = 20240613;
};

int run_select_check(const SelectCheckArgs& args) {
  if (args.trials < 1) throw UsageError("--trials must be >= 1");
  if (args.max_m < 1 || args.max_m > 20)
    throw UsageError("--max-m must lie in [1,20]");
  rsmil::detail::CorpusRng rng(args.seed);
  int matches = 0;
  for (int trial = 0; trial < args.trials; ++trial) {
    rsmil::SelectionProblem problem;
    const auto m = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::uint64_t>(args.max_m)));
    problem.losses.resize(m);
    for (double& l : problem.losses) l = rng.uniform(0.0, 3.0);
    problem.lambda = rng.uniform(0.0, 2.0);
    problem.gamma = rng.uniform(0.0, 2.0);
    problem.min_count = static_cast<int>(rng.uniform_int(0, m));

    const auto fast = rsmil::select_reliable(problem);
    const auto oracle = rsmil::brute_force_select(problem);
    const double fast_obj = rsmil::selection_objective(
        problem.losses, fast, problem.lambda, problem.gamma);
    const double oracle_obj = rsmil::selection_objective(
        problem.losses, oracle, problem.lambda, problem.gamma);
    if (std::abs(fast_obj - oracle_obj) <= 1e-9) {
      ++matches;
    } else if (matches == trial) {
      std::cerr << "mismatch at trial " << trial << ": selector objective "
                << fast_obj << " vs oracle " << oracle_obj << "\n";
    }
  }
  std::cout << "select-check: " << matches << "/" << args.trials
            << " matches (max m=" << args.max_m << ")\n";
  return matches == args.trials ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Multi-instance event detector: weighted-SVM training with per-shot "
      "reliability selection over visual/semantic losses"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Generate a deterministic synthetic corpus");
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")
      ->capture_default_str();
  synth_cmd->add_option("--pos-bags", synth.config.num_pos_bags, "Positive bags")
      ->capture_default_str();
  synth_cmd->add_option("--neg-bags", synth.config.num_neg_bags, "Negative bags")
      ->capture_default_str();
  synth_cmd->add_option("--m-min", synth.config.m_min, "Minimum bag size")
      ->capture_default_str();
  synth_cmd->add_option("--m-max", synth.config.m_max, "Maximum bag size")
      ->capture_default_str();
  synth_cmd
      ->add_option("--feature-dim", synth.config.feature_dim,
                   "Visual feature dimension")
      ->capture_default_str();
  synth_cmd
      ->add_option("--embedding-dim", synth.config.embedding_dim,
                   "Text embedding dimension")
      ->capture_default_str();
  synth_cmd
      ->add_option("--relevant-fraction", synth.config.relevant_fraction,
                   "Fraction of relevant shots per positive bag, (0,1]")
      ->capture_default_str();
  synth_cmd
      ->add_option("--feature-noise", synth.config.feature_noise,
                   "Visual noise level (>= 0)")
      ->capture_default_str();
  synth_cmd
      ->add_option("--embedding-noise", synth.config.embedding_noise,
                   "Embedding noise level (>= 0)")
      ->capture_default_str();
  synth_cmd
      ->add_option("--confuser-rate", synth.config.confuser_rate,
                   "Fraction of visually misleading shots in negative bags")
      ->capture_default_str();
  synth_cmd
      ->add_option("--semantic-only-rate", synth.config.semantic_only_rate,
                   "Fraction of relevant shots with background visuals")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed, "Generator seed")
      ->capture_default_str();
  synth_cmd->add_option("--event-id", synth.config.event_id, "Event id")
      ->capture_default_str();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train an event detector");
  train_cmd->add_option("--data", train.data_path, "Training dataset (bag lines)")
      ->required();
  train_cmd->add_option("--event", train.event_path, "Event embedding file")
      ->required();
  train_cmd->add_option("--val", train.val_path,
                        "Validation dataset for related-level search");
  train_cmd->add_option("--model-out", train.model_out, "Model output path")
      ->required();
  train_cmd->add_option("--history-out", train.history_out,
                        "Training history report path");
  train.flags.add_to(train_cmd);

  PredictArgs predict;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "Score bags with a trained model");
  predict_cmd->add_option("--data", predict.data_path, "Dataset to score")
      ->required();
  predict_cmd->add_option("--model", predict.model_path, "Model file")
      ->required();
  predict_cmd
      ->add_option("--out", predict.out_path,
                   "Output path for bag_id,score lines ('-' for stdout)")
      ->capture_default_str();
  predict_cmd->add_option("--aggregation", predict.aggregation,
                          "Override the model's bag scoring rule");

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Average precision of prediction files");
  eval_cmd
      ->add_option("--predictions", eval.prediction_paths,
                   "Prediction file(s) of bag_id,score lines")
      ->required();
  eval_cmd
      ->add_option("--labels", eval.label_paths,
                   "Labeled dataset file(s), paired with --predictions")
      ->required();
  eval_cmd->add_option("--out", eval.out_path, "Report output ('-' for stdout)")
      ->capture_default_str();

  AblateArgs ablate;
  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "Train and compare full/no_reliability/no_diversity/no_semantic");
  ablate_cmd->add_option("--data", ablate.data_path, "Training dataset")
      ->required();
  ablate_cmd->add_option("--test", ablate.test_path, "Held-out labeled dataset")
      ->required();
  ablate_cmd->add_option("--event", ablate.event_path, "Event embedding file")
      ->required();
  ablate_cmd->add_option("--val", ablate.val_path,
                         "Validation dataset for related-level search");
  ablate_cmd->add_option("--out", ablate.out_path, "Comparison table path")
      ->capture_default_str();
  ablate.flags.add_to(ablate_cmd);

  SelectCheckArgs select_check;
  CLI::App* check_cmd = app.add_subcommand(
      "select-check", "Randomized selector-vs-oracle equivalence suite");
  check_cmd->add_option("--trials", select_check.trials, "Number of trials")
      ->capture_default_str();
  check_cmd->add_option("--max-m", select_check.max_m, "Maximum bag size")
      ->capture_default_str();
  check_cmd->add_option("--seed", select_check.seed, "Trial generator seed")
      ->capture_default_str();

  int exit_code = 0;
  synth_cmd->callback([&] { run_synth(synth); });
  train_cmd->callback([&] { run_train(train); });
  predict_cmd->callback([&] { run_predict(predict); });
  eval_cmd->callback([&] { run_eval(eval); });
  ablate_cmd->callback([&] { run_ablate(ablate); });
  check_cmd->callback([&] { exit_code = run_select_check(select_check); });

  try {
    app.parse(argc, argv);
    return exit_code;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const rsmil::InfeasibleTrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
