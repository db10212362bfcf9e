// seqfuse command-line tool: synthesize data, train the sequence and
// fusion classifiers, combine score tables and evaluate them, and run
// the verification suites. Every command takes --config FILE plus
// --key value overrides; the resolved configuration is written next to
// the outputs so any run can be replayed exactly.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
// failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "seqfuse/dataset_io.hpp"
#include "seqfuse/ensemble.hpp"
#include "seqfuse/features.hpp"
#include "seqfuse/fusion.hpp"
#include "seqfuse/lstm.hpp"
#include "seqfuse/metrics.hpp"
#include "seqfuse/run_config.hpp"
#include "seqfuse/score_table.hpp"
#include "seqfuse/verify.hpp"

namespace fs = std::filesystem;
using namespace seqfuse;

namespace {

constexpr const char* kUsage = R"(usage: seqfuse <command> [--config FILE] [--key value ...]

commands:
  synth    generate a synthetic dataset (manifests + feature files)
  train    train a model (--model lstm-spatial | lstm-motion | fusion)
  fuse     combine score tables (average, fixed weights, or --cv 1)
  eval     evaluate a score table against a manifest
  verify   run verification suites (--suite gradcheck | prox | metrics | all)

Run `seqfuse <command> --help` for the command's keys and defaults.
)";

struct Args {
  std::string command;
  std::vector<std::pair<std::string, std::string>> flags;  // key, value
  std::string config_path;
  bool help = false;
};

Args parse_args(int argc, char** argv) {
  Args a;
  if (argc < 2) throw UsageError("no command given");
  a.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "-h" || arg == "--help") {
      a.help = true;
      continue;
    }
    if (arg.rfind("--", 0) != 0) throw UsageError("expected --key, got '" + arg + "'");
    std::string key = arg.substr(2);
    std::string value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= argc) throw UsageError("flag --" + key + " needs a value");
      value = argv[++i];
    }
    if (key == "config")
      a.config_path = value;
    else
      a.flags.emplace_back(key, value);
  }
  return a;
}

// Config value visible before the full key set is declared (the train
// command's defaults depend on the model).
std::string peek_value(const Args& args, const std::string& key) {
  std::string found;
  if (!args.config_path.empty()) {
    std::ifstream is(args.config_path);
    if (!is) throw UsageError("cannot read config file " + args.config_path);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        return s;
      };
      if (trim(line.substr(0, eq)) == key) found = trim(line.substr(eq + 1));
    }
  }
  for (const auto& [k, v] : args.flags)
    if (k == key) found = v;  // flags override the file
  return found;
}

void apply(RunConfig& cfg, const Args& args) {
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& [k, v] : args.flags) cfg.set(k, v);
}

void show_keys(const RunConfig&, const std::string& command, const char* keys) {
  std::cout << "seqfuse " << command << " keys (defaults in parentheses):\n" << keys;
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.required("out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string());
  return out;
}

ScoreTable lstm_score_table(const LstmStack& stack, const Dataset& ds, Stream stream,
                            const std::string& tag) {
  ScoreTable t;
  t.model = tag;
  t.class_names = ds.class_names;
  for (const VideoSample& s : ds.samples) {
    const FeatureSequence& seq = stream == Stream::spatial ? s.spatial : s.motion;
    t.ids.push_back(s.id);
    t.rows.push_back(lstm_forward(stack, seq).probs);
  }
  return t;
}

ScoreTable fusion_score_table(const FusionNet& net, const Dataset& ds, const std::string& tag) {
  ScoreTable t;
  t.model = tag;
  t.class_names = ds.class_names;
  for (const VideoSample& s : ds.samples) {
    t.ids.push_back(s.id);
    t.rows.push_back(fusion_forward(net, average_pool(s.spatial), average_pool(s.motion)));
  }
  return t;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Args& args) {
  RunConfig cfg;
  cfg.declare("out", "");
  cfg.declare("seed", "");
  cfg.declare("classes", "2");
  cfg.declare("train_per_class", "50");
  cfg.declare("test_per_class", "50");
  cfg.declare("val_fraction", "0");
  cfg.declare("t_min", "6");
  cfg.declare("t_max", "12");
  cfg.declare("spatial_dim", "8");
  cfg.declare("motion_dim", "8");
  cfg.declare("temporal_signal", "0");
  cfg.declare("pooled_signal", "1");
  cfg.declare("segments", "0");
  cfg.declare("noise", "0.1");
  cfg.declare("distractor", "1");
  cfg.declare("order_neutral_frac", "0");
  cfg.declare("pooled_neutral_frac", "0");
  if (args.help) {
    show_keys(cfg, "synth", R"(  out (required), seed (required), classes (2), train_per_class (50),
  test_per_class (50), val_fraction (0), t_min (6), t_max (12),
  spatial_dim (8), motion_dim (8), temporal_signal (0), pooled_signal (1),
  segments (0 = auto), noise (0.1), distractor (1), order_neutral_frac (0),
  pooled_neutral_frac (0)
)");
    return 0;
  }
  apply(cfg, args);
  const fs::path out = prepare_out(cfg);

  SynthSpec spec;
  spec.classes = cfg.count("classes");
  spec.train_per_class = cfg.count("train_per_class");
  spec.test_per_class = cfg.count("test_per_class");
  spec.t_min = cfg.count("t_min");
  spec.t_max = cfg.count("t_max");
  spec.spatial_dim = cfg.count("spatial_dim");
  spec.motion_dim = cfg.count("motion_dim");
  spec.temporal_signal = cfg.flag("temporal_signal");
  spec.pooled_signal = cfg.flag("pooled_signal");
  spec.segments = cfg.count("segments");
  spec.noise = cfg.real("noise");
  spec.distractor = cfg.real("distractor");
  spec.order_neutral_frac = cfg.real("order_neutral_frac");
  spec.pooled_neutral_frac = cfg.real("pooled_neutral_frac");
  cfg.required("seed");
  spec.seed = static_cast<std::uint64_t>(cfg.integer("seed"));

  SynthResult data = [&] {
    try {
      return synthesize(spec);
    } catch (const ArgumentError& e) {
      throw UsageError(e.what());
    }
  }();
  const double val_fraction = cfg.real("val_fraction");
  Dataset train = std::move(data.train);
  Dataset val;
  val.class_names = train.class_names;
  if (val_fraction > 0.0) {
    auto [rest, holdout] = split_dataset(train, val_fraction, spec.seed);
    train = std::move(rest);
    val = std::move(holdout);
  }

  cfg.write(out / "resolved_config.txt");
  write_dataset(out, train, "train");
  if (!val.samples.empty()) write_dataset(out, val, "val");
  write_dataset(out, data.test, "test");

  std::cout << "synth: " << spec.classes << " classes, " << train.samples.size() << " train";
  if (!val.samples.empty()) std::cout << " / " << val.samples.size() << " val";
  std::cout << " / " << data.test.samples.size() << " test videos, dims ("
            << spec.spatial_dim << ", " << spec.motion_dim << ")\n";
  std::cout << "wrote " << (out / "train.manifest").string() << "\n";
  if (!val.samples.empty()) std::cout << "wrote " << (out / "val.manifest").string() << "\n";
  std::cout << "wrote " << (out / "test.manifest").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

RunConfig train_config(const std::string& model) {
  RunConfig cfg;
  cfg.declare("model", model);
  cfg.declare("out", "");
  cfg.declare("seed", "");
  cfg.declare("train_manifest", "");
  cfg.declare("test_manifest", "");
  cfg.declare("val_manifest", "");
  if (model == "lstm-spatial" || model == "lstm-motion") {
    cfg.declare("hidden", "1024,512");
    cfg.declare("learning_rate", "1e-4");
    cfg.declare("momentum", "0.9");
    cfg.declare("batch", "10");
    cfg.declare("epochs", "10");
    cfg.declare("clip", "5");
  } else if (model == "fusion") {
    cfg.declare("spatial_abs_width", "200");
    cfg.declare("motion_abs_width", "200");
    cfg.declare("fusion_width", "200");
    cfg.declare("loss", "squared");
    cfg.declare("learning_rate", "0.7");
    cfg.declare("lambda1", "3e-5");
    cfg.declare("lambda2", "0");
    cfg.declare("lambda3", "0");
    cfg.declare("momentum", "0");
    cfg.declare("batch", "10");
    cfg.declare("epochs", "100");
  } else {
    throw UsageError("unknown model '" + model + "' (expected lstm-spatial, lstm-motion or fusion)");
  }
  return cfg;
}

int cmd_train(const Args& args) {
  if (args.help) {
    std::cout << R"(seqfuse train keys:
  common: model (required), out (required), seed (required), train_manifest
          (required), test_manifest (required), val_manifest (optional;
          when set, scores for the validation split are also written)
  lstm-spatial / lstm-motion: hidden (1024,512), learning_rate (1e-4),
          momentum (0.9), batch (10), epochs (10), clip (5)
  fusion: spatial_abs_width (200), motion_abs_width (200),
          fusion_width (200), loss (squared|logistic), learning_rate (0.7),
          lambda1 (3e-5), lambda2 (0), lambda3 (0), momentum (0),
          batch (10), epochs (100)
)";
    return 0;
  }
  const std::string model = peek_value(args, "model");
  if (model.empty()) throw UsageError("train: --model is required");
  RunConfig cfg = train_config(model);
  apply(cfg, args);
  if (cfg.str("model") != model) throw UsageError("train: conflicting model values");
  const fs::path out = prepare_out(cfg);
  cfg.required("seed");
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed"));

  std::vector<std::string> warnings;
  const Dataset train_ds = load_dataset(cfg.required("train_manifest"), &warnings);
  const Dataset test_ds = load_dataset(cfg.required("test_manifest"), &warnings);
  Dataset val_ds;
  const bool have_val = !cfg.empty("val_manifest");
  if (have_val) val_ds = load_dataset(cfg.str("val_manifest"), &warnings);
  print_warnings(warnings);
  if (train_ds.samples.empty()) throw DataError("train: empty training split");

  cfg.write(out / "resolved_config.txt");
  std::ofstream log(out / "training_log.txt");
  if (!log) throw DataError("cannot write " + (out / "training_log.txt").string());
  char buf[256];

  ScoreTable test_scores, val_scores;
  if (model == "fusion") {
    FusionArch arch;
    arch.spatial_abs_width = cfg.count("spatial_abs_width");
    arch.motion_abs_width = cfg.count("motion_abs_width");
    arch.fusion_width = cfg.count("fusion_width");
    FusionHyper hyper;
    const std::string loss = cfg.str("loss");
    if (loss == "squared")
      hyper.loss = FusionLoss::squared;
    else if (loss == "logistic")
      hyper.loss = FusionLoss::logistic;
    else
      throw UsageError("train: loss must be 'squared' or 'logistic'");
    hyper.learning_rate = cfg.real("learning_rate");
    hyper.lambda1 = cfg.real("lambda1");
    hyper.lambda2 = cfg.real("lambda2");
    hyper.lambda3 = cfg.real("lambda3");
    hyper.momentum = cfg.real("momentum");
    hyper.batch_size = cfg.count("batch");
    hyper.epochs = cfg.count("epochs");
    hyper.seed = seed;

    const FusionTrainResult res = train_fusion(pool_dataset(train_ds), arch, hyper);
    for (const FusionEpochStats& s : res.log) {
      std::snprintf(buf, sizeof(buf),
                    "epoch %zu objective %.17g loss %.17g l2reg %.17g l21 %.17g l11 %.17g "
                    "zero_rows %zu",
                    s.epoch, s.objective, s.loss, s.frob, s.l21, s.l11, s.zero_rows);
      log << buf << "\n";
    }
    save_fusion(out / "model.ckpt", res.net);
    test_scores = fusion_score_table(res.net, test_ds, "fusion");
    if (have_val) val_scores = fusion_score_table(res.net, val_ds, "fusion");
    std::snprintf(buf, sizeof(buf), "final objective %.17g", res.final_objective);
    std::cout << "train fusion: " << buf << ", zero fusion rows "
              << (res.log.empty() ? 0 : res.log.back().zero_rows) << "\n";
  } else {
    const Stream stream = model == "lstm-spatial" ? Stream::spatial : Stream::motion;
    LstmTrainConfig tc;
    tc.hidden = cfg.count_list("hidden");
    tc.learning_rate = cfg.real("learning_rate");
    tc.momentum = cfg.real("momentum");
    tc.batch_size = cfg.count("batch");
    tc.epochs = cfg.count("epochs");
    tc.clip = cfg.real("clip");
    tc.seed = seed;

    std::vector<LstmExample> examples;
    for (const VideoSample& s : train_ds.samples)
      examples.push_back({stream == Stream::spatial ? s.spatial : s.motion, s.label});
    std::vector<double> epoch_loss;
    const LstmStack stack = train_lstm(examples, train_ds.num_classes(), tc, &epoch_loss);
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof(buf), "epoch %zu mean_loss %.17g", e, epoch_loss[e]);
      log << buf << "\n";
    }
    save_lstm(out / "model.ckpt", stack);
    test_scores = lstm_score_table(stack, test_ds, stream, model);
    if (have_val) val_scores = lstm_score_table(stack, val_ds, stream, model);
    std::cout << "train " << model << ": " << epoch_loss.size() << " epochs, final mean loss "
              << (epoch_loss.empty() ? 0.0 : epoch_loss.back()) << "\n";
  }

  write_score_table(out / "scores_test.txt", test_scores);
  std::cout << "wrote " << (out / "model.ckpt").string() << "\n";
  std::cout << "wrote " << (out / "scores_test.txt").string() << "\n";
  if (have_val) {
    write_score_table(out / "scores_val.txt", val_scores);
    std::cout << "wrote " << (out / "scores_val.txt").string() << "\n";
  }
  return 0;
}

// ----------------------------------------------------------------- fuse

int cmd_fuse(const Args& args) {
  RunConfig cfg;
  cfg.declare("out", "");
  cfg.declare("tables", "");
  cfg.declare("weights", "");
  cfg.declare("cv", "0");
  cfg.declare("val_tables", "");
  cfg.declare("val_manifest", "");
  cfg.declare("metric", "accuracy");
  cfg.declare("grid_step", "0.1");
  cfg.declare("recalibrate", "0");
  if (args.help) {
    show_keys(cfg, "fuse", R"(  out (required), tables (required, comma-separated score files),
  weights (comma-separated reals; empty = average fusion),
  cv (0/1; estimate weights on a validation split),
  val_tables (score files on the validation split, same model order),
  val_manifest (labels for the validation split),
  metric (accuracy|map), grid_step (0.1),
  recalibrate (0/1; per-class min-max rescale each table first)
)");
    return 0;
  }
  apply(cfg, args);
  const fs::path out = prepare_out(cfg);

  const bool recalibrate = cfg.flag("recalibrate");
  std::vector<ScoreTable> tables;
  for (const std::string& p : cfg.list("tables")) {
    ScoreTable t = read_score_table(p);
    tables.push_back(recalibrate ? min_max_rescale(t) : std::move(t));
  }
  if (tables.empty()) throw UsageError("fuse: no input tables");

  const FuseMetric metric = [&] {
    const std::string m = cfg.str("metric");
    if (m == "accuracy") return FuseMetric::accuracy;
    if (m == "map") return FuseMetric::map;
    throw UsageError("fuse: metric must be 'accuracy' or 'map'");
  }();

  if (cfg.flag("cv") && !cfg.empty("weights"))
    throw UsageError("fuse: give either --weights or --cv 1, not both");
  cfg.write(out / "resolved_config.txt");
  std::ofstream log(out / "fuse_log.txt");
  ScoreTable fused;
  if (cfg.flag("cv")) {
    std::vector<ScoreTable> val_tables;
    for (const std::string& p : cfg.list("val_tables")) {
      ScoreTable t = read_score_table(p);
      val_tables.push_back(recalibrate ? min_max_rescale(t) : std::move(t));
    }
    if (val_tables.size() != tables.size())
      throw UsageError("fuse: need one validation table per input table");
    std::vector<std::string> warnings;
    const Dataset val_ds = load_dataset(cfg.required("val_manifest"), &warnings);
    print_warnings(warnings);
    const GroundTruth truth = GroundTruth::from_dataset(val_ds);
    const FusionWeights w =
        cross_validate_weights(val_tables, truth, metric, cfg.real("grid_step"));
    const double achieved = fuse_metric_value(weighted_fuse(val_tables, w), truth, metric);
    log << "weights";
    std::cout << "fuse: cross-validated weights";
    for (double v : w.values) {
      log << " " << v;
      std::cout << " " << v;
    }
    log << "\nvalidation_" << cfg.str("metric") << " " << achieved << "\n";
    std::cout << " (validation " << cfg.str("metric") << " " << achieved << ")\n";
    fused = weighted_fuse(tables, w);
  } else if (!cfg.empty("weights")) {
    Vec w;
    for (const std::string& s : cfg.list("weights")) {
      try {
        std::size_t pos = 0;
        w.push_back(std::stod(s, &pos));
        if (pos != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        throw UsageError("fuse: bad weight '" + s + "'");
      }
    }
    fused = weighted_fuse(tables, FusionWeights::make(std::move(w)));
    log << "weights fixed\n";
  } else {
    fused = average_fuse(tables);
    log << "weights uniform (average fusion)\n";
  }
  write_score_table(out / "scores_fused.txt", fused);
  std::cout << "wrote " << (out / "scores_fused.txt").string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval

int cmd_eval(const Args& args) {
  RunConfig cfg;
  cfg.declare("out", "");
  cfg.declare("scores", "");
  cfg.declare("manifest", "");
  cfg.declare("metric", "accuracy");
  if (args.help) {
    show_keys(cfg, "eval", R"(  out (required), scores (required), manifest (required),
  metric (accuracy|map)
)");
    return 0;
  }
  apply(cfg, args);
  const fs::path out = prepare_out(cfg);
  const std::string metric = cfg.str("metric");
  if (metric != "accuracy" && metric != "map")
    throw UsageError("eval: metric must be 'accuracy' or 'map'");

  const ScoreTable scores = read_score_table(cfg.required("scores"));
  std::vector<std::string> warnings;
  const Dataset ds = load_dataset(cfg.required("manifest"), &warnings);
  print_warnings(warnings);
  const GroundTruth truth = GroundTruth::from_dataset(ds);

  const EvalReport rep = evaluate(scores, truth);
  cfg.write(out / "resolved_config.txt");
  write_eval_report(out / "eval_report.txt", rep, truth.class_names);
  print_warnings(rep.warnings);

  std::cout << "eval: " << rep.samples << " videos\n";
  if (rep.accuracy) std::cout << "  accuracy " << *rep.accuracy << "\n";
  if (rep.map) std::cout << "  mAP " << *rep.map << "\n";
  for (std::size_t c = 0; c < rep.class_ap.size(); ++c)
    if (rep.class_ap[c])
      std::cout << "  AP[" << truth.class_names[c] << "] " << *rep.class_ap[c] << "\n";
  if (metric == "accuracy" && !rep.accuracy)
    throw DataError("eval: accuracy requested but ground truth is not single-label");
  if (metric == "map" && !rep.map) throw DataError("eval: mAP undefined (no positives)");
  std::cout << "wrote " << (out / "eval_report.txt").string() << "\n";
  return 0;
}

// --------------------------------------------------------------- verify

int cmd_verify(const Args& args) {
  RunConfig cfg;
  cfg.declare("suite", "all");
  if (args.help) {
    show_keys(cfg, "verify", "  suite (gradcheck | prox | metrics | all)\n");
    return 0;
  }
  apply(cfg, args);
  const std::string suite = cfg.str("suite");
  const bool all = suite == "all";
  if (!all && suite != "gradcheck" && suite != "prox" && suite != "metrics")
    throw UsageError("verify: suite must be gradcheck, prox, metrics or all");

  std::vector<verify::SuiteResult> results;
  if (all || suite == "gradcheck") {
    results.push_back(verify::run_lstm_gradcheck_suite());
    results.push_back(verify::run_fusion_gradcheck_suite());
  }
  if (all || suite == "prox") results.push_back(verify::run_prox_suite());
  if (all || suite == "metrics") results.push_back(verify::run_metrics_suite());

  bool ok = true;
  for (const verify::SuiteResult& r : results) {
    std::cout << (r.pass() ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.checks << " checks, "
              << r.failures << " failures\n";
    for (const std::string& n : r.notes) std::cout << "       " << n << "\n";
    ok = ok && r.pass();
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const Args args = parse_args(argc, argv);
    if (args.command == "synth") return cmd_synth(args);
    if (args.command == "train") return cmd_train(args);
    if (args.command == "fuse") return cmd_fuse(args);
    if (args.command == "eval") return cmd_eval(args);
    if (args.command == "verify") return cmd_verify(args);
    if (args.command == "-h" || args.command == "--help" || args.command == "help") {
      std::cout << kUsage;
      return 0;
    }
    throw UsageError("unknown command '" + args.command + "'");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << kUsage;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
