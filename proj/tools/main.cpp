#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "posefuse/checkpoint.hpp"
#include "posefuse/config.hpp"
#include "posefuse/errors.hpp"
#include "posefuse/eval.hpp"
#include "posefuse/selfcheck.hpp"
#include "posefuse/train.hpp"

namespace fs = std::filesystem;
using namespace posefuse;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNanLoss = 4;
constexpr int kExitGradcheck = 5;

struct TrainArgs {
  std::string config_path;
  std::string protocol;
  std::string fusion;
  std::string data_path;
  std::string out_dir;
  std::string resume_path;
  double lambda = -1.0;
  std::int64_t seed = -1;
  int stop_after_phase = -1;
};

cli::RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  return cli::parse_config_file(path);
}

data::Dataset train_split(const cli::RunConfig& cfg) {
  if (!cfg.data_path.empty()) return data::load_csv(cfg.data_path);
  return data::generate(cfg.synth, cfg.data_seed);
}

data::Dataset test_split(const cli::RunConfig& cfg) {
  if (!cfg.test_data_path.empty()) return data::load_csv(cfg.test_data_path);
  data::SynthConfig synth = cfg.synth;
  synth.per_category = cfg.per_category_test;
  return data::generate(synth, cfg.data_seed + 1);
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp);
    out << text;
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path + " failed: " + ec.message());
}

nlohmann::ordered_json epoch_record_json(const train::EpochRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["phase"] = rec.phase;
  j["loss_pose"] = rec.loss_pose;
  j["loss_cat"] = rec.loss_cat;
  j["val_pose_err_deg"] = rec.val_pose_err_deg;
  j["val_cat_acc"] = rec.val_cat_acc;
  return j;
}

int cmd_gen_data(const std::string& config_path, std::int64_t seed, int per_category,
                 const std::string& out_path) {
  cli::RunConfig cfg = load_run_config(config_path);
  if (per_category > 0) cfg.synth.per_category = per_category;
  cfg.finalize();
  const std::uint64_t data_seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : cfg.data_seed;
  const data::Dataset ds = data::generate(cfg.synth, data_seed);
  data::save_csv(ds, out_path);
  std::vector<int> counts(static_cast<std::size_t>(ds.k), 0);
  for (const auto& s : ds.samples) counts[static_cast<std::size_t>(s.category)]++;
  std::cout << "wrote " << ds.samples.size() << " samples (" << ds.k << " categories, input dim "
            << ds.input_dim << ") to " << out_path << "\n";
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::cout << "  category " << c << ": " << counts[c] << "\n";
  }
  return 0;
}

int cmd_train(const TrainArgs& args) {
  cli::RunConfig cfg = load_run_config(args.config_path);
  if (!args.protocol.empty()) cfg.protocol = cli::parse_protocol(args.protocol);
  if (!args.fusion.empty()) cfg.train.fusion = cli::parse_fusion(args.fusion);
  if (args.lambda >= 0.0) cfg.train.lambda = args.lambda;
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.data_path.empty()) cfg.data_path = args.data_path;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  cfg.finalize();

  const data::Dataset ds = train_split(cfg);
  const data::Dataset val = test_split(cfg);
  if (ds.input_dim != cfg.model.input_dim) {
    throw InvalidConfig("dataset input dim " + std::to_string(ds.input_dim) +
                        " does not match model input dim " + std::to_string(cfg.model.input_dim));
  }

  const model::Model m(cfg.model);
  nn::ParameterStore store;
  Rng rng(cfg.seed);
  int start_phase = 0;
  if (args.resume_path.empty()) {
    m.init_params(store, rng);
  } else {
    cli::Checkpoint ckpt = cli::load_checkpoint(args.resume_path);
    if (ckpt.model_config != cli::canonical_model_config(cfg.model)) {
      throw InvalidConfig("checkpoint architecture does not match the configured model");
    }
    store = std::move(ckpt.params);
    rng.deserialize(ckpt.rng_state);
    start_phase = static_cast<int>(ckpt.phase_cursor);
  }

  fs::create_directories(cfg.out_dir);
  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path,
                        args.resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw IoError("cannot open " + metrics_path);

  train::Protocol protocol = train::make_protocol(cfg.protocol, cfg.train);
  const int end_phase =
      args.stop_after_phase > 0
          ? std::min<int>(args.stop_after_phase, static_cast<int>(protocol.phases.size()))
          : static_cast<int>(protocol.phases.size());

  train::ProtocolHooks hooks;
  hooks.on_epoch = [&](const train::EpochRecord& rec) {
    metrics << epoch_record_json(rec).dump() << "\n";
    metrics.flush();
  };
  hooks.on_phase_end = [&](int phase_index, const train::Phase& phase,
                           const nn::ParameterStore& s, const Rng& r) {
    cli::Checkpoint ckpt;
    ckpt.model_config = cli::canonical_model_config(cfg.model);
    ckpt.params = s;
    ckpt.rng_state = r.serialize();
    ckpt.phase_cursor = static_cast<std::uint64_t>(phase_index + 1);
    const std::string path =
        (fs::path(cfg.out_dir) / ("phase_" + std::to_string(phase_index + 1) + ".ckpt")).string();
    cli::save_checkpoint(path, ckpt);
    std::cout << "checkpoint: " << path << " (" << phase.name << ")\n";
  };

  train::Trainer trainer(m, cfg.train);
  train::TrainReport report;
  for (int pi = start_phase; pi < end_phase; ++pi) {
    const train::Phase& phase = protocol.phases[static_cast<std::size_t>(pi)];
    std::cout << "=== phase " << (pi + 1) << "/" << protocol.phases.size() << ": " << phase.name
              << " (" << phase.epochs << " epochs, lr " << phase.lr << ") ===\n";
    int epoch_counter = 0;
    for (int q = 0; q < pi; ++q) {
      epoch_counter += protocol.phases[static_cast<std::size_t>(q)].epochs;
    }
    trainer.run_phase(phase, store, ds, &val, rng, &report, &hooks, &epoch_counter);
    hooks.on_phase_end(pi, phase, store, rng);
  }

  if (end_phase == static_cast<int>(protocol.phases.size())) {
    cli::Checkpoint final_ckpt;
    final_ckpt.model_config = cli::canonical_model_config(cfg.model);
    final_ckpt.params = store;
    final_ckpt.rng_state = rng.serialize();
    final_ckpt.phase_cursor = static_cast<std::uint64_t>(end_phase);
    cli::save_checkpoint((fs::path(cfg.out_dir) / "final.ckpt").string(), final_ckpt);

    const auto ev = eval::evaluate(m, store, val, cfg.train.fusion, false);
    write_text_atomic((fs::path(cfg.out_dir) / "final_eval.json").string(),
                      ev.to_json().dump(2) + "\n");
    std::cout << ev.to_table();
  }
  std::cout << "metrics: " << metrics_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& fusion, bool oracle_category, int topk,
             const std::string& json_path) {
  const cli::Checkpoint ckpt = cli::load_checkpoint(ckpt_path);
  const model::ModelConfig mc = cli::parse_model_config(ckpt.model_config);
  const model::Model m(mc);
  const data::Dataset ds = data::load_csv(data_path);
  if (ds.input_dim != mc.input_dim || ds.k > mc.k) {
    throw ShapeMismatch("dataset (input dim " + std::to_string(ds.input_dim) + ", k " +
                        std::to_string(ds.k) + ") does not match checkpoint (input dim " +
                        std::to_string(mc.input_dim) + ", k " + std::to_string(mc.k) + ")");
  }
  const auto report =
      eval::evaluate(m, ckpt.params, ds, cli::parse_fusion(fusion), oracle_category);
  std::cout << report.to_table();
  if (topk > 0) {
    const int kk = std::min(topk, 3);
    std::cout << "top-" << kk << " pose-err: "
              << report.topk_pose_err_deg[static_cast<std::size_t>(kk - 1)] << " deg\n";
  }
  write_text_atomic(json_path, report.to_json().dump(2) + "\n");
  std::cout << "report: " << json_path << "\n";
  return 0;
}

struct AblationRun {
  eval::EvalReport report;
  train::TrainReport train_report;
};

AblationRun run_training(const cli::RunConfig& base, train::ProtocolKind protocol,
                         model::Variant variant, double lambda) {
  cli::RunConfig cfg = base;
  cfg.protocol = protocol;
  cfg.model.variant = variant;
  cfg.train.lambda = lambda;
  cfg.finalize();

  const data::Dataset ds = train_split(cfg);
  const data::Dataset val = test_split(cfg);
  const model::Model m(cfg.model);
  nn::ParameterStore store;
  Rng rng(cfg.seed);
  m.init_params(store, rng);

  const train::Protocol proto = train::make_protocol(cfg.protocol, cfg.train);
  train::Trainer trainer(m, cfg.train);
  AblationRun out;
  out.train_report = trainer.run_protocol(proto, store, ds, &val, rng);
  out.report = eval::evaluate(m, store, val, cfg.train.fusion, false);
  return out;
}

// Head comparison with frozen categorization-biased features: pretrain, learn
// the heads, evaluate the pose with oracle categories.
AblationRun run_heads_only(const cli::RunConfig& base, model::Variant variant) {
  cli::RunConfig cfg = base;
  cfg.model.variant = variant;
  cfg.finalize();
  const data::Dataset ds = train_split(cfg);
  const data::Dataset val = test_split(cfg);
  const model::Model m(cfg.model);
  nn::ParameterStore store;
  Rng rng(cfg.seed);
  m.init_params(store, rng);
  train::Trainer trainer(m, cfg.train);
  AblationRun out;
  trainer.pretrain_feature(store, ds, nullptr, cfg.train.epochs_pretrain, rng, &out.train_report);
  trainer.train_heads_independent(store, ds, nullptr, cfg.train.epochs_heads, rng,
                                  &out.train_report);
  out.report = eval::evaluate(m, store, val, cfg.train.fusion, true);
  return out;
}

int cmd_ablate(const std::string& suite, const std::string& config_path, std::int64_t seed) {
  cli::RunConfig cfg = load_run_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.finalize();

  if (suite == "heads") {
    const auto dep = run_heads_only(cfg, model::Variant::CategoryDependent);
    const auto indep = run_heads_only(cfg, model::Variant::CategoryIndependent);
    std::cout << "heads ablation (oracle-category pose error, deg)\n";
    std::cout << "  category-dependent:   " << dep.report.mean_median_pose_err_deg << "\n";
    std::cout << "  category-independent: " << indep.report.mean_median_pose_err_deg << "\n";
    const bool ok = dep.report.mean_median_pose_err_deg < indep.report.mean_median_pose_err_deg;
    std::cout << "verdict: category-dependent heads are " << (ok ? "" : "NOT ")
              << "strictly better\n";
    return 0;
  }
  if (suite == "protocol") {
    const auto balanced = run_training(cfg, train::ProtocolKind::Balanced,
                                       model::Variant::CategoryDependent, cfg.train.lambda);
    const auto pose_first = run_training(cfg, train::ProtocolKind::PoseFirst,
                                         model::Variant::CategoryDependent, cfg.train.lambda);
    std::cout << "protocol ablation (pose-err deg / cat-acc)\n";
    std::cout << "  balanced:   " << balanced.report.mean_median_pose_err_deg << " / "
              << balanced.report.overall_category_acc << "\n";
    std::cout << "  pose-first: " << pose_first.report.mean_median_pose_err_deg << " / "
              << pose_first.report.overall_category_acc << "\n";
    const bool ok =
        pose_first.report.mean_median_pose_err_deg <= balanced.report.mean_median_pose_err_deg;
    std::cout << "verdict: pose-first pose error is " << (ok ? "" : "NOT ") << "<= balanced\n";
    return 0;
  }
  if (suite == "lambda") {
    std::cout << "lambda ablation (pose-first; pose-err deg / cat-acc)\n";
    double err_small = 0.0, err_large = 0.0;
    for (double lambda : {0.1, 1.0}) {
      const auto run = run_training(cfg, train::ProtocolKind::PoseFirst,
                                    model::Variant::CategoryDependent, lambda);
      std::cout << "  lambda=" << lambda << ": " << run.report.mean_median_pose_err_deg << " / "
                << run.report.overall_category_acc << "\n";
      (lambda == 0.1 ? err_small : err_large) = run.report.mean_median_pose_err_deg;
    }
    std::cout << "verdict: lambda=0.1 pose error is " << (err_small <= err_large ? "" : "NOT ")
              << "<= lambda=1\n";
    return 0;
  }
  std::cerr << "unknown ablation suite '" << suite << "' (expected heads|protocol|lambda)\n";
  return kExitConfig;
}

int cmd_gradcheck(bool inject_fault) {
  const auto suite = selfcheck::run_gradcheck_suite(inject_fault);
  std::cout << suite.summary();
  if (!suite.pass) {
    std::cout << "failing parameters:\n";
    for (const auto& f : suite.failing) std::cout << "  " << f << "\n";
    return kExitGradcheck;
  }
  std::cout << "all gradient checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint object-category and 3D-pose estimation on synthetic data"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset CSV");
  std::string gen_config, gen_out = "dataset.csv";
  std::int64_t gen_seed = -1;
  int gen_per_category = -1;
  gen->add_option("--config", gen_config, "config file");
  gen->add_option("--seed", gen_seed, "dataset sample seed");
  gen->add_option("--per-category", gen_per_category, "samples per category");
  gen->add_option("--out", gen_out, "output CSV path");

  auto* tr = app.add_subcommand("train", "run a training protocol");
  TrainArgs targs;
  tr->add_option("--config", targs.config_path, "config file");
  tr->add_option("--protocol", targs.protocol, "balanced|pose-first");
  tr->add_option("--fusion", targs.fusion, "weighted|top1");
  tr->add_option("--lambda", targs.lambda, "category-loss weight");
  tr->add_option("--seed", targs.seed, "run seed");
  tr->add_option("--data", targs.data_path, "training CSV (overrides inline synthesis)");
  tr->add_option("--out", targs.out_dir, "output directory");
  tr->add_option("--resume", targs.resume_path, "checkpoint to resume from");
  tr->add_option("--stop-after-phase", targs.stop_after_phase,
                 "stop after completing this many phases");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_fusion = "weighted", ev_json = "eval_report.json";
  bool ev_oracle = false;
  int ev_topk = 0;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset CSV")->required();
  ev->add_option("--fusion", ev_fusion, "weighted|top1");
  ev->add_flag("--oracle-category", ev_oracle, "use ground-truth category distributions");
  ev->add_option("--topk", ev_topk, "print the top-k pose error row (1..3)");
  ev->add_option("--json", ev_json, "JSON report output path");

  auto* ab = app.add_subcommand("ablate", "run a paired comparison suite");
  std::string ab_suite, ab_config;
  std::int64_t ab_seed = -1;
  ab->add_option("--suite", ab_suite, "heads|protocol|lambda")->required();
  ab->add_option("--config", ab_config, "config file");
  ab->add_option("--seed", ab_seed, "shared seed");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  bool gc_fault = false;
  gc->add_flag("--inject-fault", gc_fault, "corrupt one gradient (failure-path fixture)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_config, gen_seed, gen_per_category, gen_out);
    if (tr->parsed()) return cmd_train(targs);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_fusion, ev_oracle, ev_topk, ev_json);
    if (ab->parsed()) return cmd_ablate(ab_suite, ab_config, ab_seed);
    if (gc->parsed()) return cmd_gradcheck(gc_fault);
  } catch (const NanLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNanLoss;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    // config, schema, shape and checkpoint problems are usage errors
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
