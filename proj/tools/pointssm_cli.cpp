// pointssm: experiment front end. Subcommands: serialize a cloud along a
// space-filling curve, pretrain by masked reconstruction, train/evaluate a
// classifier, benchmark the sequence mixers, and export reconstruction
// artifacts. Exit codes: 0 success, 1 usage or configuration error, 2 data
// error, 3 numeric/runtime error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pointssm/bench.hpp"
#include "pointssm/checkpoint.hpp"
#include "pointssm/common.hpp"
#include "pointssm/config.hpp"
#include "pointssm/curves.hpp"
#include "pointssm/data.hpp"
#include "pointssm/geometry.hpp"
#include "pointssm/model.hpp"
#include "pointssm/ops.hpp"
#include "pointssm/report.hpp"
#include "pointssm/rng.hpp"
#include "pointssm/train.hpp"

namespace fs = std::filesystem;
using namespace pointssm;

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool env_seed(uint64_t* out) {
  const char* raw = std::getenv("POINTSSM_SEED");
  if (raw == nullptr || *raw == '\0') return false;
  char* end = nullptr;
  unsigned long long v = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0')
    throw ConfigError(std::string("POINTSSM_SEED is not an integer: ") + raw);
  *out = v;
  return true;
}

// Shared --profile/--config/--set plumbing. Precedence, lowest to highest:
// profile defaults, command defaults, POINTSSM_SEED, config file, --set
// overrides, dedicated flags.
struct ConfigCli {
  std::string profile = "desk";
  std::string config_path;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigCli& cc) {
  cmd->add_option("--profile", cc.profile,
                  "Starting model profile (desk: 512 points/32 patches/64 "
                  "dims/4 layers; paper: published scale)")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  cmd->add_option("--config", cc.config_path,
                  "Config file with [model]/[data]/[train]/[bench] sections");
  cmd->add_option("--set", cc.sets,
                  "Override one key, e.g. --set train.epochs=12 (repeatable)");
}

template <typename Defaults>
RunConfig assemble_config(const ConfigCli& cc, Defaults&& command_defaults) {
  RunConfig cfg;
  if (cc.profile == "paper") cfg.model = ModelConfig::paper_profile();
  command_defaults(cfg);
  uint64_t seed = 0;
  if (env_seed(&seed)) {
    cfg.train.seed = seed;
    cfg.data.seed = seed;
  }
  if (!cc.config_path.empty()) apply_config_file(cfg, cc.config_path);
  for (const std::string& kv : cc.sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void echo_effective(const RunConfig& cfg) {
  std::cout << "effective configuration (hash " << config_hash(cfg) << "):\n"
            << echo_config(cfg) << std::flush;
}

Dataset synthetic_split(const RunConfig& cfg, const std::string& split) {
  int64_t per_class = split == "train" ? cfg.data.train_per_class
                                       : cfg.data.test_per_class;
  return make_synthetic_dataset(per_class, cfg.model.num_points,
                                cfg.data.noise_sigma, cfg.data.seed, split);
}

std::map<std::string, uint64_t> run_seeds(const RunConfig& cfg) {
  return {{"train", cfg.train.seed}, {"data", cfg.data.seed}};
}

void write_run_artifacts(const std::string& out_dir, const RunConfig& cfg,
                         const MetricsLog& log, const std::string& svg_name,
                         const std::vector<PlotSeries>& series,
                         const std::string& title, const std::string& y_label) {
  fs::create_directories(out_dir);
  log.save(out_dir + "/metrics.csv");
  write_text_file(out_dir + "/manifest.txt",
                  reproducibility_manifest(cfg, run_seeds(cfg)));
  write_text_file(out_dir + "/" + svg_name,
                  line_plot_svg(series, title, y_label));
}

// ---------------------------------------------------------------- serialize

struct SerializeArgs {
  std::string input;
  std::string shape = "sphere";
  int64_t points = 256;
  double noise = 0.0;
  std::string curve = "hilbert";
  int bits = 9;
  uint64_t seed = 0;
  int compare = 20;
  std::string out = "serialize.csv";
};

void run_serialize(const SerializeArgs& a) {
  PointCloud cloud =
      a.input.empty()
          ? generate_shape(shape_from_string(a.shape), a.points, a.noise, a.seed)
          : load_point_file(a.input);
  CurveSpec spec = curve_from_string(a.curve);
  SerializedOrder order = serialize(cloud, spec, a.bits);

  std::ostringstream csv;
  csv << "rank,index,x,y,z,curve_code\n";
  for (size_t rank = 0; rank < order.order.size(); ++rank) {
    int64_t idx = order.order[rank];
    const Point3& p = cloud[size_t(idx)];
    csv << rank << ',' << idx << ',' << g17(p[0]) << ',' << g17(p[1]) << ','
        << g17(p[2]) << ',' << order.keys[size_t(idx)] << '\n';
  }
  write_text_file(a.out, csv.str());

  double mine = locality_score(order, cloud);
  std::cout << "points = " << cloud.size() << "\n";
  std::cout << "locality_score = " << g17(mine) << "\n";
  if (a.compare > 0) {
    int wins = 0;
    for (int i = 0; i < a.compare; ++i) {
      CurveSpec rnd{CurveKind::random_order,
                    derive_seed(a.seed, "compare", uint64_t(i))};
      double random_score = locality_score(serialize(cloud, rnd, a.bits), cloud);
      if (mine < random_score) ++wins;
    }
    std::cout << a.curve << " beats random ordering in " << wins << " of "
              << a.compare << " seeded trials\n";
  }
  std::cout << "wrote " << a.out << "\n";
}

// ---------------------------------------------------------------- pretrain

void run_pretrain(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  echo_effective(cfg);
  Dataset train = synthetic_split(cfg, "train");
  Rng rng(derive_seed(cfg.train.seed, "init"));
  Model m = init_model(cfg.model, ModelMode::pretrain, rng);
  std::cout << "pretraining " << total_parameters(m) << " parameters on "
            << train.samples.size() << " clouds\n";
  MetricsLog log = pretrain_model(m, train, cfg.train);

  fs::create_directories(out_dir);
  Checkpoint ckpt = checkpoint_from_model(m, run_seeds(cfg));
  save_checkpoint(ckpt, out_dir + "/checkpoint.bin");
  std::vector<double> losses = log.series("train", "loss");
  write_run_artifacts(out_dir, cfg, log, "loss.svg",
                      {{"train loss", losses}}, "masked reconstruction loss",
                      "chamfer");
  std::cout << "epoch-1 loss = " << g17(losses.front()) << "\n";
  std::cout << "final loss = " << g17(losses.back()) << "\n";
  std::cout << "wrote " << out_dir << "/checkpoint.bin\n";
}

// ------------------------------------------------------------------- train

void run_train(const RunConfig& cfg, const std::string& checkpoint_path,
               const std::string& out_dir) {
  cfg.validate();
  echo_effective(cfg);
  Dataset train = synthetic_split(cfg, "train");
  Dataset test = synthetic_split(cfg, "test");
  Rng rng(derive_seed(cfg.train.seed, "init"));
  Model m = init_model(cfg.model, ModelMode::classify, rng);
  if (!checkpoint_path.empty()) {
    Checkpoint source = load_checkpoint(checkpoint_path);
    TransferReport report = transfer_into_model(source, m);
    std::cout << "transfer from " << checkpoint_path << ": "
              << report.loaded.size() << " loaded, " << report.dropped.size()
              << " dropped, " << report.fresh.size() << " fresh\n";
    for (const std::string& name : report.dropped)
      std::cout << "  dropped " << name << "\n";
  } else {
    std::cout << "training from scratch\n";
  }
  std::cout << "training " << total_parameters(m) << " parameters on "
            << train.samples.size() << " clouds ("
            << block_kind_to_string(cfg.model.block_kind) << " blocks)\n";
  MetricsLog log = train_classifier(m, train, test, cfg.train);

  fs::create_directories(out_dir);
  Checkpoint ckpt = checkpoint_from_model(m, run_seeds(cfg));
  save_checkpoint(ckpt, out_dir + "/checkpoint.bin");
  std::vector<double> acc = log.series("test", "accuracy");
  write_run_artifacts(out_dir, cfg, log, "accuracy.svg",
                      {{"test accuracy", acc}}, "classification accuracy",
                      "accuracy");
  std::cout << "final test accuracy = " << g17(acc.back()) << "\n";
  std::cout << "wrote " << out_dir << "/checkpoint.bin\n";
}

// -------------------------------------------------------------------- eval

void run_eval(const ConfigCli& cc, const std::string& checkpoint_path,
              const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ModelMode mode = ModelMode::classify;
  ModelConfig model_cfg = config_from_kv(ckpt.config, &mode);
  if (mode != ModelMode::classify)
    throw ConfigError("eval needs a classification checkpoint, got pretrain");
  RunConfig cfg = assemble_config(cc, [](RunConfig&) {});
  cfg.model = model_cfg;  // the checkpoint, not flags, defines the model
  cfg.validate();
  echo_effective(cfg);

  Rng rng(0);
  Model m = init_model(cfg.model, ModelMode::classify, rng);
  load_into_model(ckpt, m);
  Dataset test = synthetic_split(cfg, "test");
  EvalResult result = evaluate_model(m, test);

  MetricsLog log;
  log.add(0, "test", "accuracy", result.overall);
  std::cout << "samples = " << test.samples.size() << "\n";
  std::cout << "overall accuracy = " << g17(result.overall) << "\n";
  for (size_t c = 0; c < result.per_class.size(); ++c) {
    log.add(0, "test", "accuracy_" + test.class_names[c], result.per_class[c]);
    std::cout << "accuracy[" << test.class_names[c]
              << "] = " << g17(result.per_class[c]) << "\n";
  }
  fs::create_directories(out_dir);
  log.save(out_dir + "/metrics.csv");
  write_text_file(out_dir + "/manifest.txt",
                  reproducibility_manifest(cfg, run_seeds(cfg)));
  std::cout << "wrote " << out_dir << "/metrics.csv\n";
}

// ------------------------------------------------------------------- bench

void run_bench(const RunConfig& cfg, uint64_t seed, const std::string& out) {
  cfg.validate();
  echo_effective(cfg);
  BlockDims dims;
  dims.width = cfg.bench.channels;
  dims.state = cfg.model.state_dim;
  dims.conv_kernel = cfg.model.conv_kernel;

  std::vector<BlockKind> kinds;
  if (cfg.bench.block == "both" || cfg.bench.block == "selective_ssm")
    kinds.push_back(BlockKind::selective_ssm);
  if (cfg.bench.block == "both" || cfg.bench.block == "masked_attention")
    kinds.push_back(BlockKind::masked_attention);

  std::vector<BenchRow> rows;
  for (BlockKind kind : kinds) {
    for (int64_t length : cfg.bench.lengths) {
      BenchRow row = bench_block(kind, length, dims, int(cfg.bench.repeat), seed);
      std::cerr << "bench " << block_kind_to_string(kind) << " L=" << length
                << (row.oom ? " out of memory"
                            : " median " + std::to_string(row.median_ms) + " ms")
                << "\n";
      rows.push_back(row);
    }
  }
  write_text_file(out, bench_csv(rows));
  std::cout << "doubling ratios:\n" << doubling_summary(rows);
  std::cout << "wrote " << out << "\n";
}

// ------------------------------------------------------------------ export

struct ExportArgs {
  std::string checkpoint;
  std::string input;
  std::string shape = "sphere";
  double noise = 0.0;
  std::string curve = "hilbert";
  uint64_t seed = 0;
  std::string metrics;
  std::string out = "export";
};

void run_export(const ExportArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  ModelMode mode = ModelMode::pretrain;
  ModelConfig model_cfg = config_from_kv(ckpt.config, &mode);
  if (mode != ModelMode::pretrain)
    throw ConfigError("export needs a pretraining checkpoint, got classify");
  Rng rng(0);
  Model m = init_model(model_cfg, ModelMode::pretrain, rng);
  load_into_model(ckpt, m);

  PointCloud cloud =
      a.input.empty()
          ? generate_shape(shape_from_string(a.shape), model_cfg.num_points,
                           a.noise, a.seed)
          : load_point_file(a.input);

  int curve_tag = -1;
  for (size_t i = 0; i < model_cfg.curves.size(); ++i)
    if (curve_to_string(model_cfg.curves[i]) == a.curve) curve_tag = int(i);
  if (curve_tag < 0) {
    std::string bank;
    for (const CurveSpec& c : model_cfg.curves) {
      if (!bank.empty()) bank += ", ";
      bank += curve_to_string(c);
    }
    throw ConfigError("curve '" + a.curve +
                      "' is not in the model's bank (" + bank + ")");
  }

  Rng mask_rng(derive_seed(a.seed, "mask"));
  ReconstructResult rec = reconstruct(m, cloud, curve_tag, mask_rng);
  const PatchSet& ps = rec.patch_set;
  const int64_t k = model_cfg.patch_size;

  auto patch_points = [&](int64_t serial_rank) {
    PointCloud pts;
    int64_t p = rec.order[size_t(serial_rank)];
    const double* center = ps.centers.data() + p * 3;
    for (int64_t j = 0; j < k; ++j) {
      const double* rel = ps.rel_points.data() + (p * k + j) * 3;
      pts.push_back({rel[0] + center[0], rel[1] + center[1], rel[2] + center[2]});
    }
    return pts;
  };

  PointCloud visible;
  for (int64_t rank : rec.mask.visible) {
    PointCloud pts = patch_points(rank);
    visible.insert(visible.end(), pts.begin(), pts.end());
  }
  PointCloud reconstructed = visible;
  for (size_t i = 0; i < rec.mask.masked.size(); ++i) {
    int64_t p = rec.order[size_t(rec.mask.masked[i])];
    const double* center = ps.centers.data() + p * 3;
    const double* pred = rec.predicted.data() + int64_t(i) * (k * 3);
    for (int64_t j = 0; j < k; ++j)
      reconstructed.push_back({pred[3 * j] + center[0],
                               pred[3 * j + 1] + center[1],
                               pred[3 * j + 2] + center[2]});
  }

  fs::create_directories(a.out);
  write_text_file(a.out + "/input.ply", to_ply(cloud));
  write_text_file(a.out + "/visible.ply", to_ply(visible));
  write_text_file(a.out + "/reconstructed.ply", to_ply(reconstructed));
  std::cout << "input points = " << cloud.size() << "\n";
  std::cout << "visible points = " << visible.size() << "\n";
  std::cout << "reconstructed points = " << reconstructed.size() << "\n";
  std::cout << "masked chamfer loss = " << g17(rec.loss.item()) << "\n";
  std::cout << "reconstruction chamfer to input = "
            << g17(chamfer_distance(reconstructed, cloud)) << "\n";

  if (!a.metrics.empty()) {
    MetricsLog log = metrics_from_csv(read_text_file(a.metrics));
    std::vector<PlotSeries> series;
    for (const MetricRow& row : log.rows) {
      std::string label = row.split + " " + row.metric;
      bool found = false;
      for (PlotSeries& s : series)
        if (s.label == label) {
          s.values.push_back(row.value);
          found = true;
        }
      if (!found) series.push_back({label, {row.value}});
    }
    write_text_file(a.out + "/loss.svg",
                    line_plot_svg(series, "training metrics", "value"));
  }
  std::cout << "wrote " << a.out << "/input.ply, visible.ply, "
            << "reconstructed.ply\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "pointssm: point-cloud serialization and selective state-space "
      "experiments"};
  app.require_subcommand(1);

  uint64_t default_seed = 0;
  try {
    env_seed(&default_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  // serialize -----------------------------------------------------------
  SerializeArgs ser;
  ser.seed = default_seed;
  CLI::App* serialize_cmd = app.add_subcommand(
      "serialize", "Order a point cloud along a space-filling curve");
  serialize_cmd->add_option("--input", ser.input,
                            "Point file (.off/.xyz/.ply); omit to generate "
                            "--shape instead");
  serialize_cmd->add_option("--shape", ser.shape, "Generated shape kind")
      ->check(CLI::IsMember({"sphere", "cube", "torus", "cylinder"}))
      ->capture_default_str();
  serialize_cmd->add_option("--points", ser.points, "Generated cloud size")
      ->capture_default_str();
  serialize_cmd->add_option("--noise", ser.noise, "Surface noise sigma")
      ->capture_default_str();
  serialize_cmd
      ->add_option("--curve", ser.curve,
                   "hilbert | trans-hilbert | zorder | trans-zorder | "
                   "random[:seed]")
      ->capture_default_str();
  serialize_cmd->add_option("--bits", ser.bits, "Grid bits per axis")
      ->capture_default_str();
  serialize_cmd
      ->add_option("--seed", ser.seed,
                   "Shape/comparison seed (default: POINTSSM_SEED or 0)")
      ->capture_default_str();
  serialize_cmd
      ->add_option("--compare", ser.compare,
                   "Random-order trials for the locality comparison; 0 "
                   "disables")
      ->capture_default_str();
  serialize_cmd->add_option("--out", ser.out, "Output CSV path")
      ->capture_default_str();
  serialize_cmd->callback([&] { run_serialize(ser); });

  // shared experiment options --------------------------------------------
  struct ExperimentFlags {
    int64_t epochs = 0;
    int64_t batch_size = 0;
    double lr = 0.0;
    uint64_t seed = 0;
    uint64_t data_seed = 0;
    std::string block_kind;
    std::string curves;
    std::string augment;
  };

  auto add_experiment_flags = [](CLI::App* cmd, ConfigCli& cc,
                                 ExperimentFlags& f) {
    add_config_options(cmd, cc);
    std::map<std::string, CLI::Option*> opts;
    opts["epochs"] =
        cmd->add_option("--epochs", f.epochs, "Override train.epochs");
    opts["batch"] = cmd->add_option("--batch-size", f.batch_size,
                                    "Override train.batch_size");
    opts["lr"] = cmd->add_option("--lr", f.lr, "Override train.base_lr");
    opts["seed"] = cmd->add_option(
        "--seed", f.seed, "Override train.seed (default: POINTSSM_SEED or 0)");
    opts["data_seed"] =
        cmd->add_option("--data-seed", f.data_seed, "Override data.seed");
    opts["block"] = cmd->add_option("--block-kind", f.block_kind,
                                    "Override model.block_kind: selective_ssm "
                                    "| identity | masked_attention | mlp");
    opts["curves"] = cmd->add_option(
        "--curves", f.curves, "Override model.curves (comma-separated)");
    opts["augment"] = cmd->add_option("--augment", f.augment,
                                      "Override train.augment: none | "
                                      "scale_translate | rotate | rotate_scale");
    return opts;
  };

  auto apply_experiment_flags =
      [](RunConfig& cfg, const ExperimentFlags& f,
         const std::map<std::string, CLI::Option*>& opts) {
        if (opts.at("epochs")->count())
          apply_override(cfg, "train.epochs", std::to_string(f.epochs));
        if (opts.at("batch")->count())
          apply_override(cfg, "train.batch_size", std::to_string(f.batch_size));
        if (opts.at("lr")->count())
          apply_override(cfg, "train.base_lr", g17(f.lr));
        if (opts.at("seed")->count())
          apply_override(cfg, "train.seed", std::to_string(f.seed));
        if (opts.at("data_seed")->count())
          apply_override(cfg, "data.seed", std::to_string(f.data_seed));
        if (opts.at("block")->count())
          apply_override(cfg, "model.block_kind", f.block_kind);
        if (opts.at("curves")->count())
          apply_override(cfg, "model.curves", f.curves);
        if (opts.at("augment")->count())
          apply_override(cfg, "train.augment", f.augment);
      };

  // pretrain --------------------------------------------------------------
  ConfigCli pre_cc;
  ExperimentFlags pre_flags;
  std::string pre_out = "runs/pretrain";
  CLI::App* pretrain_cmd = app.add_subcommand(
      "pretrain",
      "Masked-reconstruction pretraining on synthetic shapes (defaults: lr "
      "1e-3, batch 16, 30 epochs, mask 0.6)");
  auto pre_opts = add_experiment_flags(pretrain_cmd, pre_cc, pre_flags);
  pretrain_cmd->add_option("--out", pre_out, "Output directory")
      ->capture_default_str();
  pretrain_cmd->callback([&] {
    RunConfig cfg = assemble_config(pre_cc, [](RunConfig&) {});
    apply_experiment_flags(cfg, pre_flags, pre_opts);
    run_pretrain(cfg, pre_out);
  });

  // train -------------------------------------------------------------
  ConfigCli train_cc;
  ExperimentFlags train_flags;
  std::string train_out = "runs/train";
  std::string train_ckpt;
  bool train_head_only = false;
  CLI::App* train_cmd = app.add_subcommand(
      "train",
      "Classification training on synthetic shapes (defaults: lr 5e-4, batch "
      "16, 30 epochs); --checkpoint warm-starts from pretraining");
  auto train_opts = add_experiment_flags(train_cmd, train_cc, train_flags);
  train_cmd->add_option("--checkpoint", train_ckpt,
                        "Pretraining checkpoint to transfer encoder weights "
                        "from (omit to train from scratch)");
  train_cmd->add_flag("--head-only", train_head_only,
                      "Freeze everything except the classification head");
  train_cmd->add_option("--out", train_out, "Output directory")
      ->capture_default_str();
  train_cmd->callback([&] {
    RunConfig cfg = assemble_config(
        train_cc, [](RunConfig& c) { c.train.base_lr = 5e-4; });
    apply_experiment_flags(cfg, train_flags, train_opts);
    if (train_head_only) cfg.train.head_only = true;
    run_train(cfg, train_ckpt, train_out);
  });

  // eval --------------------------------------------------------------
  ConfigCli eval_cc;
  std::string eval_ckpt;
  std::string eval_out = "runs/eval";
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Evaluate a classification checkpoint on the synthetic test "
              "split (no augmentation, no voting)");
  add_config_options(eval_cmd, eval_cc);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate")
      ->required();
  eval_cmd->add_option("--out", eval_out, "Output directory")
      ->capture_default_str();
  eval_cmd->callback([&] { run_eval(eval_cc, eval_ckpt, eval_out); });

  // bench -------------------------------------------------------------
  ConfigCli bench_cc;
  std::string bench_lengths, bench_block;
  int64_t bench_repeat = 0, bench_channels = 0;
  uint64_t bench_seed = default_seed;
  std::string bench_out = "bench.csv";
  CLI::App* bench_cmd = app.add_subcommand(
      "bench",
      "Time the sequence mixers on predefined token sequences (defaults: "
      "lengths 1024,2048,4096,8192, both blocks, median of 5, 32 channels)");
  add_config_options(bench_cmd, bench_cc);
  CLI::Option* bench_lengths_opt = bench_cmd->add_option(
      "--lengths", bench_lengths, "Override bench.lengths (ascending, comma-separated)");
  CLI::Option* bench_block_opt = bench_cmd->add_option(
      "--block", bench_block,
      "Override bench.block: selective_ssm | masked_attention | both");
  CLI::Option* bench_repeat_opt = bench_cmd->add_option(
      "--repeat", bench_repeat, "Override bench.repeat (median over R runs)");
  CLI::Option* bench_channels_opt = bench_cmd->add_option(
      "--channels", bench_channels, "Override bench.channels (token width)");
  bench_cmd
      ->add_option("--seed", bench_seed,
                   "Sequence seed (default: POINTSSM_SEED or 0)")
      ->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Output CSV path")
      ->capture_default_str();
  bench_cmd->callback([&] {
    RunConfig cfg = assemble_config(bench_cc, [](RunConfig&) {});
    if (bench_lengths_opt->count())
      apply_override(cfg, "bench.lengths", bench_lengths);
    if (bench_block_opt->count())
      apply_override(cfg, "bench.block", bench_block);
    if (bench_repeat_opt->count())
      apply_override(cfg, "bench.repeat", std::to_string(bench_repeat));
    if (bench_channels_opt->count())
      apply_override(cfg, "bench.channels", std::to_string(bench_channels));
    run_bench(cfg, bench_seed, bench_out);
  });

  // export ------------------------------------------------------------
  ExportArgs exp;
  exp.seed = default_seed;
  CLI::App* export_cmd = app.add_subcommand(
      "export",
      "Write input / masked-visible / reconstructed PLY triplets from a "
      "pretraining checkpoint, plus an optional metrics SVG");
  export_cmd->add_option("--checkpoint", exp.checkpoint,
                         "Pretraining checkpoint")
      ->required();
  export_cmd->add_option("--input", exp.input,
                         "Point file to reconstruct; omit to generate --shape");
  export_cmd->add_option("--shape", exp.shape, "Generated shape kind")
      ->check(CLI::IsMember({"sphere", "cube", "torus", "cylinder"}))
      ->capture_default_str();
  export_cmd->add_option("--noise", exp.noise, "Surface noise sigma")
      ->capture_default_str();
  export_cmd
      ->add_option("--curve", exp.curve,
                   "Curve from the model's bank used for masking order")
      ->capture_default_str();
  export_cmd
      ->add_option("--seed", exp.seed,
                   "Shape/mask seed (default: POINTSSM_SEED or 0)")
      ->capture_default_str();
  export_cmd->add_option("--metrics", exp.metrics,
                         "Metrics CSV to render as loss.svg");
  export_cmd->add_option("--out", exp.out, "Output directory")
      ->capture_default_str();
  export_cmd->callback([&] { run_export(exp); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::bad_alloc&) {
    std::cerr << "numeric error: out of memory\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
