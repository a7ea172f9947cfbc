#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "ash/errors.hpp"
#include "ash/harness/config.hpp"
#include "ash/harness/image_io.hpp"
#include "ash/harness/trainer.hpp"

namespace fs = std::filesystem;
using namespace ash;
using namespace ash::harness;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigInvalid = 2, kDiverged = 3 };

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string checkpoint;
};

RunConfig resolve(const CommonArgs& a) {
  auto overrides = a.overrides;
  if (a.seed) overrides.push_back("seed=" + std::to_string(*a.seed));
  return a.config.empty() ? parse_config("", overrides) : load_config(a.config, overrides);
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "Override the configured seed");
  cmd->add_option("--set", a.overrides, "key=value override (repeatable)")->allow_extra_args(false);
  cmd->add_option("--out", a.out, "Output directory");
}

void print_epoch(const EpochMetrics& m) {
  std::fprintf(stderr, "epoch %3zu  step %5zu  %-13s loss %.4f  R@1 %.3f  R@5 %.3f  R@10 %.3f\n", m.epoch, m.step,
               std::string(sched::to_string(m.phase)).c_str(), m.total_loss(), m.r_at_1, m.r_at_5, m.r_at_10);
}

int cmd_train(const CommonArgs& a, bool dump_plans) {
  const RunConfig cfg = resolve(a);
  Trainer trainer(cfg);
  if (!a.checkpoint.empty()) trainer.load(a.checkpoint);
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.dump_plans = dump_plans;
  opts.on_epoch = print_epoch;
  trainer.train(opts);
  std::fprintf(stderr, "wrote %s\n", (fs::path(a.out) / "metrics.csv").string().c_str());
  return kOk;
}

int cmd_eval(const CommonArgs& a) {
  const RunConfig cfg = resolve(a);
  Trainer trainer(cfg);
  if (!a.checkpoint.empty()) trainer.load(a.checkpoint);
  const RecallResult r = trainer.evaluate();
  nlohmann::ordered_json j{{"pairs", r.pairs}, {"r_at_1", r.r_at_1}, {"r_at_5", r.r_at_5}, {"r_at_10", r.r_at_10}};
  std::cout << j.dump() << '\n';
  return kOk;
}

int cmd_sweep(const CommonArgs& a) {
  const RunConfig cfg = resolve(a);
  fs::create_directories(a.out);
  std::vector<SweepRow> done;
  const auto rows = run_sweep(cfg, [&](const SweepRow& row) {
    done.push_back(row);
    std::fprintf(stderr, "cell %zu seed %llu T=%zu phi=%zu sr=%s collector=%d  R@1 %.3f\n", row.cell,
                 static_cast<unsigned long long>(row.seed), row.T, row.retrieve_count, row.sr_mode.c_str(),
                 row.collector_enabled ? 1 : 0, row.r_at_1);
    write_text_file(fs::path(a.out) / "sweep.csv", sweep_csv(done));
  });
  write_text_file(fs::path(a.out) / "sweep.csv", sweep_csv(rows));
  return kOk;
}

int cmd_encode(const CommonArgs& a, const std::vector<std::string>& images) {
  const RunConfig cfg = resolve(a);
  Trainer trainer(cfg);
  if (!a.checkpoint.empty()) trainer.load(a.checkpoint);
  AshNet& model = trainer.model();
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  NoGradGuard no_grad;
  std::vector<Image> loaded;
  for (const auto& path : images) {
    Image img = load_image_pgm_ppm(path);
    if (img.height != cfg.image_size || img.width != cfg.image_size) {
      throw ConfigError("image_size", path + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                          ", configured size is " + std::to_string(cfg.image_size));
    }
    loaded.push_back(std::move(img));
  }
  std::vector<double> flat;
  std::vector<spike::SpikeTrain> trains;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    flat.insert(flat.end(), loaded[i].data.begin(), loaded[i].data.end());
    trains.push_back(model.spike_train(loaded[i].data, derive_seed(cfg.seed, i)));
  }
  const Tensor batch({loaded.size(), 3, cfg.image_size, cfg.image_size}, std::move(flat));
  const VisualOutputs vis = model.encode_visual(batch, trains);
  const std::size_t n = model.num_patches(), m1 = cfg.M1;
  const auto tokens = vis.tokens.data();
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < n; ++p) {
      const auto* row = tokens.data() + (i * n + p) * m1;
      rows.push_back(std::vector<double>(row, row + m1));
    }
    out.push_back({{"image", images[i]}, {"patches", n}, {"dim", m1}, {"tokens", rows}});
  }
  fs::create_directories(a.out);
  write_text_file(fs::path(a.out) / "tokens.json", out.dump() + "\n");
  std::fprintf(stderr, "wrote %s\n", (fs::path(a.out) / "tokens.json").string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid spiking/convolutional vision-language encoder: training, evaluation and sweeps"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, sweep_args, encode_args;
  bool dump_plans = false;
  std::vector<std::string> images;

  auto* train = app.add_subcommand("train", "Run the two-phase pre-training schedule");
  add_common(train, train_args);
  train->add_option("--checkpoint", train_args.checkpoint, "Initialize from a checkpoint")->check(CLI::ExistingFile);
  train->add_flag("--dump-plans", dump_plans, "Write plan_epochN.json for every epoch");

  auto* eval = app.add_subcommand("eval", "Held-out image-to-text Recall@K");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint to evaluate")->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Train every cell of the configured sweep axes");
  add_common(sweep, sweep_args);

  auto* encode = app.add_subcommand("encode", "Dump fused visual tokens for P5/P6 images");
  add_common(encode, encode_args);
  encode->add_option("--checkpoint", encode_args.checkpoint, "Checkpoint to load")->check(CLI::ExistingFile);
  encode->add_option("images", images, "Image files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigInvalid;
  }

  try {
    if (*train) return cmd_train(train_args, dump_plans);
    if (*eval) return cmd_eval(eval_args);
    if (*sweep) return cmd_sweep(sweep_args);
    if (*encode) return cmd_encode(encode_args, images);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigInvalid;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
