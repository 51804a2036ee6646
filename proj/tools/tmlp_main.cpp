#include <CLI11.hpp>

#include <iostream>

#include "tmlp/cli.hpp"

namespace {

tmlp::cli::RunConfig load_config(const std::string& config_path,
                                 const std::string& out_dir, long seed) {
  auto cfg = tmlp::cli::load_run_config(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed >= 0) {
    cfg.seed = std::uint64_t(seed);
    cfg.model.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Level-of-detail sinusoidal network trainer and tooling"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long seed = -1;
  std::string model_path;
  std::string out_path;
  std::size_t keep_layers = 0;
  std::vector<double> levels;
  std::size_t resolution = 0;

  auto add_config_flags = [&](CLI::App* cmd, bool config_required) {
    cmd->add_option("--config", config_path, "run config file")
        ->required(config_required);
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", seed, "seed override");
  };

  auto* train = app.add_subcommand("train", "train a model and write artifacts");
  add_config_flags(train, true);

  auto* eval = app.add_subcommand("eval", "evaluate a .tmlp model against a signal");
  eval->add_option("model", model_path, "input .tmlp file")->required();
  add_config_flags(eval, true);

  auto* probe = app.add_subcommand(
      "probe", "compare per-depth head retraining against tail outputs");
  add_config_flags(probe, true);

  auto* truncate =
      app.add_subcommand("truncate", "keep a byte prefix of a .tmlp container");
  truncate->add_option("model", model_path, "input .tmlp file")->required();
  truncate->add_option("layers", keep_layers, "number of layer chunks to keep")
      ->required();
  truncate->add_option("output", out_path, "output .tmlp file")->required();

  auto* render = app.add_subcommand("render", "render a .tmlp model");
  render->add_option("model", model_path, "input .tmlp file")->required();
  render->add_option("--levels", levels, "detail levels to render")->delimiter(',');
  render->add_option("--resolution", resolution, "grid resolution");
  render->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      tmlp::cli::run_train(load_config(config_path, out_dir, seed));
    } else if (eval->parsed()) {
      tmlp::cli::run_eval(load_config(config_path, out_dir, seed), model_path);
    } else if (probe->parsed()) {
      tmlp::cli::run_probe(load_config(config_path, out_dir, seed));
    } else if (truncate->parsed()) {
      tmlp::cli::run_truncate(model_path, keep_layers, out_path);
    } else if (render->parsed()) {
      tmlp::cli::run_render(model_path, levels, resolution,
                            out_dir.empty() ? "out" : out_dir);
    }
  } catch (const tmlp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const tmlp::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const tmlp::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const tmlp::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const tmlp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
