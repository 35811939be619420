#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "colora/harness.hpp"
#include "colora/runtime.hpp"

namespace h = colora::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  bool with_eq = false;
};

CLI::App* add_command(CLI::App& parent, const std::string& name, const std::string& help, Common& opts,
                      bool takes_checkpoint) {
  CLI::App* sub = parent.add_subcommand(name, help);
  sub->add_option("--config", opts.config, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", opts.seed, "Override the configured seed");
  sub->add_option("--out", opts.out, "Override the output directory");
  if (takes_checkpoint) sub->add_option("--checkpoint", opts.checkpoint, "Checkpoint (default: <out>/model.ckp)");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  colora::tune_allocator();
  CLI::App app{"CoLoRA reduced models: data generation, training, online prediction and benchmarks"};
  app.require_subcommand(1);
  Common opts;

  using Run = std::function<h::RunResult(const h::ExperimentConfig&)>;
  std::vector<std::pair<CLI::App*, Run>> commands;
  auto ckpt = [&]() -> std::optional<std::filesystem::path> {
    if (opts.checkpoint) return std::filesystem::path(*opts.checkpoint);
    return std::nullopt;
  };

  commands.emplace_back(add_command(app, "generate", "Solve the full-order model for the train and test parameters", opts, false),
                        [](const auto& c) { return h::run_generate(c); });
  commands.emplace_back(add_command(app, "train", "Pre-train the hyper-network and field network", opts, false),
                        [](const auto& c) { return h::run_train(c); });
  commands.emplace_back(add_command(app, "forecast", "Data-driven prediction at the test parameters", opts, true),
                        [&](const auto& c) { return h::run_forecast(c, ckpt()); });
  commands.emplace_back(add_command(app, "integrate", "Equation-driven latent integration at the test parameters", opts, true),
                        [&](const auto& c) { return h::run_integrate(c, ckpt()); });
  commands.emplace_back(add_command(app, "landscape", "Least-squares residual over a 2D latent lattice", opts, true),
                        [&](const auto& c) { return h::run_landscape(c, ckpt()); });
  CLI::App* exp = add_command(app, "export-latents", "Latent trajectories as CSV", opts, true);
  exp->add_flag("--eq", opts.with_eq, "Also integrate the latent dynamics");
  commands.emplace_back(exp, [&](const auto& c) { return h::run_export_latents(c, ckpt(), opts.with_eq); });

  CLI::App* baseline = app.add_subcommand("baseline", "Reference methods");
  baseline->require_subcommand(1);
  commands.emplace_back(add_command(*baseline, "pod", "Linear projection error onto the training POD basis", opts, false),
                        [](const auto& c) { return h::run_baseline_pod(c); });
  commands.emplace_back(add_command(*baseline, "interp", "Piecewise-linear interpolation in the parameter", opts, false),
                        [](const auto& c) { return h::run_baseline_interp(c); });

  CLI::App* bench = app.add_subcommand("bench", "Experiments");
  bench->require_subcommand(1);
  commands.emplace_back(add_command(*bench, "nwidth", "Error against latent dimension, with POD", opts, false),
                        [](const auto& c) { return h::run_bench_nwidth(c); });
  commands.emplace_back(add_command(*bench, "speed", "Timing of full-order, equation-driven and data-driven runs", opts, true),
                        [&](const auto& c) { return h::run_bench_speed(c, ckpt()); });
  commands.emplace_back(add_command(*bench, "data-efficiency", "Error against the number of training trajectories", opts, false),
                        [](const auto& c) { return h::run_bench_data_efficiency(c); });
  commands.emplace_back(add_command(*bench, "conservation", "Mass drift with and without the constraint", opts, true),
                        [&](const auto& c) { return h::run_bench_conservation(c, ckpt()); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return 1;
  }

  h::ExperimentConfig cfg;
  try {
    cfg = h::load_config(opts.config);
    if (opts.seed) {
      cfg.seed = *opts.seed;
      cfg.train.seed = cfg.seed;
      cfg.ng.seed = cfg.seed;
    }
    if (opts.out) cfg.output = *opts.out;
  } catch (const colora::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  for (auto& [sub, run] : commands) {
    if (!sub->parsed()) continue;
    try {
      const h::RunResult r = run(cfg);
      for (const auto& f : r.files) std::cout << (std::filesystem::path(cfg.output) / f).string() << "\n";
      return 0;
    } catch (const h::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }
  std::cerr << app.help();
  return 1;
}
