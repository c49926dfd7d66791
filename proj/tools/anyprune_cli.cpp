// Command-line front end: run one config, sweep a directory of configs, or
// re-plot a finished run from its CSVs.
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "anyprune/alma.hpp"
#include "anyprune/errors.hpp"
#include "anyprune/io.hpp"

using namespace anyprune;

namespace {

constexpr int kOk = 0, kConfigError = 1, kRuntimeError = 2;

struct Outcome {
  std::string name;
  RunMetadata meta;
  RunSummary summary;
  std::string error;
  int code = kOk;
};

fs::path default_out(const RunConfig& c) { return fs::path("runs") / (c.name + "-" + run_id(c)); }

Outcome execute(const RunConfig& config, const fs::path& out) {
  Outcome o;
  o.name = config.name;
  try {
    const LoadedData data = load_source(config.dataset);
    const MetricsLog log = run(config, data.pool, data.test);
    write_run(config, log, out);
    o.meta = metadata_for(config, log);
    o.summary = summarize(log);
    for (const auto& e : log.events)
      if (e.kind == EventKind::warning) std::cerr << "warning: megabatch " << e.megabatch << ": " << e.detail << "\n";
  } catch (const ConfigError& e) {
    o.error = e.what();
    o.code = kConfigError;
  } catch (const std::exception& e) {
    o.error = e.what();
    o.code = kRuntimeError;
  }
  return o;
}

std::string describe(const Outcome& o) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-18s test_acc=%6.2f%%  CER=%-6zu gap=%+7.2f  kept=%zu/%zu  %.1fs",
                o.name.c_str(), o.meta.variant.c_str(), o.summary.final_test_accuracy, o.summary.cer,
                o.summary.final_gen_gap, o.summary.kept_trajectory.empty() ? 0 : o.summary.kept_trajectory.back(),
                o.summary.dense_count, o.meta.wall_seconds);
  return buf;
}

int cmd_run(const std::string& path, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig config;
  try {
    config = load_config(path);
    if (seed) config.override_seed(*seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  const fs::path dir = out.empty() ? default_out(config) : fs::path(out);
  const Outcome o = execute(config, dir);
  if (o.code != kOk) {
    std::cerr << (o.code == kConfigError ? "config error: " : "error: ") << o.error << "\n";
    return o.code;
  }
  std::cout << describe(o) << "\n" << "wrote " << dir.string() << "\n";
  return kOk;
}

int cmd_sweep(const std::string& dir, const std::string& out, std::size_t parallel) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cfg") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no .cfg files in " << dir << "\n";
    return kConfigError;
  }

  std::vector<RunConfig> configs;
  for (const auto& f : files) {
    try {
      configs.push_back(load_config(f));
    } catch (const ConfigError& e) {
      std::cerr << f.string() << ": config error: " << e.what() << "\n";
      return kConfigError;
    }
  }

  const fs::path root = out.empty() ? fs::path("runs") / fs::path(dir).filename() : fs::path(out);
  std::vector<Outcome> outcomes(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex print;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < configs.size();) {
      outcomes[i] = execute(configs[i], root / files[i].stem());
      std::lock_guard lock(print);
      if (outcomes[i].code == kOk) {
        std::cout << describe(outcomes[i]) << std::endl;
      } else {
        std::cerr << files[i].string() << ": " << outcomes[i].error << std::endl;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::clamp<std::size_t>(parallel, 1, configs.size()); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream table;
  table << "config,name,variant,pruner,seed,final_test_accuracy,cer,final_gen_gap,final_kept,dense_count,wall_seconds\n";
  int code = kOk;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const Outcome& o = outcomes[i];
    code = std::max(code, o.code);
    if (o.code != kOk) continue;
    table << files[i].stem().string() << ',' << o.name << ',' << o.meta.variant << ',' << o.meta.pruner << ','
          << configs[i].seed << ',' << format_number(o.summary.final_test_accuracy) << ',' << o.summary.cer << ','
          << format_number(o.summary.final_gen_gap) << ',' << o.summary.kept_trajectory.back() << ','
          << o.summary.dense_count << ',' << format_number(o.meta.wall_seconds) << '\n';
  }
  fs::create_directories(root);
  write_text(root / "sweep.csv", table.str());
  std::cout << "wrote " << (root / "sweep.csv").string() << "\n";
  return code;
}

int cmd_plot(const std::string& dir) {
  const fs::path d(dir);
  emit_svg(plot_data_from_csv(read_text(d / "curves.csv"), read_text(d / "megabatches.csv")), (d / "").string());
  std::cout << "wrote " << (d / "gap.svg").string() << ", cer.svg, layers.svg\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anytime progressive pruning over a megabatch stream"};
  app.require_subcommand(1);

  std::string config_path, out, sweep_dir, plot_dir;
  std::optional<std::uint64_t> seed;
  std::size_t parallel = 1;

  auto* run_cmd = app.add_subcommand("run", "Run one configuration");
  run_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out, "Output directory (default runs/<name>-<run id>)");
  run_cmd->add_option("--seed", seed, "Override the master seed");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run every .cfg file in a directory");
  sweep_cmd->add_option("config-dir", sweep_dir, "Directory of configs")->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--out", out, "Output root (default runs/<dir name>)");
  sweep_cmd->add_option("--parallel", parallel, "Concurrent runs")->check(CLI::PositiveNumber);

  auto* plot_cmd = app.add_subcommand("plot", "Regenerate SVG plots from a run directory");
  plot_cmd->add_option("run-dir", plot_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return cmd_run(config_path, out, seed);
    if (*sweep_cmd) return cmd_sweep(sweep_dir, out, parallel);
    return cmd_plot(plot_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
