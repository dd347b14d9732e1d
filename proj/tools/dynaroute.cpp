// dynaroute: run, sweep and validate-config front end.

#include "dynaroute/metrics.hpp"
#include "dynaroute/scenario.hpp"
#include "dynaroute/simulation.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int EXIT_CONFIG = 2;
constexpr int EXIT_COLLISION = 3;

dynaroute::ScenarioConfig config_or_default(const std::string& path) {
  return path.empty() ? dynaroute::ScenarioConfig{} : dynaroute::load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DynaRoute platoon control and VANET routing co-simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;
  std::string mode = "dynaroute";
  std::string out_dir = "out";
  int threads = 0;

  auto* run_cmd = app.add_subcommand("run", "Simulate one scenario and export CSV files");
  run_cmd->add_option("--config", config_path, "Scenario config file (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Random seed");
  run_cmd->add_option("--mode", mode, "dynaroute or baseline")->check(CLI::IsMember({"dynaroute", "baseline"}));
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--threads", threads, "GA evaluation threads (overrides config)");

  std::string param;
  std::vector<double> values;
  int n_seeds = 1;
  std::vector<std::string> modes{"dynaroute", "baseline"};
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep network load or packet interval over both modes");
  sweep_cmd->add_option("--param", param, "load or interval")->required()->check(CLI::IsMember({"load", "interval"}));
  sweep_cmd->add_option("--values", values, "Comma-separated parameter values")->required()->delimiter(',');
  sweep_cmd->add_option("--config", config_path, "Scenario config file (JSON); defaults when omitted")
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--seed", seed, "First seed");
  sweep_cmd->add_option("--seeds", n_seeds, "Seeds per point")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--modes", modes, "Modes to run")->delimiter(',')->check(
      CLI::IsMember({"dynaroute", "baseline"}));
  sweep_cmd->add_option("--out", out_dir, "Output directory");
  sweep_cmd->add_option("--threads", threads, "GA evaluation threads (overrides config)");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate-config", "Check a config file and print the resolved values");
  validate_cmd->add_option("file", validate_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : EXIT_CONFIG;
  }

  try {
    if (*validate_cmd) {
      const auto cfg = dynaroute::load_config(validate_path);
      std::cout << dynaroute::dump_config(cfg);
      return 0;
    }

    if (*run_cmd) {
      auto cfg = config_or_default(config_path);
      if (threads > 0) cfg.ga.threads = threads;
      const auto log = dynaroute::run(cfg, seed, dynaroute::parse_mode(mode));
      dynaroute::export_log(log, out_dir);
      std::cout << dynaroute::summary_csv(log);
      if (log.collision) {
        std::cerr << "collision detected at slot " << log.collision_slot << "\n";
        return EXIT_COLLISION;
      }
      return 0;
    }

    if (*sweep_cmd) {
      auto base = config_or_default(config_path);
      if (threads > 0) base.ga.threads = threads;
      std::vector<dynaroute::SweepRow> rows;
      bool any_collision = false;
      for (double value : values) {
        auto cfg = base;
        if (param == "load") {
          cfg.traffic.model = dynaroute::TrafficModel::Poisson;
          cfg.traffic.load = value;
        } else {
          cfg.traffic.model = dynaroute::TrafficModel::Periodic;
          cfg.traffic.interval = value;
        }
        cfg.validate();
        for (const auto& m : modes) {
          dynaroute::SweepRow row;
          row.param = param;
          row.value = value;
          row.mode = m;
          row.seeds = n_seeds;
          double delay_sum = 0;
          int delay_n = 0;
          for (int s = 0; s < n_seeds; ++s) {
            const auto log = dynaroute::run(cfg, seed + s, dynaroute::parse_mode(m));
            any_collision = any_collision || log.collision;
            row.throughput += dynaroute::compute_throughput(log) / n_seeds;
            if (auto d = dynaroute::compute_e2e_delay(log)) {
              delay_sum += *d;
              ++delay_n;
            }
            if (auto g = dynaroute::min_gap(log)) row.min_gap = row.min_gap ? std::min(*row.min_gap, *g) : *g;
            row.max_abs_a = std::max(row.max_abs_a, dynaroute::max_abs_acceleration(log, true));
          }
          if (delay_n > 0) row.mean_delay = delay_sum / delay_n;
          std::fprintf(stderr, "%s=%g %s: %.6g bit/s\n", param.c_str(), value, m.c_str(), row.throughput);
          rows.push_back(row);
        }
      }
      std::filesystem::create_directories(out_dir);
      const auto path = std::filesystem::path(out_dir) / ("sweep_" + param + ".csv");
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
      out << dynaroute::sweep_summary_csv(rows);
      std::cout << dynaroute::sweep_summary_csv(rows);
      return any_collision ? EXIT_COLLISION : 0;
    }
  } catch (const dynaroute::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return EXIT_CONFIG;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
