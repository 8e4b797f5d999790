#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "coopsense/detection.hpp"
#include "coopsense/harness.hpp"
#include "coopsense/point_cloud_io.hpp"

namespace hs = coopsense::harness;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

std::filesystem::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("COOPSENSE_OUT"); env && *env) return env;
  return ".";
}

hs::ScenarioConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  hs::ScenarioConfig cfg = hs::load_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative perception and max-pressure signal control simulator"};
  app.require_subcommand(1);

  std::string config_path, out_flag, grid, cloud_path, log_path;
  std::optional<std::uint64_t> seed;
  int seeds = 1, workers = 0;

  auto* run = app.add_subcommand("run", "simulate one scenario");
  run->add_option("config", config_path, "scenario file")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_flag, "output directory (default $COOPSENSE_OUT or .)");

  auto* sweep = app.add_subcommand("sweep", "run a parameter grid");
  sweep->add_option("config", config_path, "base scenario file")->required();
  sweep->add_option("--grid", grid, "\"key=v1,v2;key2=v3\"");
  sweep->add_option("--seeds", seeds, "seeds per cell")->check(CLI::PositiveNumber);
  sweep->add_option("--workers", workers, "worker threads (0 = all cores)");
  sweep->add_option("--seed", seed, "first seed");
  sweep->add_option("--out", out_flag, "output directory (default $COOPSENSE_OUT or .)");

  auto* detect = app.add_subcommand("detect", "detect vehicles in one point cloud");
  detect->add_option("cloud", cloud_path, "point cloud file")->required();
  detect->add_option("--seed", seed, "RANSAC seed");

  auto* eval = app.add_subcommand("eval", "recompute metrics from a scenario log");
  eval->add_option("log", log_path, "scenario log")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      const auto cfg = load(config_path, seed);
      const auto dir = output_dir(out_flag);
      const auto result = hs::run(cfg, dir);
      coopsense::metrics::write_report_header(std::cout);
      coopsense::metrics::write_report_row(std::cout, result.row);
    } else if (*sweep) {
      const auto cfg = load(config_path, seed);
      const auto cells = hs::sweep(cfg, grid, seeds, workers);
      const auto dir = output_dir(out_flag);
      std::filesystem::create_directories(dir);
      const auto path = dir / (cfg.name + ".sweep.txt");
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path.string());
      hs::write_sweep_report(out, cells);
      hs::write_sweep_report(std::cout, cells);
    } else if (*detect) {
      const auto cloud = coopsense::io::load_cloud(cloud_path);
      const auto dets = coopsense::detection::detect(cloud, {}, seed.value_or(1));
      fmt::print("# frame sensor cx cy cz ex ey ez score\n");
      for (const auto& d : dets)
        fmt::print("0 {} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} {:.4f} {}\n", cloud.frame_id,
                   d.box.cx, d.box.cy, d.box.cz, d.box.ex, d.box.ey, d.box.ez, d.score);
    } else if (*eval) {
      std::ifstream in(log_path);
      if (!in) throw std::runtime_error("cannot open " + log_path);
      const auto result = hs::evaluate_log(in);
      coopsense::metrics::write_report_header(std::cout);
      coopsense::metrics::write_report_row(std::cout, result.row);
    }
  } catch (const hs::ConfigError& e) {
    fmt::print(std::cerr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kRuntimeError;
  }
  return kOk;
}
