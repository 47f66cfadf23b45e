// flare_sim: run / sweep / bounds / verify subcommands over the header
// library. Exit codes: 0 success, 1 runtime error, 2 configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flare/config.hpp"
#include "flare/results.hpp"
#include "flare/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw flare::ConfigError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string output_dir_for(const flare::Config& cfg) {
  if (const char* env = std::getenv("FLARE_SIM_OUT")) return env;
  return cfg.get("output.dir");
}

int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : int(n);
}

int do_run(const std::string& config_path, int workers) {
  flare::Config cfg;
  try {
    cfg = flare::Config::parse_text(slurp(config_path));
  } catch (const flare::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  int round_context = 0;
  try {
    flare::Experiment ex = flare::build_experiment(cfg);
    ex.run.workers = workers;
    flare::RunResult result = flare::run(ex.run, ex.train, ex.test);
    fs::path dir = output_dir_for(cfg);
    flare::write_bundle(dir, cfg, result, kVersion);
    std::cout << "wrote " << (dir / "metrics.csv").string() << "\n";
    return 0;
  } catch (const flare::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const flare::ParameterError& e) {
    // bad values surfaced while building the experiment
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error (round " << round_context << "): " << e.what()
              << "\n";
    return 1;
  }
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

std::vector<GridAxis> parse_grid(const std::vector<std::string>& specs) {
  std::vector<GridAxis> axes;
  for (const auto& s : specs) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw flare::ConfigError("grid spec must be key=v1,v2,...: " + s);
    GridAxis ax;
    ax.key = s.substr(0, eq);
    if (flare::Config::schema().find(ax.key) == flare::Config::schema().end())
      throw flare::ConfigError("grid over unknown key: " + ax.key);
    std::istringstream in(s.substr(eq + 1));
    std::string tok;
    while (std::getline(in, tok, ',')) ax.values.push_back(tok);
    if (ax.values.empty())
      throw flare::ConfigError("grid axis has no values: " + s);
    axes.push_back(std::move(ax));
  }
  return axes;
}

int do_sweep(const std::string& config_path,
             const std::vector<std::string>& grid_specs, int workers) {
  flare::Config base;
  std::vector<GridAxis> axes;
  try {
    base = flare::Config::parse_text(slurp(config_path));
    axes = parse_grid(grid_specs);
  } catch (const flare::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  fs::path root = output_dir_for(base);
  fs::create_directories(root);

  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.values.size();

  std::string index = "dir,status";
  for (const auto& ax : axes) index += "," + ax.key;
  index += "\n";

  int failures = 0;
  for (std::size_t point = 0; point < total; ++point) {
    flare::Config cfg = base;
    std::vector<std::string> assignment;
    std::size_t rem = point;
    std::string status = "ok";
    for (const auto& ax : axes) {
      const std::string& val = ax.values[rem % ax.values.size()];
      rem /= ax.values.size();
      assignment.push_back(val);
      try {
        cfg.set(ax.key, val);
      } catch (const flare::ConfigError& e) {
        status = "config_error";
        std::cerr << "point " << point << ": " << e.what() << "\n";
      }
    }
    std::string name = "point_" + std::to_string(point);
    fs::path dir = root / name;
    if (status == "ok") {
      try {
        cfg.set("output.dir", dir.string());
        flare::Experiment ex = flare::build_experiment(cfg);
        ex.run.workers = workers;
        flare::RunResult result = flare::run(ex.run, ex.train, ex.test);
        flare::write_bundle(dir, cfg, result, kVersion);
      } catch (const flare::ConfigError& e) {
        status = "config_error";
        std::cerr << "point " << point << ": " << e.what() << "\n";
      } catch (const flare::ParameterError& e) {
        status = "config_error";
        std::cerr << "point " << point << ": " << e.what() << "\n";
      } catch (const std::exception& e) {
        status = "runtime_error";
        std::cerr << "point " << point << ": " << e.what() << "\n";
      }
    }
    if (status != "ok") ++failures;
    index += name + "," + status;
    for (const auto& val : assignment) index += "," + val;
    index += "\n";
  }
  flare::write_text_file(root / "index.csv", index);
  std::cout << "wrote " << (root / "index.csv").string() << " (" << total
            << " points, " << failures << " failed)\n";
  return 0;
}

int do_bounds(const flare::BoundInputs& in, bool validate,
              const std::string& delta_sweep, const std::string& out_path,
              int workers) {
  try {
    nlohmann::json j = flare::bound_report_json(in, flare::bound_report(in));

    if (!delta_sweep.empty()) {
      // Ratio of the compression excess over the shared dense floor; the
      // closed form is (1+p)^{-1/2}.
      nlohmann::json rows = nlohmann::json::array();
      std::istringstream ss(delta_sweep);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        flare::BoundInputs di = in;
        di.delta = std::stod(tok);
        auto [fc, ec] = flare::convex_bounds(di);
        double base = di.dist0 * di.dist0 / (2.0 * di.gamma * double(di.T + 1)) +
                      di.gamma * di.sigma * di.sigma * 0.5;
        double p = flare::p_tau(di.gamma, di.delta, di.tau);
        rows.push_back({{"delta", di.delta},
                        {"p_tau", p},
                        {"excess_ratio", (fc - base) / (ec - base)},
                        {"sqrt_inv_1p", 1.0 / std::sqrt(1.0 + p)}});
      }
      j["delta_sweep"] = rows;
    }

    bool all_hold = true;
    if (validate) {
      flare::McTrajectoryConfig mc;
      mc.gamma = in.gamma;
      mc.delta = in.delta;
      mc.workers = workers;
      auto accs = flare::mc_validate_accumulator(
          mc, {0.0, in.tau > 0 ? in.tau : 0.5 / in.gamma});
      nlohmann::json ja = nlohmann::json::array();
      for (const auto& a : accs) {
        ja.push_back({{"tau", a.tau},
                      {"empirical_max", a.empirical_max},
                      {"bound", a.bound},
                      {"sigma_used", a.sigma_used},
                      {"holds", a.holds}});
        all_hold = all_hold && a.holds;
      }
      j["validate_accumulator"] = ja;

      flare::McTrajectoryConfig cv;
      cv.delta = in.delta;
      cv.T = 2000;
      cv.n_seeds = 200;
      cv.workers = workers;
      nlohmann::json jc = nlohmann::json::array();
      // tau follows the 1/(2 gamma) rule at the fitted step size.
      auto v0 = flare::mc_validate_convex(cv, 0.0);
      for (double tau : {0.0, 0.5 / v0.gamma}) {
        auto v = tau == 0.0 ? v0 : flare::mc_validate_convex(cv, tau);
        jc.push_back({{"tau", v.tau},
                      {"gamma", v.gamma},
                      {"empirical", v.empirical},
                      {"bound", v.bound},
                      {"sigma_used", v.sigma_used},
                      {"holds", v.holds}});
        all_hold = all_hold && v.holds;
      }
      j["validate_convex"] = jc;
    }

    std::string text = j.dump(2) + "\n";
    if (!out_path.empty()) {
      flare::write_text_file(out_path, text);
      std::cout << "wrote " << out_path << "\n";
    } else {
      std::cout << text;
    }
    return all_hold ? 0 : 1;
  } catch (const flare::ParameterError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}

int do_verify() {
  auto results = flare::run_verification();
  std::size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.name.size());
  int failed = 0;
  for (const auto& r : results) {
    std::cout << r.name << std::string(width - r.name.size() + 2, ' ')
              << (r.pass ? "pass" : "FAIL");
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
    std::cout << "\n";
    failed += !r.pass;
  }
  if (failed) {
    std::cerr << failed << " invariant(s) failed\n";
    return 1;
  }
  std::cout << results.size() << " invariants pass\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic federated learning simulator with sparse "
               "model-delta compression"};
  app.require_subcommand(1);

  int workers = default_workers();
  app.add_option("--workers", workers, "worker threads (1 = serial)")
      ->capture_default_str();

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "execute one configured run");
  run_cmd->add_option("config", config_path, "key=value config file")
      ->required();

  std::string sweep_config;
  std::vector<std::string> grid_specs;
  auto* sweep_cmd = app.add_subcommand("sweep", "grid of runs + index.csv");
  sweep_cmd->add_option("config", sweep_config, "base config file")->required();
  sweep_cmd
      ->add_option("--grid", grid_specs, "axis as key=v1,v2,... (repeatable)")
      ->required();

  flare::BoundInputs bi;
  bi.gamma = 0.01;
  bi.delta = 0.1;
  bi.tau = 50.0;  // 1/(2*gamma) at the default step size
  bi.sigma = 1.0;
  bi.L = 1.0;
  bi.T = 500;
  bi.dist0 = 1.0;
  bi.gap0 = 0.5;
  bool validate = false;
  std::string delta_sweep, bounds_out;
  auto* bounds_cmd =
      app.add_subcommand("bounds", "evaluate the convergence bounds");
  bounds_cmd->add_option("--gamma", bi.gamma)->capture_default_str();
  bounds_cmd->add_option("--delta", bi.delta)->capture_default_str();
  bounds_cmd->add_option("--tau", bi.tau)->capture_default_str();
  bounds_cmd->add_option("--sigma", bi.sigma)->capture_default_str();
  bounds_cmd->add_option("--smoothness", bi.L)->capture_default_str();
  bounds_cmd->add_option("--rounds", bi.T)->capture_default_str();
  bounds_cmd->add_option("--dist0", bi.dist0)->capture_default_str();
  bounds_cmd->add_option("--gap0", bi.gap0)->capture_default_str();
  bounds_cmd->add_flag("--validate", validate,
                       "Monte-Carlo check of the bounds");
  bounds_cmd->add_option("--sweep-delta", delta_sweep,
                         "comma list; emits bound-ratio rows");
  bounds_cmd->add_option("--out", bounds_out, "write JSON here instead of stdout");

  auto* verify_cmd =
      app.add_subcommand("verify", "run the full invariant suite");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) return do_run(config_path, workers);
  if (sweep_cmd->parsed()) return do_sweep(sweep_config, grid_specs, workers);
  if (bounds_cmd->parsed())
    return do_bounds(bi, validate, delta_sweep, bounds_out, workers);
  if (verify_cmd->parsed()) return do_verify();
  return 2;
}
