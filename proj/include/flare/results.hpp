#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flare/bounds.hpp"
#include "flare/config.hpp"
#include "flare/orchestrator.hpp"

namespace flare {

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "round,test_loss,test_accuracy,bytes_up_cumulative,achieved_sparsity,"
      "wall_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.round) + "," + format_double(r.test_loss) + "," +
           format_double(r.test_accuracy) + "," +
           std::to_string(r.bytes_up_cumulative) + "," +
           format_double(r.achieved_sparsity) + "," +
           std::to_string(r.wall_ms) + "\n";
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << text;
}

inline nlohmann::json summary_json(const Config& cfg, const RunResult& result,
                                   const std::string& version) {
  nlohmann::json j;
  j["code_version"] = version;
  j["config"] = cfg.print();
  const MetricsRow& last = result.metrics.back();
  j["final"] = {{"round", last.round},
                {"test_loss", last.test_loss},
                {"test_accuracy", last.test_accuracy},
                {"bytes_up_cumulative", last.bytes_up_cumulative},
                {"achieved_sparsity", last.achieved_sparsity}};
  j["wall_ms_total"] = result.wall_ms_total;
  j["truncated_examples"] = result.truncated_examples;
  j["skipped_rounds"] = result.skipped_rounds;
  return j;
}

inline nlohmann::json bound_report_json(const BoundInputs& in,
                                        const BoundReport& r) {
  nlohmann::json j;
  j["inputs"] = {{"gamma", in.gamma}, {"delta", in.delta}, {"tau", in.tau},
                 {"sigma", in.sigma}, {"L", in.L},         {"T", in.T},
                 {"dist0", in.dist0}, {"gap0", in.gap0}};
  j["flare_convex"] = r.flare_convex;
  j["ec_convex"] = r.ec_convex;
  j["flare_nonconvex"] = r.flare_nonconvex;
  j["ec_nonconvex"] = r.ec_nonconvex;
  j["p_tau"] = r.p_tau;
  j["r_tau"] = r.r_tau;
  j["acc_bound"] = r.acc_bound;
  return j;
}

// Writes metrics.csv + summary.json into dir.
inline void write_bundle(const std::filesystem::path& dir, const Config& cfg,
                         const RunResult& result, const std::string& version) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "metrics.csv", metrics_csv(result.metrics));
  write_text_file(dir / "summary.json",
                  summary_json(cfg, result, version).dump(2) + "\n");
}

}  // namespace flare
