#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flare/dataset.hpp"
#include "flare/errors.hpp"
#include "flare/orchestrator.hpp"

namespace flare {

// Shortest round-trip decimal form, so normalization is idempotent.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

inline std::string format_u64(uint64_t v) { return std::to_string(v); }

// Flat key=value configuration. Unknown keys are rejected; every violation
// is reported in one error.
class Config {
 public:
  enum Kind { Str, Int, Real, Bool, Enum };

  struct KeySpec {
    Kind kind;
    bool required;
    std::string def;                  // default (normalized form)
    std::vector<std::string> values;  // Enum choices; Int/Str specials
  };

  static const std::map<std::string, KeySpec>& schema() {
    static const std::map<std::string, KeySpec> s = {
        {"model.kind", {Enum, true, "", {"quadratic", "logistic", "mlp"}}},
        {"model.width", {Str, false, "64,64", {}}},
        {"model.noise_sigma", {Real, false, "0", {}}},
        {"data.source", {Enum, false, "synthetic", {"synthetic", "idx"}}},
        {"data.path", {Str, false, "", {}}},
        {"data.partition",
         {Enum, false, "iid", {"iid", "label_imbalance"}}},
        {"data.imbalance_level", {Int, false, "2", {}}},
        {"data.allow_label_overlap", {Bool, false, "false", {}}},
        {"data.train_n", {Int, false, "6000", {}}},
        {"data.test_n", {Int, false, "1000", {}}},
        {"run.n_clients", {Int, true, "", {}}},
        {"run.rounds", {Int, true, "", {}}},
        {"run.epochs", {Int, false, "1", {}}},
        {"run.batch", {Str, false, "full", {}}},  // integer or "full"
        {"run.gamma", {Real, true, "", {}}},
        {"run.availability", {Str, false, "all", {}}},  // integer or "all"
        {"run.eval_every", {Int, false, "10", {}}},
        {"run.seed", {Int, false, "0", {}}},
        {"run.tau_global_round", {Bool, false, "true", {}}},
        {"sparsity.r_percent", {Real, true, "", {}}},
        {"strategy.kind",
         {Enum, true, "",
          {"flare", "ec", "ef21", "fedprox_ef", "fedavg", "fedsgd"}}},
        {"flare.tau0", {Real, false, "0.5", {}}},
        {"flare.c", {Real, false, "1", {}}},
        {"flare.p", {Str, false, "inf", {}}},  // integer or "inf"
        {"flare.norm", {Enum, false, "l1", {"l1", "l2"}}},
        {"flare.mask", {Str, false, "zero", {}}},  // zero|median|mean|fixed:<x>
        {"fedprox.mu", {Real, false, "0.01", {}}},
        {"ef21.server_gamma", {Str, false, "auto", {}}},  // real or "auto"
        {"ef21.per_step", {Bool, false, "false", {}}},
        {"aggregate.divide_by_n", {Bool, false, "false", {}}},
        {"output.dir", {Str, false, "out", {}}},
    };
    return s;
  }

  static Config parse_text(const std::string& text) {
    Config cfg;
    std::vector<std::string> errors;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto eq = t.find('=');
      if (eq == std::string::npos) {
        errors.push_back("line " + std::to_string(lineno) + ": expected key=value");
        continue;
      }
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      auto it = schema().find(key);
      if (it == schema().end()) {
        errors.push_back("unknown key: " + key);
        continue;
      }
      std::string norm_err;
      std::string norm = normalize_value(key, it->second, val, norm_err);
      if (!norm_err.empty()) {
        errors.push_back(norm_err);
        continue;
      }
      cfg.values_[key] = norm;
    }
    for (const auto& [key, ks] : schema()) {
      if (cfg.values_.count(key)) continue;
      if (ks.required)
        errors.push_back("missing required key: " + key);
      else
        cfg.values_[key] = ks.def;
    }
    if (!errors.empty()) {
      std::string all = "configuration errors:";
      for (const auto& e : errors) all += "\n  - " + e;
      throw ConfigError(all);
    }
    return cfg;
  }

  // Canonical text form: sorted keys, normalized values.
  std::string print() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  const std::string& get(const std::string& key) const {
    return values_.at(key);
  }
  long get_int(const std::string& key) const { return std::stol(get(key)); }
  double get_real(const std::string& key) const { return std::stod(get(key)); }
  bool get_bool(const std::string& key) const { return get(key) == "true"; }

  bool operator==(const Config&) const = default;

  void set(const std::string& key, const std::string& val) {
    auto it = schema().find(key);
    if (it == schema().end()) throw ConfigError("unknown key: " + key);
    std::string err;
    std::string norm = normalize_value(key, it->second, val, err);
    if (!err.empty()) throw ConfigError(err);
    values_[key] = norm;
  }

 private:
  static std::string normalize_value(const std::string& key, const KeySpec& ks,
                                     const std::string& val,
                                     std::string& err) {
    switch (ks.kind) {
      case Str:
        return val;
      case Int: {
        try {
          std::size_t pos;
          long v = std::stol(val, &pos);
          if (pos != val.size()) throw std::invalid_argument("");
          return std::to_string(v);
        } catch (...) {
          err = key + ": expected integer, got '" + val + "'";
          return "";
        }
      }
      case Real: {
        try {
          std::size_t pos;
          double v = std::stod(val, &pos);
          if (pos != val.size()) throw std::invalid_argument("");
          return format_double(v);
        } catch (...) {
          err = key + ": expected number, got '" + val + "'";
          return "";
        }
      }
      case Bool: {
        if (val == "true" || val == "1" || val == "yes") return "true";
        if (val == "false" || val == "0" || val == "no") return "false";
        err = key + ": expected boolean, got '" + val + "'";
        return "";
      }
      case Enum: {
        for (const auto& c : ks.values)
          if (val == c) return val;
        err = key + ": invalid value '" + val + "'";
        return "";
      }
    }
    return val;
  }

  std::map<std::string, std::string> values_;
};

// ---- Config -> experiment --------------------------------------------

struct Experiment {
  RunConfig run;
  Dataset train;
  Dataset test;
  std::string output_dir;
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace detail

inline StrategyKind strategy_kind_from(const std::string& s) {
  if (s == "flare") return StrategyKind::Flare;
  if (s == "ec") return StrategyKind::ErrorCorrection;
  if (s == "ef21") return StrategyKind::Ef21;
  if (s == "fedprox_ef") return StrategyKind::FedProxEf;
  if (s == "fedavg") return StrategyKind::FedAvgDense;
  if (s == "fedsgd") return StrategyKind::FedSgdDense;
  throw ConfigError("unknown strategy: " + s);
}

inline MaskPolicy mask_policy_from(const std::string& s) {
  if (s == "zero") return MaskPolicy::fixed(0.0);
  if (s == "median") return MaskPolicy::median();
  if (s == "mean") return MaskPolicy::mean();
  if (s.rfind("fixed:", 0) == 0) return MaskPolicy::fixed(std::stod(s.substr(6)));
  throw ConfigError("flare.mask: invalid value '" + s + "'");
}

inline Experiment build_experiment(const Config& cfg) {
  Experiment ex;
  RunConfig& rc = ex.run;

  rc.n_clients = int(cfg.get_int("run.n_clients"));
  rc.rounds = int(cfg.get_int("run.rounds"));
  rc.epochs = int(cfg.get_int("run.epochs"));
  rc.batch = cfg.get("run.batch") == "full" ? 0 : std::stoi(cfg.get("run.batch"));
  rc.gamma = cfg.get_real("run.gamma");
  rc.sparsity = SparsityPolicy(cfg.get_real("sparsity.r_percent"));
  rc.availability = cfg.get("run.availability") == "all"
                        ? 0
                        : std::stoi(cfg.get("run.availability"));
  rc.eval_every = int(cfg.get_int("run.eval_every"));
  rc.seed = uint64_t(cfg.get_int("run.seed"));
  rc.scheme = cfg.get("data.partition") == "iid" ? Partition::IID
                                                 : Partition::LabelImbalance;
  rc.imbalance_level = int(cfg.get_int("data.imbalance_level"));
  rc.allow_label_overlap = cfg.get_bool("data.allow_label_overlap");
  rc.divide_by_n = cfg.get_bool("aggregate.divide_by_n");
  rc.tau_global_round = cfg.get_bool("run.tau_global_round");

  rc.strategy.kind = strategy_kind_from(cfg.get("strategy.kind"));
  rc.strategy.flare.tau0 =
      rc.strategy.kind == StrategyKind::Flare ? cfg.get_real("flare.tau0") : 0.0;
  rc.strategy.flare.decay_c = cfg.get_real("flare.c");
  rc.strategy.flare.p_steps = cfg.get("flare.p") == "inf"
                                  ? kUnboundedSteps
                                  : std::stol(cfg.get("flare.p"));
  rc.strategy.flare.norm =
      cfg.get("flare.norm") == "l1" ? PenaltyNorm::L1 : PenaltyNorm::L2;
  rc.strategy.flare.mask = mask_policy_from(cfg.get("flare.mask"));
  rc.strategy.fedprox_mu = cfg.get_real("fedprox.mu");
  rc.strategy.ef21.server_gamma =
      cfg.get("ef21.server_gamma") == "auto"
          ? -1.0
          : std::stod(cfg.get("ef21.server_gamma"));
  rc.strategy.ef21.per_step = cfg.get_bool("ef21.per_step");

  // Data + model.
  const std::string kind = cfg.get("model.kind");
  const std::string source = cfg.get("data.source");
  if (kind == "quadratic") {
    int d = detail::parse_int_list(cfg.get("model.width")).at(0);
    QuadraticSpec q;
    q.h_diag.assign(d, 1.0);
    q.w_star.assign(d, 0.0);
    q.noise_sigma = cfg.get_real("model.noise_sigma");
    rc.model = q;
    ex.train = synthetic_empty(int(cfg.get_int("data.train_n")));
    ex.test = synthetic_empty(1);
  } else {
    Dataset all;
    if (source == "idx") {
      std::string dir = cfg.get("data.path");
      if (dir.empty()) throw ConfigError("data.path required for data.source=idx");
      auto train_img = parse_idx(read_file_bytes(dir + "/train-images.idx"));
      auto train_lab = parse_idx(read_file_bytes(dir + "/train-labels.idx"));
      auto test_img = parse_idx(read_file_bytes(dir + "/test-images.idx"));
      auto test_lab = parse_idx(read_file_bytes(dir + "/test-labels.idx"));
      ex.train = dataset_from_idx(train_img, train_lab);
      ex.test = dataset_from_idx(test_img, test_lab);
      int train_n = int(cfg.get_int("data.train_n"));
      if (train_n > 0 && train_n < ex.train.n) {
        std::vector<int> head(train_n);
        std::iota(head.begin(), head.end(), 0);
        ex.train = ex.train.select(head);
      }
    } else {
      SeededRng data_rng(rc.seed, substream(streams::kData));
      int train_n = int(cfg.get_int("data.train_n"));
      int test_n = int(cfg.get_int("data.test_n"));
      Dataset both = synthetic_digits(train_n + test_n, data_rng);
      std::vector<int> tr(train_n), te(test_n);
      std::iota(tr.begin(), tr.end(), 0);
      std::iota(te.begin(), te.end(), train_n);
      ex.train = both.select(tr);
      ex.test = both.select(te);
    }
    if (kind == "logistic") {
      rc.model = LogisticSpec{ex.train.f, ex.train.classes};
    } else {
      MlpSpec m;
      m.widths.push_back(ex.train.f);
      for (int h : detail::parse_int_list(cfg.get("model.width")))
        m.widths.push_back(h);
      m.widths.push_back(ex.train.classes);
      rc.model = m;
    }
  }

  ex.output_dir = cfg.get("output.dir");
  return ex;
}

}  // namespace flare
