#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "flare/dataset.hpp"
#include "flare/engine.hpp"
#include "flare/model.hpp"
#include "flare/parallel.hpp"
#include "flare/rng.hpp"
#include "flare/sparse.hpp"
#include "flare/strategy.hpp"

namespace flare {

// Fixed stream ids; every random decision in a run hangs off (seed, one of
// these, ...), so nothing depends on evaluation or execution order.
namespace streams {
inline constexpr uint64_t kInitModel = 1;
inline constexpr uint64_t kPartition = 2;
inline constexpr uint64_t kSampling = 3;
inline constexpr uint64_t kClient = 4;
inline constexpr uint64_t kData = 5;
}  // namespace streams

struct RunConfig {
  int n_clients = 10;
  int rounds = 100;
  int epochs = 1;
  int batch = 0;  // 0 = FULL
  SparsityPolicy sparsity{100.0};
  double gamma = 0.1;
  StrategyConfig strategy;
  int availability = 0;  // 0 = ALL
  int eval_every = 10;
  uint64_t seed = 0;
  ModelSpec model;
  Partition::Scheme scheme = Partition::IID;
  int imbalance_level = 2;
  bool allow_label_overlap = false;
  // Partial-participation averaging: divide by participants (default) or
  // by the full client count.
  bool divide_by_n = false;
  // tau decays by global round index by default; when false, only on
  // rounds the client participates in.
  bool tau_global_round = true;
  int workers = 1;

  void validate() const {
    if (n_clients < 1) throw ConfigError("run: n_clients must be >= 1");
    if (rounds < 0) throw ConfigError("run: rounds must be >= 0");
    if (epochs < 1) throw ConfigError("run: epochs must be >= 1");
    if (eval_every < 1) throw ConfigError("run: eval_every must be >= 1");
    if (availability < 0 || availability > n_clients)
      throw ConfigError("run: availability must be in [1, n_clients] or ALL");
  }
};

struct MetricsRow {
  int round = 0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  uint64_t bytes_up_cumulative = 0;
  double achieved_sparsity = 0.0;
  uint64_t wall_ms = 0;
};

struct RunResult {
  std::vector<MetricsRow> metrics;
  ParamVector final_weights;
  uint64_t wall_ms_total = 0;
  int skipped_rounds = 0;
  int truncated_examples = 0;
};

inline ParamVector init_weights(const ModelSpec& spec, SeededRng& rng) {
  std::size_t d = param_dim(spec);
  if (std::holds_alternative<QuadraticSpec>(spec))
    return gaussian_vector(rng, d, 1.0);
  if (std::holds_alternative<LogisticSpec>(spec)) return ParamVector(d, 0.0);
  const auto& m = std::get<MlpSpec>(spec);
  ParamVector w(d, 0.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    std::size_t in = m.widths[l], out = m.widths[l + 1];
    double scale = 1.0 / std::sqrt(double(in));
    for (std::size_t i = 0; i < out * in; ++i)
      w[off + i] = scale * rng.next_normal();
    off += out * (in + 1);  // biases stay zero
  }
  return w;
}

// w_new = w_prev + mean over participants of densify(S^i); algebraically
// the average of (S^i + w_prev).
inline ParamVector aggregate(const ParamVector& w_prev,
                             const std::vector<SparseUpdate>& updates,
                             int divide_by = 0) {
  if (updates.empty())
    throw ParameterError("aggregate: empty participant set");
  ParamVector w(w_prev);
  double inv = 1.0 / double(divide_by > 0 ? divide_by : int(updates.size()));
  for (const auto& u : updates) {
    if (u.dim != w_prev.size())
      throw DimensionError("aggregate: update dim mismatch");
    for (const auto& [i, v] : u.entries) w[i] += inv * v;
  }
  return w;
}

// Uniform sample without replacement from the round-scoped stream, sorted
// ascending for a deterministic merge order.
inline std::vector<int> sample_participants(int n_clients, int availability,
                                            int round, uint64_t seed) {
  if (availability <= 0 || availability >= n_clients) {
    std::vector<int> all(n_clients);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  SeededRng rng(seed, substream(streams::kSampling, uint64_t(round)));
  std::vector<int> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < availability; ++i) {
    int j = i + int(rng.next_u64() % uint64_t(n_clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(availability);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline RunResult run(const RunConfig& cfg, const Dataset& train,
                     const Dataset& test) {
  cfg.validate();
  const std::size_t d = param_dim(cfg.model);
  const std::size_t k = cfg.sparsity.k_of(d);
  const StrategyKind kind = cfg.strategy.kind;
  const bool dense =
      kind == StrategyKind::FedAvgDense || kind == StrategyKind::FedSgdDense;
  const int epochs = kind == StrategyKind::FedSgdDense ? 1 : cfg.epochs;
  const int batch = kind == StrategyKind::FedSgdDense ? 0 : cfg.batch;

  auto t0 = std::chrono::steady_clock::now();

  SeededRng init_rng(cfg.seed, substream(streams::kInitModel));
  ParamVector w = init_weights(cfg.model, init_rng);

  SeededRng part_rng(cfg.seed, substream(streams::kPartition));
  Partition part =
      cfg.scheme == Partition::IID
          ? partition_iid(train, cfg.n_clients, part_rng)
          : partition_label_imbalance(train, cfg.n_clients,
                                      cfg.imbalance_level, part_rng,
                                      cfg.allow_label_overlap);

  std::vector<ClientRoundState> clients(cfg.n_clients);
  for (int c = 0; c < cfg.n_clients; ++c) {
    Dataset shard = train.f > 0 ? train.select(part.shard_indices(c))
                                : synthetic_empty(std::max(1, train.n));
    clients[c].core = ClientState::make(d, uint32_t(c), std::move(shard),
                                        cfg.strategy.flare.tau0);
  }

  ParamVector ef21_gbar;
  double ef21_server_gamma = cfg.strategy.ef21.server_gamma > 0
                                 ? cfg.strategy.ef21.server_gamma
                                 : cfg.gamma;
  if (kind == StrategyKind::Ef21) ef21_gbar.assign(d, 0.0);

  RunResult result;
  result.truncated_examples = part.truncated;

  uint64_t bytes_up = 0;
  double last_sparsity = 0.0;
  auto evaluate = [&](int round) {
    MetricsRow row;
    row.round = round;
    row.test_loss = loss(cfg.model, w, test);
    row.test_accuracy = accuracy(cfg.model, w, test);
    row.bytes_up_cumulative = bytes_up;
    row.achieved_sparsity = last_sparsity;
    // wall_ms stays 0 in the metrics stream so identical configs produce
    // identical bytes; real timings live in the run summary.
    result.metrics.push_back(row);
  };
  evaluate(0);

  for (int round = 1; round <= cfg.rounds; ++round) {
    auto participants =
        sample_participants(cfg.n_clients, cfg.availability, round, cfg.seed);
    if (participants.empty()) {
      ++result.skipped_rounds;
      continue;
    }

    std::vector<SparseUpdate> updates(participants.size());
    parallel_for(participants.size(), cfg.workers, [&](std::size_t p) {
      int c = participants[p];
      SeededRng rng(cfg.seed,
                    substream(streams::kClient, uint64_t(c), uint64_t(round)));
      ClientRoundState& client = clients[c];
      switch (kind) {
        case StrategyKind::Flare:
          updates[p] = flare_round(client.core, w, cfg.strategy.flare,
                                   cfg.model, epochs, batch, cfg.gamma, k, rng,
                                   uint32_t(round));
          break;
        case StrategyKind::ErrorCorrection:
          updates[p] = ec_round(client.core, w, cfg.model, epochs, batch,
                                cfg.gamma, k, rng, uint32_t(round));
          break;
        case StrategyKind::FedProxEf:
          updates[p] = fedprox_ef_round(client.core, w, cfg.model, epochs,
                                        batch, cfg.gamma, cfg.strategy.fedprox_mu,
                                        k, rng, uint32_t(round));
          break;
        case StrategyKind::Ef21:
          updates[p] = ef21_round(client, w, cfg.model, epochs, batch,
                                  cfg.gamma, k, cfg.strategy.ef21, rng,
                                  uint32_t(round));
          break;
        case StrategyKind::FedAvgDense:
        case StrategyKind::FedSgdDense:
          updates[p] = ec_round(client.core, w, cfg.model, epochs, batch,
                                cfg.gamma, d, rng, uint32_t(round));
          break;
      }
    });

    int divide_by = cfg.divide_by_n ? cfg.n_clients : 0;
    if (kind == StrategyKind::Ef21) {
      double inv = 1.0 / double(divide_by > 0 ? divide_by : int(updates.size()));
      for (const auto& u : updates)
        for (const auto& [i, v] : u.entries) ef21_gbar[i] += inv * v;
      axpy_inplace(-ef21_server_gamma, ef21_gbar, w);
    } else {
      w = aggregate(w, updates, divide_by);
    }

    // tau decay, round-indexed.
    if (cfg.strategy.flare.tau0 != 0.0) {
      if (cfg.tau_global_round) {
        for (auto& client : clients)
          client.core.tau_k =
              tau_step(client.core.tau_k, cfg.strategy.flare.decay_c);
      } else {
        for (int c : participants)
          clients[c].core.tau_k =
              tau_step(clients[c].core.tau_k, cfg.strategy.flare.decay_c);
      }
    }

    uint64_t entries_sent = 0;
    for (const auto& u : updates) entries_sent += u.entries.size();
    if (dense) {
      bytes_up += updates.size() * (kFlsuHeaderBytes + 8 * uint64_t(d));
    } else {
      for (const auto& u : updates) bytes_up += encoded_size(u.entries.size());
    }
    last_sparsity =
        1.0 - double(entries_sent) / (double(d) * double(updates.size()));

    if (round % cfg.eval_every == 0 || round == cfg.rounds) evaluate(round);
  }

  result.final_weights = w;
  result.wall_ms_total = uint64_t(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - t0)
          .count());
  return result;
}

}  // namespace flare
