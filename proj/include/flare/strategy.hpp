#pragma once

#include <cstdint>

#include "flare/engine.hpp"
#include "flare/sparse.hpp"

namespace flare {

enum class StrategyKind {
  Flare,
  ErrorCorrection,
  Ef21,
  FedProxEf,
  FedAvgDense,
  FedSgdDense,
};

struct Ef21Options {
  double server_gamma = -1.0;  // < 0: use the client learning rate
  // Compress the per-round local update direction (default) or, at
  // E=1/full batch, the raw gradient at the broadcast model.
  bool per_step = false;
  bool dense_first_round = false;  // initialize g^i from a dense first message
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Flare;
  FlareParams flare;
  double fedprox_mu = 0.01;
  Ef21Options ef21;
};

// Per-client state for all strategies. The EF21 gradient estimate is only
// touched by ef21_round.
struct ClientRoundState {
  ClientState core;
  ParamVector ef21_estimate;
};

// Plain error correction: FLARE with the penalty disabled.
inline SparseUpdate ec_round(ClientState& state, const ParamVector& w_global,
                             const ModelSpec& spec, int epochs, int batch,
                             double gamma, std::size_t k_top, SeededRng& rng,
                             uint32_t round = 0) {
  FlareParams off;  // tau0 = 0
  ParamVector w = client_update(state, w_global, off, spec, epochs, batch,
                                gamma, rng);
  return round_finalize(state, w_global, w, k_top, round);
}

inline SparseUpdate flare_round(ClientState& state, const ParamVector& w_global,
                                const FlareParams& params,
                                const ModelSpec& spec, int epochs, int batch,
                                double gamma, std::size_t k_top,
                                SeededRng& rng, uint32_t round = 0) {
  ParamVector w = client_update(state, w_global, params, spec, epochs, batch,
                                gamma, rng);
  return round_finalize(state, w_global, w, k_top, round);
}

// FedProx proximal term mu*(w - w_global) on every local step, then the
// same delta/accumulator/Top-K pipeline as EC.
inline SparseUpdate fedprox_ef_round(ClientState& state,
                                     const ParamVector& w_global,
                                     const ModelSpec& spec, int epochs,
                                     int batch, double gamma, double mu,
                                     std::size_t k_top, SeededRng& rng,
                                     uint32_t round = 0) {
  if (mu < 0) throw ParameterError("fedprox_ef_round: mu must be >= 0");
  state.weights = w_global;
  ParamVector w = local_sgd(
      w_global, spec, state.shard, epochs, batch, gamma, rng,
      [&](ParamVector& g, const ParamVector& cur, long) {
        if (mu == 0.0) return;
        for (std::size_t j = 0; j < g.size(); ++j)
          g[j] += mu * (cur[j] - w_global[j]);
      });
  state.weights = w;
  return round_finalize(state, w_global, w, k_top, round);
}

// Plain local SGD with the full delta transmitted. FedSgdDense is the
// E=1, full-batch special case (enforced by the orchestrator).
inline ParamVector dense_round(ClientState& state, const ParamVector& w_global,
                               const ModelSpec& spec, int epochs, int batch,
                               double gamma, SeededRng& rng) {
  FlareParams off;
  ParamVector w = client_update(state, w_global, off, spec, epochs, batch,
                                gamma, rng);
  return sub(w, w_global);
}

// EF21 recursion: c = TopK(u - g^i), g^i += c, transmit c. u is the
// gradient surrogate: the per-round average local step direction, or the
// raw gradient at w_global in per-step mode.
inline SparseUpdate ef21_round(ClientRoundState& client,
                               const ParamVector& w_global,
                               const ModelSpec& spec, int epochs, int batch,
                               double gamma, std::size_t k_top,
                               const Ef21Options& opt, SeededRng& rng,
                               uint32_t round = 0) {
  ClientState& state = client.core;
  if (client.ef21_estimate.size() != w_global.size())
    client.ef21_estimate.assign(w_global.size(), 0.0);

  ParamVector u;
  long steps = 0;
  if (opt.per_step) {
    u = grad(spec, w_global, state.shard, rng);
    steps = 1;
    state.weights = axpy(-gamma, u, w_global);
  } else {
    FlareParams off;
    ParamVector w = client_update(state, w_global, off, spec, epochs, batch,
                                  gamma, rng);
    steps = long(epochs) *
            long(batch == 0 || batch >= state.shard.n
                     ? 1
                     : (state.shard.n + batch - 1) / batch);
    u = sub(w_global, w);
    for (double& v : u) v /= gamma * double(steps);
  }

  ParamVector diff = sub(u, client.ef21_estimate);
  SparseUpdate c;
  if (round == 1 && opt.dense_first_round) {
    c = top_k_split(diff, diff.size()).first;
  } else {
    c = top_k_split(diff, k_top).first;
  }
  for (const auto& [i, v] : c.entries) client.ef21_estimate[i] += v;
  c.round = round;
  c.client_id = state.client_id;
  return c;
}

}  // namespace flare
