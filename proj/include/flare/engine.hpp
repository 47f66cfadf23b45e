#pragma once

#include <cmath>
#include <cstdint>

#include "flare/dataset.hpp"
#include "flare/model.hpp"
#include "flare/sparse.hpp"
#include "flare/vec.hpp"

namespace flare {

enum class PenaltyNorm { L1, L2 };

inline constexpr long kUnboundedSteps = -1;  // penalty on every step

struct FlareParams {
  double tau0 = 0.0;
  double decay_c = 1.0;
  long p_steps = kUnboundedSteps;
  PenaltyNorm norm = PenaltyNorm::L1;
  MaskPolicy mask = MaskPolicy::fixed(0.0);
};

struct ClientState {
  ParamVector weights;
  ParamVector accumulator;
  double tau_k = 0.0;
  Dataset shard;
  uint32_t client_id = 0;

  static ClientState make(std::size_t d, uint32_t id, Dataset shard,
                          double tau0) {
    ClientState s;
    s.weights.assign(d, 0.0);
    s.accumulator.assign(d, 0.0);
    s.tau_k = tau0;
    s.shard = std::move(shard);
    s.client_id = id;
    return s;
  }
};

// Gradient of the masked pulling term toward anchor = w_k + A.
//   L1: tau * m_j * sign(w_j - anchor_j), sign(0) = 0
//   L2: tau * m_j * (w_j - anchor_j)
inline ParamVector penalty_grad(const ParamVector& w, const ParamVector& anchor,
                                const ParamVector& mask, double tau,
                                PenaltyNorm norm) {
  check_same_dim(w, anchor, "penalty_grad");
  check_same_dim(w, mask, "penalty_grad");
  ParamVector g(w.size(), 0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (mask[j] == 0.0) continue;
    double diff = w[j] - anchor[j];
    if (norm == PenaltyNorm::L1) {
      g[j] = tau * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
    } else {
      g[j] = tau * diff;
    }
  }
  return g;
}

// Plain mini-batch SGD from w0 with an optional per-step gradient add-on.
// extra(g, w, step) mutates the step gradient in place.
template <class ExtraGrad>
ParamVector local_sgd(const ParamVector& w0, const ModelSpec& spec,
                      const Dataset& shard, int epochs, int batch,
                      double gamma, SeededRng& rng, ExtraGrad&& extra) {
  if (epochs < 1) throw ParameterError("local_sgd: E must be >= 1");
  ParamVector w(w0);
  const bool full = batch == 0 || batch >= shard.n;
  long step = 0;
  for (int e = 0; e < epochs; ++e) {
    for (const auto& idx : epoch_batches(shard.n, batch, rng)) {
      Dataset sliced;
      if (!full && shard.f > 0) sliced = shard.select(idx);
      const Dataset& b = (full || shard.f == 0) ? shard : sliced;
      ParamVector g = grad(spec, w, b, rng);
      extra(g, w, step);
      axpy_inplace(-gamma, g, w);
      ++step;
    }
  }
  return w;
}

// Algorithm-1 ClientUpdate: mask, anchor and tau are fixed at round start;
// the penalty applies only while the in-round step counter is below p.
inline ParamVector client_update(ClientState& state,
                                 const ParamVector& w_global,
                                 const FlareParams& params,
                                 const ModelSpec& spec, int epochs, int batch,
                                 double gamma, SeededRng& rng) {
  state.weights = w_global;
  const double tau = state.tau_k;
  const bool active = tau != 0.0 && params.p_steps != 0;
  ParamVector mask, anchor;
  if (active) {
    mask = build_mask(state.accumulator, params.mask);
    anchor = add(w_global, state.accumulator);
  }
  ParamVector w = local_sgd(
      w_global, spec, state.shard, epochs, batch, gamma, rng,
      [&](ParamVector& g, const ParamVector& cur, long step) {
        if (!active) return;
        if (params.p_steps != kUnboundedSteps && step >= params.p_steps) return;
        axpy_inplace(1.0, penalty_grad(cur, anchor, mask, tau, params.norm), g);
      });
  state.weights = w;
  return w;
}

// Fold this round's delta into the accumulator, transmit its Top-K and
// keep the residual.
inline SparseUpdate round_finalize(ClientState& state,
                                   const ParamVector& w_global,
                                   const ParamVector& w_local_new,
                                   std::size_t k_top, uint32_t round = 0) {
  ParamVector delta = sub(w_local_new, w_global);
  axpy_inplace(1.0, delta, state.accumulator);
  auto [kept, residual] = top_k_split(state.accumulator, k_top);
  state.accumulator = std::move(residual);
  kept.round = round;
  kept.client_id = state.client_id;
  return kept;
}

// Exponential decay rule tau_{k+1} = tau_k / c.
inline double tau_step(double tau_k, double c) {
  if (c < 1.0) throw ConfigError("tau_step: decay constant must be >= 1");
  return tau_k / c;
}

}  // namespace flare
