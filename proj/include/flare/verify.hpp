#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flare/bounds.hpp"
#include "flare/config.hpp"
#include "flare/engine.hpp"
#include "flare/model.hpp"
#include "flare/orchestrator.hpp"
#include "flare/results.hpp"
#include "flare/sparse.hpp"
#include "flare/strategy.hpp"

namespace flare {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace verify_detail {

inline double rel_err(const ParamVector& a, const ParamVector& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

// Central finite differences of a scalar function of w.
inline ParamVector fd_grad(const std::function<double(const ParamVector&)>& f,
                           const ParamVector& w, double h = 1e-5) {
  ParamVector g(w.size());
  ParamVector x(w);
  for (std::size_t j = 0; j < w.size(); ++j) {
    double keep = x[j];
    x[j] = keep + h;
    double up = f(x);
    x[j] = keep - h;
    double down = f(x);
    x[j] = keep;
    g[j] = (up - down) / (2 * h);
  }
  return g;
}

inline Dataset tiny_classification(int n, int f, int classes, SeededRng& rng) {
  Dataset d;
  d.n = n;
  d.f = f;
  d.classes = classes;
  d.features.resize(std::size_t(n) * f);
  d.labels.resize(n);
  for (auto& v : d.features) v = rng.next_normal();
  for (int i = 0; i < n; ++i) d.labels[i] = int(rng.next_u64() % classes);
  return d;
}

// Tie-break deliberately flipped to the higher index: used to prove the
// determinism check can catch a faulty compressor.
inline std::pair<SparseUpdate, ParamVector> top_k_split_bad_ties(
    const ParamVector& v, std::size_t k) {
  const std::size_t d = v.size();
  std::vector<uint32_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0u);
  auto larger = [&](uint32_t a, uint32_t b) {
    double fa = std::fabs(v[a]), fb = std::fabs(v[b]);
    if (fa != fb) return fa > fb;
    return a > b;  // fault
  };
  std::nth_element(idx.begin(), idx.begin() + k - 1, idx.end(), larger);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  SparseUpdate kept;
  kept.dim = uint32_t(d);
  ParamVector residual(v);
  for (uint32_t i : idx) {
    kept.entries.emplace_back(i, v[i]);
    residual[i] = 0.0;
  }
  return {kept, residual};
}

template <class TopK>
bool tie_break_check(TopK&& topk) {
  // Equal magnitudes must resolve toward the lower index.
  ParamVector v = {1.0, -1.0, 1.0};
  auto [kept, residual] = topk(v, 2);
  return kept.entries.size() == 2 && kept.entries[0].first == 0 &&
         kept.entries[1].first == 1;
}

inline RunConfig lattice_config(StrategyKind kind, double r_percent,
                                double tau0) {
  RunConfig rc;
  rc.n_clients = 5;
  rc.rounds = 20;
  rc.epochs = 2;
  rc.batch = 0;
  rc.sparsity = SparsityPolicy(r_percent);
  rc.gamma = 0.1;
  rc.seed = 7;
  rc.eval_every = 5;
  QuadraticSpec q;
  q.h_diag.assign(40, 1.0);
  q.w_star.assign(40, 0.0);
  q.noise_sigma = 0.5;
  rc.model = q;
  rc.strategy.kind = kind;
  rc.strategy.flare.tau0 = tau0;
  rc.strategy.flare.decay_c = 1.1;
  rc.strategy.flare.norm = PenaltyNorm::L2;
  return rc;
}

}  // namespace verify_detail

// The release-gate invariant suite: compressor properties, codec
// round-trips, gradient checks, reduction lattice, conservation and a
// mutation-style self-test.
inline std::vector<CheckResult> run_verification() {
  using namespace verify_detail;
  std::vector<CheckResult> results;
  auto record = [&](const std::string& name, bool pass,
                 const std::string& detail = "") {
    results.push_back({name, pass, detail});
  };

  SeededRng rng(2024, 0);

  // Compressor: reconstruction, contraction, monotonicity.
  {
    bool recon = true, contract = true, mono = true;
    for (int trial = 0; trial < 200 && (recon && contract && mono); ++trial) {
      std::size_t d = 1 + rng.next_u64() % 64;
      ParamVector v = gaussian_vector(rng, d, 1.0);
      std::size_t k = 1 + rng.next_u64() % d;
      auto [kept, residual] = top_k_split(v, k);
      ParamVector sum = add(kept.densify(), residual);
      for (std::size_t j = 0; j < d; ++j)
        if (sum[j] != v[j]) recon = false;
      auto chk = delta_approx_check(v, k);
      if (!chk.holds && !chk.degenerate) contract = false;
      double min_kept = 1e300, max_res = 0;
      for (const auto& [i, x] : kept.entries)
        min_kept = std::min(min_kept, std::fabs(x));
      for (double x : residual) max_res = std::max(max_res, std::fabs(x));
      if (min_kept + 1e-300 < max_res) mono = false;
    }
    record("topk.reconstruction_bitwise", recon);
    record("topk.delta_contraction", contract);
    record("topk.magnitude_monotonicity", mono);
  }

  // Tie-break determinism, plus proof the check catches a flipped rule.
  record("topk.tie_break_low_index",
      tie_break_check([](const ParamVector& v, std::size_t k) {
        return top_k_split(v, k);
      }));
  record("topk.tie_break_check_catches_fault",
      !tie_break_check([](const ParamVector& v, std::size_t k) {
        return top_k_split_bad_ties(v, k);
      }),
      "flipped tie-break must fail the determinism check");

  // Mask idempotence and binary output.
  {
    bool ok = true;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      std::size_t d = 1 + rng.next_u64() % 33;
      ParamVector a = gaussian_vector(rng, d, 2.0);
      for (auto policy : {MaskPolicy::fixed(0.0), MaskPolicy::median(),
                          MaskPolicy::mean(), MaskPolicy::fixed(0.5)}) {
        ParamVector m = build_mask(a, policy);
        for (double x : m)
          if (x != 0.0 && x != 1.0) ok = false;
        if (build_mask(m, policy) != build_mask(build_mask(m, policy), policy))
          ok = false;
      }
    }
    record("mask.idempotent_binary", ok);
  }

  // Codec round-trip and injectivity spot checks.
  {
    bool ok = true;
    for (int trial = 0; trial < 200 && ok; ++trial) {
      std::size_t d = 1 + rng.next_u64() % 100;
      std::size_t k = 1 + rng.next_u64() % d;
      ParamVector v = gaussian_vector(rng, d, 1.0);
      SparseUpdate u = top_k_split(v, k).first;
      u.round = uint32_t(rng.next_u64());
      u.client_id = uint32_t(rng.next_u64() % 1000);
      if (decode(encode(u)) != u) ok = false;
    }
    try {
      std::vector<uint8_t> bad = {'F', 'L', 'S', 'U', 0x01, 1, 0, 0};
      decode(bad);
      ok = false;
    } catch (const CodecError&) {
    }
    record("codec.round_trip", ok);
  }

  // Gradient checks against central finite differences.
  {
    SeededRng grng(99, 1);
    Dataset batch = tiny_classification(30, 6, 3, grng);
    QuadraticSpec q;
    q.h_diag = {1.0, 2.0, 0.5, 3.0, 1.5};
    q.w_star = {0.1, -0.2, 0.3, 0.0, -1.0};
    std::vector<std::pair<std::string, ModelSpec>> specs = {
        {"quadratic", q},
        {"logistic", LogisticSpec{6, 3}},
        {"mlp", MlpSpec{{6, 5, 3}}},
    };
    for (auto& [name, spec] : specs) {
      double worst = 0;
      for (int probe = 0; probe < 20; ++probe) {
        ParamVector w = gaussian_vector(grng, param_dim(spec), 0.7);
        SeededRng no_noise(0, 0);
        ParamVector g = grad(spec, w, batch, no_noise);
        ParamVector fd = fd_grad(
            [&](const ParamVector& x) { return loss(spec, x, batch); }, w);
        worst = std::max(worst, rel_err(fd, g));
      }
      record("grad." + name, worst < 1e-5, "max rel err " + format_double(worst));
    }

    // FLARE L2 penalty and FedProx proximal term.
    double worst_l2 = 0, worst_l1 = 0, worst_prox = 0;
    for (int probe = 0; probe < 20; ++probe) {
      std::size_t d = 8;
      ParamVector w = gaussian_vector(grng, d, 1.0);
      ParamVector anchor = gaussian_vector(grng, d, 1.0);
      ParamVector mask(d);
      for (auto& m : mask) m = double(grng.next_u64() % 2);
      double tau = 0.7;
      ParamVector g2 = penalty_grad(w, anchor, mask, tau, PenaltyNorm::L2);
      ParamVector fd2 = fd_grad(
          [&](const ParamVector& x) {
            double acc = 0;
            for (std::size_t j = 0; j < d; ++j)
              acc += 0.5 * tau * mask[j] * (x[j] - anchor[j]) * (x[j] - anchor[j]);
            return acc;
          },
          w);
      for (std::size_t j = 0; j < d; ++j)
        worst_l2 = std::max(worst_l2, std::fabs(g2[j] - fd2[j]) /
                                          std::max(1.0, std::fabs(fd2[j])));

      // L1 only away from kinks.
      ParamVector w1(w);
      for (std::size_t j = 0; j < d; ++j)
        if (std::fabs(w1[j] - anchor[j]) <= 0.1)
          w1[j] = anchor[j] + (w1[j] >= anchor[j] ? 0.2 : -0.2);
      ParamVector g1 = penalty_grad(w1, anchor, mask, tau, PenaltyNorm::L1);
      ParamVector fd1 = fd_grad(
          [&](const ParamVector& x) {
            double acc = 0;
            for (std::size_t j = 0; j < d; ++j)
              acc += tau * mask[j] * std::fabs(x[j] - anchor[j]);
            return acc;
          },
          w1);
      for (std::size_t j = 0; j < d; ++j)
        worst_l1 = std::max(worst_l1, std::fabs(g1[j] - fd1[j]) /
                                          std::max(1.0, std::fabs(fd1[j])));

      double mu = 0.3;
      LogisticSpec lr{6, 3};
      ParamVector wl = gaussian_vector(grng, param_dim(lr), 0.5);
      ParamVector wg = gaussian_vector(grng, param_dim(lr), 0.5);
      SeededRng no_noise(0, 0);
      ParamVector gp = grad(lr, wl, batch, no_noise);
      for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += mu * (wl[j] - wg[j]);
      ParamVector fdp = fd_grad(
          [&](const ParamVector& x) {
            double acc = loss(lr, x, batch);
            for (std::size_t j = 0; j < x.size(); ++j)
              acc += 0.5 * mu * (x[j] - wg[j]) * (x[j] - wg[j]);
            return acc;
          },
          wl);
      worst_prox = std::max(worst_prox, rel_err(fdp, gp));
    }
    record("grad.flare_penalty_l2", worst_l2 < 1e-5);
    record("grad.flare_penalty_l1_off_kink", worst_l1 < 1e-5);
    record("grad.fedprox_proximal", worst_prox < 1e-5);
  }

  // Reduction lattice (bitwise under fixed seed).
  {
    auto final_w = [](const RunConfig& rc) {
      Dataset train = synthetic_empty(100);
      Dataset test = synthetic_empty(1);
      return run(rc, train, test).final_weights;
    };
    ParamVector ec = final_w(lattice_config(StrategyKind::ErrorCorrection, 10, 0));
    ParamVector fl = final_w(lattice_config(StrategyKind::Flare, 10, 0.0));
    auto prox_cfg = lattice_config(StrategyKind::FedProxEf, 10, 0);
    prox_cfg.strategy.fedprox_mu = 0.0;
    ParamVector prox = final_w(prox_cfg);
    ParamVector ec_full =
        final_w(lattice_config(StrategyKind::ErrorCorrection, 100, 0));
    ParamVector avg = final_w(lattice_config(StrategyKind::FedAvgDense, 100, 0));
    record("lattice.flare_tau0_is_ec", fl == ec);
    record("lattice.fedprox_mu0_is_ec", prox == ec);
    record("lattice.ec_full_is_fedavg", ec_full == avg);

    auto sgd_cfg = lattice_config(StrategyKind::FedSgdDense, 100, 0);
    auto ef_cfg = lattice_config(StrategyKind::Ef21, 100, 0);
    ef_cfg.epochs = 1;
    ParamVector sgd = final_w(sgd_cfg);
    ParamVector ef = final_w(ef_cfg);
    record("lattice.ef21_full_is_dense_gd", rel_err(ef, sgd) < 1e-12,
        "rel err " + format_double(rel_err(ef, sgd)));
  }

  // Conservation: sum of transmitted + accumulator == sum of deltas.
  {
    SeededRng crng(5, 5);
    QuadraticSpec q;
    q.h_diag.assign(30, 1.0);
    q.w_star = gaussian_vector(crng, 30, 1.0);
    q.noise_sigma = 1.0;
    ModelSpec spec = q;
    ClientState state = ClientState::make(30, 0, synthetic_empty(10), 0.3);
    FlareParams params;
    params.tau0 = 0.3;
    params.norm = PenaltyNorm::L2;
    ParamVector w_global(30, 0.0);
    ParamVector sent_sum(30, 0.0), delta_sum(30, 0.0);
    for (int round = 1; round <= 40; ++round) {
      SeededRng rr(11, substream(1, round));
      ParamVector w_new =
          client_update(state, w_global, params, spec, 2, 0, 0.05, rr);
      axpy_inplace(1.0, sub(w_new, w_global), delta_sum);
      SparseUpdate s = round_finalize(state, w_global, w_new, 3, round);
      axpy_inplace(1.0, s.densify(), sent_sum);
      w_global = aggregate(w_global, {s});
      state.tau_k = tau_step(state.tau_k, 1.05);
    }
    ParamVector lhs = add(sent_sum, state.accumulator);
    double err = rel_err(lhs, delta_sum);
    record("conservation.sent_plus_accumulator", err < 1e-12,
        "rel err " + format_double(err));
  }

  // Determinism end to end.
  {
    auto rc = lattice_config(StrategyKind::Flare, 10, 0.2);
    Dataset train = synthetic_empty(100);
    Dataset test = synthetic_empty(1);
    std::string a = metrics_csv(run(rc, train, test).metrics);
    rc.workers = 3;
    std::string b = metrics_csv(run(rc, train, test).metrics);
    record("determinism.metrics_csv_bytes", a == b);
  }

  // Theory closed forms: parabola roots and vertex.
  {
    double gamma = 0.05, delta = 0.1;
    bool ok = std::fabs(p_tau(gamma, delta, 0.0)) < 1e-15 &&
              std::fabs(p_tau(gamma, delta, 2.0 / gamma)) < 1e-9;
    double vmax = p_tau(gamma, delta, 1.0 / gamma);
    ok = ok && std::fabs(vmax - (2.0 - delta) / delta) <
                   1e-12 * ((2.0 - delta) / delta);
    ok = ok && p_tau(gamma, delta, 0.5 / gamma) > 0 &&
         p_tau(gamma, delta, 2.1 / gamma) < 0;
    record("bounds.p_tau_parabola", ok);
  }

  return results;
}

}  // namespace flare
