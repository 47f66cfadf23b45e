#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <variant>
#include <vector>

#include "flare/dataset.hpp"
#include "flare/errors.hpp"
#include "flare/rng.hpp"
#include "flare/vec.hpp"

namespace flare {

// F(w) = 1/2 (w - w*)^T H (w - w*) with diagonal H. Batch-independent;
// stochasticity comes from injected gradient noise with total second
// moment noise_sigma^2 (per-coordinate std noise_sigma / sqrt(d)).
struct QuadraticSpec {
  ParamVector h_diag;
  ParamVector w_star;
  double noise_sigma = 0.0;
};

// Multiclass logistic regression, softmax cross-entropy, no bias.
// w layout: class-major, w[c*f + j].
struct LogisticSpec {
  int features = 0;
  int classes = 2;
};

// Fully connected net, tanh hidden activations, softmax cross-entropy.
// widths = [in, hidden..., out]; params per layer: W (out x in) row-major,
// then bias (out).
struct MlpSpec {
  std::vector<int> widths;
};

using ModelSpec = std::variant<QuadraticSpec, LogisticSpec, MlpSpec>;

inline std::size_t param_dim(const ModelSpec& spec) {
  if (auto* q = std::get_if<QuadraticSpec>(&spec)) return q->h_diag.size();
  if (auto* l = std::get_if<LogisticSpec>(&spec))
    return std::size_t(l->features) * l->classes;
  const auto& m = std::get<MlpSpec>(spec);
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l)
    d += std::size_t(m.widths[l + 1]) * (m.widths[l] + 1);
  return d;
}

namespace detail {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRowMat = Eigen::Map<const RowMat>;

inline void softmax_rows(RowMat& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
}

// Forward pass for the MLP; activations[0] is the input batch.
inline std::vector<RowMat> mlp_forward(const MlpSpec& m, const ParamVector& w,
                                       const Dataset& batch) {
  std::vector<RowMat> acts;
  acts.emplace_back(MapRowMat(batch.features.data(), batch.n, batch.f));
  std::size_t off = 0;
  const std::size_t L = m.widths.size() - 1;
  for (std::size_t l = 0; l < L; ++l) {
    int in = m.widths[l], out = m.widths[l + 1];
    MapRowMat W(w.data() + off, out, in);
    Eigen::Map<const Eigen::VectorXd> b(w.data() + off + std::size_t(out) * in,
                                        out);
    off += std::size_t(out) * (in + 1);
    RowMat z = acts.back() * W.transpose();
    z.rowwise() += b.transpose();
    if (l + 1 < L) z = z.array().tanh();
    acts.push_back(std::move(z));
  }
  return acts;  // last entry holds logits
}

inline RowMat class_probs(const ModelSpec& spec, const ParamVector& w,
                          const Dataset& batch) {
  RowMat logits;
  if (auto* lr = std::get_if<LogisticSpec>(&spec)) {
    MapRowMat X(batch.features.data(), batch.n, batch.f);
    MapRowMat W(w.data(), lr->classes, lr->features);
    logits = X * W.transpose();
  } else {
    logits = mlp_forward(std::get<MlpSpec>(spec), w, batch).back();
  }
  softmax_rows(logits);
  return logits;
}

}  // namespace detail

inline double loss(const ModelSpec& spec, const ParamVector& w,
                   const Dataset& batch) {
  if (w.size() != param_dim(spec))
    throw DimensionError("loss: weight dimension mismatch");
  if (auto* q = std::get_if<QuadraticSpec>(&spec)) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      double e = w[j] - q->w_star[j];
      acc += q->h_diag[j] * e * e;
    }
    return 0.5 * acc;
  }
  if (batch.n == 0) throw DimensionError("loss: empty batch");
  detail::RowMat p = detail::class_probs(spec, w, batch);
  double acc = 0.0;
  for (int i = 0; i < batch.n; ++i)
    acc += -std::log(std::max(p(i, batch.labels[i]), 1e-300));
  return acc / batch.n;
}

// Mean per-example gradient. For Quadratic, adds the controlled noise
// realizing the bounded-second-moment stochastic gradient.
inline ParamVector grad(const ModelSpec& spec, const ParamVector& w,
                        const Dataset& batch, SeededRng& rng) {
  if (w.size() != param_dim(spec))
    throw DimensionError("grad: weight dimension mismatch");
  if (auto* q = std::get_if<QuadraticSpec>(&spec)) {
    std::size_t d = w.size();
    ParamVector g(d);
    for (std::size_t j = 0; j < d; ++j)
      g[j] = q->h_diag[j] * (w[j] - q->w_star[j]);
    if (q->noise_sigma > 0) {
      double per_coord = q->noise_sigma / std::sqrt(double(d));
      for (std::size_t j = 0; j < d; ++j)
        g[j] += per_coord * rng.next_normal();
    }
    return g;
  }
  if (batch.n == 0) throw DimensionError("grad: empty batch");

  detail::RowMat delta;  // (probs - onehot) / n
  ParamVector g(w.size(), 0.0);
  if (auto* lr = std::get_if<LogisticSpec>(&spec)) {
    delta = detail::class_probs(spec, w, batch);
    for (int i = 0; i < batch.n; ++i) delta(i, batch.labels[i]) -= 1.0;
    delta /= double(batch.n);
    detail::MapRowMat X(batch.features.data(), batch.n, batch.f);
    Eigen::Map<detail::RowMat> G(g.data(), lr->classes, lr->features);
    G = delta.transpose() * X;
    return g;
  }

  const auto& m = std::get<MlpSpec>(spec);
  auto acts = detail::mlp_forward(m, w, batch);
  delta = acts.back();
  detail::softmax_rows(delta);
  for (int i = 0; i < batch.n; ++i) delta(i, batch.labels[i]) -= 1.0;
  delta /= double(batch.n);

  const std::size_t L = m.widths.size() - 1;
  std::vector<std::size_t> offsets(L);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
      offsets[l] = off;
      off += std::size_t(m.widths[l + 1]) * (m.widths[l] + 1);
    }
  }
  for (std::size_t l = L; l-- > 0;) {
    int in = m.widths[l], out = m.widths[l + 1];
    Eigen::Map<detail::RowMat> GW(g.data() + offsets[l], out, in);
    Eigen::Map<Eigen::VectorXd> Gb(g.data() + offsets[l] + std::size_t(out) * in,
                                   out);
    GW = delta.transpose() * acts[l];
    Gb = delta.colwise().sum().transpose();
    if (l > 0) {
      detail::MapRowMat W(w.data() + offsets[l], out, in);
      detail::RowMat da = delta * W;
      delta = da.array() * (1.0 - acts[l].array().square());
    }
  }
  return g;
}

// Top-1 accuracy for classifiers; 0 for models without labels.
inline double accuracy(const ModelSpec& spec, const ParamVector& w,
                       const Dataset& test) {
  if (std::holds_alternative<QuadraticSpec>(spec) || test.labels.empty())
    return 0.0;
  detail::RowMat p = detail::class_probs(spec, w, test);
  int hits = 0;
  for (int i = 0; i < test.n; ++i) {
    Eigen::Index best;
    p.row(i).maxCoeff(&best);
    hits += (int(best) == test.labels[i]);
  }
  return double(hits) / test.n;
}

}  // namespace flare
