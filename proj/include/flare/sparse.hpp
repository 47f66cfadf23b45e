#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

#include "flare/errors.hpp"
#include "flare/vec.hpp"

namespace flare {

// Top-K compressed delta plus round/client metadata. Indices strictly
// increasing, all < dim.
struct SparseUpdate {
  uint32_t dim = 0;
  uint32_t round = 0;
  uint32_t client_id = 0;
  std::vector<std::pair<uint32_t, double>> entries;

  bool operator==(const SparseUpdate&) const = default;

  ParamVector densify() const {
    ParamVector v(dim, 0.0);
    for (const auto& [i, x] : entries) v[i] = x;
    return v;
  }
};

// The paper's R (percent) and delta = R/100.
struct SparsityPolicy {
  double r_percent = 100.0;

  SparsityPolicy() = default;
  explicit SparsityPolicy(double r) : r_percent(r) {
    if (!(r > 0.0 && r <= 100.0))
      throw ParameterError("SparsityPolicy: r_percent must be in (0,100]");
  }

  double delta() const { return r_percent / 100.0; }

  // Floor of 1 keeps the protocol live when round(delta*d) == 0.
  std::size_t k_of(std::size_t d) const {
    auto k = static_cast<std::size_t>(std::llround(delta() * double(d)));
    return std::min(d, std::max<std::size_t>(1, k));
  }
};

struct MaskPolicy {
  enum Rule { FixedThreshold, MedianAbs, MeanAbs };
  Rule rule = FixedThreshold;
  double a0 = 0.0;

  static MaskPolicy fixed(double a0) {
    if (a0 < 0) throw ParameterError("MaskPolicy: a0 must be >= 0");
    return {FixedThreshold, a0};
  }
  static MaskPolicy median() { return {MedianAbs, 0.0}; }
  static MaskPolicy mean() { return {MeanAbs, 0.0}; }
};

// Keeps the k entries of v with largest |value|; ties broken toward the
// lower index. residual is v with those entries zeroed, so
// densify(kept) + residual == v exactly.
inline std::pair<SparseUpdate, ParamVector> top_k_split(const ParamVector& v,
                                                        std::size_t k) {
  const std::size_t d = v.size();
  if (k < 1 || k > d) throw ParameterError("top_k_split: k out of range");

  std::vector<uint32_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0u);
  auto larger = [&](uint32_t a, uint32_t b) {
    double fa = std::fabs(v[a]), fb = std::fabs(v[b]);
    if (fa != fb) return fa > fb;
    return a < b;
  };
  if (k < d) std::nth_element(idx.begin(), idx.begin() + k - 1, idx.end(), larger);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());

  SparseUpdate kept;
  kept.dim = static_cast<uint32_t>(d);
  kept.entries.reserve(k);
  ParamVector residual(v);
  for (uint32_t i : idx) {
    kept.entries.emplace_back(i, v[i]);
    residual[i] = 0.0;
  }
  return {std::move(kept), std::move(residual)};
}

struct DeltaApproxResult {
  double lhs = 0.0;   // ||C(v) - v||^2
  double rhs = 0.0;   // (1 - k/d) ||v||^2
  bool holds = true;
  bool degenerate = false;  // zero input vector
};

// Checks the contraction property of Top-K with delta = k/d.
inline DeltaApproxResult delta_approx_check(const ParamVector& v,
                                            std::size_t k) {
  DeltaApproxResult r;
  double v2 = norm(v, Norm::L2sq);
  if (v2 == 0.0) {
    r.degenerate = true;
    return r;
  }
  auto [kept, residual] = top_k_split(v, k);
  r.lhs = norm(residual, Norm::L2sq);
  r.rhs = (1.0 - double(k) / double(v.size())) * v2;
  r.holds = r.lhs <= r.rhs + 1e-12 * r.rhs;
  return r;
}

inline double mask_threshold(const ParamVector& a, const MaskPolicy& policy) {
  switch (policy.rule) {
    case MaskPolicy::FixedThreshold:
      return policy.a0;
    case MaskPolicy::MeanAbs:
      return a.empty() ? 0.0 : norm(a, Norm::L1) / double(a.size());
    case MaskPolicy::MedianAbs: {
      if (a.empty()) return 0.0;
      std::vector<double> mags(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) mags[i] = std::fabs(a[i]);
      std::sort(mags.begin(), mags.end());
      std::size_t n = mags.size();
      // Even length: midpoint of the two central order statistics.
      if (n % 2 == 1) return mags[n / 2];
      return 0.5 * (mags[n / 2 - 1] + mags[n / 2]);
    }
  }
  return 0.0;
}

// m_j = 1 iff |a_j| > a0(policy, a). Strict inequality.
inline ParamVector build_mask(const ParamVector& a, const MaskPolicy& policy) {
  double a0 = mask_threshold(a, policy);
  ParamVector m(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::fabs(a[i]) > a0) m[i] = 1.0;
  return m;
}

// ---- FLSU wire codec -------------------------------------------------
//
// Layout (all little-endian):
//   bytes 0..3   magic "FLSU"
//   byte  4      version 0x01
//   bytes 5..8   dim        u32
//   bytes 9..12  round      u32
//   bytes 13..16 client_id  u32
//   bytes 17..20 entry count u32
//   then per entry: index u32, value f64 (IEEE-754)

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t((v >> 8) & 0xff));
  out.push_back(uint8_t((v >> 16) & 0xff));
  out.push_back(uint8_t((v >> 24) & 0xff));
}

inline void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t((bits >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const std::vector<uint8_t>& in, std::size_t off) {
  return uint32_t(in[off]) | (uint32_t(in[off + 1]) << 8) |
         (uint32_t(in[off + 2]) << 16) | (uint32_t(in[off + 3]) << 24);
}

inline double get_f64(const std::vector<uint8_t>& in, std::size_t off) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= uint64_t(in[off + i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline constexpr std::size_t kFlsuHeaderBytes = 21;
inline constexpr std::size_t kFlsuEntryBytes = 12;

inline std::size_t encoded_size(std::size_t entry_count) {
  return kFlsuHeaderBytes + kFlsuEntryBytes * entry_count;
}

inline std::vector<uint8_t> encode(const SparseUpdate& u) {
  if (u.entries.size() > u.dim)
    throw CodecError("encode: entry count exceeds dim", 17);
  std::vector<uint8_t> out;
  out.reserve(encoded_size(u.entries.size()));
  out.insert(out.end(), {'F', 'L', 'S', 'U'});
  out.push_back(0x01);
  detail::put_u32(out, u.dim);
  detail::put_u32(out, u.round);
  detail::put_u32(out, u.client_id);
  detail::put_u32(out, static_cast<uint32_t>(u.entries.size()));
  for (const auto& [i, v] : u.entries) {
    detail::put_u32(out, i);
    detail::put_f64(out, v);
  }
  return out;
}

inline SparseUpdate decode(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kFlsuHeaderBytes)
    throw CodecError("decode: truncated header", bytes.size());
  if (std::memcmp(bytes.data(), "FLSU", 4) != 0)
    throw CodecError("decode: bad magic", 0);
  if (bytes[4] != 0x01) throw CodecError("decode: unsupported version", 4);

  SparseUpdate u;
  u.dim = detail::get_u32(bytes, 5);
  u.round = detail::get_u32(bytes, 9);
  u.client_id = detail::get_u32(bytes, 13);
  uint32_t count = detail::get_u32(bytes, 17);
  if (count > u.dim) throw CodecError("decode: entry count exceeds dim", 17);
  if (bytes.size() < encoded_size(count))
    throw CodecError("decode: truncated entries", bytes.size());

  u.entries.reserve(count);
  int64_t prev = -1;
  for (uint32_t e = 0; e < count; ++e) {
    std::size_t off = kFlsuHeaderBytes + kFlsuEntryBytes * e;
    uint32_t idx = detail::get_u32(bytes, off);
    if (int64_t(idx) <= prev)
      throw CodecError("decode: indices not strictly increasing", off);
    if (idx >= u.dim) throw CodecError("decode: index out of range", off);
    prev = idx;
    u.entries.emplace_back(idx, detail::get_f64(bytes, off + 4));
  }
  return u;
}

}  // namespace flare
