#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "flare/errors.hpp"
#include "flare/rng.hpp"

namespace flare {

// Row-major feature matrix plus integer labels (classification) or none.
struct Dataset {
  int n = 0;
  int f = 0;
  int classes = 0;
  std::vector<double> features;  // n * f
  std::vector<int> labels;       // size n for classification, else empty

  const double* row(int i) const { return features.data() + std::size_t(i) * f; }

  Dataset select(const std::vector<int>& idx) const {
    Dataset out;
    out.n = static_cast<int>(idx.size());
    out.f = f;
    out.classes = classes;
    out.features.resize(std::size_t(out.n) * f);
    if (!labels.empty()) out.labels.resize(out.n);
    for (int r = 0; r < out.n; ++r) {
      std::copy(row(idx[r]), row(idx[r]) + f,
                out.features.begin() + std::size_t(r) * f);
      if (!labels.empty()) out.labels[r] = labels[idx[r]];
    }
    return out;
  }
};

// ---- IDX format ------------------------------------------------------
//
// Big-endian magic 0x00000803 (images, 3 dims) or 0x00000801 (labels,
// 1 dim), big-endian u32 dimension sizes, then unsigned payload bytes.
// Image bytes scale to [0,1].

namespace detail {

inline uint32_t get_be32(const std::vector<uint8_t>& b, std::size_t off) {
  return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
         (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

inline void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t((v >> 24) & 0xff));
  out.push_back(uint8_t((v >> 16) & 0xff));
  out.push_back(uint8_t((v >> 8) & 0xff));
  out.push_back(uint8_t(v & 0xff));
}

}  // namespace detail

struct IdxPiece {
  bool is_images = false;
  uint32_t count = 0;
  uint32_t rows = 0, cols = 0;       // images only
  std::vector<double> images;        // count*rows*cols, scaled to [0,1]
  std::vector<int> labels;           // labels only
};

inline IdxPiece parse_idx(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8) throw ParseError("idx: truncated header", bytes.size());
  uint32_t magic = detail::get_be32(bytes, 0);
  IdxPiece out;
  if (magic == 0x00000801u) {
    uint32_t count = detail::get_be32(bytes, 4);
    if (bytes.size() < 8 + std::size_t(count))
      throw ParseError("idx: truncated label payload", bytes.size());
    out.count = count;
    out.labels.resize(count);
    for (uint32_t i = 0; i < count; ++i) out.labels[i] = bytes[8 + i];
  } else if (magic == 0x00000803u) {
    if (bytes.size() < 16) throw ParseError("idx: truncated dims", bytes.size());
    uint32_t count = detail::get_be32(bytes, 4);
    uint32_t rows = detail::get_be32(bytes, 8);
    uint32_t cols = detail::get_be32(bytes, 12);
    uint64_t need = uint64_t(count) * rows * cols;
    if (rows == 0 || cols == 0 || need > (uint64_t(1) << 33))
      throw ParseError("idx: dimension overflow", 8);
    if (bytes.size() < 16 + need)
      throw ParseError("idx: truncated image payload", bytes.size());
    out.is_images = true;
    out.count = count;
    out.rows = rows;
    out.cols = cols;
    out.images.resize(need);
    for (uint64_t i = 0; i < need; ++i)
      out.images[i] = bytes[16 + i] / 255.0;
  } else {
    throw ParseError("idx: wrong magic", 0);
  }
  return out;
}

inline std::vector<uint8_t> write_idx_images(const IdxPiece& p) {
  std::vector<uint8_t> out;
  detail::put_be32(out, 0x00000803u);
  detail::put_be32(out, p.count);
  detail::put_be32(out, p.rows);
  detail::put_be32(out, p.cols);
  for (double v : p.images)
    out.push_back(uint8_t(std::llround(v * 255.0)));
  return out;
}

inline std::vector<uint8_t> write_idx_labels(const IdxPiece& p) {
  std::vector<uint8_t> out;
  detail::put_be32(out, 0x00000801u);
  detail::put_be32(out, p.count);
  for (int v : p.labels) out.push_back(uint8_t(v));
  return out;
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

inline Dataset dataset_from_idx(const IdxPiece& images, const IdxPiece& labels,
                                int classes = 10) {
  if (!images.is_images || labels.is_images)
    throw ConfigError("dataset_from_idx: need one image piece and one label piece");
  if (images.count != labels.count)
    throw ConfigError("dataset_from_idx: image/label count mismatch");
  Dataset d;
  d.n = int(images.count);
  d.f = int(images.rows * images.cols);
  d.classes = classes;
  d.features = images.images;
  d.labels = labels.labels;
  return d;
}

// ---- Synthetic digit-like images -------------------------------------
//
// Deterministic 28x28 ten-class image corpus: each class is a distinct
// arrangement of bar/diagonal strokes, rendered with per-example pixel
// jitter and a random 2-pixel translation. Stands in for MNIST where the
// real files are not on disk; learnable but not linearly trivial.

inline Dataset synthetic_digits(int n, SeededRng& rng) {
  const int side = 28, f = side * side, classes = 10;
  Dataset d;
  d.n = n;
  d.f = f;
  d.classes = classes;
  d.features.assign(std::size_t(n) * f, 0.0);
  d.labels.resize(n);

  auto proto_pixel = [&](int cls, int r, int c) -> double {
    // Strokes per class: combinations of horizontal/vertical bars and
    // diagonals at class-dependent positions.
    double v = 0.0;
    int hrow = 4 + 3 * (cls % 4);                     // horizontal bar row
    if (std::abs(r - hrow) <= 1 && c >= 5 && c <= 22) v = 1.0;
    int vcol = 5 + 4 * (cls % 3);                     // vertical bar column
    if ((cls / 2) % 2 == 0 && std::abs(c - vcol) <= 1 && r >= 4 && r <= 23)
      v = 1.0;
    if (cls >= 5 && std::abs((r - 4) - (c - 4)) <= 1 && r >= 4 && r <= 23)
      v = 1.0;                                        // main diagonal
    if (cls % 5 == 0 && std::abs((r - 4) + (c - 23)) <= 1 && r >= 4 && r <= 23)
      v = 1.0;                                        // anti-diagonal
    return v;
  };

  for (int i = 0; i < n; ++i) {
    int cls = int(rng.next_u64() % classes);
    d.labels[i] = cls;
    int dr = int(rng.next_u64() % 5) - 2;  // translation in [-2, 2]
    int dc = int(rng.next_u64() % 5) - 2;
    double* px = d.features.data() + std::size_t(i) * f;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        int sr = r - dr, sc = c - dc;
        double v = 0.0;
        if (sr >= 0 && sr < side && sc >= 0 && sc < side)
          v = proto_pixel(cls, sr, sc);
        v += 0.15 * rng.next_normal();
        px[r * side + c] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return d;
}

// Placeholder shards for models whose loss ignores the data (Quadratic).
inline Dataset synthetic_empty(int n) {
  Dataset d;
  d.n = n;
  d.f = 0;
  return d;
}

// ---- Partitioning ----------------------------------------------------

struct Partition {
  enum Scheme { IID, LabelImbalance };
  Scheme scheme = IID;
  int imbalance_level = 0;
  std::vector<int> assignment;  // client id per example, -1 = truncated
  int truncated = 0;

  std::vector<int> shard_indices(int client) const {
    std::vector<int> idx;
    for (int i = 0; i < int(assignment.size()); ++i)
      if (assignment[i] == client) idx.push_back(i);
    return idx;
  }
};

inline Partition partition_iid(const Dataset& data, int n_clients,
                               SeededRng& rng) {
  if (n_clients < 1) throw ConfigError("partition: n_clients must be >= 1");
  std::vector<int> order(data.n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = data.n - 1; i > 0; --i)
    std::swap(order[i], order[rng.next_u64() % uint64_t(i + 1)]);

  Partition p;
  p.scheme = Partition::IID;
  p.assignment.assign(data.n, -1);
  int shard = data.n / n_clients;
  for (int c = 0; c < n_clients; ++c)
    for (int j = 0; j < shard; ++j) p.assignment[order[c * shard + j]] = c;
  p.truncated = data.n - shard * n_clients;
  return p;
}

// Each client receives exactly `level` distinct labels; label sets are
// pairwise disjoint unless allow_overlap. Equal shard sizes, surplus
// truncated.
inline Partition partition_label_imbalance(const Dataset& data, int n_clients,
                                           int level, SeededRng& rng,
                                           bool allow_overlap = false) {
  if (data.labels.empty())
    throw ConfigError("partition: label imbalance needs labels");
  if (level < 1) throw ConfigError("partition: imbalance level must be >= 1");
  if (!allow_overlap && n_clients * level > data.classes)
    throw ConfigError("partition: n_clients*level exceeds class count");

  std::vector<int> label_order(data.classes);
  std::iota(label_order.begin(), label_order.end(), 0);
  for (int i = data.classes - 1; i > 0; --i)
    std::swap(label_order[i], label_order[rng.next_u64() % uint64_t(i + 1)]);

  // label -> owning client (round-robin reuse only when overlap allowed)
  std::vector<std::vector<int>> client_labels(n_clients);
  for (int c = 0; c < n_clients; ++c)
    for (int l = 0; l < level; ++l)
      client_labels[c].push_back(label_order[(c * level + l) % data.classes]);

  std::vector<std::vector<int>> pool(n_clients);
  for (int i = 0; i < data.n; ++i) {
    for (int c = 0; c < n_clients; ++c) {
      const auto& ls = client_labels[c];
      if (std::find(ls.begin(), ls.end(), data.labels[i]) != ls.end()) {
        pool[c].push_back(i);
        break;  // disjoint by construction when overlap is off
      }
    }
  }
  std::size_t shard = pool[0].size();
  for (const auto& v : pool) shard = std::min(shard, v.size());

  Partition p;
  p.scheme = Partition::LabelImbalance;
  p.imbalance_level = level;
  p.assignment.assign(data.n, -1);
  for (int c = 0; c < n_clients; ++c) {
    // deterministic subsample: shuffle the pool, take the first `shard`
    auto& v = pool[c];
    for (int i = int(v.size()) - 1; i > 0; --i)
      std::swap(v[i], v[rng.next_u64() % uint64_t(i + 1)]);
    for (std::size_t j = 0; j < shard; ++j) p.assignment[v[j]] = c;
  }
  int assigned = 0;
  for (int a : p.assignment) assigned += (a >= 0);
  p.truncated = data.n - assigned;
  return p;
}

// One epoch of batches over [0, n): reshuffled per call, last short batch
// kept. b == 0 means FULL (single batch, the paper's B = infinity).
inline std::vector<std::vector<int>> epoch_batches(int n, int b,
                                                   SeededRng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (b == 0 || b >= n) return {order};
  if (b < 0) throw ConfigError("epoch_batches: batch size must be >= 1 or FULL");
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.next_u64() % uint64_t(i + 1)]);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += b) {
    out.emplace_back(order.begin() + start,
                     order.begin() + std::min(n, start + b));
  }
  return out;
}

}  // namespace flare
