#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qubolab/rng.hpp"

namespace qubolab {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

/// Row-compressed sparse matrix. Used for every matrix-vector product in the library.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return val.size(); }

  /// y = M x
  void multiply(std::span<const double> x, std::span<double> y) const {
    require_size(x.size(), cols, "CsrMatrix::multiply input");
    require_size(y.size(), rows, "CsrMatrix::multiply output");
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) acc += val[p] * x[col[p]];
      y[i] = acc;
    }
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(rows);
    multiply(x, y);
    return y;
  }

  double at(std::size_t i, std::size_t j) const {
    auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
    auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
    auto it = std::lower_bound(first, last, j);
    return (it != last && *it == j) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
  }

  /// Builds from (row, col, value) triples; duplicates are summed, columns sorted per row.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols,
                                 std::vector<std::tuple<std::size_t, std::size_t, double>> t) {
    std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    for (std::size_t p = 0; p < t.size(); ++p) {
      auto [r, c, v] = t[p];
      if (!m.col.empty() && p > 0 && std::get<0>(t[p - 1]) == r && m.col.back() == c) {
        m.val.back() += v;
        continue;
      }
      m.col.push_back(c);
      m.val.push_back(v);
      ++m.row_ptr[r + 1];
    }
    for (std::size_t i = 0; i < rows; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
    return m;
  }
};

struct Entry {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

struct InstanceMeta {
  std::string generator = "manual";
  std::uint64_t seed = 0;
  std::vector<std::string> tags;

  friend bool operator==(const InstanceMeta&, const InstanceMeta&) = default;
};

/// Off-diagonal part of A + A^T plus the diagonal of A. This is the form
/// every single-flip computation needs.
struct FlipCoupling {
  CsrMatrix offdiag_sym;
  std::vector<double> diag;
};

/// The fixed matrix A of a QUBO problem family, stored exactly as given
/// (coordinate list, no symmetrization). Row-compressed views are compiled
/// once at construction; the instance is immutable afterwards.
class QuboInstance {
 public:
  QuboInstance() = default;

  QuboInstance(std::size_t k, std::vector<Entry> entries, InstanceMeta meta = {})
      : k_(k), entries_(std::move(entries)), meta_(std::move(meta)) {
    if (k_ == 0) throw std::invalid_argument("QuboInstance: k must be positive");
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    std::vector<std::tuple<std::size_t, std::size_t, double>> sym;
    trip.reserve(entries_.size());
    coupling_.diag.assign(k_, 0.0);
    {
      std::vector<std::pair<std::size_t, std::size_t>> seen;
      seen.reserve(entries_.size());
      for (const auto& e : entries_) {
        if (e.row >= k_ || e.col >= k_) {
          throw std::invalid_argument("QuboInstance: coordinate (" + std::to_string(e.row) + ", " +
                                      std::to_string(e.col) + ") outside [0, " +
                                      std::to_string(k_) + ")");
        }
        if (!std::isfinite(e.value)) throw std::invalid_argument("QuboInstance: non-finite entry");
        seen.emplace_back(e.row, e.col);
      }
      std::sort(seen.begin(), seen.end());
      auto dup = std::adjacent_find(seen.begin(), seen.end());
      if (dup != seen.end()) {
        throw std::invalid_argument("QuboInstance: duplicate coordinate (" +
                                    std::to_string(dup->first) + ", " +
                                    std::to_string(dup->second) + ")");
      }
    }
    for (const auto& e : entries_) {
      trip.emplace_back(e.row, e.col, e.value);
      if (e.row == e.col) {
        coupling_.diag[e.row] += e.value;
      } else {
        sym.emplace_back(e.row, e.col, e.value);
        sym.emplace_back(e.col, e.row, e.value);
      }
    }
    csr_ = CsrMatrix::from_triplets(k_, k_, std::move(trip));
    coupling_.offdiag_sym = CsrMatrix::from_triplets(k_, k_, std::move(sym));
  }

  std::size_t size() const noexcept { return k_; }
  std::span<const Entry> entries() const noexcept { return entries_; }
  const InstanceMeta& meta() const noexcept { return meta_; }
  const CsrMatrix& csr() const noexcept { return csr_; }
  const FlipCoupling& coupling() const noexcept { return coupling_; }

  friend bool operator==(const QuboInstance& a, const QuboInstance& b) {
    return a.k_ == b.k_ && a.entries_ == b.entries_ && a.meta_ == b.meta_;
  }

 private:
  std::size_t k_ = 0;
  std::vector<Entry> entries_;
  InstanceMeta meta_;
  CsrMatrix csr_;
  FlipCoupling coupling_;
};

/// Linear term b. Finite entries only.
class ObservedVector {
 public:
  ObservedVector() = default;
  explicit ObservedVector(std::vector<double> values) : v_(std::move(values)) {
    for (double x : v_) {
      if (!std::isfinite(x)) throw std::invalid_argument("ObservedVector: non-finite entry");
    }
  }
  static ObservedVector zeros(std::size_t k) { return ObservedVector(std::vector<double>(k, 0.0)); }

  std::size_t size() const noexcept { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  std::span<const double> values() const noexcept { return v_; }

  friend bool operator==(const ObservedVector&, const ObservedVector&) = default;

 private:
  std::vector<double> v_;
};

/// x in {0,1}^k.
class BinaryAssignment {
 public:
  BinaryAssignment() = default;
  explicit BinaryAssignment(std::vector<std::uint8_t> bits) : x_(std::move(bits)) {
    for (auto b : x_) {
      if (b > 1) throw std::invalid_argument("BinaryAssignment: entries must be 0 or 1");
    }
  }
  static BinaryAssignment zeros(std::size_t k) { return BinaryAssignment(std::vector<std::uint8_t>(k, 0)); }
  static BinaryAssignment ones(std::size_t k) { return BinaryAssignment(std::vector<std::uint8_t>(k, 1)); }

  /// Bits i set where (mask >> i) & 1.
  static BinaryAssignment from_mask(std::uint64_t mask, std::size_t k) {
    std::vector<std::uint8_t> v(k);
    for (std::size_t i = 0; i < k; ++i) v[i] = static_cast<std::uint8_t>((mask >> i) & 1U);
    return BinaryAssignment(std::move(v));
  }

  /// Rounds x >= 0.5 to 1.
  static BinaryAssignment round(std::span<const double> x) {
    std::vector<std::uint8_t> v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = x[i] >= 0.5 ? 1 : 0;
    return BinaryAssignment(std::move(v));
  }

  std::size_t size() const noexcept { return x_.size(); }
  std::uint8_t operator[](std::size_t i) const { return x_[i]; }
  std::span<const std::uint8_t> bits() const noexcept { return x_; }
  void flip(std::size_t i) { x_.at(i) ^= 1U; }
  BinaryAssignment flipped(std::size_t i) const {
    BinaryAssignment y = *this;
    y.flip(i);
    return y;
  }
  std::vector<double> as_real() const { return {x_.begin(), x_.end()}; }
  std::size_t hamming(const BinaryAssignment& other) const {
    require_size(other.size(), size(), "hamming");
    std::size_t d = 0;
    for (std::size_t i = 0; i < x_.size(); ++i) d += x_[i] != other.x_[i];
    return d;
  }

  friend bool operator==(const BinaryAssignment&, const BinaryAssignment&) = default;
  friend auto operator<=>(const BinaryAssignment& a, const BinaryAssignment& b) { return a.x_ <=> b.x_; }

 private:
  std::vector<std::uint8_t> x_;
};

/// Undirected connectivity implied by the sparsity pattern of A.
struct GraphView {
  std::size_t k = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j
  std::vector<std::size_t> degree;
  std::vector<std::vector<std::size_t>> neighbors;

  explicit GraphView(const QuboInstance& inst) : k(inst.size()), degree(k, 0), neighbors(k) {
    for (const auto& e : inst.entries()) {
      if (e.row == e.col || e.value == 0.0) continue;
      edges.emplace_back(std::min(e.row, e.col), std::max(e.row, e.col));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (auto [i, j] : edges) {
      ++degree[i];
      ++degree[j];
      neighbors[i].push_back(j);
      neighbors[j].push_back(i);
    }
  }
};

// ---------------------------------------------------------------------------
// Objective and its local pieces

/// f(x) = x^T A x + x^T b, accumulated in double precision.
inline double evaluate(const QuboInstance& inst, const ObservedVector& b, const BinaryAssignment& x) {
  require_size(b.size(), inst.size(), "evaluate: b");
  require_size(x.size(), inst.size(), "evaluate: x");
  double f = 0.0;
  for (const auto& e : inst.entries()) {
    if (x[e.row] && x[e.col]) f += e.value;
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (x[i]) f += b[i];
  }
  return f;
}

/// b_i + A_ii + sum_{j != i} (A_ij + A_ji) x_j, the coefficient of x_i in f.
inline double local_field(const QuboInstance& inst, const ObservedVector& b,
                          std::span<const std::uint8_t> x, std::size_t i) {
  const auto& c = inst.coupling();
  const auto& m = c.offdiag_sym;
  double g = b[i] + c.diag[i];
  for (std::size_t p = m.row_ptr[i]; p < m.row_ptr[i + 1]; ++p) {
    if (x[m.col[p]]) g += m.val[p];
  }
  return g;
}

/// f(x with bit i flipped) - f(x) in O(nnz of row/column i).
inline double flip_delta(const QuboInstance& inst, const ObservedVector& b, const BinaryAssignment& x,
                         std::size_t i) {
  require_size(b.size(), inst.size(), "flip_delta: b");
  require_size(x.size(), inst.size(), "flip_delta: x");
  if (i >= inst.size()) {
    throw std::out_of_range("flip_delta: index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(inst.size()) + ")");
  }
  const double delta = x[i] ? -1.0 : 1.0;
  return delta * local_field(inst, b, x.bits(), i);
}

/// x ⊙ (A x + b) for a real or binary x. Its entries sum to f(x) for binary x.
inline std::vector<double> residual(const QuboInstance& inst, const ObservedVector& b,
                                    std::span<const double> x) {
  require_size(b.size(), inst.size(), "residual: b");
  require_size(x.size(), inst.size(), "residual: x");
  std::vector<double> r = inst.csr().multiply(x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = x[i] * (r[i] + b[i]);
  return r;
}

inline std::vector<double> residual(const QuboInstance& inst, const ObservedVector& b,
                                    const BinaryAssignment& x) {
  const auto xr = x.as_real();
  return residual(inst, b, std::span<const double>(xr));
}

// ---------------------------------------------------------------------------
// Generators

/// Dense k x k matrix with i.i.d. N(0, 1) * scale entries, row-major order.
inline QuboInstance gen_random_dense(std::size_t k, std::uint64_t seed, double scale = 1.0) {
  if (k == 0) throw std::invalid_argument("gen_random_dense: k must be >= 1");
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Entry> e;
  e.reserve(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) e.push_back({i, j, normal(rng) * scale});
  }
  return QuboInstance(k, std::move(e), {"random_dense", seed, {"scale=" + std::to_string(scale)}});
}

namespace detail {
template <class Fn>
void for_each_grid_edge(std::size_t n, Fn&& fn) {
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t i = r * n + c;
      if (c + 1 < n) fn(i, i + 1);
      if (r + 1 < n) fn(i, i + n);
    }
  }
}
}  // namespace detail

/// Graph Laplacian of the n x n 4-neighbour grid (node id = row * n + col).
inline QuboInstance gen_lattice_laplacian(std::size_t n) {
  if (n < 2) throw std::invalid_argument("gen_lattice_laplacian: n must be >= 2");
  const std::size_t k = n * n;
  std::vector<double> deg(k, 0.0);
  std::vector<Entry> e;
  detail::for_each_grid_edge(n, [&](std::size_t i, std::size_t j) {
    e.push_back({i, j, -1.0});
    e.push_back({j, i, -1.0});
    deg[i] += 1.0;
    deg[j] += 1.0;
  });
  for (std::size_t i = 0; i < k; ++i) e.push_back({i, i, deg[i]});
  std::sort(e.begin(), e.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  return QuboInstance(k, std::move(e), {"lattice_laplacian", 0, {"n=" + std::to_string(n)}});
}

/// 0/1 adjacency of the n x n 4-neighbour grid, both triangles stored.
inline QuboInstance lattice_adjacency(std::size_t n) {
  if (n < 2) throw std::invalid_argument("lattice_adjacency: n must be >= 2");
  std::vector<Entry> e;
  detail::for_each_grid_edge(n, [&](std::size_t i, std::size_t j) {
    e.push_back({i, j, 1.0});
    e.push_back({j, i, 1.0});
  });
  std::sort(e.begin(), e.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  return QuboInstance(n * n, std::move(e), {"lattice_adjacency", 0, {"n=" + std::to_string(n)}});
}

/// Ising-type problem x^T A x - b_scalar * x^T e. The adjacency is stored
/// verbatim, so an edge listed in both triangles contributes 2 * x_i * x_j
/// and an edge listed once contributes x_i * x_j.
inline std::pair<QuboInstance, ObservedVector> gen_ising(const QuboInstance& adjacency, double b_scalar) {
  for (const auto& e : adjacency.entries()) {
    if (e.value != 0.0 && e.value != 1.0) {
      throw std::invalid_argument("gen_ising: adjacency entry (" + std::to_string(e.row) + ", " +
                                  std::to_string(e.col) + ") is not binary");
    }
    if (e.row == e.col && e.value != 0.0) {
      throw std::invalid_argument("gen_ising: adjacency must have zero diagonal");
    }
  }
  InstanceMeta meta = adjacency.meta();
  meta.generator = "ising";
  QuboInstance inst(adjacency.size(), {adjacency.entries().begin(), adjacency.entries().end()},
                    std::move(meta));
  return {std::move(inst), ObservedVector(std::vector<double>(adjacency.size(), -b_scalar))};
}

// ---------------------------------------------------------------------------
// Ising form

/// Energy s^T J s + h^T s + c over spins s in {-1, +1}^k, equal to f(x) at x = (s + 1) / 2.
struct IsingModel {
  std::size_t k = 0;
  std::vector<Entry> coupling;  // J = A / 4, same coordinates as A
  std::vector<double> field;
  double constant = 0.0;

  double energy(std::span<const double> s) const {
    require_size(s.size(), k, "IsingModel::energy");
    double e = constant;
    for (const auto& c : coupling) e += c.value * s[c.row] * s[c.col];
    for (std::size_t i = 0; i < k; ++i) e += field[i] * s[i];
    return e;
  }
};

inline IsingModel qubo_to_ising(const QuboInstance& inst, const ObservedVector& b) {
  require_size(b.size(), inst.size(), "qubo_to_ising: b");
  const std::size_t k = inst.size();
  IsingModel m;
  m.k = k;
  m.field.assign(k, 0.0);
  double quad_const = 0.0;
  for (const auto& e : inst.entries()) {
    m.coupling.push_back({e.row, e.col, e.value / 4.0});
    // (A + A^T) e / 4
    m.field[e.row] += e.value / 4.0;
    m.field[e.col] += e.value / 4.0;
    quad_const += e.value;
  }
  double b_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    m.field[i] += 0.5 * b[i];
    b_sum += b[i];
  }
  m.constant = 0.25 * quad_const + 0.5 * b_sum;
  return m;
}

inline std::vector<double> to_spins(const BinaryAssignment& x) {
  std::vector<double> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = x[i] ? 1.0 : -1.0;
  return s;
}

/// Node relabelling: node i of the input becomes node perm[i] of the output.
inline QuboInstance permute(const QuboInstance& inst, std::span<const std::size_t> perm) {
  require_size(perm.size(), inst.size(), "permute");
  std::vector<Entry> e;
  e.reserve(inst.entries().size());
  for (const auto& x : inst.entries()) e.push_back({perm[x.row], perm[x.col], x.value});
  return QuboInstance(inst.size(), std::move(e), inst.meta());
}

template <class T>
std::vector<T> permute_values(std::span<const T> v, std::span<const std::size_t> perm) {
  require_size(perm.size(), v.size(), "permute_values");
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[perm[i]] = v[i];
  return out;
}

}  // namespace qubolab
