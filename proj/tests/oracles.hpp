#pragma once
// Independent reference implementations used by the tests. They share no code
// with the library beyond the plain data accessors.

#include <cstdint>
#include <random>
#include <vector>

#include "qubolab/qubo.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense dense(const qubolab::QuboInstance& inst) {
  Dense a(inst.size(), std::vector<double>(inst.size(), 0.0));
  for (const auto& e : inst.entries()) a[e.row][e.col] = e.value;
  return a;
}

inline double objective(const Dense& a, const std::vector<double>& b, const std::vector<int>& x) {
  const std::size_t k = b.size();
  double f = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) f += a[i][j] * x[i] * x[j];
    f += b[i] * x[i];
  }
  return f;
}

struct Best {
  std::vector<int> x;
  double f = 0.0;
};

/// Plain binary-counting enumeration. Among ties (within 1e-9 relative) keeps
/// the lexicographically smallest vector, where x[0] is the most significant bit.
inline Best brute_force(const qubolab::QuboInstance& inst, const std::vector<double>& b) {
  const auto a = dense(inst);
  const std::size_t k = inst.size();
  Best best;
  bool have = false;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << k); ++m) {
    std::vector<int> x(k);
    for (std::size_t i = 0; i < k; ++i) x[i] = static_cast<int>((m >> (k - 1 - i)) & 1U);
    const double f = objective(a, b, x);
    const double tol = 1e-9 * (1.0 + std::abs(have ? best.f : f));
    if (!have || f < best.f - tol) {
      best = {x, f};
      have = true;
    }
  }
  return best;
}

inline std::vector<int> to_ints(const qubolab::BinaryAssignment& x) { return {x.bits().begin(), x.bits().end()}; }

inline std::vector<double> normal_vector(std::size_t k, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(k);
  for (auto& x : v) x = scale * n(rng);
  return v;
}

inline qubolab::BinaryAssignment random_bits(std::size_t k, std::mt19937_64& rng) {
  std::vector<std::uint8_t> v(k);
  for (auto& x : v) x = static_cast<std::uint8_t>(rng() & 1U);
  return qubolab::BinaryAssignment(std::move(v));
}

inline bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * (1.0 + std::max(std::abs(a), std::abs(b))); }

}  // namespace oracle
