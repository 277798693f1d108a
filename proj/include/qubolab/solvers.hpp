#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "qubolab/io.hpp"
#include "qubolab/qubo.hpp"
#include "qubolab/rng.hpp"

namespace qubolab {

struct IntractableError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SolverResult {
  std::string solver;
  BinaryAssignment x_best;
  double f_best = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  double elapsed_ms = 0.0;
  std::vector<double> trace;  // best-so-far objective per iteration, when recorded
  bool terminated_early = false;
  std::string note;
};

inline json to_json(const SolverResult& r) {
  std::vector<int> x(r.x_best.bits().begin(), r.x_best.bits().end());
  return json{{"solver", r.solver},           {"x_best", x},
              {"f_best", r.f_best},           {"iterations", r.iterations},
              {"evaluations", r.evaluations}, {"elapsed_ms", r.elapsed_ms}};
}

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Local fields g_i = b_i + A_ii + sum_{j != i} (A_ij + A_ji) x_j, kept in sync
/// with a current assignment so every single flip costs O(degree).
class FlipState {
 public:
  FlipState(const QuboInstance& inst, const ObservedVector& b, std::vector<std::uint8_t> x)
      : c_(inst.coupling()), x_(std::move(x)), field_(inst.size()) {
    for (std::size_t i = 0; i < field_.size(); ++i) field_[i] = local_field(inst, b, x_, i);
  }

  double delta(std::size_t i) const { return x_[i] ? -field_[i] : field_[i]; }

  void flip(std::size_t j) {
    x_[j] ^= 1U;
    const double s = x_[j] ? 1.0 : -1.0;
    const auto& m = c_.offdiag_sym;
    for (std::size_t p = m.row_ptr[j]; p < m.row_ptr[j + 1]; ++p) field_[m.col[p]] += s * m.val[p];
  }

  std::span<const std::uint8_t> bits() const noexcept { return x_; }
  std::size_t size() const noexcept { return x_.size(); }

 private:
  const FlipCoupling& c_;
  std::vector<std::uint8_t> x_;
  std::vector<double> field_;
};

inline std::uint64_t zobrist_key(std::size_t i) { return splitmix64(0x7ab0u + i * 0x9e37u); }

inline std::uint64_t zobrist_hash(std::span<const std::uint8_t> x) {
  std::uint64_t h = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i]) h ^= zobrist_key(i);
  }
  return h;
}

inline SolverResult finish(std::string name, const QuboInstance& inst, const ObservedVector& b,
                           BinaryAssignment x, const Stopwatch& sw) {
  SolverResult r;
  r.solver = std::move(name);
  r.f_best = evaluate(inst, b, x);
  r.x_best = std::move(x);
  r.elapsed_ms = sw.ms();
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exhaustive search

inline constexpr std::size_t kDefaultExhaustiveCap = 26;

/// Exact minimizer over all 2^k assignments, walked in Gray-code order so
/// each step is a single flip. Among (numerically) tied optima the
/// lexicographically smallest bit vector wins.
inline SolverResult exhaustive_solve(const QuboInstance& inst, const ObservedVector& b,
                                     std::size_t max_k = kDefaultExhaustiveCap) {
  require_size(b.size(), inst.size(), "exhaustive_solve: b");
  const std::size_t k = inst.size();
  if (k > max_k || k > 62) {
    throw IntractableError("exhaustive_solve: intractable size k=" + std::to_string(k) +
                           " exceeds the exhaustive cap of " + std::to_string(max_k));
  }
  detail::Stopwatch sw;
  detail::FlipState state(inst, b, std::vector<std::uint8_t>(k, 0));

  // Lexicographic order on (x_0, x_1, ...) is numeric order on the bit-reversed mask.
  std::uint64_t lex = 0;
  std::uint64_t best_lex = 0;
  double f = 0.0;
  double best = 0.0;
  const std::uint64_t total = std::uint64_t{1} << k;
  for (std::uint64_t m = 1; m < total; ++m) {
    const auto j = static_cast<std::size_t>(std::countr_zero(m));
    f += state.delta(j);
    state.flip(j);
    lex ^= std::uint64_t{1} << (k - 1 - j);
    const double tol = 1e-9 * (1.0 + std::abs(best));
    if (f < best - tol || (f <= best + tol && lex < best_lex)) {
      best = f;
      best_lex = lex;
    }
  }
  std::vector<std::uint8_t> x(k);
  for (std::size_t i = 0; i < k; ++i) x[i] = static_cast<std::uint8_t>((best_lex >> (k - 1 - i)) & 1U);
  auto r = detail::finish("exhaustive", inst, b, BinaryAssignment(std::move(x)), sw);
  r.iterations = total;
  r.evaluations = total;
  return r;
}

// ---------------------------------------------------------------------------
// Tabu search

struct TabuParams {
  std::size_t max_steps = 1000;  // T
  std::size_t tenure = 10;       // maximum Tabu-list length
  bool aspiration = false;
  std::optional<BinaryAssignment> start;  // zeros when empty
  std::size_t patience = 50;              // stop after this many non-improving steps; 0 disables
  bool record_trace = true;
};

/// Single-flip Tabu search. The Tabu list holds full assignments (hashed,
/// verified exactly on a hash hit); a neighbour equal to a listed assignment
/// is excluded unless aspiration is on and it beats the best seen.
inline SolverResult tabu_solve(const QuboInstance& inst, const ObservedVector& b, const TabuParams& params) {
  require_size(b.size(), inst.size(), "tabu_solve: b");
  if (params.max_steps < 1) throw std::invalid_argument("tabu_solve: max_steps must be >= 1");
  const std::size_t k = inst.size();
  BinaryAssignment start = params.start.value_or(BinaryAssignment::zeros(k));
  require_size(start.size(), k, "tabu_solve: start");

  detail::Stopwatch sw;
  detail::FlipState state(inst, b, {start.bits().begin(), start.bits().end()});
  double f = evaluate(inst, b, start);
  double best_f = f;
  std::vector<std::uint8_t> best_x(start.bits().begin(), start.bits().end());
  std::uint64_t hash = detail::zobrist_hash(state.bits());

  struct Listed {
    std::uint64_t hash;
    std::vector<std::uint8_t> bits;
  };
  std::deque<Listed> tabu;
  std::unordered_map<std::uint64_t, std::size_t> tabu_count;
  auto push_tabu = [&]() {
    if (params.tenure == 0) return;
    tabu.push_back({hash, {state.bits().begin(), state.bits().end()}});
    ++tabu_count[hash];
    while (tabu.size() > params.tenure) {
      auto it = tabu_count.find(tabu.front().hash);
      if (--it->second == 0) tabu_count.erase(it);
      tabu.pop_front();
    }
  };
  auto is_tabu = [&](std::size_t i) {
    const std::uint64_t h = hash ^ detail::zobrist_key(i);
    if (!tabu_count.contains(h)) return false;
    for (const auto& t : tabu) {
      if (t.hash != h) continue;
      bool same = true;
      for (std::size_t j = 0; j < k && same; ++j) {
        const std::uint8_t xj = j == i ? (state.bits()[j] ^ 1U) : state.bits()[j];
        same = t.bits[j] == xj;
      }
      if (same) return true;
    }
    return false;
  };
  push_tabu();

  SolverResult r;
  std::size_t since_improve = 0;
  std::size_t steps = 0;
  std::size_t evals = 1;
  for (; steps < params.max_steps; ++steps) {
    std::size_t pick = k;
    double pick_delta = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const double d = state.delta(i);
      if (d >= pick_delta) continue;
      if (is_tabu(i) && !(params.aspiration && f + d < best_f)) continue;
      pick = i;
      pick_delta = d;
    }
    evals += k;
    if (pick == k) {
      r.terminated_early = true;
      r.note = "all neighbours tabu at step " + std::to_string(steps);
      break;
    }
    state.flip(pick);
    hash ^= detail::zobrist_key(pick);
    f += pick_delta;
    push_tabu();
    if (f < best_f) {
      best_f = f;
      best_x.assign(state.bits().begin(), state.bits().end());
      since_improve = 0;
    } else {
      ++since_improve;
    }
    if (params.record_trace) r.trace.push_back(best_f);
    if (params.patience > 0 && since_improve >= params.patience) {
      ++steps;
      break;
    }
  }
  auto out = detail::finish("tabu", inst, b, BinaryAssignment(std::move(best_x)), sw);
  out.iterations = steps;
  out.evaluations = evals;
  out.trace = std::move(r.trace);
  out.terminated_early = r.terminated_early;
  out.note = std::move(r.note);
  return out;
}

/// Short Tabu polish used after a neural prediction or a generated guess:
/// T = tenure = max_steps, started from `start`. max_steps = 0 returns the start.
inline SolverResult refine_with_tabu(const QuboInstance& inst, const ObservedVector& b,
                                     const BinaryAssignment& start, std::size_t max_steps = 10) {
  if (max_steps == 0) {
    detail::Stopwatch sw;
    auto r = detail::finish("tabu_refine", inst, b, start, sw);
    r.evaluations = 1;
    return r;
  }
  TabuParams p;
  p.max_steps = max_steps;
  p.tenure = max_steps;
  p.start = start;
  p.patience = 0;
  p.record_trace = false;
  auto r = tabu_solve(inst, b, p);
  r.solver = "tabu_refine";
  return r;
}

// ---------------------------------------------------------------------------
// Simulated bifurcation (ballistic form)

struct SabParams {
  std::size_t steps = 1000;
  double dt = 0.5;
  double a0 = 1.0;
  std::optional<double> c0;  // default 0.5 * sqrt(k) / ||J||_F
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;
};

/// Ballistic simulated bifurcation on the Ising form of the problem. Positions
/// y in [-1, 1] bifurcate towards +-1 as the pump a(t) ramps linearly from 0 to
/// a0; a wall at |y| = 1 zeroes the momentum. Each step is one sparse
/// matrix-vector product.
inline SolverResult sab_solve(const QuboInstance& inst, const ObservedVector& b, const SabParams& params) {
  require_size(b.size(), inst.size(), "sab_solve: b");
  if (params.steps < 1 || !(params.dt > 0) || !(params.a0 > 0) || (params.c0 && !(*params.c0 > 0))) {
    throw std::invalid_argument("sab_solve: require steps >= 1, dt > 0, a0 > 0, c0 > 0");
  }
  detail::Stopwatch sw;
  const std::size_t k = inst.size();
  const IsingModel ising = qubo_to_ising(inst, b);
  // Off-diagonal J + J^T; diagonal couplings are constant on spins.
  const CsrMatrix& sym = inst.coupling().offdiag_sym;
  double fro2 = 0.0;
  for (const auto& e : ising.coupling) {
    if (e.row != e.col) fro2 += e.value * e.value;
  }
  const double c0 = params.c0.value_or(fro2 > 0 ? 0.5 * std::sqrt(static_cast<double>(k) / fro2) : 0.5);

  auto rng = make_rng(params.seed);
  std::uniform_real_distribution<double> init(-0.1, 0.1);
  std::vector<double> y(k), p(k), grad(k);
  for (std::size_t i = 0; i < k; ++i) {
    y[i] = init(rng);
    p[i] = init(rng);
  }

  std::vector<std::uint8_t> x(k);
  BinaryAssignment best_x;
  double best_f = std::numeric_limits<double>::infinity();
  std::size_t evals = 0;
  auto consider = [&] {
    for (std::size_t i = 0; i < k; ++i) x[i] = y[i] > 0.0 ? 1 : 0;
    BinaryAssignment cand(x);
    const double f = evaluate(inst, b, cand);
    ++evals;
    if (f < best_f) {
      best_f = f;
      best_x = std::move(cand);
    }
  };

  SolverResult r;
  for (std::size_t t = 0; t < params.steps; ++t) {
    const double a = params.a0 * static_cast<double>(t) / static_cast<double>(params.steps);
    sym.multiply(y, grad);
    for (std::size_t i = 0; i < k; ++i) {
      // dE/dy_i = ((J + J^T) y)_i + h_i; sym holds 4 (J + J^T).
      const double g = 0.25 * grad[i] + ising.field[i];
      p[i] -= params.dt * ((params.a0 - a) * y[i] + c0 * g);
      y[i] += params.dt * params.a0 * p[i];
      if (!std::isfinite(y[i]) || !std::isfinite(p[i])) {
        throw std::runtime_error("sab_solve: non-finite state at step " + std::to_string(t));
      }
      if (y[i] > 1.0) {
        y[i] = 1.0;
        p[i] = 0.0;
      } else if (y[i] < -1.0) {
        y[i] = -1.0;
        p[i] = 0.0;
      }
    }
    if (params.eval_every > 0 && (t + 1) % params.eval_every == 0) consider();
  }
  consider();
  auto out = detail::finish("sab", inst, b, std::move(best_x), sw);
  out.iterations = params.steps;
  out.evaluations = evals;
  return out;
}

}  // namespace qubolab
