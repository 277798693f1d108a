#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qubolab/bpgnn.hpp"
#include "qubolab/data.hpp"
#include "qubolab/io.hpp"
#include "qubolab/parallel.hpp"
#include "qubolab/qubo.hpp"
#include "qubolab/rng.hpp"
#include "qubolab/solvers.hpp"

namespace qubolab {

struct UndefinedReferenceError : std::domain_error {
  using std::domain_error::domain_error;
};

inline constexpr double kReferenceTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Metrics

inline double accuracy(const BinaryAssignment& x_o, const BinaryAssignment& x_p) {
  require_size(x_p.size(), x_o.size(), "accuracy: x_p");
  if (x_o.size() == 0) return 1.0;
  return 1.0 - static_cast<double>(x_o.hamming(x_p)) / static_cast<double>(x_o.size());
}

inline double rel_qubo_from_values(double f_o, double f_p) {
  if (std::abs(f_o) <= kReferenceTolerance) {
    throw UndefinedReferenceError("rel_qubo: undefined reference objective (|f_o| <= 1e-12)");
  }
  return (f_p - f_o) / std::abs(f_o);
}

inline double rel_qubo(const QuboInstance& inst, const ObservedVector& b, const BinaryAssignment& x_o,
                       const BinaryAssignment& x_p) {
  return rel_qubo_from_values(evaluate(inst, b, x_o), evaluate(inst, b, x_p));
}

/// Edge homophily: fraction of graph edges whose endpoints carry equal labels.
inline double homophily(const QuboInstance& inst, const BinaryAssignment& labels) {
  require_size(labels.size(), inst.size(), "homophily: labels");
  const GraphView g(inst);
  if (g.edges.empty()) throw std::invalid_argument("homophily: graph has no edges");
  std::size_t same = 0;
  for (auto [i, j] : g.edges) same += labels[i] == labels[j];
  return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

// ---------------------------------------------------------------------------
// Sensitivity of the optimum to the linear term

struct SensitivityTrial {
  BinaryAssignment x0, x_eps;
  double f0 = 0.0, f_eps = 0.0;
  double lower = 0.0;   // delta^T x_eps
  double slope = 0.0;   // (f_eps - f0) / eps
  double upper = 0.0;   // delta^T x0

  bool bounds_hold(double tol = 1e-9) const {
    const double t = tol * (1.0 + std::abs(slope));
    return lower <= slope + t && slope <= upper + t;
  }
  bool unchanged() const { return x0 == x_eps; }
};

/// Exact optima at b and at b + eps * delta.
inline SensitivityTrial sensitivity_trial(const QuboInstance& inst, const ObservedVector& b,
                                          std::span<const double> delta, double eps,
                                          std::size_t cap = kDefaultExhaustiveCap) {
  require_size(delta.size(), inst.size(), "sensitivity_trial: delta");
  std::vector<double> bp(b.values().begin(), b.values().end());
  for (std::size_t i = 0; i < bp.size(); ++i) bp[i] += eps * delta[i];
  auto r0 = exhaustive_solve(inst, b, cap);
  auto re = exhaustive_solve(inst, ObservedVector(std::move(bp)), cap);
  SensitivityTrial t;
  t.f0 = r0.f_best;
  t.f_eps = re.f_best;
  t.slope = (t.f_eps - t.f0) / eps;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    t.lower += delta[i] * re.x_best[i];
    t.upper += delta[i] * r0.x_best[i];
  }
  t.x0 = std::move(r0.x_best);
  t.x_eps = std::move(re.x_best);
  return t;
}

inline std::vector<double> random_unit_vector(std::size_t k, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(k);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (auto& x : v) {
      x = n(rng);
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// Landscape probe: phi(s, t) = |x(s, t) - x(0, 0)|^2 with
// x(s, t) = argmin x^T A x + (b + t b1 + s b2)^T x

struct LandscapeOptions {
  double range = 3.0;
  std::size_t resolution = 41;
  std::uint64_t seed = 0;
  std::optional<std::vector<double>> b1, b2;  // drawn when absent
  std::size_t exhaustive_cap = kDefaultExhaustiveCap;
  TabuParams tabu;
  std::size_t workers = 0;
};

struct LandscapeGrid {
  std::vector<double> s, t;
  std::vector<int> phi;  // row-major, phi[i * t.size() + j] at (s[i], t[j])
  std::vector<double> b1, b2;
  ObservedVector base;
  std::string solver;  // "exhaustive" or "tabu", same for every cell

  int at(std::size_t i, std::size_t j) const { return phi[i * t.size() + j]; }

  std::size_t distinct_values() const { return std::set<int>(phi.begin(), phi.end()).size(); }

  /// Fraction of cells whose value equals at least one 4-neighbour.
  double plateau_fraction() const {
    const std::size_t ns = s.size(), nt = t.size();
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ns; ++i) {
      for (std::size_t j = 0; j < nt; ++j) {
        const int v = at(i, j);
        const bool m = (i > 0 && at(i - 1, j) == v) || (i + 1 < ns && at(i + 1, j) == v) ||
                       (j > 0 && at(i, j - 1) == v) || (j + 1 < nt && at(i, j + 1) == v);
        hit += m;
      }
    }
    return phi.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(phi.size());
  }

  std::string to_csv() const {
    std::string out = "s,t,phi\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < t.size(); ++j) {
        out += io::format_double(s[i]) + "," + io::format_double(t[j]) + "," + std::to_string(at(i, j)) + "\n";
      }
    }
    return out;
  }
};

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = 0.5 * (lo + hi);
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) {
    // midpoint exact at 0 for symmetric odd grids
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    if (2 * i + 1 == n && lo == -hi) v[i] = 0.0;
  }
  return v;
}

inline SolverResult solve_exact_or_tabu(const QuboInstance& inst, const ObservedVector& b, std::size_t cap,
                                        const TabuParams& tabu) {
  return inst.size() <= cap ? exhaustive_solve(inst, b, cap) : tabu_solve(inst, b, tabu);
}

}  // namespace detail

inline LandscapeGrid probe_landscape(const QuboInstance& inst, const ObservedVector& b,
                                     const LandscapeOptions& opt = {}) {
  const std::size_t k = inst.size();
  require_size(b.size(), k, "probe_landscape: b");
  if (opt.resolution < 1) throw std::invalid_argument("probe_landscape: resolution must be >= 1");
  LandscapeGrid g;
  g.base = b;
  g.solver = k <= opt.exhaustive_cap ? "exhaustive" : "tabu";
  if (opt.b1 && opt.b2) {
    require_size(opt.b1->size(), k, "probe_landscape: b1");
    require_size(opt.b2->size(), k, "probe_landscape: b2");
    g.b1 = *opt.b1;
    g.b2 = *opt.b2;
  } else {
    auto rng = make_rng(mix_seed(opt.seed, 0x1a9d));
    g.b1 = random_unit_vector(k, rng);
    g.b2 = random_unit_vector(k, rng);
    // Gram-Schmidt b2 against b1, redrawing in the (measure-zero) parallel case
    for (;;) {
      double dot = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < k; ++i) dot += g.b1[i] * g.b2[i];
      for (std::size_t i = 0; i < k; ++i) g.b2[i] -= dot * g.b1[i];
      for (double x : g.b2) norm += x * x;
      if (norm > 1e-12 || k < 2) {
        norm = std::sqrt(norm);
        if (norm > 0) for (auto& x : g.b2) x /= norm;
        break;
      }
      g.b2 = random_unit_vector(k, rng);
    }
  }
  g.s = detail::linspace(-opt.range, opt.range, opt.resolution);
  g.t = g.s;
  const auto origin = detail::solve_exact_or_tabu(inst, b, opt.exhaustive_cap, opt.tabu).x_best;
  const std::size_t nt = g.t.size();
  g.phi.assign(g.s.size() * nt, 0);
  parallel_for(
      g.phi.size(),
      [&](std::size_t cell) {
        const double s = g.s[cell / nt], t = g.t[cell % nt];
        std::vector<double> bc(b.values().begin(), b.values().end());
        for (std::size_t i = 0; i < k; ++i) bc[i] += t * g.b1[i] + s * g.b2[i];
        const auto x = detail::solve_exact_or_tabu(inst, ObservedVector(std::move(bc)), opt.exhaustive_cap,
                                                   opt.tabu).x_best;
        g.phi[cell] = static_cast<int>(x.hamming(origin));
      },
      opt.workers);
  return g;
}

// ---------------------------------------------------------------------------
// Ising sweep over the scalar field b in x^T A x - b e^T x

struct IsingSweep {
  std::vector<double> b_values;
  std::vector<BinaryAssignment> solutions;
  std::vector<std::size_t> change_points;  // sample indices i with solution[i] != solution[i - 1]
  std::string solver;

  std::string to_csv() const {
    std::string out = "b,changed\n";
    std::size_t c = 0;
    for (std::size_t i = 0; i < b_values.size(); ++i) {
      const bool changed = c < change_points.size() && change_points[c] == i;
      c += changed;
      out += io::format_double(b_values[i]) + "," + (changed ? "1" : "0") + "\n";
    }
    return out;
  }
};

inline IsingSweep ising_sweep(const QuboInstance& adjacency, double b_min, double b_max, std::size_t samples,
                              std::size_t cap = kDefaultExhaustiveCap, const TabuParams& tabu = {},
                              std::size_t workers = 0) {
  if (samples < 1) throw std::invalid_argument("ising_sweep: samples must be >= 1");
  if (!(b_min <= b_max)) throw std::invalid_argument("ising_sweep: b_min must be <= b_max");
  IsingSweep out;
  out.solver = adjacency.size() <= cap ? "exhaustive" : "tabu";
  out.b_values = samples == 1 ? std::vector<double>{b_min} : detail::linspace(b_min, b_max, samples);
  out.solutions.resize(samples);
  parallel_for(
      samples,
      [&](std::size_t i) {
        auto [inst, b] = gen_ising(adjacency, out.b_values[i]);
        out.solutions[i] = detail::solve_exact_or_tabu(inst, b, cap, tabu).x_best;
      },
      workers);
  for (std::size_t i = 1; i < samples; ++i) {
    if (out.solutions[i] != out.solutions[i - 1]) out.change_points.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hybrid inference

struct HybridResult {
  SolverResult result;  // the refined solution
  BinaryAssignment x_neural;
  double f_neural = 0.0;
  double neural_ms = 0.0;
};

inline HybridResult hybrid_infer(const BpgnnModel& model, const QuboInstance& inst, const ObservedVector& b,
                                 std::size_t refine_steps = 10) {
  require_size(b.size(), inst.size(), "hybrid_infer: b");
  detail::Stopwatch sw;
  HybridResult h;
  h.x_neural = predict(model, b);
  h.neural_ms = sw.ms();
  h.f_neural = evaluate(inst, b, h.x_neural);
  h.result = refine_with_tabu(inst, b, h.x_neural, refine_steps);
  h.result.solver = "bpgnn+ts";
  h.result.elapsed_ms += h.neural_ms;
  return h;
}

// ---------------------------------------------------------------------------
// Evaluation records and benchmarks

struct EvalRecord {
  std::string method;
  std::string instance;
  std::string dataset;
  std::size_t examples = 0;
  double accuracy = 0.0;
  double rel_qubo = 0.0;  // mean over examples with a defined reference
  std::size_t rel_qubo_skipped = 0;
  double elapsed_ms = 0.0;  // mean per example
};

inline std::string eval_records_to_csv(std::span<const EvalRecord> recs) {
  std::string out = "method,instance,dataset,examples,accuracy,rel_qubo,rel_qubo_skipped,elapsed_ms\n";
  for (const auto& r : recs) {
    out += r.method + "," + r.instance + "," + r.dataset + "," + std::to_string(r.examples) + "," +
           io::format_double(r.accuracy) + "," + io::format_double(r.rel_qubo) + "," +
           std::to_string(r.rel_qubo_skipped) + "," + io::format_double(r.elapsed_ms) + "\n";
  }
  return out;
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"exhaustive", "tabu", "sab", "bpgnn", "bpgnn+ts"};
  return m;
}

inline bool is_neural(const std::string& method) { return method == "bpgnn" || method == "bpgnn+ts"; }

struct BenchmarkCase {
  std::string name;
  const QuboInstance* instance = nullptr;
  const Dataset* dataset = nullptr;     // observed vectors come from its validation split
  const BpgnnModel* model = nullptr;    // required for neural methods
};

struct BenchmarkOptions {
  std::vector<std::string> methods{"exhaustive", "tabu", "sab"};
  std::size_t max_examples = 20;  // validation examples per instance
  std::size_t exhaustive_cap = kDefaultExhaustiveCap;
  TabuParams tabu;
  SabParams sab;
  std::size_t refine_steps = 10;
  std::size_t workers = 0;
};

struct BenchmarkRow {
  std::string method;
  std::size_t k = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double relqubo_mean = 0.0, relqubo_std = 0.0;
  double time_ms_mean = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<EvalRecord> per_instance;  // one record per (instance, method)
  std::string reference;                 // "exhaustive" or "best-known"

  std::string to_csv() const {
    std::string out = "method,k,acc_mean,acc_std,relqubo_mean,relqubo_std,time_ms_mean\n";
    for (const auto& r : rows) {
      out += r.method + "," + std::to_string(r.k) + "," + io::format_double(r.acc_mean) + "," +
             io::format_double(r.acc_std) + "," + io::format_double(r.relqubo_mean) + "," +
             io::format_double(r.relqubo_std) + "," + io::format_double(r.time_ms_mean) + "\n";
    }
    return out;
  }
};

namespace detail {

inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace detail

/// Runs every method on the validation observations of every case. The
/// reference per observation is the exhaustive optimum when k fits under the
/// cap, otherwise the best assignment found by any method or stored as the
/// dataset label. Rows aggregate per-instance means (mean and population std
/// across instances). Observations whose reference objective is ~0 are left
/// out of rel_qubo and counted in `rel_qubo_skipped`.
inline BenchmarkReport benchmark(std::span<const BenchmarkCase> cases, const BenchmarkOptions& opt) {
  if (cases.empty()) throw std::invalid_argument("benchmark: no instances");
  for (const auto& m : opt.methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw std::invalid_argument("benchmark: unknown method '" + m + "'");
    }
  }
  const std::size_t k = cases.front().instance->size();
  for (const auto& c : cases) {
    if (!c.instance || !c.dataset) throw std::invalid_argument("benchmark: case '" + c.name + "' is incomplete");
    if (c.instance->size() != k) throw DimensionError("benchmark: all instances must share k");
    require_size(c.dataset->k, k, "benchmark: dataset k");
    for (const auto& m : opt.methods) {
      if (is_neural(m) && !c.model) {
        throw std::invalid_argument("benchmark: method '" + m + "' needs a trained model for '" + c.name + "'");
      }
    }
  }
  const bool exact_ref = k <= opt.exhaustive_cap;
  BenchmarkReport rep;
  rep.reference = exact_ref ? "exhaustive" : "best-known";
  const std::size_t nm = opt.methods.size();

  std::vector<std::vector<double>> inst_acc(nm), inst_rel(nm);
  std::vector<double> time_sum(nm, 0.0);
  std::vector<std::size_t> time_n(nm, 0);

  for (const auto& c : cases) {
    auto idx = c.dataset->indices(Split::Val);
    if (idx.empty()) idx = c.dataset->indices(Split::Train);
    if (idx.size() > opt.max_examples) idx.resize(opt.max_examples);
    const std::size_t ne = idx.size();
    std::vector<std::vector<SolverResult>> res(ne, std::vector<SolverResult>(nm));
    std::vector<BinaryAssignment> ref(ne);

    parallel_for(
        ne,
        [&](std::size_t e) {
          const auto& pair = c.dataset->pairs[idx[e]];
          const auto& b = pair.b;
          std::optional<SolverResult> exact;
          for (std::size_t m = 0; m < nm; ++m) {
            const auto& name = opt.methods[m];
            if (name == "exhaustive") {
              res[e][m] = exhaustive_solve(*c.instance, b, opt.exhaustive_cap);
              exact = res[e][m];
            } else if (name == "tabu") {
              res[e][m] = tabu_solve(*c.instance, b, opt.tabu);
            } else if (name == "sab") {
              auto sp = opt.sab;
              sp.seed = mix_seed(opt.sab.seed, idx[e]);
              res[e][m] = sab_solve(*c.instance, b, sp);
            } else if (name == "bpgnn") {
              detail::Stopwatch sw;
              auto x = predict(*c.model, b);
              const double ms = sw.ms();
              SolverResult r;
              r.solver = "bpgnn";
              r.f_best = evaluate(*c.instance, b, x);
              r.x_best = std::move(x);
              r.elapsed_ms = ms;
              res[e][m] = std::move(r);
            } else {
              res[e][m] = hybrid_infer(*c.model, *c.instance, b, opt.refine_steps).result;
            }
          }
          if (exact_ref) {
            ref[e] = exact ? exact->x_best : exhaustive_solve(*c.instance, b, opt.exhaustive_cap).x_best;
          } else {
            ref[e] = pair.x;
            double best = evaluate(*c.instance, b, pair.x);
            for (const auto& r : res[e]) {
              if (r.f_best < best) {
                best = r.f_best;
                ref[e] = r.x_best;
              }
            }
          }
        },
        opt.workers);

    for (std::size_t m = 0; m < nm; ++m) {
      EvalRecord rec;
      rec.method = opt.methods[m];
      rec.instance = c.name;
      rec.dataset = c.dataset->instance;
      rec.examples = ne;
      double acc = 0.0, rel = 0.0, ms = 0.0;
      std::size_t rel_n = 0;
      for (std::size_t e = 0; e < ne; ++e) {
        const auto& b = c.dataset->pairs[idx[e]].b;
        acc += accuracy(ref[e], res[e][m].x_best);
        ms += res[e][m].elapsed_ms;
        const double fo = evaluate(*c.instance, b, ref[e]);
        if (std::abs(fo) > kReferenceTolerance) {
          rel += rel_qubo_from_values(fo, res[e][m].f_best);
          ++rel_n;
        } else {
          ++rec.rel_qubo_skipped;
        }
      }
      rec.accuracy = ne ? acc / static_cast<double>(ne) : std::numeric_limits<double>::quiet_NaN();
      rec.rel_qubo = rel_n ? rel / static_cast<double>(rel_n) : std::numeric_limits<double>::quiet_NaN();
      rec.elapsed_ms = ne ? ms / static_cast<double>(ne) : 0.0;
      inst_acc[m].push_back(rec.accuracy);
      if (rel_n) inst_rel[m].push_back(rec.rel_qubo);
      time_sum[m] += ms;
      time_n[m] += ne;
      rep.per_instance.push_back(std::move(rec));
    }
  }

  for (std::size_t m = 0; m < nm; ++m) {
    BenchmarkRow row;
    row.method = opt.methods[m];
    row.k = k;
    std::tie(row.acc_mean, row.acc_std) = detail::mean_std(inst_acc[m]);
    std::tie(row.relqubo_mean, row.relqubo_std) = detail::mean_std(inst_rel[m]);
    row.time_ms_mean = time_n[m] ? time_sum[m] / static_cast<double>(time_n[m]) : 0.0;
    rep.rows.push_back(row);
  }
  return rep;
}

/// Pure-neural and hybrid records for a trained model on a dataset's
/// validation split, scored against the stored labels.
inline std::vector<EvalRecord> evaluate_on_dataset(const BpgnnModel& model, const QuboInstance& inst,
                                                   const Dataset& ds, std::string instance_name,
                                                   std::string dataset_name, std::size_t refine_steps = 10) {
  require_size(ds.k, inst.size(), "evaluate_on_dataset: dataset k");
  require_size(model.size(), inst.size(), "evaluate_on_dataset: model k");
  auto idx = ds.indices(Split::Val);
  if (idx.empty()) idx = ds.indices(Split::Train);
  EvalRecord neural{"bpgnn", instance_name, dataset_name}, hybrid{"bpgnn+ts", instance_name, dataset_name};
  std::size_t nrel = 0;
  for (auto i : idx) {
    const auto& p = ds.pairs[i];
    const auto h = hybrid_infer(model, inst, p.b, refine_steps);
    neural.accuracy += accuracy(p.x, h.x_neural);
    hybrid.accuracy += accuracy(p.x, h.result.x_best);
    neural.elapsed_ms += h.neural_ms;
    hybrid.elapsed_ms += h.result.elapsed_ms;
    const double fo = evaluate(inst, p.b, p.x);
    if (std::abs(fo) > kReferenceTolerance) {
      neural.rel_qubo += rel_qubo_from_values(fo, h.f_neural);
      hybrid.rel_qubo += rel_qubo_from_values(fo, h.result.f_best);
      ++nrel;
    } else {
      ++neural.rel_qubo_skipped;
      ++hybrid.rel_qubo_skipped;
    }
  }
  for (auto* r : {&neural, &hybrid}) {
    r->examples = idx.size();
    const double n = static_cast<double>(std::max<std::size_t>(idx.size(), 1));
    r->accuracy /= n;
    r->elapsed_ms /= n;
    r->rel_qubo = nrel ? r->rel_qubo / static_cast<double>(nrel) : std::numeric_limits<double>::quiet_NaN();
  }
  return {neural, hybrid};
}

}  // namespace qubolab
