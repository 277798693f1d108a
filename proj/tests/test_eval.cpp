#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "qubolab/eval.hpp"

using namespace qubolab;

namespace {

QuboInstance k2() { return QuboInstance(2, {{0, 1, 1.0}}); }

QuboInstance cycle(std::size_t n) {
  std::vector<Entry> e;
  for (std::size_t i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, 1.0});
  return QuboInstance(n, e);
}

Dataset make_dataset(const QuboInstance& inst, std::size_t n, std::uint64_t seed, double sigma = 0.7) {
  DataGenParams p;
  p.sigma = sigma;
  p.seed = seed;
  return generate_dataset(inst, n, p, "inst");
}

std::string numeric_columns(const BenchmarkReport& r) {
  std::string out;
  for (const auto& row : r.rows) {
    out += row.method + "," + std::to_string(row.k) + "," + io::format_double(row.acc_mean) + "," +
           io::format_double(row.acc_std) + "," + io::format_double(row.relqubo_mean) + "," +
           io::format_double(row.relqubo_std) + "\n";
  }
  return out;
}

}  // namespace

TEST(Metrics, Accuracy) {
  BinaryAssignment a({1, 0, 1, 0});
  EXPECT_EQ(accuracy(a, a), 1.0);
  EXPECT_EQ(accuracy(a, BinaryAssignment({1, 0, 0, 0})), 0.75);
  EXPECT_EQ(accuracy(a, BinaryAssignment({0, 1, 0, 1})), 0.0);
  EXPECT_THROW(accuracy(a, BinaryAssignment({1, 0})), DimensionError);
}

TEST(Metrics, RelQubo) {
  ObservedVector b({-1.0, 0.5});
  BinaryAssignment xo({1, 0}), xp({0, 0});
  EXPECT_EQ(rel_qubo(k2(), b, xo, xo), 0.0);
  EXPECT_DOUBLE_EQ(rel_qubo(k2(), b, xo, xp), 1.0);
  try {
    rel_qubo(k2(), b, xp, xo);
    FAIL();
  } catch (const UndefinedReferenceError& e) {
    EXPECT_NE(std::string(e.what()).find("undefined reference objective"), std::string::npos);
  }
}

TEST(Metrics, RelQuboNonNegativeAgainstOptimum) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 30; ++t) {
    auto inst = gen_random_dense(10, 100 + t);
    ObservedVector b(oracle::normal_vector(10, 200 + t));
    auto opt = exhaustive_solve(inst, b);
    for (int j = 0; j < 10; ++j) EXPECT_GE(rel_qubo(inst, b, opt.x_best, oracle::random_bits(10, rng)), 0.0);
  }
}

TEST(Metrics, InvariantUnderJointPermutation) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    auto inst = gen_random_dense(9, 300 + t);
    ObservedVector b(oracle::normal_vector(9, 400 + t));
    auto xo = exhaustive_solve(inst, b).x_best;
    auto xp = oracle::random_bits(9, rng);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto pi = permute(inst, perm);
    ObservedVector pb(permute_values<double>(b.values(), perm));
    BinaryAssignment pxo(permute_values<std::uint8_t>(xo.bits(), perm));
    BinaryAssignment pxp(permute_values<std::uint8_t>(xp.bits(), perm));
    EXPECT_EQ(accuracy(pxo, pxp), accuracy(xo, xp));
    EXPECT_NEAR(rel_qubo(pi, pb, pxo, pxp), rel_qubo(inst, b, xo, xp), 1e-12);
  }
}

TEST(Homophily, Examples) {
  EXPECT_EQ(homophily(cycle(6), BinaryAssignment::ones(6)), 1.0);
  EXPECT_EQ(homophily(cycle(6), BinaryAssignment({0, 1, 0, 1, 0, 1})), 0.0);
  EXPECT_THROW(homophily(QuboInstance(3, {{1, 1, 2.0}}), BinaryAssignment::zeros(3)), std::invalid_argument);
}

TEST(Homophily, LatticeSolutionsAreWeaklyHomophilic) {
  auto inst = gen_lattice_laplacian(8);
  DataGenParams dp;
  dp.sigma = 1.5;
  std::vector<double> h;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto pair = generate_pair(inst, dp, s);
    SabParams sp;
    sp.seed = s;
    h.push_back(homophily(inst, sab_solve(inst, pair.b, sp).x_best));
  }
  std::sort(h.begin(), h.end());
  const double median = h[h.size() / 2];
  RecordProperty("median_homophily", std::to_string(median));
  std::cout << "median lattice homophily (SAB): " << median << "\n";
  EXPECT_GT(median, 0.0);
  EXPECT_LT(median, 0.8);
}

TEST(Sensitivity, BoundsHoldAndTinyPerturbationsKeepTheOptimum) {
  auto rng = make_rng(9);
  for (int t = 0; t < 30; ++t) {
    auto inst = gen_random_dense(10, 500 + t);
    ObservedVector b(oracle::normal_vector(10, 600 + t));
    auto delta = random_unit_vector(10, rng);
    for (double eps : {1e-3, 1e-2, 1e-1}) EXPECT_TRUE(sensitivity_trial(inst, b, delta, eps).bounds_hold());
    double binf = 0.0;
    for (double v : b.values()) binf = std::max(binf, std::abs(v));
    EXPECT_TRUE(sensitivity_trial(inst, b, delta, 1e-6 * (1 + binf)).unchanged());
  }
  EXPECT_THROW(sensitivity_trial(k2(), ObservedVector::zeros(2), std::vector<double>{1.0}, 0.1), DimensionError);
}

TEST(Landscape, OriginIntegerValuesAndAxes) {
  auto inst = gen_random_dense(8, 3);
  ObservedVector b(oracle::normal_vector(8, 4));
  LandscapeOptions o;
  o.resolution = 11;
  o.seed = 2;
  auto g = probe_landscape(inst, b, o);
  ASSERT_EQ(g.phi.size(), 121u);
  EXPECT_EQ(g.s[5], 0.0);
  EXPECT_EQ(g.t[5], 0.0);
  EXPECT_EQ(g.at(5, 5), 0);
  EXPECT_EQ(g.solver, "exhaustive");
  for (int v : g.phi) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 8);
  }
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    dot += g.b1[i] * g.b2[i];
    n1 += g.b1[i] * g.b1[i];
    n2 += g.b2[i] * g.b2[i];
  }
  EXPECT_NEAR(dot, 0.0, 1e-12);
  EXPECT_NEAR(n1, 1.0, 1e-12);
  EXPECT_NEAR(n2, 1.0, 1e-12);
  const auto csv = g.to_csv();
  EXPECT_EQ(csv.substr(0, 8), "s,t,phi\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 122);
}

TEST(Landscape, SwappingDirectionsTransposesTheGrid) {
  auto inst = gen_random_dense(8, 7);
  ObservedVector b(oracle::normal_vector(8, 8));
  LandscapeOptions o;
  o.resolution = 9;
  auto g = probe_landscape(inst, b, o);
  LandscapeOptions sw = o;
  sw.b1 = g.b2;
  sw.b2 = g.b1;
  auto h = probe_landscape(inst, b, sw);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) EXPECT_EQ(h.at(i, j), g.at(j, i));
}

TEST(Landscape, DeterministicAcrossWorkersAndTabuAboveCap) {
  auto inst = gen_random_dense(8, 1);
  ObservedVector b(oracle::normal_vector(8, 2));
  LandscapeOptions o;
  o.resolution = 7;
  o.workers = 1;
  auto a = probe_landscape(inst, b, o);
  o.workers = 4;
  EXPECT_EQ(probe_landscape(inst, b, o).phi, a.phi);
  o.exhaustive_cap = 4;
  auto t = probe_landscape(inst, b, o);
  EXPECT_EQ(t.solver, "tabu");
  EXPECT_EQ(t.at(3, 3), 0);
}

TEST(IsingSweep, FieldExtremesAndFewChangePoints) {
  auto adj = lattice_adjacency(3);
  auto s = ising_sweep(adj, -20.0, 20.0, 200);
  EXPECT_EQ(s.solver, "exhaustive");
  EXPECT_EQ(s.solutions.front(), BinaryAssignment::zeros(9));
  EXPECT_EQ(s.solutions.back(), BinaryAssignment::ones(9));
  EXPECT_GE(s.change_points.size(), 1u);
  EXPECT_LE(s.change_points.size(), 10u);
  const auto csv = s.to_csv();
  EXPECT_EQ(csv.substr(0, 10), "b,changed\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 201);
  EXPECT_THROW(ising_sweep(adj, 1.0, -1.0, 10), std::invalid_argument);
}

TEST(Hybrid, NeverWorseThanNeuralAndKeepsOptimalPredictions) {
  auto inst = gen_random_dense(10, 42, 0.2);
  auto ds = make_dataset(inst, 100, 3);
  BpgnnConfig c;
  c.hidden = 8;
  c.layers = 2;
  BpgnnModel m(c, inst);
  for (const auto& p : ds.pairs) {
    auto h = hybrid_infer(m, inst, p.b);
    EXPECT_LE(h.result.f_best, h.f_neural + 1e-12);
    EXPECT_EQ(h.result.solver, "bpgnn+ts");
    EXPECT_NEAR(h.f_neural, evaluate(inst, p.b, h.x_neural), 1e-12);
    auto opt = exhaustive_solve(inst, p.b);
    if (h.x_neural == opt.x_best) {
      EXPECT_EQ(h.result.x_best, opt.x_best);
    }
  }
  auto recs = evaluate_on_dataset(m, inst, ds, "inst", "ds");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].method, "bpgnn");
  EXPECT_EQ(recs[1].method, "bpgnn+ts");
  EXPECT_LE(recs[1].rel_qubo, recs[0].rel_qubo + 1e-12);
  EXPECT_EQ(recs[0].examples, ds.indices(Split::Val).size());
  const auto csv = eval_records_to_csv(recs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,instance,dataset,examples,accuracy,rel_qubo,rel_qubo_skipped,elapsed_ms");
}

TEST(Benchmark, ExhaustiveRowIsExactAndOthersNonNegative) {
  std::vector<QuboInstance> insts;
  std::vector<Dataset> data;
  for (std::uint64_t r = 0; r < 3; ++r) {
    insts.push_back(gen_random_dense(10, 70 + r, 0.2));
    data.push_back(make_dataset(insts.back(), 40, r));
  }
  BpgnnConfig c;
  c.hidden = 8;
  c.layers = 2;
  std::vector<BpgnnModel> models;
  for (const auto& i : insts) models.emplace_back(c, i);
  std::vector<BenchmarkCase> cases;
  for (std::size_t r = 0; r < 3; ++r) cases.push_back({"r" + std::to_string(r), &insts[r], &data[r], &models[r]});
  BenchmarkOptions o;
  o.methods = {"exhaustive", "tabu", "sab", "bpgnn", "bpgnn+ts"};
  o.max_examples = 8;
  auto rep = benchmark(cases, o);
  EXPECT_EQ(rep.reference, "exhaustive");
  ASSERT_EQ(rep.rows.size(), 5u);
  EXPECT_EQ(rep.rows[0].acc_mean, 1.0);
  EXPECT_EQ(rep.rows[0].relqubo_mean, 0.0);
  EXPECT_EQ(rep.rows[0].acc_std, 0.0);
  for (const auto& row : rep.rows) {
    EXPECT_EQ(row.k, 10u);
    EXPECT_GE(row.relqubo_mean, 0.0) << row.method;
    EXPECT_GE(row.acc_mean, 0.0);
    EXPECT_LE(row.acc_mean, 1.0);
  }
  EXPECT_LE(rep.rows[4].relqubo_mean, rep.rows[3].relqubo_mean + 1e-12);
  EXPECT_EQ(rep.per_instance.size(), 15u);
  const auto csv = rep.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,k,acc_mean,acc_std,relqubo_mean,relqubo_std,time_ms_mean");

  o.workers = 3;
  EXPECT_EQ(numeric_columns(benchmark(cases, o)), numeric_columns(rep));
}

TEST(Benchmark, BestKnownReferenceAboveCap) {
  auto inst = gen_random_dense(10, 5, 0.2);
  auto ds = make_dataset(inst, 30, 1);
  std::vector<BenchmarkCase> cases{{"a", &inst, &ds, nullptr}};
  BenchmarkOptions o;
  o.methods = {"tabu", "sab"};
  o.exhaustive_cap = 8;
  auto rep = benchmark(cases, o);
  EXPECT_EQ(rep.reference, "best-known");
  for (const auto& row : rep.rows) EXPECT_GE(row.relqubo_mean, 0.0);
}

TEST(Benchmark, Errors) {
  auto inst = gen_random_dense(6, 5);
  auto ds = make_dataset(inst, 10, 1);
  std::vector<BenchmarkCase> cases{{"a", &inst, &ds, nullptr}};
  BenchmarkOptions o;
  o.methods = {"tabu", "bpgnn"};
  try {
    benchmark(cases, o);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("trained model"), std::string::npos);
  }
  o.methods = {"gurobi"};
  EXPECT_THROW(benchmark(cases, o), std::invalid_argument);
  EXPECT_THROW(benchmark({}, {}), std::invalid_argument);
}
