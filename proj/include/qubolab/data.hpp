#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qubolab/io.hpp"
#include "qubolab/parallel.hpp"
#include "qubolab/qubo.hpp"
#include "qubolab/rng.hpp"
#include "qubolab/solvers.hpp"

namespace qubolab {

enum class LabelMode { Tabu, Exhaustive };

inline std::string to_string(LabelMode m) { return m == LabelMode::Tabu ? "tabu" : "exhaustive"; }

inline LabelMode label_mode_from_string(const std::string& s) {
  if (s == "tabu") return LabelMode::Tabu;
  if (s == "exhaustive") return LabelMode::Exhaustive;
  throw std::invalid_argument("unknown label mode '" + s + "' (expected tabu or exhaustive)");
}

struct DataGenParams {
  double sigma = 0.0;          // noise enters as sigma^2 * z
  double mu = 1e-3;            // log-barrier weight
  double eps_bin = 1e-3;       // x_o drawn from {eps, 1 - eps}
  std::size_t refine_steps = 10;
  std::uint64_t seed = 0;
  LabelMode label_mode = LabelMode::Tabu;
  double train_fraction = 0.8;

  void validate() const {
    if (!(sigma >= 0)) throw std::invalid_argument("DataGenParams: sigma must be >= 0");
    if (!(mu > 0)) throw std::invalid_argument("DataGenParams: mu must be > 0");
    if (!(eps_bin > 0 && eps_bin < 0.5)) throw std::invalid_argument("DataGenParams: eps must be in (0, 0.5)");
    if (!(train_fraction >= 0 && train_fraction <= 1)) {
      throw std::invalid_argument("DataGenParams: train fraction must be in [0, 1]");
    }
  }

  friend bool operator==(const DataGenParams&, const DataGenParams&) = default;
};

inline json to_json(const DataGenParams& p) {
  return json{{"sigma", p.sigma},
              {"mu", p.mu},
              {"eps", p.eps_bin},
              {"refine_steps", p.refine_steps},
              {"seed", p.seed},
              {"label_mode", to_string(p.label_mode)},
              {"split", {p.train_fraction, 1.0 - p.train_fraction}}};
}

inline DataGenParams data_params_from_json(const json& j) {
  DataGenParams p;
  p.sigma = j.at("sigma").get<double>();
  p.mu = j.at("mu").get<double>();
  p.eps_bin = j.at("eps").get<double>();
  p.refine_steps = j.at("refine_steps").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.label_mode = label_mode_from_string(j.value("label_mode", std::string("tabu")));
  p.train_fraction = j.at("split").at(0).get<double>();
  return p;
}

struct Provenance {
  std::uint64_t seed = 0;
  double sigma = 0.0;
  bool refined = false;      // refinement changed the rounded guess
  double f_value = 0.0;      // objective of the label
  std::size_t flipped = 0;   // bits changed by refinement

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct DataPair {
  ObservedVector b;
  BinaryAssignment x;
  Provenance provenance;

  friend bool operator==(const DataPair&, const DataPair&) = default;
};

enum class Split { Train, Val };

struct Dataset {
  std::string instance;  // instance file name, informational
  std::size_t k = 0;
  DataGenParams params;
  std::vector<DataPair> pairs;
  std::vector<Split> split;

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == s) out.push_back(i);
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Continuous near-binary point x_o and the observed vector built around it,
/// before any rounding or refinement.
struct BarrierDraw {
  std::vector<double> x_continuous;
  std::vector<double> b_clean;  // satisfies the barrier stationarity condition at x_continuous
  ObservedVector b;             // b_clean + sigma^2 z
};

/// Picks x_o in {eps, 1-eps}^k and inverts the log-barrier stationarity
/// condition (A + A^T) x + b - mu/x + mu/(1-x) = 0 for b.
inline BarrierDraw draw_barrier_pair(const QuboInstance& inst, const DataGenParams& params,
                                     std::uint64_t pair_seed) {
  params.validate();
  const std::size_t k = inst.size();
  auto rng = make_rng(pair_seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);

  BarrierDraw d;
  d.x_continuous.resize(k);
  for (auto& x : d.x_continuous) x = coin(rng) ? 1.0 - params.eps_bin : params.eps_bin;

  // (A + A^T) x = A x + A^T x
  std::vector<double> sym(k, 0.0);
  for (const auto& e : inst.entries()) {
    sym[e.row] += e.value * d.x_continuous[e.col];
    sym[e.col] += e.value * d.x_continuous[e.row];
  }
  d.b_clean.resize(k);
  std::vector<double> b(k);
  const double noise_scale = params.sigma * params.sigma;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = d.x_continuous[i];
    d.b_clean[i] = -sym[i] + params.mu / x - params.mu / (1.0 - x);
    b[i] = d.b_clean[i] + noise_scale * normal(rng);
  }
  d.b = ObservedVector(std::move(b));
  return d;
}

/// One observation/solution pair: draw, round x_o, then label by a short Tabu
/// refinement from the rounded guess (or exhaustively, in LabelMode::Exhaustive).
inline DataPair generate_pair(const QuboInstance& inst, const DataGenParams& params, std::uint64_t pair_seed) {
  BarrierDraw d = draw_barrier_pair(inst, params, pair_seed);
  BinaryAssignment rounded = BinaryAssignment::round(d.x_continuous);
  SolverResult label = params.label_mode == LabelMode::Exhaustive
                           ? exhaustive_solve(inst, d.b)
                           : refine_with_tabu(inst, d.b, rounded, params.refine_steps);
  DataPair p;
  p.provenance.seed = pair_seed;
  p.provenance.sigma = params.sigma;
  p.provenance.flipped = rounded.hamming(label.x_best);
  p.provenance.refined = p.provenance.flipped > 0;
  p.provenance.f_value = label.f_best;
  p.b = std::move(d.b);
  p.x = std::move(label.x_best);
  return p;
}

inline Dataset generate_dataset(const QuboInstance& inst, std::size_t n_pairs, const DataGenParams& params,
                                std::string instance_name = {}, std::size_t workers = 0) {
  if (n_pairs < 1) throw std::invalid_argument("generate_dataset: n_pairs must be >= 1");
  params.validate();
  Dataset ds;
  ds.instance = std::move(instance_name);
  ds.k = inst.size();
  ds.params = params;
  ds.pairs.resize(n_pairs);
  parallel_for(
      n_pairs, [&](std::size_t i) { ds.pairs[i] = generate_pair(inst, params, params.seed ^ i); }, workers);

  std::vector<std::size_t> order(n_pairs);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(mix_seed(params.seed, 0x5b117));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(params.train_fraction * static_cast<double>(n_pairs)));
  ds.split.assign(n_pairs, Split::Val);
  for (std::size_t r = 0; r < n_train; ++r) ds.split[order[r]] = Split::Train;
  return ds;
}

// ---------------------------------------------------------------------------
// JSON Lines persistence

inline std::string dataset_to_jsonl(const Dataset& ds) {
  std::string out;
  out += json{{"k", ds.k}, {"instance", ds.instance}, {"params", to_json(ds.params)}}.dump();
  out += '\n';
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    std::vector<int> x(p.x.bits().begin(), p.x.bits().end());
    json rec{{"b", std::vector<double>(p.b.values().begin(), p.b.values().end())},
             {"x", x},
             {"split", ds.split[i] == Split::Train ? "train" : "val"},
             {"provenance",
              {{"seed", p.provenance.seed},
               {"sigma", p.provenance.sigma},
               {"refined", p.provenance.refined},
               {"f_value", p.provenance.f_value},
               {"flipped", p.provenance.flipped}}}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline Dataset dataset_from_jsonl(const std::string& text, std::optional<std::size_t> expect_k = std::nullopt) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  auto fail = [&](const std::string& msg) {
    throw ParseError("dataset line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    if (line.empty()) {
      ++lineno;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(std::string("malformed JSON (") + e.what() + ")");
    }
    try {
      if (lineno == 0) {
        ds.k = j.at("k").get<std::size_t>();
        ds.instance = j.value("instance", std::string());
        ds.params = data_params_from_json(j.at("params"));
        if (expect_k && *expect_k != ds.k) {
          fail("header k=" + std::to_string(ds.k) + " does not match instance k=" + std::to_string(*expect_k));
        }
        ++lineno;
        continue;
      }
      auto b = j.at("b").get<std::vector<double>>();
      auto xi = j.at("x").get<std::vector<int>>();
      if (b.size() != ds.k) fail("b has length " + std::to_string(b.size()) + ", expected " + std::to_string(ds.k));
      if (xi.size() != ds.k) fail("x has length " + std::to_string(xi.size()) + ", expected " + std::to_string(ds.k));
      std::vector<std::uint8_t> x(ds.k);
      for (std::size_t i = 0; i < ds.k; ++i) {
        if (xi[i] != 0 && xi[i] != 1) fail("x[" + std::to_string(i) + "] = " + std::to_string(xi[i]) + " is not 0/1");
        x[i] = static_cast<std::uint8_t>(xi[i]);
      }
      const auto split = j.at("split").get<std::string>();
      if (split != "train" && split != "val") fail("split must be 'train' or 'val'");
      DataPair p;
      p.b = ObservedVector(std::move(b));
      p.x = BinaryAssignment(std::move(x));
      const auto& pv = j.at("provenance");
      p.provenance.seed = pv.at("seed").get<std::uint64_t>();
      p.provenance.sigma = pv.at("sigma").get<double>();
      p.provenance.refined = pv.at("refined").get<bool>();
      p.provenance.f_value = pv.at("f_value").get<double>();
      p.provenance.flipped = pv.value("flipped", std::size_t{0});
      ds.pairs.push_back(std::move(p));
      ds.split.push_back(split == "train" ? Split::Train : Split::Val);
    } catch (const json::exception& e) {
      fail(std::string("bad field (") + e.what() + ")");
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    ++lineno;
  }
  if (lineno == 0) throw ParseError("dataset: missing header line");
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_text(path, dataset_to_jsonl(ds));
}

inline Dataset read_dataset(const std::filesystem::path& path, std::optional<std::size_t> expect_k = std::nullopt) {
  return dataset_from_jsonl(io::read_text(path), expect_k);
}

}  // namespace qubolab
