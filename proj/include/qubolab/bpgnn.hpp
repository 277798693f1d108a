#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qubolab/data.hpp"
#include "qubolab/io.hpp"
#include "qubolab/qubo.hpp"
#include "qubolab/rng.hpp"
#include "qubolab/tensor.hpp"

namespace qubolab {

struct BpgnnConfig {
  std::size_t hidden = 32;       // d
  std::size_t layers = 4;        // L
  double step = 0.5;             // forward-Euler step of the diffusion and reaction updates
  double dropout = 0.0;
  bool use_qubo_features = true;
  bool learn_diffusion = true;   // per-channel non-negative diffusion coefficients; off = plain L
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden < 1) throw std::invalid_argument("BpgnnConfig: hidden width must be >= 1");
    if (layers < 1) throw std::invalid_argument("BpgnnConfig: layer count must be >= 1");
    if (!(step > 0)) throw std::invalid_argument("BpgnnConfig: step must be > 0");
    if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("BpgnnConfig: dropout must be in [0, 1)");
  }

  friend bool operator==(const BpgnnConfig&, const BpgnnConfig&) = default;
};

inline json to_json(const BpgnnConfig& c) {
  return json{{"hidden", c.hidden},   {"layers", c.layers},
              {"step", c.step},       {"dropout", c.dropout},
              {"use_qubo_features", c.use_qubo_features},
              {"learn_diffusion", c.learn_diffusion},
              {"seed", c.seed}};
}

inline BpgnnConfig bpgnn_config_from_json(const json& j) {
  BpgnnConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.step = j.at("step").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.use_qubo_features = j.at("use_qubo_features").get<bool>();
  c.learn_diffusion = j.value("learn_diffusion", true);
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

/// Symmetric normalized Laplacian I - D^{-1/2} Ā D^{-1/2} of the unweighted,
/// symmetrized sparsity pattern of A. Isolated nodes keep L_ii = 1.
inline CsrMatrix build_laplacian(const QuboInstance& inst) {
  const GraphView g(inst);
  std::vector<std::tuple<std::size_t, std::size_t, double>> t;
  t.reserve(g.k + 2 * g.edges.size());
  for (std::size_t i = 0; i < g.k; ++i) t.emplace_back(i, i, 1.0);
  for (auto [i, j] : g.edges) {
    const double w = -1.0 / std::sqrt(static_cast<double>(g.degree[i] * g.degree[j]));
    t.emplace_back(i, j, w);
    t.emplace_back(j, i, w);
  }
  return CsrMatrix::from_triplets(g.k, g.k, std::move(t));
}

/// Reaction-diffusion graph network with QUBO-residual features.
///
/// h0 = enc(b); per layer l:
///   r   = h ⊙ (A h + b 1^T)
///   h'  = h - step * L (h + g_l(asinh r)) diag(softplus(s_l))
///   h   = h' + step * tanh(f_l(h'))
/// logits = dec(h). Parameters live in a name-ordered map.
class BpgnnModel {
 public:
  BpgnnModel(BpgnnConfig cfg, const QuboInstance& inst)
      : cfg_(cfg), k_(inst.size()), a_(inst.csr()), lap_(build_laplacian(inst)) {
    cfg_.validate();
    auto rng = make_rng(mix_seed(cfg_.seed, 0xb96));
    const std::size_t d = cfg_.hidden;
    add_linear("enc.1", 1, d, rng);
    add_linear("enc.2", d, d, rng);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = layer_prefix(l);
      if (cfg_.use_qubo_features) {
        add_linear(p + "g.1", d, d, rng);
        add_linear(p + "g.2", d, d, rng);
      }
      add_linear(p + "f.1", d, d, rng);
      add_linear(p + "f.2", d, d, rng);
      if (cfg_.learn_diffusion) {
        // softplus(0.5413) = 1
        params_.emplace(p + "sigma", nn::Tensor(1, d, std::log(std::exp(1.0) - 1.0), true));
      }
    }
    add_linear("dec", d, 1, rng);
  }

  const BpgnnConfig& config() const noexcept { return cfg_; }
  std::size_t size() const noexcept { return k_; }
  const CsrMatrix& laplacian() const noexcept { return lap_; }
  const CsrMatrix& coupling() const noexcept { return a_; }

  std::map<std::string, nn::Tensor>& params() noexcept { return params_; }
  const std::map<std::string, nn::Tensor>& params() const noexcept { return params_; }

  std::vector<nn::Tensor> parameter_list() const {
    std::vector<nn::Tensor> out;
    for (const auto& [_, t] : params_) out.push_back(t);
    return out;
  }

  const nn::Tensor& param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("BpgnnModel: no parameter '" + name + "'");
    return it->second;
  }

  /// Effective (non-negative) diffusion coefficients of layer l.
  std::vector<double> diffusion_coefficients(std::size_t l) const {
    if (!cfg_.learn_diffusion) return std::vector<double>(cfg_.hidden, 1.0);
    const auto& s = param(layer_prefix(l) + "sigma");
    std::vector<double> out(s.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double x = s.data()[i];
      out[i] = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return out;
  }

  /// Logits for a stack of B observed vectors given as a (B*k) x 1 column.
  nn::Tensor forward(nn::Tape& tape, const nn::Tensor& b_col, bool train = false,
                     std::uint64_t dropout_seed = 0) const {
    if (b_col.cols() != 1 || b_col.rows() == 0 || b_col.rows() % k_ != 0) {
      throw DimensionError("BpgnnModel::forward: observed column has " + std::to_string(b_col.rows()) +
                           " rows, expected a multiple of k=" + std::to_string(k_));
    }
    const double p = cfg_.dropout;
    std::uint64_t drop_id = 0;
    auto drop = [&](const nn::Tensor& t) {
      return tape.dropout(t, p, train, mix_seed(dropout_seed, ++drop_id));
    };

    nn::Tensor h = drop(tape.relu(linear(tape, b_col, "enc.1")));
    h = linear(tape, h, "enc.2");
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string pre = layer_prefix(l);
      nn::Tensor u = h;
      if (cfg_.use_qubo_features) {
        nn::Tensor r = tape.hadamard(h, tape.broadcast_add_col(tape.spmm(a_, h), b_col));
        r = tape.asinh(r);
        u = tape.add(h, linear(tape, tape.relu(linear(tape, r, pre + "g.1")), pre + "g.2"));
      }
      nn::Tensor diff = tape.spmm(lap_, u);
      if (cfg_.learn_diffusion) diff = tape.mul_row(diff, tape.softplus(param(pre + "sigma")));
      nn::Tensor half = tape.sub(h, tape.scale(diff, cfg_.step));
      nn::Tensor react = tape.tanh(linear(tape, tape.relu(linear(tape, half, pre + "f.1")), pre + "f.2"));
      h = drop(tape.add(half, tape.scale(react, cfg_.step)));
    }
    return linear(tape, h, "dec");
  }

  /// Inference-mode logits for one observed vector (no tape recording).
  std::vector<double> logits(const ObservedVector& b) const {
    require_size(b.size(), k_, "BpgnnModel::logits: b");
    nn::Tape tape;
    tape.set_grad_enabled(false);
    auto out = forward(tape, nn::Tensor::from(k_, 1, {b.values().begin(), b.values().end()}));
    return {out.data().begin(), out.data().end()};
  }

  BpgnnModel clone() const {
    BpgnnModel m = *this;
    for (auto& [_, t] : m.params_) t = t.clone();
    return m;
  }

  void set_dropout(double p) {
    cfg_.dropout = p;
    cfg_.validate();
  }

  static std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }

  /// Parameter names and shapes implied by a configuration.
  static std::map<std::string, std::pair<std::size_t, std::size_t>> expected_shapes(const BpgnnConfig& c) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> s;
    const std::size_t d = c.hidden;
    auto lin = [&](const std::string& n, std::size_t in, std::size_t out) {
      s[n + ".w"] = {in, out};
      s[n + ".b"] = {1, out};
    };
    lin("enc.1", 1, d);
    lin("enc.2", d, d);
    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto p = layer_prefix(l);
      if (c.use_qubo_features) {
        lin(p + "g.1", d, d);
        lin(p + "g.2", d, d);
      }
      lin(p + "f.1", d, d);
      lin(p + "f.2", d, d);
      if (c.learn_diffusion) s[p + "sigma"] = {1, d};
    }
    lin("dec", d, 1);
    return s;
  }

 private:
  BpgnnConfig cfg_;
  std::size_t k_;
  CsrMatrix a_;
  CsrMatrix lap_;
  std::map<std::string, nn::Tensor> params_;

  void add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out), b(out);
    for (auto& x : w) x = u(rng);
    for (auto& x : b) x = u(rng);
    params_.emplace(name + ".w", nn::Tensor::from(in, out, std::move(w), true));
    params_.emplace(name + ".b", nn::Tensor::from(1, out, std::move(b), true));
  }

  nn::Tensor linear(nn::Tape& tape, const nn::Tensor& x, const std::string& name) const {
    return tape.add_row(tape.matmul(x, param(name + ".w")), param(name + ".b"));
  }
};

/// Bit i is 1 iff sigmoid(logit_i) > threshold.
inline BinaryAssignment predict(const BpgnnModel& model, const ObservedVector& b, double threshold = 0.5) {
  const auto z = model.logits(b);
  std::vector<std::uint8_t> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = nn::Tape::sigmoid_scalar(z[i]) > threshold ? 1 : 0;
  return BinaryAssignment(std::move(x));
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json checkpoint_to_json(const BpgnnModel& model) {
  json params = json::object();
  for (const auto& [name, t] : model.params()) {
    params[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  return json{{"config", to_json(model.config())}, {"params", params}};
}

/// Copies checkpoint parameters into `model`, checking names and shapes
/// against the model's configuration.
inline void load_params(BpgnnModel& model, const json& params) {
  const auto expect = BpgnnModel::expected_shapes(model.config());
  for (const auto& [name, shape] : expect) {
    if (!params.contains(name)) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    const auto& p = params.at(name);
    const auto dims = p.at("shape").get<std::vector<std::size_t>>();
    if (dims.size() != 2 || dims[0] != shape.first || dims[1] != shape.second) {
      std::string got;
      for (auto v : dims) got += (got.empty() ? "" : "x") + std::to_string(v);
      throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " + got + ", expected " +
                               std::to_string(shape.first) + "x" + std::to_string(shape.second));
    }
    auto data = p.at("data").get<std::vector<double>>();
    if (data.size() != shape.first * shape.second) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' data length does not match its shape");
    }
    auto dst = model.params().at(name).data();
    std::copy(data.begin(), data.end(), dst.begin());
  }
  for (const auto& [name, _] : params.items()) {
    if (!expect.contains(name)) throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
  }
}

inline BpgnnModel model_from_checkpoint_json(const json& j, const QuboInstance& inst) {
  BpgnnModel m(bpgnn_config_from_json(j.at("config")), inst);
  load_params(m, j.at("params"));
  return m;
}

inline void save_checkpoint(const BpgnnModel& model, const std::filesystem::path& path) {
  io::write_text(path, checkpoint_to_json(model).dump() + "\n");
}

inline json read_checkpoint_json(const std::filesystem::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
}

inline BpgnnModel load_checkpoint(const std::filesystem::path& path, const QuboInstance& inst) {
  try {
    return model_from_checkpoint_json(read_checkpoint_json(path), inst);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double dropout = 0.0;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t patience = 0;  // stop after this many epochs without a better val BCE; 0 = off

  void validate() const {
    if (!(lr >= 0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (!(weight_decay >= 0)) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
    if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("TrainConfig: dropout must be in [0, 1)");
    if (epochs < 1 || epochs > 200) throw std::invalid_argument("TrainConfig: epochs must be in [1, 200]");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  }
};

inline json to_json(const TrainConfig& t) {
  return json{{"lr", t.lr},         {"weight_decay", t.weight_decay}, {"dropout", t.dropout},
              {"epochs", t.epochs}, {"batch_size", t.batch_size},     {"seed", t.seed},
              {"patience", t.patience}};
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_bce = 0.0;
  double val_bce = 0.0;
  double val_acc = 0.0;
  double val_relqubo = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_bce = std::numeric_limits<double>::infinity();

  std::string to_csv() const {
    std::string s = "epoch,train_bce,val_bce,val_acc,val_relqubo\n";
    for (const auto& e : epochs) {
      s += std::to_string(e.epoch) + "," + io::format_double(e.train_bce) + "," + io::format_double(e.val_bce) +
           "," + io::format_double(e.val_acc) + "," + io::format_double(e.val_relqubo) + "\n";
    }
    return s;
  }
};

struct ValidationMetrics {
  double bce = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double rel_qubo = std::numeric_limits<double>::quiet_NaN();  // mean over examples with |f_o| > 1e-12
};

namespace detail {

inline nn::Tensor stack_b(const Dataset& ds, std::span<const std::size_t> idx) {
  const std::size_t k = ds.k;
  nn::Tensor t(idx.size() * k, 1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto b = ds.pairs[idx[r]].b.values();
    std::copy(b.begin(), b.end(), t.data().begin() + static_cast<std::ptrdiff_t>(r * k));
  }
  return t;
}

inline nn::Tensor stack_x(const Dataset& ds, std::span<const std::size_t> idx) {
  const std::size_t k = ds.k;
  nn::Tensor t(idx.size() * k, 1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto x = ds.pairs[idx[r]].x.bits();
    for (std::size_t i = 0; i < k; ++i) t.data()[r * k + i] = x[i];
  }
  return t;
}

}  // namespace detail

/// BCE, bit accuracy and relative objective of the model on a subset of a
/// dataset, using the stored labels as the reference solutions.
inline ValidationMetrics evaluate_model(const BpgnnModel& model, const QuboInstance& inst, const Dataset& ds,
                                        std::span<const std::size_t> idx, std::size_t batch = 256) {
  ValidationMetrics m;
  if (idx.empty()) return m;
  const std::size_t k = ds.k;
  double bce = 0.0, correct = 0.0, rel = 0.0;
  std::size_t rel_n = 0;
  for (std::size_t s = 0; s < idx.size(); s += batch) {
    const auto chunk = idx.subspan(s, std::min(batch, idx.size() - s));
    nn::Tape tape;
    tape.set_grad_enabled(false);
    const auto z = model.forward(tape, detail::stack_b(ds, chunk));
    const auto y = detail::stack_x(ds, chunk);
    bce += tape.bce_with_logits(z, y).item() * static_cast<double>(chunk.size());
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      std::vector<std::uint8_t> xp(k);
      for (std::size_t i = 0; i < k; ++i) {
        xp[i] = z.data()[r * k + i] > 0.0 ? 1 : 0;
        correct += (xp[i] == static_cast<std::uint8_t>(y.data()[r * k + i]));
      }
      const auto& pair = ds.pairs[chunk[r]];
      const double fo = evaluate(inst, pair.b, pair.x);
      if (std::abs(fo) > 1e-12) {
        rel += (evaluate(inst, pair.b, BinaryAssignment(std::move(xp))) - fo) / std::abs(fo);
        ++rel_n;
      }
    }
  }
  m.bce = bce / static_cast<double>(idx.size());
  m.accuracy = correct / static_cast<double>(idx.size() * k);
  m.rel_qubo = rel_n ? rel / static_cast<double>(rel_n) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

/// Mini-batch Adam on the training split. Keeps the parameters with the best
/// validation BCE (the last epoch's when there is no validation split).
inline TrainHistory train(BpgnnModel& model, const QuboInstance& inst, const Dataset& ds, const TrainConfig& tc) {
  tc.validate();
  if (ds.k != model.size() || inst.size() != model.size()) {
    throw DimensionError("train: dataset k=" + std::to_string(ds.k) + " does not match model k=" +
                         std::to_string(model.size()));
  }
  const auto train_idx = ds.indices(Split::Train);
  const auto val_idx = ds.indices(Split::Val);
  if (train_idx.empty()) throw std::invalid_argument("train: empty training split");
  model.set_dropout(tc.dropout);

  auto params = model.parameter_list();
  nn::AdamState adam;
  adam.options.lr = tc.lr;
  adam.options.weight_decay = tc.weight_decay;

  auto snapshot = [&] {
    std::vector<std::vector<double>> s;
    for (const auto& p : params) s.emplace_back(p.data().begin(), p.data().end());
    return s;
  };
  auto best = snapshot();
  TrainHistory hist;
  std::size_t stale = 0;
  std::vector<std::size_t> order = train_idx;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    auto rng = make_rng(mix_seed(tc.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < order.size(); s += tc.batch_size) {
      const std::span<const std::size_t> chunk(order.data() + s, std::min(tc.batch_size, order.size() - s));
      for (auto& p : params) p.zero_grad();
      nn::Tape tape;
      const auto z = model.forward(tape, detail::stack_b(ds, chunk), true, mix_seed(tc.seed, epoch * 1000003 + s));
      const auto loss = tape.bce_with_logits(z, detail::stack_x(ds, chunk));
      tape.backward(loss);
      nn::adam_step(params, adam);
      loss_sum += loss.item();
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_bce = loss_sum / static_cast<double>(batches);
    const auto vm = evaluate_model(model, inst, ds, val_idx);
    rec.val_bce = vm.bce;
    rec.val_acc = vm.accuracy;
    rec.val_relqubo = vm.rel_qubo;
    hist.epochs.push_back(rec);

    const double score = val_idx.empty() ? rec.train_bce : rec.val_bce;
    if (score < hist.best_val_bce || val_idx.empty()) {
      hist.best_val_bce = score;
      hist.best_epoch = epoch;
      best = snapshot();
      stale = 0;
    } else if (tc.patience > 0 && ++stale >= tc.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best[i].begin(), best[i].end(), params[i].data().begin());
  }
  return hist;
}

}  // namespace qubolab
