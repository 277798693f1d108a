// qubolab: command-line front end for instance generation, data generation,
// classical solvers, BPGNN training/evaluation and the landscape probes.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qubolab/allocator.hpp"
#include "qubolab/bpgnn.hpp"
#include "qubolab/data.hpp"
#include "qubolab/eval.hpp"
#include "qubolab/io.hpp"
#include "qubolab/qubo.hpp"
#include "qubolab/solvers.hpp"

namespace fs = std::filesystem;
using namespace qubolab;

namespace {

struct Globals {
  std::string out_dir;
  std::size_t workers = 1;
};

fs::path resolve_out(const Globals& g, const std::string& explicit_path, const std::string& fallback) {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(g.out_dir) / fallback;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::invalid_argument(what + " path is required");
  if (!fs::exists(path)) throw std::invalid_argument(what + " file '" + path + "' does not exist");
}

/// Every option of the subcommand with its parsed or default value.
json resolved_options(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help") continue;
    std::string name = opt->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_run_config(const fs::path& primary, const CLI::App& sub, const Globals& g, json extra = json::object()) {
  json cfg{{"subcommand", sub.get_name()},
           {"options", resolved_options(sub)},
           {"out_dir", g.out_dir},
           {"workers", g.workers}};
  for (auto& [k, v] : extra.items()) cfg[k] = v;
  auto p = primary;
  p += ".config.json";
  io::write_text(p, cfg.dump(2) + "\n");
}

std::string bits_string(const BinaryAssignment& x) {
  std::string s = "[";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
  return s + "]";
}

ObservedVector observed_from(const std::string& b_path, const std::string& data_path, std::size_t index,
                             const QuboInstance& inst) {
  if (!b_path.empty()) {
    require_file(b_path, "observed vector");
    auto b = io::read_observed(b_path);
    require_size(b.size(), inst.size(), "observed vector length vs instance k");
    return b;
  }
  if (!data_path.empty()) {
    require_file(data_path, "dataset");
    auto ds = read_dataset(data_path, inst.size());
    if (index >= ds.pairs.size()) {
      throw std::out_of_range("dataset index " + std::to_string(index) + " out of range (" +
                              std::to_string(ds.pairs.size()) + " pairs)");
    }
    return ds.pairs[index].b;
  }
  return ObservedVector::zeros(inst.size());
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"QUBO workbench: solvers, data generation and BPGNN models"};
  app.require_subcommand(1);
  Globals g;
  const char* env_out = std::getenv("QUBOLAB_OUT");
  g.out_dir = env_out && *env_out ? env_out : ".";
  app.add_option("--out-dir", g.out_dir, "Default directory for outputs (env QUBOLAB_OUT)")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads for parallel work items (0 = all cores)")
      ->capture_default_str();

  // gen-instance ------------------------------------------------------------
  auto* gi = app.add_subcommand("gen-instance", "Write a QUBO instance (.mtx + .meta.json)");
  std::string gi_type = "random-dense", gi_out;
  std::size_t gi_k = 10, gi_n = 8;
  double gi_scale = 0.2, gi_b_scalar = 0.0;
  std::uint64_t gi_seed = 0;
  gi->add_option("--type", gi_type, "random-dense | lattice | ising")
      ->check(CLI::IsMember({"random-dense", "lattice", "ising"}))
      ->capture_default_str();
  gi->add_option("--k", gi_k, "Node count (random-dense)")->capture_default_str();
  gi->add_option("--n", gi_n, "Lattice side length (lattice, ising)")->capture_default_str();
  gi->add_option("--scale", gi_scale, "Entry scale (random-dense)")->capture_default_str();
  gi->add_option("--seed", gi_seed, "Generator seed")->capture_default_str();
  gi->add_option("--b-scalar", gi_b_scalar, "Uniform field for ising; also writes <out>.b.txt")
      ->capture_default_str();
  gi->add_option("--out", gi_out, "Output .mtx path");

  // gen-data ----------------------------------------------------------------
  auto* gd = app.add_subcommand("gen-data", "Generate observation/solution pairs as JSON Lines");
  std::string gd_instance, gd_out, gd_label = "tabu";
  std::size_t gd_n = 1000;
  DataGenParams gd_p;
  gd->add_option("--instance", gd_instance, "Instance .mtx")->required();
  gd->add_option("--n", gd_n, "Number of pairs")->capture_default_str();
  gd->add_option("--sigma", gd_p.sigma, "Noise scale (enters as sigma^2 z)")->capture_default_str();
  gd->add_option("--mu", gd_p.mu, "Barrier weight")->capture_default_str();
  gd->add_option("--eps", gd_p.eps_bin, "Near-binary offset")->capture_default_str();
  gd->add_option("--refine-steps", gd_p.refine_steps, "Tabu refinement budget")->capture_default_str();
  gd->add_option("--seed", gd_p.seed, "Base seed")->capture_default_str();
  gd->add_option("--split", gd_p.train_fraction, "Training fraction")->capture_default_str();
  gd->add_option("--label", gd_label, "tabu | exhaustive")
      ->check(CLI::IsMember({"tabu", "exhaustive"}))
      ->capture_default_str();
  gd->add_option("--out", gd_out, "Output .jsonl path");

  // solve -------------------------------------------------------------------
  auto* so = app.add_subcommand("solve", "Solve one QUBO instance");
  std::string so_instance, so_b, so_data, so_method = "tabu", so_out;
  std::size_t so_index = 0, so_cap = kDefaultExhaustiveCap;
  TabuParams so_tabu;
  SabParams so_sab;
  std::optional<std::size_t> so_steps;
  double so_c0 = 0.0;
  so->add_option("--instance", so_instance, "Instance .mtx")->required();
  so->add_option("--b", so_b, "Observed vector file (one value per line)");
  so->add_option("--data", so_data, "Take b from this dataset");
  so->add_option("--index", so_index, "Pair index within --data")->capture_default_str();
  so->add_option("--method", so_method, "exhaustive | tabu | sab")
      ->check(CLI::IsMember({"exhaustive", "tabu", "sab"}))
      ->capture_default_str();
  so->add_option("--cap", so_cap, "Largest k for exhaustive search")->capture_default_str();
  so->add_option("--steps", so_steps, "Tabu max steps / SAB steps");
  so->add_option("--tenure", so_tabu.tenure, "Tabu list length")->capture_default_str();
  so->add_flag("--aspiration", so_tabu.aspiration, "Allow tabu moves that beat the best seen");
  so->add_option("--patience", so_tabu.patience, "Tabu early stop after non-improving steps (0 = off)")
      ->capture_default_str();
  so->add_option("--dt", so_sab.dt, "SAB time step")->capture_default_str();
  so->add_option("--a0", so_sab.a0, "SAB final pump amplitude")->capture_default_str();
  so->add_option("--c0", so_c0, "SAB coupling strength (default from ||J||)");
  so->add_option("--seed", so_sab.seed, "SAB seed")->capture_default_str();
  so->add_option("--out", so_out, "Output JSON path");

  // train -------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Train a BPGNN model on a dataset");
  std::string tr_instance, tr_data, tr_out, tr_history;
  BpgnnConfig tr_cfg;
  TrainConfig tr_tc;
  bool tr_no_features = false, tr_fixed_diffusion = false;
  tr->add_option("--instance", tr_instance, "Instance .mtx")->required();
  tr->add_option("--data", tr_data, "Dataset .jsonl")->required();
  tr->add_option("--hidden", tr_cfg.hidden, "Hidden width")->capture_default_str();
  tr->add_option("--layers", tr_cfg.layers, "Number of reaction-diffusion layers")->capture_default_str();
  tr->add_option("--step", tr_cfg.step, "Euler step of each layer")->capture_default_str();
  tr->add_flag("--no-qubo-features", tr_no_features, "Drop the residual features");
  tr->add_flag("--fixed-diffusion", tr_fixed_diffusion, "Use the plain Laplacian without learned coefficients");
  tr->add_option("--lr", tr_tc.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--weight-decay", tr_tc.weight_decay, "L2 weight decay")->capture_default_str();
  tr->add_option("--dropout", tr_tc.dropout, "Dropout probability")->capture_default_str();
  tr->add_option("--epochs", tr_tc.epochs, "Epochs (<= 200)")->capture_default_str();
  tr->add_option("--batch", tr_tc.batch_size, "Batch size")->capture_default_str();
  tr->add_option("--patience", tr_tc.patience, "Early stop after epochs without better val BCE (0 = off)")
      ->capture_default_str();
  tr->add_option("--seed", tr_tc.seed, "Seed for initialization, shuffling and dropout")->capture_default_str();
  tr->add_option("--out", tr_out, "Checkpoint path");
  tr->add_option("--history", tr_history, "History CSV path");

  // eval --------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Evaluate a trained model (pure and hybrid) on a dataset");
  std::string ev_instance, ev_data, ev_model, ev_out;
  std::size_t ev_refine = 10;
  ev->add_option("--instance", ev_instance, "Instance .mtx")->required();
  ev->add_option("--data", ev_data, "Dataset .jsonl")->required();
  ev->add_option("--model", ev_model, "Checkpoint")->required();
  ev->add_option("--refine-steps", ev_refine, "Tabu steps after the neural guess")->capture_default_str();
  ev->add_option("--out", ev_out, "Output CSV path");

  // probe -------------------------------------------------------------------
  auto* pr = app.add_subcommand("probe", "Solution landscape over a 2-D slice of b");
  std::string pr_instance, pr_b, pr_data, pr_out;
  std::size_t pr_index = 0;
  LandscapeOptions pr_opt;
  pr->add_option("--instance", pr_instance, "Instance .mtx")->required();
  pr->add_option("--b", pr_b, "Base observed vector file (zeros if neither --b nor --data)");
  pr->add_option("--data", pr_data, "Take the base b from this dataset");
  pr->add_option("--index", pr_index, "Pair index within --data")->capture_default_str();
  pr->add_option("--range", pr_opt.range, "Grid half-width")->capture_default_str();
  pr->add_option("--resolution", pr_opt.resolution, "Samples per axis")->capture_default_str();
  pr->add_option("--seed", pr_opt.seed, "Seed for the random directions")->capture_default_str();
  pr->add_option("--cap", pr_opt.exhaustive_cap, "Largest k solved exhaustively")->capture_default_str();
  pr->add_option("--out", pr_out, "Output CSV path");

  // sweep -------------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "Ising sweep over a uniform field on a lattice");
  std::size_t sw_n = 3, sw_samples = 200, sw_cap = kDefaultExhaustiveCap;
  double sw_min = -10.0, sw_max = 10.0;
  std::string sw_out;
  sw->add_option("--n", sw_n, "Lattice side length")->capture_default_str();
  sw->add_option("--b-min", sw_min, "Sweep start")->capture_default_str();
  sw->add_option("--b-max", sw_max, "Sweep end")->capture_default_str();
  sw->add_option("--samples", sw_samples, "Number of samples")->capture_default_str();
  sw->add_option("--cap", sw_cap, "Largest k solved exhaustively")->capture_default_str();
  sw->add_option("--out", sw_out, "Output CSV path");

  // bench -------------------------------------------------------------------
  auto* be = app.add_subcommand("bench", "Method comparison over several instance realizations");
  std::vector<std::string> be_instances, be_data, be_models, be_methods{"exhaustive", "tabu", "sab"};
  std::string be_out;
  BenchmarkOptions be_opt;
  std::size_t be_generate = 0, be_k = 10, be_pairs = 200, be_sab_steps = 2000;
  double be_scale = 0.2, be_sigma = 0.7;
  std::uint64_t be_seed = 0;
  be->add_option("--instance", be_instances, "Instance .mtx (repeatable)");
  be->add_option("--data", be_data, "Dataset .jsonl per instance (repeatable)");
  be->add_option("--model", be_models, "Checkpoint per instance, for neural methods (repeatable)");
  be->add_option("--generate", be_generate, "Generate this many random-dense instances instead")
      ->capture_default_str();
  be->add_option("--k", be_k, "k of generated instances")->capture_default_str();
  be->add_option("--scale", be_scale, "Entry scale of generated instances")->capture_default_str();
  be->add_option("--sigma", be_sigma, "Noise of generated datasets")->capture_default_str();
  be->add_option("--pairs", be_pairs, "Pairs per generated dataset")->capture_default_str();
  be->add_option("--seed", be_seed, "Base seed for generated instances and SAB")->capture_default_str();
  be->add_option("--methods", be_methods, "exhaustive tabu sab bpgnn bpgnn+ts")->capture_default_str();
  be->add_option("--examples", be_opt.max_examples, "Validation examples per instance")->capture_default_str();
  be->add_option("--sab-steps", be_sab_steps, "SAB steps")->capture_default_str();
  be->add_option("--cap", be_opt.exhaustive_cap, "Largest k solved exhaustively")->capture_default_str();
  be->add_option("--out", be_out, "Output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gi) {
      QuboInstance inst = gi_type == "random-dense" ? gen_random_dense(gi_k, gi_seed, gi_scale)
                          : gi_type == "lattice"    ? gen_lattice_laplacian(gi_n)
                                                    : gen_ising(lattice_adjacency(gi_n), gi_b_scalar).first;
      const auto out = resolve_out(g, gi_out, "instance.mtx");
      io::write_instance(inst, out);
      if (gi_type == "ising") {
        auto bp = out;
        bp += ".b.txt";
        auto b = gen_ising(lattice_adjacency(gi_n), gi_b_scalar).second;
        io::write_observed(b, bp);
      }
      if (!(io::read_instance(out) == inst)) throw std::runtime_error("instance did not round-trip: " + out.string());
      write_run_config(out, *gi, g);
      std::cout << "wrote " << out.string() << " (k=" << inst.size() << ", " << inst.entries().size()
                << " entries)\n";
    } else if (*gd) {
      require_file(gd_instance, "instance");
      gd_p.label_mode = label_mode_from_string(gd_label);
      const auto inst = io::read_instance(gd_instance);
      const auto ds =
          generate_dataset(inst, gd_n, gd_p, fs::path(gd_instance).filename().string(), g.workers);
      const auto out = resolve_out(g, gd_out, "dataset.jsonl");
      write_dataset(ds, out);
      if (!(read_dataset(out, inst.size()) == ds)) throw std::runtime_error("dataset did not round-trip: " + out.string());
      write_run_config(out, *gd, g, {{"params", to_json(gd_p)}});
      std::size_t flipped = 0;
      for (const auto& p : ds.pairs) flipped += p.provenance.flipped;
      std::cout << "wrote " << out.string() << " (" << ds.pairs.size() << " pairs, "
                << ds.indices(Split::Train).size() << " train, mean refinement flips "
                << static_cast<double>(flipped) / static_cast<double>(ds.pairs.size()) << ")\n";
    } else if (*so) {
      require_file(so_instance, "instance");
      const auto inst = io::read_instance(so_instance);
      const auto b = observed_from(so_b, so_data, so_index, inst);
      SolverResult r;
      if (so_method == "exhaustive") {
        r = exhaustive_solve(inst, b, so_cap);
      } else if (so_method == "tabu") {
        if (so_steps) so_tabu.max_steps = *so_steps;
        so_tabu.record_trace = false;
        r = tabu_solve(inst, b, so_tabu);
      } else {
        if (so_steps) so_sab.steps = *so_steps;
        if (so_c0 > 0) so_sab.c0 = so_c0;
        r = sab_solve(inst, b, so_sab);
      }
      const auto out = resolve_out(g, so_out, "solve.json");
      io::write_text(out, to_json(r).dump(2) + "\n");
      write_run_config(out, *so, g);
      std::cout << "x=" << bits_string(r.x_best) << " f=" << io::format_double(r.f_best) << "\n";
      if (r.terminated_early) std::cout << "note: " << r.note << "\n";
    } else if (*tr) {
      require_file(tr_instance, "instance");
      require_file(tr_data, "dataset");
      const auto inst = io::read_instance(tr_instance);
      const auto ds = read_dataset(tr_data, inst.size());
      tr_cfg.use_qubo_features = !tr_no_features;
      tr_cfg.learn_diffusion = !tr_fixed_diffusion;
      tr_cfg.seed = tr_tc.seed;
      tr_cfg.dropout = tr_tc.dropout;
      tr_tc.validate();
      BpgnnModel model(tr_cfg, inst);
      const auto hist = train(model, inst, ds, tr_tc);
      const auto out = resolve_out(g, tr_out, "model.json");
      const auto hist_path = resolve_out(g, tr_history, "history.csv");
      save_checkpoint(model, out);
      io::write_text(hist_path, hist.to_csv());
      (void)load_checkpoint(out, inst);
      write_run_config(out, *tr, g, {{"model", to_json(model.config())}, {"train", to_json(tr_tc)}});
      const auto& best = hist.epochs.at(hist.best_epoch - 1);
      std::cout << "wrote " << out.string() << " and " << hist_path.string() << " (best epoch " << hist.best_epoch
                << ", val_bce " << best.val_bce << ", val_acc " << best.val_acc << ", val_relqubo "
                << best.val_relqubo << ")\n";
    } else if (*ev) {
      require_file(ev_instance, "instance");
      require_file(ev_data, "dataset");
      require_file(ev_model, "model");
      const auto inst = io::read_instance(ev_instance);
      const auto ds = read_dataset(ev_data, inst.size());
      const auto model = load_checkpoint(ev_model, inst);
      const auto recs = evaluate_on_dataset(model, inst, ds, fs::path(ev_instance).filename().string(),
                                            fs::path(ev_data).filename().string(), ev_refine);
      const auto out = resolve_out(g, ev_out, "eval.csv");
      io::write_text(out, eval_records_to_csv(recs));
      write_run_config(out, *ev, g);
      for (const auto& r : recs) {
        std::cout << r.method << ": accuracy " << r.accuracy << ", rel_qubo " << r.rel_qubo << ", " << r.elapsed_ms
                  << " ms/example\n";
      }
    } else if (*pr) {
      require_file(pr_instance, "instance");
      const auto inst = io::read_instance(pr_instance);
      const auto b = observed_from(pr_b, pr_data, pr_index, inst);
      pr_opt.workers = g.workers;
      const auto grid = probe_landscape(inst, b, pr_opt);
      const auto out = resolve_out(g, pr_out, "landscape.csv");
      io::write_text(out, grid.to_csv());
      write_run_config(out, *pr, g, {{"solver", grid.solver}, {"b1", grid.b1}, {"b2", grid.b2}});
      std::cout << "wrote " << out.string() << " (" << grid.solver << ", " << grid.distinct_values()
                << " distinct phi values, plateau fraction " << grid.plateau_fraction() << ")\n";
    } else if (*sw) {
      const auto sweep = ising_sweep(lattice_adjacency(sw_n), sw_min, sw_max, sw_samples, sw_cap, {}, g.workers);
      const auto out = resolve_out(g, sw_out, "sweep.csv");
      io::write_text(out, sweep.to_csv());
      write_run_config(out, *sw, g, {{"solver", sweep.solver}});
      std::cout << "wrote " << out.string() << " (" << sweep.change_points.size() << " change points over "
                << sw_samples << " samples)\n";
    } else if (*be) {
      std::vector<QuboInstance> insts;
      std::vector<Dataset> sets;
      std::vector<BpgnnModel> models;
      std::vector<std::string> names;
      if (be_generate > 0) {
        if (!be_instances.empty()) throw std::invalid_argument("bench: use either --generate or --instance");
        DataGenParams dp;
        dp.sigma = be_sigma;
        for (std::size_t i = 0; i < be_generate; ++i) {
          insts.push_back(gen_random_dense(be_k, mix_seed(be_seed, i), be_scale));
          dp.seed = mix_seed(be_seed, 1000 + i);
          names.push_back("random_dense_" + std::to_string(i));
          sets.push_back(generate_dataset(insts.back(), be_pairs, dp, names.back(), g.workers));
        }
      } else {
        if (be_instances.empty()) throw std::invalid_argument("bench: give --instance/--data pairs or --generate N");
        if (be_data.size() != be_instances.size()) {
          throw std::invalid_argument("bench: need one --data per --instance (" + std::to_string(be_instances.size()) +
                                      " instances, " + std::to_string(be_data.size()) + " datasets)");
        }
        for (std::size_t i = 0; i < be_instances.size(); ++i) {
          require_file(be_instances[i], "instance");
          require_file(be_data[i], "dataset");
          insts.push_back(io::read_instance(be_instances[i]));
          sets.push_back(read_dataset(be_data[i], insts.back().size()));
          names.push_back(fs::path(be_instances[i]).filename().string());
        }
      }
      if (!be_models.empty()) {
        if (be_models.size() != insts.size()) {
          throw std::invalid_argument("bench: need one --model per instance");
        }
        for (std::size_t i = 0; i < be_models.size(); ++i) {
          require_file(be_models[i], "model");
          models.push_back(load_checkpoint(be_models[i], insts[i]));
        }
      }
      std::vector<BenchmarkCase> cases;
      for (std::size_t i = 0; i < insts.size(); ++i) {
        cases.push_back({names[i], &insts[i], &sets[i], models.empty() ? nullptr : &models[i]});
      }
      be_opt.methods = be_methods;
      be_opt.sab.steps = be_sab_steps;
      be_opt.sab.seed = be_seed;
      be_opt.workers = g.workers;
      const auto rep = benchmark(cases, be_opt);
      const auto out = resolve_out(g, be_out, "bench.csv");
      io::write_text(out, rep.to_csv());
      write_run_config(out, *be, g, {{"reference", rep.reference}});
      std::cout << rep.to_csv();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
