// Command-line front end: model generation, sampling, inference, benchmark
// sweeps and learning.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "renn/harness.hpp"
#include "renn/learn.hpp"

using namespace renn;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

template <class F>
auto in_file(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

Model load_model(const std::string& path) {
  const auto text = read_file(path);
  return in_file(path, [&] { return parse_model(text); });
}

Topology topology_of(const Model& m, const FactorGraph& fg) {
  if (const auto* p = std::get_if<PairwiseMRF>(&m)) return p->topology;
  return Topology::custom(fg.num_vars(), fg.pair_edges());
}

std::vector<Assignment> load_dataset(const std::string& path, int n) {
  const auto text = read_file(path);
  return in_file(path, [&] { return parse_dataset(text, n); });
}

nlohmann::ordered_json to_json(const FactorGraph& fg, const InferenceResult& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["free_energy"] = r.free_energy;
  j["log_z"] = -r.free_energy;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["warning"] = r.warning;
  j["note"] = r.note;
  j["marginals"] = r.unary;
  auto pairs = nlohmann::ordered_json::array();
  for (auto [a, b] : fg.pair_edges())
    for (const auto& fb : r.factor_beliefs)
      if (fb.scope == Scope{a, b}) {
        pairs.push_back({{"scope", fb.scope}, {"table", fb.table}});
        break;
      }
  j["pairwise"] = pairs;
  j["runtime_ms"] = r.runtime_ms;
  return j;
}

std::string to_text(const InferenceResult& r) {
  std::string s = "method " + r.method + "\nfree_energy " + detail::fmt_double(r.free_energy) + "\nlog_z " +
                  detail::fmt_double(-r.free_energy) + "\nconverged " + (r.converged ? "1" : "0") + "\niterations " +
                  std::to_string(r.iterations) + '\n';
  if (!r.note.empty()) s += "note " + r.note + '\n';
  for (std::size_t i = 0; i < r.unary.size(); ++i) {
    s += "marginal " + std::to_string(i);
    for (double p : r.unary[i]) s += ' ' + detail::fmt_double(p);
    s += '\n';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate inference and learning for pairwise Markov random fields"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a random Ising model");
  std::string topo, out;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  gen->add_option("--topology", topo, "grid:R,C or complete:N")->required();
  gen->add_option("--gamma", gamma, "std of the node potentials")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();

  auto* sample = app.add_subcommand("sample", "Draw samples from a model");
  std::string model_path;
  std::size_t count = 1000, burn_in = 1000, thin = 10;
  bool gibbs = false;
  sample->add_option("--model", model_path)->required();
  sample->add_option("--count", count);
  sample->add_option("--seed", seed);
  sample->add_flag("--gibbs", gibbs, "Gibbs sampling instead of exact enumeration");
  sample->add_option("--burn-in", burn_in);
  sample->add_option("--thin", thin)->check(CLI::PositiveNumber);
  sample->add_option("--out", out)->required();

  auto* infer = app.add_subcommand("infer", "Run one inference method on a model");
  std::string method;
  MethodOptions mo;
  bool json = false;
  infer->add_option("--model", model_path)->required();
  infer->add_option("--method", method)->required()->check(CLI::IsMember(method_names()));
  infer->add_option("--damping", mo.damping);
  infer->add_option("--lambda", mo.renn.lambda);
  infer->add_option("--lr", mo.renn.lr);
  infer->add_option("--max-iters", mo.max_iters, "message-passing sweeps, or RENN epochs");
  infer->add_option("--tol", mo.tol);
  infer->add_option("--seed", mo.renn.seed);
  infer->add_flag("--infinite-face", mo.infinite_face);
  infer->add_flag("--json", json);

  auto* bench = app.add_subcommand("bench", "Run a benchmark sweep");
  std::string config_path;
  bool no_runtime = false;
  bench->add_option("--config", config_path)->required();
  bench->add_option("--out", out)->required();
  bench->add_flag("--no-runtime", no_runtime, "leave the runtime column empty");

  auto* learn = app.add_subcommand("learn", "Fit model parameters to data");
  std::string structure, train_path, test_path;
  LearnConfig lc;
  learn->add_option("--structure", structure, "native model file; its parameters are ignored")->required();
  learn->add_option("--train", train_path)->required();
  learn->add_option("--test", test_path)->required();
  learn->add_option("--backend", lc.backend)->check(CLI::IsMember({"exact", "mf", "lbp", "dbp", "gbp", "renn"}));
  learn->add_option("--epochs", lc.epochs);
  learn->add_option("--lr", lc.lr);
  learn->add_option("--inner-steps", lc.inner_steps);
  learn->add_option("--batch-size", lc.batch_size);
  learn->add_option("--lambda", lc.renn.lambda);
  learn->add_option("--seed", lc.seed);
  learn->add_flag("--infinite-face", lc.infinite_face);
  learn->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      write_file(out, serialize_model(random_ising(parse_topology(topo), gamma, seed)));
    } else if (*sample) {
      const auto fg = as_factor_graph(load_model(model_path));
      const auto data = gibbs ? gibbs_sample(fg, count, burn_in, thin, seed) : exact_sample(fg, count, seed);
      write_file(out, serialize_dataset(data));
    } else if (*infer) {
      const auto m = load_model(model_path);
      const auto fg = as_factor_graph(m);
      mo.renn.max_epochs = mo.max_iters;
      if (!infer->count("--max-iters")) mo.renn.max_epochs = RennConfig{}.max_epochs;
      const auto r = run_method(method, fg, topology_of(m, fg), mo);
      std::cout << (json ? to_json(fg, r).dump(2) + "\n" : to_text(r));
    } else if (*bench) {
      const auto text = read_file(config_path);
      const auto cfg = in_file(config_path, [&] { return parse_sweep_config(text); });
      write_file(out, to_csv(run_benchmark(cfg), !no_runtime));
    } else if (*learn) {
      const auto m = load_model(structure);
      const auto* mrf = std::get_if<PairwiseMRF>(&m);
      if (!mrf) throw std::runtime_error(structure + ": learning needs a native ising model");
      lc.renn.seed = lc.seed;
      const auto r = learn_mrf(*mrf, load_dataset(train_path, mrf->n), load_dataset(test_path, mrf->n), lc);
      write_file(out, serialize_checkpoint(r));
      const auto& last = r.trace.back();
      std::cout << "epochs " << last.epoch << "\ntest_nll " << detail::fmt_double(last.test_nll) << "\ntest_nll_exact "
                << detail::fmt_double(last.test_nll_exact) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
