// stdr: simulate, reconstruct, evaluate, bench and validate-theory.
// Exit codes: 0 ok, 2 usage, 3 input, 4 numerical, 5 external subroutine.

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "stdr/stdr.hpp"

namespace fs = std::filesystem;
using namespace stdr;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return 2;
    case ErrorKind::input_format:
    case ErrorKind::io: return 3;
    case ErrorKind::numerical: return 4;
    case ErrorKind::subprocess: return 5;
  }
  return 1;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorKind::io, "cannot write '" + p.string() + "'");
  return f;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create directory '" + dir + "': " + ec.message());
}

/// FASTA when the first non-blank character is '>', PHYLIP otherwise.
Alignment load_alignment(const std::string& path) {
  std::string text = read_text(path);
  std::istringstream is(text);
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '>') return read_fasta(is);
  return read_phylip(is);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

// --- options shared by several subcommands ----------------------------------

struct ModelOptions {
  std::string model = "coalescent";
  std::size_t m = 64;
  double delta = 0.0, kappa = 0.0, rate = 1.0, birth = 1.0, death = 0.0;

  void add(CLI::App* app) {
    app->add_option("--model", model,
                    "coalescent | birth-death | caterpillar | binary-symmetric")
        ->capture_default_str();
    app->add_option("--delta", delta, "set every adjacent similarity to delta (0 = sampled)");
    app->add_option("--kappa", kappa, "HKY transition/transversion ratio (0 = Jukes-Cantor)");
    app->add_option("--rate", rate, "branch-length to substitution scale")->capture_default_str();
    app->add_option("--birth", birth, "birth rate (birth-death model)")->capture_default_str();
    app->add_option("--death", death, "death rate (birth-death model)")->capture_default_str();
  }

  ModelSpec spec(std::size_t leaves) const {
    if (!is_known_topology(model)) throw Error(ErrorKind::usage, "unknown model '" + model + "'");
    ModelSpec s;
    s.topology = model;
    s.m = leaves;
    s.delta = delta;
    s.rate = rate;
    s.birth = birth;
    s.death = death;
    if (kappa > 0) {
      s.substitution = "hky";
      s.kappa = kappa;
    }
    return s;
  }
};

struct MethodOptions {
  std::size_t tau = 32;
  std::string subroutine_cmd;
  double timeout = 600.0;
  std::size_t threads = 1;
  bool sign_only = false;

  void add(CLI::App* app, bool tau_option = true) {
    if (tau_option) app->add_option("--tau", tau, "partition size threshold")->capture_default_str();
    app->add_option("--subroutine-cmd", subroutine_cmd,
                    "external subroutine template with {in} and {out} placeholders");
    app->add_option("--timeout", timeout, "external subroutine timeout in seconds")
        ->capture_default_str();
    app->add_option("--threads", threads, "parallel width of the recursion")->capture_default_str();
    app->add_flag("--sign-only", sign_only, "use only the sign split of the Fiedler vector");
  }

  ReconstructionConfig config(std::size_t t) const {
    ReconstructionConfig cfg;
    cfg.tau = t;
    cfg.external_command = subroutine_cmd;
    cfg.external.timeout_seconds = timeout;
    cfg.parallelism = threads;
    cfg.gap_candidate = !sign_only;
    return cfg;
  }
};

void check_method(const std::string& method, const MethodOptions& mo) {
  if (!is_known_method(method)) throw Error(ErrorKind::usage, "unknown method '" + method + "'");
  if (method == "stdr+external" && mo.subroutine_cmd.empty())
    throw Error(ErrorKind::usage, "stdr+external needs --subroutine-cmd");
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  ModelOptions model;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_simulate(const SimulateArgs& a) {
  ModelSpec spec = a.model.spec(a.model.m);
  require(a.n >= 1, "--n must be >= 1");
  GenerativeTreeModel model = build_model(spec, derive_seed(a.seed, 1));
  Alignment x = evolve_sequences(model, a.n, derive_seed(a.seed, 2));
  make_dir(a.out);
  open_out(fs::path(a.out) / "tree.newick") << write_newick(model.tree) << '\n';
  {
    auto f = open_out(fs::path(a.out) / "alignment.fasta");
    write_fasta(f, x);
  }
  auto meta = open_out(fs::path(a.out) / "meta.csv");
  meta << "key,value\n"
       << "model," << spec.topology << '\n'
       << "m," << model.tree.leaf_count() << '\n'
       << "n," << a.n << '\n'
       << "delta," << fmt(spec.delta) << '\n'
       << "substitution," << spec.substitution << '\n'
       << "kappa," << fmt(spec.substitution == "hky" ? spec.kappa : 1.0) << '\n'
       << "rate," << fmt(spec.rate) << '\n'
       << "birth," << fmt(spec.birth) << '\n'
       << "death," << fmt(spec.death) << '\n'
       << "seed," << a.seed << '\n';
}

// --- reconstruct ------------------------------------------------------------

struct ReconstructArgs {
  std::string in, similarity, method = "stdr+nj", out;
  MethodOptions mo;
};

void cmd_reconstruct(const ReconstructArgs& a) {
  check_method(a.method, a.mo);
  if (a.in.empty() == a.similarity.empty())
    throw Error(ErrorKind::usage, "give exactly one of --in and --similarity");
  Alignment x;
  SimilarityMatrix s;
  auto t0 = std::chrono::steady_clock::now();
  if (!a.in.empty()) {
    x = load_alignment(a.in);
    s = estimate_similarity(x);
  } else {
    std::istringstream is(read_text(a.similarity));
    auto [labels, values] = read_matrix_csv(is);
    s = SimilarityMatrix(std::move(labels), std::move(values));
  }
  const double estimate_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MethodResult r = run_method(a.method, s, a.in.empty() ? nullptr : &x, a.mo.config(a.mo.tau));
  const std::string newick = write_newick(r.tree);
  if (a.out.empty()) {
    std::cout << newick << '\n';
    return;
  }
  make_dir(a.out);
  open_out(fs::path(a.out) / "tree.newick") << newick << '\n';
  auto f = open_out(fs::path(a.out) / "diagnostics.csv");
  const std::string prefix = a.method + ',' + std::to_string(s.size()) + ',' +
                             std::to_string(a.in.empty() ? 0 : x.cols()) + ',' +
                             std::to_string(a.mo.tau) + ',';
  f << "method,m,n,tau,metric,value\n";
  auto row = [&](const std::string& k, double v) { f << prefix << k << ',' << fmt(v) << '\n'; };
  row("similarity_seconds", estimate_seconds);
  row("method_seconds", r.seconds);
  row("partition_seconds", r.diag.partition_seconds);
  row("merge_seconds", r.diag.merge_seconds);
  row("subroutine_seconds", r.diag.subroutine_seconds);
  row("subroutine_calls", static_cast<double>(r.diag.subroutine_calls));
  row("clamp_events", static_cast<double>(s.clamp_events()));
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string est, ref;
};

void cmd_evaluate(const EvaluateArgs& a) {
  auto est = parse_newick(read_text(a.est), NewickLengths::ignore);
  auto ref = parse_newick(read_text(a.ref), NewickLengths::ignore);
  std::cout << "m,rf,normalized_rf\n"
            << ref.leaf_count() << ',' << rf_distance(est, ref) << ','
            << fmt(normalized_rf(est, ref)) << '\n';
}

// --- bench ------------------------------------------------------------------

struct BenchArgs {
  ModelOptions model;
  std::vector<std::size_t> ms{64}, ns{1000}, taus{32};
  std::vector<std::string> methods{"nj", "stdr+nj"};
  std::size_t reps = 5, jobs = 1;
  std::uint64_t seed = 1;
  std::string out;
  MethodOptions mo;
};

struct BenchRow {
  std::string method;
  std::size_t m = 0, n = 0, tau = 0, rep = 0;
  std::uint64_t seed = 0;
  double nrf = 0.0, seconds = 0.0;
  std::string status = "ok";
};

void cmd_bench(const BenchArgs& a) {
  if (a.methods.empty()) throw Error(ErrorKind::usage, "bench needs at least one --method");
  require(a.reps >= 1, "--reps must be >= 1");
  require(a.jobs >= 1, "--jobs must be >= 1");
  for (const auto& meth : a.methods) check_method(meth, a.mo);
  for (std::size_t n : a.ns) require(n >= 1, "--n values must be >= 1");
  for (std::size_t t : a.taus) require(t >= 3, "--tau values must be >= 3");
  for (std::size_t m : a.ms) a.model.spec(m);

  // one simulated data set per (m, n, rep); every method and tau runs on it
  struct Cell {
    std::size_t m, n, rep;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t m : a.ms)
    for (std::size_t n : a.ns)
      for (std::size_t rep = 0; rep < a.reps; ++rep)
        cells.push_back({m, n, rep, derive_seed(derive_seed(a.seed, m, n), rep)});

  std::vector<std::vector<BenchRow>> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next++) < cells.size();) {
      const Cell& cell = cells[c];
      auto& out = results[c];
      auto fail_all = [&](const std::string& why) {
        for (const auto& meth : a.methods)
          for (std::size_t tau : a.taus)
            out.push_back({meth, cell.m, cell.n, tau, cell.rep, cell.seed, std::nan(""),
                           std::nan(""), "error: " + why});
      };
      GenerativeTreeModel model;
      Alignment x;
      SimilarityMatrix s;
      try {
        model = build_model(a.model.spec(cell.m), derive_seed(cell.seed, 1));
        x = evolve_sequences(model, cell.n, derive_seed(cell.seed, 2));
        s = estimate_similarity(x);
      } catch (const std::exception& e) {
        fail_all(e.what());
        continue;
      }
      for (const auto& meth : a.methods) {
        // nj does not depend on tau; run it once and repeat the row
        std::optional<BenchRow> nj_row;
        for (std::size_t tau : a.taus) {
          BenchRow row{meth, cell.m, cell.n, tau, cell.rep, cell.seed};
          if (meth == "nj" && nj_row) {
            row.nrf = nj_row->nrf;
            row.seconds = nj_row->seconds;
            row.status = nj_row->status;
          } else {
            try {
              MethodResult r = run_method(meth, s, &x, a.mo.config(tau));
              row.nrf = normalized_rf(r.tree, model.tree);
              row.seconds = r.seconds;
            } catch (const std::exception& e) {
              row.nrf = row.seconds = std::nan("");
              row.status = std::string("error: ") + e.what();
            }
            if (meth == "nj") nj_row = row;
          }
          out.push_back(row);
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < a.jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ofstream file;
  if (!a.out.empty()) {
    auto parent = fs::path(a.out).parent_path();
    if (!parent.empty()) make_dir(parent.string());
    file = open_out(a.out);
  }
  std::ostream& os = a.out.empty() ? std::cout : file;
  const std::string model_cols = a.model.model + ',' + fmt(a.model.delta) + ',' +
                                 fmt(a.model.kappa > 0 ? a.model.kappa : 1.0) + ',';
  os << "row,method,model,delta,kappa,m,n,tau,rep,seed,normalized_rf,seconds,count,status\n";
  for (const auto& cell_rows : results)
    for (const auto& r : cell_rows)
      os << "run," << r.method << ',' << model_cols << r.m << ',' << r.n << ',' << r.tau << ','
         << r.rep << ',' << r.seed << ',' << fmt(r.nrf) << ',' << fmt(r.seconds) << ",1,"
         << csv_field(r.status) << '\n';
  // mean and sample standard deviation over the successful reps of each cell
  for (std::size_t m : a.ms)
    for (std::size_t n : a.ns)
      for (const auto& meth : a.methods)
        for (std::size_t tau : a.taus) {
          std::vector<double> nrf, sec;
          for (const auto& cell_rows : results)
            for (const auto& r : cell_rows)
              if (r.m == m && r.n == n && r.method == meth && r.tau == tau && r.status == "ok") {
                nrf.push_back(r.nrf);
                sec.push_back(r.seconds);
              }
          const std::string key = meth + ',' + model_cols + std::to_string(m) + ',' +
                                  std::to_string(n) + ',' + std::to_string(tau) + ",,," ;
          const std::string status = nrf.size() == a.reps ? "ok" : "partial";
          os << "mean," << key << fmt(mean(nrf)) << ',' << fmt(mean(sec)) << ',' << nrf.size()
             << ',' << status << '\n';
          os << "stddev," << key << fmt(stddev(nrf)) << ',' << fmt(stddev(sec)) << ','
             << nrf.size() << ',' << status << '\n';
        }
}

// --- validate-theory --------------------------------------------------------

struct ValidateArgs {
  ValidationOptions opt;
  std::string out;
};

bool cmd_validate(const ValidateArgs& a) {
  auto rows = validate_theory(a.opt);
  std::ofstream file;
  if (!a.out.empty()) file = open_out(a.out);
  std::ostream& os = a.out.empty() ? std::cout : file;
  os << "check,detail,measured,tolerance,pass\n";
  bool ok = true;
  for (const auto& r : rows) {
    os << r.check << ',' << csv_field(r.detail) << ',' << fmt(r.measured) << ','
       << fmt(r.tolerance) << ',' << (r.pass ? "pass" : "fail") << '\n';
    ok = ok && r.pass;
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral top-down tree reconstruction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "stdr 1.0");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate a tree and an alignment");
  sim.model.add(s);
  s->add_option("--m", sim.model.m, "number of leaves")->capture_default_str();
  s->add_option("--n", sim.n, "sequence length")->capture_default_str();
  s->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  s->add_option("--out", sim.out, "output directory")->required();

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "reconstruct a tree from an alignment");
  r->add_option("--in", rec.in, "alignment (FASTA or PHYLIP)");
  r->add_option("--similarity", rec.similarity, "similarity matrix CSV instead of an alignment");
  r->add_option("--method", rec.method, "nj | stdr+nj | stdr+external | stdr+trivial")
      ->capture_default_str();
  r->add_option("--out", rec.out, "output directory (default: Newick to stdout)");
  rec.mo.add(r);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Robinson-Foulds distance between two trees");
  e->add_option("est", ev.est, "estimated tree (Newick)")->required();
  e->add_option("ref", ev.ref, "reference tree (Newick)")->required();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "accuracy and runtime over a parameter grid");
  bench.model.add(b);
  b->add_option("--m", bench.ms, "leaf counts")->delimiter(',')->capture_default_str();
  b->add_option("--n", bench.ns, "sequence lengths")->delimiter(',')->capture_default_str();
  b->add_option("--tau", bench.taus, "thresholds")->delimiter(',')->capture_default_str();
  b->add_option("--method", bench.methods, "methods")->delimiter(',')->capture_default_str();
  b->add_option("--reps", bench.reps, "repetitions per cell")->capture_default_str();
  b->add_option("--jobs", bench.jobs, "cells run concurrently")->capture_default_str();
  b->add_option("--seed", bench.seed, "base seed")->capture_default_str();
  b->add_option("--out", bench.out, "CSV path (default: stdout)");
  bench.mo.add(b, false);

  ValidateArgs val;
  auto* v = app.add_subcommand("validate-theory", "numerical checks of the population results");
  v->add_option("--out", val.out, "CSV path (default: stdout)");
  v->add_option("--models", val.opt.models, "random models per suite")->capture_default_str();
  v->add_option("--seed", val.opt.seed, "base seed")->capture_default_str();
  v->add_option("--perturb-twin", val.opt.twin_perturbation,
                "add this to one twin-tree weight (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s) cmd_simulate(sim);
    if (*r) cmd_reconstruct(rec);
    if (*e) cmd_evaluate(ev);
    if (*b) cmd_bench(bench);
    if (*v && !cmd_validate(val)) {
      std::cerr << "stdr: validate-theory: some checks failed\n";
      return 4;
    }
  } catch (const SubprocessError& err) {
    std::cerr << "stdr: " << err.what() << '\n';
    if (!err.output().empty()) std::cerr << err.output() << '\n';
    return 5;
  } catch (const Error& err) {
    std::cerr << "stdr: " << err.what() << '\n';
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "stdr: " << err.what() << '\n';
    return 4;
  }
  return 0;
}
