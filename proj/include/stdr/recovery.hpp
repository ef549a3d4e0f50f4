#pragma once

// The recursive driver: partition, recurse on both clans, merge. Small
// clans go to a base-case subroutine (neighbor joining, the unique tree on
// <= 3 leaves, or an external command).

#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stdr/alignment.hpp"
#include "stdr/error.hpp"
#include "stdr/matrix.hpp"
#include "stdr/merging.hpp"
#include "stdr/partition.hpp"
#include "stdr/similarity.hpp"
#include "stdr/trees.hpp"

namespace stdr {

inline constexpr double kSimilarityFloor = 1e-12;

inline Matrix similarity_to_distance(const Matrix& s) {
  Matrix d = (-s.array().max(kSimilarityFloor).log()).matrix();
  d.diagonal().setZero();
  return d.cwiseMax(0.0);
}

/// D = -log S entrywise (S floored at 1e-12), zero diagonal.
inline DistanceMatrix similarity_to_distance(const SimilarityMatrix& s) {
  return DistanceMatrix(s.labels(), similarity_to_distance(s.values()));
}

/// Unique unrooted topology on 1..3 leaves.
inline UnrootedTree trivial_tree(const LeafSet& labels) {
  if (labels.empty()) throw Error(ErrorKind::usage, "trivial_tree: empty leaf set");
  if (labels.size() > 3) throw Error(ErrorKind::usage, "trivial_tree: more than 3 leaves");
  return small_tree(std::vector<std::string>(labels.begin(), labels.end()));
}

/// Saitou-Nei neighbor joining (Q-criterion, first minimum in scan order).
inline UnrootedTree neighbor_joining(const Matrix& dist, const std::vector<std::string>& labels) {
  const std::size_t m = labels.size();
  if (m < 3) throw Error(ErrorKind::usage, "neighbor_joining needs m >= 3");
  if (static_cast<std::size_t>(dist.rows()) != m)
    throw Error(ErrorKind::usage, "distance matrix size does not match labels");
  std::vector<std::string> node_labels(labels);
  std::vector<Edge> edges;
  // working distances over active slots; slot_node maps slot -> tree node
  const std::size_t n = m;
  std::vector<double> d(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i * n + j] = dist(i, j);
  std::vector<NodeId> slot_node(n);
  for (std::size_t i = 0; i < n; ++i) slot_node[i] = i;
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  std::vector<double> r(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r[i] += d[i * n + j];
  while (active.size() > 3) {
    const double k = static_cast<double>(active.size());
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      const double* row = &d[i * n];
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const std::size_t j = active[b];
        const double q = (k - 2.0) * row[j] - r[i] - r[j];
        if (q < best) {
          best = q;
          bi = a;
          bj = b;
        }
      }
    }
    const std::size_t i = active[bi], j = active[bj];
    const NodeId u = node_labels.size();
    node_labels.emplace_back();
    edges.push_back({u, slot_node[i], std::nullopt});
    edges.push_back({u, slot_node[j], std::nullopt});
    const double dij = d[i * n + j];
    // slot i now holds u
    double ru = 0.0;
    for (std::size_t c : active) {
      if (c == i || c == j) continue;
      const double duc = 0.5 * (d[i * n + c] + d[j * n + c] - dij);
      r[c] += duc - d[i * n + c] - d[j * n + c];
      d[i * n + c] = d[c * n + i] = duc;
      ru += duc;
    }
    d[i * n + i] = 0.0;
    r[i] = ru;
    slot_node[i] = u;
    active.erase(active.begin() + bj);
  }
  const NodeId centre = node_labels.size();
  node_labels.emplace_back();
  for (std::size_t c : active) edges.push_back({centre, slot_node[c], std::nullopt});
  return UnrootedTree(std::move(node_labels), std::move(edges));
}

inline UnrootedTree neighbor_joining(const DistanceMatrix& d) {
  return neighbor_joining(d.values(), d.labels());
}

// --- external subroutine ----------------------------------------------------

namespace detail {

inline std::string temp_root() {
  for (const char* var : {"STDR_TMPDIR", "TMPDIR"})
    if (const char* v = std::getenv(var); v && *v) return v;
  return "/tmp";
}

inline std::string make_temp_dir() {
  std::string pattern = temp_root() + "/stdr-XXXXXX";
  std::vector<char> buf(pattern.begin(), pattern.end());
  buf.push_back('\0');
  if (!mkdtemp(buf.data()))
    throw Error(ErrorKind::io, "cannot create temporary directory under " + temp_root());
  return buf.data();
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

inline std::string expand_command(const std::string& tmpl, const std::string& in,
                                  const std::string& out) {
  if (tmpl.find("{in}") == std::string::npos && tmpl.find("{out}") == std::string::npos)
    return tmpl + " --in " + shell_quote(in) + " --out " + shell_quote(out);
  std::string cmd = tmpl;
  for (auto [key, value] : {std::pair<std::string, std::string>{"{in}", shell_quote(in)},
                            std::pair<std::string, std::string>{"{out}", shell_quote(out)}}) {
    std::size_t pos = 0;
    while ((pos = cmd.find(key, pos)) != std::string::npos) {
      cmd.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  return cmd;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Runs `cmd` under /bin/sh with output redirected to `log`; returns the
/// exit status or throws on timeout.
inline int run_shell(const std::string& cmd, const std::string& log, double timeout_seconds) {
  pid_t pid = fork();
  if (pid < 0) throw SubprocessError("fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    std::string full = "exec > " + shell_quote(log) + " 2>&1; " + cmd;
    execl("/bin/sh", "sh", "-c", full.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_seconds);
  int status = 0;
  while (true) {
    pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw SubprocessError("waitpid failed");
    if (std::chrono::steady_clock::now() > deadline) {
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw SubprocessError("external subroutine timed out after " +
                                std::to_string(timeout_seconds) + " s",
                            read_file(log));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

}  // namespace detail

struct ExternalOptions {
  double timeout_seconds = 600.0;
  bool keep_files = false;
};

/// Writes the alignment as FASTA, runs the command template ({in}/{out}
/// placeholders, or "--in X --out Y" appended) and parses its Newick output.
inline UnrootedTree external_subroutine(const Alignment& x, const std::string& command,
                                        const ExternalOptions& opt = {}) {
  if (command.empty()) throw Error(ErrorKind::usage, "external subroutine command is empty");
  const std::string dir = detail::make_temp_dir();
  const std::string in = dir + "/input.fasta", out = dir + "/output.newick",
                    log = dir + "/output.log";
  auto cleanup = [&] {
    if (!opt.keep_files) {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  };
  try {
    {
      std::ofstream f(in);
      if (!f) throw Error(ErrorKind::io, "cannot write " + in);
      write_fasta(f, x);
    }
    int code = detail::run_shell(detail::expand_command(command, in, out), log,
                                 opt.timeout_seconds);
    if (code != 0)
      throw SubprocessError("external subroutine exited with status " + std::to_string(code),
                            detail::read_file(log));
    std::string text = detail::read_file(out);
    if (text.empty())
      throw SubprocessError("external subroutine produced no output tree", detail::read_file(log));
    UnrootedTree t = [&] {
      try {
        return parse_newick(text, NewickLengths::ignore);
      } catch (const Error& e) {
        throw SubprocessError(std::string("unparseable subroutine output: ") + e.what(), text);
      }
    }();
    LeafSet expected(x.labels().begin(), x.labels().end());
    if (t.leaf_labels() != expected)
      throw SubprocessError("external subroutine returned a tree with different leaf labels", text);
    cleanup();
    return t;
  } catch (...) {
    cleanup();
    throw;
  }
}

// --- driver -----------------------------------------------------------------

enum class SubroutineKind { nj, trivial, external };

struct ReconstructionConfig {
  std::size_t tau = 32;
  SubroutineKind subroutine = SubroutineKind::nj;
  std::string external_command;
  ExternalOptions external;
  bool gap_candidate = true;  // candidates {sign, gap}; false = sign only
  std::uint64_t seed = 0;     // recorded only; the driver is deterministic
  std::size_t parallelism = 1;
  bool diagnostics = false;
};

struct PartitionRecord {
  std::size_t size = 0, size1 = 0, size2 = 0;
  std::string strategy;
  double sigma1 = 0.0, sigma2 = 0.0;
};

struct Diagnostics {
  double partition_seconds = 0.0;
  double merge_seconds = 0.0;
  double subroutine_seconds = 0.0;
  double total_seconds = 0.0;
  std::size_t subroutine_calls = 0;
  std::size_t clamp_events = 0;
  std::vector<PartitionRecord> partitions;
  std::vector<MergeRecord> merges;

  void absorb(Diagnostics&& o) {
    partition_seconds += o.partition_seconds;
    merge_seconds += o.merge_seconds;
    subroutine_seconds += o.subroutine_seconds;
    subroutine_calls += o.subroutine_calls;
    for (auto& p : o.partitions) partitions.push_back(std::move(p));
    for (auto& m : o.merges) merges.push_back(std::move(m));
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Problem {
  const Matrix& s;
  const std::vector<std::string>& labels;
  const Alignment* alignment;
  const ReconstructionConfig& cfg;
};

struct Solved {
  UnrootedTree tree;
  Diagnostics diag;
};

inline std::vector<std::string> labels_of(const Problem& p, const std::vector<Index>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(p.labels[i]);
  return out;
}

inline UnrootedTree base_case(const Problem& p, const std::vector<Index>& idx) {
  auto names = labels_of(p, idx);
  if (idx.size() <= 3) return small_tree(names);
  switch (p.cfg.subroutine) {
    case SubroutineKind::nj:
      return neighbor_joining(similarity_to_distance(gather(p.s, idx, idx)), names);
    case SubroutineKind::external:
      if (!p.alignment)
        throw Error(ErrorKind::usage, "external subroutine needs an alignment input");
      return external_subroutine(p.alignment->subset(names), p.cfg.external_command,
                                 p.cfg.external);
    case SubroutineKind::trivial:
      break;
  }
  throw Error(ErrorKind::usage, "trivial subroutine only handles <= 3 leaves");
}

inline Solved solve(const Problem& p, std::vector<Index> idx, std::size_t depth,
                    std::size_t width) {
  Solved out{UnrootedTree(), {}};
  const std::size_t m = idx.size();
  if (depth > p.labels.size()) throw NumericalError("recursion depth exceeded m");
  const std::size_t limit = p.cfg.subroutine == SubroutineKind::trivial ? 3 : p.cfg.tau;
  if (m <= limit || m <= 3) {
    auto t0 = Clock::now();
    out.tree = base_case(p, idx);
    out.diag.subroutine_seconds += seconds_since(t0);
    ++out.diag.subroutine_calls;
    return out;
  }
  auto t0 = Clock::now();
  Matrix block = gather(p.s, idx, idx);
  PartitionResult part = spectral_partition(block, {}, p.cfg.gap_candidate);
  block.resize(0, 0);
  std::vector<Index> idx1, idx2;
  for (Index k : part.side1) idx1.push_back(idx[k]);
  for (Index k : part.side2) idx2.push_back(idx[k]);
  out.diag.partition_seconds += seconds_since(t0);
  if (p.cfg.diagnostics)
    out.diag.partitions.push_back(
        {m, idx1.size(), idx2.size(), to_string(part.strategy), part.sigma1, part.sigma2});

  Solved left{UnrootedTree(), {}}, right{UnrootedTree(), {}};
  if (width > 1) {
    const std::size_t wl = width / 2, wr = width - wl;
    auto fut = std::async(std::launch::async, [&] { return solve(p, idx1, depth + 1, wl); });
    right = solve(p, idx2, depth + 1, wr);
    left = fut.get();
  } else {
    left = solve(p, idx1, depth + 1, 1);
    right = solve(p, idx2, depth + 1, 1);
  }

  auto t1 = Clock::now();
  MergeRecord rec;
  out.tree = merge_indexed(p.s, idx1, labels_of(p, idx1), left.tree, idx2, labels_of(p, idx2),
                           right.tree, p.cfg.diagnostics ? &rec : nullptr);
  out.diag.merge_seconds += seconds_since(t1);
  out.diag.absorb(std::move(left.diag));
  out.diag.absorb(std::move(right.diag));
  if (p.cfg.diagnostics) out.diag.merges.push_back(std::move(rec));
  return out;
}

inline UnrootedTree run(const SimilarityMatrix& s, const Alignment* x,
                        const ReconstructionConfig& cfg, std::size_t width, Diagnostics* diag) {
  require(cfg.tau >= 3, "tau must be >= 3");
  require(width >= 1, "parallelism must be >= 1");
  if (s.size() < 3) throw Error(ErrorKind::usage, "reconstruction needs m >= 3");
  auto t0 = Clock::now();
  Problem p{s.values(), s.labels(), x, cfg};
  std::vector<Index> all(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) all[i] = static_cast<Index>(i);
  Solved r = solve(p, std::move(all), 0, width);
  if (diag) {
    *diag = std::move(r.diag);
    diag->clamp_events = s.clamp_events();
    diag->total_seconds = seconds_since(t0);
  }
  return std::move(r.tree);
}

}  // namespace detail

/// Spectral top-down recovery from a similarity matrix (serial).
inline UnrootedTree stdr(const SimilarityMatrix& s, const ReconstructionConfig& cfg,
                         Diagnostics* diag = nullptr) {
  return detail::run(s, nullptr, cfg, 1, diag);
}

/// From an alignment: S is estimated once, then the recursion works on
/// index subsets of it.
inline UnrootedTree stdr(const Alignment& x, const ReconstructionConfig& cfg,
                         Diagnostics* diag = nullptr) {
  SimilarityMatrix s = estimate_similarity(x);
  return detail::run(s, &x, cfg, 1, diag);
}

/// Same result as stdr; the two recursive calls run concurrently up to
/// cfg.parallelism threads.
inline UnrootedTree stdr_parallel(const SimilarityMatrix& s, const ReconstructionConfig& cfg,
                                  Diagnostics* diag = nullptr) {
  return detail::run(s, nullptr, cfg, cfg.parallelism, diag);
}

inline UnrootedTree stdr_parallel(const Alignment& x, const ReconstructionConfig& cfg,
                                  Diagnostics* diag = nullptr) {
  SimilarityMatrix s = estimate_similarity(x);
  return detail::run(s, &x, cfg, cfg.parallelism, diag);
}

}  // namespace stdr
