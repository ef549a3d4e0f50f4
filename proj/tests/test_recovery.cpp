#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stdr/experiment.hpp"
#include "stdr/genmodel.hpp"
#include "stdr/recovery.hpp"

using namespace stdr;
using Catch::Approx;

namespace {

bool is_binary(const UnrootedTree& t) {
  for (NodeId v = 0; v < t.node_count(); ++v) {
    auto deg = t.neighbors(v).size();
    if (deg != 1 && deg != 3) return false;
  }
  return true;
}

std::string scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "stdr-test-recovery";
  std::filesystem::create_directories(p);
  return p.string();
}

// Shell snippet that writes a caterpillar on the FASTA labels to {out}.
const char* kCaterpillarCmd =
    "grep '^>' {in} | cut -c2- | awk '{a[NR]=$0} END {s=a[1]; for(i=2;i<=NR;i++) "
    "s=\"(\" s \",\" a[i] \")\"; print s \";\"}' > {out}";

}  // namespace

TEST_CASE("similarity_to_distance", "[recovery]") {
  Matrix s(3, 3);
  s << 1, 0.25, 0, 0.25, 1, 1, 0, 1, 1;
  auto d = similarity_to_distance(SimilarityMatrix({"a", "b", "c"}, s));
  CHECK(d.values()(0, 0) == 0.0);
  CHECK(d.values()(1, 2) == 0.0);
  CHECK(d.values()(0, 1) == Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(d.values()(0, 2) == Approx(-std::log(1e-12)).epsilon(1e-14));
  CHECK(d.values()(0, 2) == Approx(27.631).margin(1e-3));
  CHECK(d.labels() == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("trivial_tree", "[recovery]") {
  CHECK(trivial_tree({"a"}).leaf_count() == 1);
  auto two = trivial_tree({"a", "b"});
  CHECK(two.leaf_count() == 2);
  CHECK(two.edge_count() == 1);
  auto three = trivial_tree({"a", "b", "c"});
  CHECK(three.leaf_count() == 3);
  CHECK(three.node_count() == 4);
  CHECK_THROWS(trivial_tree({}));
  CHECK_THROWS(trivial_tree({"a", "b", "c", "d"}));
}

TEST_CASE("neighbor_joining examples", "[recovery]") {
  auto q = make_binary_symmetric(2, 0.8);
  auto d = similarity_to_distance(exact_similarity(q));
  CHECK(oracle::four_point(d.values(), 1e-12));
  auto t = neighbor_joining(d);
  CHECK(rf_distance(t, q.tree) == 0);

  Matrix d3 = Matrix::Ones(3, 3) - Matrix::Identity(3, 3);
  auto star = neighbor_joining(d3, {"a", "b", "c"});
  CHECK(star.leaf_count() == 3);
  CHECK(star.node_count() == 4);
  CHECK_THROWS(neighbor_joining(Matrix::Zero(2, 2), {"a", "b"}));

  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto model = fixtures::random_model(fixtures::Family::coalescent, 32, seed);
    auto nj = neighbor_joining(similarity_to_distance(exact_similarity(model)));
    CHECK(rf_distance(nj, model.tree) == 0);
  }
}

TEST_CASE("neighbor_joining matches the textbook oracle on noisy distances", "[recovery]") {
  // identical sequences create exact Q ties, resolved by rounding; compare
  // only instances whose every join is decided by a clear margin
  std::size_t compared = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto model = fixtures::random_model(static_cast<fixtures::Family>(seed % 3), 24, seed + 90);
    auto s = estimate_similarity(evolve_sequences(model, 400, seed));
    auto d = similarity_to_distance(s);
    auto fast = neighbor_joining(d);
    CHECK(is_binary(fast));
    double gap = 0.0;
    auto slow = oracle::nj(d.values(), d.labels(), &gap);
    if (gap < 1e-9) continue;
    ++compared;
    CHECK(oracle::rf(fast, slow) == 0);
  }
  CHECK(compared >= 15);
}

TEST_CASE("external subroutine", "[recovery]") {
  auto model = make_binary_symmetric(3, 0.7);
  auto x = evolve_sequences(model, 50, 3);
  const std::string dir = scratch_dir();

  SECTION("echo of a precomputed tree") {
    const std::string path = dir + "/fixed.nwk";
    std::ofstream(path) << write_newick(model.tree) << "\n";
    auto t = external_subroutine(x, "cp " + path + " {out}");
    CHECK(rf_distance(t, model.tree) == 0);
  }
  SECTION("caterpillar from the FASTA labels") {
    auto t = external_subroutine(x, kCaterpillarCmd);
    CHECK(t.leaf_labels() == model.tree.leaf_labels());
    CHECK(is_binary(t));
  }
  SECTION("template without placeholders gets --in/--out appended") {
    const std::string script = dir + "/sub.sh";
    std::ofstream(script) << "#!/bin/sh\ncp " << dir << "/fixed2.nwk \"$4\"\n";
    std::filesystem::permissions(script, std::filesystem::perms::owner_all);
    std::ofstream(dir + "/fixed2.nwk") << write_newick(model.tree) << "\n";
    auto t = external_subroutine(x, script);
    CHECK(rf_distance(t, model.tree) == 0);
  }
  SECTION("wrong labels") {
    CHECK_THROWS_AS(external_subroutine(x, "echo '((a,b),(c,d));' > {out}"), SubprocessError);
  }
  SECTION("nonzero exit keeps the output") {
    try {
      external_subroutine(x, "echo boom; exit 3");
      FAIL("expected a subprocess error");
    } catch (const SubprocessError& e) {
      CHECK(e.kind() == ErrorKind::subprocess);
      CHECK(e.output().find("boom") != std::string::npos);
    }
  }
  SECTION("unparseable output") {
    CHECK_THROWS_AS(external_subroutine(x, "echo 'not a tree' > {out}"), SubprocessError);
    CHECK_THROWS_AS(external_subroutine(x, "true"), SubprocessError);
  }
  SECTION("timeout") {
    ExternalOptions opt;
    opt.timeout_seconds = 0.3;
    auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(external_subroutine(x, "sleep 20", opt), SubprocessError);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 5.0);
  }
  SECTION("temp files are removed unless kept") {
    const std::string root = dir + "/tmp";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
    ::setenv("STDR_TMPDIR", root.c_str(), 1);
    external_subroutine(x, kCaterpillarCmd);
    CHECK(std::filesystem::is_empty(root));
    ExternalOptions keep;
    keep.keep_files = true;
    external_subroutine(x, kCaterpillarCmd, keep);
    CHECK(!std::filesystem::is_empty(root));
    ::unsetenv("STDR_TMPDIR");
  }
}

TEST_CASE("stdr base case equals the subroutine", "[recovery]") {
  auto model = fixtures::random_model(fixtures::Family::birth_death, 12, 5);
  auto s = estimate_similarity(evolve_sequences(model, 80, 2));
  ReconstructionConfig cfg;
  cfg.tau = 12;
  auto t = stdr::stdr(s, cfg);
  auto nj = neighbor_joining(similarity_to_distance(s));
  CHECK(rf_distance(t, nj) == 0);
  CHECK(write_newick(t) == write_newick(nj));
}

TEST_CASE("stdr recovers the tree from exact similarities", "[recovery]") {
  std::size_t runs = 0, failures = 0;
  for (auto f : {fixtures::Family::coalescent, fixtures::Family::birth_death,
                 fixtures::Family::caterpillar})
    for (std::size_t m : {16, 32, 64})
      for (std::size_t tau : {4, 8, 16})
        for (std::uint64_t seed = 1; seed <= 8; ++seed) {
          auto model = fixtures::random_model(f, m, seed * 31 + m + tau);
          ReconstructionConfig cfg;
          cfg.tau = tau;
          auto t = stdr::stdr(exact_similarity(model), cfg);
          ++runs;
          failures += rf_distance(t, model.tree) != 0;
        }
  CHECK(runs == 216);
  CHECK(failures == 0);

  // the trivial subroutine recurses down to <= 3 leaves
  auto model = make_binary_symmetric(5, 0.7);
  ReconstructionConfig cfg;
  cfg.subroutine = SubroutineKind::trivial;
  CHECK(rf_distance(stdr::stdr(exact_similarity(model), cfg), model.tree) == 0);
}

TEST_CASE("stdr output is binary on the input leaves", "[recovery][property]") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto model = fixtures::random_model(static_cast<fixtures::Family>(seed % 3), 40, seed);
    auto x = evolve_sequences(model, 60, seed);
    ReconstructionConfig cfg;
    cfg.tau = 3 + seed % 6;
    auto t = stdr::stdr(x, cfg);
    CHECK(t.leaf_labels() == model.tree.leaf_labels());
    CHECK(is_binary(t));
  }
}

TEST_CASE("stdr with an external subroutine", "[recovery]") {
  auto model = make_binary_symmetric(5, 0.75);
  auto x = evolve_sequences(model, 200, 8);
  ReconstructionConfig cfg;
  cfg.tau = 6;
  cfg.subroutine = SubroutineKind::external;
  cfg.external_command = kCaterpillarCmd;
  auto t = stdr::stdr(x, cfg);
  CHECK(t.leaf_labels() == model.tree.leaf_labels());
  CHECK(is_binary(t));
  CHECK_THROWS_AS(stdr::stdr(estimate_similarity(x), cfg), Error);
}

TEST_CASE("stdr validates its configuration", "[recovery]") {
  auto s = exact_similarity(make_binary_symmetric(3, 0.7));
  ReconstructionConfig cfg;
  cfg.tau = 2;
  CHECK_THROWS(stdr::stdr(s, cfg));
  cfg.tau = 4;
  cfg.parallelism = 0;
  CHECK_THROWS(stdr_parallel(s, cfg));
  auto tiny = exact_similarity(parse_newick("(a:0.5,b:0.5);"));
  CHECK_THROWS(stdr::stdr(tiny, ReconstructionConfig{}));
}

TEST_CASE("stdr_parallel is deterministic", "[recovery][property]") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto model = fixtures::random_model(static_cast<fixtures::Family>(seed % 3), 96, seed);
    auto s = estimate_similarity(evolve_sequences(model, 300, seed));
    ReconstructionConfig cfg;
    cfg.tau = 8;
    const std::string serial = write_newick(stdr::stdr(s, cfg));
    for (std::size_t width : {1, 2, 3, 8}) {
      cfg.parallelism = width;
      CHECK(write_newick(stdr_parallel(s, cfg)) == serial);
    }
  }
}

TEST_CASE("diagnostics record every partition and merge", "[recovery]") {
  auto model = make_binary_symmetric(6, 0.7);
  ReconstructionConfig cfg;
  cfg.tau = 8;
  cfg.diagnostics = true;
  Diagnostics diag;
  stdr::stdr(exact_similarity(model), cfg, &diag);
  CHECK(diag.partitions.size() == 7);
  CHECK(diag.merges.size() == 7);
  CHECK(diag.subroutine_calls == 8);
  for (const auto& p : diag.partitions) CHECK(p.size1 + p.size2 == p.size);
  for (const auto& mr : diag.merges) {
    CHECK(mr.d1 <= 1e-9);
    CHECK(mr.d2 <= 1e-9);
  }
}

TEST_CASE("accuracy improves with sequence length", "[recovery][property]") {
  ModelSpec spec;
  spec.topology = "coalescent";
  spec.m = 256;
  std::vector<double> ns, rfs;
  for (std::size_t n : {250, 500, 1000, 2000, 4000}) {
    std::vector<double> cell;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto model = build_model(spec, seed);
      auto s = estimate_similarity(evolve_sequences(model, n, derive_seed(7, n, seed)));
      ReconstructionConfig cfg;
      cfg.tau = 32;
      cell.push_back(normalized_rf(stdr::stdr(s, cfg), model.tree));
    }
    ns.push_back(static_cast<double>(n));
    rfs.push_back(mean(cell));
  }
  CHECK(spearman(ns, rfs) < 0.0);
  CHECK(rfs.back() < rfs.front());
}
