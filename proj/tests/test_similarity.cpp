#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stdr/genmodel.hpp"
#include "stdr/partition.hpp"
#include "stdr/similarity.hpp"

using namespace stdr;
using Catch::Approx;

namespace {

// Direct transcription of the estimator: joint frequencies, column
// normalisation (uniform for empty columns), |det| product, square root.
double oracle_similarity(const Alignment& x, std::size_t i, std::size_t j) {
  const int ell = x.ell();
  oracle::Mat joint = oracle::Mat::Zero(ell, ell);
  for (std::size_t c = 0; c < x.cols(); ++c) joint(x(i, c), x(j, c)) += 1.0;
  auto cond = [ell](oracle::Mat p) {
    for (int b = 0; b < ell; ++b) {
      double s = p.col(b).sum();
      if (s == 0) p.col(b).setConstant(1.0 / ell);
      else p.col(b) /= s;
    }
    return std::abs(oracle::det(p));
  };
  return std::min(1.0, std::sqrt(cond(joint) * cond(joint.transpose())));
}

Alignment random_alignment(std::size_t m, std::size_t n, int ell, std::uint64_t seed) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < m; ++i) labels.push_back(leaf_name(i));
  Alignment x(labels, ell, n);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) x(i, j) = static_cast<std::uint8_t>(rng() % ell);
  return x;
}

}  // namespace

TEST_CASE("estimate_similarity agrees with a direct transcription", "[similarity]") {
  auto model = make_binary_symmetric(3, 0.75);
  auto x = evolve_sequences(model, 400, 17);
  // inject a short, biased row so some joint columns are empty
  for (std::size_t j = 0; j < x.cols(); ++j) x(7, j) = j % 3 == 0 ? 1 : 0;
  auto s = estimate_similarity(x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    CHECK(s(i, i) == 1.0);
    for (std::size_t j = i + 1; j < x.rows(); ++j)
      CHECK(s(i, j) == Approx(oracle_similarity(x, i, j)).margin(1e-12));
  }
  // more rows than one estimation block
  auto big = random_alignment(300, 50, 4, 3);
  auto sb = estimate_similarity(big);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    std::size_t i = rng() % 300, j = rng() % 300;
    if (i == j) continue;
    CHECK(sb(i, j) == Approx(oracle_similarity(big, i, j)).margin(1e-12));
  }
}

TEST_CASE("estimate_similarity examples", "[similarity]") {
  auto x = random_alignment(3, 500, 4, 8);
  for (std::size_t j = 0; j < x.cols(); ++j) x(1, j) = x(0, j);
  auto s = estimate_similarity(x);
  CHECK(s(0, 1) == Approx(1.0).margin(1e-12));

  auto indep = random_alignment(2, 100000, 4, 21);
  CHECK(estimate_similarity(indep)(0, 1) < 0.05);

  auto quartet = make_binary_symmetric(2, 0.9);
  std::vector<double> vals;
  for (std::uint64_t t = 0; t < 50; ++t) {
    auto y = evolve_sequences(quartet, 10000, 1000 + t);
    auto sy = estimate_similarity(y);
    vals.push_back(sy(sy.index_of("x1"), sy.index_of("x2")));
  }
  double mu = 0, var = 0;
  for (double v : vals) mu += v / vals.size();
  for (double v : vals) var += (v - mu) * (v - mu) / (vals.size() - 1);
  CHECK(std::abs(mu - 0.81) < 3 * std::sqrt(var / vals.size()));

  CHECK_THROWS(estimate_similarity(Alignment({"a", "b"}, 4, 0)));
  Alignment bad({"a", "b"}, 4, 3);
  bad(0, 1) = 7;
  CHECK_THROWS_AS(estimate_similarity(bad), Error);
}

TEST_CASE("estimated similarities concentrate", "[similarity][property]") {
  auto model = make_binary_symmetric(3, 0.8);
  const Matrix exact = exact_similarity(model).values();
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n : {500, 1000, 2000, 4000, 8000}) {
    double err = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      err += (estimate_similarity(evolve_sequences(model, n, seed * 31 + n)).values() - exact).norm();
    err /= 20;
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("laplacian", "[similarity]") {
  CHECK(laplacian(Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() == 0.0);

  Matrix two(2, 2);
  two << 1, 0.3, 0.3, 1;
  auto ev = Eigen::SelfAdjointEigenSolver<Matrix>(laplacian(two)).eigenvalues();
  CHECK(ev[0] == Approx(0.0).margin(1e-15));
  CHECK(ev[1] == Approx(0.6).margin(1e-15));

  auto fig5 = parse_newick("(x1:0.5,x2:0.5,(x3:0.5,x4:0.5):0.5);");
  Matrix l = laplacian(exact_similarity(fig5));
  CHECK(l.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("laplacian of exact similarities is PSD with zero row sums", "[similarity][property]") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto f = static_cast<fixtures::Family>(seed % 3);
    auto s = exact_similarity(fixtures::random_model(f, 8 + seed % 25, seed));
    Matrix l = laplacian(s);
    const double m = static_cast<double>(s.size());
    CHECK(l.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-9 * m);
    CHECK((l - l.transpose()).cwiseAbs().maxCoeff() == 0.0);
    auto ev = Eigen::SelfAdjointEigenSolver<Matrix>(l).eigenvalues();
    CHECK(ev[0] >= -1e-9 * l.trace());
    auto fr = fiedler_vector(l);
    CHECK(std::abs(fr.vector.sum()) < 1e-8);
    CHECK((l * fr.vector - fr.lambda2 * fr.vector).norm() <= 1e-8 * ev[ev.size() - 1]);
  }
}

TEST_CASE("fiedler vector examples", "[similarity]") {
  Matrix p3(3, 3);
  p3 << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  auto f = fiedler_vector(p3);
  CHECK(f.lambda2 == Approx(1.0).margin(1e-12));
  CHECK(f.vector[0] == Approx(1 / std::sqrt(2.0)).margin(1e-12));
  CHECK(f.vector[1] == Approx(0.0).margin(1e-12));
  CHECK(f.vector[2] == Approx(-1 / std::sqrt(2.0)).margin(1e-12));

  auto s = exact_similarity(make_binary_symmetric(2, 0.5));
  auto fs = fiedler_from_similarity(s.values());
  CHECK(fs.lambda2 == Approx(0.25).margin(1e-12));
  CHECK(fs.lambda2 == Approx(std::pow(4.0, 2 * std::log2(0.5) + 1)).margin(1e-12));
  auto part = sign_partition(fs.vector, s.labels());
  std::set<LeafSet> sides{part.c1, part.c2};
  CHECK(sides == std::set<LeafSet>{{"x1", "x2"}, {"x3", "x4"}});

  Matrix blocks = Matrix::Zero(4, 4);
  blocks << 1, 0.5, 0, 0, 0.5, 1, 0, 0, 0, 0, 1, 0.5, 0, 0, 0.5, 1;
  CHECK_THROWS_AS(fiedler_from_similarity(blocks), DisconnectedGraphError);
}

TEST_CASE("iterative fiedler solver matches dense on large blocks", "[similarity]") {
  for (double delta : {0.65, 0.8}) {
    auto s = exact_similarity(make_binary_symmetric(8, delta));  // m = 256, iterative path
    REQUIRE(static_cast<Index>(s.size()) > kDenseLimit);
    auto f = fiedler_from_similarity(s.values());
    const double m = 256;
    CHECK(f.lambda2 == Approx(std::pow(m, 2 * std::log2(delta) + 1)).epsilon(1e-9));
    for (Index i = 0; i < f.vector.size(); ++i)
      CHECK(std::abs(f.vector[i]) == Approx(1 / std::sqrt(m)).epsilon(1e-9));
  }
  auto s = exact_similarity(fixtures::random_model(fixtures::Family::coalescent, 260, 4));
  auto f = fiedler_from_similarity(s.values());
  auto es = Eigen::SelfAdjointEigenSolver<Matrix>(laplacian(s));
  CHECK(f.lambda2 == Approx(es.eigenvalues()[1]).epsilon(1e-9));
  Vector ref = es.eigenvectors().col(1);
  CHECK(std::abs(std::abs(ref.dot(f.vector)) - 1.0) < 1e-8);
  Matrix l = laplacian(s);
  CHECK((l * f.vector - f.lambda2 * f.vector).norm() <= 1e-8 * es.eigenvalues().maxCoeff());
}

TEST_CASE("singular triplets", "[similarity]") {
  Vector a(4), b(3);
  a << 1, 2, 3, 4;
  b << 0.5, -1, 2;
  Matrix r1 = a * b.transpose();
  auto t = leading_singular_triplet(r1);
  CHECK(t.sigma1 == Approx(a.norm() * b.norm()).epsilon(1e-12));
  CHECK(t.sigma2 <= 1e-10 * t.sigma1);
  CHECK((r1 * t.v - t.sigma1 * t.u).norm() <= 1e-8 * t.sigma1);
  CHECK(t.u[0] > 0);

  auto fig5 = parse_newick("(x1:0.5,x2:0.5,(x3:0.5,x4:0.5):0.5);");
  auto s = exact_similarity(fig5);
  auto idx = [&](std::initializer_list<const char*> l) {
    std::vector<Index> out;
    for (auto x : l) out.push_back(s.index_of(x));
    return out;
  };
  Matrix clan = gather(s.values(), idx({"x1", "x2"}), idx({"x3", "x4"}));
  auto tc = leading_singular_triplet(clan);
  CHECK(tc.sigma2 / tc.sigma1 <= 1e-10);
  Matrix mixed = gather(s.values(), idx({"x1", "x3"}), idx({"x2", "x4"}));
  CHECK(second_singular_value(mixed) / leading_singular_triplet(mixed).sigma1 > 0.01);
  CHECK(second_singular_value(mixed) == Approx(0.125).margin(1e-12));

  CHECK_THROWS_AS(leading_singular_triplet(Matrix::Zero(3, 3)), DegenerateError);

  // clan cross blocks of random exact models are rank one
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto model = fixtures::random_model(fixtures::Family::birth_death, 20, seed);
    auto sm = exact_similarity(model);
    for (EdgeId e = 0; e < model.tree.edge_count(); ++e) {
      auto [x, y] = split_at_edge(model.tree, e);
      if (x.size() < 2 || y.size() < 2) continue;
      auto tr = leading_singular_triplet(gather(sm.values(), sm.indices_of(x), sm.indices_of(y)));
      CHECK(tr.sigma2 <= 1e-10 * tr.sigma1);
    }
  }
}

TEST_CASE("iterative SVD matches dense on large blocks", "[similarity]") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix m(260, 230);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = g(rng);
  Vector a = Vector::NullaryExpr(260, [&](Index) { return g(rng); });
  Vector b = Vector::NullaryExpr(230, [&](Index) { return g(rng); });
  m += 3.0 * a * b.transpose();
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  for (const Matrix& mm : {m, Matrix(m.transpose())}) {
    auto t = leading_singular_triplet(mm);
    CHECK(t.sigma1 == Approx(svd.singularValues()[0]).epsilon(1e-9));
    CHECK(t.sigma2 == Approx(svd.singularValues()[1]).epsilon(1e-9));
    CHECK((mm * t.v - t.sigma1 * t.u).norm() <= 1e-8 * t.sigma1);
  }
  Matrix rank1 = a * b.transpose();
  auto t1 = leading_singular_triplet(rank1);
  CHECK(t1.sigma2 <= 1e-10 * t1.sigma1);
}

TEST_CASE("similarity CSV round trip", "[similarity]") {
  auto s = exact_similarity(make_caterpillar(6, 0.7));
  std::stringstream ss;
  write_matrix_csv(ss, s);
  auto [labels, values] = read_matrix_csv(ss);
  CHECK(labels == s.labels());
  CHECK((values - s.values()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("clamping counts out-of-range entries", "[similarity]") {
  Matrix v(2, 2);
  v << 1, 1.02, 1.02, 1;
  SimilarityMatrix s({"a", "b"}, v);
  CHECK(s(0, 1) == 1.0);
  CHECK(s.clamp_events() == 2);
}
