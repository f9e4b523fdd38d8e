#include <Eigen/Dense>
#include <cmath>
#include <doctest.h>

#include "misp/embed.hpp"
#include "misp/error.hpp"
#include "misp/rng.hpp"

using misp::Rng;
namespace embed = misp::embed;

namespace {

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// Independent scalar norm: plain loop, no Eigen reductions.
double scalar_norm(const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += v(i) * v(i);
  return std::sqrt(acc);
}

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("fuse matches the 2x2 outer product") {
  Eigen::VectorXd hv(2), ht(2);
  hv << 1, 2;
  ht << 3, 4;
  const Eigen::VectorXd out = embed::fuse(hv, ht);
  REQUIRE(out.size() == 4);
  CHECK(out(0) == 3.0);
  CHECK(out(1) == 4.0);
  CHECK(out(2) == 6.0);
  CHECK(out(3) == 8.0);
}

TEST_CASE("fuse annihilates on a zero factor") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd ht(2);
  ht << 5, -1;
  CHECK(embed::fuse(zero, ht).isZero(0.0));
}

TEST_CASE("fuse norm identity against scalar oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a = random_vector(rng, 8);
    Eigen::VectorXd b = random_vector(rng, 8);
    const double expected = scalar_norm(a) * scalar_norm(b);
    const double got = embed::fuse(a, b).norm();
    CHECK(std::abs(got - expected) <= 1e-12 * std::max(1.0, expected));
  }
}

TEST_CASE("fuse norm identity for unit vectors") {
  Rng rng(55);
  Eigen::VectorXd a = random_vector(rng, 8).normalized();
  Eigen::VectorXd b = random_vector(rng, 8).normalized();
  CHECK(embed::fuse(a, b).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fuse rejects empty and non-finite input") {
  Eigen::VectorXd ok(2), empty(0), bad(2);
  ok << 1, 2;
  bad << 1, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(embed::fuse(empty, ok), misp::DimensionError);
  CHECK_THROWS_AS(embed::fuse(ok, empty), misp::DimensionError);
  CHECK_THROWS_AS(embed::fuse(ok, bad), misp::NumericError);
}

TEST_CASE("difference arithmetic and antisymmetry") {
  Eigen::VectorXd p(4), c(4);
  p << 3, 4, 6, 8;
  c << 1, 1, 1, 1;
  const Eigen::VectorXd d = embed::difference(p, c);
  Eigen::VectorXd expect(4);
  expect << 2, 3, 5, 7;
  CHECK(d == expect);
  CHECK(embed::difference(p, p).isZero(0.0));

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd a = random_vector(rng, 6);
    Eigen::VectorXd b = random_vector(rng, 6);
    CHECK(embed::difference(a, b) == -embed::difference(b, a));
  }
}

TEST_CASE("difference rejects length mismatch") {
  Eigen::VectorXd a(2), b(3);
  a.setZero();
  b.setZero();
  CHECK_THROWS_AS(embed::difference(a, b), misp::DimensionError);
}

TEST_CASE("difference carries the candidate id") {
  Eigen::VectorXd a(2), b(2);
  a << 1, 2;
  b << 0, 1;
  const embed::DifferenceVector d = embed::difference(a, b, "cand-7");
  CHECK(d.candidate_id == "cand-7");
  CHECK(d.values(0) == 1.0);
}

TEST_CASE("cosine basics") {
  Eigen::VectorXd u(2), v(2), w(2), x(2);
  u << 1, 0;
  v << 0, 1;
  w << 1, 2;
  x << 2, 4;
  CHECK(embed::cosine(w, w) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(embed::cosine(u, v) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(embed::cosine(w, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cosine scaling invariance") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd u = random_vector(rng, 5);
    Eigen::VectorXd v = random_vector(rng, 5);
    const double base = embed::cosine(u, v);
    const double scale = rng.uniform(0.01, 100.0);
    CHECK(std::abs(embed::cosine(scale * u, v) - base) <= 1e-12);
    CHECK(std::abs(embed::cosine(u, scale * v) - base) <= 1e-12);
  }
}

TEST_CASE("cosine rejects zero-norm and mismatched input") {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd u = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd short_v = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(embed::cosine(z, u), misp::DegenerateInputError);
  CHECK_THROWS_AS(embed::cosine(u, z), misp::DegenerateInputError);
  CHECK_THROWS_AS(embed::cosine(u, short_v), misp::DimensionError);
}

TEST_CASE("project_2d keeps 2-D centered data intact") {
  Rng rng(29);
  Eigen::MatrixXd rows(6, 2);
  for (Eigen::Index r = 0; r < 6; ++r) {
    rows(r, 0) = rng.normal();
    rows(r, 1) = rng.normal();
  }
  rows.rowwise() -= rows.colwise().mean().eval();
  const Eigen::MatrixXd points = embed::project_2d(rows);
  // Same total variance: the projection is a rotation/sign change.
  CHECK(points.squaredNorm() ==
        doctest::Approx(rows.squaredNorm()).epsilon(1e-10));
}

TEST_CASE("project_2d collapses collinear data to one component") {
  Eigen::VectorXd dir(5);
  dir << 1, -2, 0.5, 3, -1;
  Eigen::MatrixXd rows(3, 5);
  rows.row(0) = -1.0 * dir.transpose();
  rows.row(1) = 0.0 * dir.transpose();
  rows.row(2) = 2.0 * dir.transpose();
  const Eigen::MatrixXd points = embed::project_2d(rows);
  // Second principal-component variance is zero for rank-1 data.
  CHECK(points.col(1).squaredNorm() <= 1e-18 * points.col(0).squaredNorm());
}

TEST_CASE("project_2d variance equals top-2 eigenvalues") {
  Rng rng(31);
  Eigen::MatrixXd rows(50, 16);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) rows(r, c) = rng.normal();
  }
  const Eigen::MatrixXd points = embed::project_2d(rows);
  const double projected_var = points.squaredNorm() / (rows.rows() - 1);

  // Independent oracle: dense eigen-decomposition of the covariance.
  Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  Eigen::MatrixXd cov =
      centered.transpose() * centered / double(rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd ev = es.eigenvalues();  // ascending
  const double expected = ev(ev.size() - 1) + ev(ev.size() - 2);
  CHECK(projected_var == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("project_2d is deterministic and needs two rows") {
  Rng rng(77);
  Eigen::MatrixXd rows(5, 4);
  for (Eigen::Index r = 0; r < 5; ++r) {
    for (Eigen::Index c = 0; c < 4; ++c) rows(r, c) = rng.normal();
  }
  CHECK(embed::project_2d(rows) == embed::project_2d(rows));
  CHECK_THROWS_AS(embed::project_2d(rows.topRows(1)),
                  misp::InsufficientDataError);
}

TEST_CASE("sign projection is deterministic and linear") {
  const embed::SignProjection proj(24, 6, 99);
  Rng rng(5);
  Eigen::VectorXd a = random_vector(rng, 24);
  Eigen::VectorXd b = random_vector(rng, 24);
  CHECK(proj.apply(a) == proj.apply(a));
  const Eigen::VectorXd lhs = proj.apply(2.0 * a + b);
  const Eigen::VectorXd rhs = 2.0 * proj.apply(a) + proj.apply(b);
  CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
  CHECK_THROWS_AS(proj.apply(a.head(5)), misp::DimensionError);

  const embed::SignProjection other(24, 6, 100);
  CHECK(proj.apply(a) != other.apply(a));
}

}  // TEST_SUITE
