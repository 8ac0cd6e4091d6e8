#include <catch2/catch_amalgamated.hpp>

#include "mcasim/qp.hpp"
#include "mcasim/rng.hpp"

using namespace mcasim;

namespace {

// Box rows 0 <= x <= ub appended to extra inequality rows.
QpProblem boxed(const Mat& q, const Vec& c, const Vec& ub, const Mat& g_extra = Mat(),
                const Vec& h_extra = Vec()) {
  const int n = static_cast<int>(c.size());
  const int e = static_cast<int>(g_extra.rows());
  QpProblem p;
  p.Q = q;
  p.c = c;
  p.G = Mat::Zero(2 * n + e, n);
  p.h = Vec::Zero(2 * n + e);
  for (int i = 0; i < n; ++i) {
    p.G(i, i) = 1.0;
    p.h[i] = ub[i];
    p.G(n + i, i) = -1.0;
  }
  if (e > 0) {
    p.G.bottomRows(e) = g_extra;
    p.h.tail(e) = h_extra;
  }
  return p;
}

}  // namespace

TEST_CASE("unconstrained minimum inside the box") {
  Mat q = Mat::Identity(2, 2) * 2.0;
  Vec c(2);
  c << -2.0, -4.0;  // minimum at (1, 2)
  auto p = boxed(q, c, Vec::Constant(2, 10.0));
  auto r = solve_qp(p, Vec::Zero(2));
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(1.0));
  CHECK(r.x[1] == Catch::Approx(2.0));
  CHECK(r.kkt_residual < 1e-9);
}

TEST_CASE("equality-constrained QP clamps at active bounds") {
  Mat q = Mat::Identity(2, 2);
  Vec c = Vec::Zero(2);
  auto p = boxed(q, c, Vec::Constant(2, 0.8));
  p.A_eq = Mat::Ones(1, 2);
  p.b_eq = Vec::Constant(1, 1.5);
  Vec x0(2);
  x0 << 0.75, 0.75;
  auto r = solve_qp(p, x0);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(0.75));
  CHECK(r.x[1] == Catch::Approx(0.75));
}

TEST_CASE("pure LP walks to the cheapest vertex") {
  Vec c(2);
  c << 1.0, 2.0;
  auto p = boxed(Mat(), c, Vec::Constant(2, 2.0));
  p.A_eq = Mat::Ones(1, 2);
  p.b_eq = Vec::Constant(1, 1.0);
  Vec x0(2);
  x0 << 0.5, 0.5;
  auto r = solve_qp(p, x0);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x[0] == Catch::Approx(1.0));
  CHECK(r.x[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.objective == Catch::Approx(1.0));
}

TEST_CASE("phase one detects infeasibility with a positive certificate") {
  Vec c(1);
  c << 1.0;
  Mat g_extra(1, 1);
  g_extra << -1.0;
  Vec h_extra(1);
  h_extra << -3.0;  // x >= 3 against ub = 2
  auto p = boxed(Mat(), c, Vec::Constant(1, 2.0), g_extra, h_extra);
  auto r = solve_qp(p, Vec::Zero(1));
  REQUIRE(r.status == QpStatus::infeasible);
  // Elastic relaxation spreads the gap between x <= 2 and x >= 3 evenly.
  CHECK(r.infeasibility == Catch::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("non-finite data is a contract error") {
  Vec c(1);
  c << std::numeric_limits<double>::quiet_NaN();
  auto p = boxed(Mat(), c, Vec::Constant(1, 1.0));
  REQUIRE_THROWS_AS(solve_qp(p, Vec::Zero(1)), ContractError);
}

TEST_CASE("random strictly convex problems satisfy KKT at the reported optimum") {
  SubstreamRng rng(17, "qp-random");
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(4));
    Mat a = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    Mat q = a.transpose() * a + 0.1 * Mat::Identity(n, n);
    Vec c(n), ub(n);
    for (int i = 0; i < n; ++i) {
      c[i] = rng.uniform(-2.0, 2.0);
      ub[i] = rng.uniform(0.5, 3.0);
    }
    int extra = static_cast<int>(rng.uniform_int(3));
    Mat ge(extra, n);
    Vec he(extra);
    for (int e = 0; e < extra; ++e) {
      for (int i = 0; i < n; ++i) ge(e, i) = rng.uniform(-1.0, 1.0);
      he[e] = rng.uniform(0.2, 2.0);
    }
    auto p = boxed(q, c, ub, ge, he);
    bool with_eq = rng.bernoulli(0.5);
    Vec x0 = Vec::Zero(n);
    if (with_eq) {
      p.A_eq = Mat::Ones(1, n);
      double rhs = rng.uniform(0.0, 0.4 * ub.sum());
      p.b_eq = Vec::Constant(1, rhs);
      x0 = (rhs / ub.sum()) * ub;
    }
    auto r = solve_qp(p, x0);
    if (r.status == QpStatus::infeasible) continue;  // random cuts may be empty
    REQUIRE(r.status == QpStatus::optimal);
    CHECK(r.kkt_residual < 1e-7);
  }
}

TEST_CASE("random LPs agree with vertex enumeration") {
  SubstreamRng rng(23, "lp-random");
  for (int trial = 0; trial < 100; ++trial) {
    // min c'x over {0 <= x <= ub, sum x = s}: optimum fills cheapest first.
    int n = 2 + static_cast<int>(rng.uniform_int(4));
    Vec c(n), ub(n);
    for (int i = 0; i < n; ++i) {
      c[i] = rng.uniform(-1.0, 1.0);
      ub[i] = rng.uniform(0.5, 2.0);
    }
    double s = rng.uniform(0.0, 0.9) * ub.sum();
    auto p = boxed(Mat(), c, ub);
    p.A_eq = Mat::Ones(1, n);
    p.b_eq = Vec::Constant(1, s);
    Vec x0 = (s / ub.sum()) * ub;
    auto r = solve_qp(p, x0);
    REQUIRE(r.status == QpStatus::optimal);

    // Greedy fill in cost order is optimal for this structure.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return c[a] < c[b]; });
    double remaining = s, expect = 0.0;
    for (int i : order) {
      double take = std::min(remaining, ub[i]);
      expect += c[i] * take;
      remaining -= take;
    }
    CHECK(r.objective == Catch::Approx(expect).margin(1e-7));
    CHECK(r.kkt_residual < 1e-7);
  }
}

TEST_CASE("identical inputs give bit-identical solutions") {
  Mat q = Mat::Identity(3, 3);
  Vec c(3);
  c << -1.0, 0.5, -0.25;
  auto p = boxed(q, c, Vec::Constant(3, 1.0));
  auto r1 = solve_qp(p, Vec::Zero(3));
  auto r2 = solve_qp(p, Vec::Zero(3));
  REQUIRE(r1.status == QpStatus::optimal);
  for (int i = 0; i < 3; ++i) CHECK(r1.x[i] == r2.x[i]);
  CHECK(r1.objective == r2.objective);
}
