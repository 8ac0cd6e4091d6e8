// Dense primal active-set solver for convex quadratic programs
//
//   min 1/2 x'Qx + c'x   s.t.  A_eq x = b_eq,  G x <= h
//
// with Q symmetric positive semidefinite (Q = 0 gives a linear program).
// Equality rows stay in the working set permanently; inequality rows enter
// and leave under Bland's smallest-index rule, which also serves as the
// anti-cycling rule in the LP limit. Zero-curvature directions of the
// reduced Hessian are handled as descent rays that run to the nearest
// blocking constraint, so positive definiteness is not required as long as
// the feasible set contains no unbounded descent ray (true whenever G
// includes box rows on every variable, as in all uses here).
//
// Feasibility is restored by an elastic phase-1 LP over (x, t):
//   min t  s.t.  A_eq x = b_eq,  Gx - h <= t 1,  t >= 0,
// whose optimum doubles as the infeasibility certificate.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mcasim/errors.hpp"
#include "mcasim/types.hpp"

namespace mcasim {

enum class QpStatus { optimal, infeasible, unbounded, iteration_limit };

struct QpOptions {
  double feas_tol = 1e-9;   // primal feasibility / active-set tolerance
  double opt_tol = 1e-8;    // reduced gradient and multiplier tolerance
  int max_iter = 0;         // 0 -> 200 * (n + rows)
};

struct QpProblem {
  Mat Q;     // n x n (may be 0 x 0 for pure LP)
  Vec c;     // n
  Mat A_eq;  // k x n (may be empty)
  Vec b_eq;  // k
  Mat G;     // r x n
  Vec h;     // r
};

struct QpResult {
  QpStatus status = QpStatus::iteration_limit;
  Vec x;
  Vec eq_mult;    // k
  Vec ineq_mult;  // r, zero off the final working set
  double objective = 0.0;
  int iterations = 0;
  double infeasibility = 0.0;  // phase-1 optimum when status == infeasible
  double kkt_residual = kInf;
};

namespace detail {

struct ActiveSetOutcome {
  QpStatus status;
  Vec x;
  Vec eq_mult;
  Vec lam;  // per G row
  int iterations;
};

// Core loop. x must satisfy A_eq x = b_eq exactly and G x <= h + feas_tol.
inline ActiveSetOutcome active_set_iterate(const Mat& Q, const Vec& c, const Mat& A_eq,
                                           const Mat& G, const Vec& h, Vec x,
                                           const QpOptions& opt) {
  const int n = static_cast<int>(x.size());
  const int k_eq = static_cast<int>(A_eq.rows());
  const int r = static_cast<int>(G.rows());
  const bool has_q = Q.size() > 0;
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : 200 * (n + r + 1);

  std::vector<int> work;  // active G rows, kept sorted by row index
  std::vector<char> in_work(r, 0);

  auto build_aw = [&](Mat& aw) {
    aw.resize(k_eq + static_cast<int>(work.size()), n);
    if (k_eq > 0) aw.topRows(k_eq) = A_eq;
    for (std::size_t i = 0; i < work.size(); ++i) aw.row(k_eq + static_cast<int>(i)) = G.row(work[i]);
  };

  // Seed the working set with constraints active at x, keeping rows that
  // increase rank only.
  {
    Mat aw(k_eq, n);
    if (k_eq > 0) aw = A_eq;
    int rank = 0;
    if (k_eq > 0) {
      Eigen::ColPivHouseholderQR<Mat> qr(aw.transpose());
      rank = static_cast<int>(qr.rank());
    }
    for (int i = 0; i < r && rank < n; ++i) {
      if (h[i] - G.row(i).dot(x) <= opt.feas_tol) {
        Mat trial(aw.rows() + 1, n);
        trial.topRows(aw.rows()) = aw;
        trial.row(aw.rows()) = G.row(i);
        Eigen::ColPivHouseholderQR<Mat> qr(trial.transpose());
        if (static_cast<int>(qr.rank()) == rank + 1) {
          aw = trial;
          ++rank;
          work.push_back(i);
          in_work[i] = 1;
        }
      }
    }
  }

  // Smallest blocking row along direction d, Bland tie-break.
  auto max_step = [&](const Vec& xx, const Vec& d) -> std::pair<double, int> {
    double alpha = kInf;
    int row = -1;
    for (int i = 0; i < r; ++i) {
      if (in_work[i]) continue;
      double s = G.row(i).dot(d);
      if (s <= 1e-12) continue;
      double res = h[i] - G.row(i).dot(xx);
      if (res < 0.0) res = 0.0;
      double ratio = res / s;
      if (ratio < alpha - 1e-12) {
        alpha = ratio;
        row = i;
      }
    }
    return {alpha, row};
  };

  Mat aw;
  for (int iter = 0; iter < max_iter; ++iter) {
    Vec g = has_q ? Vec(Q * x + c) : c;
    build_aw(aw);
    const int nw = static_cast<int>(aw.rows());

    Eigen::HouseholderQR<Mat> qr(aw.transpose());  // n x nw
    Mat q_full = qr.householderQ();
    const int d_null = n - nw;
    Mat z = d_null > 0 ? Mat(q_full.rightCols(d_null)) : Mat(n, 0);

    bool stationary = true;
    if (d_null > 0) {
      Vec rz = z.transpose() * g;
      Mat hz = has_q ? Mat(z.transpose() * Q * z) : Mat::Zero(d_null, d_null);
      Eigen::SelfAdjointEigenSolver<Mat> eig(hz);
      const Vec& lam_h = eig.eigenvalues();
      const Mat& v = eig.eigenvectors();
      double curve_tol = 1e-10 * std::max(1.0, lam_h.size() > 0 ? lam_h.maxCoeff() : 0.0);

      // Zero-curvature descent ray: run to the nearest blocking constraint.
      Vec ray = Vec::Zero(d_null);
      for (int j = 0; j < d_null; ++j) {
        if (lam_h[j] <= curve_tol) {
          double comp = v.col(j).dot(rz);
          if (std::abs(comp) > opt.opt_tol) ray -= comp * v.col(j);
        }
      }
      if (ray.lpNorm<Eigen::Infinity>() > opt.opt_tol) {
        Vec dir = z * ray;
        dir /= dir.lpNorm<Eigen::Infinity>();
        auto [alpha, row] = max_step(x, dir);
        if (row < 0)
          return {QpStatus::unbounded, x, Vec::Zero(k_eq), Vec::Zero(r), iter};
        x += alpha * dir;
        work.insert(std::lower_bound(work.begin(), work.end(), row), row);
        in_work[row] = 1;
        continue;
      }

      // Newton step on the positive-curvature subspace.
      Vec pz = Vec::Zero(d_null);
      for (int j = 0; j < d_null; ++j)
        if (lam_h[j] > curve_tol) pz -= (v.col(j).dot(rz) / lam_h[j]) * v.col(j);
      Vec p = z * pz;
      if (p.lpNorm<Eigen::Infinity>() > 1e-11 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
        stationary = false;
        auto [alpha_max, row] = max_step(x, p);
        double alpha = std::min(1.0, alpha_max);
        x += alpha * p;
        if (alpha_max < 1.0 && row >= 0) {
          work.insert(std::lower_bound(work.begin(), work.end(), row), row);
          in_work[row] = 1;
        }
        continue;
      }
    }

    if (stationary) {
      // Multipliers: A_W' y = -g, exact since the reduced gradient vanished.
      Vec y = qr.solve(-g);
      int drop = -1;
      for (std::size_t i = 0; i < work.size(); ++i) {
        if (y[k_eq + static_cast<int>(i)] < -opt.opt_tol) {
          drop = static_cast<int>(i);
          break;  // work is sorted: first hit is Bland's smallest index
        }
      }
      if (drop < 0) {
        Vec lam = Vec::Zero(r);
        for (std::size_t i = 0; i < work.size(); ++i) {
          double li = y[k_eq + static_cast<int>(i)];
          lam[work[i]] = li > 0.0 ? li : 0.0;
        }
        Vec nu = k_eq > 0 ? Vec(y.head(k_eq)) : Vec();
        return {QpStatus::optimal, x, nu, lam, iter};
      }
      in_work[work[drop]] = 0;
      work.erase(work.begin() + drop);
    }
  }
  return {QpStatus::iteration_limit, x, Vec::Zero(k_eq), Vec::Zero(r), max_iter};
}

}  // namespace detail

inline double qp_objective(const QpProblem& p, const Vec& x) {
  double obj = p.c.dot(x);
  if (p.Q.size() > 0) obj += 0.5 * x.dot(p.Q * x);
  return obj;
}

/// KKT residual of a candidate optimum: stationarity, primal feasibility,
/// complementarity and dual sign, as a single max norm.
inline double qp_kkt_residual(const QpProblem& p, const Vec& x, const Vec& eq_mult,
                              const Vec& ineq_mult) {
  Vec grad = p.c;
  if (p.Q.size() > 0) grad += p.Q * x;
  if (p.A_eq.rows() > 0) grad += p.A_eq.transpose() * eq_mult;
  if (p.G.rows() > 0) grad += p.G.transpose() * ineq_mult;
  double res = grad.lpNorm<Eigen::Infinity>();
  if (p.A_eq.rows() > 0)
    res = std::max(res, (p.A_eq * x - p.b_eq).lpNorm<Eigen::Infinity>());
  for (int i = 0; i < p.G.rows(); ++i) {
    double slack = p.h[i] - p.G.row(i).dot(x);
    res = std::max(res, std::max(0.0, -slack));
    res = std::max(res, std::max(0.0, -ineq_mult[i]));
    res = std::max(res, std::abs(ineq_mult[i] * slack));
  }
  return res;
}

/// Solves the QP from a starting point that satisfies the equalities exactly.
/// Inequality violations at x0 are repaired by the elastic phase-1 LP; its
/// optimum above tolerance is returned as an infeasibility certificate.
inline QpResult solve_qp(const QpProblem& prob, const Vec& x0, const QpOptions& opt = {}) {
  const int n = static_cast<int>(prob.c.size());
  const int r = static_cast<int>(prob.G.rows());
  if (!prob.c.allFinite() || (prob.Q.size() > 0 && !prob.Q.allFinite()) ||
      (r > 0 && (!prob.G.allFinite() || !prob.h.allFinite())))
    throw ContractError("solve_qp: non-finite problem data");
  if (!x0.allFinite() || x0.size() != n) throw ContractError("solve_qp: bad starting point");
  if (prob.A_eq.rows() > 0 &&
      (prob.A_eq * x0 - prob.b_eq).lpNorm<Eigen::Infinity>() > 1e-7)
    throw ContractError("solve_qp: x0 violates equality constraints");

  QpResult out;
  Vec x_start = x0;
  double violation = 0.0;
  for (int i = 0; i < r; ++i)
    violation = std::max(violation, prob.G.row(i).dot(x0) - prob.h[i]);

  if (violation > opt.feas_tol) {
    // Elastic phase 1 over (x, t).
    const int k_eq = static_cast<int>(prob.A_eq.rows());
    Mat a_eq1(k_eq, n + 1);
    if (k_eq > 0) {
      a_eq1.leftCols(n) = prob.A_eq;
      a_eq1.col(n).setZero();
    }
    Mat g1(r + 1, n + 1);
    g1.topLeftCorner(r, n) = prob.G;
    g1.topRightCorner(r, 1).setConstant(-1.0);
    g1.row(r).setZero();
    g1(r, n) = -1.0;
    Vec h1(r + 1);
    h1.head(r) = prob.h;
    h1[r] = 0.0;
    Vec c1 = Vec::Zero(n + 1);
    c1[n] = 1.0;
    Vec y0(n + 1);
    y0.head(n) = x0;
    y0[n] = violation;

    auto ph1 = detail::active_set_iterate(Mat(), c1, a_eq1, g1, h1, y0, opt);
    out.iterations += ph1.iterations;
    if (ph1.status != QpStatus::optimal) {
      out.status = QpStatus::iteration_limit;
      out.x = x0;
      return out;
    }
    double t_star = std::max(0.0, ph1.x[n]);
    if (t_star > std::max(opt.feas_tol, 1e-9)) {
      out.status = QpStatus::infeasible;
      out.infeasibility = t_star;
      out.x = ph1.x.head(n);
      return out;
    }
    x_start = ph1.x.head(n);
  }

  auto ph2 = detail::active_set_iterate(prob.Q, prob.c, prob.A_eq, prob.G, prob.h, x_start, opt);
  out.iterations += ph2.iterations;
  out.status = ph2.status;
  out.x = ph2.x;
  if (ph2.status == QpStatus::optimal) {
    out.eq_mult = ph2.eq_mult;
    out.ineq_mult = ph2.lam;
    out.objective = qp_objective(prob, ph2.x);
    out.kkt_residual = qp_kkt_residual(prob, ph2.x, ph2.eq_mult, ph2.lam);
  }
  return out;
}

}  // namespace mcasim
