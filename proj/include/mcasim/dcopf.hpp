// Security-constrained DC optimal power flow: minimize generation cost
// subject to power balance, generator limits and line-flow limits. One
// OpfSolver instance precomputes the constraint geometry for a case and is
// then reused for every demand vector; solves are reentrant and count into a
// global instrumentation counter.
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>

#include "mcasim/grid.hpp"
#include "mcasim/qp.hpp"

namespace mcasim {

enum class DispatchStatus { optimal, infeasible, unbounded, solver_failure };

inline const char* to_string(DispatchStatus s) {
  switch (s) {
    case DispatchStatus::optimal: return "optimal";
    case DispatchStatus::infeasible: return "infeasible";
    case DispatchStatus::unbounded: return "unbounded";
    case DispatchStatus::solver_failure: return "solver_failure";
  }
  return "?";
}

struct OpfOptions {
  double feas_tol = 1e-7;  // contract tolerance on (1b)-(1d)
  double opt_tol = 1e-8;   // reduced-cost tolerance
  int max_iter = 0;
};

struct DispatchResult {
  DispatchStatus status = DispatchStatus::solver_failure;
  Vec p_g;            // p.u., n_g
  Vec flows;          // p.u., m (against the observed demand)
  double objective = 0.0;  // $ per hour, includes c0 terms
  double kkt_residual = kInf;
  double infeasibility = 0.0;  // phase-1 certificate when infeasible
  int iterations = 0;
};

namespace detail {
inline std::atomic<std::uint64_t>& opf_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}
}  // namespace detail

/// Total solve_opf invocations since process start (instrumentation).
inline std::uint64_t opf_solve_count() {
  return detail::opf_counter().load(std::memory_order_relaxed);
}

struct DispatchProblem {
  const GridCase& grid;
  const ShiftMatrix& shift;
  Vec observed_demand;  // p.u.
};

class OpfSolver {
 public:
  OpfSolver(const GridCase& gc, const ShiftMatrix& sm, OpfOptions opt = {})
      : grid_(gc), shift_(sm), opt_(opt) {
    const int n_g = gc.n_g;
    // Quadratic cost in per-unit variables keeps the objective in $/h:
    // c2 (x b)^2 + c1 (x b) -> (1/2) x' (2 c2 b^2) x + (c1 b) x.
    q_ = Mat::Zero(n_g, n_g);
    lin_ = Vec::Zero(n_g);
    c0_sum_ = 0.0;
    const double b = gc.base_mva;
    for (int g = 0; g < n_g; ++g) {
      q_(g, g) = 2.0 * gc.cost_c2[g] * b * b;
      lin_[g] = gc.cost_c1[g] * b;
      c0_sum_ += gc.cost_c0[g];
    }
    all_linear_ = (gc.cost_c2.lpNorm<Eigen::Infinity>() == 0.0);

    for (int l = 0; l < gc.m; ++l)
      if (std::isfinite(gc.flow_limit[l])) limited_lines_.push_back(l);
    const int mf = static_cast<int>(limited_lines_.size());

    // Injection map H = F * Pi_g restricted to limited lines.
    h_flow_ = Mat::Zero(mf, n_g);
    for (int i = 0; i < mf; ++i)
      for (int g = 0; g < n_g; ++g) h_flow_(i, g) = sm.F(limited_lines_[i], gc.gen_bus[g]);

    // Row order fixes the pivot/tie rules: generator upper bounds, generator
    // lower bounds, then flow upper/lower bounds in line order.
    const int rows = 2 * n_g + 2 * mf;
    g_ = Mat::Zero(rows, n_g);
    for (int g = 0; g < n_g; ++g) {
      g_(g, g) = 1.0;
      g_(n_g + g, g) = -1.0;
    }
    g_.block(2 * n_g, 0, mf, n_g) = h_flow_;
    g_.block(2 * n_g + mf, 0, mf, n_g) = -h_flow_;

    a_eq_ = Mat::Ones(1, n_g);
  }

  const GridCase& grid() const { return grid_; }
  const ShiftMatrix& shift() const { return shift_; }

  DispatchResult solve(const Vec& observed_demand) const {
    detail::opf_counter().fetch_add(1, std::memory_order_relaxed);
    const auto& gc = grid_;
    if (observed_demand.size() != gc.n || !observed_demand.allFinite())
      throw ContractError("solve_opf: demand vector malformed");

    DispatchResult out;
    const double total = observed_demand.sum();
    const double cap = gc.gen_limit.sum();
    if (total < -opt_.feas_tol || total > cap + opt_.feas_tol) {
      out.status = DispatchStatus::infeasible;
      out.infeasibility = total < 0.0 ? -total : total - cap;
      return out;
    }

    const int n_g = gc.n_g;
    const int mf = static_cast<int>(limited_lines_.size());
    Vec f_d(mf);
    for (int i = 0; i < mf; ++i)
      f_d[i] = shift_.F.row(limited_lines_[i]).dot(observed_demand);

    QpProblem prob;
    prob.Q = all_linear_ ? Mat() : q_;
    prob.c = lin_;
    prob.A_eq = a_eq_;
    prob.b_eq = Vec::Constant(1, total);
    prob.G = g_;
    prob.h.resize(g_.rows());
    prob.h.head(n_g) = gc.gen_limit;
    prob.h.segment(n_g, n_g).setZero();
    for (int i = 0; i < mf; ++i) {
      double lim = gc.flow_limit[limited_lines_[i]];
      prob.h[2 * n_g + i] = lim + f_d[i];
      prob.h[2 * n_g + mf + i] = lim - f_d[i];
    }

    // Proportional dispatch satisfies balance and the box exactly.
    Vec x0 = cap > 0.0 ? Vec((total / cap) * gc.gen_limit) : Vec(Vec::Zero(n_g));

    QpOptions qopt;
    qopt.feas_tol = 1e-9;
    qopt.opt_tol = opt_.opt_tol;
    qopt.max_iter = opt_.max_iter;
    QpResult qr = solve_qp(prob, x0, qopt);

    out.iterations = qr.iterations;
    switch (qr.status) {
      case QpStatus::optimal: {
        out.p_g = qr.x;
        out.flows = slack_absorbed_flows(shift_, gc, qr.x, observed_demand);
        out.objective = qp_objective(prob, qr.x) + c0_sum_;
        out.kkt_residual = qr.kkt_residual;
        out.status = DispatchStatus::optimal;
        // Contract check on (1b)-(1d); demote dishonest answers.
        double viol = std::abs(qr.x.sum() - total);
        for (int g = 0; g < n_g; ++g)
          viol = std::max({viol, -qr.x[g], qr.x[g] - gc.gen_limit[g]});
        for (int i = 0; i < mf; ++i) {
          double lim = gc.flow_limit[limited_lines_[i]];
          viol = std::max(viol, std::abs(out.flows[limited_lines_[i]]) - lim);
        }
        if (viol > opt_.feas_tol || out.kkt_residual > 1e-6)
          out.status = DispatchStatus::solver_failure;
        break;
      }
      case QpStatus::infeasible:
        out.status = DispatchStatus::infeasible;
        out.infeasibility = qr.infeasibility;
        break;
      case QpStatus::unbounded:
        out.status = DispatchStatus::unbounded;
        break;
      case QpStatus::iteration_limit:
        out.status = DispatchStatus::solver_failure;
        break;
    }
    return out;
  }

 private:
  const GridCase& grid_;
  const ShiftMatrix& shift_;
  OpfOptions opt_;
  Mat q_, g_, a_eq_, h_flow_;
  Vec lin_;
  double c0_sum_ = 0.0;
  bool all_linear_ = false;
  std::vector<int> limited_lines_;
};

/// One-shot convenience wrapper around OpfSolver.
inline DispatchResult solve_opf(const DispatchProblem& prob, OpfOptions opt = {}) {
  OpfSolver solver(prob.grid, prob.shift, opt);
  return solver.solve(prob.observed_demand);
}

}  // namespace mcasim
