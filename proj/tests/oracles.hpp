// Test-only oracles. Each one re-derives a quantity through a route that is
// independent of the implementation it checks: angle-space DC flows, a
// projected-gradient/augmented-Lagrangian OPF, dense grid search over the
// dispatch or attack space, literal set-rule evaluation, and exhaustive
// covers. Keep these free of mcasim solver internals.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "mcasim/dcopf.hpp"
#include "mcasim/grid.hpp"

namespace oracle {

using mcasim::GridCase;
using mcasim::Mat;
using mcasim::Vec;

/// DC flows via the angle route: solve B_bus theta = p (slack angle fixed),
/// then flows = (theta_from - theta_to) / x per line.
inline Vec dc_flows_by_angles(const GridCase& gc, const Vec& injection, int slack) {
  const int n = gc.n, m = gc.m;
  Mat b_bus = Mat::Zero(n, n);
  for (int l = 0; l < m; ++l) {
    double b = 1.0 / gc.reactance[l];
    int i = gc.line_from[l], j = gc.line_to[l];
    b_bus(i, i) += b;
    b_bus(j, j) += b;
    b_bus(i, j) -= b;
    b_bus(j, i) -= b;
  }
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (i != slack) keep.push_back(i);
  Mat b_red(n - 1, n - 1);
  Vec p_red(n - 1);
  for (int r = 0; r < n - 1; ++r) {
    p_red[r] = injection[keep[r]];
    for (int c = 0; c < n - 1; ++c) b_red(r, c) = b_bus(keep[r], keep[c]);
  }
  Vec theta_red = b_red.fullPivLu().solve(p_red);
  Vec theta = Vec::Zero(n);
  for (int r = 0; r < n - 1; ++r) theta[keep[r]] = theta_red[r];
  Vec flows(m);
  for (int l = 0; l < m; ++l)
    flows[l] = (theta[gc.line_from[l]] - theta[gc.line_to[l]]) / gc.reactance[l];
  return flows;
}

struct PgOracleResult {
  bool feasible = false;
  Vec p_g;
  double objective = 0.0;
};

/// Projection onto {sum x = total, 0 <= x <= ub} by bisection on the shift.
inline Vec project_balanced_box(const Vec& y, const Vec& ub, double total) {
  auto value = [&](double nu) {
    double s = 0.0;
    for (int i = 0; i < y.size(); ++i) s += std::clamp(y[i] - nu, 0.0, ub[i]);
    return s;
  };
  double lo = y.minCoeff() - total - ub.maxCoeff() - 1.0;
  double hi = y.maxCoeff() + 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (value(mid) > total)
      lo = mid;
    else
      hi = mid;
  }
  double nu = 0.5 * (lo + hi);
  Vec x(y.size());
  for (int i = 0; i < y.size(); ++i) x[i] = std::clamp(y[i] - nu, 0.0, ub[i]);
  return x;
}

/// Independent second-method DC-OPF: augmented Lagrangian on the flow limits,
/// projected gradient on the balance/box set. First-order and slow, but it
/// shares no code path with the active-set solver.
inline PgOracleResult opf_by_projected_gradient(const GridCase& gc, const mcasim::ShiftMatrix& sm,
                                                const Vec& demand, int outer_iters = 60,
                                                int inner_iters = 4000) {
  const int n_g = gc.n_g;
  const double base = gc.base_mva;
  double total = demand.sum();
  PgOracleResult out;
  if (total < 0.0 || total > gc.gen_limit.sum()) return out;

  std::vector<int> lim_lines;
  for (int l = 0; l < gc.m; ++l)
    if (std::isfinite(gc.flow_limit[l])) lim_lines.push_back(l);
  const int mf = static_cast<int>(lim_lines.size());
  Mat h_map(mf, n_g);
  Vec offset(mf), limit(mf);
  for (int i = 0; i < mf; ++i) {
    int l = lim_lines[i];
    for (int g = 0; g < n_g; ++g) h_map(i, g) = sm.F(l, gc.gen_bus[g]);
    offset[i] = sm.F.row(l).dot(demand);
    limit[i] = gc.flow_limit[l];
  }

  Vec q2 = 2.0 * base * base * gc.cost_c2;
  Vec q1 = base * gc.cost_c1;

  Vec x = project_balanced_box(Vec::Zero(n_g), gc.gen_limit, total);
  double rho = 10.0;
  Vec mu_hi = Vec::Zero(mf), mu_lo = Vec::Zero(mf);

  auto grad = [&](const Vec& xx) {
    Vec g = (q2.array() * xx.array()).matrix() + q1;
    if (mf > 0) {
      Vec flows = h_map * xx - offset;
      Vec viol_hi = (flows - limit + mu_hi / rho).cwiseMax(0.0);
      Vec viol_lo = (-flows - limit + mu_lo / rho).cwiseMax(0.0);
      g += rho * (h_map.transpose() * viol_hi) - rho * (h_map.transpose() * viol_lo);
    }
    return g;
  };

  double lips = q2.maxCoeff() + 1.0;
  for (int outer = 0; outer < outer_iters; ++outer) {
    double step = 1.0 / (lips + rho * (mf > 0 ? (h_map.transpose() * h_map).norm() : 0.0));
    for (int it = 0; it < inner_iters; ++it)
      x = project_balanced_box(x - step * grad(x), gc.gen_limit, total);
    if (mf > 0) {
      Vec flows = h_map * x - offset;
      mu_hi = (mu_hi + rho * (flows - limit)).cwiseMax(0.0);
      mu_lo = (mu_lo + rho * (-flows - limit)).cwiseMax(0.0);
      double viol = std::max((flows - limit).maxCoeff(), (-flows - limit).maxCoeff());
      if (viol > 1e-7) rho = std::min(rho * 2.0, 1e7);
    }
  }

  out.feasible = true;
  out.p_g = x;
  out.objective = 0.0;
  for (int g = 0; g < n_g; ++g) {
    double mw = x[g] * base;
    out.objective += gc.cost_c2[g] * mw * mw + gc.cost_c1[g] * mw + gc.cost_c0[g];
  }
  if (mf > 0) {
    Vec flows = h_map * x - offset;
    double viol = std::max((flows - limit).maxCoeff(), (-flows - limit).maxCoeff());
    if (viol > 1e-5) out.feasible = false;
  }
  return out;
}

/// Dense grid search for tiny OPFs (n_g == 1 or 2): enumerate the first
/// generator on a grid, fix the rest by balance, keep the feasible minimum,
/// then polish locally on a finer grid.
inline PgOracleResult opf_by_grid_search(const GridCase& gc, const mcasim::ShiftMatrix& sm,
                                         const Vec& demand, double resolution = 1e-3) {
  const int n_g = gc.n_g;
  const double base = gc.base_mva;
  double total = demand.sum();
  PgOracleResult out;

  auto cost_of = [&](const Vec& x) {
    double obj = 0.0;
    for (int g = 0; g < n_g; ++g) {
      double mw = x[g] * base;
      obj += gc.cost_c2[g] * mw * mw + gc.cost_c1[g] * mw + gc.cost_c0[g];
    }
    return obj;
  };
  auto feasible = [&](const Vec& x) {
    for (int g = 0; g < n_g; ++g)
      if (x[g] < -1e-9 || x[g] > gc.gen_limit[g] + 1e-9) return false;
    Vec injection = -demand;
    for (int g = 0; g < n_g; ++g) injection[gc.gen_bus[g]] += x[g];
    Vec flows = sm.F * injection;
    for (int l = 0; l < gc.m; ++l)
      if (std::isfinite(gc.flow_limit[l]) && std::abs(flows[l]) > gc.flow_limit[l] + 1e-9)
        return false;
    return true;
  };

  if (n_g == 1) {
    Vec x(1);
    x[0] = total;
    if (feasible(x)) {
      out.feasible = true;
      out.p_g = x;
      out.objective = cost_of(x);
    }
    return out;
  }

  double best = std::numeric_limits<double>::infinity();
  Vec best_x;
  auto sweep = [&](double lo, double hi, double step) {
    for (double v = lo; v <= hi + 1e-12; v += step) {
      Vec x(2);
      x[0] = v;
      x[1] = total - v;
      if (!feasible(x)) continue;
      double c = cost_of(x);
      if (c < best - 1e-12) {
        best = c;
        best_x = x;
      }
    }
  };
  sweep(0.0, gc.gen_limit[0], resolution);
  if (best_x.size() > 0)
    sweep(std::max(0.0, best_x[0] - 2 * resolution),
          std::min(gc.gen_limit[0], best_x[0] + 2 * resolution), resolution * 1e-3);
  if (best_x.size() > 0) {
    out.feasible = true;
    out.p_g = best_x;
    out.objective = best;
  }
  return out;
}

/// Literal transcription of the three knowledge-base scanning rules over
/// plain std::set values.
struct LiteralScan {
  int rule = 0;  // 1, 2, 3 or 0 for none
  std::vector<std::set<int>> matched;
};

inline LiteralScan literal_scan(const std::vector<std::set<int>>& cis,
                                const std::set<int>& detected) {
  LiteralScan out;
  for (const auto& ci : cis)
    if (ci == detected) out.matched.push_back(ci);
  if (!out.matched.empty()) {
    out.rule = 1;
    return out;
  }
  for (const auto& ci : cis)
    if (ci != detected && std::includes(detected.begin(), detected.end(), ci.begin(), ci.end()))
      out.matched.push_back(ci);
  if (!out.matched.empty()) {
    out.rule = 2;
    return out;
  }
  bool smaller_than_all = !cis.empty();
  for (const auto& ci : cis)
    if (detected.size() >= ci.size()) smaller_than_all = false;
  if (smaller_than_all) {
    for (const auto& ci : cis)
      if (ci != detected && std::includes(ci.begin(), ci.end(), detected.begin(), detected.end()))
        out.matched.push_back(ci);
    if (!out.matched.empty()) {
      out.rule = 3;
      return out;
    }
  }
  return out;
}

/// Exhaustive minimum hitting set: smallest set of elements such that every
/// input set contains at least one chosen element.
inline std::set<int> exhaustive_min_cover(const std::vector<std::set<int>>& sets, int universe) {
  for (int k = 0; k <= universe; ++k) {
    std::vector<int> pick(k, 0);
    std::function<std::set<int>(int, int)> rec = [&](int start, int depth) -> std::set<int> {
      if (depth == k) {
        std::set<int> chosen(pick.begin(), pick.begin() + k);
        for (const auto& s : sets) {
          bool hit = false;
          for (int e : chosen)
            if (s.count(e)) {
              hit = true;
              break;
            }
          if (!hit) return {};
        }
        return chosen.empty() && !sets.empty() ? std::set<int>{-1} : chosen;
      }
      for (int e = start; e < universe; ++e) {
        pick[depth] = e;
        auto r = rec(e + 1, depth + 1);
        if (!r.empty()) return r;
      }
      return {};
    };
    if (k == 0) {
      if (sets.empty()) return {};
      continue;
    }
    auto r = rec(0, 0);
    if (!r.empty() && !r.count(-1)) return r;
  }
  return {};
}

}  // namespace oracle
