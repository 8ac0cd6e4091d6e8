// Network model: bus/line/generator topology in per-unit, plus the generation
// shift (PTDF) matrix that maps nodal injections to line flows under the DC
// approximation.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "mcasim/errors.hpp"
#include "mcasim/types.hpp"

namespace mcasim {

struct Substation {
  std::string name;
  std::vector<int> buses;  // dense bus indices, sorted
};

/// Parsed, validated, per-unit network. Indices are dense and 0-based; the
/// original file ids are kept in bus_ids for reporting.
struct GridCase {
  double base_mva = 100.0;
  int n = 0;    // buses
  int m = 0;    // lines
  int n_g = 0;  // generators
  int n_s = 0;  // substations

  std::vector<int> bus_ids;  // dense index -> external id
  Vec demand_mw;             // as parsed
  Vec demand;                // p.u.

  std::vector<int> line_from, line_to;  // dense bus indices
  Vec reactance;                        // p.u.
  Vec flow_limit_mw;                    // as parsed (0 = unlimited)
  Vec flow_limit;                       // p.u. (kInf where unlimited)

  std::vector<int> gen_bus;  // dense bus index per generator
  Vec gen_limit_mw;
  Vec gen_limit;                 // p.u.
  Vec cost_c2, cost_c1, cost_c0;  // $/MW^2, $/MW, $ per generator

  std::vector<Substation> substations;
  std::vector<SubsetMask> bus_cover;  // per bus: bitmask of covering substations

  int slack_bus = 0;  // dense index

  int bus_index(int id) const {
    auto it = id_to_index.find(id);
    if (it == id_to_index.end()) throw ValidationError("unknown bus id " + std::to_string(id));
    return it->second;
  }

  int substation_index(const std::string& name) const {
    for (int k = 0; k < n_s; ++k)
      if (substations[k].name == name) return k;
    throw ValidationError("unknown substation " + name);
  }

  /// Bus-to-generator 0/1 map (n x n_g), one 1 per column.
  Mat gen_incidence() const {
    Mat pi = Mat::Zero(n, n_g);
    for (int g = 0; g < n_g; ++g) pi(gen_bus[g], g) = 1.0;
    return pi;
  }

  bool connected() const {
    if (n == 0) return false;
    std::vector<std::vector<int>> adj(n);
    for (int l = 0; l < m; ++l) {
      adj[line_from[l]].push_back(line_to[l]);
      adj[line_to[l]].push_back(line_from[l]);
    }
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          q.push(v);
        }
    }
    return count == n;
  }

  std::map<int, int> id_to_index;
};

inline bool operator==(const GridCase& a, const GridCase& b) {
  auto veq = [](const Vec& x, const Vec& y) {
    if (x.size() != y.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x[i] != y[i]) return false;
    return true;
  };
  if (a.base_mva != b.base_mva || a.n != b.n || a.m != b.m || a.n_g != b.n_g || a.n_s != b.n_s)
    return false;
  if (a.bus_ids != b.bus_ids || a.line_from != b.line_from || a.line_to != b.line_to ||
      a.gen_bus != b.gen_bus || a.slack_bus != b.slack_bus)
    return false;
  if (!veq(a.demand_mw, b.demand_mw) || !veq(a.reactance, b.reactance) ||
      !veq(a.flow_limit_mw, b.flow_limit_mw) || !veq(a.gen_limit_mw, b.gen_limit_mw) ||
      !veq(a.cost_c2, b.cost_c2) || !veq(a.cost_c1, b.cost_c1) || !veq(a.cost_c0, b.cost_c0))
    return false;
  if (a.substations.size() != b.substations.size()) return false;
  for (std::size_t k = 0; k < a.substations.size(); ++k)
    if (a.substations[k].name != b.substations[k].name ||
        a.substations[k].buses != b.substations[k].buses)
      return false;
  return true;
}

/// Generation shift matrix F (m x n). For any balanced injection p,
/// F * p gives the DC line flows with the angle reference at slack_bus; the
/// slack column is identically zero.
struct ShiftMatrix {
  Mat F;
  int slack_bus = 0;
};

/// Builds F by factorizing the reduced nodal susceptance matrix once and
/// back-solving one unit injection per non-slack bus. Dense on purpose: the
/// systems of interest have at most a few hundred buses.
inline ShiftMatrix compute_shift_matrix(const GridCase& gc) {
  if (!gc.connected()) throw TopologyError("grid graph is disconnected");
  const int n = gc.n, m = gc.m;
  Mat incidence = Mat::Zero(m, n);  // row l: +1 at from, -1 at to
  Vec b_line(m);
  for (int l = 0; l < m; ++l) {
    if (!(gc.reactance[l] > 0.0))
      throw ValidationError("non-positive reactance on line " + std::to_string(l));
    incidence(l, gc.line_from[l]) = 1.0;
    incidence(l, gc.line_to[l]) = -1.0;
    b_line[l] = 1.0 / gc.reactance[l];
  }
  Mat b_bus = incidence.transpose() * b_line.asDiagonal() * incidence;

  const int slack = gc.slack_bus;
  Mat b_red(n - 1, n - 1);
  std::vector<int> keep;
  keep.reserve(n - 1);
  for (int i = 0; i < n; ++i)
    if (i != slack) keep.push_back(i);
  for (int r = 0; r < n - 1; ++r)
    for (int c = 0; c < n - 1; ++c) b_red(r, c) = b_bus(keep[r], keep[c]);

  Eigen::PartialPivLU<Mat> lu(b_red);
  // A connected graph gives a nonsingular reduced susceptance matrix; guard
  // against pathological reactance scaling anyway.
  Mat identity = Mat::Identity(n - 1, n - 1);
  Mat b_inv = lu.solve(identity);
  if (!b_inv.allFinite()) throw NumericalError("singular reduced susceptance matrix");

  ShiftMatrix sm;
  sm.slack_bus = slack;
  sm.F = Mat::Zero(m, n);
  // theta(column k) = B_red^{-1} e_k; flows = diag(b) * incidence * theta
  Mat theta_full = Mat::Zero(n, n - 1);
  for (int c = 0; c < n - 1; ++c)
    for (int r = 0; r < n - 1; ++r) theta_full(keep[r], c) = b_inv(r, c);
  Mat flows = b_line.asDiagonal() * incidence * theta_full;  // m x (n-1)
  for (int c = 0; c < n - 1; ++c) sm.F.col(keep[c]) = flows.col(c);
  return sm;
}

/// Line flows of a balanced dispatch: P_f = F (Pi_g P_g - P_d).
/// The injection must balance to zero within 1e-8 p.u.
inline Vec line_flows(const ShiftMatrix& sm, const GridCase& gc, const Vec& p_g, const Vec& p_d) {
  if (p_g.size() != gc.n_g || p_d.size() != gc.n)
    throw ContractError("line_flows: dimension mismatch");
  Vec injection = -p_d;
  for (int g = 0; g < gc.n_g; ++g) injection[gc.gen_bus[g]] += p_g[g];
  if (std::abs(injection.sum()) > 1e-8)
    throw ContractError("line_flows: injection imbalance " + std::to_string(injection.sum()));
  return sm.F * injection;
}

/// Flows of a possibly unbalanced injection; the residual is absorbed at the
/// slack bus (whose F column is zero). Used when evaluating deceived
/// dispatches against the true demand.
inline Vec slack_absorbed_flows(const ShiftMatrix& sm, const GridCase& gc, const Vec& p_g,
                                const Vec& p_d) {
  Vec injection = -p_d;
  for (int g = 0; g < gc.n_g; ++g) injection[gc.gen_bus[g]] += p_g[g];
  return sm.F * injection;
}

}  // namespace mcasim
