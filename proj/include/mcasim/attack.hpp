// Coordinated measurement-corruption attacks: the corruption vector with its
// box bound and substation mask, the flow-increase goal, and the randomized
// attack generator used by the simulation harness.
#pragma once

#include <bit>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mcasim/grid.hpp"
#include "mcasim/rng.hpp"

namespace mcasim {

enum class CorrelationRole { unclassified, strongly_correlated, weakly_correlated };

struct SubstationSet {
  SubsetMask mask = 0;
  CorrelationRole role = CorrelationRole::unclassified;
};

inline int subset_cardinality(SubsetMask mask) { return std::popcount(mask); }

inline std::vector<int> subset_members(SubsetMask mask) {
  std::vector<int> out;
  for (int k = 0; mask; ++k, mask >>= 1)
    if (mask & 1) out.push_back(k);
  return out;
}

inline std::string subset_names(const GridCase& gc, SubsetMask mask) {
  std::string out;
  for (int k : subset_members(mask)) {
    if (!out.empty()) out += ",";
    out += gc.substations[k].name;
  }
  return out;
}

/// A bus is corruptible only when every substation covering it is attacked:
/// a defended (unattacked) substation pins all measurements in its area.
inline std::vector<char> corruptible_buses(const GridCase& gc, SubsetMask attacked) {
  std::vector<char> out(gc.n, 0);
  for (int i = 0; i < gc.n; ++i)
    out[i] = gc.bus_cover[i] != 0 && (gc.bus_cover[i] & ~attacked) == 0;
  return out;
}

/// Corruption vector a with its per-bus bound. Entries outside the attacked
/// area must be zero; everything is in p.u.
struct AttackVector {
  Vec a;
  Vec abar;
};

/// Validates the box and mask constraints and returns the vector.
inline AttackVector make_attack_vector(const GridCase& gc, SubsetMask attacked, Vec a, Vec abar) {
  if (a.size() != gc.n || abar.size() != gc.n)
    throw ContractError("attack vector dimension mismatch");
  auto mask = corruptible_buses(gc, attacked);
  for (int i = 0; i < gc.n; ++i) {
    if (abar[i] < 0.0) throw ContractError("negative attack bound at bus index " + std::to_string(i));
    if (std::abs(a[i]) > abar[i] + 1e-12)
      throw ContractError("attack exceeds bound at bus index " + std::to_string(i));
    if (!mask[i] && a[i] != 0.0)
      throw ContractError("attack touches protected bus index " + std::to_string(i));
  }
  return {std::move(a), std::move(abar)};
}

/// Observed demand under attack: P_d + a.
inline Vec corrupt_measurements(const Vec& p_d, const AttackVector& atk) {
  if (p_d.size() != atk.a.size()) throw ContractError("corrupt_measurements: dimension mismatch");
  for (int i = 0; i < atk.a.size(); ++i)
    if (std::abs(atk.a[i]) > atk.abar[i] + 1e-12)
      throw ContractError("attack exceeds bound at bus index " + std::to_string(i));
  return p_d + atk.a;
}

/// Target lines with their required flow-increase fractions, judged against
/// the pre-attack flows.
struct AttackGoal {
  std::vector<std::pair<int, double>> targets;  // (line index, tau > 0)
  Vec baseline_flows;                           // p.u., size m
};

struct GoalCheck {
  std::vector<bool> per_target;
  bool any = false;
};

/// A target is met when the true flow, measured along the pre-attack flow
/// direction, reaches (1 + tau) times the baseline magnitude. Lines with a
/// (near) zero baseline cannot meet a fractional-increase goal. The overall
/// flag is true when any target is met: one inflicted consequence already
/// constitutes a threat.
inline GoalCheck goal_achieved(const AttackGoal& goal, const ShiftMatrix& sm, const GridCase& gc,
                               const Vec& p_g, const Vec& p_d_true) {
  GoalCheck out;
  Vec flows = slack_absorbed_flows(sm, gc, p_g, p_d_true);
  out.per_target.reserve(goal.targets.size());
  for (const auto& [line, tau] : goal.targets) {
    if (line < 0 || line >= gc.m) throw ContractError("unknown line index " + std::to_string(line));
    double base = goal.baseline_flows[line];
    bool hit = false;
    if (std::abs(base) > 1e-12) {
      double oriented = base > 0.0 ? flows[line] : -flows[line];
      hit = oriented >= (1.0 + tau) * std::abs(base) - 1e-9;
    }
    out.per_target.push_back(hit);
    out.any = out.any || hit;
  }
  return out;
}

/// Margin form of the same test: min over targets of (oriented flow minus
/// threshold); >= 0 means every target is met simultaneously.
inline double goal_margin(const AttackGoal& goal, const Vec& flows) {
  double margin = kInf;
  for (const auto& [line, tau] : goal.targets) {
    double base = goal.baseline_flows[line];
    double m;
    if (std::abs(base) > 1e-12) {
      double oriented = base > 0.0 ? flows[line] : -flows[line];
      m = oriented - (1.0 + tau) * std::abs(base);
    } else {
      m = -kInf;
    }
    margin = std::min(margin, m);
  }
  return margin;
}

struct RandomMca {
  SubstationSet target;
  AttackVector attack;
  Vec corrupted;  // P_d + a
};

/// Random coordinated attack: cardinality uniform on {1..n_s}, then a uniform
/// subset of that size; corruptible bus measurements drawn uniformly from
/// [P_d - abar, P_d + abar].
inline RandomMca random_mca(const GridCase& gc, SubstreamRng& rng, const Vec& abar) {
  RandomMca out;
  int k = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(gc.n_s)));
  SubsetMask mask = 0;
  for (int s : rng.sample_subset(gc.n_s, k)) mask |= SubsetMask{1} << s;
  out.target.mask = mask;

  Vec a = Vec::Zero(gc.n);
  auto corruptible = corruptible_buses(gc, mask);
  for (int i = 0; i < gc.n; ++i)
    if (corruptible[i] && abar[i] > 0.0) a[i] = rng.uniform(-abar[i], abar[i]);
  out.attack = {a, abar};
  out.corrupted = gc.demand + a;
  return out;
}

inline Vec default_attack_bound(const GridCase& gc, double abar_frac) {
  return abar_frac * gc.demand;
}

}  // namespace mcasim
