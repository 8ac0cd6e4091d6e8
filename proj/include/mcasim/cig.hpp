// Correlation Index Generator. The induction engine reconstructs demand from
// pseudo-measurements and infers which flow-increase consequences a deceived
// dispatch inflicts. The deduction engine solves the bilevel attack-synthesis
// problem by exhaustive subset enumeration in increasing cardinality (exact
// at the substation counts of interest) with a derivative-free inner search
// over the corruption box: vertex multistarts on a per-substation
// parameterization, pattern refinement, then a per-bus polish.
#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcasim/attack.hpp"
#include "mcasim/dcopf.hpp"
#include "mcasim/util.hpp"

namespace mcasim {

struct PseudoMeasurements {
  Vec p_d_pre;
  enum class Source { estimated, redundant } source = Source::estimated;
};

struct InduceResult {
  std::vector<std::pair<int, double>> con;  // inflicted (line, tau) pairs
  bool opf_infeasible = false;
  Vec reconstructed;  // demand estimate used as the baseline
};

/// One knowledge-base record: every minimum-cardinality substation set that
/// reaches the consequence set, the security index, and replayable witnesses.
struct CiTuple {
  AttackGoal con;
  int kappa_star = -1;  // -1 when unreachable
  std::vector<SubsetMask> cis;
  std::vector<Vec> witnesses;  // corruption vector per CI
  bool reachable = false;
  bool verified = false;
  int opf_failures = 0;
  std::uint64_t opf_solves = 0;
};

struct FeasibilityResult {
  bool feasible = false;
  Vec witness;
  double best_margin = -kInf;
  std::uint64_t opf_solves = 0;
  int opf_failures = 0;
};

struct DeduceOptions {
  int budget_per_subset = 200;  // OPF solves per candidate subset
  int jobs = 1;
};

class CigEngine {
 public:
  CigEngine(const GridCase& gc, const ShiftMatrix& sm, OpfOptions opf_opt = {})
      : grid_(gc), shift_(sm), solver_(gc, sm, opf_opt) {
    baseline_ = solver_.solve(gc.demand);
    if (baseline_.status != DispatchStatus::optimal)
      throw ValidationError("base-case dispatch failed: " +
                            std::string(to_string(baseline_.status)));
    baseline_flows_ = line_flows(sm, gc, baseline_.p_g, gc.demand);
  }

  const GridCase& grid() const { return grid_; }
  const ShiftMatrix& shift() const { return shift_; }
  const OpfSolver& solver() const { return solver_; }
  const DispatchResult& baseline_dispatch() const { return baseline_; }
  const Vec& baseline_flows() const { return baseline_flows_; }

  /// Goal anchored to the engine's true baseline flows.
  AttackGoal make_goal(const std::vector<std::pair<int, double>>& targets) const {
    for (const auto& [line, tau] : targets) {
      if (line < 0 || line >= grid_.m)
        throw ContractError("goal references unknown line " + std::to_string(line));
      if (!(tau > 0.0)) throw ContractError("goal tau must be positive");
    }
    return {targets, baseline_flows_};
  }

  /// Induction: reconstruct demand (pseudo-measurements inside detected
  /// substations, trusted measurements elsewhere), dispatch against the
  /// reconstruction for the baseline, and list every threshold the deceived
  /// dispatch exceeds. A precomputed dispatch for `measurements` may be
  /// passed to avoid a duplicate solve.
  InduceResult induce(SubsetMask detected, const Vec& measurements,
                      const PseudoMeasurements& pseudo,
                      const std::vector<std::pair<int, double>>& taus,
                      const DispatchResult* deceived_hint = nullptr) const {
    InduceResult out;
    if (measurements.size() != grid_.n) throw ContractError("induce: measurement size mismatch");

    Vec reconstructed = measurements;
    if (detected != 0) {
      if (pseudo.p_d_pre.size() != grid_.n)
        throw ContractError("induce: pseudo-measurement size mismatch");
      for (int i = 0; i < grid_.n; ++i)
        if (grid_.bus_cover[i] & detected) reconstructed[i] = pseudo.p_d_pre[i];
    }
    out.reconstructed = reconstructed;

    const DispatchResult* deceived = deceived_hint;
    DispatchResult deceived_local;
    if (!deceived) {
      deceived_local = solver_.solve(measurements);
      deceived = &deceived_local;
    }
    if (deceived->status != DispatchStatus::optimal) {
      out.opf_infeasible = true;
      return out;
    }

    bool same_input = reconstructed.size() == measurements.size();
    for (int i = 0; same_input && i < grid_.n; ++i)
      same_input = reconstructed[i] == measurements[i];

    DispatchResult base_local;
    const DispatchResult* base = deceived;
    if (!same_input) {
      base_local = solver_.solve(reconstructed);
      base = &base_local;
    }
    if (base->status != DispatchStatus::optimal) {
      out.opf_infeasible = true;
      return out;
    }

    Vec base_flows = shift_.F * [&] {
      Vec inj = -reconstructed;
      for (int g = 0; g < grid_.n_g; ++g) inj[grid_.gen_bus[g]] += base->p_g[g];
      return inj;
    }();
    AttackGoal goal{taus, base_flows};
    GoalCheck check = goal_achieved(goal, shift_, grid_, deceived->p_g, reconstructed);
    for (std::size_t t = 0; t < taus.size(); ++t)
      if (check.per_target[t]) out.con.push_back(taus[t]);
    return out;
  }

  /// Inner problem of the bilevel program: is there a corruption inside the
  /// delta-masked box whose deceived dispatch meets every target of `con`?
  /// Returns a replay-verified witness when found. A `false` under a finite
  /// budget is a search answer, not a proof.
  FeasibilityResult attack_feasible(const AttackGoal& con, SubsetMask subset, const Vec& abar,
                                    int budget = 200) const {
    FeasibilityResult out;
    if (abar.size() != grid_.n) throw ContractError("attack_feasible: bound size mismatch");

    auto corruptible = corruptible_buses(grid_, subset);
    std::vector<int> free_buses;
    for (int i = 0; i < grid_.n; ++i)
      if (corruptible[i] && abar[i] > 0.0) free_buses.push_back(i);

    auto evaluate = [&](const Vec& a) -> double {
      ++out.opf_solves;
      DispatchResult r = solver_.solve(grid_.demand + a);
      if (r.status != DispatchStatus::optimal) {
        ++out.opf_failures;
        return -kInf;
      }
      Vec flows = slack_absorbed_flows(shift_, grid_, r.p_g, grid_.demand);
      return goal_margin(con, flows);
    };
    auto consider = [&](const Vec& a, double margin) {
      if (margin > out.best_margin) {
        out.best_margin = margin;
        out.witness = a;
      }
    };

    Vec zero = Vec::Zero(grid_.n);
    double margin0 = evaluate(zero);
    consider(zero, margin0);
    if (out.best_margin >= -1e-9 || free_buses.empty() ||
        static_cast<int>(out.opf_solves) >= budget) {
      out.feasible = out.best_margin >= -1e-9;
      if (out.feasible && out.witness.size() == 0) out.witness = zero;
      return out;
    }

    const auto members = subset_members(subset);
    const int dims = static_cast<int>(members.size());
    auto expand = [&](const Vec& u) {
      Vec a = Vec::Zero(grid_.n);
      for (int i : free_buses) {
        for (int d = 0; d < dims; ++d) {
          if (grid_.bus_cover[i] & (SubsetMask{1} << members[d])) {
            a[i] = u[d] * abar[i];  // lowest covering substation wins
            break;
          }
        }
      }
      return a;
    };

    // Stage 1a: flow-oriented bang-bang seeds. For each target line, order
    // the corruptible buses by their direct effect on the oriented flow and
    // sweep the crossing point between the +abar prefix and -abar suffix.
    // Coordinate search alone stalls on these knapsack-like optima.
    for (const auto& [line, tau] : con.targets) {
      if (out.best_margin >= -1e-9 || static_cast<int>(out.opf_solves) >= budget) break;
      double base = con.baseline_flows[line];
      if (std::abs(base) <= 1e-12) continue;
      double sigma = base > 0.0 ? 1.0 : -1.0;
      std::vector<int> order = free_buses;
      std::sort(order.begin(), order.end(), [&](int a_, int b_) {
        return sigma * shift_.F(line, a_) < sigma * shift_.F(line, b_);
      });
      const int nb = static_cast<int>(order.size());
      int cuts = std::min(nb + 1, 22);
      for (int c = 0; c < cuts; ++c) {
        if (static_cast<int>(out.opf_solves) >= budget) break;
        int cut = cuts == nb + 1 ? c : (c * nb) / (cuts - 1);
        Vec a = Vec::Zero(grid_.n);
        for (int i = 0; i < nb; ++i) a[order[i]] = (i < cut ? 1.0 : -1.0) * abar[order[i]];
        consider(a, evaluate(a));
        if (out.best_margin >= -1e-9) break;
      }
    }

    // Stage 1b: box vertices of the per-substation parameterization.
    Vec best_u = Vec::Zero(dims);
    double best_u_margin = -kInf;
    for (SubsetMask v = 0; v < (SubsetMask{1} << dims); ++v) {
      if (out.best_margin >= -1e-9 || static_cast<int>(out.opf_solves) >= budget) break;
      Vec u(dims);
      for (int d = 0; d < dims; ++d) u[d] = (v >> d) & 1 ? 1.0 : -1.0;
      double m = evaluate(expand(u));
      if (m > best_u_margin) {
        best_u_margin = m;
        best_u = u;
      }
      consider(expand(u), m);
    }

    // Stage 2: pattern search on the substation coordinates.
    if (out.best_margin < -1e-9) {
      double step = 0.5;
      while (step >= 1e-3 && static_cast<int>(out.opf_solves) < budget &&
             out.best_margin < -1e-9) {
        bool improved = false;
        for (int d = 0; d < dims && static_cast<int>(out.opf_solves) < budget; ++d) {
          for (double dir : {+1.0, -1.0}) {
            Vec u = best_u;
            u[d] = std::clamp(u[d] + dir * step, -1.0, 1.0);
            if (u[d] == best_u[d]) continue;
            double m = evaluate(expand(u));
            if (m > out.best_margin + 1e-12) {
              best_u = u;
              consider(expand(u), m);
              improved = true;
              break;
            }
            if (out.best_margin >= -1e-9) break;
          }
          if (out.best_margin >= -1e-9) break;
        }
        if (!improved) step *= 0.5;
      }
    }

    // Stage 3: per-bus polish, each bus its own coordinate.
    if (out.best_margin < -1e-9 && static_cast<int>(out.opf_solves) < budget) {
      Vec a = out.witness.size() ? out.witness : expand(best_u);
      double step = 0.25;
      while (step >= 1e-3 && static_cast<int>(out.opf_solves) < budget &&
             out.best_margin < -1e-9) {
        bool improved = false;
        for (int i : free_buses) {
          if (static_cast<int>(out.opf_solves) >= budget) break;
          for (double dir : {+1.0, -1.0}) {
            Vec trial = a;
            trial[i] = std::clamp(a[i] + dir * step * abar[i], -abar[i], abar[i]);
            if (trial[i] == a[i]) continue;
            double m = evaluate(trial);
            if (m > out.best_margin + 1e-12) {
              a = trial;
              consider(trial, m);
              improved = true;
              break;
            }
            if (out.best_margin >= -1e-9) break;
          }
          if (out.best_margin >= -1e-9) break;
        }
        if (!improved) step *= 0.5;
      }
    }

    out.feasible = out.best_margin >= -1e-9;
    if (out.feasible) {
      // Witness replay: the stored corruption must reproduce every target.
      DispatchResult r = solver_.solve(grid_.demand + out.witness);
      ++out.opf_solves;
      bool all_hit = r.status == DispatchStatus::optimal;
      if (all_hit) {
        GoalCheck check = goal_achieved(con, shift_, grid_, r.p_g, grid_.demand);
        for (bool hit : check.per_target) all_hit = all_hit && hit;
      }
      if (!all_hit) throw NumericalError("attack witness failed replay verification");
    }
    return out;
  }

  /// Deduction: minimum number of substations whose coordinated corruption
  /// reaches `con`, together with ALL subsets of that cardinality. Levels are
  /// scanned in increasing cardinality; the first level with a feasible
  /// subset is completed in full, which makes the result exact up to the
  /// power of the inner search. Results are cached; `forced_safe` removes
  /// defended substations from the enumeration.
  CiTuple deduce(const AttackGoal& con, const Vec& abar, SubsetMask forced_safe = 0,
                 DeduceOptions opt = {}) const {
    if (con.targets.empty()) throw ContractError("deduce: empty consequence set");
    for (int i = 0; i < abar.size(); ++i)
      if (abar[i] < 0.0) throw ContractError("deduce: negative attack bound");

    std::string key = cache_key(con, abar, forced_safe, opt.budget_per_subset);
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }

    CiTuple tuple;
    tuple.con = con;

    std::vector<int> available;
    for (int k = 0; k < grid_.n_s; ++k)
      if (!(forced_safe & (SubsetMask{1} << k))) available.push_back(k);

    for (int level = 0; level <= static_cast<int>(available.size()); ++level) {
      std::vector<SubsetMask> candidates = subsets_of_size(available, level);
      std::vector<FeasibilityResult> results(candidates.size());
      parallel_for(candidates.size(), opt.jobs, [&](std::size_t i) {
        results[i] = attack_feasible(con, candidates[i], abar, opt.budget_per_subset);
      });
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        tuple.opf_solves += results[i].opf_solves;
        tuple.opf_failures += results[i].opf_failures;
        if (results[i].feasible) {
          tuple.cis.push_back(candidates[i]);
          tuple.witnesses.push_back(results[i].witness);
        }
      }
      if (!tuple.cis.empty()) {
        tuple.kappa_star = level;
        tuple.reachable = true;
        tuple.verified = true;
        break;
      }
    }

    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_[key] = tuple;
    return tuple;
  }

  /// Classification of a substation set against a goal: strongly correlated
  /// when it reaches the goal and no proper subset does.
  CorrelationRole classify(const AttackGoal& con, SubsetMask subset, const Vec& abar,
                           int budget = 200) const {
    if (!attack_feasible(con, subset, abar, budget).feasible)
      return CorrelationRole::unclassified;
    auto members = subset_members(subset);
    for (int drop : members) {
      SubsetMask reduced = subset & ~(SubsetMask{1} << drop);
      if (attack_feasible(con, reduced, abar, budget).feasible)
        return CorrelationRole::weakly_correlated;
    }
    return CorrelationRole::strongly_correlated;
  }

  // Knowledge-base refresh triggers: network reconfiguration, stress level,
  // sensor detection-rate drift, operator request. All invalidate the CI
  // cache; the caller re-deduces on demand.
  void invalidate_on_topology_change() { clear_cache(); }
  void invalidate_on_stress_change() { clear_cache(); }
  void invalidate_on_detection_rate_change() { clear_cache(); }
  void invalidate_on_operator_request() { clear_cache(); }

 private:
  void clear_cache() {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_.clear();
  }

  static std::vector<SubsetMask> subsets_of_size(const std::vector<int>& pool, int k) {
    std::vector<SubsetMask> out;
    const int n = static_cast<int>(pool.size());
    if (k > n) return out;
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      SubsetMask mask = 0;
      for (int i : idx) mask |= SubsetMask{1} << pool[i];
      out.push_back(mask);
      int pos = k - 1;
      while (pos >= 0 && idx[pos] == n - k + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int i = pos + 1; i < k; ++i) idx[i] = idx[i - 1] + 1;
    }
    return out;
  }

  std::string cache_key(const AttackGoal& con, const Vec& abar, SubsetMask forced_safe,
                        int budget) const {
    std::ostringstream key;
    for (const auto& [line, tau] : con.targets) key << line << ":" << tau << ";";
    key << "|" << hex64(fnv1a64_bytes(abar.data(), sizeof(double) * abar.size()));
    key << "|" << forced_safe << "|" << budget;
    return key.str();
  }

  const GridCase& grid_;
  const ShiftMatrix& shift_;
  OpfSolver solver_;
  DispatchResult baseline_;
  Vec baseline_flows_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, CiTuple> cache_;
};

}  // namespace mcasim
