// Correlation Knowledge-Base. Scanning reduces to bitmask equality, subset
// and superset tests plus cardinality comparisons; no power-flow computation
// is ever reachable from the scan path. The reasoning engine merges
// consequence sets and derives measurement-protection plans whose soundness
// rests on the minimality of the stored records.
#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mcasim/cig.hpp"

namespace mcasim {

enum class ScanRule { none, rule1_is_ci, rule2_superset, rule3_small_subset };

inline const char* to_string(ScanRule r) {
  switch (r) {
    case ScanRule::none: return "none";
    case ScanRule::rule1_is_ci: return "rule1_is_ci";
    case ScanRule::rule2_superset: return "rule2_superset";
    case ScanRule::rule3_small_subset: return "rule3_small_subset";
  }
  return "?";
}

struct ScanVerdict {
  bool is_existing = false;
  ScanRule matched_rule = ScanRule::none;
  bool partial = false;  // rule 3: correlation is known but incomplete
  std::vector<std::pair<int, int>> matched;  // (record id, ci index)
};

enum class DefenseCase { single_ci, case_I, case_II, case_III };

inline const char* to_string(DefenseCase c) {
  switch (c) {
    case DefenseCase::single_ci: return "single_ci";
    case DefenseCase::case_I: return "case_I";
    case DefenseCase::case_II: return "case_II";
    case DefenseCase::case_III: return "case_III";
  }
  return "?";
}

struct DefensePlan {
  DefenseCase case_kind = DefenseCase::single_ci;
  SubsetMask defend = 0;
  std::vector<std::pair<SubsetMask, int>> per_ci;  // CI -> defended substation
};

/// Immutable knowledge-base snapshot. Updates produce a new version.
class KnowledgeBase {
 public:
  struct Record {
    CiTuple tuple;
  };

  KnowledgeBase() = default;

  const std::vector<Record>& records() const { return records_; }
  std::uint64_t version() const { return version_; }

  /// Minimum cardinality over every CI stored (INT_MAX when empty).
  int min_ci_cardinality() const { return min_card_; }

  /// Appends a verified tuple, replacing any record with the same
  /// consequence key. Unverified tuples are rejected.
  KnowledgeBase update(const CiTuple& tuple) const {
    if (!tuple.verified) throw ValidationError("knowledge base rejects unverified tuple");
    KnowledgeBase next = *this;
    std::string key = con_key(tuple.con);
    bool replaced = false;
    for (auto& rec : next.records_) {
      if (con_key(rec.tuple.con) == key) {
        rec.tuple = tuple;
        replaced = true;
        break;
      }
    }
    if (!replaced) next.records_.push_back({tuple});
    next.version_ = version_ + 1;
    next.recompute_min();
    return next;
  }

  /// Scanning rules, applied in order:
  ///   1. detected equals a stored CI;
  ///   2. detected is a strict superset of at least one CI;
  ///   3. detected is a strict subset of at least one CI and smaller than
  ///      every CI in the base (reported as existing-but-partial).
  /// Only set operations and cardinality comparisons run here.
  ScanVerdict scan(SubsetMask detected) const {
    ScanVerdict v;
    for (int r = 0; r < static_cast<int>(records_.size()); ++r) {
      const auto& cis = records_[r].tuple.cis;
      for (int c = 0; c < static_cast<int>(cis.size()); ++c)
        if (cis[c] == detected) v.matched.emplace_back(r, c);
    }
    if (!v.matched.empty()) {
      v.is_existing = true;
      v.matched_rule = ScanRule::rule1_is_ci;
      return v;
    }
    for (int r = 0; r < static_cast<int>(records_.size()); ++r) {
      const auto& cis = records_[r].tuple.cis;
      for (int c = 0; c < static_cast<int>(cis.size()); ++c)
        if (cis[c] != detected && (cis[c] & detected) == cis[c]) v.matched.emplace_back(r, c);
    }
    if (!v.matched.empty()) {
      v.is_existing = true;
      v.matched_rule = ScanRule::rule2_superset;
      return v;
    }
    if (subset_cardinality(detected) < min_card_) {
      for (int r = 0; r < static_cast<int>(records_.size()); ++r) {
        const auto& cis = records_[r].tuple.cis;
        for (int c = 0; c < static_cast<int>(cis.size()); ++c)
          if (cis[c] != detected && (cis[c] & detected) == detected) v.matched.emplace_back(r, c);
      }
      if (!v.matched.empty()) {
        v.is_existing = true;
        v.matched_rule = ScanRule::rule3_small_subset;
        v.partial = true;
        return v;
      }
    }
    return v;
  }

  static std::string con_key(const AttackGoal& con) {
    std::string key;
    for (const auto& [line, tau] : con.targets)
      key += std::to_string(line) + ":" + std::to_string(tau) + ";";
    return key;
  }

  nlohmann::json to_json(const GridCase& gc) const {
    nlohmann::json j;
    auto subs = nlohmann::json::array();
    for (const auto& s : gc.substations) subs.push_back(s.name);
    j["substations"] = subs;
    j["version"] = version_;
    auto records = nlohmann::json::array();
    for (const auto& rec : records_) {
      nlohmann::json r;
      auto con = nlohmann::json::array();
      for (const auto& [line, tau] : rec.tuple.con.targets)
        con.push_back({{"line", line + 1}, {"tau", tau}});
      r["con"] = con;
      r["kappa_star"] = rec.tuple.kappa_star;
      auto cis = nlohmann::json::array();
      for (SubsetMask m : rec.tuple.cis) cis.push_back(subset_members(m));
      r["cis"] = cis;
      auto wit = nlohmann::json::array();
      for (const Vec& w : rec.tuple.witnesses) {
        std::vector<double> vals(w.data(), w.data() + w.size());
        wit.push_back(vals);
      }
      r["witnesses"] = wit;
      auto base = nlohmann::json::array();
      for (int l = 0; l < rec.tuple.con.baseline_flows.size(); ++l)
        base.push_back(rec.tuple.con.baseline_flows[l]);
      r["baseline_flows"] = base;
      records.push_back(r);
    }
    j["records"] = records;
    return j;
  }

  static KnowledgeBase from_json(const nlohmann::json& j) {
    KnowledgeBase kb;
    kb.version_ = j.value("version", std::uint64_t{0});
    for (const auto& r : j.at("records")) {
      CiTuple t;
      for (const auto& c : r.at("con"))
        t.con.targets.emplace_back(c.at("line").get<int>() - 1, c.at("tau").get<double>());
      t.kappa_star = r.at("kappa_star").get<int>();
      for (const auto& ci : r.at("cis")) {
        SubsetMask m = 0;
        for (int k : ci) m |= SubsetMask{1} << k;
        t.cis.push_back(m);
      }
      for (const auto& w : r.at("witnesses")) {
        Vec v(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) v[static_cast<int>(i)] = w[i].get<double>();
        t.witnesses.push_back(v);
      }
      if (r.contains("baseline_flows")) {
        const auto& b = r.at("baseline_flows");
        Vec v(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) v[static_cast<int>(i)] = b[i].get<double>();
        t.con.baseline_flows = v;
      }
      t.reachable = t.kappa_star >= 0;
      t.verified = true;  // snapshots are trusted storage of verified tuples
      kb.records_.push_back({t});
    }
    kb.recompute_min();
    return kb;
  }

 private:
  void recompute_min() {
    min_card_ = std::numeric_limits<int>::max();
    for (const auto& rec : records_)
      for (SubsetMask m : rec.tuple.cis) min_card_ = std::min(min_card_, subset_cardinality(m));
  }

  std::vector<Record> records_;
  std::uint64_t version_ = 0;
  int min_card_ = std::numeric_limits<int>::max();
};

/// Multi-reader/single-writer wrapper: readers take a snapshot pointer and
/// scan without holding the lock; writers swap in a new version atomically.
class KnowledgeBaseStore {
 public:
  KnowledgeBaseStore() : current_(std::make_shared<const KnowledgeBase>()) {}
  explicit KnowledgeBaseStore(KnowledgeBase kb)
      : current_(std::make_shared<const KnowledgeBase>(std::move(kb))) {}

  std::shared_ptr<const KnowledgeBase> snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return current_;
  }

  void update(const CiTuple& tuple) {
    std::lock_guard<std::mutex> lock(mutex_);
    current_ = std::make_shared<const KnowledgeBase>(current_->update(tuple));
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const KnowledgeBase> current_;
};

/// Union of the matched records' consequences; overlapping lines keep the
/// largest required increase. Baseline flows are shared scenario state.
inline AttackGoal identify_targets(const KnowledgeBase& kb, const ScanVerdict& verdict) {
  if (!verdict.is_existing) throw ContractError("identify_targets: verdict matched nothing");
  std::map<int, double> merged;
  Vec baseline;
  std::vector<char> seen(kb.records().size(), 0);
  for (const auto& [rec_id, ci_idx] : verdict.matched) {
    if (seen[rec_id]) continue;
    seen[rec_id] = 1;
    const auto& tuple = kb.records()[rec_id].tuple;
    if (baseline.size() == 0) baseline = tuple.con.baseline_flows;
    for (const auto& [line, tau] : tuple.con.targets) {
      auto it = merged.find(line);
      if (it == merged.end() || it->second < tau) merged[line] = tau;
    }
  }
  AttackGoal goal;
  goal.baseline_flows = baseline;
  for (const auto& [line, tau] : merged) goal.targets.emplace_back(line, tau);
  return goal;
}

/// Protection plan for a set of matched CIs.
///   single CI        -> defend its lowest-indexed member;
///   common member    -> defend one substation in the global intersection;
///   pairwise disjoint-> defend one member of every CI;
///   otherwise        -> greedy cover, most-frequent substation first.
inline DefensePlan derive_defense(const std::vector<SubsetMask>& cis) {
  if (cis.empty()) throw ContractError("derive_defense: no CIs");
  DefensePlan plan;
  auto lowest = [](SubsetMask m) { return subset_members(m).front(); };

  if (cis.size() == 1) {
    plan.case_kind = DefenseCase::single_ci;
    int pick = lowest(cis[0]);
    plan.defend = SubsetMask{1} << pick;
    plan.per_ci.emplace_back(cis[0], pick);
    return plan;
  }

  SubsetMask common = cis[0];
  for (SubsetMask m : cis) common &= m;
  if (common != 0) {
    plan.case_kind = DefenseCase::case_I;
    int pick = lowest(common);
    plan.defend = SubsetMask{1} << pick;
    for (SubsetMask m : cis) plan.per_ci.emplace_back(m, pick);
    return plan;
  }

  bool pairwise_disjoint = true;
  for (std::size_t i = 0; i < cis.size() && pairwise_disjoint; ++i)
    for (std::size_t j = i + 1; j < cis.size(); ++j)
      if (cis[i] & cis[j]) {
        pairwise_disjoint = false;
        break;
      }
  if (pairwise_disjoint) {
    plan.case_kind = DefenseCase::case_II;
    for (SubsetMask m : cis) {
      int pick = lowest(m);
      plan.defend |= SubsetMask{1} << pick;
      plan.per_ci.emplace_back(m, pick);
    }
    return plan;
  }

  // Mixed intersections: greedy cover, ties to the lowest substation index.
  plan.case_kind = DefenseCase::case_III;
  std::vector<SubsetMask> uncovered(cis);
  while (!uncovered.empty()) {
    int best = -1, best_count = -1;
    for (int k = 0; k < 64; ++k) {
      SubsetMask bit = SubsetMask{1} << k;
      int count = 0;
      for (SubsetMask m : uncovered)
        if (m & bit) ++count;
      if (count > best_count) {
        best_count = count;
        best = k;
      }
    }
    SubsetMask bit = SubsetMask{1} << best;
    plan.defend |= bit;
    std::vector<SubsetMask> rest;
    for (SubsetMask m : uncovered) {
      if (m & bit) {
        plan.per_ci.emplace_back(m, best);
      } else {
        rest.push_back(m);
      }
    }
    uncovered.swap(rest);
  }
  // Covered CIs that also contain other defended substations keep their
  // greedy assignment; order per_ci by the input order for determinism.
  std::stable_sort(plan.per_ci.begin(), plan.per_ci.end(),
                   [&](const auto& a, const auto& b) {
                     auto pos = [&](SubsetMask m) {
                       return std::find(cis.begin(), cis.end(), m) - cis.begin();
                     };
                     return pos(a.first) < pos(b.first);
                   });
  return plan;
}

/// Executable form of the ineffectiveness argument: for every matched CI,
/// removing its defended substations must leave no feasible attack on the
/// tuple's consequences under the given search budget.
inline bool verify_defense(const CigEngine& engine, const DefensePlan& plan,
                           const std::vector<std::pair<SubsetMask, const CiTuple*>>& matched,
                           const Vec& abar, int budget = 200) {
  for (const auto& [ci, tuple] : matched) {
    if ((ci & plan.defend) == 0) return false;  // plan must touch every CI
    SubsetMask remaining = ci & ~plan.defend;
    auto probe = engine.attack_feasible(tuple->con, remaining, abar, budget);
    if (probe.feasible) return false;
  }
  return true;
}

}  // namespace mcasim
