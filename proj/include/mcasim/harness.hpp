// Monte-Carlo evaluation harness. Each event follows the detector
// interaction pseudo-code: attack events draw a random coordinated MCA, a
// zero-day flag that suppresses the sensor alarm, and route through
// knowledge-base scanning with induction as the fallback; normal events may
// raise false alarms that feed a phantom attack set to the same path.
// Per-event random substreams keyed by (seed, experiment, event) make runs
// independent of the parallel schedule.
#pragma once

#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcasim/ckb.hpp"
#include "mcasim/idsbench.hpp"
#include "mcasim/util.hpp"

namespace mcasim {

struct ScenarioParams {
  std::vector<int> target_lines;  // 0-based line indices
  double tau = 0.15;
  double abar_frac = 0.1;
  bool infeasible_is_threat = true;  // dispatch failure counts as a consequence
  int deduce_budget = 200;
};

struct ExperimentConfig {
  int experiments = 100;  // M
  int events = 1000;      // N
  std::uint64_t seed = 1;
  int jobs = 1;
  EBlockModel eblock;        // p0_hat overridden per setting
  double delta_frac = 0.1;   // adversarial attack-rate bias, fraction of p0_hat
  double ids2_threshold = 0.5;
  ScenarioParams scenario;
  std::vector<double> p0_values;  // settings to sweep
};

struct EventRecord {
  bool attack = false;
  bool zero_day = false;
  bool false_alarm_forced = false;
  bool alarm = false;
  bool threat_truth = false;
  bool opf_infeasible = false;
  bool label_ids1 = false;
  bool label_ids2 = false;
  bool label_ckb = false;
  bool used_cig = false;
  ScanRule rule = ScanRule::none;
  SubsetMask detected = 0;
};

struct DetectorRates {
  long tp = 0, fn = 0, fp = 0, tn = 0;
  long tp_t = 0, fn_t = 0, fp_t = 0, tn_t = 0;
  std::optional<double> fnr, fpr, fnr_t, fpr_t;
  bool threat_capable = false;
};

struct ExperimentRates {
  DetectorRates ids1, ids2, ckbcig;
};

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  int count = 0;
};

/// Type-7 quartiles over the defined values of a metric.
inline std::optional<BoxStats> box_stats(const std::vector<std::optional<double>>& cells) {
  std::vector<double> v;
  for (const auto& c : cells)
    if (c) v.push_back(*c);
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  auto quant = [&](double p) {
    double h = (static_cast<double>(v.size()) - 1.0) * p;
    std::size_t lo = static_cast<std::size_t>(h);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  BoxStats b;
  b.min = v.front();
  b.q1 = quant(0.25);
  b.median = quant(0.5);
  b.q3 = quant(0.75);
  b.max = v.back();
  double sum = 0;
  for (double x : v) sum += x;
  b.mean = sum / static_cast<double>(v.size());
  b.count = static_cast<int>(v.size());
  return b;
}

/// Immutable per-setting state shared by all events of a run.
struct ScenarioRuntime {
  const GridCase& grid;
  const CigEngine& engine;
  std::shared_ptr<const KnowledgeBase> kb;
  EBlockModel eblock;
  double ids2_threshold = 0.5;
  ScenarioParams scenario;
  Vec abar;
  std::vector<std::pair<int, double>> taus;
  AttackGoal truth_goal;  // anchored to the true baseline flows
  std::uint64_t seed = 1;
  bool ids2_intrusion_on_alarm = false;
};

inline ScenarioRuntime make_runtime(const CigEngine& engine,
                                    std::shared_ptr<const KnowledgeBase> kb,
                                    const ExperimentConfig& cfg, double p0_hat) {
  const GridCase& gc = engine.grid();
  ScenarioRuntime rt{gc, engine, std::move(kb), cfg.eblock, cfg.ids2_threshold, cfg.scenario,
                     Vec(),   {},     {},       cfg.seed,   false};
  rt.eblock.p0_hat = p0_hat;
  rt.eblock.delta_adv = cfg.delta_frac * p0_hat;
  rt.eblock.validate();
  rt.abar = default_attack_bound(gc, cfg.scenario.abar_frac);
  for (int line : cfg.scenario.target_lines) rt.taus.emplace_back(line, cfg.scenario.tau);
  rt.truth_goal = engine.make_goal(rt.taus);
  rt.ids2_intrusion_on_alarm =
      ids2_label(true, rt.eblock, cfg.ids2_threshold).label == IdsLabel::intrusion;
  return rt;
}

/// One attack-or-normal event, fully driven by its own substream.
inline EventRecord run_event(const ScenarioRuntime& rt, int experiment, int event) {
  SubstreamRng rng(rt.seed, "event", static_cast<std::uint64_t>(experiment),
                   static_cast<std::uint64_t>(event));
  EventRecord ev;
  const auto& eb = rt.eblock;
  double p1 = std::clamp(rng.uniform(eb.p0_hat - eb.delta_adv, eb.p0_hat + eb.delta_adv), 0.0, 1.0);
  double p2 = rng.uniform(0.0, eb.beta);
  double p3 = rng.uniform(0.0, eb.alpha);

  auto draw_pseudo = [&]() {
    PseudoMeasurements ps;
    ps.p_d_pre.resize(rt.grid.n);
    for (int i = 0; i < rt.grid.n; ++i)
      ps.p_d_pre[i] = rng.uniform(0.9 * rt.grid.demand[i], 1.1 * rt.grid.demand[i]);
    return ps;
  };
  auto threat_of = [&](const InduceResult& ind) {
    return !ind.con.empty() || (ind.opf_infeasible && rt.scenario.infeasible_is_threat);
  };

  ev.attack = rng.bernoulli(p1);
  if (ev.attack) {
    RandomMca mca = random_mca(rt.grid, rng, rt.abar);
    ev.detected = mca.target.mask;
    ev.zero_day = rng.bernoulli(p2);
    ev.alarm = rng.bernoulli(ev.zero_day ? 0.0 : eb.p_d);  // min{1-ZD, p_D}

    DispatchResult deceived = rt.engine.solver().solve(mca.corrupted);
    if (deceived.status == DispatchStatus::optimal) {
      ev.threat_truth =
          goal_achieved(rt.truth_goal, rt.engine.shift(), rt.grid, deceived.p_g, rt.grid.demand)
              .any;
    } else {
      ev.opf_infeasible = true;
      ev.threat_truth = rt.scenario.infeasible_is_threat;
    }

    if (ev.alarm) {
      ScanVerdict verdict = rt.kb->scan(mca.target.mask);
      ev.rule = verdict.matched_rule;
      if (verdict.is_existing) {
        ev.label_ckb = verdict.matched_rule == ScanRule::rule1_is_ci ||
                       verdict.matched_rule == ScanRule::rule2_superset;
      } else {
        ev.used_cig = true;
        PseudoMeasurements ps = draw_pseudo();
        ev.label_ckb = threat_of(rt.engine.induce(mca.target.mask, mca.corrupted, ps, rt.taus,
                                                  &deceived));
      }
    } else {
      // No alarm (zero-day path): induction audits the raw measurements.
      ev.used_cig = true;
      ev.label_ckb =
          threat_of(rt.engine.induce(0, mca.corrupted, PseudoMeasurements{}, rt.taus, &deceived));
    }
  } else {
    ev.false_alarm_forced = rng.bernoulli(p3);
    ev.alarm = rng.bernoulli(ev.false_alarm_forced ? 1.0 : eb.p_fa);  // max{FA, p_FA}
    ev.threat_truth = false;
    if (!ev.alarm) {
      ev.used_cig = true;
      ev.label_ckb = threat_of(rt.engine.induce(0, rt.grid.demand, PseudoMeasurements{}, rt.taus,
                                                &rt.engine.baseline_dispatch()));
    } else {
      // False alarm: the sensor hallucinates an attacked set over clean
      // measurements.
      RandomMca phantom = random_mca(rt.grid, rng, rt.abar);
      ev.detected = phantom.target.mask;
      ScanVerdict verdict = rt.kb->scan(phantom.target.mask);
      ev.rule = verdict.matched_rule;
      if (verdict.is_existing) {
        ev.label_ckb = verdict.matched_rule == ScanRule::rule1_is_ci ||
                       verdict.matched_rule == ScanRule::rule2_superset;
      } else {
        ev.used_cig = true;
        PseudoMeasurements ps = draw_pseudo();
        ev.label_ckb = threat_of(rt.engine.induce(phantom.target.mask, rt.grid.demand, ps, rt.taus,
                                                  &rt.engine.baseline_dispatch()));
      }
    }
  }

  ev.label_ids1 = ev.alarm;
  ev.label_ids2 = ev.alarm && rt.ids2_intrusion_on_alarm;
  return ev;
}

inline DetectorRates tally(const std::vector<EventRecord>& events, bool threat_capable,
                           bool (*label)(const EventRecord&)) {
  DetectorRates d;
  d.threat_capable = threat_capable;
  for (const auto& ev : events) {
    bool l = label(ev);
    (ev.attack ? (l ? d.tp : d.fn) : (l ? d.fp : d.tn))++;
    if (threat_capable) (ev.threat_truth ? (l ? d.tp_t : d.fn_t) : (l ? d.fp_t : d.tn_t))++;
  }
  if (d.tp + d.fn > 0) d.fnr = static_cast<double>(d.fn) / static_cast<double>(d.tp + d.fn);
  if (d.tn + d.fp > 0) d.fpr = static_cast<double>(d.fp) / static_cast<double>(d.tn + d.fp);
  if (threat_capable) {
    if (d.tp_t + d.fn_t > 0)
      d.fnr_t = static_cast<double>(d.fn_t) / static_cast<double>(d.tp_t + d.fn_t);
    if (d.tn_t + d.fp_t > 0)
      d.fpr_t = static_cast<double>(d.fp_t) / static_cast<double>(d.tn_t + d.fp_t);
  }
  return d;
}

/// Intrusion-label rates per detector; threat-relative rates only for the
/// knowledge-base path, which is the one detector that estimates
/// consequences.
inline ExperimentRates compute_rates(const std::vector<EventRecord>& events) {
  ExperimentRates r;
  r.ids1 = tally(events, false, [](const EventRecord& e) { return e.label_ids1; });
  r.ids2 = tally(events, false, [](const EventRecord& e) { return e.label_ids2; });
  r.ckbcig = tally(events, true, [](const EventRecord& e) { return e.label_ckb; });
  return r;
}

inline std::vector<EventRecord> run_experiment(const ScenarioRuntime& rt, int experiment,
                                               int events, int jobs) {
  std::vector<EventRecord> records(static_cast<std::size_t>(events));
  parallel_for(records.size(), jobs,
               [&](std::size_t i) { records[i] = run_event(rt, experiment, static_cast<int>(i)); });
  return records;
}

/// Deduces one CI-tuple per target line and loads every reachable one.
inline KnowledgeBase build_knowledge_base(const CigEngine& engine, const ScenarioParams& scenario,
                                          int jobs) {
  KnowledgeBase kb;
  Vec abar = default_attack_bound(engine.grid(), scenario.abar_frac);
  DeduceOptions opt;
  opt.budget_per_subset = scenario.deduce_budget;
  opt.jobs = jobs;
  for (int line : scenario.target_lines) {
    AttackGoal con = engine.make_goal({{line, scenario.tau}});
    CiTuple tuple = engine.deduce(con, abar, 0, opt);
    if (tuple.reachable) kb = kb.update(tuple);
  }
  return kb;
}

struct SettingResult {
  double p0_hat = 0.0;
  std::vector<ExperimentRates> per_experiment;
};

inline SettingResult run_setting(const CigEngine& engine, std::shared_ptr<const KnowledgeBase> kb,
                                 const ExperimentConfig& cfg, double p0_hat) {
  ScenarioRuntime rt = make_runtime(engine, std::move(kb), cfg, p0_hat);
  SettingResult out;
  out.p0_hat = p0_hat;
  out.per_experiment.reserve(static_cast<std::size_t>(cfg.experiments));
  for (int k = 0; k < cfg.experiments; ++k)
    out.per_experiment.push_back(compute_rates(run_experiment(rt, k, cfg.events, cfg.jobs)));
  return out;
}

// ---------------------------------------------------------------------------
// Result emission

inline std::string csv_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : "NA";
}

inline void append_rates_csv(std::string& csv, const std::string& prefix,
                             const std::vector<ExperimentRates>& rates) {
  auto emit = [&](int k, const char* name, const DetectorRates& d) {
    csv += prefix + "," + std::to_string(k) + "," + name + "," + std::to_string(d.tp) + "," +
           std::to_string(d.fn) + "," + std::to_string(d.fp) + "," + std::to_string(d.tn) + "," +
           csv_cell(d.fnr) + "," + csv_cell(d.fpr) + ",";
    if (d.threat_capable) {
      csv += std::to_string(d.tp_t) + "," + std::to_string(d.fn_t) + "," + std::to_string(d.fp_t) +
             "," + std::to_string(d.tn_t) + "," + csv_cell(d.fnr_t) + "," + csv_cell(d.fpr_t);
    } else {
      csv += "NA,NA,NA,NA,NA,NA";
    }
    csv += "\n";
  };
  for (std::size_t k = 0; k < rates.size(); ++k) {
    emit(static_cast<int>(k), "IDS1", rates[k].ids1);
    emit(static_cast<int>(k), "IDS2", rates[k].ids2);
    emit(static_cast<int>(k), "CKBCIG", rates[k].ckbcig);
  }
}

inline const char* kRatesCsvHeader =
    "p0_hat,experiment,detector,tp,fn,fp,tn,fnr,fpr,tp_t,fn_t,fp_t,tn_t,fnr_t,fpr_t\n";

inline std::string settings_to_csv(const std::vector<SettingResult>& settings) {
  std::string csv = kRatesCsvHeader;
  for (const auto& s : settings) append_rates_csv(csv, format_double(s.p0_hat), s.per_experiment);
  return csv;
}

inline nlohmann::json settings_to_boxstats(const std::vector<SettingResult>& settings) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : settings) {
    nlohmann::json js;
    js["p0_hat"] = s.p0_hat;
    auto detector_stats = [&](auto pick) {
      nlohmann::json d;
      const char* metrics[] = {"fnr", "fpr", "fnr_t", "fpr_t"};
      for (const char* metric : metrics) {
        std::vector<std::optional<double>> cells;
        for (const auto& r : s.per_experiment) {
          const DetectorRates& dr = pick(r);
          std::optional<double> v;
          if (std::string(metric) == "fnr") v = dr.fnr;
          if (std::string(metric) == "fpr") v = dr.fpr;
          if (std::string(metric) == "fnr_t") v = dr.fnr_t;
          if (std::string(metric) == "fpr_t") v = dr.fpr_t;
          cells.push_back(v);
        }
        auto stats = box_stats(cells);
        if (!stats) {
          d[metric] = nullptr;
          continue;
        }
        d[metric] = {{"min", stats->min}, {"q1", stats->q1},     {"median", stats->median},
                     {"q3", stats->q3},   {"max", stats->max},   {"mean", stats->mean},
                     {"count", stats->count}};
      }
      return d;
    };
    js["IDS1"] = detector_stats([](const ExperimentRates& r) -> const DetectorRates& { return r.ids1; });
    js["IDS2"] = detector_stats([](const ExperimentRates& r) -> const DetectorRates& { return r.ids2; });
    js["CKBCIG"] =
        detector_stats([](const ExperimentRates& r) -> const DetectorRates& { return r.ckbcig; });
    out.push_back(js);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

/// Experiment I: false-alarm comparison of the three detectors across the
/// configured attack rates.
inline std::vector<SettingResult> experiment_I(const CigEngine& engine,
                                               std::shared_ptr<const KnowledgeBase> kb,
                                               ExperimentConfig cfg) {
  if (cfg.p0_values.empty()) cfg.p0_values = {0.25, 0.05};
  std::vector<SettingResult> out;
  for (double p0 : cfg.p0_values) out.push_back(run_setting(engine, kb, cfg, p0));
  return out;
}

/// Experiment II: threat-relative false negatives across attack rates.
inline std::vector<SettingResult> experiment_II(const CigEngine& engine,
                                                std::shared_ptr<const KnowledgeBase> kb,
                                                ExperimentConfig cfg) {
  if (cfg.p0_values.empty()) cfg.p0_values = {0.25, 0.1, 0.05};
  std::vector<SettingResult> out;
  for (double p0 : cfg.p0_values) out.push_back(run_setting(engine, kb, cfg, p0));
  return out;
}

struct SweepRow {
  double tau = 0.15;
  std::vector<int> target_lines;  // 0-based
};

struct SweepRowResult {
  SweepRow row;
  SettingResult setting;
  std::optional<double> mean_fpr_t;
  int kb_records = 0;
};

/// Experiment III: sensitivity of the threat-relative false-positive rate to
/// the size of the target-line set. Each row rebuilds the knowledge base for
/// its own thresholds; rows are emitted in sweep order.
inline std::vector<SweepRowResult> experiment_III(const CigEngine& engine, ExperimentConfig cfg,
                                                  const std::vector<SweepRow>& sweep,
                                                  double p0_hat = 0.25) {
  std::vector<SweepRowResult> out;
  for (const auto& row : sweep) {
    ExperimentConfig row_cfg = cfg;
    row_cfg.scenario.tau = row.tau;
    row_cfg.scenario.target_lines = row.target_lines;
    KnowledgeBase kb = build_knowledge_base(engine, row_cfg.scenario, cfg.jobs);
    SweepRowResult res;
    res.row = row;
    res.kb_records = static_cast<int>(kb.records().size());
    res.setting = run_setting(engine, std::make_shared<const KnowledgeBase>(std::move(kb)),
                              row_cfg, p0_hat);
    std::vector<std::optional<double>> cells;
    for (const auto& r : res.setting.per_experiment) cells.push_back(r.ckbcig.fpr_t);
    if (auto stats = box_stats(cells)) res.mean_fpr_t = stats->mean;
    out.push_back(std::move(res));
  }
  return out;
}

inline std::string sweep_table_csv(const std::vector<SweepRowResult>& rows) {
  std::string csv = "row,tau,n_lines,lines,kb_records,mean_fpr_t\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string lines;
    for (int l : rows[i].row.target_lines) {
      if (!lines.empty()) lines += " ";
      lines += std::to_string(l + 1);
    }
    csv += std::to_string(i) + "," + format_double(rows[i].row.tau) + "," +
           std::to_string(rows[i].row.target_lines.size()) + "," + lines + "," +
           std::to_string(rows[i].kb_records) + "," + csv_cell(rows[i].mean_fpr_t) + "\n";
  }
  return csv;
}

inline std::string sweep_results_csv(const std::vector<SweepRowResult>& rows) {
  std::string csv = std::string("row,") + kRatesCsvHeader;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string prefix =
        std::to_string(i) + "," + format_double(rows[i].setting.p0_hat);
    append_rates_csv(csv, prefix, rows[i].setting.per_experiment);
  }
  return csv;
}

}  // namespace mcasim
