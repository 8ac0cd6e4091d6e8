// Command-line front end: case parsing, dispatch solves, correlation-index
// synthesis, knowledge-base queries, and the Monte-Carlo experiments. All
// randomness flows from a single --seed through named substreams; outputs are
// CSV/JSON and reproduce byte-for-byte for a fixed seed regardless of --jobs.
#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mcasim/case_io.hpp"
#include "mcasim/harness.hpp"
#include "mcasim/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mcasim;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

struct LoadedCase {
  RawCase raw;
  PartitionSpec part;
  GridCase grid;
  ShiftMatrix shift;
  std::string case_text, part_text;
};

LoadedCase load(const std::string& case_path, const std::string& part_path,
                std::optional<int> slack = std::nullopt) {
  LoadedCase lc;
  lc.case_text = read_file(case_path);
  if (case_path.size() > 2 && case_path.compare(case_path.size() - 2, 2, ".m") == 0)
    lc.raw = parse_matpower(lc.case_text);
  else
    lc.raw = parse_case_json(lc.case_text);
  lc.part_text = read_file(part_path);
  lc.part = parse_partition(lc.part_text, lc.raw);
  lc.grid = build_grid_case(lc.raw, lc.part, slack);
  lc.shift = compute_shift_matrix(lc.grid);
  return lc;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
}

std::vector<int> parse_line_list(const json& arr, int m) {
  std::vector<int> lines;
  for (const auto& v : arr) {
    int one_based = v.get<int>();
    if (one_based < 1 || one_based > m)
      throw ValidationError("line index " + std::to_string(one_based) + " out of range");
    lines.push_back(one_based - 1);
  }
  return lines;
}

SubsetMask parse_substation_list(const GridCase& gc, const std::string& csv) {
  SubsetMask mask = 0;
  std::stringstream ss(csv);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    mask |= SubsetMask{1} << gc.substation_index(name);
  }
  return mask;
}

json subset_to_names(const GridCase& gc, SubsetMask mask) {
  json arr = json::array();
  for (int k : subset_members(mask)) arr.push_back(gc.substations[k].name);
  return arr;
}

int cmd_parse(const std::string& case_path, const std::string& part_path, bool /*validate*/) {
  std::string text = read_file(case_path);
  RawCase raw = (case_path.size() > 2 && case_path.compare(case_path.size() - 2, 2, ".m") == 0)
                    ? parse_matpower(text)
                    : parse_case_json(text);
  std::printf("%zu buses, %zu branches, %zu generators", raw.bus_records.size(),
              raw.branch_records.size(), raw.gen_records.size());
  if (!part_path.empty()) {
    PartitionSpec part = parse_partition(read_file(part_path), raw);
    GridCase gc = build_grid_case(raw, part);
    std::printf(", %d substations", gc.n_s);
  }
  std::printf("\n");
  return 0;
}

int cmd_opf(const std::string& case_path, const std::string& part_path,
            const std::string& demand_file, const std::string& dump_ptdf,
            std::optional<int> slack) {
  LoadedCase lc = load(case_path, part_path, slack);
  if (!dump_ptdf.empty()) {
    std::string csv;
    for (int l = 0; l < lc.grid.m; ++l) {
      for (int i = 0; i < lc.grid.n; ++i)
        csv += (i ? "," : "") + format_double(lc.shift.F(l, i));
      csv += "\n";
    }
    write_file(dump_ptdf, csv);
  }
  Vec demand = lc.grid.demand;
  if (!demand_file.empty()) {
    json j = json::parse(read_file(demand_file));
    if (!j.is_array() || static_cast<int>(j.size()) != lc.grid.n)
      throw ValidationError("demand file must be a JSON array of " + std::to_string(lc.grid.n) +
                            " MW values");
    for (int i = 0; i < lc.grid.n; ++i) demand[i] = j[i].get<double>() / lc.grid.base_mva;
  }
  OpfSolver solver(lc.grid, lc.shift);
  DispatchResult r = solver.solve(demand);
  std::printf("status,%s\n", to_string(r.status));
  if (r.status != DispatchStatus::optimal) {
    if (r.status == DispatchStatus::infeasible) {
      std::printf("infeasibility,%s\n", format_double(r.infeasibility).c_str());
      return 1;
    }
    return 2;
  }
  std::printf("objective,%s\n", format_double(r.objective).c_str());
  std::printf("section,index,bus,value_mw\n");
  for (int g = 0; g < lc.grid.n_g; ++g)
    std::printf("gen,%d,%d,%s\n", g, lc.grid.bus_ids[lc.grid.gen_bus[g]],
                format_double(r.p_g[g] * lc.grid.base_mva).c_str());
  for (int l = 0; l < lc.grid.m; ++l)
    std::printf("flow,%d,%d-%d,%s\n", l + 1, lc.grid.bus_ids[lc.grid.line_from[l]],
                lc.grid.bus_ids[lc.grid.line_to[l]],
                format_double(r.flows[l] * lc.grid.base_mva).c_str());
  return 0;
}

int cmd_synth(const std::string& case_path, const std::string& part_path, int line_one_based,
              double tau, double abar_frac, int budget, const std::string& forced_safe, int jobs) {
  LoadedCase lc = load(case_path, part_path);
  if (line_one_based < 1 || line_one_based > lc.grid.m)
    throw ValidationError("line index out of range");
  CigEngine engine(lc.grid, lc.shift);
  AttackGoal con = engine.make_goal({{line_one_based - 1, tau}});
  Vec abar = default_attack_bound(lc.grid, abar_frac);
  DeduceOptions opt;
  opt.budget_per_subset = budget;
  opt.jobs = jobs;
  SubsetMask safe = forced_safe.empty() ? 0 : parse_substation_list(lc.grid, forced_safe);
  CiTuple tuple = engine.deduce(con, abar, safe, opt);

  json out;
  out["line"] = line_one_based;
  out["tau"] = tau;
  out["abar_frac"] = abar_frac;
  out["reachable"] = tuple.reachable;
  out["kappa_star"] = tuple.kappa_star;
  json cis = json::array();
  for (SubsetMask m : tuple.cis) cis.push_back(subset_to_names(lc.grid, m));
  out["cis"] = cis;
  json wit = json::array();
  for (const Vec& w : tuple.witnesses) {
    json one = json::array();
    for (int i = 0; i < w.size(); ++i)
      if (w[i] != 0.0)
        one.push_back({{"bus", lc.grid.bus_ids[i]}, {"delta_mw", w[i] * lc.grid.base_mva}});
    wit.push_back(one);
  }
  out["witnesses"] = wit;
  out["opf_solves"] = tuple.opf_solves;
  out["opf_failures"] = tuple.opf_failures;
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_ckb(const std::string& action, const std::string& kb_path, const std::string& detected_csv,
            const std::string& case_path, const std::string& part_path, bool verify) {
  json kb_json = json::parse(read_file(kb_path));
  KnowledgeBase kb = KnowledgeBase::from_json(kb_json);

  std::vector<std::string> names;
  for (const auto& s : kb_json.at("substations")) names.push_back(s.get<std::string>());
  auto name_to_bit = [&](const std::string& name) -> SubsetMask {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return SubsetMask{1} << k;
    throw ValidationError("unknown substation " + name);
  };
  SubsetMask detected = 0;
  std::stringstream ss(detected_csv);
  std::string name;
  while (std::getline(ss, name, ','))
    if (!name.empty()) detected |= name_to_bit(name);

  auto mask_names = [&](SubsetMask m) {
    json arr = json::array();
    for (int k : subset_members(m)) arr.push_back(names[k]);
    return arr;
  };

  ScanVerdict verdict = kb.scan(detected);
  if (action == "scan") {
    json out;
    out["detected"] = mask_names(detected);
    out["is_existing"] = verdict.is_existing;
    out["matched_rule"] = to_string(verdict.matched_rule);
    out["partial"] = verdict.partial;
    json matched = json::array();
    for (const auto& [rec, ci] : verdict.matched) {
      json one;
      one["record"] = rec;
      one["ci"] = mask_names(kb.records()[rec].tuple.cis[ci]);
      json con = json::array();
      for (const auto& [l, t] : kb.records()[rec].tuple.con.targets)
        con.push_back({{"line", l + 1}, {"tau", t}});
      one["con"] = con;
      matched.push_back(one);
    }
    out["matched"] = matched;
    if (verdict.is_existing) {
      AttackGoal targets = identify_targets(kb, verdict);
      json tj = json::array();
      for (const auto& [l, t] : targets.targets) tj.push_back({{"line", l + 1}, {"tau", t}});
      out["targets"] = tj;
    }
    std::printf("%s\n", out.dump(2).c_str());
    return 0;
  }

  // defend
  if (!verdict.is_existing) {
    std::printf("{\"error\":\"detected set matches no stored correlation index\"}\n");
    return 1;
  }
  std::vector<SubsetMask> cis;
  std::vector<std::pair<SubsetMask, const CiTuple*>> matched_tuples;
  for (const auto& [rec, ci] : verdict.matched) {
    cis.push_back(kb.records()[rec].tuple.cis[ci]);
    matched_tuples.emplace_back(kb.records()[rec].tuple.cis[ci], &kb.records()[rec].tuple);
  }
  DefensePlan plan = derive_defense(cis);
  json out;
  out["case_kind"] = to_string(plan.case_kind);
  out["defend"] = mask_names(plan.defend);
  json per_ci = json::array();
  for (const auto& [ci, sub] : plan.per_ci)
    per_ci.push_back({{"ci", mask_names(ci)}, {"defend", names[sub]}});
  out["per_ci"] = per_ci;
  if (verify) {
    if (case_path.empty() || part_path.empty())
      throw ValidationError("--verify needs --case and --partition");
    LoadedCase lc = load(case_path, part_path);
    CigEngine engine(lc.grid, lc.shift);
    Vec abar = default_attack_bound(lc.grid, 0.1);
    out["verified"] = verify_defense(engine, plan, matched_tuples, abar);
  }
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

ExperimentConfig config_from_json(const json& j, const GridCase& gc) {
  ExperimentConfig cfg;
  cfg.experiments = j.value("experiments", 100);
  cfg.events = j.value("events", 1000);
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.jobs = j.value("jobs", 0);
  if (cfg.jobs <= 0) cfg.jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (j.contains("eblock")) {
    const auto& e = j.at("eblock");
    cfg.eblock.p_d = e.value("p_d", 0.9);
    cfg.eblock.p_fa = e.value("p_fa", 0.1);
    cfg.eblock.alpha = e.value("alpha", 0.1);
    cfg.eblock.beta = e.value("beta", 0.2);
    cfg.delta_frac = e.value("delta_frac", 0.1);
  }
  cfg.ids2_threshold = j.value("ids2_threshold", 0.5);
  if (j.contains("p0_values"))
    for (const auto& v : j.at("p0_values")) cfg.p0_values.push_back(v.get<double>());
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    cfg.scenario.tau = s.value("tau", 0.15);
    cfg.scenario.abar_frac = s.value("abar_frac", 0.1);
    cfg.scenario.infeasible_is_threat = s.value("infeasible_is_threat", true);
    cfg.scenario.deduce_budget = s.value("deduce_budget", 200);
    if (s.contains("lines")) cfg.scenario.target_lines = parse_line_list(s.at("lines"), gc.m);
  }
  return cfg;
}

int cmd_run(const std::string& which, const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override, std::optional<int> jobs_override,
            const std::string& cli_line) {
  Timer total;
  std::string config_text = read_file(config_path);
  json config = json::parse(config_text);

  std::string case_path = config.at("case").get<std::string>();
  std::string part_path = config.at("partition").get<std::string>();
  std::optional<int> slack;
  if (config.contains("slack_bus") && !config.at("slack_bus").is_null())
    slack = config.at("slack_bus").get<int>();

  Timer setup;
  LoadedCase lc = load(case_path, part_path, slack);
  ExperimentConfig cfg = config_from_json(config, lc.grid);
  if (seed_override) cfg.seed = *seed_override;
  if (jobs_override) cfg.jobs = *jobs_override;
  CigEngine engine(lc.grid, lc.shift);
  double setup_s = setup.seconds();

  RunManifest manifest;
  manifest.command_line = cli_line;
  manifest.config_hash = content_hash(config_text);
  manifest.case_hash = content_hash(lc.case_text);
  manifest.partition_hash = content_hash(lc.part_text);
  manifest.seed = cfg.seed;
  manifest.jobs = cfg.jobs;

  fs::create_directories(out_dir);

  Timer phase;
  if (which == "experiment3") {
    std::vector<SweepRow> sweep;
    for (const auto& row : config.at("sweep")) {
      SweepRow r;
      r.tau = row.at("tau").get<double>();
      r.target_lines = parse_line_list(row.at("lines"), lc.grid.m);
      sweep.push_back(r);
    }
    double p0 = config.value("p0_experiment3", 0.25);
    auto rows = experiment_III(engine, cfg, sweep, p0);
    write_file(fs::path(out_dir) / "table.csv", sweep_table_csv(rows));
    write_file(fs::path(out_dir) / "results.csv", sweep_results_csv(rows));
  } else {
    Timer kb_timer;
    KnowledgeBase kb;
    if (config.contains("kb_file") && !config.at("kb_file").is_null()) {
      kb = KnowledgeBase::from_json(json::parse(read_file(config.at("kb_file").get<std::string>())));
    } else {
      kb = build_knowledge_base(engine, cfg.scenario, cfg.jobs);
    }
    manifest.phase_seconds["knowledge_base"] = kb_timer.seconds();
    write_file(fs::path(out_dir) / "kb.json", kb.to_json(lc.grid).dump(2) + "\n");
    auto kb_ptr = std::make_shared<const KnowledgeBase>(std::move(kb));

    std::vector<SettingResult> settings = which == "experiment1"
                                              ? experiment_I(engine, kb_ptr, cfg)
                                              : experiment_II(engine, kb_ptr, cfg);
    write_file(fs::path(out_dir) / "results.csv", settings_to_csv(settings));
    write_file(fs::path(out_dir) / "boxstats.json", settings_to_boxstats(settings).dump(2) + "\n");
  }
  manifest.phase_seconds["setup"] = setup_s;
  manifest.phase_seconds["events"] = phase.seconds();
  manifest.phase_seconds["total"] = total.seconds();
  write_file(fs::path(out_dir) / "manifest.json", manifest.to_json().dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-grid coordinated-attack synthesis and IDS evaluation toolkit"};
  app.require_subcommand(1);

  std::string case_path, part_path, demand_file, dump_ptdf, kb_path, detected, forced_safe;
  std::string config_path, out_dir = "out";
  int line = 0;
  double tau = 0.15, abar_frac = 0.1;
  int budget = 200;
  int jobs = 0;
  bool validate = false, verify = false;
  std::optional<int> slack;
  std::optional<std::uint64_t> seed;

  auto* parse_cmd = app.add_subcommand("parse", "Parse and validate a case file");
  parse_cmd->add_option("case", case_path, "case file (.m or .json)")->required();
  parse_cmd->add_option("--partition", part_path, "partition JSON");
  parse_cmd->add_flag("--validate", validate, "run full validation");

  auto* opf_cmd = app.add_subcommand("opf", "Solve the DC optimal power flow");
  opf_cmd->add_option("case", case_path)->required();
  opf_cmd->add_option("--partition", part_path, "partition JSON")->required();
  opf_cmd->add_option("--demand-file", demand_file, "JSON array of MW demands");
  opf_cmd->add_option("--dump-ptdf", dump_ptdf, "write the shift matrix as CSV");
  opf_cmd->add_option("--slack", slack, "slack bus id");

  auto* synth_cmd = app.add_subcommand("synth", "Deduce correlation indices for a target line");
  synth_cmd->add_option("--case", case_path)->required();
  synth_cmd->add_option("--partition", part_path)->required();
  synth_cmd->add_option("--line", line, "target line (1-based)")->required();
  synth_cmd->add_option("--tau", tau, "required flow increase fraction");
  synth_cmd->add_option("--abar-frac", abar_frac, "attack bound as a demand fraction");
  synth_cmd->add_option("--budget", budget, "OPF solves per candidate subset");
  synth_cmd->add_option("--forced-safe", forced_safe, "comma-separated safe substations");
  synth_cmd->add_option("--jobs", jobs, "worker threads");

  auto* ckb_cmd = app.add_subcommand("ckb", "Knowledge-base operations");
  auto* scan_cmd = ckb_cmd->add_subcommand("scan", "Scan a detected substation set");
  scan_cmd->add_option("--kb", kb_path)->required();
  scan_cmd->add_option("--detected", detected, "comma-separated substations")->required();
  auto* defend_cmd = ckb_cmd->add_subcommand("defend", "Derive a defense plan");
  defend_cmd->add_option("--kb", kb_path)->required();
  defend_cmd->add_option("--detected", detected)->required();
  defend_cmd->add_flag("--verify", verify, "replay-verify the plan (needs case/partition)");
  defend_cmd->add_option("--case", case_path);
  defend_cmd->add_option("--partition", part_path);
  ckb_cmd->require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run a Monte-Carlo experiment");
  std::string which;
  run_cmd->add_option("which", which, "experiment1|experiment2|experiment3")
      ->required()
      ->check(CLI::IsMember({"experiment1", "experiment2", "experiment3"}));
  run_cmd->add_option("--config", config_path)->required();
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_option("--seed", seed, "root seed override");
  run_cmd->add_option("--jobs", jobs, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 64;
  }

  std::string cli_line;
  for (int i = 0; i < argc; ++i) cli_line += std::string(i ? " " : "") + argv[i];

  try {
    if (parse_cmd->parsed()) return cmd_parse(case_path, part_path, validate);
    if (opf_cmd->parsed()) return cmd_opf(case_path, part_path, demand_file, dump_ptdf, slack);
    if (synth_cmd->parsed())
      return cmd_synth(case_path, part_path, line, tau, abar_frac, budget, forced_safe,
                       jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency()));
    if (ckb_cmd->parsed()) {
      const std::string action = scan_cmd->parsed() ? "scan" : "defend";
      return cmd_ckb(action, kb_path, detected, case_path, part_path, verify);
    }
    if (run_cmd->parsed()) {
      std::optional<int> jobs_opt;
      if (jobs > 0) jobs_opt = jobs;
      return cmd_run(which, config_path, out_dir, seed, jobs_opt, cli_line);
    }
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
