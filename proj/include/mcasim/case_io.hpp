// Case input: a restricted MATPOWER .m grammar (numeric matrices, '%'
// comments, ';' row separators) and a canonical JSON schema. JSON is the
// normative interchange form; the partition file is always JSON.
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mcasim/errors.hpp"
#include "mcasim/grid.hpp"

namespace mcasim {

struct BusRecord {
  int id = 0;
  double demand_mw = 0.0;
};

struct BranchRecord {
  int from = 0, to = 0;
  double x = 0.0;          // p.u. reactance
  double limit_mw = 0.0;   // 0 = unlimited
};

struct GenRecord {
  int bus = 0;
  double limit_mw = 0.0;
  double c2 = 0.0, c1 = 0.0, c0 = 0.0;
};

struct RawCase {
  double base_mva = 100.0;
  std::vector<BusRecord> bus_records;
  std::vector<BranchRecord> branch_records;
  std::vector<GenRecord> gen_records;
};

struct PartitionSpec {
  std::vector<std::pair<std::string, std::vector<int>>> substations;  // name -> bus ids
};

namespace detail {

struct MatpowerMatrix {
  std::vector<std::vector<double>> rows;
  int first_line = 0;
};

// Strips '%' comments and splits the body into statements. Only numeric
// matrices assigned to mpc.<name> are interpreted; everything else (strings,
// scalars we do not need) is skipped.
class MatpowerScanner {
 public:
  explicit MatpowerScanner(const std::string& text) : text_(text) {}

  std::optional<double> scalar(const std::string& name) const {
    auto it = scalars_.find(name);
    if (it == scalars_.end()) return std::nullopt;
    return it->second;
  }

  const MatpowerMatrix* matrix(const std::string& name) const {
    auto it = matrices_.find(name);
    if (it == matrices_.end()) return nullptr;
    return &it->second;
  }

  void scan() {
    int line = 1;
    std::size_t i = 0;
    const std::size_t n = text_.size();
    while (i < n) {
      char c = text_[i];
      if (c == '\n') {
        ++line;
        ++i;
        continue;
      }
      if (c == '%') {
        while (i < n && text_[i] != '\n') ++i;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      // Look for "mpc.<identifier> ="
      if (text_.compare(i, 4, "mpc.") == 0) {
        i += 4;
        std::string name;
        while (i < n && (std::isalnum(static_cast<unsigned char>(text_[i])) || text_[i] == '_'))
          name += text_[i++];
        skip_ws(i, line);
        if (i < n && text_[i] == '=') {
          ++i;
          skip_ws(i, line);
          if (i < n && text_[i] == '[') {
            ++i;
            matrices_[name] = parse_matrix(i, line, name);
          } else if (i < n && (text_[i] == '\'' || text_[i] == '"')) {
            char quote = text_[i++];
            while (i < n && text_[i] != quote) ++i;
            if (i < n) ++i;
          } else {
            std::size_t start = i;
            while (i < n && text_[i] != ';' && text_[i] != '\n') ++i;
            std::string tok = text_.substr(start, i - start);
            try {
              scalars_[name] = std::stod(tok);
            } catch (const std::exception&) {
              throw ParseError("cannot parse scalar for mpc." + name, line);
            }
          }
        }
        continue;
      }
      // Skip other tokens (function header, return, end, ...).
      while (i < n && !std::isspace(static_cast<unsigned char>(text_[i])) && text_[i] != '%') ++i;
    }
  }

 private:
  void skip_ws(std::size_t& i, int& line) const {
    while (i < text_.size()) {
      if (text_[i] == '\n') {
        ++line;
        ++i;
      } else if (std::isspace(static_cast<unsigned char>(text_[i]))) {
        ++i;
      } else if (text_[i] == '%') {
        while (i < text_.size() && text_[i] != '\n') ++i;
      } else if (text_[i] == '.' && i + 2 < text_.size() && text_[i + 1] == '.' &&
                 text_[i + 2] == '.') {
        i += 3;  // MATLAB line continuation
      } else {
        break;
      }
    }
  }

  MatpowerMatrix parse_matrix(std::size_t& i, int& line, const std::string& name) {
    MatpowerMatrix mat;
    mat.first_line = line;
    std::vector<double> row;
    std::string tok;
    auto flush_tok = [&]() {
      if (tok.empty()) return;
      std::size_t pos = 0;
      double v;
      try {
        v = std::stod(tok, &pos);
      } catch (const std::exception&) {
        throw ParseError("malformed number '" + tok + "' in mpc." + name, line);
      }
      if (pos != tok.size())
        throw ParseError("malformed number '" + tok + "' in mpc." + name, line);
      row.push_back(v);
      tok.clear();
    };
    auto flush_row = [&]() {
      flush_tok();
      if (row.empty()) return;
      if (!mat.rows.empty() && mat.rows.front().size() != row.size())
        throw ParseError("ragged row in mpc." + name + " (expected " +
                             std::to_string(mat.rows.front().size()) + " columns, got " +
                             std::to_string(row.size()) + ")",
                         line);
      mat.rows.push_back(row);
      row.clear();
    };
    while (i < text_.size()) {
      char c = text_[i];
      if (c == ']') {
        ++i;
        flush_row();
        return mat;
      }
      if (c == '%') {
        while (i < text_.size() && text_[i] != '\n') ++i;
        continue;
      }
      if (c == ';' || c == '\n') {
        if (c == '\n') {
          ++line;
          // newline also terminates a row when tokens are pending
          flush_row();
        } else {
          flush_row();
        }
        ++i;
        continue;
      }
      if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
        flush_tok();
        ++i;
        continue;
      }
      if (c == '.' && i + 2 < text_.size() && text_[i + 1] == '.' && text_[i + 2] == '.') {
        flush_tok();
        i += 3;
        while (i < text_.size() && text_[i] != '\n') ++i;  // rest is comment
        continue;
      }
      tok += c;
      ++i;
    }
    throw ParseError("unterminated matrix mpc." + name, mat.first_line);
  }

  const std::string& text_;
  std::map<std::string, double> scalars_;
  std::map<std::string, MatpowerMatrix> matrices_;
};

inline int as_bus_id(double v, const std::string& what, int line) {
  int id = static_cast<int>(v);
  if (static_cast<double>(id) != v) throw ParseError(what + " is not an integer", line);
  return id;
}

}  // namespace detail

/// Validates RawCase structural invariants: unique bus ids, known endpoints,
/// positive reactances, non-negative limits.
inline void validate_raw_case(const RawCase& raw) {
  std::set<int> ids;
  for (const auto& b : raw.bus_records) {
    if (!ids.insert(b.id).second)
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
    if (b.demand_mw < 0.0)
      throw ValidationError("negative demand at bus " + std::to_string(b.id));
  }
  for (std::size_t l = 0; l < raw.branch_records.size(); ++l) {
    const auto& br = raw.branch_records[l];
    if (!ids.count(br.from) || !ids.count(br.to))
      throw ValidationError("branch " + std::to_string(l + 1) + " references unknown bus");
    if (!(br.x > 0.0))
      throw ValidationError("non-positive reactance on branch " + std::to_string(l + 1));
    if (br.limit_mw < 0.0)
      throw ValidationError("negative flow limit on branch " + std::to_string(l + 1));
  }
  for (std::size_t g = 0; g < raw.gen_records.size(); ++g) {
    const auto& gr = raw.gen_records[g];
    if (!ids.count(gr.bus))
      throw ValidationError("generator " + std::to_string(g + 1) + " references unknown bus");
    if (gr.limit_mw < 0.0)
      throw ValidationError("negative limit on generator " + std::to_string(g + 1));
  }
  if (!(raw.base_mva > 0.0)) throw ValidationError("base MVA must be positive");
}

/// Parses the restricted MATPOWER case grammar. Required matrices: bus,
/// branch, gen, gencost. Columns outside the RawCase schema are ignored.
inline RawCase parse_matpower(const std::string& text) {
  detail::MatpowerScanner scanner(text);
  scanner.scan();

  RawCase raw;
  if (auto base = scanner.scalar("baseMVA")) raw.base_mva = *base;

  const auto* bus = scanner.matrix("bus");
  if (!bus) throw ParseError("missing required matrix mpc.bus");
  for (const auto& r : bus->rows) {
    if (r.size() < 3) throw ParseError("bus row needs at least 3 columns", bus->first_line);
    BusRecord b;
    b.id = detail::as_bus_id(r[0], "bus id", bus->first_line);
    b.demand_mw = r[2];
    raw.bus_records.push_back(b);
  }

  const auto* branch = scanner.matrix("branch");
  if (!branch) throw ParseError("missing required matrix mpc.branch");
  for (const auto& r : branch->rows) {
    if (r.size() < 6) throw ParseError("branch row needs at least 6 columns", branch->first_line);
    BranchRecord br;
    br.from = detail::as_bus_id(r[0], "branch from-bus", branch->first_line);
    br.to = detail::as_bus_id(r[1], "branch to-bus", branch->first_line);
    br.x = r[3];
    br.limit_mw = r[5];
    raw.branch_records.push_back(br);
  }

  const auto* gen = scanner.matrix("gen");
  if (!gen) throw ParseError("missing required matrix mpc.gen");
  for (const auto& r : gen->rows) {
    if (r.size() < 9) throw ParseError("gen row needs at least 9 columns", gen->first_line);
    GenRecord gr;
    gr.bus = detail::as_bus_id(r[0], "generator bus", gen->first_line);
    gr.limit_mw = r[8];
    raw.gen_records.push_back(gr);
  }

  const auto* gencost = scanner.matrix("gencost");
  if (!gencost) throw ParseError("missing required matrix mpc.gencost");
  if (gencost->rows.size() != raw.gen_records.size())
    throw ParseError("gencost rows (" + std::to_string(gencost->rows.size()) +
                         ") do not match gen rows (" + std::to_string(raw.gen_records.size()) + ")",
                     gencost->first_line);
  for (std::size_t g = 0; g < gencost->rows.size(); ++g) {
    const auto& r = gencost->rows[g];
    if (r.size() < 4) throw ParseError("gencost row needs at least 4 columns", gencost->first_line);
    int model = static_cast<int>(r[0]);
    if (model != 2)
      throw ParseError("unsupported gencost model " + std::to_string(model) +
                           " (only polynomial model 2)",
                       gencost->first_line);
    int ncoef = static_cast<int>(r[3]);
    if (static_cast<int>(r.size()) < 4 + ncoef)
      throw ParseError("gencost row truncated", gencost->first_line);
    auto& gr = raw.gen_records[g];
    if (ncoef == 3) {
      gr.c2 = r[4];
      gr.c1 = r[5];
      gr.c0 = r[6];
    } else if (ncoef == 2) {
      gr.c1 = r[4];
      gr.c0 = r[5];
    } else if (ncoef == 1) {
      gr.c0 = r[4];
    } else {
      throw ParseError("gencost polynomial degree > 2 unsupported", gencost->first_line);
    }
  }

  validate_raw_case(raw);
  return raw;
}

/// Canonical JSON case form.
inline RawCase parse_case_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  RawCase raw;
  try {
    raw.base_mva = j.at("base_mva").get<double>();
    for (const auto& b : j.at("buses"))
      raw.bus_records.push_back({b.at("id").get<int>(), b.at("demand_mw").get<double>()});
    for (const auto& br : j.at("branches"))
      raw.branch_records.push_back({br.at("from").get<int>(), br.at("to").get<int>(),
                                    br.at("x").get<double>(), br.at("limit_mw").get<double>()});
    for (const auto& g : j.at("generators"))
      raw.gen_records.push_back({g.at("bus").get<int>(), g.at("limit_mw").get<double>(),
                                 g.value("c2", 0.0), g.value("c1", 0.0), g.value("c0", 0.0)});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("case JSON schema violation: ") + e.what());
  }
  validate_raw_case(raw);
  return raw;
}

inline nlohmann::json case_to_json(const GridCase& gc) {
  nlohmann::json j;
  j["base_mva"] = gc.base_mva;
  auto buses = nlohmann::json::array();
  for (int i = 0; i < gc.n; ++i)
    buses.push_back({{"id", gc.bus_ids[i]}, {"demand_mw", gc.demand_mw[i]}});
  j["buses"] = buses;
  auto branches = nlohmann::json::array();
  for (int l = 0; l < gc.m; ++l)
    branches.push_back({{"from", gc.bus_ids[gc.line_from[l]]},
                        {"to", gc.bus_ids[gc.line_to[l]]},
                        {"x", gc.reactance[l]},
                        {"limit_mw", gc.flow_limit_mw[l]}});
  j["branches"] = branches;
  auto gens = nlohmann::json::array();
  for (int g = 0; g < gc.n_g; ++g)
    gens.push_back({{"bus", gc.bus_ids[gc.gen_bus[g]]},
                    {"limit_mw", gc.gen_limit_mw[g]},
                    {"c2", gc.cost_c2[g]},
                    {"c1", gc.cost_c1[g]},
                    {"c0", gc.cost_c0[g]}});
  j["generators"] = gens;
  return j;
}

/// Partition file: JSON object, substation name -> array of bus ids. Both
/// coverage (every bus in some substation) and the no-generator-in-overlap
/// property are enforced against the case.
inline PartitionSpec parse_partition(const std::string& text, const RawCase& raw) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid partition JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("partition must be a JSON object");

  PartitionSpec spec;
  std::set<int> known;
  for (const auto& b : raw.bus_records) known.insert(b.id);

  for (const auto& [name, arr] : j.items()) {
    if (!arr.is_array()) throw ParseError("substation " + name + " must map to a bus array");
    std::vector<int> buses;
    for (const auto& v : arr) {
      int id = v.get<int>();
      if (!known.count(id))
        throw ValidationError("substation " + name + " references unknown bus " +
                              std::to_string(id));
      buses.push_back(id);
    }
    std::sort(buses.begin(), buses.end());
    buses.erase(std::unique(buses.begin(), buses.end()), buses.end());
    spec.substations.emplace_back(name, std::move(buses));
  }

  // Coverage: the union of service areas is the whole grid.
  std::map<int, std::vector<std::string>> covering;
  for (const auto& [name, buses] : spec.substations)
    for (int id : buses) covering[id].push_back(name);
  for (int id : known)
    if (!covering.count(id))
      throw ValidationError("bus " + std::to_string(id) + " uncovered by partition");

  // Overlapped areas contain no generator buses.
  std::set<int> gen_buses;
  for (const auto& g : raw.gen_records) gen_buses.insert(g.bus);
  for (const auto& [id, names] : covering) {
    if (names.size() >= 2 && gen_buses.count(id)) {
      std::string list;
      for (const auto& nm : names) list += (list.empty() ? "" : ", ") + nm;
      throw ValidationError("generator bus " + std::to_string(id) +
                            " lies in overlapping substations {" + list + "}");
    }
  }
  return spec;
}

/// Produces the validated per-unit GridCase with dense indexing. The slack
/// defaults to the first generator's bus unless overridden.
inline GridCase build_grid_case(const RawCase& raw, const PartitionSpec& part,
                                std::optional<int> slack_bus_id = std::nullopt) {
  validate_raw_case(raw);
  if (part.substations.empty()) throw ValidationError("empty partition");
  if (raw.gen_records.empty()) throw ValidationError("case has no generators");

  GridCase gc;
  gc.base_mva = raw.base_mva;
  gc.n = static_cast<int>(raw.bus_records.size());
  gc.m = static_cast<int>(raw.branch_records.size());
  gc.n_g = static_cast<int>(raw.gen_records.size());
  gc.n_s = static_cast<int>(part.substations.size());
  if (gc.n_s > 64) throw ValidationError("at most 64 substations supported");

  gc.bus_ids.resize(gc.n);
  gc.demand_mw.resize(gc.n);
  gc.demand.resize(gc.n);
  for (int i = 0; i < gc.n; ++i) {
    gc.bus_ids[i] = raw.bus_records[i].id;
    gc.id_to_index[raw.bus_records[i].id] = i;
    gc.demand_mw[i] = raw.bus_records[i].demand_mw;
    gc.demand[i] = raw.bus_records[i].demand_mw / gc.base_mva;
  }

  gc.line_from.resize(gc.m);
  gc.line_to.resize(gc.m);
  gc.reactance.resize(gc.m);
  gc.flow_limit_mw.resize(gc.m);
  gc.flow_limit.resize(gc.m);
  for (int l = 0; l < gc.m; ++l) {
    const auto& br = raw.branch_records[l];
    gc.line_from[l] = gc.id_to_index.at(br.from);
    gc.line_to[l] = gc.id_to_index.at(br.to);
    gc.reactance[l] = br.x;
    gc.flow_limit_mw[l] = br.limit_mw;
    gc.flow_limit[l] = br.limit_mw > 0.0 ? br.limit_mw / gc.base_mva : kInf;
  }

  gc.gen_bus.resize(gc.n_g);
  gc.gen_limit_mw.resize(gc.n_g);
  gc.gen_limit.resize(gc.n_g);
  gc.cost_c2.resize(gc.n_g);
  gc.cost_c1.resize(gc.n_g);
  gc.cost_c0.resize(gc.n_g);
  for (int g = 0; g < gc.n_g; ++g) {
    const auto& gr = raw.gen_records[g];
    gc.gen_bus[g] = gc.id_to_index.at(gr.bus);
    gc.gen_limit_mw[g] = gr.limit_mw;
    gc.gen_limit[g] = gr.limit_mw / gc.base_mva;
    gc.cost_c2[g] = gr.c2;
    gc.cost_c1[g] = gr.c1;
    gc.cost_c0[g] = gr.c0;
  }

  for (const auto& [name, ids] : part.substations) {
    Substation s;
    s.name = name;
    for (int id : ids) s.buses.push_back(gc.id_to_index.at(id));
    std::sort(s.buses.begin(), s.buses.end());
    gc.substations.push_back(std::move(s));
  }
  gc.bus_cover.assign(gc.n, 0);
  for (int k = 0; k < gc.n_s; ++k)
    for (int b : gc.substations[k].buses) gc.bus_cover[b] |= (SubsetMask{1} << k);

  gc.slack_bus = slack_bus_id ? gc.bus_index(*slack_bus_id) : gc.gen_bus[0];
  if (!gc.connected()) throw TopologyError("grid graph is disconnected");
  return gc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Loads a case file by extension (.m MATPOWER, anything else canonical JSON).
inline RawCase load_case_file(const std::string& path) {
  std::string text = read_file(path);
  if (path.size() > 2 && path.compare(path.size() - 2, 2, ".m") == 0)
    return parse_matpower(text);
  return parse_case_json(text);
}

inline PartitionSpec load_partition_file(const std::string& path, const RawCase& raw) {
  return parse_partition(read_file(path), raw);
}

}  // namespace mcasim
