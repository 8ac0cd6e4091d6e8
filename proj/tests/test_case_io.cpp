#include <catch2/catch_amalgamated.hpp>

#include "mcasim/case_io.hpp"

using namespace mcasim;

namespace {

const std::string kTwoBusCase = R"(function mpc = case2
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0   0 0 0 1 1 0 345 1 1.06 0.94;
  2 1 100 0 0 0 1 1 0 345 1 1.06 0.94;
];
mpc.gen = [
  1 0 0 0 0 1 100 1 200 0;
];
mpc.branch = [
  1 2 0.0 0.1 0.0 250 250 250 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.0 1.0 0.0;
];
)";

std::string data_path(const std::string& name) { return std::string(MCASIM_DATA_DIR) + "/" + name; }

}  // namespace

TEST_CASE("matpower parser copies demand fields verbatim") {
  RawCase raw = parse_matpower(kTwoBusCase);
  REQUIRE(raw.bus_records.size() == 2);
  CHECK(raw.bus_records[1].demand_mw == 100.0);
  CHECK(raw.base_mva == 100.0);
  REQUIRE(raw.branch_records.size() == 1);
  CHECK(raw.branch_records[0].x == 0.1);
  CHECK(raw.branch_records[0].limit_mw == 250.0);
  REQUIRE(raw.gen_records.size() == 1);
  CHECK(raw.gen_records[0].c1 == 1.0);
}

TEST_CASE("bundled 39-bus case has the expected element counts") {
  RawCase raw = load_case_file(data_path("case39.m"));
  CHECK(raw.bus_records.size() == 39);
  CHECK(raw.branch_records.size() == 46);
  CHECK(raw.gen_records.size() == 10);
}

TEST_CASE("zero reactance is rejected") {
  std::string bad = kTwoBusCase;
  auto pos = bad.find("1 2 0.0 0.1");
  bad.replace(pos, std::string("1 2 0.0 0.1").size(), "1 2 0.0 0.0");
  REQUIRE_THROWS_MATCHES(parse_matpower(bad), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("non-positive reactance")));
}

TEST_CASE("missing required matrix is a structural error") {
  std::string bad = kTwoBusCase;
  auto pos = bad.find("mpc.gencost");
  bad = bad.substr(0, pos);
  REQUIRE_THROWS_AS(parse_matpower(bad), ParseError);
}

TEST_CASE("malformed matrix rows report a line number") {
  std::string bad = kTwoBusCase;
  auto pos = bad.find("2 1 100");
  bad.replace(pos, 7, "2 1 1x0");
  try {
    parse_matpower(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() >= 4);
    CHECK(std::string(e.what()).find("malformed number") != std::string::npos);
  }
}

TEST_CASE("partition validation enforces coverage and overlap rules") {
  RawCase raw = parse_matpower(kTwoBusCase);
  raw.bus_records.push_back({3, 50.0});
  raw.branch_records.push_back({2, 3, 0.1, 0.0});

  SECTION("valid two-substation spec with non-generator overlap") {
    auto spec = parse_partition(R"({"s1":[1,2],"s2":[2,3]})", raw);
    REQUIRE(spec.substations.size() == 2);
    CHECK(spec.substations[0].first == "s1");
  }
  SECTION("uncovered bus is named") {
    REQUIRE_THROWS_MATCHES(
        parse_partition(R"({"s1":[1],"s2":[3]})", raw), ValidationError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("bus 2 uncovered")));
  }
  SECTION("generator inside overlap names bus and substations") {
    try {
      parse_partition(R"({"s1":[1,2],"s2":[1,3]})", raw);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      std::string msg = e.what();
      CHECK(msg.find("generator bus 1") != std::string::npos);
      CHECK(msg.find("s1") != std::string::npos);
      CHECK(msg.find("s2") != std::string::npos);
    }
  }
}

TEST_CASE("bundled partition is valid for the 39-bus case") {
  RawCase raw = load_case_file(data_path("case39.m"));
  auto spec = load_partition_file(data_path("partition39.json"), raw);
  CHECK(spec.substations.size() == 6);
}

TEST_CASE("build_grid_case converts to per-unit and indexes densely") {
  RawCase raw = parse_matpower(kTwoBusCase);
  auto spec = parse_partition(R"({"s1":[1],"s2":[2]})", raw);
  GridCase gc = build_grid_case(raw, spec);
  CHECK(gc.demand[1] == Catch::Approx(1.0));  // 100 MW on a 100 MVA base
  CHECK(gc.n == 2);
  CHECK(gc.m == 1);
  CHECK(gc.n_g == 1);
  CHECK(gc.slack_bus == 0);

  SECTION("empty partition rejected") {
    REQUIRE_THROWS_AS(build_grid_case(raw, PartitionSpec{}), ValidationError);
  }
  SECTION("39-bus dimensions") {
    RawCase raw39 = load_case_file(data_path("case39.m"));
    auto part39 = load_partition_file(data_path("partition39.json"), raw39);
    GridCase g39 = build_grid_case(raw39, part39);
    CHECK(g39.n == 39);
    CHECK(g39.m == 46);
    CHECK(g39.n_g == 10);
    CHECK(g39.n_s == 6);
  }
}

TEST_CASE("canonical JSON round-trips the grid case exactly") {
  RawCase raw = load_case_file(data_path("case39.m"));
  auto part = load_partition_file(data_path("partition39.json"), raw);
  GridCase gc = build_grid_case(raw, part);

  std::string json_text = case_to_json(gc).dump(2);
  RawCase raw2 = parse_case_json(json_text);
  GridCase gc2 = build_grid_case(raw2, part);
  CHECK(gc == gc2);
}

TEST_CASE("per-unit demand sum matches MW sum over base") {
  RawCase raw = load_case_file(data_path("case39.m"));
  auto part = load_partition_file(data_path("partition39.json"), raw);
  GridCase gc = build_grid_case(raw, part);
  double mw_sum = 0.0;
  for (const auto& b : raw.bus_records) mw_sum += b.demand_mw;
  CHECK(std::abs(gc.demand.sum() - mw_sum / gc.base_mva) < 1e-12);
}
