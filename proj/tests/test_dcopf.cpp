#include <catch2/catch_amalgamated.hpp>

#include "mcasim/case_io.hpp"
#include "mcasim/dcopf.hpp"
#include "mcasim/rng.hpp"
#include "oracles.hpp"

using namespace mcasim;

namespace {

std::string data_path(const std::string& name) { return std::string(MCASIM_DATA_DIR) + "/" + name; }

struct Fixture {
  GridCase gc;
  ShiftMatrix sm;
};

Fixture make(const RawCase& raw, const PartitionSpec& part) {
  Fixture f{build_grid_case(raw, part), {}};
  f.sm = compute_shift_matrix(f.gc);
  return f;
}

Fixture single_gen() {
  RawCase raw;
  raw.base_mva = 1.0;
  raw.bus_records = {{1, 0.0}, {2, 1.0}};
  raw.branch_records = {{1, 2, 0.1, 0.0}};
  raw.gen_records = {{1, 5.0, 0.0, 1.0, 0.5}};
  PartitionSpec part;
  part.substations = {{"s1", {1, 2}}};
  return make(raw, part);
}

Fixture two_gens_one_bus() {
  RawCase raw;
  raw.base_mva = 1.0;
  raw.bus_records = {{1, 0.0}, {2, 1.0}};
  raw.branch_records = {{1, 2, 0.1, 0.0}};
  raw.gen_records = {{1, 2.0, 0.0, 1.0, 0.0}, {1, 2.0, 0.0, 2.0, 0.0}};
  PartitionSpec part;
  part.substations = {{"s1", {1, 2}}};
  return make(raw, part);
}

// Cheap generator behind a tight line: serving all load from bus 1 would
// overload line (1,3), forcing out-of-merit dispatch at bus 3.
Fixture three_bus_binding() {
  RawCase raw;
  raw.base_mva = 1.0;
  raw.bus_records = {{1, 0.0}, {2, 0.0}, {3, 2.0}};
  raw.branch_records = {{1, 2, 0.1, 0.0}, {2, 3, 0.1, 0.0}, {1, 3, 0.1, 1.0}};
  raw.gen_records = {{1, 4.0, 0.0, 1.0, 0.0}, {3, 4.0, 0.0, 3.0, 0.0}};
  PartitionSpec part;
  part.substations = {{"s1", {1, 2}}, {"s2", {3}}};
  return make(raw, part);
}

Fixture case39() {
  RawCase raw = load_case_file(data_path("case39.m"));
  auto part = load_partition_file(data_path("partition39.json"), raw);
  return make(raw, part);
}

}  // namespace

TEST_CASE("balance pins the single-generator dispatch") {
  auto f = single_gen();
  OpfSolver solver(f.gc, f.sm);
  auto r = solver.solve(f.gc.demand);
  REQUIRE(r.status == DispatchStatus::optimal);
  CHECK(r.p_g[0] == Catch::Approx(1.0));
  CHECK(r.objective == Catch::Approx(0.5 + 1.0));
}

TEST_CASE("cheaper unit is dispatched first") {
  auto f = two_gens_one_bus();
  OpfSolver solver(f.gc, f.sm);
  auto r = solver.solve(f.gc.demand);
  REQUIRE(r.status == DispatchStatus::optimal);
  CHECK(r.p_g[0] == Catch::Approx(1.0));
  CHECK(r.p_g[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("binding line limit forces out-of-merit dispatch, matching grid search") {
  auto f = three_bus_binding();
  OpfSolver solver(f.gc, f.sm);
  auto r = solver.solve(f.gc.demand);
  REQUIRE(r.status == DispatchStatus::optimal);
  auto ref = oracle::opf_by_grid_search(f.gc, f.sm, f.gc.demand, 1e-3);
  REQUIRE(ref.feasible);
  CHECK(std::abs(r.p_g[0] - ref.p_g[0]) < 1e-3);
  CHECK(std::abs(r.p_g[1] - ref.p_g[1]) < 1e-3);
  CHECK(r.objective == Catch::Approx(ref.objective).epsilon(1e-4));
  // The expensive unit must run: it is not merit-order dispatch.
  CHECK(r.p_g[1] > 0.1);
}

TEST_CASE("39-bus objective agrees with an independent first-order method") {
  auto f = case39();
  OpfSolver solver(f.gc, f.sm);
  auto r = solver.solve(f.gc.demand);
  REQUIRE(r.status == DispatchStatus::optimal);
  auto ref = oracle::opf_by_projected_gradient(f.gc, f.sm, f.gc.demand);
  REQUIRE(ref.feasible);
  CHECK(std::abs(r.objective - ref.objective) / ref.objective < 1e-4);
  CHECK(r.kkt_residual <= 1e-6);
}

TEST_CASE("constraint residuals stay inside contract tolerances") {
  auto f = case39();
  OpfSolver solver(f.gc, f.sm);
  auto r = solver.solve(f.gc.demand);
  REQUIRE(r.status == DispatchStatus::optimal);
  CHECK(std::abs(r.p_g.sum() - f.gc.demand.sum()) <= 1e-7);
  for (int g = 0; g < f.gc.n_g; ++g) {
    CHECK(r.p_g[g] >= -1e-7);
    CHECK(r.p_g[g] <= f.gc.gen_limit[g] + 1e-7);
  }
  for (int l = 0; l < f.gc.m; ++l)
    if (std::isfinite(f.gc.flow_limit[l]))
      CHECK(std::abs(r.flows[l]) <= f.gc.flow_limit[l] + 1e-7);
}

TEST_CASE("uniform demand increase never lowers the objective") {
  auto f = case39();
  OpfSolver solver(f.gc, f.sm);
  double prev = solver.solve(f.gc.demand).objective;
  for (int step = 1; step <= 5; ++step) {
    Vec d = f.gc.demand * (1.0 + 0.01 * step);
    auto r = solver.solve(d);
    REQUIRE(r.status == DispatchStatus::optimal);
    CHECK(r.objective >= prev - 1e-9);
    prev = r.objective;
  }
}

TEST_CASE("identical demands produce bit-identical dispatches") {
  auto f = case39();
  OpfSolver solver(f.gc, f.sm);
  auto r1 = solver.solve(f.gc.demand);
  auto r2 = solver.solve(f.gc.demand);
  REQUIRE(r1.status == DispatchStatus::optimal);
  for (int g = 0; g < f.gc.n_g; ++g) CHECK(r1.p_g[g] == r2.p_g[g]);
  CHECK(r1.objective == r2.objective);
}

TEST_CASE("demand beyond capacity reports infeasible, not a crash") {
  auto f = single_gen();
  OpfSolver solver(f.gc, f.sm);
  Vec d = f.gc.demand * 10.0;  // 10 > capacity 5
  auto r = solver.solve(d);
  CHECK(r.status == DispatchStatus::infeasible);
  CHECK(r.infeasibility > 0.0);
}

TEST_CASE("line limits can make the dispatch infeasible with a certificate") {
  RawCase raw;
  raw.base_mva = 1.0;
  raw.bus_records = {{1, 0.0}, {2, 2.0}};
  raw.branch_records = {{1, 2, 0.1, 1.0}};  // limit below the demand
  raw.gen_records = {{1, 5.0, 0.0, 1.0, 0.0}};
  PartitionSpec part;
  part.substations = {{"s1", {1, 2}}};
  auto f = make(raw, part);
  OpfSolver solver(f.gc, f.sm);
  auto r = solver.solve(f.gc.demand);
  REQUIRE(r.status == DispatchStatus::infeasible);
  CHECK(r.infeasibility == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("NaN demand is a contract error") {
  auto f = single_gen();
  OpfSolver solver(f.gc, f.sm);
  Vec d = f.gc.demand;
  d[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(solver.solve(d), ContractError);
}

TEST_CASE("iteration limit is reported as solver failure, distinct from infeasible") {
  auto f = case39();
  OpfOptions opt;
  opt.max_iter = 1;
  OpfSolver solver(f.gc, f.sm, opt);
  auto r = solver.solve(f.gc.demand);
  CHECK(r.status == DispatchStatus::solver_failure);
}

TEST_CASE("random feasible demands keep KKT residuals small") {
  auto f = case39();
  OpfSolver solver(f.gc, f.sm);
  SubstreamRng rng(31, "opf-kkt");
  for (int trial = 0; trial < 50; ++trial) {
    Vec d = f.gc.demand;
    for (int i = 0; i < f.gc.n; ++i) d[i] *= rng.uniform(0.9, 1.1);
    auto r = solver.solve(d);
    if (r.status != DispatchStatus::optimal) continue;
    CHECK(r.kkt_residual <= 1e-6);
  }
}
