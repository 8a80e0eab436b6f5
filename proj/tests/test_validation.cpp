#include "respfit/validation.hpp"

#include <doctest.h>

using namespace respfit;

TEST_CASE("solver criterion catches a crippled damping schedule") {
  // Lambda pinned astronomically high and never relaxed: steps shrink to
  // nothing and the benchmark cannot converge.
  ValidationOptions opts;
  opts.only = {6};
  LmOptions crippled;
  crippled.lambda0 = 1e9;
  crippled.lambda_down = 1.0 + 1e-12;
  opts.lm_quadratic_override = crippled;

  auto rows = run_validation(opts);
  REQUIRE(rows.size() == 1);
  CHECK(!rows[0].pass);
  CHECK(!all_passed(rows));
}

TEST_CASE("healthy solver criterion passes standalone") {
  ValidationOptions opts;
  opts.only = {6, 7};
  auto rows = run_validation(opts);
  REQUIRE(rows.size() == 2);
  CHECK(all_passed(rows));

  std::string table = render_validation_table(rows);
  CHECK(table.find("[PASS]") != std::string::npos);
  CHECK(table.find("criterion6") != std::string::npos);
}

TEST_CASE("quick mode skips the noise grid") {
  ValidationOptions opts;
  opts.quick = true;
  opts.only = {3};
  auto rows = run_validation(opts);
  REQUIRE(rows.size() == 6);
  for (const ValidationRow &row : rows) {
    CHECK(row.pass);
    CHECK(row.detail.find("skipped") != std::string::npos);
  }
}
