// Acceptance suite: runs the full built-in validation battery (simulated
// patients with known ground truth driven end-to-end through segmentation,
// identification and analysis) and requires every criterion to pass at its
// pinned threshold. One pass/fail line is printed per criterion row.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "respfit/validation.hpp"

#include <cstdio>

using namespace respfit;

namespace {

const std::vector<ValidationRow> &battery() {
  static std::vector<ValidationRow> rows = [] {
    auto r = run_validation(ValidationOptions{});
    std::fputs(render_validation_table(r).c_str(), stdout);
    std::fflush(stdout);
    return r;
  }();
  return rows;
}

void require_criterion(int id) {
  std::string prefix = "criterion" + std::to_string(id);
  int seen = 0;
  for (const ValidationRow &row : battery()) {
    if (row.name.rfind(prefix, 0) != 0)
      continue;
    ++seen;
    INFO(row.name << " — " << row.detail);
    CHECK(row.pass);
  }
  CHECK(seen > 0);
}

} // namespace

TEST_CASE("criterion 1: quadratic-patient parameter recovery") { require_criterion(1); }
TEST_CASE("criterion 2: region-dependent fit advantage") { require_criterion(2); }
TEST_CASE("criterion 3: noise robustness") { require_criterion(3); }
TEST_CASE("criterion 4: region classification across the envelope") { require_criterion(4); }
TEST_CASE("criterion 5: titration analysis") { require_criterion(5); }
TEST_CASE("criterion 6: solver unit suite") { require_criterion(6); }
TEST_CASE("criterion 7: numerical property suite") { require_criterion(7); }
TEST_CASE("criterion 8: online-rate contract") { require_criterion(8); }
