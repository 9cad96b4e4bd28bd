#include "csfnet/gradcheck.hpp"
#include "doctest.h"

using namespace csf;

TEST_CASE("gradient suite passes on a couple of seeds") {
  GradChecker gc;
  for (uint64_t seed = 1; seed <= 2; ++seed) gradsuite::run_module(gc, "all", seed);
  for (const auto& r : gc.reports()) {
    INFO(r.name << " worst_rel_err=" << r.worst_rel_err);
    CHECK(r.pass);
  }
  CHECK(gc.all_pass());
}

TEST_CASE("a corrupted gradient is flagged and attributed to the right op") {
  GradChecker gc;
  gc.corrupt_op = "conv3d";
  gradsuite::kernel_checks(gc, 1);
  CHECK_FALSE(gc.all_pass());
  for (const auto& r : gc.reports()) {
    if (r.name == "conv3d")
      CHECK_FALSE(r.pass);
    else
      CHECK(r.pass);
  }
}

TEST_CASE("unknown module name is rejected") {
  GradChecker gc;
  CHECK_THROWS_AS(gradsuite::run_module(gc, "attention", 0), ValidationError);
}
