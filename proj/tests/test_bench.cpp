#include "doctest.h"

#include <stdexcept>

#include "lightde/bench.hpp"

using namespace lightde;

TEST_CASE("bench workloads complete and are seed-deterministic") {
  for (const char* name : {"alloc-heavy", "pointer-dense", "call-intensive"}) {
    bench::BenchOptions opt;
    opt.workload = name;
    opt.threads = 2;
    opt.seed = 5;
    opt.ops_per_thread = 3000;
    bench::BenchResult a = bench::run_bench(opt);
    bench::BenchResult b = bench::run_bench(opt);
    CAPTURE(name);
    CHECK(a.ratio > 0);
    CHECK(a.events > 0);
    CHECK(a.events == b.events);
  }
}

TEST_CASE("unknown workload is rejected") {
  bench::BenchOptions opt;
  opt.workload = "nope";
  CHECK_THROWS_AS(bench::run_bench(opt), std::invalid_argument);
}
