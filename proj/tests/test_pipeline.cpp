#include "doctest.h"

#include "lightde/generator.hpp"
#include "lightde/parser.hpp"
#include "lightde/pipeline.hpp"

using namespace lightde;

TEST_CASE("facts text is byte-stable across independent solves") {
  for (std::uint64_t seed : {1ull, 42ull, 321ull}) {
    gen::GenOptions opt;
    opt.seed = seed;
    ir::Module m = gen::generate_module(opt);
    pipeline::Products a = pipeline::build(m);
    pipeline::Products b = pipeline::build(m);
    CHECK(pipeline::facts_text(m, a) == pipeline::facts_text(m, b));
    CHECK(meta::serialize_tables(a.table) == meta::serialize_tables(b.table));
  }
}

TEST_CASE("check-uaf verdicts") {
  SUBCASE("free of an object never pointed at elsewhere is trivially prevented") {
    ir::Module m = ir::parse_module(R"(func main() entry {
  %v = malloc 8
  call free(%v)
  ret
}
)");
    pipeline::Products p = pipeline::build(m);
    pipeline::UafCheck c = pipeline::check_uaf(m, p);
    CHECK(c.verdict == pipeline::Verdict::Prevented);
    CHECK(c.unprotected_run.stale_reads == 0);
    CHECK(c.protected_run.null_traps == 0);
  }
  SUBCASE("a program without frees is not applicable") {
    ir::Module m = ir::parse_module(R"(func main() entry {
  %v = malloc 8
  store %v, %v
  ret
}
)");
    pipeline::Products p = pipeline::build(m);
    CHECK(pipeline::check_uaf(m, p).verdict == pipeline::Verdict::NotApplicable);
  }
  SUBCASE("a dangling use the metadata cannot cover is reported honestly") {
    // The dangling pointer lives in a register, which this defense leaves
    // alone: the unprotected and protected runs both read stale memory.
    ir::Module m = ir::parse_module(R"(func main() entry {
  %v = malloc 8
  call free(%v)
  %use = load %v
  ret
}
)");
    pipeline::Products p = pipeline::build(m);
    pipeline::UafCheck c = pipeline::check_uaf(m, p);
    CHECK(c.verdict == pipeline::Verdict::NotPrevented);
    CHECK(c.protected_run.stale_reads >= 1);
  }
}
