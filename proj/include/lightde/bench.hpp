#pragma once

#include <cstdint>
#include <string>

namespace lightde::bench {

struct BenchOptions {
  std::string workload;  // alloc-heavy | pointer-dense | call-intensive
  std::uint32_t threads = 4;
  std::uint64_t seed = 1;
  bool stack_hooks = true;
  std::uint64_t ops_per_thread = 200000;
};

struct BenchResult {
  std::string workload;
  bool stack_hooks = true;
  std::uint32_t threads = 0;
  double protected_ms = 0;
  double unprotected_ms = 0;
  double ratio = 0;  // protected / unprotected wall time
  std::uint64_t protected_peak_bytes = 0;
  std::uint64_t unprotected_peak_bytes = 0;
  std::uint64_t events = 0;  // alloc+free+frame-exit events (deterministic per seed)
  std::uint64_t nullified = 0;

  std::string to_text() const;
};

// Runs the named synthetic workload once unprotected and once protected with
// identical per-thread operation sequences, and reports the overhead ratio.
// Throws std::invalid_argument for unknown workload names.
BenchResult run_bench(const BenchOptions& opt);

}  // namespace lightde::bench
