#include "lightde/bench.hpp"

#include <chrono>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "lightde/runtime.hpp"

namespace lightde::bench {

namespace {

constexpr std::uint32_t kSites = 16;
constexpr std::uint32_t kCells = 8;        // pointer cells per object
constexpr std::uint64_t kObjBytes = kCells * 8;

meta::ObjectPointerTable alloc_heavy_meta() {
  meta::ObjectPointerTable t;
  for (std::uint32_t s = 1; s <= kSites; ++s) {
    meta::ObjectEntry e;
    e.static_id = s;
    e.has_layout = true;
    t.objects.push_back(std::move(e));
  }
  return t;
}

meta::ObjectPointerTable pointer_dense_meta() {
  meta::ObjectPointerTable t;
  for (std::uint32_t s = 1; s <= kSites; ++s) {
    meta::ObjectEntry e;
    e.static_id = s;
    e.has_layout = true;
    for (std::uint32_t c = 0; c < kCells; ++c) e.pointer_field_offsets.push_back(8 * c);
    // Every site's objects may hold pointers to every other site's objects.
    for (std::uint32_t c = 1; c <= kSites; ++c)
      for (std::uint32_t off = 0; off < kCells; ++off)
        e.records.push_back(meta::StaticPointerRecord::heap_field(c, 8 * off));
    t.objects.push_back(std::move(e));
  }
  return t;
}

meta::ObjectPointerTable call_intensive_meta(std::uint32_t threads) {
  meta::ObjectPointerTable t;
  for (std::uint32_t s = 1; s <= kSites; ++s) {
    meta::ObjectEntry e;
    e.static_id = s;
    e.has_layout = true;
    for (std::uint32_t fn = 0; fn < threads; ++fn)
      for (std::uint32_t slot = 0; slot < kCells; ++slot)
        e.records.push_back(meta::StaticPointerRecord::stack(fn, slot));
    t.objects.push_back(std::move(e));
  }
  for (std::uint32_t fn = 0; fn < threads; ++fn) {
    meta::FunctionInfo info;
    info.name = "w" + std::to_string(fn);
    info.frame_size = kCells * 8;
    for (std::uint32_t slot = 0; slot < kCells; ++slot) info.slot_offsets.push_back(8 * slot);
    t.functions.push_back(std::move(info));
  }
  return t;
}

struct RunOutcome {
  double wall_ms = 0;
  std::uint64_t peak_bytes = 0;
  std::uint64_t events = 0;
  std::uint64_t nullified = 0;
};

// One protected-or-unprotected pass. The per-thread operation sequence is a
// pure function of (seed, thread), so both passes do identical work.
RunOutcome run_once(const BenchOptions& opt, bool prot) {
  rt::RuntimeConfig cfg;
  cfg.protected_mode = prot;
  cfg.stack_hooks = opt.stack_hooks;
  cfg.sync_sweep = false;

  meta::ObjectPointerTable table;
  if (opt.workload == "alloc-heavy")
    table = alloc_heavy_meta();
  else if (opt.workload == "pointer-dense")
    table = pointer_dense_meta();
  else if (opt.workload == "call-intensive")
    table = call_intensive_meta(opt.threads);
  else
    throw std::invalid_argument("unknown workload: " + opt.workload);

  rt::RuntimeSystem rt(cfg, &table);
  std::vector<std::uint64_t> event_counts(opt.threads, 0);

  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> workers;
  for (std::uint32_t w = 0; w < opt.threads; ++w) {
    workers.emplace_back([&, w] {
      std::mt19937_64 rng(opt.seed * 1000003 + w);
      std::uint64_t events = 0;
      std::vector<rt::Address> live;

      if (opt.workload == "call-intensive") {
        for (std::uint64_t i = 0; i < opt.ops_per_thread; ++i) {
          rt::Frame frame = rt.on_frame_enter(w, kCells * 8);
          rt::Address base = frame.base;
          if (live.empty() || rng() % 64 == 0) {
            rt::Address a = rt.on_alloc(1 + w % kSites, kObjBytes);
            if (a) {
              live.push_back(a);
              events += prot ? 1 : 0;
            }
          }
          if (!live.empty())
            for (std::uint32_t c = 0; c < kCells; ++c)
              rt.memory().cell(base + 8 * c)->store(live.back(), std::memory_order_relaxed);
          rt.on_frame_exit(frame.token);
          events += prot && opt.stack_hooks ? 1 : 0;
          if (live.size() > 4) {
            rt.on_free(live.front());
            live.erase(live.begin());
            events += prot ? 1 : 0;
          }
        }
      } else {
        bool dense = opt.workload == "pointer-dense";
        for (std::uint64_t i = 0; i < opt.ops_per_thread; ++i) {
          std::uint32_t roll = static_cast<std::uint32_t>(rng() % 100);
          if (roll < 45 || live.size() < 4) {
            rt::Address a = rt.on_alloc(1 + static_cast<std::uint32_t>(rng() % kSites),
                                        dense ? kObjBytes : 16 + 8 * (rng() % 6));
            if (a) {
              live.push_back(a);
              events += prot ? 1 : 0;
            }
          } else if (dense && roll < 70) {
            rt::Address holder = live[rng() % live.size()];
            rt::Address target = live[rng() % live.size()];
            rt.memory()
                .cell(holder + 8 * (rng() % kCells))
                ->store(target, std::memory_order_relaxed);
          } else {
            std::size_t k = rng() % live.size();
            rt.on_free(live[k]);
            live.erase(live.begin() + k);
            events += prot ? 1 : 0;
          }
        }
      }
      event_counts[w] = events;
    });
  }
  for (auto& t : workers) t.join();
  rt.shutdown();
  auto t1 = std::chrono::steady_clock::now();

  RunOutcome out;
  out.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  out.peak_bytes = rt.allocator().stats().peak_live_bytes;
  for (std::uint64_t e : event_counts) out.events += e;
  out.nullified = rt.sweep_report().nullified_total();
  return out;
}

}  // namespace

BenchResult run_bench(const BenchOptions& opt) {
  RunOutcome unprot = run_once(opt, false);
  RunOutcome prot = run_once(opt, true);
  BenchResult r;
  r.workload = opt.workload;
  r.stack_hooks = opt.stack_hooks;
  r.threads = opt.threads;
  r.protected_ms = prot.wall_ms;
  r.unprotected_ms = unprot.wall_ms;
  r.ratio = unprot.wall_ms > 0 ? prot.wall_ms / unprot.wall_ms : 0;
  r.protected_peak_bytes = prot.peak_bytes;
  r.unprotected_peak_bytes = unprot.peak_bytes;
  r.events = prot.events;
  r.nullified = prot.nullified;
  return r;
}

std::string BenchResult::to_text() const {
  std::ostringstream out;
  out << "workload " << workload << "\n"
      << "threads " << threads << "\n"
      << "stack_hooks " << (stack_hooks ? "on" : "off") << "\n"
      << "unprotected_ms " << unprotected_ms << "\n"
      << "protected_ms " << protected_ms << "\n"
      << "ratio " << ratio << "\n"
      << "unprotected_peak_bytes " << unprotected_peak_bytes << "\n"
      << "protected_peak_bytes " << protected_peak_bytes << "\n"
      << "events " << events << "\n"
      << "nullified " << nullified << "\n";
  return out.str();
}

}  // namespace lightde::bench
