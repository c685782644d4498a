#include "doctest.h"

#include <random>
#include <thread>

#include "lightde/runtime.hpp"
#include "lightde/sweeper.hpp"

using namespace lightde;
using rt::Address;

namespace {

// Metadata used by most sweeper tests: two heap sites. Site 1 objects are
// 3-pointer structs whose cells may hold site-2 objects at offset 8 (exact) or
// anywhere (ANY variant); globals and one function with two stack slots.
meta::ObjectPointerTable make_meta(bool any_field, bool layout_known = true) {
  meta::ObjectPointerTable t;
  t.module_hash = 0;
  meta::ObjectEntry o1;
  o1.static_id = 1;
  o1.has_layout = layout_known;
  o1.pointer_field_offsets = {0, 8, 16};
  meta::ObjectEntry o2;
  o2.static_id = 2;
  o2.records.push_back(any_field ? meta::StaticPointerRecord::heap_field(1, meta::kAnyPointerField)
                                 : meta::StaticPointerRecord::heap_field(1, 8));
  o2.records.push_back(meta::StaticPointerRecord::global(0));
  o2.records.push_back(meta::StaticPointerRecord::stack(0, 1));
  t.objects = {o1, o2};
  t.globals.cells.push_back(meta::GlobalCell{"g0", 0, 0});
  t.functions.push_back(meta::FunctionInfo{"main", 16, {0, 8}});
  return t;
}

std::uint64_t load(rt::RuntimeSystem& r, Address a) {
  return r.memory().cell(a)->load(std::memory_order_relaxed);
}
void store(rt::RuntimeSystem& r, Address a, std::uint64_t v) {
  r.memory().cell(a)->store(v, std::memory_order_relaxed);
}

}  // namespace

TEST_CASE("allocations from one site share a static id but never a range") {
  rt::RuntimeSystem r(rt::RuntimeConfig{.protected_mode = false}, nullptr);
  Address a = r.on_alloc(1, 24);
  Address b = r.on_alloc(1, 24);
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a != b);
  auto ra = r.registry().lookup(a);
  auto rb = r.registry().lookup(b);
  REQUIRE(ra);
  REQUIRE(rb);
  CHECK(ra->static_id == 1);
  CHECK(rb->static_id == 1);
  CHECK((ra->end <= rb->start || rb->end <= ra->start));
}

TEST_CASE("size-1 allocation records end = start + 1") {
  rt::RuntimeSystem r(rt::RuntimeConfig{.protected_mode = false}, nullptr);
  Address a = r.on_alloc(7, 1);
  auto rec = r.registry().lookup(a);
  REQUIRE(rec);
  CHECK(rec->end == rec->start + 1);
  CHECK(rec->size == 1);
}

TEST_CASE("registry agrees with a linear-scan oracle") {
  rt::RuntimeSystem r(rt::RuntimeConfig{.protected_mode = false}, nullptr);
  std::mt19937_64 rng(3);
  std::vector<Address> live;
  for (int i = 0; i < 10000; ++i) {
    Address a = r.on_alloc(1 + rng() % 5, 8 + 8 * (rng() % 6));
    REQUIRE(a);
    live.push_back(a);
    if (rng() % 3 == 0 && !live.empty()) {
      std::size_t k = rng() % live.size();
      r.on_free(live[k]);
      live.erase(live.begin() + k);
    }
  }
  std::vector<rt::RuntimeObjectRecord> snap = r.registry().snapshot();
  for (int probe = 0; probe < 1000; ++probe) {
    Address a = (rng() % 2) ? snap[rng() % snap.size()].start + rng() % 24
                            : rt::kNullZone + rng() % (1 << 22);
    const rt::RuntimeObjectRecord* expect = nullptr;
    for (const auto& rec : snap)
      if (a >= rec.start && a < rec.end) expect = &rec;
    auto got = r.registry().lookup(a);
    if (expect) {
      REQUIRE(got);
      CHECK(got->start == expect->start);
    } else {
      CHECK(!got);
    }
  }
}

TEST_CASE("double free and invalid free fault without events") {
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
  Address b = r.on_alloc(2, 8);
  CHECK(r.on_free(b).ok);
  rt::FreeResult second = r.on_free(b);
  CHECK(!second.ok);
  CHECK(second.fault == rt::FaultKind::DoubleFree);
  rt::FreeResult wild = r.on_free(rt::kNullZone + 0x333000);
  CHECK(!wild.ok);
  CHECK(wild.fault == rt::FaultKind::InvalidFree);
  r.shutdown();
  CHECK(r.sweep_report().frees_processed == 1);
  // free(null) is a no-op
  CHECK(r.on_free(0).ok);
}

TEST_CASE("heap field nullification at a known offset") {
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
  Address holder = r.on_alloc(1, 24);
  Address victim = r.on_alloc(2, 8);
  Address other = r.on_alloc(2, 8);
  store(r, holder + 8, victim + 4);  // interior pointer still counts
  store(r, holder + 0, other);       // offset 0 is not in the record set
  r.on_free(victim);
  CHECK(load(r, holder + 8) == 0);
  CHECK(load(r, holder + 0) == other);
  r.shutdown();
  CHECK(r.sweep_report().nullified_heap == 1);
}

TEST_CASE("pointer to a different live object is untouched") {
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
  Address holder = r.on_alloc(1, 24);
  Address victim = r.on_alloc(2, 8);
  Address other = r.on_alloc(2, 8);
  store(r, holder + 8, other);
  r.on_free(victim);
  CHECK(load(r, holder + 8) == other);
}

TEST_CASE("ANY_POINTER_FIELD expansion") {
  SUBCASE("typed container: exactly the dangling cell is written") {
    meta::ObjectPointerTable t = make_meta(true);
    rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
    Address holder = r.on_alloc(1, 24);
    Address victim = r.on_alloc(2, 8);
    Address other = r.on_alloc(2, 8);
    store(r, holder + 0, other);
    store(r, holder + 8, victim);
    store(r, holder + 16, other);
    std::uint64_t before0 = load(r, holder + 0), before16 = load(r, holder + 16);
    r.on_free(victim);
    CHECK(load(r, holder + 8) == 0);
    CHECK(load(r, holder + 0) == before0);
    CHECK(load(r, holder + 16) == before16);
    r.shutdown();
    CHECK(r.sweep_report().nullified_heap == 1);
  }
  SUBCASE("unstructured container: every aligned cell is checked") {
    meta::ObjectPointerTable t = make_meta(true, /*layout_known=*/false);
    rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
    Address holder = r.on_alloc(1, 32);
    Address victim = r.on_alloc(2, 8);
    store(r, holder + 24, victim);  // not a declared pointer offset
    r.on_free(victim);
    CHECK(load(r, holder + 24) == 0);
    r.shutdown();
    CHECK(r.sweep_report().scanned_heap == 4);
  }
}

TEST_CASE("global and stack nullification") {
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
  Address gcell = r.raw_alloc(8);
  r.set_global_array({gcell});
  rt::Frame fr = r.on_frame_enter(0, 16);
  Address frame = fr.base;

  Address victim = r.on_alloc(2, 8);
  store(r, gcell, victim);
  store(r, frame + 8, victim);
  store(r, frame + 0, victim);  // slot 0 exists but only slot 1 is recorded
  r.on_free(victim);
  CHECK(load(r, gcell) == 0);
  CHECK(load(r, frame + 8) == 0);
  CHECK(load(r, frame + 0) == victim);
  r.shutdown();
  CHECK(r.sweep_report().nullified_global == 1);
  CHECK(r.sweep_report().nullified_stack == 1);
}

TEST_CASE("frame lifecycle") {
  meta::ObjectPointerTable t = make_meta(false);

  SUBCASE("sweeper reclaims exactly one frame per exit") {
    rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
    rt::Frame fr = r.on_frame_enter(0, 16);
    CHECK(r.stack().live_count() == 1);
    CHECK(r.on_frame_exit(fr.token));
    r.quiesce();
    CHECK(r.stack().live_count() == 0);
    r.shutdown();
    CHECK(r.sweep_report().frames_reclaimed == 1);
  }
  SUBCASE("recursion depth 100 keeps 100 live frames") {
    rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
    std::vector<std::uint64_t> toks;
    for (int i = 0; i < 100; ++i) toks.push_back(r.on_frame_enter(0, 16).token);
    CHECK(r.stack().live_count(0) == 100);
    for (auto it = toks.rbegin(); it != toks.rend(); ++it) r.on_frame_exit(*it);
    r.quiesce();
    CHECK(r.stack().live_count() == 0);
  }
  SUBCASE("unknown token is a fault") {
    rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
    CHECK(!r.on_frame_exit(424242));
  }
  SUBCASE("frame exited before the free is not scanned") {
    rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
    rt::Frame fr = r.on_frame_enter(0, 16);
    Address victim = r.on_alloc(2, 8);
    store(r, fr.base + 8, victim);
    CHECK(r.on_frame_exit(fr.token));
    std::uint64_t scanned_before = [&] {
      r.quiesce();
      return r.sweeper()->report().scanned_stack;
    }();
    r.on_free(victim);
    r.quiesce();
    CHECK(r.sweeper()->report().scanned_stack == scanned_before);
    r.shutdown();
  }
  SUBCASE("free processed before the owning frame exit nullifies the slot") {
    rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
    rt::Frame fr = r.on_frame_enter(0, 16);
    Address victim = r.on_alloc(2, 8);
    store(r, fr.base + 8, victim);
    r.on_free(victim);  // sync: processed before the frame exits
    CHECK(load(r, fr.base + 8) == 0);
    r.on_frame_exit(fr.token);
    r.shutdown();
  }
}

TEST_CASE("quarantine blocks reuse until the sweep finishes") {
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeConfig cfg;
  cfg.sync_sweep = false;  // keep the window open
  rt::RuntimeSystem r(cfg, &t);
  Address victim = r.on_alloc(2, 64);
  auto rec = r.registry().lookup(victim);
  REQUIRE(rec);
  r.on_free(victim);
  // Race the sweeper: every new allocation must avoid the quarantined range
  // until release; the allocator counts violations.
  for (int i = 0; i < 64; ++i) {
    Address a = r.on_alloc(2, 64);
    REQUIRE(a);
    r.on_free(a);
  }
  r.shutdown();
  CHECK(r.allocator().stats().quarantine_reuse_violations == 0);
  CHECK(r.registry().overlap_violations() == 0);
}

TEST_CASE("grouping matches live allocations at every event boundary") {
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);
  Address a1 = r.on_alloc(1, 24);
  Address a2 = r.on_alloc(1, 24);
  Address b1 = r.on_alloc(2, 8);
  r.quiesce();
  CHECK(r.sweeper()->grouped(1).size() == 2);
  CHECK(r.sweeper()->grouped(2).size() == 1);
  r.on_free(a1);
  CHECK(r.sweeper()->grouped(1).size() == 1);
  CHECK(r.sweeper()->grouped(1)[0].start == a2);
  r.on_free(b1);
  CHECK(r.sweeper()->grouped(2).empty());
  r.shutdown();
}

TEST_CASE("multi-threaded alloc/free keeps event order per address") {
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeConfig cfg;
  cfg.sync_sweep = false;
  rt::RuntimeSystem r(cfg, &t);
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&r, w] {
      std::mt19937_64 rng(w);
      for (int i = 0; i < 2000; ++i) {
        Address a = r.on_alloc(1 + (w % 2), 8 + 8 * (rng() % 4));
        if (!a) continue;
        if (rng() % 2) r.on_free(a);
      }
    });
  }
  for (auto& th : threads) th.join();
  r.quiesce();
  // Alloc precedes Free in consumption order for every address, so grouped
  // records are exactly the live registry contents.
  std::size_t grouped = r.sweeper()->grouped(1).size() + r.sweeper()->grouped(2).size();
  CHECK(grouped == r.registry().size());
  CHECK(r.registry().overlap_violations() == 0);
  r.shutdown();
}

TEST_CASE("allocator fails gracefully on absurd sizes") {
  rt::RuntimeSystem r(rt::RuntimeConfig{.protected_mode = false}, nullptr);
  CHECK(r.on_alloc(1, 0) == 0);
  CHECK(r.on_alloc(1, rt::kSegmentBytes + 1) == 0);
  CHECK(r.allocator().stats().failed_allocs >= 1);
}

TEST_CASE("offline replay oracle: nullified count matches a recorded trace") {
  // Drive a randomized alloc/write/free trace, record it, and replay it
  // offline with a naive map to predict how many cells each sweep nullifies.
  meta::ObjectPointerTable t = make_meta(false);
  rt::RuntimeSystem r(rt::RuntimeConfig{}, &t);

  struct Obj {
    Address addr;
    std::uint32_t site;
  };
  std::mt19937_64 rng(17);
  std::vector<Obj> live;
  std::uint64_t expected_nullified = 0;
  // cell address -> value it holds (only holder cells at offset 8 are used)
  std::map<Address, Address> cells;

  for (int step = 0; step < 4000; ++step) {
    std::uint32_t roll = rng() % 100;
    if (roll < 45 || live.size() < 2) {
      std::uint32_t site = 1 + rng() % 2;
      Address a = r.on_alloc(site, 24);
      REQUIRE(a);
      live.push_back({a, site});
    } else if (roll < 75) {
      // write: some site-1 holder's cell at offset 8 points at some live obj
      const Obj& holder = live[rng() % live.size()];
      const Obj& target = live[rng() % live.size()];
      if (holder.site != 1) continue;
      store(r, holder.addr + 8, target.addr);
      cells[holder.addr + 8] = target.addr;
    } else {
      std::size_t k = rng() % live.size();
      Obj victim = live[k];
      live.erase(live.begin() + k);
      // Offline replay: which recorded cells currently hold a pointer into
      // the victim? Only site-2 frees consult the heap-field record.
      if (victim.site == 2) {
        for (auto it = cells.begin(); it != cells.end();) {
          bool cell_owner_live = false;
          for (const Obj& o : live)
            if (it->first >= o.addr && it->first < o.addr + 24 && o.site == 1)
              cell_owner_live = true;
          if (!cell_owner_live) {
            it = cells.erase(it);
            continue;
          }
          if (it->second >= victim.addr && it->second < victim.addr + 24) {
            ++expected_nullified;
            it->second = 0;
          }
          ++it;
        }
      } else {
        for (auto it = cells.begin(); it != cells.end();) {
          if (it->first >= victim.addr && it->first < victim.addr + 24)
            it = cells.erase(it);
          else
            ++it;
        }
      }
      r.on_free(victim.addr);
    }
  }
  r.shutdown();
  CHECK(r.sweep_report().nullified_heap == expected_nullified);
}
