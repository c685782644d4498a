#pragma once

#include "lightde/runtime.hpp"

namespace lightde::rt {

// The LightDE thread: consumes alloc/free/frame-exit events, groups runtime
// objects by static id, nullifies dangling pointers through the metadata
// tables, releases quarantined ranges, and reclaims dedicated-stack frames.
class Sweeper {
 public:
  Sweeper(RuntimeSystem& rt, MpscQueue<SweeperEvent>& queue,
          const meta::ObjectPointerTable* metadata);

  // Runs until the Shutdown marker is dequeued. All earlier events are
  // processed first (queue order).
  void run();

  const SweepReport& report() const { return report_; }

  // Test hook: live grouped records for one static id.
  std::vector<RuntimeObjectRecord> grouped(std::uint32_t static_id) const;

 private:
  void handle_alloc(const RuntimeObjectRecord& rec);
  void handle_free(const RuntimeObjectRecord& rec);
  void handle_frame_exit(std::uint32_t function_id, std::uint64_t token);
  void nullify_heap_fields(const meta::StaticPointerRecord& r, const RuntimeObjectRecord& freed,
                           const std::vector<RuntimeObjectRecord>& holders);
  void nullify_global(const meta::StaticPointerRecord& r, const RuntimeObjectRecord& freed);
  void nullify_stack(const meta::StaticPointerRecord& r, const RuntimeObjectRecord& freed);
  void check_cell(Address cell_addr, const RuntimeObjectRecord& freed, std::uint64_t& scanned,
                  std::uint64_t& nullified);

  RuntimeSystem& rt_;
  MpscQueue<SweeperEvent>& queue_;
  const meta::ObjectPointerTable* metadata_;
  // static id -> live runtime objects created at that site
  mutable std::mutex grouping_mu_;
  std::map<std::uint32_t, std::map<Address, RuntimeObjectRecord>> grouping_;
  SweepReport report_;
};

}  // namespace lightde::rt
