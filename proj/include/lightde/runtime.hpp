#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "lightde/metadata.hpp"
#include "lightde/mpsc_queue.hpp"

namespace lightde::rt {

using Address = std::uint64_t;
using Word = std::uint64_t;

inline constexpr unsigned kSegmentBits = 20;  // 1 MiB segments
inline constexpr std::uint64_t kSegmentBytes = 1ull << kSegmentBits;
inline constexpr std::uint64_t kSegmentWords = kSegmentBytes / 8;
inline constexpr std::uint64_t kMaxSegments = 16384;  // 16 GiB of simulated space
inline constexpr Address kNullZone = 1ull << 16;      // addresses below always trap

// Flat simulated memory backed by lazily created 1 MiB segments of atomic
// words. Cell reads and writes are atomic at 8-byte granularity, which makes
// the interpreter/sweeper race on a cell benign: a reader sees either the old
// pointer or null, never a torn value.
class SimMemory {
 public:
  SimMemory();
  ~SimMemory();
  SimMemory(const SimMemory&) = delete;
  SimMemory& operator=(const SimMemory&) = delete;

  // nullptr when the segment does not exist (unmapped) or addr is unaligned.
  std::atomic<Word>* cell(Address a) const;
  bool mapped(Address a) const;

  // Called under the allocator lock while extending the heap.
  void ensure_segment(std::uint64_t seg);

 private:
  std::unique_ptr<std::atomic<std::atomic<Word>*>[]> segments_;
};

struct AllocStats {
  std::uint64_t live_bytes = 0;
  std::uint64_t quarantined_bytes = 0;
  std::uint64_t peak_live_bytes = 0;       // live + quarantined high-water
  std::uint64_t peak_quarantined_bytes = 0;
  std::uint64_t quarantine_reuse_violations = 0;
  std::uint64_t failed_allocs = 0;
};

// Bump allocator with a free list over SimMemory. Freed ranges re-enter the
// free list only through release(): in protected mode that call is the
// sweeper's, which is what enforces quarantine. Tombstones remember freed
// ranges until reuse so the interpreter can flag stale reads.
class SimAllocator {
 public:
  explicit SimAllocator(SimMemory& mem);

  Address allocate(std::uint64_t size);  // 0 on failure; zero-initialized
  void release(Address addr, std::uint64_t size);

  void quarantine_add(Address addr, std::uint64_t size);
  void quarantine_remove(Address addr);
  void tombstone_add(Address addr, std::uint64_t size);
  bool in_quarantine(Address addr) const;

  // Freed (and not since reused) range containing addr, if any.
  std::optional<std::pair<Address, Address>> tombstone_at(Address addr) const;

  AllocStats stats() const;

 private:
  void note_peaks();

  SimMemory& mem_;
  mutable std::mutex mu_;
  std::uint64_t bump_seg_ = 0;
  std::uint64_t bump_off_ = kNullZone;
  std::multimap<std::uint64_t, Address> free_list_;  // size -> start
  std::map<Address, std::uint64_t> quarantine_;      // start -> size
  std::map<Address, Address> tombstones_;            // start -> end
  AllocStats stats_;
};

struct RuntimeObjectRecord {
  Address start = 0;
  Address end = 0;  // exclusive
  std::uint64_t size = 0;
  std::uint32_t static_id = 0;

  bool operator==(const RuntimeObjectRecord&) const = default;
};

// Concurrent range map from addresses to live runtime objects.
class AllocationRegistry {
 public:
  bool insert(const RuntimeObjectRecord& rec);  // false + violation count on overlap
  std::optional<RuntimeObjectRecord> remove(Address start);
  std::optional<RuntimeObjectRecord> lookup(Address a) const;
  std::vector<RuntimeObjectRecord> snapshot() const;
  std::size_t size() const;
  std::uint64_t overlap_violations() const { return overlap_violations_.load(); }

 private:
  mutable std::shared_mutex mu_;
  std::map<Address, RuntimeObjectRecord> by_start_;
  std::atomic<std::uint64_t> overlap_violations_{0};
};

struct SweeperEvent {
  enum class Kind : std::uint8_t { Alloc, Free, FrameExit, Shutdown } kind = Kind::Shutdown;
  RuntimeObjectRecord record;       // Alloc / Free
  std::uint32_t function_id = 0;    // FrameExit
  std::uint64_t frame_token = 0;    // FrameExit
};

struct Frame {
  std::uint64_t token = 0;
  std::uint32_t function_id = 0;
  Address base = 0;  // 0 when the function has no frame bytes
  std::uint32_t size = 0;
};

// Application-pushed, sweeper-reclaimed frames holding address-taken stack
// slots. The pushing thread never returns frame memory; reclamation happens
// when the sweeper processes the matching FrameExit event (or immediately on
// exit when stack hooks are off).
class DedicatedStack {
 public:
  Frame enter(std::uint32_t function_id, std::uint32_t frame_size, SimAllocator& alloc);
  bool reclaim(std::uint64_t token, SimAllocator& alloc);
  std::optional<Frame> find(std::uint64_t token) const;
  void for_each_frame(std::uint32_t function_id,
                      const std::function<void(const Frame&)>& fn) const;
  void for_each_frame(const std::function<void(const Frame&)>& fn) const;
  // Frame containing addr, with the offset inside it.
  std::optional<std::pair<Frame, std::uint64_t>> resolve(Address addr) const;
  std::size_t live_count() const;
  std::size_t live_count(std::uint32_t function_id) const;

 private:
  mutable std::mutex mu_;
  std::map<std::uint64_t, Frame> frames_;
  std::map<std::uint32_t, std::set<std::uint64_t>> by_function_;
  std::map<Address, std::uint64_t> by_base_;
  std::atomic<std::uint64_t> next_token_{1};
};

struct SweepReport {
  std::uint64_t nullified_heap = 0;
  std::uint64_t nullified_global = 0;
  std::uint64_t nullified_stack = 0;
  std::uint64_t scanned_heap = 0;
  std::uint64_t scanned_global = 0;
  std::uint64_t scanned_stack = 0;
  std::uint64_t allocs_processed = 0;
  std::uint64_t frees_processed = 0;
  std::uint64_t frames_reclaimed = 0;
  std::uint64_t released_bytes = 0;
  std::uint64_t config_errors = 0;

  std::uint64_t nullified_total() const {
    return nullified_heap + nullified_global + nullified_stack;
  }
  std::string to_text() const;
};

enum class FaultKind : std::uint8_t {
  NullDeref,
  UnmappedAccess,
  UnalignedAccess,
  WriteToFunction,
  FunctionRegionAccess,
  DoubleFree,
  InvalidFree,
  AllocFailed,
  CallThroughNonFunction,
  CallArityMismatch,
  StepLimit,
  DepthLimit,
  FrameMisuse,
  StaleRead,
};

const char* fault_kind_name(FaultKind k);

struct Fault {
  FaultKind kind = FaultKind::NullDeref;
  std::string function;
  std::uint32_t instr = 0;
  Address addr = 0;

  std::string to_text() const;
};

struct ExecutionReport {
  bool protected_mode = false;
  bool stack_hooks = true;
  std::uint64_t instructions = 0;
  std::uint64_t allocs = 0;
  std::uint64_t frees = 0;
  std::uint64_t frame_enters = 0;
  std::uint64_t stale_reads = 0;
  std::uint64_t null_traps = 0;
  bool trapped = false;
  std::string trap_reason;
  std::vector<Fault> faults;
  std::uint64_t peak_live_bytes = 0;
  std::uint64_t peak_quarantined_bytes = 0;
  std::uint64_t registry_overlap_violations = 0;
  std::uint64_t quarantine_reuse_violations = 0;
  double wall_ms = 0;
  SweepReport sweep;

  std::string to_text() const;
};

struct RuntimeConfig {
  bool protected_mode = true;
  bool stack_hooks = true;
  // Wait for the sweeper to drain after every free; gives deterministic
  // nullification points for scenario runs.
  bool sync_sweep = true;
  // Never return freed ranges to the free list. Keeps every dangling pointer
  // identifiable by tombstone; used by the execution-soundness differential,
  // where reuse would re-bind stale addresses to fresh objects.
  bool no_reuse = false;
};

struct FreeResult {
  bool ok = false;
  FaultKind fault = FaultKind::InvalidFree;
};

class Sweeper;

// Owns the simulated memory system and, in protected mode, the sweeper thread.
// The interpreter and the synthetic benchmark workloads drive this API.
class RuntimeSystem {
 public:
  RuntimeSystem(const RuntimeConfig& cfg, const meta::ObjectPointerTable* metadata);
  ~RuntimeSystem();

  // Allocation hooks -------------------------------------------------------
  Address on_alloc(std::uint32_t static_id, std::uint64_t size);
  FreeResult on_free(Address addr);
  Frame on_frame_enter(std::uint32_t function_id, std::uint32_t frame_size);
  bool on_frame_exit(std::uint64_t token);

  // Startup-side services --------------------------------------------------
  Address raw_alloc(std::uint64_t size);  // untracked storage (globals, harness data)
  void set_global_array(std::vector<Address> cells);
  const std::vector<Address>& global_array() const { return global_array_; }

  // Waits until the sweeper has consumed everything enqueued so far.
  void quiesce();
  // Enqueues the shutdown marker and joins the sweeper. Idempotent.
  void shutdown();

  SimMemory& memory() { return memory_; }
  const SimMemory& memory() const { return memory_; }
  SimAllocator& allocator() { return allocator_; }
  const SimAllocator& allocator() const { return allocator_; }
  AllocationRegistry& registry() { return registry_; }
  const AllocationRegistry& registry() const { return registry_; }
  DedicatedStack& stack() { return stack_; }
  const DedicatedStack& stack() const { return stack_; }
  const RuntimeConfig& config() const { return cfg_; }
  const meta::ObjectPointerTable* metadata() const { return metadata_; }

  SweepReport sweep_report() const;
  const Sweeper* sweeper() const { return sweeper_.get(); }

 private:
  RuntimeConfig cfg_;
  const meta::ObjectPointerTable* metadata_;
  SimMemory memory_;
  SimAllocator allocator_;
  AllocationRegistry registry_;
  DedicatedStack stack_;
  MpscQueue<SweeperEvent> queue_;
  std::vector<Address> global_array_;

  std::unique_ptr<Sweeper> sweeper_;
  std::thread sweeper_thread_;
  bool shut_down_ = false;

  std::mutex progress_mu_;
  std::condition_variable progress_cv_;
  std::uint64_t processed_ = 0;

  friend class Sweeper;
};

}  // namespace lightde::rt
