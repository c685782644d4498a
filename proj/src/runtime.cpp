#include "lightde/runtime.hpp"

#include <sstream>

#include "lightde/sweeper.hpp"

namespace lightde::rt {

// ---------------------------------------------------------------------------
// SimMemory
// ---------------------------------------------------------------------------

SimMemory::SimMemory()
    : segments_(std::make_unique<std::atomic<std::atomic<Word>*>[]>(kMaxSegments)) {
  for (std::uint64_t i = 0; i < kMaxSegments; ++i)
    segments_[i].store(nullptr, std::memory_order_relaxed);
}

SimMemory::~SimMemory() {
  for (std::uint64_t i = 0; i < kMaxSegments; ++i) delete[] segments_[i].load();
}

void SimMemory::ensure_segment(std::uint64_t seg) {
  if (segments_[seg].load(std::memory_order_acquire)) return;
  auto* words = new std::atomic<Word>[kSegmentWords];
  for (std::uint64_t i = 0; i < kSegmentWords; ++i)
    words[i].store(0, std::memory_order_relaxed);
  segments_[seg].store(words, std::memory_order_release);
}

std::atomic<Word>* SimMemory::cell(Address a) const {
  if (a % 8 != 0) return nullptr;
  std::uint64_t seg = a >> kSegmentBits;
  if (seg >= kMaxSegments) return nullptr;
  std::atomic<Word>* words = segments_[seg].load(std::memory_order_acquire);
  if (!words) return nullptr;
  return &words[(a & (kSegmentBytes - 1)) / 8];
}

bool SimMemory::mapped(Address a) const {
  std::uint64_t seg = a >> kSegmentBits;
  if (seg >= kMaxSegments) return false;
  return segments_[seg].load(std::memory_order_acquire) != nullptr;
}

// ---------------------------------------------------------------------------
// SimAllocator
// ---------------------------------------------------------------------------

SimAllocator::SimAllocator(SimMemory& mem) : mem_(mem) { mem_.ensure_segment(0); }

namespace {
std::uint64_t round8(std::uint64_t v) { return (v + 7) & ~7ull; }
}  // namespace

void SimAllocator::note_peaks() {
  std::uint64_t total = stats_.live_bytes + stats_.quarantined_bytes;
  if (total > stats_.peak_live_bytes) stats_.peak_live_bytes = total;
  if (stats_.quarantined_bytes > stats_.peak_quarantined_bytes)
    stats_.peak_quarantined_bytes = stats_.quarantined_bytes;
}

Address SimAllocator::allocate(std::uint64_t size) {
  size = round8(size);
  if (size == 0 || size > kSegmentBytes) {
    std::lock_guard lk(mu_);
    ++stats_.failed_allocs;
    return 0;
  }
  std::lock_guard lk(mu_);
  Address addr = 0;
  auto it = free_list_.lower_bound(size);
  if (it != free_list_.end()) {
    addr = it->second;
    std::uint64_t have = it->first;
    free_list_.erase(it);
    if (have > size) free_list_.emplace(have - size, addr + size);
  } else {
    if (bump_off_ + size > kSegmentBytes) {
      if (bump_seg_ + 1 >= kMaxSegments) {
        ++stats_.failed_allocs;
        return 0;
      }
      ++bump_seg_;
      mem_.ensure_segment(bump_seg_);
      bump_off_ = 0;
    }
    addr = bump_seg_ * kSegmentBytes + bump_off_;
    bump_off_ += size;
  }
  // A handed-out range overlapping the quarantine would defeat the defense.
  auto q = quarantine_.upper_bound(addr + size - 1);
  if (q != quarantine_.begin()) {
    --q;
    if (q->first + q->second > addr) ++stats_.quarantine_reuse_violations;
  }
  // The range is fresh again: drop tombstones it covered.
  auto t = tombstones_.lower_bound(addr + size);
  while (t != tombstones_.begin()) {
    --t;
    if (t->second <= addr) break;
    t = tombstones_.erase(t);
  }
  for (Address a = addr; a < addr + size; a += 8)
    mem_.cell(a)->store(0, std::memory_order_relaxed);
  stats_.live_bytes += size;
  note_peaks();
  return addr;
}

void SimAllocator::release(Address addr, std::uint64_t size) {
  size = round8(size);
  std::lock_guard lk(mu_);
  free_list_.emplace(size, addr);
  stats_.live_bytes -= size;
}

void SimAllocator::quarantine_add(Address addr, std::uint64_t size) {
  size = round8(size);
  std::lock_guard lk(mu_);
  quarantine_.emplace(addr, size);
  tombstones_[addr] = addr + size;
  stats_.quarantined_bytes += size;
  stats_.live_bytes -= size;
  note_peaks();
}

void SimAllocator::quarantine_remove(Address addr) {
  std::lock_guard lk(mu_);
  auto it = quarantine_.find(addr);
  if (it == quarantine_.end()) return;
  stats_.quarantined_bytes -= it->second;
  stats_.live_bytes += it->second;  // accounted live again until release()
  quarantine_.erase(it);
}

void SimAllocator::tombstone_add(Address addr, std::uint64_t size) {
  std::lock_guard lk(mu_);
  tombstones_[addr] = addr + round8(size);
}

bool SimAllocator::in_quarantine(Address addr) const {
  std::lock_guard lk(mu_);
  return quarantine_.count(addr) != 0;
}

std::optional<std::pair<Address, Address>> SimAllocator::tombstone_at(Address addr) const {
  std::lock_guard lk(mu_);
  auto it = tombstones_.upper_bound(addr);
  if (it == tombstones_.begin()) return std::nullopt;
  --it;
  if (addr < it->second) return std::make_pair(it->first, it->second);
  return std::nullopt;
}

AllocStats SimAllocator::stats() const {
  std::lock_guard lk(mu_);
  return stats_;
}

// ---------------------------------------------------------------------------
// AllocationRegistry
// ---------------------------------------------------------------------------

bool AllocationRegistry::insert(const RuntimeObjectRecord& rec) {
  std::unique_lock lk(mu_);
  auto next = by_start_.lower_bound(rec.start);
  if (next != by_start_.end() && next->second.start < rec.end) {
    overlap_violations_.fetch_add(1);
    return false;
  }
  if (next != by_start_.begin()) {
    auto prev = std::prev(next);
    if (prev->second.end > rec.start) {
      overlap_violations_.fetch_add(1);
      return false;
    }
  }
  by_start_.emplace(rec.start, rec);
  return true;
}

std::optional<RuntimeObjectRecord> AllocationRegistry::remove(Address start) {
  std::unique_lock lk(mu_);
  auto it = by_start_.find(start);
  if (it == by_start_.end()) return std::nullopt;
  RuntimeObjectRecord rec = it->second;
  by_start_.erase(it);
  return rec;
}

std::optional<RuntimeObjectRecord> AllocationRegistry::lookup(Address a) const {
  std::shared_lock lk(mu_);
  auto it = by_start_.upper_bound(a);
  if (it == by_start_.begin()) return std::nullopt;
  --it;
  if (a < it->second.end) return it->second;
  return std::nullopt;
}

std::vector<RuntimeObjectRecord> AllocationRegistry::snapshot() const {
  std::shared_lock lk(mu_);
  std::vector<RuntimeObjectRecord> out;
  out.reserve(by_start_.size());
  for (const auto& [s, r] : by_start_) out.push_back(r);
  return out;
}

std::size_t AllocationRegistry::size() const {
  std::shared_lock lk(mu_);
  return by_start_.size();
}

// ---------------------------------------------------------------------------
// DedicatedStack
// ---------------------------------------------------------------------------

Frame DedicatedStack::enter(std::uint32_t function_id, std::uint32_t frame_size,
                            SimAllocator& alloc) {
  Frame f;
  f.token = next_token_.fetch_add(1);
  f.function_id = function_id;
  f.size = frame_size;
  f.base = frame_size ? alloc.allocate(frame_size) : 0;
  std::lock_guard lk(mu_);
  frames_.emplace(f.token, f);
  by_function_[function_id].insert(f.token);
  if (f.base) by_base_.emplace(f.base, f.token);
  return f;
}

bool DedicatedStack::reclaim(std::uint64_t token, SimAllocator& alloc) {
  Frame f;
  {
    std::lock_guard lk(mu_);
    auto it = frames_.find(token);
    if (it == frames_.end()) return false;
    f = it->second;
    frames_.erase(it);
    by_function_[f.function_id].erase(token);
    if (f.base) by_base_.erase(f.base);
  }
  if (f.base) alloc.release(f.base, f.size);
  return true;
}

std::optional<Frame> DedicatedStack::find(std::uint64_t token) const {
  std::lock_guard lk(mu_);
  auto it = frames_.find(token);
  if (it == frames_.end()) return std::nullopt;
  return it->second;
}

void DedicatedStack::for_each_frame(std::uint32_t function_id,
                                    const std::function<void(const Frame&)>& fn) const {
  std::lock_guard lk(mu_);
  auto it = by_function_.find(function_id);
  if (it == by_function_.end()) return;
  for (std::uint64_t tok : it->second) fn(frames_.at(tok));
}

void DedicatedStack::for_each_frame(const std::function<void(const Frame&)>& fn) const {
  std::lock_guard lk(mu_);
  for (const auto& [tok, f] : frames_) fn(f);
}

std::optional<std::pair<Frame, std::uint64_t>> DedicatedStack::resolve(Address addr) const {
  std::lock_guard lk(mu_);
  auto it = by_base_.upper_bound(addr);
  if (it == by_base_.begin()) return std::nullopt;
  --it;
  const Frame& f = frames_.at(it->second);
  if (addr < f.base + f.size) return std::make_pair(f, addr - f.base);
  return std::nullopt;
}

std::size_t DedicatedStack::live_count() const {
  std::lock_guard lk(mu_);
  return frames_.size();
}

std::size_t DedicatedStack::live_count(std::uint32_t function_id) const {
  std::lock_guard lk(mu_);
  auto it = by_function_.find(function_id);
  return it == by_function_.end() ? 0 : it->second.size();
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

const char* fault_kind_name(FaultKind k) {
  switch (k) {
    case FaultKind::NullDeref: return "null_deref";
    case FaultKind::UnmappedAccess: return "unmapped_access";
    case FaultKind::UnalignedAccess: return "unaligned_access";
    case FaultKind::WriteToFunction: return "write_to_function";
    case FaultKind::FunctionRegionAccess: return "function_region_access";
    case FaultKind::DoubleFree: return "double_free";
    case FaultKind::InvalidFree: return "invalid_free";
    case FaultKind::AllocFailed: return "alloc_failed";
    case FaultKind::CallThroughNonFunction: return "call_through_non_function";
    case FaultKind::CallArityMismatch: return "call_arity_mismatch";
    case FaultKind::StepLimit: return "step_limit";
    case FaultKind::DepthLimit: return "depth_limit";
    case FaultKind::FrameMisuse: return "frame_misuse";
    case FaultKind::StaleRead: return "stale_read";
  }
  return "?";
}

std::string Fault::to_text() const {
  std::ostringstream out;
  out << "fault kind=" << fault_kind_name(kind) << " at=" << function << "#" << instr
      << " addr=0x" << std::hex << addr;
  return out.str();
}

std::string SweepReport::to_text() const {
  std::ostringstream out;
  out << "sweep.nullified_heap " << nullified_heap << "\n"
      << "sweep.nullified_global " << nullified_global << "\n"
      << "sweep.nullified_stack " << nullified_stack << "\n"
      << "sweep.scanned_heap " << scanned_heap << "\n"
      << "sweep.scanned_global " << scanned_global << "\n"
      << "sweep.scanned_stack " << scanned_stack << "\n"
      << "sweep.allocs_processed " << allocs_processed << "\n"
      << "sweep.frees_processed " << frees_processed << "\n"
      << "sweep.frames_reclaimed " << frames_reclaimed << "\n"
      << "sweep.released_bytes " << released_bytes << "\n"
      << "sweep.config_errors " << config_errors << "\n";
  return out.str();
}

std::string ExecutionReport::to_text() const {
  std::ostringstream out;
  out << "mode " << (protected_mode ? "protected" : "unprotected") << "\n"
      << "stack_hooks " << (stack_hooks ? "on" : "off") << "\n"
      << "instructions " << instructions << "\n"
      << "allocs " << allocs << "\n"
      << "frees " << frees << "\n"
      << "frame_enters " << frame_enters << "\n"
      << "stale_reads " << stale_reads << "\n"
      << "null_traps " << null_traps << "\n"
      << "trapped " << (trapped ? 1 : 0) << "\n";
  if (trapped) out << "trap_reason " << trap_reason << "\n";
  out << "peak_live_bytes " << peak_live_bytes << "\n"
      << "peak_quarantined_bytes " << peak_quarantined_bytes << "\n"
      << "registry_overlap_violations " << registry_overlap_violations << "\n"
      << "quarantine_reuse_violations " << quarantine_reuse_violations << "\n"
      << "wall_ms " << wall_ms << "\n"
      << sweep.to_text();
  for (const Fault& f : faults) out << f.to_text() << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// RuntimeSystem
// ---------------------------------------------------------------------------

RuntimeSystem::RuntimeSystem(const RuntimeConfig& cfg, const meta::ObjectPointerTable* metadata)
    : cfg_(cfg), metadata_(metadata), allocator_(memory_) {
  if (cfg_.protected_mode) {
    sweeper_ = std::make_unique<Sweeper>(*this, queue_, metadata_);
    sweeper_thread_ = std::thread([this] { sweeper_->run(); });
  }
}

RuntimeSystem::~RuntimeSystem() { shutdown(); }

Address RuntimeSystem::on_alloc(std::uint32_t static_id, std::uint64_t size) {
  if (size == 0) return 0;
  Address addr = allocator_.allocate(size);
  if (!addr) return 0;
  RuntimeObjectRecord rec{addr, addr + size, size, static_id};
  if (!registry_.insert(rec)) {
    // Overlap with a live record: counted by the registry; surface failure.
    allocator_.release(addr, size);
    return 0;
  }
  if (cfg_.protected_mode) {
    SweeperEvent ev;
    ev.kind = SweeperEvent::Kind::Alloc;
    ev.record = rec;
    queue_.push(ev);
  }
  return addr;
}

FreeResult RuntimeSystem::on_free(Address addr) {
  if (addr == 0) return {true, FaultKind::InvalidFree};  // free(null) is a no-op
  std::optional<RuntimeObjectRecord> rec = registry_.remove(addr);
  if (!rec) {
    bool seen_before = allocator_.tombstone_at(addr).has_value();
    return {false, seen_before ? FaultKind::DoubleFree : FaultKind::InvalidFree};
  }
  if (cfg_.protected_mode) {
    allocator_.quarantine_add(rec->start, rec->size);
    SweeperEvent ev;
    ev.kind = SweeperEvent::Kind::Free;
    ev.record = *rec;
    queue_.push(ev);
    if (cfg_.sync_sweep) quiesce();
  } else {
    allocator_.tombstone_add(rec->start, rec->size);
    if (!cfg_.no_reuse) allocator_.release(rec->start, rec->size);
  }
  return {true, FaultKind::InvalidFree};
}

Frame RuntimeSystem::on_frame_enter(std::uint32_t function_id, std::uint32_t frame_size) {
  return stack_.enter(function_id, frame_size, allocator_);
}

bool RuntimeSystem::on_frame_exit(std::uint64_t token) {
  if (!stack_.find(token)) return false;
  if (cfg_.protected_mode && cfg_.stack_hooks) {
    SweeperEvent ev;
    ev.kind = SweeperEvent::Kind::FrameExit;
    ev.frame_token = token;
    queue_.push(ev);
  } else {
    stack_.reclaim(token, allocator_);
  }
  return true;
}

Address RuntimeSystem::raw_alloc(std::uint64_t size) { return allocator_.allocate(size); }

void RuntimeSystem::set_global_array(std::vector<Address> cells) {
  global_array_ = std::move(cells);
}

void RuntimeSystem::quiesce() {
  if (!cfg_.protected_mode) return;
  std::uint64_t target = queue_.enqueued();
  std::unique_lock lk(progress_mu_);
  progress_cv_.wait(lk, [&] { return processed_ >= target; });
}

void RuntimeSystem::shutdown() {
  if (shut_down_ || !cfg_.protected_mode) {
    shut_down_ = true;
    return;
  }
  shut_down_ = true;
  SweeperEvent ev;
  ev.kind = SweeperEvent::Kind::Shutdown;
  queue_.push(ev);
  if (sweeper_thread_.joinable()) sweeper_thread_.join();
}

SweepReport RuntimeSystem::sweep_report() const {
  return sweeper_ ? sweeper_->report() : SweepReport{};
}

}  // namespace lightde::rt
