#include "lightde/sweeper.hpp"

namespace lightde::rt {

Sweeper::Sweeper(RuntimeSystem& rt, MpscQueue<SweeperEvent>& queue,
                 const meta::ObjectPointerTable* metadata)
    : rt_(rt), queue_(queue), metadata_(metadata) {}

void Sweeper::run() {
  for (;;) {
    SweeperEvent ev = queue_.pop();
    bool stop = false;
    switch (ev.kind) {
      case SweeperEvent::Kind::Alloc:
        handle_alloc(ev.record);
        break;
      case SweeperEvent::Kind::Free:
        handle_free(ev.record);
        break;
      case SweeperEvent::Kind::FrameExit:
        handle_frame_exit(ev.function_id, ev.frame_token);
        break;
      case SweeperEvent::Kind::Shutdown:
        stop = true;
        break;
    }
    {
      std::lock_guard lk(rt_.progress_mu_);
      ++rt_.processed_;
    }
    rt_.progress_cv_.notify_all();
    if (stop) break;
  }
}

std::vector<RuntimeObjectRecord> Sweeper::grouped(std::uint32_t static_id) const {
  std::lock_guard lk(grouping_mu_);
  std::vector<RuntimeObjectRecord> out;
  auto it = grouping_.find(static_id);
  if (it != grouping_.end())
    for (const auto& [start, rec] : it->second) out.push_back(rec);
  return out;
}

void Sweeper::handle_alloc(const RuntimeObjectRecord& rec) {
  {
    std::lock_guard lk(grouping_mu_);
    grouping_[rec.static_id][rec.start] = rec;
  }
  ++report_.allocs_processed;
}

void Sweeper::check_cell(Address cell_addr, const RuntimeObjectRecord& freed,
                         std::uint64_t& scanned, std::uint64_t& nullified) {
  std::atomic<Word>* cell = rt_.memory().cell(cell_addr);
  if (!cell) return;
  ++scanned;
  Word value = cell->load(std::memory_order_relaxed);
  if (value >= freed.start && value < freed.end) {
    cell->store(0, std::memory_order_relaxed);
    ++nullified;
  }
}

void Sweeper::nullify_heap_fields(const meta::StaticPointerRecord& r,
                                  const RuntimeObjectRecord& freed,
                                  const std::vector<RuntimeObjectRecord>& holders) {
  const meta::ObjectEntry* container = metadata_ ? metadata_->entry(r.a) : nullptr;
  if (!container) {
    ++report_.config_errors;
    return;
  }
  for (const RuntimeObjectRecord& holder : holders) {
    if (r.b != meta::kAnyPointerField) {
      if (static_cast<std::uint64_t>(r.b) + 8 <= holder.size)
        check_cell(holder.start + r.b, freed, report_.scanned_heap, report_.nullified_heap);
      continue;
    }
    if (container->has_layout) {
      for (std::uint32_t off : container->pointer_field_offsets)
        if (static_cast<std::uint64_t>(off) + 8 <= holder.size)
          check_cell(holder.start + off, freed, report_.scanned_heap, report_.nullified_heap);
    } else {
      // No structural information: check every aligned cell of the object.
      for (std::uint64_t off = 0; off + 8 <= holder.size; off += 8)
        check_cell(holder.start + off, freed, report_.scanned_heap, report_.nullified_heap);
    }
  }
}

void Sweeper::nullify_global(const meta::StaticPointerRecord& r,
                             const RuntimeObjectRecord& freed) {
  const std::vector<Address>& cells = rt_.global_array();
  if (r.a >= cells.size()) {
    ++report_.config_errors;
    return;
  }
  if (cells[r.a])
    check_cell(cells[r.a], freed, report_.scanned_global, report_.nullified_global);
}

void Sweeper::nullify_stack(const meta::StaticPointerRecord& r,
                            const RuntimeObjectRecord& freed) {
  if (!metadata_ || r.a >= metadata_->functions.size() ||
      r.b >= metadata_->functions[r.a].slot_offsets.size()) {
    ++report_.config_errors;
    return;
  }
  std::uint32_t slot_off = metadata_->functions[r.a].slot_offsets[r.b];
  rt_.stack().for_each_frame(r.a, [&](const Frame& f) {
    if (!f.base || static_cast<std::uint64_t>(slot_off) + 8 > f.size) return;
    check_cell(f.base + slot_off, freed, report_.scanned_stack, report_.nullified_stack);
  });
}

void Sweeper::handle_free(const RuntimeObjectRecord& rec) {
  const meta::ObjectEntry* entry = metadata_ ? metadata_->entry(rec.static_id) : nullptr;
  // Gather each referenced container's live holders once, under one lock.
  std::map<std::uint32_t, std::vector<RuntimeObjectRecord>> holders;
  {
    std::lock_guard lk(grouping_mu_);
    // The freed object is dead: never scan its own cells.
    auto it = grouping_.find(rec.static_id);
    if (it != grouping_.end()) it->second.erase(rec.start);
    if (entry) {
      for (const meta::StaticPointerRecord& r : entry->records) {
        if (r.kind != meta::StaticPointerRecord::Kind::HeapField) continue;
        auto [hit, fresh] = holders.try_emplace(r.a);
        if (!fresh) continue;
        auto git = grouping_.find(r.a);
        if (git != grouping_.end())
          for (const auto& [start, hrec] : git->second) hit->second.push_back(hrec);
      }
    }
  }
  if (!entry) {
    ++report_.config_errors;
  } else {
    for (const meta::StaticPointerRecord& r : entry->records) {
      switch (r.kind) {
        case meta::StaticPointerRecord::Kind::HeapField:
          nullify_heap_fields(r, rec, holders.at(r.a));
          break;
        case meta::StaticPointerRecord::Kind::Global:
          nullify_global(r, rec);
          break;
        case meta::StaticPointerRecord::Kind::Stack:
          nullify_stack(r, rec);
          break;
      }
    }
  }
  // Only now may the range be reused.
  rt_.allocator().quarantine_remove(rec.start);
  rt_.allocator().release(rec.start, rec.size);
  report_.released_bytes += rec.size;
  ++report_.frees_processed;
}

void Sweeper::handle_frame_exit(std::uint32_t, std::uint64_t token) {
  if (rt_.stack().reclaim(token, rt_.allocator()))
    ++report_.frames_reclaimed;
  else
    ++report_.config_errors;
}

}  // namespace lightde::rt
