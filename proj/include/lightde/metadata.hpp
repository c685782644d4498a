#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lightde/ir.hpp"

namespace lightde::pta {
class PointsToState;
class ObjectTable;
struct Classification;
}  // namespace lightde::pta

namespace lightde::meta {

inline constexpr std::uint32_t kAnyPointerField = 0xffffffffu;

// A static pointer record names one storage cell that may reference the owning
// object: a field of a heap object (by container site and offset, or
// ANY_POINTER_FIELD when only a variable-offset fact exists), a global cell
// (by dense index), or a dedicated-stack slot (by function id and slot id).
struct StaticPointerRecord {
  enum class Kind : std::uint8_t { HeapField = 0, Global = 1, Stack = 2 };

  Kind kind = Kind::HeapField;
  std::uint32_t a = 0;  // HeapField: container static id; Global: index; Stack: function id
  std::uint32_t b = 0;  // HeapField: offset or kAnyPointerField; Stack: slot id

  static StaticPointerRecord heap_field(std::uint32_t container, std::uint32_t offset) {
    return {Kind::HeapField, container, offset};
  }
  static StaticPointerRecord global(std::uint32_t index) { return {Kind::Global, index, 0}; }
  static StaticPointerRecord stack(std::uint32_t function_id, std::uint32_t slot_id) {
    return {Kind::Stack, function_id, slot_id};
  }

  auto operator<=>(const StaticPointerRecord&) const = default;
  std::string to_text() const;
};

// One addressable pointer cell of a global, named `<global>@<offset>`.
// Indices are assigned over cells sorted by (global name, offset).
struct GlobalCell {
  std::string global;
  std::uint32_t global_index = 0;  // index into Module::globals
  std::uint32_t offset = 0;

  bool operator==(const GlobalCell&) const = default;
};

struct GlobalIndexMap {
  std::vector<GlobalCell> cells;  // position == dense index

  std::optional<std::uint32_t> find(std::uint32_t global_index, std::uint32_t offset) const;
  bool operator==(const GlobalIndexMap&) const = default;
};

GlobalIndexMap assign_global_indices(const ir::Module& m);

// Per-function dedicated-stack frame layout. Every alloca of the function is
// carved out of one frame allocation; slots are the pointer-kind cells in
// definition order.
struct FrameLayout {
  std::uint32_t frame_size = 0;
  std::vector<std::uint32_t> alloca_base;    // instruction index -> frame offset (or ~0u)
  std::vector<std::uint32_t> slot_offsets;   // slot id -> frame offset

  std::optional<std::uint32_t> slot_of(std::uint32_t instr, std::uint32_t cell_offset) const;
  // frame offset -> (instruction index, offset within that alloca)
  std::optional<std::pair<std::uint32_t, std::uint32_t>> alloca_at(std::uint32_t frame_off) const;

  std::vector<std::uint32_t> alloca_size;  // instruction index -> nbytes (or 0)
  bool operator==(const FrameLayout& o) const {
    return frame_size == o.frame_size && alloca_base == o.alloca_base &&
           slot_offsets == o.slot_offsets && alloca_size == o.alloca_size;
  }
};

struct FrameLayouts {
  std::vector<FrameLayout> per_function;
  bool operator==(const FrameLayouts&) const = default;
};

FrameLayouts build_frame_layouts(const ir::Module& m);

// Everything the runtime needs about one static heap object: which cells may
// point to it, and how ANY_POINTER_FIELD expands when this object is the
// container (its pointer-typed offsets; no layout means scan every aligned
// cell of the runtime object).
struct ObjectEntry {
  std::uint32_t static_id = 0;
  bool has_layout = false;
  std::vector<std::uint32_t> pointer_field_offsets;
  std::vector<StaticPointerRecord> records;  // sorted, deduplicated

  bool operator==(const ObjectEntry&) const = default;
};

struct FunctionInfo {
  std::string name;
  std::uint32_t frame_size = 0;
  std::vector<std::uint32_t> slot_offsets;

  bool operator==(const FunctionInfo&) const = default;
};

struct ObjectPointerTable {
  std::uint64_t module_hash = 0;
  bool stack_hooks = true;
  std::vector<ObjectEntry> objects;  // position i holds static_id i+1
  GlobalIndexMap globals;
  std::vector<FunctionInfo> functions;

  const ObjectEntry* entry(std::uint32_t static_id) const {
    if (static_id == 0 || static_id > objects.size()) return nullptr;
    return &objects[static_id - 1];
  }
  bool operator==(const ObjectPointerTable&) const = default;
};

struct MetadataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// `.ldem` binary form: little-endian, length-prefixed, versioned. Identical
// tables serialize to identical bytes.
std::vector<std::uint8_t> serialize_tables(const ObjectPointerTable& t);
ObjectPointerTable deserialize_tables(const std::vector<std::uint8_t>& bytes);

ObjectPointerTable build_tables(const pta::PointsToState& state, const pta::Classification& cls,
                                const ir::Module& m, const pta::ObjectTable& objs,
                                const GlobalIndexMap& gmap, const FrameLayouts& frames,
                                bool stack_hooks);

}  // namespace lightde::meta
