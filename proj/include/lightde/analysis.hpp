#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lightde/ir.hpp"
#include "lightde/metadata.hpp"

namespace lightde::pta {

enum class SiteKind : std::uint8_t { Heap, Stack, Global, Function };

// One abstract object per allocation site (heap/stack), global, or function.
// Ids and display names are stable for a given module.
struct AbstractObject {
  std::uint32_t id = 0;
  SiteKind kind = SiteKind::Heap;
  std::string name;       // o1 / s1 / g$name / fn$name
  std::int32_t func = -1;   // defining function index; -1 for globals/functions
  std::int32_t instr = -1;  // defining instruction index; -1 for globals/functions
  std::uint32_t ref = 0;    // global index / function index when site-less
  ir::TypeId declared_type = ir::kInvalidType;  // alloca/global declared type
  std::uint32_t heap_ordinal = 0;  // 1-based over heap sites; static id in metadata
  std::uint64_t alloc_size = 0;    // declared nbytes for alloca/malloc sites
};

// Deterministic enumeration of every abstract object in a module: globals in
// declaration order, then functions, then allocation sites in (function,
// instruction) order. Extern call sites count as heap sites (the conservative
// unknown allocation).
class ObjectTable {
 public:
  static ObjectTable build(const ir::Module& m);

  const std::vector<AbstractObject>& objects() const { return objects_; }
  const AbstractObject& object(std::uint32_t id) const { return objects_[id]; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(objects_.size()); }

  // -1 when the instruction allocates nothing.
  std::int32_t site_at(std::uint32_t func, std::uint32_t instr) const;
  std::uint32_t global_object(std::uint32_t global_index) const;
  std::uint32_t function_object(std::uint32_t function_index) const;
  std::uint32_t heap_count() const { return heap_count_; }
  // heap ordinal (1-based) -> object id
  std::uint32_t heap_object(std::uint32_t ordinal) const { return heap_by_ordinal_[ordinal - 1]; }
  // conservative return object of an extern function, if any
  std::optional<std::uint32_t> extern_return(std::uint32_t func) const;

 private:
  std::vector<AbstractObject> objects_;
  std::vector<std::vector<std::int32_t>> site_at_;
  std::vector<std::uint32_t> global_obj_;
  std::vector<std::uint32_t> function_obj_;
  std::vector<std::uint32_t> heap_by_ordinal_;
  std::map<std::uint32_t, std::uint32_t> extern_return_;
  std::uint32_t heap_count_ = 0;
};

using NodeId = std::uint32_t;
inline constexpr std::uint32_t kStarOffset = 0xffffffffu;

enum class NodeKind : std::uint8_t { Var, Object, FieldObj, Ret };

struct NodeInfo {
  NodeKind kind = NodeKind::Var;
  std::string name;
  std::uint32_t object = 0;  // Object/FieldObj: abstract object id
  std::uint32_t offset = 0;  // FieldObj: byte offset or kStarOffset
};

struct CallEdge {
  std::uint32_t caller_func = 0;
  std::uint32_t instr = 0;
  std::uint32_t callee_func = 0;

  auto operator<=>(const CallEdge&) const = default;
};

// Result of a solving stage: points-to sets over the node universe, per-object
// type sets, and the resolved call graph. Node ids are solver-internal; stable
// identification goes through display names or the (object, offset) lookups.
class PointsToState {
 public:
  const std::vector<NodeInfo>& nodes() const { return nodes_; }
  const std::set<NodeId>& points_to(NodeId n) const { return pt_[n]; }
  const std::set<ir::TypeId>& type_set(std::uint32_t object) const { return types_[object]; }
  const std::set<CallEdge>& call_edges() const { return call_edges_; }
  const std::vector<std::string>& diagnostics() const { return diags_; }

  std::optional<NodeId> var_node(std::uint32_t func, std::uint32_t reg) const;
  NodeId global_var_node(std::uint32_t global_index) const;
  NodeId function_var_node(std::uint32_t function_index) const;
  NodeId object_node(std::uint32_t object_id) const;
  std::optional<NodeId> field_node(std::uint32_t object_id, std::uint32_t offset) const;

  const std::string& node_name(NodeId n) const { return nodes_[n].name; }
  std::uint32_t node_count() const { return static_cast<std::uint32_t>(nodes_.size()); }

 private:
  friend class Solver;
  std::vector<NodeInfo> nodes_;
  std::vector<std::set<NodeId>> pt_;
  std::vector<std::set<ir::TypeId>> types_;
  std::set<CallEdge> call_edges_;
  std::vector<std::string> diags_;
  std::vector<std::vector<NodeId>> var_base_;  // per function: reg -> node
  std::vector<NodeId> global_var_;
  std::vector<NodeId> function_var_;
  std::vector<NodeId> object_node_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, NodeId> field_nodes_;
};

struct SolveOptions {
  enum class Order { Fifo, Lifo } order = Order::Fifo;
};

// Stage 1: full rule set with type accretion on casts.
PointsToState solve_stage1(const ir::Module& m, const ObjectTable& objs,
                           const SolveOptions& opt = {});

// Stage 2: casts degrade to copies, field accesses are filtered against the
// stage-1 type sets; objects with empty type sets are never filtered.
PointsToState solve_stage2(const ir::Module& m, const ObjectTable& objs,
                           const PointsToState& stage1, const SolveOptions& opt = {});

// A pointer-valued storage location that may point to at least one heap
// object, mapped to its runtime record form.
struct ClassifiedLocation {
  meta::StaticPointerRecord record;
  NodeId node = 0;
  std::set<std::uint32_t> heap_targets;  // heap ordinals the location may reference
};

struct Classification {
  std::vector<ClassifiedLocation> heap_resident;
  std::vector<ClassifiedLocation> global_cells;
  std::vector<ClassifiedLocation> stack_slots;
  std::vector<std::string> diagnostics;  // locations without a runtime cell
};

Classification classify_pointers(const PointsToState& state, const ir::Module& m,
                                 const ObjectTable& objs, const meta::GlobalIndexMap& gmap,
                                 const meta::FrameLayouts& frames);

// Static columns of the per-benchmark statistics table.
struct StatsRecord {
  std::uint64_t static_objects = 0;  // heap allocation sites
  std::uint64_t free_sites = 0;
  std::uint64_t static_heap_pointers = 0;
  std::uint64_t static_global_pointers = 0;
  std::uint64_t static_stack_pointers = 0;

  bool operator==(const StatsRecord&) const = default;
  std::string to_text() const;
};

StatsRecord emit_statistics(const Classification& cls, const ir::Module& m,
                            const ObjectTable& objs);

// Line-oriented facts for differential testing: `pt <node> -> { ... }`,
// `typeset <obj> -> { ... }`, `call <site> -> <callee>`. Lines are sorted.
std::string export_facts(const PointsToState& state, const ir::Module& m,
                         const ObjectTable& objs);

// True when the state's pt sets justify "the cell at `loc_obj`+`loc_off` may
// hold an address inside `tgt_obj` at offset `tgt_off`", consulting the head,
// exact-field, and star nodes on both sides. Used by the execution-soundness
// differential.
bool state_covers(const PointsToState& state, std::uint32_t loc_obj, std::uint32_t loc_off,
                  std::uint32_t tgt_obj, std::uint32_t tgt_off);

}  // namespace lightde::pta
