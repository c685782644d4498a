#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lightde::ir {

using TypeId = std::uint32_t;
inline constexpr TypeId kInvalidType = 0xffffffffu;

// All offsets are byte-granular; pointers are 8 bytes (64-bit target).
inline constexpr std::uint32_t kPointerBytes = 8;

enum class TypeKind : std::uint8_t { Scalar, Pointer, Struct, Array, Function };

struct FieldDef {
  std::string name;  // optional; empty when the field is addressed by index only
  std::uint32_t offset = 0;
  TypeId type = kInvalidType;

  bool operator==(const FieldDef&) const = default;
};

// Nested aggregates are flattened to absolute byte offsets at registration
// time; `all_offsets` lists every sub-object offset (composites and leaves),
// `pointer_offsets` the leaf cells of pointer kind.
struct TypeDef {
  std::string name;
  TypeKind kind = TypeKind::Scalar;
  std::uint32_t byte_size = 0;
  std::vector<FieldDef> fields;  // structs: declared fields; arrays: one per element
  TypeId elem_type = kInvalidType;  // arrays only
  std::uint32_t elem_count = 0;     // arrays only

  std::vector<std::uint32_t> all_offsets;
  std::vector<std::uint32_t> pointer_offsets;

  bool operator==(const TypeDef& o) const {
    return name == o.name && kind == o.kind && byte_size == o.byte_size &&
           fields == o.fields && elem_type == o.elem_type && elem_count == o.elem_count;
  }
};

enum class Opcode : std::uint8_t {
  Alloca,  // %p = alloca T, nbytes
  Malloc,  // %p = malloc nbytes
  Copy,    // %p = copy %q
  Cast,    // %p = cast T, %q        (T is the pointee/object type)
  Load,    // %p = load %q
  Store,   // store %p, %q           (*p = q)
  Phi,     // %p = phi %q, %h
  Field,   // %p = field %q, T.path  |  field %q, ?        |  field %q, ?<off>
  Call,    // [%p =] call callee(args...)   callee is a register, function, or `free`
  Ret,     // ret [%p]
};

enum class OperandKind : std::uint8_t { Register, Global, Function };

struct Operand {
  OperandKind kind = OperandKind::Register;
  std::uint32_t index = 0;  // register index within function, or global/function index

  bool operator==(const Operand&) const = default;
};

struct Instruction {
  Opcode op = Opcode::Ret;
  std::int32_t result = -1;  // defining register index, -1 if none
  std::vector<Operand> args;
  TypeId type = kInvalidType;  // Alloca, Cast
  std::uint64_t size = 0;      // Alloca, Malloc: nbytes

  // Field only. A concrete access stores the resolved absolute offset and the
  // path it was written with; an unknown (variable-index) access sets
  // `field_unknown` and uses `field_offset` as the offset the simulated
  // execution resolves it to.
  bool field_unknown = false;
  std::uint32_t field_offset = 0;
  TypeId field_type = kInvalidType;
  std::string field_path;

  bool is_free = false;  // Call to the `free` intrinsic

  std::uint32_t line = 0;  // source line, informational

  bool operator==(const Instruction& o) const {
    return op == o.op && result == o.result && args == o.args && type == o.type &&
           size == o.size && field_unknown == o.field_unknown &&
           field_offset == o.field_offset && field_type == o.field_type &&
           field_path == o.field_path && is_free == o.is_free;
  }
};

struct Function {
  std::string name;
  std::uint32_t param_count = 0;       // registers [0, param_count) are parameters
  std::vector<std::string> reg_names;  // register index -> name (without '%')
  std::vector<Instruction> body;
  bool is_entry = false;
  bool is_extern = false;  // declared only; calls get conservative treatment

  bool operator==(const Function& o) const {
    return name == o.name && param_count == o.param_count && reg_names == o.reg_names &&
           body == o.body && is_entry == o.is_entry && is_extern == o.is_extern;
  }
};

struct GlobalDef {
  std::string name;
  TypeId type = kInvalidType;

  bool operator==(const GlobalDef&) const = default;
};

struct Module {
  std::vector<TypeDef> types;
  std::vector<GlobalDef> globals;
  std::vector<Function> functions;
  std::uint32_t entry = 0;  // index into functions

  std::unordered_map<std::string, TypeId> type_by_name;
  std::unordered_map<std::string, std::uint32_t> global_by_name;
  std::unordered_map<std::string, std::uint32_t> function_by_name;

  const TypeDef& type(TypeId id) const { return types[id]; }
  std::optional<TypeId> find_type(std::string_view name) const;

  bool operator==(const Module& o) const {
    return types == o.types && globals == o.globals && functions == o.functions &&
           entry == o.entry;
  }
};

// Computes flattened offset lists for a fully-specified TypeDef whose field
// types are already registered. Called by the parser and by programmatic
// module builders.
void finalize_type(Module& m, TypeDef& t);

// Registers `t` (after finalize) and returns its id. Throws std::invalid_argument
// on duplicate names or malformed layouts.
TypeId add_type(Module& m, TypeDef t);

// Resolves a dot-separated field path ("arr", "1.0", "2") against a type to
// an absolute byte offset. Empty path resolves to 0. Returns std::nullopt for
// paths that do not resolve.
std::optional<std::uint32_t> offset_of(const Module& m, TypeId type, std::string_view path);

// The set of byte offsets a type owns: {0} for scalar/pointer/function types,
// flattened sub-object offsets for aggregates.
const std::vector<std::uint32_t>& type_offsets(const Module& m, TypeId type);

// Structural checks beyond grammar: operand arity per opcode, single entry,
// ret placement, register single-assignment, allocation sizes. Returns a list
// of human-readable problems; empty means valid.
std::vector<std::string> validate(const Module& m);

// Canonical text form; parse_module(print_module(m)) == m for valid modules.
std::string print_module(const Module& m);

// FNV-1a over the canonical text; used to pair metadata files with modules.
std::uint64_t module_hash(const Module& m);

// Display helpers shared by the printer, facts export, and diagnostics.
std::string operand_name(const Module& m, const Function& f, const Operand& op);

}  // namespace lightde::ir
