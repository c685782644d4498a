#include "lightde/ir.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lightde::ir {

std::optional<TypeId> Module::find_type(std::string_view name) const {
  auto it = type_by_name.find(std::string(name));
  if (it == type_by_name.end()) return std::nullopt;
  return it->second;
}

namespace {

void collect_offsets(const Module& m, const TypeDef& t, std::uint32_t base,
                     std::vector<std::uint32_t>& all, std::vector<std::uint32_t>& ptrs) {
  switch (t.kind) {
    case TypeKind::Pointer:
      ptrs.push_back(base);
      break;
    case TypeKind::Scalar:
    case TypeKind::Function:
      break;
    case TypeKind::Struct:
    case TypeKind::Array:
      for (const FieldDef& f : t.fields) {
        all.push_back(base + f.offset);
        collect_offsets(m, m.type(f.type), base + f.offset, all, ptrs);
      }
      break;
  }
}

void sort_unique(std::vector<std::uint32_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

void finalize_type(Module& m, TypeDef& t) {
  t.all_offsets.clear();
  t.pointer_offsets.clear();
  if (t.kind == TypeKind::Scalar || t.kind == TypeKind::Pointer ||
      t.kind == TypeKind::Function) {
    // Scalars own offset {0} so unstructured access to them filters uniformly.
    t.all_offsets.push_back(0);
    if (t.kind == TypeKind::Pointer) t.pointer_offsets.push_back(0);
    return;
  }
  collect_offsets(m, t, 0, t.all_offsets, t.pointer_offsets);
  sort_unique(t.all_offsets);
  sort_unique(t.pointer_offsets);
}

TypeId add_type(Module& m, TypeDef t) {
  if (m.type_by_name.count(t.name))
    throw std::invalid_argument("duplicate type name: " + t.name);
  if (t.kind == TypeKind::Pointer || t.kind == TypeKind::Function)
    t.byte_size = kPointerBytes;
  if (t.kind == TypeKind::Array) {
    const TypeDef& elem = m.type(t.elem_type);
    t.fields.clear();
    for (std::uint32_t i = 0; i < t.elem_count; ++i)
      t.fields.push_back(FieldDef{"", i * elem.byte_size, t.elem_type});
    t.byte_size = t.elem_count * elem.byte_size;
  }
  std::uint32_t prev_end = 0;
  bool first = true;
  for (const FieldDef& f : t.fields) {
    const TypeDef& ft = m.type(f.type);
    if (!first && f.offset < prev_end)
      throw std::invalid_argument("type " + t.name + ": field offsets must be increasing");
    if (f.offset + ft.byte_size > t.byte_size)
      throw std::invalid_argument("type " + t.name + ": field does not fit in byte_size");
    prev_end = f.offset + ft.byte_size;
    first = false;
  }
  finalize_type(m, t);
  TypeId id = static_cast<TypeId>(m.types.size());
  m.type_by_name.emplace(t.name, id);
  m.types.push_back(std::move(t));
  return id;
}

std::optional<std::uint32_t> offset_of(const Module& m, TypeId type, std::string_view path) {
  std::uint32_t off = 0;
  TypeId cur = type;
  std::size_t pos = 0;
  while (pos < path.size()) {
    std::size_t dot = path.find('.', pos);
    std::string_view comp = path.substr(pos, dot == std::string_view::npos ? path.size() - pos : dot - pos);
    pos = dot == std::string_view::npos ? path.size() : dot + 1;
    if (comp.empty()) return std::nullopt;
    const TypeDef& t = m.type(cur);
    if (t.fields.empty()) return std::nullopt;
    const FieldDef* hit = nullptr;
    std::uint32_t idx = 0;
    auto r = std::from_chars(comp.data(), comp.data() + comp.size(), idx);
    if (r.ec == std::errc() && r.ptr == comp.data() + comp.size()) {
      if (idx >= t.fields.size()) return std::nullopt;
      hit = &t.fields[idx];
    } else {
      for (const FieldDef& f : t.fields)
        if (f.name == comp) { hit = &f; break; }
      if (!hit) return std::nullopt;
    }
    off += hit->offset;
    cur = hit->type;
  }
  return off;
}

const std::vector<std::uint32_t>& type_offsets(const Module& m, TypeId type) {
  return m.type(type).all_offsets;
}

namespace {

struct ArityRule {
  std::size_t args;
  bool result_required;
  bool result_allowed;
};

ArityRule arity_rule(Opcode op) {
  switch (op) {
    case Opcode::Alloca: return {0, true, true};
    case Opcode::Malloc: return {0, true, true};
    case Opcode::Copy:   return {1, true, true};
    case Opcode::Cast:   return {1, true, true};
    case Opcode::Load:   return {1, true, true};
    case Opcode::Store:  return {2, false, false};
    case Opcode::Phi:    return {2, true, true};
    case Opcode::Field:  return {1, true, true};
    case Opcode::Call:   return {0, false, true};  // args checked separately
    case Opcode::Ret:    return {0, false, false};
  }
  return {0, false, false};
}

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Alloca: return "alloca";
    case Opcode::Malloc: return "malloc";
    case Opcode::Copy:   return "copy";
    case Opcode::Cast:   return "cast";
    case Opcode::Load:   return "load";
    case Opcode::Store:  return "store";
    case Opcode::Phi:    return "phi";
    case Opcode::Field:  return "field";
    case Opcode::Call:   return "call";
    case Opcode::Ret:    return "ret";
  }
  return "?";
}

}  // namespace

std::vector<std::string> validate(const Module& m) {
  std::vector<std::string> problems;
  auto complain = [&](const Function& f, std::size_t idx, const std::string& what) {
    problems.push_back(f.name + "#" + std::to_string(idx) + ": " + what);
  };

  std::size_t entries = 0;
  for (const Function& f : m.functions) entries += f.is_entry ? 1 : 0;
  if (entries != 1) problems.push_back("module must have exactly one entry function");
  if (entries == 1 && m.functions[m.entry].param_count != 0)
    problems.push_back("entry function must take no parameters");

  for (const Function& f : m.functions) {
    if (f.is_extern) {
      if (!f.body.empty()) problems.push_back(f.name + ": extern function must have no body");
      continue;
    }
    std::vector<bool> defined(f.reg_names.size(), false);
    for (std::uint32_t i = 0; i < f.param_count; ++i) defined[i] = true;
    for (std::size_t i = 0; i < f.body.size(); ++i) {
      const Instruction& ins = f.body[i];
      ArityRule rule = arity_rule(ins.op);
      if (ins.op == Opcode::Call) {
        if (ins.args.empty() && !ins.is_free)
          complain(f, i, "call needs a callee operand");
      } else if (ins.op == Opcode::Ret) {
        if (ins.args.size() > 1) complain(f, i, "ret takes at most one operand");
        if (i + 1 != f.body.size()) complain(f, i, "ret must be the last instruction");
      } else if (ins.args.size() != rule.args) {
        complain(f, i, std::string(opcode_name(ins.op)) + " expects " +
                           std::to_string(rule.args) + " operands");
      }
      if (rule.result_required && ins.result < 0)
        complain(f, i, std::string(opcode_name(ins.op)) + " must define a register");
      if (!rule.result_allowed && ins.result >= 0)
        complain(f, i, std::string(opcode_name(ins.op)) + " cannot define a register");
      if ((ins.op == Opcode::Alloca || ins.op == Opcode::Malloc) && ins.size == 0)
        complain(f, i, "allocation size must be positive");
      if (ins.op == Opcode::Alloca) {
        if (ins.type == kInvalidType || ins.type >= m.types.size())
          complain(f, i, "alloca needs a registered type");
        else if (ins.size < m.type(ins.type).byte_size)
          complain(f, i, "alloca size smaller than its type");
      }
      if (ins.op == Opcode::Cast && (ins.type == kInvalidType || ins.type >= m.types.size()))
        complain(f, i, "cast needs a registered type");
      for (const Operand& a : ins.args) {
        if (a.kind == OperandKind::Register) {
          if (a.index >= defined.size() || !defined[a.index])
            complain(f, i, "use of undefined register");
        } else if (a.kind == OperandKind::Global) {
          if (a.index >= m.globals.size()) complain(f, i, "bad global reference");
        } else if (a.index >= m.functions.size()) {
          complain(f, i, "bad function reference");
        }
      }
      if (ins.result >= 0) {
        if (static_cast<std::size_t>(ins.result) >= defined.size()) {
          complain(f, i, "bad result register");
        } else if (defined[ins.result]) {
          complain(f, i, "register assigned more than once");
        } else {
          defined[ins.result] = true;
        }
      }
    }
  }
  return problems;
}

std::string operand_name(const Module& m, const Function& f, const Operand& op) {
  switch (op.kind) {
    case OperandKind::Register: return "%" + f.reg_names[op.index];
    case OperandKind::Global: return m.globals[op.index].name;
    case OperandKind::Function: return m.functions[op.index].name;
  }
  return "?";
}

namespace {

void print_type(const Module& m, const TypeDef& t, std::ostringstream& out) {
  out << "type " << t.name << " = ";
  switch (t.kind) {
    case TypeKind::Scalar:
      out << "scalar " << t.byte_size;
      break;
    case TypeKind::Pointer:
      out << "ptr";
      break;
    case TypeKind::Function:
      out << "functype";
      break;
    case TypeKind::Array:
      out << "array " << m.type(t.elem_type).name << " x " << t.elem_count;
      break;
    case TypeKind::Struct: {
      out << "struct {";
      bool first = true;
      for (const FieldDef& f : t.fields) {
        out << (first ? " " : ", ");
        if (!f.name.empty()) out << f.name << ": ";
        out << m.type(f.type).name << " @" << f.offset;
        first = false;
      }
      out << " } size " << t.byte_size;
      break;
    }
  }
  out << "\n";
}

void print_instruction(const Module& m, const Function& f, const Instruction& ins,
                       std::ostringstream& out) {
  out << "  ";
  if (ins.result >= 0) out << "%" << f.reg_names[ins.result] << " = ";
  switch (ins.op) {
    case Opcode::Alloca:
      out << "alloca " << m.type(ins.type).name << ", " << ins.size;
      break;
    case Opcode::Malloc:
      out << "malloc " << ins.size;
      break;
    case Opcode::Copy:
      out << "copy " << operand_name(m, f, ins.args[0]);
      break;
    case Opcode::Cast:
      out << "cast " << m.type(ins.type).name << ", " << operand_name(m, f, ins.args[0]);
      break;
    case Opcode::Load:
      out << "load " << operand_name(m, f, ins.args[0]);
      break;
    case Opcode::Store:
      out << "store " << operand_name(m, f, ins.args[0]) << ", "
          << operand_name(m, f, ins.args[1]);
      break;
    case Opcode::Phi:
      out << "phi " << operand_name(m, f, ins.args[0]) << ", "
          << operand_name(m, f, ins.args[1]);
      break;
    case Opcode::Field:
      out << "field " << operand_name(m, f, ins.args[0]) << ", ";
      if (ins.field_unknown) {
        out << "?";
        if (ins.field_offset != 0) out << ins.field_offset;
      } else {
        out << m.type(ins.field_type).name;
        if (!ins.field_path.empty()) out << "." << ins.field_path;
      }
      break;
    case Opcode::Call: {
      out << "call ";
      if (ins.is_free) {
        out << "free";
      } else {
        out << operand_name(m, f, ins.args[0]);
      }
      out << "(";
      for (std::size_t i = ins.is_free ? 0 : 1; i < ins.args.size(); ++i) {
        if (i > (ins.is_free ? 0u : 1u)) out << ", ";
        out << operand_name(m, f, ins.args[i]);
      }
      out << ")";
      break;
    }
    case Opcode::Ret:
      out << "ret";
      if (!ins.args.empty()) out << " " << operand_name(m, f, ins.args[0]);
      break;
  }
  out << "\n";
}

}  // namespace

std::string print_module(const Module& m) {
  std::ostringstream out;
  for (const TypeDef& t : m.types) print_type(m, t, out);
  for (const GlobalDef& g : m.globals)
    out << "global " << g.name << " : " << m.type(g.type).name << "\n";
  for (const Function& f : m.functions) {
    if (f.is_extern) {
      out << "extern func " << f.name << "(";
      for (std::uint32_t i = 0; i < f.param_count; ++i)
        out << (i ? ", %" : "%") << f.reg_names[i];
      out << ")\n";
      continue;
    }
    out << "func " << f.name << "(";
    for (std::uint32_t i = 0; i < f.param_count; ++i)
      out << (i ? ", %" : "%") << f.reg_names[i];
    out << ")" << (f.is_entry ? " entry" : "") << " {\n";
    for (const Instruction& ins : f.body) print_instruction(m, f, ins, out);
    out << "}\n";
  }
  return out.str();
}

std::uint64_t module_hash(const Module& m) {
  std::string text = print_module(m);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace lightde::ir
