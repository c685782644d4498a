#include "lightde/parser.hpp"

#include <cctype>
#include <charconv>
#include <set>
#include <unordered_map>

namespace lightde::ir {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  std::uint32_t line;

  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  bool done() {
    skip_ws();
    return pos >= text.size();
  }
  std::uint32_t col() const { return static_cast<std::uint32_t>(pos + 1); }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line, col(), what); }

  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }
  bool eat_word(std::string_view w) {
    skip_ws();
    if (text.compare(pos, w.size(), w) == 0 &&
        (pos + w.size() >= text.size() || !ident_char(text[pos + w.size()]))) {
      pos += w.size();
      return true;
    }
    return false;
  }
  std::string ident() {
    skip_ws();
    if (pos >= text.size() || !ident_start(text[pos])) fail("expected identifier");
    std::size_t start = pos;
    while (pos < text.size() && ident_char(text[pos])) ++pos;
    return std::string(text.substr(start, pos - start));
  }
  std::uint64_t number() {
    skip_ws();
    std::uint64_t v = 0;
    auto r = std::from_chars(text.data() + pos, text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr == text.data() + pos) fail("expected number");
    pos = static_cast<std::size_t>(r.ptr - text.data());
    return v;
  }
};

struct FunctionCtx {
  Function* fn = nullptr;
  std::unordered_map<std::string, std::uint32_t> regs;
};

class Parser {
 public:
  explicit Parser(std::string_view text) {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(start, end - start);
      std::size_t comment = line.find(';');
      if (comment != std::string_view::npos) line = line.substr(0, comment);
      lines_.push_back(line);
      if (end == text.size()) break;
      start = end + 1;
    }
  }

  Module run() {
    prescan_functions();
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      Cursor c{lines_[i], 0, static_cast<std::uint32_t>(i + 1)};
      if (c.done()) continue;
      if (c.eat_word("type")) {
        parse_type(c);
      } else if (c.eat_word("global")) {
        parse_global(c);
      } else if (c.eat_word("extern")) {
        parse_extern_header(c);
      } else if (c.eat_word("func")) {
        parse_function_header(c);
      } else if (c.eat('}')) {
        if (!cur_.fn) c.fail("'}' outside function");
        cur_ = FunctionCtx{};
        if (!c.done()) c.fail("trailing text after '}'");
      } else {
        if (!cur_.fn) c.fail("instruction outside function");
        parse_instruction(c);
      }
    }
    if (cur_.fn) throw ParseError(static_cast<std::uint32_t>(lines_.size()), 1,
                                  "unterminated function body");
    return std::move(mod_);
  }

 private:
  void prescan_functions() {
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      Cursor c{lines_[i], 0, static_cast<std::uint32_t>(i + 1)};
      if (c.done()) continue;
      bool is_extern = c.eat_word("extern");
      if (!c.eat_word("func")) continue;
      std::string name = c.ident();
      if (name == "free") c.fail("'free' is a reserved intrinsic name");
      if (mod_.function_by_name.count(name)) c.fail("duplicate function: " + name);
      mod_.function_by_name.emplace(name, static_cast<std::uint32_t>(mod_.functions.size()));
      Function f;
      f.name = name;
      f.is_extern = is_extern;
      mod_.functions.push_back(std::move(f));
    }
  }

  void parse_type(Cursor& c) {
    if (cur_.fn) c.fail("type declaration inside function body");
    TypeDef t;
    t.name = c.ident();
    if (mod_.type_by_name.count(t.name)) c.fail("duplicate type: " + t.name);
    c.expect('=');
    if (c.eat_word("scalar")) {
      t.kind = TypeKind::Scalar;
      t.byte_size = static_cast<std::uint32_t>(c.number());
      if (t.byte_size == 0) c.fail("scalar size must be positive");
    } else if (c.eat_word("ptr")) {
      t.kind = TypeKind::Pointer;
    } else if (c.eat_word("functype")) {
      t.kind = TypeKind::Function;
    } else if (c.eat_word("array")) {
      t.kind = TypeKind::Array;
      t.elem_type = type_ref(c);
      if (!c.eat_word("x")) c.fail("expected 'x' in array type");
      t.elem_count = static_cast<std::uint32_t>(c.number());
      if (t.elem_count == 0) c.fail("array count must be positive");
    } else if (c.eat_word("struct")) {
      t.kind = TypeKind::Struct;
      c.expect('{');
      if (!c.eat('}')) {
        do {
          FieldDef f;
          std::string first = c.ident();
          if (c.eat(':')) {
            f.name = first;
            f.type = type_ref_named(c, c.ident());
          } else {
            f.type = type_ref_named(c, first);
          }
          c.expect('@');
          f.offset = static_cast<std::uint32_t>(c.number());
          t.fields.push_back(std::move(f));
        } while (c.eat(','));
        c.expect('}');
      }
      if (!c.eat_word("size")) c.fail("expected 'size' after struct fields");
      t.byte_size = static_cast<std::uint32_t>(c.number());
    } else {
      c.fail("unknown type kind");
    }
    if (!c.done()) c.fail("trailing text in type declaration");
    try {
      add_type(mod_, std::move(t));
    } catch (const std::invalid_argument& e) {
      c.fail(e.what());
    }
  }

  TypeId type_ref(Cursor& c) { return type_ref_named(c, c.ident()); }

  TypeId type_ref_named(Cursor& c, const std::string& name) {
    auto id = mod_.find_type(name);
    if (!id) c.fail("unknown type: " + name);
    return *id;
  }

  void parse_global(Cursor& c) {
    if (cur_.fn) c.fail("global declaration inside function body");
    GlobalDef g;
    g.name = c.ident();
    if (mod_.global_by_name.count(g.name) || mod_.function_by_name.count(g.name) ||
        g.name == "free")
      c.fail("duplicate or reserved global name: " + g.name);
    c.expect(':');
    g.type = type_ref(c);
    if (!c.done()) c.fail("trailing text in global declaration");
    mod_.global_by_name.emplace(g.name, static_cast<std::uint32_t>(mod_.globals.size()));
    mod_.globals.push_back(std::move(g));
  }

  void parse_params(Cursor& c, Function& f, FunctionCtx& ctx) {
    c.expect('(');
    if (!c.eat(')')) {
      do {
        c.expect('%');
        std::string name = c.ident();
        if (ctx.regs.count(name)) c.fail("duplicate parameter: %" + name);
        ctx.regs.emplace(name, static_cast<std::uint32_t>(f.reg_names.size()));
        f.reg_names.push_back(name);
      } while (c.eat(','));
      c.expect(')');
    }
    f.param_count = static_cast<std::uint32_t>(f.reg_names.size());
  }

  void parse_extern_header(Cursor& c) {
    if (cur_.fn) c.fail("extern declaration inside function body");
    if (!c.eat_word("func")) c.fail("expected 'func' after 'extern'");
    std::string name = c.ident();
    Function& f = mod_.functions[mod_.function_by_name.at(name)];
    if (!f.reg_names.empty() || !f.body.empty()) c.fail("redefinition of " + name);
    FunctionCtx ctx;
    parse_params(c, f, ctx);
    if (!c.done()) c.fail("trailing text in extern declaration");
  }

  void parse_function_header(Cursor& c) {
    if (cur_.fn) c.fail("nested function definition");
    std::string name = c.ident();
    std::uint32_t idx = mod_.function_by_name.at(name);
    Function& f = mod_.functions[idx];
    if (seen_body_.count(idx)) c.fail("redefinition of " + name);
    seen_body_.insert(idx);
    cur_ = FunctionCtx{};
    cur_.fn = &f;
    parse_params(c, f, cur_);
    if (c.eat_word("entry")) {
      f.is_entry = true;
      mod_.entry = idx;
    }
    c.expect('{');
    if (!c.done()) c.fail("trailing text after '{'");
  }

  Operand operand(Cursor& c) {
    c.skip_ws();
    if (c.eat('%')) {
      std::string name = c.ident();
      auto it = cur_.regs.find(name);
      if (it == cur_.regs.end()) c.fail("undefined register: %" + name);
      return Operand{OperandKind::Register, it->second};
    }
    std::string name = c.ident();
    if (auto it = mod_.global_by_name.find(name); it != mod_.global_by_name.end())
      return Operand{OperandKind::Global, it->second};
    if (auto it = mod_.function_by_name.find(name); it != mod_.function_by_name.end())
      return Operand{OperandKind::Function, it->second};
    c.fail("undefined variable: " + name);
  }

  std::uint32_t define_register(Cursor& c, const std::string& name) {
    if (cur_.regs.count(name)) c.fail("register reassigned: %" + name);
    std::uint32_t idx = static_cast<std::uint32_t>(cur_.fn->reg_names.size());
    cur_.regs.emplace(name, idx);
    cur_.fn->reg_names.push_back(name);
    return idx;
  }

  void parse_instruction(Cursor& c) {
    Instruction ins;
    ins.line = c.line;
    std::string result_name;
    bool has_result = false;
    if (c.eat('%')) {
      result_name = c.ident();
      c.expect('=');
      has_result = true;
    }

    if (c.eat_word("alloca")) {
      ins.op = Opcode::Alloca;
      ins.type = type_ref(c);
      c.expect(',');
      ins.size = c.number();
    } else if (c.eat_word("malloc")) {
      ins.op = Opcode::Malloc;
      ins.size = c.number();
    } else if (c.eat_word("copy")) {
      ins.op = Opcode::Copy;
      ins.args.push_back(operand(c));
    } else if (c.eat_word("cast")) {
      ins.op = Opcode::Cast;
      ins.type = type_ref(c);
      c.expect(',');
      ins.args.push_back(operand(c));
    } else if (c.eat_word("load")) {
      ins.op = Opcode::Load;
      ins.args.push_back(operand(c));
    } else if (c.eat_word("store")) {
      ins.op = Opcode::Store;
      ins.args.push_back(operand(c));
      c.expect(',');
      ins.args.push_back(operand(c));
    } else if (c.eat_word("phi")) {
      ins.op = Opcode::Phi;
      ins.args.push_back(operand(c));
      c.expect(',');
      ins.args.push_back(operand(c));
    } else if (c.eat_word("field")) {
      ins.op = Opcode::Field;
      ins.args.push_back(operand(c));
      c.expect(',');
      c.skip_ws();
      if (c.eat('?')) {
        ins.field_unknown = true;
        c.skip_ws();
        if (c.pos < c.text.size() && std::isdigit(static_cast<unsigned char>(c.text[c.pos])))
          ins.field_offset = static_cast<std::uint32_t>(c.number());
      } else {
        std::string spec = c.ident();
        std::size_t dot = spec.find('.');
        std::string type_name = dot == std::string::npos ? spec : spec.substr(0, dot);
        ins.field_path = dot == std::string::npos ? "" : spec.substr(dot + 1);
        ins.field_type = type_ref_named(c, type_name);
        auto off = offset_of(mod_, ins.field_type, ins.field_path);
        if (!off) c.fail("unknown field: " + spec);
        ins.field_offset = *off;
      }
    } else if (c.eat_word("call")) {
      ins.op = Opcode::Call;
      c.skip_ws();
      if (c.eat_word("free")) {
        ins.is_free = true;
      } else {
        ins.args.push_back(operand(c));
      }
      c.expect('(');
      if (!c.eat(')')) {
        do {
          ins.args.push_back(operand(c));
        } while (c.eat(','));
        c.expect(')');
      }
      if (ins.is_free) {
        if (has_result) c.fail("free returns no value");
        if (ins.args.size() != 1) c.fail("free takes exactly one operand");
      }
    } else if (c.eat_word("ret")) {
      ins.op = Opcode::Ret;
      if (has_result) c.fail("ret defines no register");
      if (!c.done()) ins.args.push_back(operand(c));
    } else {
      c.fail("unknown instruction");
    }

    if (has_result) ins.result = static_cast<std::int32_t>(define_register(c, result_name));
    if (!c.done()) c.fail("trailing text after instruction");
    cur_.fn->body.push_back(std::move(ins));
  }

  std::vector<std::string_view> lines_;
  Module mod_;
  FunctionCtx cur_;
  std::set<std::uint32_t> seen_body_;
};

}  // namespace

Module parse_module(std::string_view text) { return Parser(text).run(); }

}  // namespace lightde::ir
