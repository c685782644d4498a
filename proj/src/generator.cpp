#include "lightde/generator.hpp"

#include <algorithm>

namespace lightde::gen {

namespace {

// Register pools are split so that computed field addresses always stay inside
// the runtime object they were derived from: `field` bases and stored values
// come only from object-start pointers, while field results are used purely as
// load/store addresses. Together with allocation sizes >= the largest type,
// the instrumented runs never fabricate cross-object pointers.
class Builder {
 public:
  explicit Builder(const GenOptions& opt) : opt_(opt), rng_(opt.seed) {}

  ir::Module run() {
    build_types();
    build_globals();
    std::uint32_t nfuncs = 1 + pick(0, opt_.max_functions - 1);
    for (std::uint32_t f = 0; f < nfuncs; ++f) {
      ir::Function fn;
      fn.name = f == 0 ? "main" : "f" + std::to_string(f);
      fn.is_entry = f == 0;
      if (f > 0) {
        std::uint32_t params = pick(1, 2);
        for (std::uint32_t p = 0; p < params; ++p)
          fn.reg_names.push_back("a" + std::to_string(p));
        fn.param_count = params;
      }
      mod_.function_by_name.emplace(fn.name, f);
      mod_.functions.push_back(std::move(fn));
    }
    std::uint32_t budget = std::max<std::uint32_t>(opt_.max_instructions, nfuncs * 2);
    std::uint32_t per = budget / nfuncs;
    for (std::uint32_t f = 0; f < nfuncs; ++f) fill_body(f, pick(1, per));
    mod_.entry = 0;
    return std::move(mod_);
  }

 private:
  std::uint32_t pick(std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng_);
  }
  bool chance(std::uint32_t percent) { return pick(1, 100) <= percent; }

  void build_types() {
    ir::TypeDef i64{.name = "i64", .kind = ir::TypeKind::Scalar, .byte_size = 8};
    i64_ = ir::add_type(mod_, i64);
    ir::TypeDef p8{.name = "p8", .kind = ir::TypeKind::Pointer};
    p8_ = ir::add_type(mod_, p8);
    field_types_.push_back(p8_);

    ir::TypeDef s2{.name = "S2", .kind = ir::TypeKind::Struct, .byte_size = 16};
    s2.fields = {{"fst", 0, p8_}, {"snd", 8, p8_}};
    field_types_.push_back(ir::add_type(mod_, s2));

    ir::TypeDef arr{.name = "A3", .kind = ir::TypeKind::Array};
    arr.elem_type = p8_;
    arr.elem_count = 3;
    ir::TypeId a3 = ir::add_type(mod_, arr);
    field_types_.push_back(a3);
    big_types_.push_back(a3);

    if (chance(60)) {
      ir::TypeDef s3{.name = "S3", .kind = ir::TypeKind::Struct, .byte_size = 24};
      s3.fields = {{"a", 0, p8_}, {"b", 8, i64_}, {"c", 16, p8_}};
      ir::TypeId id = ir::add_type(mod_, s3);
      field_types_.push_back(id);
      big_types_.push_back(id);
    }
    if (chance(40)) {
      ir::TypeDef ns{.name = "NS", .kind = ir::TypeKind::Struct, .byte_size = 24};
      ns.fields = {{"x", 0, i64_}, {"in", 8, *mod_.find_type("S2")}};
      ir::TypeId id = ir::add_type(mod_, ns);
      field_types_.push_back(id);
      big_types_.push_back(id);
    }
  }

  void build_globals() {
    std::uint32_t n = pick(0, opt_.max_globals);
    for (std::uint32_t g = 0; g < n; ++g) {
      ir::GlobalDef def;
      def.name = "g" + std::to_string(g);
      def.type = big_types_[pick(0, static_cast<std::uint32_t>(big_types_.size() - 1))];
      mod_.global_by_name.emplace(def.name, g);
      mod_.globals.push_back(std::move(def));
    }
  }

  struct Pools {
    std::vector<std::uint32_t> base;   // object-start pointers
    std::vector<std::uint32_t> cells;  // field results: load/store addresses only
  };

  std::uint32_t def_reg(ir::Function& fn) {
    std::uint32_t idx = static_cast<std::uint32_t>(fn.reg_names.size());
    fn.reg_names.push_back("r" + std::to_string(idx));
    return idx;
  }

  static ir::Operand reg(std::uint32_t idx) { return {ir::OperandKind::Register, idx}; }

  std::uint32_t pool_pick(const std::vector<std::uint32_t>& v) {
    return v[pick(0, static_cast<std::uint32_t>(v.size() - 1))];
  }

  ir::Operand base_ptr(const Pools& p, std::uint32_t func) {
    std::uint32_t roll = pick(0, 9);
    if (roll < 7 && !p.base.empty()) return reg(pool_pick(p.base));
    if (roll < 9 && !mod_.globals.empty())
      return {ir::OperandKind::Global,
              pick(0, static_cast<std::uint32_t>(mod_.globals.size() - 1))};
    if (func + 1 < mod_.functions.size())
      return {ir::OperandKind::Function,
              pick(func + 1, static_cast<std::uint32_t>(mod_.functions.size() - 1))};
    if (!p.base.empty()) return reg(pool_pick(p.base));
    if (!mod_.globals.empty()) return {ir::OperandKind::Global, 0};
    return {ir::OperandKind::Function, func};
  }

  ir::Operand any_addr(const Pools& p, std::uint32_t func) {
    if (!p.cells.empty() && chance(45)) return reg(pool_pick(p.cells));
    return base_ptr(p, func);
  }

  void fill_body(std::uint32_t f, std::uint32_t count) {
    Pools pools;
    for (std::uint32_t p = 0; p < mod_.functions[f].param_count; ++p) pools.base.push_back(p);
    emit_alloc(f, pools, chance(60));
    for (std::uint32_t i = 1; i < count; ++i) emit_random(f, pools);
    ir::Instruction ret;
    ret.op = ir::Opcode::Ret;
    if (!pools.base.empty() && chance(50)) ret.args.push_back(reg(pool_pick(pools.base)));
    mod_.functions[f].body.push_back(std::move(ret));
  }

  void emit_alloc(std::uint32_t f, Pools& pools, bool heap) {
    ir::Function& fn = mod_.functions[f];
    ir::Instruction ins;
    if (heap) {
      ins.op = ir::Opcode::Malloc;
      ins.size = 8u * pick(3, 6);  // >= every registered type
    } else {
      ins.op = ir::Opcode::Alloca;
      ins.type = big_types_[pick(0, static_cast<std::uint32_t>(big_types_.size() - 1))];
      ins.size = mod_.type(ins.type).byte_size;
    }
    ins.result = static_cast<std::int32_t>(def_reg(fn));
    pools.base.push_back(static_cast<std::uint32_t>(ins.result));
    fn.body.push_back(std::move(ins));
  }

  void emit_random(std::uint32_t f, Pools& pools) {
    ir::Function& fn = mod_.functions[f];
    std::uint32_t roll = pick(0, 99);
    ir::Instruction ins;
    if (roll < 16) {
      emit_alloc(f, pools, roll < 11);
      return;
    } else if (roll < 26) {  // copy
      ins.op = ir::Opcode::Copy;
      ins.args.push_back(base_ptr(pools, f));
    } else if (roll < 36) {  // cast
      ins.op = ir::Opcode::Cast;
      ins.type = field_types_[pick(0, static_cast<std::uint32_t>(field_types_.size() - 1))];
      ins.args.push_back(base_ptr(pools, f));
    } else if (roll < 44) {  // phi
      ins.op = ir::Opcode::Phi;
      ins.args.push_back(base_ptr(pools, f));
      ins.args.push_back(base_ptr(pools, f));
    } else if (roll < 58) {  // field
      ins.op = ir::Opcode::Field;
      ir::Operand base = base_ptr(pools, f);
      if (chance(20)) {
        ins.args.push_back(base);
        ins.field_unknown = true;
        ins.field_offset = 0;  // the simulated variable index resolves to 0
      } else {
        ins.field_type =
            field_types_[pick(0, static_cast<std::uint32_t>(field_types_.size() - 1))];
        // Typed accesses go through a matching cast first, the way lowered
        // IR presents them; the cast accretes the type onto the object.
        ir::Instruction cast;
        cast.op = ir::Opcode::Cast;
        cast.type = ins.field_type;
        cast.args.push_back(base);
        cast.result = static_cast<std::int32_t>(def_reg(fn));
        std::uint32_t cast_reg = static_cast<std::uint32_t>(cast.result);
        pools.base.push_back(cast_reg);
        fn.body.push_back(std::move(cast));
        ins.args.push_back(reg(cast_reg));
        const ir::TypeDef& t = mod_.type(ins.field_type);
        if (t.fields.empty()) {
          ins.field_path = "";
          ins.field_offset = 0;
        } else {
          std::uint32_t idx = pick(0, static_cast<std::uint32_t>(t.fields.size() - 1));
          ins.field_path =
              t.fields[idx].name.empty() ? std::to_string(idx) : t.fields[idx].name;
          const ir::TypeDef& sub = mod_.type(t.fields[idx].type);
          if (!sub.fields.empty() && chance(50)) {
            std::uint32_t si = pick(0, static_cast<std::uint32_t>(sub.fields.size() - 1));
            ins.field_path +=
                "." + (sub.fields[si].name.empty() ? std::to_string(si) : sub.fields[si].name);
          }
          ins.field_offset = *ir::offset_of(mod_, ins.field_type, ins.field_path);
        }
      }
      ins.result = static_cast<std::int32_t>(def_reg(fn));
      pools.cells.push_back(static_cast<std::uint32_t>(ins.result));
      fn.body.push_back(std::move(ins));
      return;
    } else if (roll < 68) {  // load
      ins.op = ir::Opcode::Load;
      ins.args.push_back(any_addr(pools, f));
    } else if (roll < 82) {  // store
      ins.op = ir::Opcode::Store;
      ins.args.push_back(any_addr(pools, f));
      ins.args.push_back(base_ptr(pools, f));
      fn.body.push_back(std::move(ins));
      return;
    } else if (roll < 92) {  // call
      if (f + 1 >= mod_.functions.size()) {
        emit_alloc(f, pools, true);
        return;
      }
      ins.op = ir::Opcode::Call;
      if (chance(30) && !pools.base.empty()) {
        ins.args.push_back(reg(pool_pick(pools.base)));
      } else {
        ins.args.push_back({ir::OperandKind::Function,
                            pick(f + 1, static_cast<std::uint32_t>(mod_.functions.size() - 1))});
      }
      std::uint32_t argc = pick(1, 2);
      for (std::uint32_t a = 0; a < argc; ++a) ins.args.push_back(base_ptr(pools, f));
      if (chance(70)) {
        ins.result = static_cast<std::int32_t>(def_reg(fn));
        pools.base.push_back(static_cast<std::uint32_t>(ins.result));
      }
      fn.body.push_back(std::move(ins));
      return;
    } else {  // free
      if (!opt_.allow_free || pools.base.empty()) {
        emit_alloc(f, pools, true);
        return;
      }
      ins.op = ir::Opcode::Call;
      ins.is_free = true;
      ins.args.push_back(reg(pool_pick(pools.base)));
      fn.body.push_back(std::move(ins));
      return;
    }
    ins.result = static_cast<std::int32_t>(def_reg(fn));
    pools.base.push_back(static_cast<std::uint32_t>(ins.result));
    fn.body.push_back(std::move(ins));
  }

  GenOptions opt_;
  std::mt19937_64 rng_;
  ir::Module mod_;
  ir::TypeId i64_ = 0, p8_ = 0;
  std::vector<ir::TypeId> field_types_;  // types usable in field paths and casts
  std::vector<ir::TypeId> big_types_;    // types large enough for every field path
};

}  // namespace

ir::Module generate_module(const GenOptions& opt) { return Builder(opt).run(); }

}  // namespace lightde::gen
