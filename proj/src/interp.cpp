#include "lightde/interp.hpp"

#include <chrono>

namespace lightde::interp {

namespace {

struct GlobalRegion {
  rt::Address start = 0;
  rt::Address end = 0;
  std::uint32_t global_index = 0;
};

class Interp {
 public:
  Interp(const ir::Module& m, const pta::ObjectTable& objs,
         const meta::ObjectPointerTable* metadata, const InterpOptions& opt,
         std::vector<ObservedFact>* facts)
      : m_(m), objs_(objs), opt_(opt), facts_(facts), rt_(opt.runtime, metadata) {
    if (opt.runtime.protected_mode) {
      if (!metadata) throw InterpError("protected mode requires metadata");
      if (metadata->module_hash != ir::module_hash(m))
        throw InterpError("metadata does not match this module (build hash mismatch)");
    }
    layouts_ = meta::build_frame_layouts(m);
  }

  rt::ExecutionReport run() {
    auto t0 = std::chrono::steady_clock::now();
    startup();
    call_function(m_.entry, {});
    rt_.shutdown();
    auto t1 = std::chrono::steady_clock::now();

    report_.protected_mode = opt_.runtime.protected_mode;
    report_.stack_hooks = opt_.runtime.stack_hooks;
    report_.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    rt::AllocStats as = rt_.allocator().stats();
    report_.peak_live_bytes = as.peak_live_bytes;
    report_.peak_quarantined_bytes = as.peak_quarantined_bytes;
    report_.quarantine_reuse_violations = as.quarantine_reuse_violations;
    report_.registry_overlap_violations = rt_.registry().overlap_violations();
    report_.sweep = rt_.sweep_report();
    return std::move(report_);
  }

 private:
  // --- startup: globals, global array, function addresses ------------------

  void startup() {
    global_base_.resize(m_.globals.size());
    for (std::uint32_t g = 0; g < m_.globals.size(); ++g) {
      std::uint64_t size = m_.type(m_.globals[g].type).byte_size;
      rt::Address base = rt_.raw_alloc(size ? size : 8);
      global_base_[g] = base;
      regions_.push_back(GlobalRegion{base, base + ((size + 7) & ~7ull), g});
    }
    // The startup hook stores the address of every indexed global pointer
    // into the global array.
    meta::GlobalIndexMap gmap = rt_.metadata() ? rt_.metadata()->globals
                                               : meta::assign_global_indices(m_);
    std::vector<rt::Address> cells;
    for (const meta::GlobalCell& c : gmap.cells)
      cells.push_back(global_base_[c.global_index] + c.offset);
    rt_.set_global_array(std::move(cells));

    // Guard bytes behind the table keep field arithmetic off neighbors.
    fn_base_ = rt_.raw_alloc(8 * m_.functions.size() + 32);
    fn_guard_end_ = fn_base_ + 8 * m_.functions.size() + 32;
  }

  rt::Address function_address(std::uint32_t f) const { return fn_base_ + 8 * f; }

  std::optional<std::uint32_t> function_at(rt::Address a) const {
    if (a < fn_base_ || a >= fn_base_ + 8 * m_.functions.size()) return std::nullopt;
    if ((a - fn_base_) % 8 != 0) return std::nullopt;
    return static_cast<std::uint32_t>((a - fn_base_) / 8);
  }

  // --- fault machinery ------------------------------------------------------

  void fault(rt::FaultKind kind, std::uint32_t func, std::uint32_t instr, rt::Address addr,
             bool halt) {
    rt::Fault f;
    f.kind = kind;
    f.function = m_.functions[func].name;
    f.instr = instr;
    f.addr = addr;
    if (kind == rt::FaultKind::StaleRead) ++report_.stale_reads;
    if (kind == rt::FaultKind::NullDeref) ++report_.null_traps;
    report_.faults.push_back(f);
    if (halt && !report_.trapped) {
      report_.trapped = true;
      report_.trap_reason = report_.faults.back().to_text();
      halted_ = true;
    }
  }

  // Null and unmapped accesses trap like hardware; freed-but-unreused ranges
  // stay readable (that is the stale read the defense exists to stop).
  bool check_access(rt::Address a, std::uint32_t func, std::uint32_t instr, bool is_store) {
    if (a < rt::kNullZone) {
      fault(rt::FaultKind::NullDeref, func, instr, a, true);
      return false;
    }
    if (a % 8 != 0) {
      fault(rt::FaultKind::UnalignedAccess, func, instr, a, true);
      return false;
    }
    if (a >= fn_base_ && a < fn_guard_end_) {
      fault(is_store ? rt::FaultKind::WriteToFunction : rt::FaultKind::FunctionRegionAccess,
            func, instr, a, true);
      return false;
    }
    if (!rt_.memory().mapped(a)) {
      fault(rt::FaultKind::UnmappedAccess, func, instr, a, true);
      return false;
    }
    if (rt_.allocator().tombstone_at(a))
      fault(rt::FaultKind::StaleRead, func, instr, a, false);
    return true;
  }

  // --- static mapping of runtime addresses ----------------------------------

  std::optional<CellRef> resolve(rt::Address a) const {
    if (auto fi = function_at(a))
      return CellRef{objs_.function_object(*fi), 0};
    if (auto rec = rt_.registry().lookup(a)) {
      std::uint32_t obj = objs_.heap_object(rec->static_id);
      return CellRef{obj, static_cast<std::uint32_t>(a - rec->start)};
    }
    if (auto hit = rt_.stack().resolve(a)) {
      const auto& [frame, off] = *hit;
      const meta::FrameLayout& fl = layouts_.per_function[frame.function_id];
      auto slot = fl.alloca_at(static_cast<std::uint32_t>(off));
      if (!slot) return std::nullopt;
      std::int32_t obj = objs_.site_at(frame.function_id, slot->first);
      if (obj < 0) return std::nullopt;
      return CellRef{static_cast<std::uint32_t>(obj), slot->second};
    }
    for (const GlobalRegion& g : regions_)
      if (a >= g.start && a < g.end)
        return CellRef{objs_.global_object(g.global_index),
                       static_cast<std::uint32_t>(a - g.start)};
    return std::nullopt;
  }

  void record_fact(rt::Address cell, std::uint64_t value) {
    if (!facts_ || value == 0) return;
    // Accesses involving freed ranges are the defense's domain, not the
    // analysis's: a dangling address names no live object.
    if (rt_.allocator().tombstone_at(cell) || rt_.allocator().tombstone_at(value)) return;
    auto loc = resolve(cell);
    if (!loc) return;
    auto tgt = resolve(value);
    if (!tgt) return;
    facts_->push_back(ObservedFact{*loc, *tgt});
  }

  // --- execution -------------------------------------------------------------

  std::uint64_t operand_value(const std::vector<std::uint64_t>& regs,
                              const ir::Operand& op) const {
    switch (op.kind) {
      case ir::OperandKind::Register: return regs[op.index];
      case ir::OperandKind::Global: return global_base_[op.index];
      case ir::OperandKind::Function: return function_address(op.index);
    }
    return 0;
  }

  std::uint64_t call_function(std::uint32_t f, const std::vector<std::uint64_t>& args) {
    const ir::Function& fn = m_.functions[f];
    if (depth_ >= opt_.max_depth) {
      fault(rt::FaultKind::DepthLimit, f, 0, 0, true);
      return 0;
    }
    ++depth_;
    ++report_.frame_enters;
    rt::Frame frame = rt_.on_frame_enter(f, layouts_.per_function[f].frame_size);

    std::vector<std::uint64_t> regs(fn.reg_names.size(), 0);
    for (std::size_t i = 0; i < args.size(); ++i) regs[i] = args[i];

    std::uint64_t ret = 0;
    for (std::uint32_t i = 0; i < fn.body.size() && !halted_; ++i) {
      if (++report_.instructions > opt_.max_steps) {
        fault(rt::FaultKind::StepLimit, f, i, 0, true);
        break;
      }
      const ir::Instruction& ins = fn.body[i];
      switch (ins.op) {
        case ir::Opcode::Alloca:
          regs[ins.result] = frame.base + layouts_.per_function[f].alloca_base[i];
          break;
        case ir::Opcode::Malloc: {
          std::uint32_t ordinal = objs_.object(objs_.site_at(f, i)).heap_ordinal;
          rt::Address a = rt_.on_alloc(ordinal, ins.size);
          if (!a) fault(rt::FaultKind::AllocFailed, f, i, 0, false);
          ++report_.allocs;
          regs[ins.result] = a;
          break;
        }
        case ir::Opcode::Copy:
        case ir::Opcode::Cast:
          regs[ins.result] = operand_value(regs, ins.args[0]);
          break;
        case ir::Opcode::Load: {
          rt::Address a = operand_value(regs, ins.args[0]);
          if (!check_access(a, f, i, false)) break;
          regs[ins.result] = rt_.memory().cell(a)->load(std::memory_order_relaxed);
          break;
        }
        case ir::Opcode::Store: {
          rt::Address a = operand_value(regs, ins.args[0]);
          std::uint64_t v = operand_value(regs, ins.args[1]);
          if (!check_access(a, f, i, true)) break;
          rt_.memory().cell(a)->store(v, std::memory_order_relaxed);
          record_fact(a, v);
          break;
        }
        case ir::Opcode::Phi:
          regs[ins.result] = operand_value(regs, ins.args[0]);
          break;
        case ir::Opcode::Field:
          regs[ins.result] = operand_value(regs, ins.args[0]) + ins.field_offset;
          break;
        case ir::Opcode::Call: {
          if (ins.is_free) {
            rt::Address a = operand_value(regs, ins.args[0]);
            rt::FreeResult r = rt_.on_free(a);
            if (!r.ok)
              fault(r.fault, f, i, a, false);
            else if (a)
              ++report_.frees;
            break;
          }
          rt::Address target = operand_value(regs, ins.args[0]);
          auto callee = function_at(target);
          if (!callee) {
            fault(rt::FaultKind::CallThroughNonFunction, f, i, target, false);
            if (ins.result >= 0) regs[ins.result] = 0;
            break;
          }
          const ir::Function& cf = m_.functions[*callee];
          if (ins.args.size() - 1 != cf.param_count) {
            fault(rt::FaultKind::CallArityMismatch, f, i, target, false);
            if (ins.result >= 0) regs[ins.result] = 0;
            break;
          }
          if (cf.is_extern) {
            if (ins.result >= 0) regs[ins.result] = 0;
            break;
          }
          std::vector<std::uint64_t> call_args;
          for (std::size_t a = 1; a < ins.args.size(); ++a)
            call_args.push_back(operand_value(regs, ins.args[a]));
          std::uint64_t rv = call_function(*callee, call_args);
          if (ins.result >= 0) regs[ins.result] = rv;
          break;
        }
        case ir::Opcode::Ret:
          if (!ins.args.empty()) ret = operand_value(regs, ins.args[0]);
          i = static_cast<std::uint32_t>(fn.body.size());  // leave the loop
          break;
      }
      if (ins.op == ir::Opcode::Ret) break;
    }

    if (!rt_.on_frame_exit(frame.token))
      fault(rt::FaultKind::FrameMisuse, f, 0, frame.token, false);
    --depth_;
    return ret;
  }

  const ir::Module& m_;
  const pta::ObjectTable& objs_;
  InterpOptions opt_;
  std::vector<ObservedFact>* facts_;
  rt::RuntimeSystem rt_;
  meta::FrameLayouts layouts_;
  std::vector<rt::Address> global_base_;
  std::vector<GlobalRegion> regions_;
  rt::Address fn_base_ = 0;
  rt::Address fn_guard_end_ = 0;
  rt::ExecutionReport report_;
  std::uint32_t depth_ = 0;
  bool halted_ = false;
};

}  // namespace

rt::ExecutionReport interp_run(const ir::Module& m, const pta::ObjectTable& objs,
                               const meta::ObjectPointerTable* metadata,
                               const InterpOptions& opt,
                               std::vector<ObservedFact>* facts_out) {
  return Interp(m, objs, metadata, opt, facts_out).run();
}

}  // namespace lightde::interp
