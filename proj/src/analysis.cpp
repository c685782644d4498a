#include "lightde/analysis.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace lightde::pta {

// ---------------------------------------------------------------------------
// ObjectTable
// ---------------------------------------------------------------------------

ObjectTable ObjectTable::build(const ir::Module& m) {
  ObjectTable t;
  auto add = [&](AbstractObject o) {
    o.id = static_cast<std::uint32_t>(t.objects_.size());
    if (o.kind == SiteKind::Heap) {
      o.heap_ordinal = ++t.heap_count_;
      o.name = "o" + std::to_string(o.heap_ordinal);
      t.heap_by_ordinal_.push_back(o.id);
    }
    t.objects_.push_back(o);
    return o.id;
  };

  for (std::uint32_t g = 0; g < m.globals.size(); ++g) {
    AbstractObject o;
    o.kind = SiteKind::Global;
    o.name = "g$" + m.globals[g].name;
    o.ref = g;
    o.declared_type = m.globals[g].type;
    o.alloc_size = m.type(o.declared_type).byte_size;
    t.global_obj_.push_back(add(o));
  }
  for (std::uint32_t f = 0; f < m.functions.size(); ++f) {
    AbstractObject o;
    o.kind = SiteKind::Function;
    o.name = "fn$" + m.functions[f].name;
    o.ref = f;
    t.function_obj_.push_back(add(o));
    if (m.functions[f].is_extern) {
      // Conservative return object for calls into the unknown callee.
      AbstractObject e;
      e.kind = SiteKind::Heap;
      e.func = static_cast<std::int32_t>(f);
      t.extern_return_.emplace(f, add(e));
    }
  }
  t.site_at_.resize(m.functions.size());
  std::uint32_t stack_count = 0;
  for (std::uint32_t f = 0; f < m.functions.size(); ++f) {
    const ir::Function& fn = m.functions[f];
    t.site_at_[f].assign(fn.body.size(), -1);
    for (std::uint32_t i = 0; i < fn.body.size(); ++i) {
      const ir::Instruction& ins = fn.body[i];
      if (ins.op == ir::Opcode::Alloca) {
        AbstractObject o;
        o.kind = SiteKind::Stack;
        o.name = "s" + std::to_string(++stack_count);
        o.func = static_cast<std::int32_t>(f);
        o.instr = static_cast<std::int32_t>(i);
        o.declared_type = ins.type;
        o.alloc_size = ins.size;
        t.site_at_[f][i] = static_cast<std::int32_t>(add(o));
      } else if (ins.op == ir::Opcode::Malloc) {
        AbstractObject o;
        o.kind = SiteKind::Heap;
        o.func = static_cast<std::int32_t>(f);
        o.instr = static_cast<std::int32_t>(i);
        o.alloc_size = ins.size;
        t.site_at_[f][i] = static_cast<std::int32_t>(add(o));
      }
    }
  }
  return t;
}

std::int32_t ObjectTable::site_at(std::uint32_t func, std::uint32_t instr) const {
  return site_at_[func][instr];
}
std::uint32_t ObjectTable::global_object(std::uint32_t g) const { return global_obj_[g]; }
std::uint32_t ObjectTable::function_object(std::uint32_t f) const { return function_obj_[f]; }

std::optional<std::uint32_t> ObjectTable::extern_return(std::uint32_t func) const {
  auto it = extern_return_.find(func);
  if (it == extern_return_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// PointsToState lookups
// ---------------------------------------------------------------------------

std::optional<NodeId> PointsToState::var_node(std::uint32_t func, std::uint32_t reg) const {
  if (func >= var_base_.size() || reg >= var_base_[func].size()) return std::nullopt;
  return var_base_[func][reg];
}
NodeId PointsToState::global_var_node(std::uint32_t g) const { return global_var_[g]; }
NodeId PointsToState::function_var_node(std::uint32_t f) const { return function_var_[f]; }
NodeId PointsToState::object_node(std::uint32_t id) const { return object_node_[id]; }

std::optional<NodeId> PointsToState::field_node(std::uint32_t object_id,
                                                std::uint32_t offset) const {
  auto it = field_nodes_.find({object_id, offset});
  if (it == field_nodes_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

namespace {

enum class CellClass : std::uint8_t { Head, Fixed, Star };

bool cells_overlap(CellClass ca, std::uint32_t fa, CellClass cb, std::uint32_t fb) {
  if (ca == CellClass::Star || cb == CellClass::Star) return true;
  if (ca == CellClass::Head && cb == CellClass::Head) return true;
  if (ca == CellClass::Head) return fb == 0;
  if (cb == CellClass::Head) return fa == 0;
  return fa == fb;
}

struct Constraint {
  enum class Kind : std::uint8_t { Load, Store, Field, Call, Cast } kind;
  NodeId pointer = 0;  // the node whose pt set drives evaluation
  NodeId other = 0;    // Load: dst; Store: src
  // Field
  std::uint32_t field_offset = 0;
  bool field_unknown = false;
  // Call
  std::uint32_t func = 0;
  std::uint32_t instr = 0;
  // Cast
  ir::TypeId type = ir::kInvalidType;

  std::set<NodeId> handled;
};

struct BaseAccess {
  bool is_load;
  NodeId other;
  CellClass cls;
  std::uint32_t offset;
};

}  // namespace

class Solver {
 public:
  Solver(const ir::Module& m, const ObjectTable& objs, const SolveOptions& opt, bool stage2,
         const PointsToState* stage1)
      : m_(m), objs_(objs), opt_(opt), stage2_(stage2), stage1_(stage1) {}

  PointsToState run() {
    build_nodes();
    build_constraints();
    seed();
    solve();
    finish();
    return std::move(st_);
  }

 private:
  NodeId new_node(NodeKind kind, std::string name, std::uint32_t object = 0,
                  std::uint32_t offset = 0) {
    NodeId id = static_cast<NodeId>(st_.nodes_.size());
    st_.nodes_.push_back(NodeInfo{kind, std::move(name), object, offset});
    st_.pt_.emplace_back();
    succ_.emplace_back();
    uses_.emplace_back();
    return id;
  }

  void build_nodes() {
    st_.var_base_.resize(m_.functions.size());
    ret_node_.resize(m_.functions.size());
    for (std::uint32_t f = 0; f < m_.functions.size(); ++f) {
      const ir::Function& fn = m_.functions[f];
      for (std::uint32_t r = 0; r < fn.reg_names.size(); ++r)
        st_.var_base_[f].push_back(new_node(NodeKind::Var, fn.name + "::%" + fn.reg_names[r]));
      ret_node_[f] = new_node(NodeKind::Ret, fn.name + "::$ret");
    }
    for (std::uint32_t g = 0; g < m_.globals.size(); ++g)
      st_.global_var_.push_back(new_node(NodeKind::Var, m_.globals[g].name));
    for (std::uint32_t f = 0; f < m_.functions.size(); ++f)
      st_.function_var_.push_back(new_node(NodeKind::Var, m_.functions[f].name));
    for (const AbstractObject& o : objs_.objects())
      st_.object_node_.push_back(new_node(NodeKind::Object, o.name, o.id, 0));
    st_.types_.resize(objs_.size());
    fields_of_.resize(objs_.size());
    accesses_.resize(objs_.size());
  }

  NodeId operand_node(std::uint32_t func, const ir::Operand& op) const {
    switch (op.kind) {
      case ir::OperandKind::Register: return st_.var_base_[func][op.index];
      case ir::OperandKind::Global: return st_.global_var_[op.index];
      case ir::OperandKind::Function: return st_.function_var_[op.index];
    }
    return 0;
  }

  void add_use(NodeId n, std::size_t c) { uses_[n].push_back(c); }

  std::size_t add_constraint(Constraint c) {
    std::size_t idx = constraints_.size();
    NodeId key = c.pointer;
    constraints_.push_back(std::move(c));
    add_use(key, idx);
    return idx;
  }

  void build_constraints() {
    for (std::uint32_t f = 0; f < m_.functions.size(); ++f) {
      const ir::Function& fn = m_.functions[f];
      if (fn.is_extern) continue;
      for (std::uint32_t i = 0; i < fn.body.size(); ++i) {
        const ir::Instruction& ins = fn.body[i];
        switch (ins.op) {
          case ir::Opcode::Copy:
            add_edge(operand_node(f, ins.args[0]), st_.var_base_[f][ins.result]);
            break;
          case ir::Opcode::Phi:
            add_edge(operand_node(f, ins.args[0]), st_.var_base_[f][ins.result]);
            add_edge(operand_node(f, ins.args[1]), st_.var_base_[f][ins.result]);
            break;
          case ir::Opcode::Cast: {
            add_edge(operand_node(f, ins.args[0]), st_.var_base_[f][ins.result]);
            if (!stage2_) {
              Constraint c;
              c.kind = Constraint::Kind::Cast;
              c.pointer = operand_node(f, ins.args[0]);
              c.type = ins.type;
              add_constraint(std::move(c));
            }
            break;
          }
          case ir::Opcode::Load: {
            Constraint c;
            c.kind = Constraint::Kind::Load;
            c.pointer = operand_node(f, ins.args[0]);
            c.other = st_.var_base_[f][ins.result];
            add_constraint(std::move(c));
            break;
          }
          case ir::Opcode::Store: {
            Constraint c;
            c.kind = Constraint::Kind::Store;
            c.pointer = operand_node(f, ins.args[0]);
            c.other = operand_node(f, ins.args[1]);
            add_constraint(std::move(c));
            break;
          }
          case ir::Opcode::Field: {
            Constraint c;
            c.kind = Constraint::Kind::Field;
            c.pointer = operand_node(f, ins.args[0]);
            c.other = st_.var_base_[f][ins.result];
            c.field_offset = ins.field_offset;
            c.field_unknown = ins.field_unknown;
            add_constraint(std::move(c));
            break;
          }
          case ir::Opcode::Call: {
            if (ins.is_free) break;
            Constraint c;
            c.kind = Constraint::Kind::Call;
            c.pointer = operand_node(f, ins.args[0]);
            c.func = f;
            c.instr = i;
            add_constraint(std::move(c));
            break;
          }
          case ir::Opcode::Ret:
            if (!ins.args.empty()) add_edge(operand_node(f, ins.args[0]), ret_node_[f]);
            break;
          case ir::Opcode::Alloca:
          case ir::Opcode::Malloc:
            break;
        }
      }
    }
  }

  void seed() {
    for (std::uint32_t g = 0; g < m_.globals.size(); ++g) {
      std::uint32_t obj = objs_.global_object(g);
      insert_pt(st_.global_var_[g], st_.object_node_[obj]);
      st_.types_[obj].insert(m_.globals[g].type);
    }
    for (std::uint32_t f = 0; f < m_.functions.size(); ++f)
      insert_pt(st_.function_var_[f], st_.object_node_[objs_.function_object(f)]);
    for (std::uint32_t f = 0; f < m_.functions.size(); ++f) {
      const ir::Function& fn = m_.functions[f];
      for (std::uint32_t i = 0; i < fn.body.size(); ++i) {
        const ir::Instruction& ins = fn.body[i];
        if (ins.op == ir::Opcode::Alloca) {
          std::uint32_t obj = static_cast<std::uint32_t>(objs_.site_at(f, i));
          insert_pt(st_.var_base_[f][ins.result], st_.object_node_[obj]);
          st_.types_[obj].insert(ins.type);
        } else if (ins.op == ir::Opcode::Malloc) {
          std::uint32_t obj = static_cast<std::uint32_t>(objs_.site_at(f, i));
          insert_pt(st_.var_base_[f][ins.result], st_.object_node_[obj]);
        }
      }
    }
  }

  // --- core propagation ----------------------------------------------------

  void push(NodeId n) {
    if (n >= queued_.size()) queued_.resize(n + 1, false);
    if (queued_[n]) return;
    queued_[n] = true;
    worklist_.push_back(n);
  }

  NodeId pop() {
    NodeId n;
    if (opt_.order == SolveOptions::Order::Lifo) {
      n = worklist_.back();
      worklist_.pop_back();
    } else {
      n = worklist_.front();
      worklist_.pop_front();
    }
    queued_[n] = false;
    return n;
  }

  bool insert_pt(NodeId n, NodeId target) {
    if (!st_.pt_[n].insert(target).second) return false;
    push(n);
    return true;
  }

  void add_edge(NodeId from, NodeId to) {
    if (from == to) return;
    if (!succ_[from].insert(to).second) return;
    bool grew = false;
    for (NodeId t : st_.pt_[from]) grew |= st_.pt_[to].insert(t).second;
    if (grew) push(to);
  }

  void solve() {
    while (!worklist_.empty()) {
      NodeId n = pop();
      for (NodeId b : succ_[n]) {
        bool grew = false;
        for (NodeId t : st_.pt_[n]) grew |= st_.pt_[b].insert(t).second;
        if (grew) push(b);
      }
      std::vector<std::size_t> cs = uses_[n];
      for (std::size_t ci : cs) evaluate(ci);
    }
  }

  void evaluate(std::size_t ci) {
    std::vector<NodeId> delta;
    {
      Constraint& c = constraints_[ci];
      for (NodeId t : st_.pt_[c.pointer])
        if (!c.handled.count(t)) delta.push_back(t);
      for (NodeId t : delta) c.handled.insert(t);
    }
    if (delta.empty()) return;
    switch (constraints_[ci].kind) {
      case Constraint::Kind::Load:
      case Constraint::Kind::Store:
        for (NodeId t : delta) eval_access(ci, t);
        break;
      case Constraint::Kind::Field:
        for (NodeId t : delta) eval_field(ci, t);
        break;
      case Constraint::Kind::Call:
        for (NodeId t : delta) eval_call(ci, t);
        break;
      case Constraint::Kind::Cast:
        for (NodeId t : delta) {
          const NodeInfo& info = st_.nodes_[t];
          if (info.kind == NodeKind::Object) st_.types_[info.object].insert(constraints_[ci].type);
        }
        break;
    }
  }

  CellClass class_of(const NodeInfo& n) const {
    if (n.kind == NodeKind::Object) return CellClass::Head;
    return n.offset == kStarOffset ? CellClass::Star : CellClass::Fixed;
  }

  bool is_data_node(NodeId t) const {
    const NodeInfo& info = st_.nodes_[t];
    if (info.kind != NodeKind::Object && info.kind != NodeKind::FieldObj) return false;
    return objs_.object(info.object).kind != SiteKind::Function;
  }

  // Load/store through X touches every registered node of the same base whose
  // cell range can overlap X's.
  void eval_access(std::size_t ci, NodeId target) {
    if (!is_data_node(target)) return;
    bool is_load = constraints_[ci].kind == Constraint::Kind::Load;
    NodeId other = constraints_[ci].other;
    NodeInfo info = st_.nodes_[target];
    CellClass cls = class_of(info);
    std::uint32_t off = cls == CellClass::Fixed ? info.offset : 0;
    std::uint32_t base = info.object;

    accesses_[base].push_back(BaseAccess{is_load, other, cls, off});

    std::vector<NodeId> peers;
    peers.push_back(st_.object_node_[base]);
    for (NodeId fnode : fields_of_[base]) peers.push_back(fnode);
    for (NodeId peer : peers) {
      NodeInfo pinfo = st_.nodes_[peer];
      CellClass pcls = class_of(pinfo);
      std::uint32_t poff = pcls == CellClass::Fixed ? pinfo.offset : 0;
      if (!cells_overlap(cls, off, pcls, poff)) continue;
      if (is_load)
        add_edge(peer, other);
      else
        add_edge(other, peer);
    }
  }

  NodeId get_field_node(std::uint32_t base, std::uint32_t offset) {
    auto it = st_.field_nodes_.find({base, offset});
    if (it != st_.field_nodes_.end()) return it->second;
    const std::string& bname = objs_.object(base).name;
    std::string name =
        bname + "@" + (offset == kStarOffset ? "*" : std::to_string(offset));
    NodeId id = new_node(NodeKind::FieldObj, std::move(name), base, offset);
    st_.field_nodes_.emplace(std::make_pair(base, offset), id);
    fields_of_[base].push_back(id);
    CellClass cls = offset == kStarOffset ? CellClass::Star : CellClass::Fixed;
    std::uint32_t off = offset == kStarOffset ? 0 : offset;
    // Wire previously recorded accesses whose cells may overlap the new node.
    std::vector<BaseAccess> accs = accesses_[base];
    for (const BaseAccess& a : accs) {
      if (!cells_overlap(a.cls, a.offset, cls, off)) continue;
      if (a.is_load)
        add_edge(id, a.other);
      else
        add_edge(a.other, id);
    }
    return id;
  }

  // Stage 2 only: a field access at offset `off` of object `base` survives iff
  // the object carries no structural information at all, or some known type
  // owns that offset.
  bool field_offset_allowed(std::uint32_t base, std::uint32_t off) const {
    const std::set<ir::TypeId>& ts = stage1_->type_set(base);
    if (ts.empty()) return true;
    for (ir::TypeId t : ts) {
      const std::vector<std::uint32_t>& offs = ir::type_offsets(m_, t);
      if (std::binary_search(offs.begin(), offs.end(), off)) return true;
    }
    return false;
  }

  void eval_field(std::size_t ci, NodeId target) {
    if (!is_data_node(target)) return;
    NodeInfo info = st_.nodes_[target];
    std::uint32_t base = info.object;
    bool unknown = constraints_[ci].field_unknown;
    std::uint32_t f = constraints_[ci].field_offset;
    NodeId dst = constraints_[ci].other;

    NodeId result;
    if (unknown || (info.kind == NodeKind::FieldObj && info.offset == kStarOffset)) {
      result = get_field_node(base, kStarOffset);
    } else {
      std::uint32_t eff = f + (info.kind == NodeKind::FieldObj ? info.offset : 0);
      if (stage2_ && !field_offset_allowed(base, eff)) return;
      result = get_field_node(base, eff);
    }
    insert_pt(dst, result);
  }

  void eval_call(std::size_t ci, NodeId target) {
    std::uint32_t caller = constraints_[ci].func;
    std::uint32_t instr = constraints_[ci].instr;
    const ir::Instruction& ins = m_.functions[caller].body[instr];
    std::string site = m_.functions[caller].name + "#" + std::to_string(instr);

    const NodeInfo& info = st_.nodes_[target];
    if (info.kind != NodeKind::Object ||
        objs_.object(info.object).kind != SiteKind::Function) {
      st_.diags_.push_back("call " + site + ": target " + info.name + " is not a function");
      return;
    }
    std::uint32_t callee = objs_.object(info.object).ref;
    const ir::Function& cf = m_.functions[callee];
    std::size_t argc = ins.args.size() - 1;
    if (argc != cf.param_count) {
      st_.diags_.push_back("call " + site + ": " + cf.name + " expects " +
                           std::to_string(cf.param_count) + " args, got " +
                           std::to_string(argc));
      return;
    }
    if (!st_.call_edges_.insert(CallEdge{caller, instr, callee}).second) return;
    if (cf.is_extern) {
      // Unknown callee: pointer arguments may flow back out of the result, and
      // the call may hand back fresh unstructured heap memory.
      if (ins.result >= 0) {
        NodeId res = st_.var_base_[caller][ins.result];
        for (std::size_t a = 1; a < ins.args.size(); ++a)
          add_edge(operand_node(caller, ins.args[a]), res);
        insert_pt(res, st_.object_node_[*objs_.extern_return(callee)]);
      }
      st_.diags_.push_back("call " + site + ": extern callee " + cf.name +
                           " handled conservatively");
      return;
    }
    for (std::size_t a = 1; a < ins.args.size(); ++a)
      add_edge(operand_node(caller, ins.args[a]),
               st_.var_base_[callee][a - 1]);
    if (ins.result >= 0)
      add_edge(ret_node_[callee], st_.var_base_[caller][ins.result]);
  }

  void finish() {
    for (std::uint32_t f = 0; f < m_.functions.size(); ++f) {
      const ir::Function& fn = m_.functions[f];
      if (fn.is_extern) continue;
      for (std::uint32_t i = 0; i < fn.body.size(); ++i) {
        const ir::Instruction& ins = fn.body[i];
        if (ins.op != ir::Opcode::Call || ins.is_free) continue;
        bool any = false;
        for (const CallEdge& e : st_.call_edges_)
          if (e.caller_func == f && e.instr == i) {
            any = true;
            break;
          }
        if (!any)
          st_.diags_.push_back("call " + fn.name + "#" + std::to_string(i) +
                               ": resolved to zero callees");
      }
    }
    if (stage2_) {
      // Stage 2 reports the accreted stage-1 type model it filtered with.
      for (std::uint32_t o = 0; o < objs_.size(); ++o) {
        const auto& ts = stage1_->type_set(o);
        st_.types_[o].insert(ts.begin(), ts.end());
      }
    }
    std::sort(st_.diags_.begin(), st_.diags_.end());
    st_.diags_.erase(std::unique(st_.diags_.begin(), st_.diags_.end()), st_.diags_.end());
  }

  const ir::Module& m_;
  const ObjectTable& objs_;
  SolveOptions opt_;
  bool stage2_;
  const PointsToState* stage1_;

  PointsToState st_;
  std::vector<NodeId> ret_node_;
  std::vector<std::set<NodeId>> succ_;
  std::vector<std::vector<std::size_t>> uses_;
  std::vector<Constraint> constraints_;
  std::vector<std::vector<NodeId>> fields_of_;
  std::vector<std::vector<BaseAccess>> accesses_;
  std::deque<NodeId> worklist_;
  std::vector<bool> queued_;
};

PointsToState solve_stage1(const ir::Module& m, const ObjectTable& objs,
                           const SolveOptions& opt) {
  return Solver(m, objs, opt, /*stage2=*/false, nullptr).run();
}

PointsToState solve_stage2(const ir::Module& m, const ObjectTable& objs,
                           const PointsToState& stage1, const SolveOptions& opt) {
  return Solver(m, objs, opt, /*stage2=*/true, &stage1).run();
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

namespace {

struct RecordMerge {
  std::map<meta::StaticPointerRecord, ClassifiedLocation> merged;

  void add(meta::StaticPointerRecord rec, NodeId node, const std::set<std::uint32_t>& targets) {
    auto [it, fresh] = merged.try_emplace(rec);
    if (fresh) {
      it->second.record = rec;
      it->second.node = node;
    }
    it->second.heap_targets.insert(targets.begin(), targets.end());
  }

  std::vector<ClassifiedLocation> take() {
    std::vector<ClassifiedLocation> out;
    out.reserve(merged.size());
    for (auto& [rec, loc] : merged) out.push_back(std::move(loc));
    return out;
  }
};

}  // namespace

Classification classify_pointers(const PointsToState& state, const ir::Module& m,
                                 const ObjectTable& objs, const meta::GlobalIndexMap& gmap,
                                 const meta::FrameLayouts& frames) {
  Classification cls;
  RecordMerge heap, globals, stack;

  for (NodeId n = 0; n < state.node_count(); ++n) {
    const NodeInfo& info = state.nodes()[n];
    if (info.kind != NodeKind::Object && info.kind != NodeKind::FieldObj) continue;
    const AbstractObject& base = objs.object(info.object);
    if (base.kind == SiteKind::Function) continue;

    std::set<std::uint32_t> targets;
    for (NodeId t : state.points_to(n)) {
      const NodeInfo& ti = state.nodes()[t];
      if (ti.kind != NodeKind::Object && ti.kind != NodeKind::FieldObj) continue;
      const AbstractObject& to = objs.object(ti.object);
      if (to.kind == SiteKind::Heap) targets.insert(to.heap_ordinal);
    }
    if (targets.empty()) continue;

    bool star = info.kind == NodeKind::FieldObj && info.offset == kStarOffset;
    std::uint32_t off = info.kind == NodeKind::FieldObj && !star ? info.offset : 0;

    switch (base.kind) {
      case SiteKind::Heap:
        heap.add(meta::StaticPointerRecord::heap_field(
                     base.heap_ordinal, star ? meta::kAnyPointerField : off),
                 n, targets);
        break;
      case SiteKind::Global: {
        if (star) {
          bool any = false;
          for (std::uint32_t i = 0; i < gmap.cells.size(); ++i) {
            if (gmap.cells[i].global_index != base.ref) continue;
            globals.add(meta::StaticPointerRecord::global(i), n, targets);
            any = true;
          }
          if (!any)
            cls.diagnostics.push_back("uncovered global location " + info.name +
                                      " (no pointer cells)");
        } else if (auto idx = gmap.find(base.ref, off)) {
          globals.add(meta::StaticPointerRecord::global(*idx), n, targets);
        } else {
          cls.diagnostics.push_back("uncovered global location " + info.name);
        }
        break;
      }
      case SiteKind::Stack: {
        const meta::FrameLayout& fl = frames.per_function[base.func];
        std::uint32_t fid = static_cast<std::uint32_t>(base.func);
        if (star) {
          const std::vector<std::uint32_t>& ptrs =
              m.type(base.declared_type).pointer_offsets;
          bool any = false;
          for (std::uint32_t po : ptrs) {
            if (auto slot = fl.slot_of(base.instr, po)) {
              stack.add(meta::StaticPointerRecord::stack(fid, *slot), n, targets);
              any = true;
            }
          }
          if (!any)
            cls.diagnostics.push_back("uncovered stack location " + info.name +
                                      " (no pointer cells)");
        } else if (auto slot = fl.slot_of(base.instr, off)) {
          stack.add(meta::StaticPointerRecord::stack(fid, *slot), n, targets);
        } else {
          cls.diagnostics.push_back("uncovered stack location " + info.name);
        }
        break;
      }
      case SiteKind::Function:
        break;
    }
  }

  cls.heap_resident = heap.take();
  cls.global_cells = globals.take();
  cls.stack_slots = stack.take();
  std::sort(cls.diagnostics.begin(), cls.diagnostics.end());
  cls.diagnostics.erase(std::unique(cls.diagnostics.begin(), cls.diagnostics.end()),
                        cls.diagnostics.end());
  return cls;
}

StatsRecord emit_statistics(const Classification& cls, const ir::Module& m,
                            const ObjectTable& objs) {
  StatsRecord s;
  s.static_objects = objs.heap_count();
  for (const ir::Function& f : m.functions)
    for (const ir::Instruction& ins : f.body)
      if (ins.op == ir::Opcode::Call && ins.is_free) ++s.free_sites;
  s.static_heap_pointers = cls.heap_resident.size();
  s.static_global_pointers = cls.global_cells.size();
  s.static_stack_pointers = cls.stack_slots.size();
  return s;
}

std::string StatsRecord::to_text() const {
  std::ostringstream out;
  out << "static_object_count " << static_objects << "\n"
      << "free_site_count " << free_sites << "\n"
      << "static_heap_pointer_count " << static_heap_pointers << "\n"
      << "static_global_pointer_count " << static_global_pointers << "\n"
      << "static_stack_pointer_count " << static_stack_pointers << "\n";
  return out.str();
}

std::string export_facts(const PointsToState& state, const ir::Module& m,
                         const ObjectTable& objs) {
  std::vector<std::string> pt_lines, type_lines, call_lines;
  for (NodeId n = 0; n < state.node_count(); ++n) {
    const auto& pts = state.points_to(n);
    if (pts.empty()) continue;
    std::vector<std::string> names;
    for (NodeId t : pts) names.push_back(state.node_name(t));
    std::sort(names.begin(), names.end());
    std::string line = "pt " + state.node_name(n) + " -> {";
    for (std::size_t i = 0; i < names.size(); ++i)
      line += (i ? ", " : " ") + names[i];
    line += " }";
    pt_lines.push_back(std::move(line));
  }
  for (std::uint32_t o = 0; o < objs.size(); ++o) {
    const auto& ts = state.type_set(o);
    if (ts.empty()) continue;
    std::vector<std::string> names;
    for (ir::TypeId t : ts) names.push_back(m.type(t).name);
    std::sort(names.begin(), names.end());
    std::string line = "typeset " + objs.object(o).name + " -> {";
    for (std::size_t i = 0; i < names.size(); ++i)
      line += (i ? ", " : " ") + names[i];
    line += " }";
    type_lines.push_back(std::move(line));
  }
  for (const CallEdge& e : state.call_edges())
    call_lines.push_back("call " + m.functions[e.caller_func].name + "#" +
                         std::to_string(e.instr) + " -> " + m.functions[e.callee_func].name);

  std::sort(pt_lines.begin(), pt_lines.end());
  std::sort(type_lines.begin(), type_lines.end());
  std::sort(call_lines.begin(), call_lines.end());
  std::string out;
  for (auto* group : {&pt_lines, &type_lines, &call_lines})
    for (const std::string& l : *group) out += l + "\n";
  return out;
}

bool state_covers(const PointsToState& state, std::uint32_t loc_obj, std::uint32_t loc_off,
                  std::uint32_t tgt_obj, std::uint32_t tgt_off) {
  std::vector<NodeId> locs, tgts;
  auto gather = [&](std::uint32_t obj, std::uint32_t off, std::vector<NodeId>& out) {
    if (auto n = state.field_node(obj, off)) out.push_back(*n);
    if (off == 0) out.push_back(state.object_node(obj));
    if (auto n = state.field_node(obj, kStarOffset)) out.push_back(*n);
  };
  gather(loc_obj, loc_off, locs);
  gather(tgt_obj, tgt_off, tgts);
  for (NodeId l : locs) {
    const auto& pts = state.points_to(l);
    for (NodeId t : tgts)
      if (pts.count(t)) return true;
  }
  return false;
}

}  // namespace lightde::pta
