#include "lightde/pipeline.hpp"

namespace lightde::pipeline {

Products build(const ir::Module& m, bool stack_hooks) {
  Products p;
  p.objects = pta::ObjectTable::build(m);
  p.stage1 = pta::solve_stage1(m, p.objects);
  p.stage2 = pta::solve_stage2(m, p.objects, p.stage1);
  p.gmap = meta::assign_global_indices(m);
  p.frames = meta::build_frame_layouts(m);
  p.classes = pta::classify_pointers(p.stage2, m, p.objects, p.gmap, p.frames);
  p.table = meta::build_tables(p.stage2, p.classes, m, p.objects, p.gmap, p.frames, stack_hooks);
  return p;
}

std::string facts_text(const ir::Module& m, const Products& p) {
  std::string out = "[stage1]\n";
  out += pta::export_facts(p.stage1, m, p.objects);
  out += "[stage2]\n";
  out += pta::export_facts(p.stage2, m, p.objects);
  return out;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Prevented: return "PREVENTED";
    case Verdict::NotPrevented: return "NOT-PREVENTED";
    case Verdict::NotApplicable: return "NOT-APPLICABLE";
  }
  return "?";
}

UafCheck check_uaf(const ir::Module& m, const Products& p) {
  UafCheck c;
  std::uint64_t free_sites = 0;
  for (const ir::Function& f : m.functions)
    for (const ir::Instruction& ins : f.body)
      if (ins.op == ir::Opcode::Call && ins.is_free) ++free_sites;

  interp::InterpOptions unprot;
  unprot.runtime.protected_mode = false;
  c.unprotected_run = interp::interp_run(m, p.objects, nullptr, unprot);

  interp::InterpOptions prot;
  prot.runtime.protected_mode = true;
  prot.runtime.sync_sweep = true;
  c.protected_run = interp::interp_run(m, p.objects, &p.table, prot);

  if (free_sites == 0) {
    c.verdict = Verdict::NotApplicable;
    return c;
  }
  bool unprot_uaf = c.unprotected_run.stale_reads > 0;
  bool prot_trap = c.protected_run.null_traps > 0;
  bool prot_clean = c.protected_run.stale_reads == 0;
  if (unprot_uaf && prot_trap && prot_clean)
    c.verdict = Verdict::Prevented;
  else if (!unprot_uaf && prot_clean && !prot_trap)
    c.verdict = Verdict::Prevented;  // nothing dangles once frees are deferred
  else
    c.verdict = Verdict::NotPrevented;
  return c;
}

std::string UafCheck::to_text() const {
  std::string out = "verdict ";
  out += verdict_name(verdict);
  out += "\n";
  out += "unprotected.stale_reads " + std::to_string(unprotected_run.stale_reads) + "\n";
  out += "unprotected.null_traps " + std::to_string(unprotected_run.null_traps) + "\n";
  out += "protected.stale_reads " + std::to_string(protected_run.stale_reads) + "\n";
  out += "protected.null_traps " + std::to_string(protected_run.null_traps) + "\n";
  out += "protected.nullified " + std::to_string(protected_run.sweep.nullified_total()) + "\n";
  return out;
}

}  // namespace lightde::pipeline
