#pragma once

#include <string>

#include "lightde/analysis.hpp"
#include "lightde/interp.hpp"
#include "lightde/ir.hpp"
#include "lightde/metadata.hpp"

namespace lightde::pipeline {

// Everything derived from one module: analysis stages, classification, and
// the metadata table.
struct Products {
  pta::ObjectTable objects;
  pta::PointsToState stage1;
  pta::PointsToState stage2;
  meta::GlobalIndexMap gmap;
  meta::FrameLayouts frames;
  pta::Classification classes;
  meta::ObjectPointerTable table;
};

Products build(const ir::Module& m, bool stack_hooks = true);

// Both-sections facts file body for `analyze`.
std::string facts_text(const ir::Module& m, const Products& p);

enum class Verdict { Prevented, NotPrevented, NotApplicable };
const char* verdict_name(Verdict v);

struct UafCheck {
  Verdict verdict = Verdict::NotApplicable;
  rt::ExecutionReport protected_run;
  rt::ExecutionReport unprotected_run;

  std::string to_text() const;
};

// Runs the module unprotected and protected (with a drained sweeper after
// every free). PREVENTED means the unprotected run demonstrated a stale read
// that the protected run turned into a null trap: or that no dangling use
// exists at all once frees are deferred.
UafCheck check_uaf(const ir::Module& m, const Products& p);

}  // namespace lightde::pipeline
