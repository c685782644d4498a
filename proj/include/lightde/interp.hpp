#pragma once

#include <stdexcept>
#include <vector>

#include "lightde/analysis.hpp"
#include "lightde/ir.hpp"
#include "lightde/metadata.hpp"
#include "lightde/runtime.hpp"

namespace lightde::interp {

struct InterpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InterpOptions {
  rt::RuntimeConfig runtime;
  std::uint64_t max_steps = 20'000'000;
  std::uint32_t max_depth = 512;
  bool record_facts = false;
};

// A runtime cell (or pointer value) mapped back to the static world: the
// abstract object owning the address and the byte offset inside it.
struct CellRef {
  std::uint32_t object = 0;  // ObjectTable id
  std::uint32_t offset = 0;
};

// "The cell at `location` held an address into `target`": observed by the
// instrumented interpreter at store time; checked against stage-2 facts.
struct ObservedFact {
  CellRef location;
  CellRef target;
};

// Executes the module from its entry function. In protected mode, alloc/free
// and frame hooks fire, frees are deferred to the sweeper, and `metadata` is
// required and must carry the module's hash. In unprotected mode frees release
// memory immediately.
rt::ExecutionReport interp_run(const ir::Module& m, const pta::ObjectTable& objs,
                               const meta::ObjectPointerTable* metadata,
                               const InterpOptions& opt,
                               std::vector<ObservedFact>* facts_out = nullptr);

}  // namespace lightde::interp
