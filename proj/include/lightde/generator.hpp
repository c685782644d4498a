#pragma once

#include <cstdint>
#include <random>

#include "lightde/ir.hpp"

namespace lightde::gen {

struct GenOptions {
  std::uint64_t seed = 1;
  std::uint32_t max_instructions = 50;  // whole-module budget
  std::uint32_t max_functions = 3;
  std::uint32_t max_globals = 2;
  bool allow_free = true;
};

// Produces a random valid module: straight-line functions, calls form a DAG
// (directly and through function-pointer registers), field accesses use
// registered type paths or variable-offset markers. Deterministic per seed.
ir::Module generate_module(const GenOptions& opt);

}  // namespace lightde::gen
