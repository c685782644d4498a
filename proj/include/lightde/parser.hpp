#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "lightde/ir.hpp"

namespace lightde::ir {

struct ParseError : std::runtime_error {
  ParseError(std::uint32_t line, std::uint32_t col, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ":" + std::to_string(col) +
                           ": " + what),
        line(line),
        col(col) {}
  std::uint32_t line;
  std::uint32_t col;
};

// Parses the `.lir` textual form (see docs/ir_grammar.md). Throws ParseError
// with a line/column on syntax errors, undefined names, and arity mistakes.
// The returned module still needs validate() for structural checks that are
// legal per grammar (e.g. a second entry function is caught there).
Module parse_module(std::string_view text);

}  // namespace lightde::ir
