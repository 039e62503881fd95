#pragma once

#include "semgraph/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semgraph {

/// Parse failure with the 1-based source line it occurred on.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class StmtOp { Measure, Regress, Covary };  // =~  ~  ~~

struct Term {
  std::optional<double> multiplier;  // fixed value; absent means free
  std::string variable;

  friend bool operator==(const Term&, const Term&) = default;
};

struct Statement {
  std::string lhs;
  StmtOp op = StmtOp::Measure;
  std::vector<Term> rhs;
  int line = 0;

  friend bool operator==(const Statement& a, const Statement& b) {
    return a.lhs == b.lhs && a.op == b.op && a.rhs == b.rhs;
  }
};

struct ModelAst {
  std::vector<Statement> statements;

  friend bool operator==(const ModelAst&, const ModelAst&) = default;
};

/// One statement per non-empty non-comment line; '#' starts a comment,
/// '+' separates right-hand terms, '*' binds a fixed numeric multiplier.
ModelAst parse(const std::string& text);

/// Canonical text form; parse(render(ast)) == ast.
std::string render(const ModelAst& ast);

struct LoweredModel {
  std::vector<std::string> observed;    // data-header order, referenced only
  std::vector<std::string> latents;     // declared latents, first appearance
  std::vector<std::string> structural;  // psi/b0 axis: latents then wrapped
                                        // observed variables
  ParameterSpec spec;
};

/// Applies the default identification rules and produces the parameter
/// pattern. Observed variables that are not indicators are wrapped as
/// single-indicator latent nodes with a fixed unit loading and a fixed-zero
/// residual.
LoweredModel lower(const ModelAst& ast,
                   const std::vector<std::string>& observed_names);

}  // namespace semgraph
