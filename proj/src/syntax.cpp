#include "semgraph/syntax.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

namespace semgraph {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) {
    return false;
  }
  return std::all_of(s.begin() + 1, s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

double parse_multiplier(const std::string& text, int line) {
  const std::string t = trim(text);
  if (t.empty()) throw ParseError(line, "empty multiplier before '*'");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) {
    throw ParseError(line, "malformed multiplier '" + t + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string format_multiplier(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const char* op_text(StmtOp op) {
  switch (op) {
    case StmtOp::Measure:
      return "=~";
    case StmtOp::Regress:
      return "~";
    case StmtOp::Covary:
      return "~~";
  }
  return "?";
}

// Explicit or defaulted decision for one slot while lowering.
struct Disposition {
  enum Kind { Unset, Free, Fixed } kind = Unset;
  double value = 0.0;
  int line = 0;

  bool same_as(const Disposition& o) const {
    return kind == o.kind && (kind != Fixed || value == o.value);
  }
};

class DispositionGrid {
 public:
  DispositionGrid(int rows, int cols) : rows_(rows), grid_(rows * cols) {}
  Disposition& at(int r, int c) { return grid_[c * rows_ + r]; }
  const Disposition& at(int r, int c) const { return grid_[c * rows_ + r]; }

  void set(int r, int c, Disposition d, const char* what) {
    Disposition& cur = at(r, c);
    if (cur.kind != Disposition::Unset && !cur.same_as(d)) {
      throw ParseError(d.line, std::string("conflicting fixings for ") + what +
                                   " (previous statement at line " +
                                   std::to_string(cur.line) + ")");
    }
    cur = d;
  }

 private:
  int rows_;
  std::vector<Disposition> grid_;
};

}  // namespace

ModelAst parse(const std::string& text) {
  ModelAst ast;
  std::istringstream stream(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    StmtOp op;
    size_t pos;
    size_t op_len = 2;
    if ((pos = line.find("=~")) != std::string::npos) {
      op = StmtOp::Measure;
    } else if ((pos = line.find("~~")) != std::string::npos) {
      op = StmtOp::Covary;
    } else if ((pos = line.find('~')) != std::string::npos) {
      op = StmtOp::Regress;
      op_len = 1;
    } else {
      throw ParseError(line_no, "no operator (=~, ~ or ~~) found");
    }

    Statement stmt;
    stmt.op = op;
    stmt.line = line_no;
    stmt.lhs = trim(line.substr(0, pos));
    if (!valid_identifier(stmt.lhs)) {
      throw ParseError(line_no, "invalid left-hand side '" + stmt.lhs + "'");
    }

    const std::string rhs = trim(line.substr(pos + op_len));
    if (rhs.empty()) throw ParseError(line_no, "empty right-hand side");
    for (const std::string& piece : split(rhs, '+')) {
      const std::string term_text = trim(piece);
      if (term_text.empty()) {
        throw ParseError(line_no, "empty term in right-hand side");
      }
      Term term;
      const auto stars = split(term_text, '*');
      if (stars.size() > 2) {
        throw ParseError(line_no, "at most one multiplier per term");
      }
      std::string var_text = term_text;
      if (stars.size() == 2) {
        term.multiplier = parse_multiplier(stars[0], line_no);
        var_text = trim(stars[1]);
      }
      if (!valid_identifier(var_text)) {
        throw ParseError(line_no, "invalid variable name '" + var_text + "'");
      }
      term.variable = var_text;
      stmt.rhs.push_back(std::move(term));
    }
    ast.statements.push_back(std::move(stmt));
  }
  return ast;
}

std::string render(const ModelAst& ast) {
  std::string out;
  for (const Statement& s : ast.statements) {
    out += s.lhs;
    out += ' ';
    out += op_text(s.op);
    out += ' ';
    for (size_t i = 0; i < s.rhs.size(); ++i) {
      if (i) out += " + ";
      if (s.rhs[i].multiplier) {
        out += format_multiplier(*s.rhs[i].multiplier);
        out += '*';
      }
      out += s.rhs[i].variable;
    }
    out += '\n';
  }
  return out;
}

LoweredModel lower(const ModelAst& ast,
                   const std::vector<std::string>& observed_names) {
  if (ast.statements.empty()) {
    throw std::invalid_argument("lower: model contains no statements");
  }

  // Classify every referenced variable.
  std::vector<std::string> latents;
  std::set<std::string> latent_set;
  for (const Statement& s : ast.statements) {
    if (s.op == StmtOp::Measure && !latent_set.count(s.lhs)) {
      latents.push_back(s.lhs);
      latent_set.insert(s.lhs);
    }
  }
  std::set<std::string> header(observed_names.begin(), observed_names.end());
  for (const std::string& l : latents) {
    if (header.count(l)) {
      throw std::invalid_argument("lower: '" + l +
                                  "' is both a data variable and a latent");
    }
  }

  std::set<std::string> referenced;
  for (const Statement& s : ast.statements) {
    referenced.insert(s.lhs);
    for (const Term& t : s.rhs) referenced.insert(t.variable);
  }
  for (const std::string& v : referenced) {
    if (!header.count(v) && !latent_set.count(v)) {
      throw std::invalid_argument(
          "lower: variable '" + v +
          "' is neither observed in the data nor defined as a latent");
    }
  }

  std::vector<std::string> observed;
  for (const std::string& v : observed_names) {
    if (referenced.count(v)) observed.push_back(v);
  }
  if (observed.empty()) {
    throw std::invalid_argument("lower: model references no data variables");
  }

  std::set<std::string> indicator_set;
  std::map<std::string, std::vector<std::pair<Term, int>>> loadings;
  for (const Statement& s : ast.statements) {
    if (s.op != StmtOp::Measure) continue;
    for (const Term& t : s.rhs) {
      if (latent_set.count(t.variable)) {
        throw ParseError(s.line, "higher-order factor '" + t.variable +
                                     "' is not supported");
      }
      indicator_set.insert(t.variable);
      loadings[s.lhs].emplace_back(t, s.line);
    }
  }

  // Non-indicator observed variables become single-indicator latent nodes.
  std::vector<std::string> structural = latents;
  for (const std::string& v : observed) {
    if (!indicator_set.count(v)) structural.push_back(v);
  }

  const int p = static_cast<int>(observed.size());
  const int m = static_cast<int>(structural.size());
  std::map<std::string, int> obs_row, struct_col;
  for (int i = 0; i < p; ++i) obs_row[observed[i]] = i;
  for (int j = 0; j < m; ++j) struct_col[structural[j]] = j;

  auto is_indicator = [&](const std::string& v) {
    return indicator_set.count(v) > 0;
  };
  auto structural_index = [&](const std::string& v, int line) {
    auto it = struct_col.find(v);
    if (it == struct_col.end()) {
      throw ParseError(line, "'" + v +
                                 "' is an indicator and cannot appear in a "
                                 "structural statement");
    }
    return it->second;
  };

  DispositionGrid lambda_d(p, m), psi_d(m, m), b0_d(m, m), theta_d(p, p);
  std::set<std::string> endogenous, predictors;

  for (const Statement& s : ast.statements) {
    switch (s.op) {
      case StmtOp::Measure:
        break;  // handled through the loadings lists below
      case StmtOp::Regress: {
        const int row = structural_index(s.lhs, s.line);
        endogenous.insert(s.lhs);
        for (const Term& t : s.rhs) {
          const int col = structural_index(t.variable, s.line);
          if (row == col) {
            throw ParseError(s.line, "variable regressed on itself");
          }
          predictors.insert(t.variable);
          Disposition d;
          d.kind = t.multiplier ? Disposition::Fixed : Disposition::Free;
          d.value = t.multiplier.value_or(0.0);
          d.line = s.line;
          b0_d.set(row, col, d, ("regression " + s.lhs).c_str());
        }
        break;
      }
      case StmtOp::Covary: {
        for (const Term& t : s.rhs) {
          Disposition d;
          d.kind = t.multiplier ? Disposition::Fixed : Disposition::Free;
          d.value = t.multiplier.value_or(0.0);
          d.line = s.line;
          const bool lhs_ind = is_indicator(s.lhs);
          const bool rhs_ind = is_indicator(t.variable);
          if (lhs_ind && rhs_ind) {
            const int i = obs_row.at(s.lhs);
            const int j = obs_row.at(t.variable);
            theta_d.set(i, j, d, "residual covariance");
            theta_d.set(j, i, d, "residual covariance");
          } else if (!lhs_ind && !rhs_ind) {
            const int i = structural_index(s.lhs, s.line);
            const int j = structural_index(t.variable, s.line);
            psi_d.set(i, j, d, "covariance");
            psi_d.set(j, i, d, "covariance");
          } else {
            throw ParseError(s.line,
                             "covariance between an indicator residual and a "
                             "structural variable is not supported");
          }
        }
        break;
      }
    }
  }

  // Loadings, applying the marker rule per latent: the first listed indicator
  // is fixed to 1 unless some loading carries an explicit multiplier or the
  // latent variance is explicitly fixed.
  for (const std::string& l : latents) {
    const auto& terms = loadings[l];
    const int col = struct_col.at(l);
    bool any_multiplier = false;
    for (const auto& [t, line] : terms) {
      if (t.multiplier) any_multiplier = true;
    }
    const Disposition& var_d = psi_d.at(col, col);
    const bool variance_fixed = var_d.kind == Disposition::Fixed;
    const bool marker = !any_multiplier && !variance_fixed;
    bool first = true;
    for (const auto& [t, line] : terms) {
      const int row = obs_row.at(t.variable);
      Disposition d;
      if (t.multiplier) {
        d.kind = Disposition::Fixed;
        d.value = *t.multiplier;
      } else if (first && marker) {
        d.kind = Disposition::Fixed;
        d.value = 1.0;
      } else {
        d.kind = Disposition::Free;
      }
      d.line = line;
      lambda_d.set(row, col, d, ("loading " + l).c_str());
      first = false;
    }
  }

  // Wrapped observed variables: unit loading, zero residual.
  for (const std::string& v : observed) {
    if (is_indicator(v)) continue;
    Disposition d;
    d.kind = Disposition::Fixed;
    d.value = 1.0;
    lambda_d.set(obs_row.at(v), struct_col.at(v), d, "wrapped loading");
    Disposition z;
    z.kind = Disposition::Fixed;
    z.value = 0.0;
    theta_d.set(obs_row.at(v), obs_row.at(v), z, "wrapped residual");
  }

  // Defaults: indicator residual variances, structural variances, and the
  // covariances among exogenous structural variables.
  for (const std::string& v : observed) {
    if (!is_indicator(v)) continue;
    Disposition& d = theta_d.at(obs_row.at(v), obs_row.at(v));
    if (d.kind == Disposition::Unset) d.kind = Disposition::Free;
  }
  for (int j = 0; j < m; ++j) {
    Disposition& d = psi_d.at(j, j);
    if (d.kind == Disposition::Unset) d.kind = Disposition::Free;
  }
  std::vector<int> exogenous;
  for (const std::string& name : structural) {
    if (endogenous.count(name)) continue;
    const bool declared = latent_set.count(name) > 0;
    if (declared || predictors.count(name)) {
      exogenous.push_back(struct_col.at(name));
    }
  }
  for (size_t a = 0; a < exogenous.size(); ++a) {
    for (size_t b = a + 1; b < exogenous.size(); ++b) {
      Disposition& d = psi_d.at(exogenous[a], exogenous[b]);
      if (d.kind == Disposition::Unset) {
        d.kind = Disposition::Free;
        psi_d.at(exogenous[b], exogenous[a]).kind = Disposition::Free;
      }
    }
  }

  // Assign free-parameter indices in canonical order:
  // vec(lambda), vech(psi), vec(b0), vech(theta).
  LoweredModel model;
  model.observed = observed;
  model.latents = latents;
  model.structural = structural;
  ParameterSpec& spec = model.spec;
  spec.lambda = SlotMatrix(p, m);
  spec.psi = SlotMatrix(m, m);
  spec.b0 = SlotMatrix(m, m);
  spec.theta = SlotMatrix(p, p);

  int next = 0;
  auto take = [&](const std::string& label) {
    spec.labels.push_back(label);
    return next++;
  };

  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < p; ++i) {
      const Disposition& d = lambda_d.at(i, j);
      if (d.kind == Disposition::Free) {
        spec.lambda(i, j) =
            Slot::free(take(structural[j] + " =~ " + observed[i]));
      } else if (d.kind == Disposition::Fixed) {
        spec.lambda(i, j) = Slot::fixed(d.value);
      }
    }
  }
  for (int j = 0; j < m; ++j) {
    for (int i = j; i < m; ++i) {
      const Disposition& d = psi_d.at(i, j);
      if (d.kind == Disposition::Free) {
        spec.psi.set_symmetric(
            i, j, Slot::free(take(structural[j] + " ~~ " + structural[i])));
      } else if (d.kind == Disposition::Fixed) {
        spec.psi.set_symmetric(i, j, Slot::fixed(d.value));
      }
    }
  }
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const Disposition& d = b0_d.at(i, j);
      if (d.kind == Disposition::Free) {
        spec.b0(i, j) = Slot::free(take(structural[i] + " ~ " + structural[j]));
      } else if (d.kind == Disposition::Fixed) {
        spec.b0(i, j) = Slot::fixed(d.value);
      }
    }
  }
  for (int j = 0; j < p; ++j) {
    for (int i = j; i < p; ++i) {
      const Disposition& d = theta_d.at(i, j);
      if (d.kind == Disposition::Free) {
        spec.theta.set_symmetric(
            i, j, Slot::free(take(observed[j] + " ~~ " + observed[i])));
      } else if (d.kind == Disposition::Fixed) {
        spec.theta.set_symmetric(i, j, Slot::fixed(d.value));
      }
    }
  }

  spec.theta_dim = next;
  validate(spec);
  return model;
}

}  // namespace semgraph
