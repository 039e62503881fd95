#include "semgraph/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace semgraph::cli {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Method parse_method(const std::string& name) {
  if (name == "adam") return Method::Adam;
  if (name == "momentum") return Method::Momentum;
  if (name == "gd") return Method::GD;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

BaseObjective parse_objective(const std::string& name) {
  if (name == "ml") return BaseObjective::ML;
  if (name == "gls") return BaseObjective::GLS;
  if (name == "lad") return BaseObjective::LAD;
  throw std::invalid_argument("unknown objective '" + name + "'");
}

std::optional<PenaltyKind> parse_penalty(const std::string& name) {
  if (name == "none") return std::nullopt;
  if (name == "lasso") return PenaltyKind::Lasso;
  if (name == "ridge") return PenaltyKind::Ridge;
  if (name == "elasticnet") return PenaltyKind::ElasticNet;
  if (name == "spikeslab") return PenaltyKind::SpikeSlab;
  throw std::invalid_argument("unknown penalty '" + name + "'");
}

PenaltyTerm make_penalty(const RunOptions& options, PenaltyKind kind) {
  PenaltyTerm term;
  term.kind = kind;
  term.lambda1 = options.lambda1;
  term.lambda2 = options.lambda2;
  term.pi = options.pi;
  if (options.target == "lambda") {
    term.matrix = MatrixTarget::Lambda;
  } else if (options.target == "b0") {
    term.matrix = MatrixTarget::B0;
  } else if (options.target == "psi") {
    term.matrix = MatrixTarget::Psi;
  } else if (options.target == "theta") {
    term.matrix = MatrixTarget::Theta;
  } else {
    std::string cur;
    for (char c : options.target) {
      if (c == ',') {
        if (!cur.empty()) term.labels.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) term.labels.push_back(cur);
    if (term.labels.empty()) {
      throw std::invalid_argument("penalty target is empty");
    }
  }
  return term;
}

const char* status_text(FitStatus status) {
  switch (status) {
    case FitStatus::Converged:
      return "converged";
    case FitStatus::MaxIter:
      return "maxiter";
    case FitStatus::Failed:
      return "failed";
  }
  return "failed";
}

const char* matrix_name(int which) {
  switch (which) {
    case 0:
      return "lambda";
    case 1:
      return "psi";
    case 2:
      return "b0";
    default:
      return "theta";
  }
}

struct Prepared {
  Dataset data;
  LoweredModel model;
  ObjectiveSpec objective;
  OptimizerConfig config;
  bool penalized = false;
};

Prepared prepare(const RunOptions& options, double lambda_override = -1.0) {
  Prepared prep;
  prep.data = options.cov_input ? load_cov_csv(options.data_path, options.n)
                                : load_raw_csv(options.data_path);
  const ModelAst ast = parse(read_file(options.model_path));
  prep.model = lower(ast, prep.data.names);

  // subset the covariance to the variables the model references
  const int p = static_cast<int>(prep.model.observed.size());
  Matrix s(p, p);
  std::vector<int> cols;
  for (const std::string& name : prep.model.observed) {
    for (size_t j = 0; j < prep.data.names.size(); ++j) {
      if (prep.data.names[j] == name) {
        cols.push_back(static_cast<int>(j));
        break;
      }
    }
  }
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) s(i, j) = prep.data.cov(cols[i], cols[j]);
  }
  prep.data.cov = s;
  prep.data.names = prep.model.observed;

  prep.objective.base = parse_objective(options.objective);
  if (auto kind = parse_penalty(options.penalty)) {
    PenaltyTerm term = make_penalty(options, *kind);
    if (lambda_override >= 0.0) {
      if (*kind == PenaltyKind::Ridge) {
        term.lambda2 = lambda_override;
      } else {
        term.lambda1 = lambda_override;
      }
    }
    prep.objective.penalties.push_back(term);
    prep.penalized = true;
  }

  prep.config.method = parse_method(options.optimizer);
  prep.config.step_size = options.lr;
  prep.config.max_iter = options.max_iter;
  prep.config.tol_grad = options.tol_grad;
  return prep;
}

json config_echo(const RunOptions& options, const Prepared& prep) {
  json cfg;
  cfg["model"] = options.model_path;
  cfg["data"] = options.data_path;
  cfg["cov_input"] = options.cov_input;
  cfg["n"] = prep.data.n;
  cfg["covariance_divisor"] = "n-1";
  cfg["objective"] = options.objective;
  cfg["penalty"] = options.penalty;
  if (options.penalty != "none") {
    cfg["target"] = options.target;
    cfg["lambda1"] = options.lambda1;
    cfg["lambda2"] = options.lambda2;
    cfg["pi"] = options.pi;
  }
  cfg["optimizer"] = options.optimizer;
  cfg["lr"] = prep.config.step_size;
  cfg["beta1"] = prep.config.beta1;
  cfg["beta2"] = prep.config.beta2;
  cfg["epsilon"] = prep.config.epsilon;
  cfg["max_iter"] = prep.config.max_iter;
  cfg["tol_grad"] = prep.config.tol_grad;
  cfg["tol_obj"] = prep.config.tol_obj;
  cfg["zero_threshold"] = options.zero_threshold;
  cfg["observed"] = prep.model.observed;
  cfg["latents"] = prep.model.latents;
  cfg["free_parameters"] = prep.model.spec.theta_dim;
  return cfg;
}

RunReport assemble_report(const RunOptions& options, const Prepared& prep,
                          const Graph& graph, const FitResult& result) {
  RunReport report;
  report.config = config_echo(options, prep);
  report.status = result.status;
  report.iterations = result.iterations;
  report.grad_inf_norm = result.grad_inf_norm;
  report.include_trace = options.include_trace;
  if (options.include_trace) report.trace = result.objective_trace;
  report.warnings = prep.data.warnings;
  if (result.status == FitStatus::Failed) {
    report.warnings.push_back("fit failed: " + result.failure);
    report.parameters = parameter_rows(prep.model.spec, result.theta_hat,
                                       nullptr, prep.penalized,
                                       options.zero_threshold);
    return report;
  }

  const Vector* se_ptr = nullptr;
  Vector se;
  if (prep.objective.base == BaseObjective::ML && !prep.penalized) {
    InferenceReport inference =
        infer(graph, prep.objective, result.theta_hat, prep.data.cov,
              prep.data.n);
    se = inference.se;
    se_ptr = &se;
    report.fit = inference.measures;
    for (const std::string& w : inference.warnings) {
      report.warnings.push_back(w);
    }
  } else {
    report.warnings.push_back(
        "standard errors and fit measures are reported only for unpenalized "
        "maximum-likelihood fits");
  }
  report.parameters =
      parameter_rows(prep.model.spec, result.theta_hat, se_ptr,
                     prep.penalized, options.zero_threshold);
  return report;
}

void emit(const json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    out << doc.dump(2) << '\n';
  }
}

}  // namespace

std::vector<ParameterRow> parameter_rows(const ParameterSpec& spec,
                                         const Vector& theta_hat,
                                         const Vector* se, bool penalized,
                                         double zero_threshold) {
  std::vector<ParameterRow> rows(spec.theta_dim);
  std::vector<bool> seen(spec.theta_dim, false);
  const SlotMatrix* mats[4] = {&spec.lambda, &spec.psi, &spec.b0, &spec.theta};
  const bool symmetric[4] = {false, true, false, true};
  for (int which = 0; which < 4; ++which) {
    const SlotMatrix& m = *mats[which];
    for (int j = 0; j < m.cols(); ++j) {
      for (int i = symmetric[which] ? j : 0; i < m.rows(); ++i) {
        const Slot& s = m(i, j);
        if (!s.is_free() || seen[s.index]) continue;
        seen[s.index] = true;
        ParameterRow& row = rows[s.index];
        row.label = spec.labels[s.index];
        row.matrix = matrix_name(which);
        row.row = i;
        row.col = j;
        row.estimate = theta_hat(s.index);
        if (se) row.se = (*se)(s.index);
        row.zeroed =
            penalized && std::abs(theta_hat(s.index)) < zero_threshold;
      }
    }
  }
  return rows;
}

json report_json(const RunReport& report) {
  json doc;
  doc["config"] = report.config;
  doc["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
  doc["parameters"] = json::array();
  for (const ParameterRow& row : report.parameters) {
    json r;
    r["label"] = row.label;
    r["matrix"] = row.matrix;
    r["row"] = row.row;
    r["col"] = row.col;
    r["estimate"] = row.estimate;
    r["se"] = row.se ? json(*row.se) : json(nullptr);
    r["zeroed"] = row.zeroed;
    doc["parameters"].push_back(std::move(r));
  }
  if (report.fit) {
    doc["fit"] = {{"chi2", report.fit->chi2},   {"df", report.fit->df},
                  {"p", report.fit->p_value},   {"aic", report.fit->aic},
                  {"bic", report.fit->bic},     {"loglik", report.fit->loglik}};
  } else {
    doc["fit"] = nullptr;
  }
  doc["convergence"] = {{"status", status_text(report.status)},
                        {"iterations", report.iterations},
                        {"grad_inf_norm", report.grad_inf_norm}};
  if (report.include_trace) doc["trace"] = report.trace;
  if (!report.warnings.empty()) doc["warnings"] = report.warnings;
  return doc;
}

void write_tsv(const std::vector<ParameterRow>& rows,
               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "label\tmatrix\trow\tcol\testimate\tse\tzeroed\n";
  out.precision(17);
  for (const ParameterRow& row : rows) {
    out << row.label << '\t' << row.matrix << '\t' << row.row << '\t'
        << row.col << '\t' << row.estimate << '\t';
    if (row.se) {
      out << *row.se;
    } else {
      out << "NA";
    }
    out << '\t' << (row.zeroed ? 1 : 0) << '\n';
  }
}

RunReport run_fit(const RunOptions& options) {
  Prepared prep = prepare(options);
  Graph graph(prep.model.spec.theta_dim);
  build_objective(graph, prep.model.spec, prep.objective, prep.data.cov);
  const Vector theta0 = default_start(prep.model.spec, prep.data.cov);
  const FitResult result = fit(graph, theta0, prep.config);
  return assemble_report(options, prep, graph, result);
}

std::vector<RunReport> run_path(const RunOptions& options) {
  if (options.lambdas.empty()) {
    throw std::invalid_argument("path mode needs --lambdas");
  }
  if (options.penalty == "none") {
    throw std::invalid_argument("path mode needs a penalty");
  }
  Prepared first = prepare(options, options.lambdas.front());

  auto builder = [&](double lambda) {
    Prepared prep = prepare(options, lambda);
    Graph graph(prep.model.spec.theta_dim);
    build_objective(graph, prep.model.spec, prep.objective, prep.data.cov);
    return graph;
  };
  const Vector theta0 = default_start(first.model.spec, first.data.cov);
  const std::vector<FitResult> results =
      penalty_path(builder, theta0, options.lambdas, first.config);

  std::vector<RunReport> reports;
  for (size_t i = 0; i < results.size(); ++i) {
    Prepared prep = prepare(options, options.lambdas[i]);
    Graph graph(prep.model.spec.theta_dim);
    build_objective(graph, prep.model.spec, prep.objective, prep.data.cov);
    RunReport report = assemble_report(options, prep, graph, results[i]);
    report.config["lambda"] = options.lambdas[i];
    reports.push_back(std::move(report));
  }
  return reports;
}

int exit_code(FitStatus status) {
  switch (status) {
    case FitStatus::Converged:
      return 0;
    case FitStatus::MaxIter:
      return 2;
    case FitStatus::Failed:
      return 1;
  }
  return 1;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"structural equation models on a computation graph"};
  app.require_subcommand(1);

  RunOptions options;
  std::string lambdas_text;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--model", options.model_path, "model file")->required();
    cmd->add_option("--data", options.data_path, "CSV data file")->required();
    cmd->add_flag("--cov", options.cov_input,
                  "treat the data file as a covariance matrix");
    cmd->add_option("--n", options.n, "sample size for covariance input");
    cmd->add_option("--objective", options.objective, "ml|gls|lad");
    cmd->add_option("--penalty", options.penalty,
                    "none|lasso|ridge|elasticnet|spikeslab");
    cmd->add_option("--target", options.target,
                    "lambda|b0|theta|psi or comma-separated labels");
    cmd->add_option("--lambda1", options.lambda1, "L1 strength");
    cmd->add_option("--lambda2", options.lambda2, "squared strength");
    cmd->add_option("--pi", options.pi, "spike weight");
    cmd->add_option("--optimizer", options.optimizer, "adam|momentum|gd");
    cmd->add_option("--lr", options.lr, "step size");
    cmd->add_option("--max-iter", options.max_iter, "iteration cap");
    cmd->add_option("--tol-grad", options.tol_grad,
                    "gradient convergence tolerance");
    cmd->add_option("--zero-threshold", options.zero_threshold,
                    "reporting threshold for penalized estimates");
    cmd->add_option("--out", options.out_path, "JSON output path");
    cmd->add_option("--tsv", options.tsv_path, "TSV parameter table path");
    cmd->add_flag("--trace", options.include_trace,
                  "include the objective trace");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "estimate a single model");
  add_common(fit_cmd);
  CLI::App* path_cmd =
      app.add_subcommand("path", "warm-started penalty path");
  add_common(path_cmd);
  path_cmd->add_option("--lambdas", lambdas_text,
                       "comma-separated penalty strengths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (options.cov_input && options.n < 2) {
      throw std::invalid_argument("covariance input requires --n");
    }
    if (app.got_subcommand(fit_cmd)) {
      const RunReport report = run_fit(options);
      emit(report_json(report), options.out_path);
      if (!options.tsv_path.empty()) {
        write_tsv(report.parameters, options.tsv_path);
      }
      return exit_code(report.status);
    }

    std::string cur;
    for (char c : lambdas_text + ",") {
      if (c == ',') {
        if (!cur.empty()) options.lambdas.push_back(std::stod(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    const std::vector<RunReport> reports = run_path(options);
    json doc;
    doc["config"] = reports.front().config;
    doc["config"].erase("lambda");
    doc["config"]["lambdas"] = options.lambdas;
    doc["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    doc["fits"] = json::array();
    int code = 0;
    for (size_t i = 0; i < reports.size(); ++i) {
      json f = report_json(reports[i]);
      f.erase("config");
      f.erase("timestamp");
      f["lambda"] = options.lambdas[i];
      doc["fits"].push_back(std::move(f));
      code = std::max(code, exit_code(reports[i].status) == 1
                                ? 3
                                : exit_code(reports[i].status));
    }
    emit(doc, options.out_path);
    if (!options.tsv_path.empty()) {
      write_tsv(reports.back().parameters, options.tsv_path);
    }
    return code == 3 ? 1 : code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace semgraph::cli
