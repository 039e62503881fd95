#pragma once

#include "semgraph/data.hpp"
#include "semgraph/inference.hpp"
#include "semgraph/optim.hpp"
#include "semgraph/syntax.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace semgraph::cli {

struct RunOptions {
  std::string model_path;
  std::string data_path;
  bool cov_input = false;
  int n = 0;  // required with cov_input
  std::string objective = "ml";  // ml | gls | lad
  std::string penalty = "none";  // none | lasso | ridge | elasticnet | spikeslab
  std::string target = "lambda";  // lambda | b0 | theta | psi | label list
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double pi = 0.5;
  std::vector<double> lambdas;  // path mode grid
  std::string optimizer = "adam";
  double lr = 0.01;
  int max_iter = 5000;
  double tol_grad = 1e-5;
  double zero_threshold = 1e-3;
  std::string out_path;  // empty: stdout
  std::string tsv_path;
  bool include_trace = false;
};

struct ParameterRow {
  std::string label;
  std::string matrix;  // lambda | psi | b0 | theta
  int row = 0;
  int col = 0;
  double estimate = 0.0;
  std::optional<double> se;
  bool zeroed = false;
};

struct RunReport {
  nlohmann::json config;
  std::vector<ParameterRow> parameters;
  std::optional<FitMeasures> fit;
  FitStatus status = FitStatus::Failed;
  int iterations = 0;
  double grad_inf_norm = 0.0;
  std::vector<double> trace;
  bool include_trace = false;
  std::vector<std::string> warnings;
};

/// Rows in canonical free-parameter order, flagging penalized estimates
/// below the reporting threshold.
std::vector<ParameterRow> parameter_rows(const ParameterSpec& spec,
                                         const Vector& theta_hat,
                                         const Vector* se, bool penalized,
                                         double zero_threshold);

nlohmann::json report_json(const RunReport& report);
void write_tsv(const std::vector<ParameterRow>& rows, const std::string& path);

/// End-to-end single fit: parse, lower, build, fit, infer, report.
RunReport run_fit(const RunOptions& options);

/// Warm-started penalty path; one report entry per lambda.
std::vector<RunReport> run_path(const RunOptions& options);

/// Process exit code for a finished run: 0 converged, 2 iteration cap.
int exit_code(FitStatus status);

/// Full command-line entry point; returns the process exit code (1 on error).
int main_entry(int argc, char** argv);

}  // namespace semgraph::cli
