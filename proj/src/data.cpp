#include "semgraph/data.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace semgraph {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

struct Table {
  std::vector<std::string> names;
  Matrix values;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("'" + path + "' is empty");
  }
  Table t;
  t.names = split_csv(line);
  const size_t p = t.names.size();
  for (const std::string& name : t.names) {
    if (name.empty()) {
      throw std::runtime_error("'" + path + "': empty column name in header");
    }
  }

  std::vector<double> data;
  int rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != p) {
      throw std::runtime_error("'" + path + "' line " +
                               std::to_string(line_no) + ": expected " +
                               std::to_string(p) + " cells, found " +
                               std::to_string(cells.size()));
    }
    for (size_t j = 0; j < p; ++j) {
      if (cells[j].empty()) {
        throw std::runtime_error("'" + path + "' line " +
                                 std::to_string(line_no) +
                                 ": missing value in column '" + t.names[j] +
                                 "'");
      }
      char* end = nullptr;
      const double v = std::strtod(cells[j].c_str(), &end);
      if (end != cells[j].c_str() + cells[j].size() || !std::isfinite(v)) {
        throw std::runtime_error("'" + path + "' line " +
                                 std::to_string(line_no) +
                                 ": non-numeric value '" + cells[j] + "'");
      }
      data.push_back(v);
    }
    ++rows;
  }
  t.values.resize(rows, static_cast<int>(p));
  for (int i = 0; i < rows; ++i) {
    for (size_t j = 0; j < p; ++j) t.values(i, j) = data[i * p + j];
  }
  return t;
}

}  // namespace

Matrix sample_covariance(const Matrix& raw) {
  const int n = static_cast<int>(raw.rows());
  if (n < 2) {
    throw std::invalid_argument(
        "sample_covariance: need at least two observations");
  }
  const Matrix centered = raw.rowwise() - raw.colwise().mean();
  return centered.transpose() * centered / (n - 1);
}

Dataset load_raw_csv(const std::string& path) {
  Table t = read_table(path);
  const int n = static_cast<int>(t.values.rows());
  const int p = static_cast<int>(t.values.cols());
  Dataset ds;
  ds.names = t.names;
  ds.n = n;
  ds.cov = sample_covariance(t.values);
  ds.raw = std::move(t.values);
  if (n <= p) {
    ds.warnings.push_back(
        "fewer observations than variables; the sample covariance is "
        "singular");
  }
  return ds;
}

Dataset load_cov_csv(const std::string& path, int n) {
  if (n < 2) {
    throw std::invalid_argument("covariance input requires a sample size >= 2");
  }
  Table t = read_table(path);
  const int p = static_cast<int>(t.names.size());
  if (t.values.rows() != p) {
    throw std::runtime_error("'" + path + "': covariance matrix must be " +
                             std::to_string(p) + "x" + std::to_string(p));
  }
  const double scale = std::max(1.0, t.values.cwiseAbs().maxCoeff());
  if ((t.values - t.values.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * scale) {
    throw std::runtime_error("'" + path + "': covariance is not symmetric");
  }
  Eigen::LLT<Matrix> llt(t.values);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("'" + path +
                             "': covariance is not positive definite");
  }
  Dataset ds;
  ds.names = t.names;
  ds.n = n;
  ds.cov = std::move(t.values);
  return ds;
}

}  // namespace semgraph
