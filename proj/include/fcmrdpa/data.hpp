#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcmrdpa/model.hpp"
#include "fcmrdpa/rng.hpp"

namespace fcmrdpa {

struct CsvSchema {
  std::string target;
  std::vector<std::string> categorical;
  std::vector<std::string> ignore;
  char separator = ',';
  bool has_header = true;
  std::vector<std::string> column_names;  // required when has_header = false
};

struct RawColumn {
  std::string name;
  bool categorical = false;
  std::vector<double> numeric;
  std::vector<std::string> labels;
};

struct RawTable {
  std::vector<RawColumn> features;
  std::vector<double> target;
  std::string target_name;
  Eigen::Index rows = 0;
};

namespace detail {

inline std::string trim_cell(std::string s) {
  const auto notspace = [](unsigned char c) {
    return !std::isspace(c);
  };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      cells.push_back(trim_cell(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(trim_cell(cur));
  return cells;
}

inline double parse_number(const std::string& cell, const std::string& col,
                           std::size_t line_no) {
  if (cell.empty())
    throw std::runtime_error("csv: missing value in column '" + col +
                             "' at line " + std::to_string(line_no));
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size())
    throw std::runtime_error("csv: non-numeric value '" + cell +
                             "' in column '" + col + "' at line " +
                             std::to_string(line_no));
  return v;
}

}  // namespace detail

/// Reads a delimited text file into typed columns. Categorical and ignored
/// columns come from the schema; everything else, including the target, must
/// parse as a number. Whitespace-separated files are accepted when the
/// separator is a tab or space (runs are collapsed).
inline RawTable load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path);
  if (schema.target.empty())
    throw std::invalid_argument("csv: no target column designated");

  const bool whitespace_sep =
      schema.separator == '\t' || schema.separator == ' ';
  auto split_row = [&](const std::string& line) {
    if (!whitespace_sep) return detail::split_line(line, schema.separator);
    std::istringstream ls(line);
    std::vector<std::string> cells;
    std::string tok;
    while (ls >> tok) cells.push_back(detail::trim_cell(tok));
    return cells;
  };

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> names;
  if (schema.has_header) {
    if (!std::getline(is, line))
      throw std::runtime_error("csv: empty file " + path);
    ++line_no;
    names = split_row(line);
  } else {
    names = schema.column_names;
    if (names.empty())
      throw std::invalid_argument(
          "csv: headerless file needs explicit column names");
  }

  const auto listed = [](const std::vector<std::string>& v,
                         const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };

  RawTable table;
  table.target_name = schema.target;
  std::vector<int> kind(names.size());  // 0 numeric, 1 categorical, 2 ignore, 3 target
  bool has_target = false;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (names[c] == schema.target) {
      kind[c] = 3;
      has_target = true;
    } else if (listed(schema.ignore, names[c])) {
      kind[c] = 2;
    } else if (listed(schema.categorical, names[c])) {
      kind[c] = 1;
      table.features.push_back({names[c], true, {}, {}});
    } else {
      kind[c] = 0;
      table.features.push_back({names[c], false, {}, {}});
    }
  }
  if (!has_target)
    throw std::runtime_error("csv: target column '" + schema.target +
                             "' not found in " + path);

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cells = split_row(line);
    if (cells.size() != names.size())
      throw std::runtime_error(
          "csv: ragged row at line " + std::to_string(line_no) + " in " +
          path + " (" + std::to_string(cells.size()) + " cells, expected " +
          std::to_string(names.size()) + ")");
    std::size_t f = 0;
    for (std::size_t c = 0; c < names.size(); ++c) {
      switch (kind[c]) {
        case 0:
          table.features[f++].numeric.push_back(
              detail::parse_number(cells[c], names[c], line_no));
          break;
        case 1: {
          if (cells[c].empty())
            throw std::runtime_error("csv: missing value in column '" +
                                     names[c] + "' at line " +
                                     std::to_string(line_no));
          table.features[f++].labels.push_back(cells[c]);
          break;
        }
        case 2:
          break;
        case 3:
          table.target.push_back(
              detail::parse_number(cells[c], names[c], line_no));
          break;
      }
    }
    ++table.rows;
  }
  if (table.rows == 0) throw std::runtime_error("csv: no data rows in " + path);
  return table;
}

struct EncodedData {
  Matrix X;
  Vector y;
  std::vector<std::string> feature_names;
  /// category list per original categorical column, in first-appearance order
  std::vector<std::pair<std::string, std::vector<std::string>>> categories;
};

/// One-hot expansion: a categorical column with k observed categories becomes
/// k indicator columns; numeric columns pass through unchanged.
inline EncodedData one_hot(const RawTable& table) {
  EncodedData out;
  const Eigen::Index n = table.rows;
  std::vector<std::vector<double>> cols;
  for (const auto& col : table.features) {
    if (!col.categorical) {
      cols.emplace_back(col.numeric);
      out.feature_names.push_back(col.name);
      continue;
    }
    std::vector<std::string> cats;
    for (const auto& v : col.labels)
      if (std::find(cats.begin(), cats.end(), v) == cats.end())
        cats.push_back(v);
    out.categories.emplace_back(col.name, cats);
    for (const auto& cat : cats) {
      std::vector<double> ind(n, 0.0);
      for (Eigen::Index i = 0; i < n; ++i)
        if (col.labels[i] == cat) ind[i] = 1.0;
      cols.push_back(std::move(ind));
      out.feature_names.push_back(col.name + "=" + cat);
    }
  }
  out.X.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (Eigen::Index i = 0; i < n; ++i) out.X(i, c) = cols[c][i];
  out.y = Eigen::Map<const Vector>(table.target.data(), n);
  return out;
}

struct SplitIndices {
  std::vector<Eigen::Index> train, val, test;
  std::uint64_t seed = 0;
};

/// Random 70/15/15 partition (proportions configurable, rounding to nearest).
inline SplitIndices split(Eigen::Index n, double train_frac, double val_frac,
                          double test_frac, std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("split: need at least 3 samples");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split: proportions must sum to 1");
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<Eigen::Index>(std::llround(train_frac * n));
  const auto n_val = static_cast<Eigen::Index>(std::llround(val_frac * n));
  SplitIndices s;
  s.seed = seed;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

inline SplitIndices split(Eigen::Index n, std::uint64_t seed) {
  return split(n, 0.70, 0.15, 0.15, seed);
}

struct NormStats {
  Vector mean;
  Vector std;  ///< population convention; 0 marks a constant feature
};

struct PcaProjection {
  Matrix components;   ///< M x d, orthonormal columns, sign-fixed
  Vector mean;         ///< training mean removed before projecting
  Vector eigenvalues;  ///< top-d eigenvalues of the training covariance
  Vector explained;    ///< fraction of total variance per component
};

/// Top-d eigenvectors of the training covariance. Deterministic sign: the
/// largest-magnitude entry of each component is made positive.
inline PcaProjection pca_fit(const Eigen::Ref<const Matrix>& X, int d) {
  const Eigen::Index m = X.cols();
  if (d < 1 || d > m)
    throw std::invalid_argument("pca_fit: dimension out of range");
  PcaProjection p;
  p.mean = X.colwise().mean();
  const Matrix centered = X.rowwise() - p.mean.transpose();
  const Matrix cov =
      centered.transpose() * centered / static_cast<double>(X.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("pca_fit: eigendecomposition failed");
  const double total = std::max(eig.eigenvalues().sum(), 1e-300);
  p.components.resize(m, d);
  p.eigenvalues.resize(d);
  p.explained.resize(d);
  for (int j = 0; j < d; ++j) {
    const Eigen::Index src = m - 1 - j;  // eigenvalues come back ascending
    Vector v = eig.eigenvectors().col(src);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    p.components.col(j) = v;
    p.eigenvalues[j] = eig.eigenvalues()[src];
    p.explained[j] = eig.eigenvalues()[src] / total;
  }
  return p;
}

inline Matrix pca_apply(const PcaProjection& p,
                        const Eigen::Ref<const Matrix>& X) {
  return (X.rowwise() - p.mean.transpose()) * p.components;
}

/// Fully prepared splits. Normalization and PCA statistics are fit on the
/// training split only and travel with the value, so downstream code cannot
/// refit them on validation/test data.
struct Dataset {
  Matrix x_train, x_val, x_test;
  Vector y_train, y_val, y_test;
  NormStats stats;
  double y_mean = 0.0;
  std::optional<PcaProjection> pca;
};

namespace detail {

inline Matrix gather_rows(const Eigen::Ref<const Matrix>& X,
                          const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = X.row(idx[i]);
  return out;
}

inline Vector gather(const Eigen::Ref<const Vector>& v,
                     const std::vector<Eigen::Index>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace detail

/// z-normalizes features with training-split statistics (constant features
/// map to all-zeros) and centers the target by its training mean.
inline Dataset znorm_fit_apply(const Eigen::Ref<const Matrix>& X,
                               const Eigen::Ref<const Vector>& y,
                               const SplitIndices& idx) {
  Dataset d;
  const Matrix xtr = detail::gather_rows(X, idx.train);
  const Eigen::Index n = xtr.rows(), m = xtr.cols();
  if (n < 1) throw std::invalid_argument("znorm: empty training split");
  d.stats.mean = xtr.colwise().mean();
  d.stats.std.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const double var =
        (xtr.col(c).array() - d.stats.mean[c]).square().sum() / n;
    d.stats.std[c] = std::sqrt(var);
  }
  auto apply = [&](const Matrix& in) {
    Matrix out = in.rowwise() - d.stats.mean.transpose();
    for (Eigen::Index c = 0; c < m; ++c) {
      if (d.stats.std[c] > 0.0)
        out.col(c) /= d.stats.std[c];
      else
        out.col(c).setZero();
    }
    return out;
  };
  d.x_train = apply(xtr);
  d.x_val = apply(detail::gather_rows(X, idx.val));
  d.x_test = apply(detail::gather_rows(X, idx.test));
  const Vector ytr = detail::gather(y, idx.train);
  d.y_mean = ytr.mean();
  d.y_train = ytr.array() - d.y_mean;
  d.y_val = detail::gather(y, idx.val).array() - d.y_mean;
  d.y_test = detail::gather(y, idx.test).array() - d.y_mean;
  return d;
}

/// znorm_fit_apply plus optional PCA (fit on the normalized training split).
inline Dataset prepare_dataset(const EncodedData& data,
                               const SplitIndices& idx,
                               std::optional<int> pca_dim = std::nullopt) {
  Dataset d = znorm_fit_apply(data.X, data.y, idx);
  if (pca_dim) {
    d.pca = pca_fit(d.x_train, *pca_dim);
    d.x_train = pca_apply(*d.pca, d.x_train);
    d.x_val = pca_apply(*d.pca, d.x_val);
    d.x_test = pca_apply(*d.pca, d.x_test);
  }
  return d;
}

}  // namespace fcmrdpa
