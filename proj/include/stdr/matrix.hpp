#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stdr/error.hpp"

namespace stdr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Labelled symmetric matrix (similarities or distances between leaves).
class LabelledMatrix {
 public:
  LabelledMatrix() = default;
  LabelledMatrix(std::vector<std::string> labels, Matrix values)
      : labels_(std::move(labels)), values_(std::move(values)) {
    if (values_.rows() != values_.cols() ||
        values_.rows() != static_cast<Index>(labels_.size()))
      throw Error(ErrorKind::usage, "matrix shape does not match label count");
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (!index_.emplace(labels_[i], i).second)
        throw Error(ErrorKind::usage, "duplicate label '" + labels_[i] + "'");
    const double scale = std::max(1.0, values_.cwiseAbs().maxCoeff());
    if (((values_ - values_.transpose()).cwiseAbs().array() > 1e-12 * scale).any())
      throw Error(ErrorKind::usage, "matrix is not symmetric");
  }

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const Matrix& values() const { return values_; }
  double operator()(Index i, Index j) const { return values_(i, j); }

  std::size_t index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw Error(ErrorKind::usage, "unknown label '" + label + "'");
    return it->second;
  }

  template <class Labels>
  std::vector<Index> indices_of(const Labels& labels) const {
    std::vector<Index> out;
    for (const auto& l : labels) out.push_back(static_cast<Index>(index_of(l)));
    return out;
  }

 protected:
  std::vector<std::string> labels_;
  Matrix values_;
  std::unordered_map<std::string, std::size_t> index_;
};

class SimilarityMatrix : public LabelledMatrix {
 public:
  SimilarityMatrix() = default;
  /// Entries are clamped to [0,1]; the number of clamped entries is kept.
  SimilarityMatrix(std::vector<std::string> labels, Matrix values)
      : LabelledMatrix(std::move(labels), std::move(values)) {
    for (Index i = 0; i < values_.rows(); ++i)
      for (Index j = 0; j < values_.cols(); ++j) {
        double& s = values_(i, j);
        if (!std::isfinite(s)) throw NumericalError("non-finite similarity");
        if (s < 0.0 || s > 1.0) {
          s = std::clamp(s, 0.0, 1.0);
          ++clamp_events_;
        }
      }
  }
  std::size_t clamp_events() const { return clamp_events_; }

 private:
  std::size_t clamp_events_ = 0;
};

class DistanceMatrix : public LabelledMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::vector<std::string> labels, Matrix values)
      : LabelledMatrix(std::move(labels), std::move(values)) {
    for (Index i = 0; i < values_.rows(); ++i) {
      if (values_(i, i) != 0.0) throw Error(ErrorKind::usage, "distance diagonal must be 0");
      for (Index j = 0; j < values_.cols(); ++j)
        if (!std::isfinite(values_(i, j)) || values_(i, j) < 0.0)
          throw Error(ErrorKind::usage, "distances must be finite and nonnegative");
    }
  }
};

/// Gathers M(rows, cols) into a dense block.
inline Matrix gather(const Matrix& m, const std::vector<Index>& rows,
                     const std::vector<Index>& cols) {
  Matrix out(rows.size(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i) out(i, j) = m(rows[i], cols[j]);
  return out;
}

// CSV with a label header row and a label column.
inline void write_matrix_csv(std::ostream& os, const LabelledMatrix& m) {
  os << "label";
  for (const auto& l : m.labels()) os << ',' << l;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << m.labels()[i];
    for (std::size_t j = 0; j < m.size(); ++j) os << ',' << m(i, j);
    os << '\n';
  }
}

inline std::pair<std::vector<std::string>, Matrix> read_matrix_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::input_format, "empty matrix CSV");
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    return f;
  };
  auto header = split(line);
  if (header.size() < 2) throw Error(ErrorKind::input_format, "matrix CSV header too short");
  std::vector<std::string> labels(header.begin() + 1, header.end());
  Matrix values(labels.size(), labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::getline(is, line))
      throw Error(ErrorKind::input_format, "matrix CSV has too few rows");
    auto f = split(line);
    if (f.size() != labels.size() + 1 || f[0] != labels[i])
      throw Error(ErrorKind::input_format, "matrix CSV row " + std::to_string(i + 1) +
                                               " malformed");
    for (std::size_t j = 0; j < labels.size(); ++j) {
      try {
        values(i, j) = std::stod(f[j + 1]);
      } catch (const std::exception&) {
        throw Error(ErrorKind::input_format, "matrix CSV: bad number '" + f[j + 1] + "'");
      }
    }
  }
  return {std::move(labels), std::move(values)};
}

}  // namespace stdr
