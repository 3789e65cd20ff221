#include "sg/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sg/errors.hpp"

namespace sg {

namespace {

std::string shape_str(int r, int c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
}

void require_same_len(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": length mismatch " +
                         std::to_string(a) + " vs " + std::to_string(b));
  }
}

// Must run before the data vector is allocated: a negative dimension cast to
// size_t would otherwise hit the allocator as a near-SIZE_MAX request.
std::size_t checked_cell_count(int rows, int cols) {
  if ((rows != 0 || cols != 0) && (rows <= 0 || cols <= 0)) {
    throw DimensionError("Matrix: non-positive shape " + shape_str(rows, cols));
  }
  return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
}

}  // namespace

// (0, 0) is the canonical empty matrix; anything else must be positive.
Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(checked_cell_count(rows, cols), 0.0) {}

Matrix::Matrix(int rows, int cols, Vec data) : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows <= 0 || cols <= 0) {
    throw DimensionError("Matrix: non-positive shape " + shape_str(rows, cols));
  }
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not fill " + shape_str(rows, cols));
  }
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) throw DimensionError("Matrix::from_rows: no rows");
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int r = 0; r < m.rows(); ++r) {
    require_same_len(rows[r].size(), static_cast<std::size_t>(m.cols()), "Matrix::from_rows");
    m.set_row(r, rows[r]);
  }
  return m;
}

void Matrix::set_row(int r, std::span<const double> v) {
  require_same_len(v.size(), static_cast<std::size_t>(cols_), "Matrix::set_row");
  std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::size_t>(r) * cols_);
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " +
                         shape_str(a.rows(), a.cols()) + " x " +
                         shape_str(b.rows(), b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out.at(j, i) = m.at(i, j);
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix operator*(double s, const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
  return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix add");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

void add_scaled(Matrix& a, const Matrix& b, double s) {
  require_same_shape(a, b, "matrix add_scaled");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += s * b.data()[i];
}

Vec row_times(const Vec& v, const Matrix& m) {
  require_same_len(v.size(), static_cast<std::size_t>(m.rows()), "row_times");
  Vec out(m.cols(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    for (int j = 0; j < m.cols(); ++j) out[j] += vi * m.at(i, j);
  }
  return out;
}

Vec times_col(const Matrix& m, const Vec& v) {
  require_same_len(v.size(), static_cast<std::size_t>(m.cols()), "times_col");
  Vec out(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < m.cols(); ++j) acc += m.at(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

Matrix outer(const Vec& u, const Vec& v) {
  Matrix out(static_cast<int>(u.size()), static_cast<int>(v.size()));
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j)
      out.at(static_cast<int>(i), static_cast<int>(j)) = u[i] * v[j];
  return out;
}

double dot(const Vec& a, const Vec& b) {
  require_same_len(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm_sq(const Vec& v) { return dot(v, v); }

Vec operator+(const Vec& a, const Vec& b) {
  require_same_len(a.size(), b.size(), "vector add");
  Vec out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Vec operator-(const Vec& a, const Vec& b) {
  require_same_len(a.size(), b.size(), "vector sub");
  Vec out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Vec operator*(double s, const Vec& v) {
  Vec out = v;
  for (double& x : out) x *= s;
  return out;
}

void axpy(Vec& y, double a, const Vec& x) {
  require_same_len(y.size(), x.size(), "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace sg
