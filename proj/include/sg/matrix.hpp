#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sg {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Shape is fixed at construction;
// value semantics throughout.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);
  Matrix(int rows, int cols, Vec data);

  static Matrix identity(int n);
  static Matrix from_rows(const std::vector<Vec>& rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }
  std::size_t size() const { return data_.size(); }

  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  Vec row_vec(int r) const { return Vec(row(r).begin(), row(r).end()); }
  void set_row(int r, std::span<const double> v);

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool all_finite() const;
  void fill(double v);

  bool operator==(const Matrix& other) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  Vec data_;
};

// a (r×k) times b (k×c). Throws DimensionError naming both shapes.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
void add_in_place(Matrix& a, const Matrix& b);
void add_scaled(Matrix& a, const Matrix& b, double s);  // a += s*b

// Row-vector conventions: row_times(v, m) computes vᵀM (length m.cols),
// times_col(m, v) computes Mv (length m.rows).
Vec row_times(const Vec& v, const Matrix& m);
Vec times_col(const Matrix& m, const Vec& v);
Matrix outer(const Vec& u, const Vec& v);  // u vᵀ, shape (|u| × |v|)

double dot(const Vec& a, const Vec& b);
double norm_sq(const Vec& v);
Vec operator+(const Vec& a, const Vec& b);
Vec operator-(const Vec& a, const Vec& b);
Vec operator*(double s, const Vec& v);
void axpy(Vec& y, double a, const Vec& x);  // y += a*x

bool all_finite(const Vec& v);

}  // namespace sg
