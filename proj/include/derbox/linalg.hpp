#pragma once

#include <optional>
#include <vector>

#include "derbox/field.hpp"

namespace derbox {

// Dense exact matrix over the ground field.  Sizes stay small (desk scale),
// so everything is plain Gaussian elimination.
struct Mat {
  Field field;
  int rows = 0, cols = 0;
  std::vector<Scalar> a;  // row-major

  Mat() = default;
  Mat(Field f, int r, int c) : field(f), rows(r), cols(c), a(size_t(r) * c, f.zero()) {}

  Scalar& at(int i, int j) { return a[size_t(i) * cols + j]; }
  const Scalar& at(int i, int j) const { return a[size_t(i) * cols + j]; }

  static Mat identity(Field f, int n) {
    Mat m(f, n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = f.one();
    return m;
  }

  bool is_zero() const {
    for (const auto& x : a)
      if (!x.is_zero()) return false;
    return true;
  }
  bool is_identity() const {
    if (rows != cols) return false;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (!((i == j) ? at(i, j).is_one() : at(i, j).is_zero())) return false;
    return true;
  }

  friend Mat operator+(const Mat& x, const Mat& y);
  friend Mat operator-(const Mat& x, const Mat& y);
  friend Mat operator*(const Mat& x, const Mat& y);
  Mat operator*(const Scalar& c) const;
  Mat operator-() const { return *this * (-field.one()); }
  friend bool operator==(const Mat& x, const Mat& y) {
    return x.rows == y.rows && x.cols == y.cols && x.a == y.a;
  }

  Mat transpose() const;
  int rank() const;
  std::optional<Mat> inverse() const;

  // Basis of the right kernel, one column per basis vector.
  Mat kernel() const;

  // One solution x of (*this) x = b, if any.
  std::optional<std::vector<Scalar>> solve(const std::vector<Scalar>& b) const;

  std::string str() const;
};

// In-place row reduction to RREF; returns pivot column per pivot row.
std::vector<int> rref(Mat& m);

// Horizontal / vertical stacking helpers used by the solvers.
Mat hstack(const Mat& x, const Mat& y);
Mat vstack(const Mat& x, const Mat& y);

}  // namespace derbox
