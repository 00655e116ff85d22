#include "derbox/linalg.hpp"

#include <sstream>

namespace derbox {

Mat operator+(const Mat& x, const Mat& y) {
  if (x.rows != y.rows || x.cols != y.cols) fail(Err::Internal, "matrix shape mismatch in +");
  Mat r = x;
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] = r.a[i] + y.a[i];
  return r;
}

Mat operator-(const Mat& x, const Mat& y) {
  if (x.rows != y.rows || x.cols != y.cols) fail(Err::Internal, "matrix shape mismatch in -");
  Mat r = x;
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] = r.a[i] - y.a[i];
  return r;
}

Mat operator*(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) fail(Err::Internal, "matrix shape mismatch in *");
  Mat r(x.field, x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const Scalar& xv = x.at(i, k);
      if (xv.is_zero()) continue;
      for (int j = 0; j < y.cols; ++j) {
        const Scalar& yv = y.at(k, j);
        if (!yv.is_zero()) r.at(i, j) += xv * yv;
      }
    }
  return r;
}

Mat Mat::operator*(const Scalar& c) const {
  Mat r = *this;
  for (auto& v : r.a) v = v * c;
  return r;
}

Mat Mat::transpose() const {
  Mat r(field, cols, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) r.at(j, i) = at(i, j);
  return r;
}

std::vector<int> rref(Mat& m) {
  std::vector<int> pivots;
  int row = 0;
  for (int col = 0; col < m.cols && row < m.rows; ++col) {
    int pr = -1;
    for (int i = row; i < m.rows; ++i)
      if (!m.at(i, col).is_zero()) {
        pr = i;
        break;
      }
    if (pr < 0) continue;
    if (pr != row)
      for (int j = 0; j < m.cols; ++j) std::swap(m.at(pr, j), m.at(row, j));
    Scalar inv = m.at(row, col).inverse();
    for (int j = col; j < m.cols; ++j) m.at(row, j) = m.at(row, j) * inv;
    for (int i = 0; i < m.rows; ++i) {
      if (i == row) continue;
      Scalar f = m.at(i, col);
      if (f.is_zero()) continue;
      for (int j = col; j < m.cols; ++j) m.at(i, j) = m.at(i, j) - f * m.at(row, j);
    }
    pivots.push_back(col);
    ++row;
  }
  return pivots;
}

int Mat::rank() const {
  Mat c = *this;
  return int(rref(c).size());
}

std::optional<Mat> Mat::inverse() const {
  if (rows != cols) return std::nullopt;
  if (rows == 0) return Mat::identity(field, 0);
  Mat aug = hstack(*this, Mat::identity(field, rows));
  auto piv = rref(aug);
  if (int(piv.size()) != rows || piv.back() != rows - 1) return std::nullopt;
  Mat inv(field, rows, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < rows; ++j) inv.at(i, j) = aug.at(i, cols + j);
  return inv;
}

Mat Mat::kernel() const {
  Mat m = *this;
  auto piv = rref(m);
  std::vector<bool> is_piv(cols, false);
  for (int c : piv) is_piv[c] = true;
  std::vector<int> free_cols;
  for (int c = 0; c < cols; ++c)
    if (!is_piv[c]) free_cols.push_back(c);
  Mat ker(field, cols, int(free_cols.size()));
  for (size_t k = 0; k < free_cols.size(); ++k) {
    int fc = free_cols[k];
    ker.at(fc, int(k)) = field.one();
    for (size_t r = 0; r < piv.size(); ++r) ker.at(piv[r], int(k)) = -m.at(int(r), fc);
  }
  return ker;
}

std::optional<std::vector<Scalar>> Mat::solve(const std::vector<Scalar>& b) const {
  if (int(b.size()) != rows) fail(Err::Internal, "rhs size mismatch");
  Mat aug(field, rows, cols + 1);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) aug.at(i, j) = at(i, j);
    aug.at(i, cols) = b[i];
  }
  auto piv = rref(aug);
  // inconsistent iff a pivot lands in the rhs column
  if (!piv.empty() && piv.back() == cols) return std::nullopt;
  std::vector<Scalar> x(cols, field.zero());
  for (size_t r = 0; r < piv.size(); ++r) x[piv[r]] = aug.at(int(r), cols);
  return x;
}

Mat hstack(const Mat& x, const Mat& y) {
  if (x.rows != y.rows) fail(Err::Internal, "hstack row mismatch");
  Mat r(x.field, x.rows, x.cols + y.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) r.at(i, j) = x.at(i, j);
    for (int j = 0; j < y.cols; ++j) r.at(i, x.cols + j) = y.at(i, j);
  }
  return r;
}

Mat vstack(const Mat& x, const Mat& y) {
  if (x.cols != y.cols) fail(Err::Internal, "vstack col mismatch");
  Mat r(x.field, x.rows + y.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) r.at(i, j) = x.at(i, j);
  for (int i = 0; i < y.rows; ++i)
    for (int j = 0; j < x.cols; ++j) r.at(x.rows + i, j) = y.at(i, j);
  return r;
}

std::string Mat::str() const {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < rows; ++i) {
    os << (i ? "; " : "");
    for (int j = 0; j < cols; ++j) os << (j ? " " : "") << at(i, j).str();
  }
  os << "]";
  return os.str();
}

}  // namespace derbox
