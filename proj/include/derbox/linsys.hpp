#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "derbox/linalg.hpp"

namespace derbox {

// linear system over the ground field, rows built sparsely
struct LinSystem {
  Field f;
  int nvars = 0;
  std::vector<std::map<int, Scalar>> rows;
  std::vector<Scalar> rhs;

  explicit LinSystem(Field ff) : f(ff) {}
  int add_vars(int k) {
    int b = nvars;
    nvars += k;
    return b;
  }
  void add_row(std::map<int, Scalar> row, Scalar r) {
    rows.push_back(std::move(row));
    rhs.push_back(r);
  }
  // (particular solution, kernel basis); nullopt if inconsistent
  std::optional<std::pair<std::vector<Scalar>, std::vector<std::vector<Scalar>>>> solve() const {
    Mat m(f, int(rows.size()), nvars);
    std::vector<Scalar> b;
    for (size_t i = 0; i < rows.size(); ++i) {
      for (auto& [j, v] : rows[i]) m.at(int(i), j) += v;
      b.push_back(rhs[i]);
    }
    auto part = m.solve(b);
    if (!part) return std::nullopt;
    Mat ker = m.kernel();
    std::vector<std::vector<Scalar>> kb;
    for (int c = 0; c < ker.cols; ++c) {
      std::vector<Scalar> v;
      for (int r = 0; r < ker.rows; ++r) v.push_back(ker.at(r, c));
      kb.push_back(std::move(v));
    }
    return std::make_pair(*part, kb);
  }
};

// accumulate into a sparse row without constructing field-less scalars
inline void acc_row(std::map<int, Scalar>& row, int idx, const Scalar& v) {
  if (v.is_zero()) return;
  auto it = row.find(idx);
  if (it == row.end())
    row.emplace(idx, v);
  else
    it->second = it->second + v;
}

}  // namespace derbox
