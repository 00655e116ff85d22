#pragma once

#include <map>
#include <random>
#include <vector>

#include "derbox/complex.hpp"
#include "derbox/linsys.hpp"

namespace derbox::testsupport {

inline Scalar rand_scalar(const Field& F, std::mt19937_64& rng) {
  if (F.is_rational()) return F.from_int(int64_t(rng() % 7) - 3);
  return F.from_int(int64_t(rng() % uint64_t(F.p)));
}

// Random minimal complex on [0, len] with multiplicities <= maxrank.  Each
// differential is drawn from the kernel of composition with the one above it,
// so d.d = 0 holds by construction and all entries are radical paths.
inline ProjComplex random_minimal_complex(const AlgebraBasis& A, int len, int maxrank,
                                          std::mt19937_64& rng) {
  int nv = A.num_vertices();
  ProjComplex P;
  P.nmin = 0;
  P.nmax = len;
  for (int n = 0; n <= len; ++n) {
    std::vector<int> m(size_t(nv), 0);
    for (auto& v : m) v = int(rng() % uint64_t(maxrank + 1));
    P.mult[n] = m;
  }
  for (int n = len; n >= 1; --n) {
    auto rows = summand_vertices(A, P, n - 1);
    auto cols = summand_vertices(A, P, n);
    if (rows.empty() || cols.empty()) continue;

    LinSystem sys(A.field());
    struct VarInfo {
      size_t i, j;
      int g;
    };
    std::vector<VarInfo> vars;
    std::vector<std::vector<std::vector<int>>> varof(
        rows.size(), std::vector<std::vector<int>>(cols.size()));
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < cols.size(); ++j)
        for (int g : A.radical_basis(cols[j], rows[i])) {
          int v = sys.add_vars(1);
          vars.push_back(VarInfo{i, j, g});
          varof[i][j].push_back(v);
        }

    auto dn1 = P.d.find(n + 1);
    if (dn1 != P.d.end() && !dn1->second.empty()) {
      auto cols2 = summand_vertices(A, P, n + 1);
      for (size_t i = 0; i < rows.size(); ++i)
        for (size_t k = 0; k < cols2.size(); ++k) {
          std::map<int, std::map<int, Scalar>> by_path;  // basis path -> var -> coeff
          for (size_t j = 0; j < cols.size(); ++j) {
            const auto& below = dn1->second[j][k];
            if (below.is_zero()) continue;
            for (size_t t = 0; t < varof[i][j].size(); ++t) {
              int g = vars[size_t(varof[i][j][t])].g;
              AlgebraElement prod = A.multiply(A.from_basis(g), below);
              for (int h : A.pair_basis(cols2[k], rows[i])) {
                Scalar c = A.coeff_of(prod, h);
                if (!c.is_zero()) acc_row(by_path[h], varof[i][j][t], c);
              }
            }
          }
          for (auto& [h, row] : by_path) sys.add_row(std::map<int, Scalar>(row), A.field().zero());
        }
    }

    auto sol = sys.solve();
    if (!sol) fail(Err::Internal, "homogeneous sampling system inconsistent");
    const auto& kernel = sol->second;
    if (kernel.empty()) continue;  // only the zero differential fits
    std::vector<Scalar> coeffs(vars.size(), A.field().zero());
    for (const auto& kv : kernel) {
      Scalar c = rand_scalar(A.field(), rng);
      if (c.is_zero()) continue;
      for (size_t v = 0; v < coeffs.size(); ++v) coeffs[v] = coeffs[v] + c * kv[v];
    }

    DMat dm(rows.size(), std::vector<AlgebraElement>(cols.size()));
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < cols.size(); ++j) dm[i][j] = A.zero(cols[j], rows[i]);
    bool nonzero = false;
    for (size_t v = 0; v < vars.size(); ++v) {
      if (coeffs[v].is_zero()) continue;
      auto& e = dm[vars[v].i][vars[v].j];
      e = A.add(e, A.scale(coeffs[v], A.from_basis(vars[v].g)));
      nonzero = true;
    }
    if (nonzero) P.d[n] = std::move(dm);
  }
  return trim_window(A, P);
}

}  // namespace derbox::testsupport
