#include "derbox/oracle.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>

#include "derbox/errors.hpp"
#include "derbox/linsys.hpp"

namespace derbox {

int64_t OrbitCensus::total_instances() const {
  int64_t t = 0;
  for (const auto& e : entries) t += e.instances;
  return t;
}

int64_t OrbitCensus::indecomposables() const {
  int64_t t = 0;
  for (const auto& e : entries) t += e.indecomposable ? 1 : 0;
  return t;
}

int64_t BoxCensus::total_instances() const {
  int64_t t = 0;
  for (const auto& e : entries) t += e.instances;
  return t;
}

namespace {

void require_census_field(const Field& f, int64_t q, const char* what) {
  if (f.is_rational())
    fail(Err::PreconditionViolated, std::string(what) + " requires a finite prime field");
  if (int64_t(f.p) != q)
    fail(Err::PreconditionViolated, std::string(what) + " over F" + std::to_string(q) +
                                        " does not match the coefficient field " + f.str());
}

void check_space(int64_t q, size_t slots, double ceiling, const char* what) {
  double space = 1;
  for (size_t i = 0; i < slots; ++i) {
    space *= double(q);
    if (space > ceiling) {
      std::ostringstream os;
      os << what << " search space " << q << "^" << slots << " exceeds the ceiling of "
         << int64_t(ceiling) << " instances";
      fail(Err::SearchSpaceTooLarge, os.str());
    }
  }
}

int sub_rank(const Mat& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Mat s(m.field, int(rows.size()), int(cols.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols.size(); ++j) s.at(int(i), int(j)) = m.at(rows[i], cols[j]);
  return s.rank();
}

// Isomorphism-invariant bucket key of a minimal complex: per degree, the rank of the
// ground-field linearization of d_n, its restrictions to radical-power columns/rows
// (these subspaces are preserved by any isomorphism), and the rank of each arrow
// coefficient layer (preserved because differential entries sit in the radical).
std::string complex_census_key(const AlgebraBasis& A, const ProjComplex& P,
                               const std::map<int, std::vector<int>>& sv,
                               const std::vector<std::vector<int>>& by_dst,
                               const std::vector<int>& arrow_paths) {
  const Field& F = A.field();
  std::ostringstream key;
  for (int n = P.nmin + 1; n <= P.nmax; ++n) {
    const auto& cv = sv.at(n);
    const auto& rv = sv.at(n - 1);
    if (cv.empty() || rv.empty()) {
      key << "n" << n << ":-;";
      continue;
    }
    auto dit = P.d.find(n);
    // row/column layout of the linearization
    std::vector<int> roff(rv.size() + 1, 0), coff(cv.size() + 1, 0);
    for (size_t i = 0; i < rv.size(); ++i)
      roff[i + 1] = roff[i] + int(by_dst[size_t(rv[i])].size());
    for (size_t j = 0; j < cv.size(); ++j)
      coff[j + 1] = coff[j] + int(by_dst[size_t(cv[j])].size());
    Mat K(F, roff.back(), coff.back());
    std::vector<int> rdeg(size_t(roff.back()), 0), cdeg(size_t(coff.back()), 0);
    for (size_t i = 0; i < rv.size(); ++i) {
      const auto& rb = by_dst[size_t(rv[i])];
      for (size_t t = 0; t < rb.size(); ++t) rdeg[size_t(roff[i]) + t] = A.path(rb[t]).degree;
    }
    for (size_t j = 0; j < cv.size(); ++j) {
      const auto& cb = by_dst[size_t(cv[j])];
      for (size_t t = 0; t < cb.size(); ++t) cdeg[size_t(coff[j]) + t] = A.path(cb[t]).degree;
    }
    if (dit != P.d.end()) {
      const DMat& dm = dit->second;
      for (size_t i = 0; i < rv.size(); ++i)
        for (size_t j = 0; j < cv.size(); ++j) {
          const AlgebraElement& e = dm[i][j];
          if (e.is_zero()) continue;
          const auto& cb = by_dst[size_t(cv[j])];
          const auto& rb = by_dst[size_t(rv[i])];
          for (size_t t = 0; t < cb.size(); ++t) {
            AlgebraElement u = A.multiply(e, A.from_basis(cb[t]));
            if (u.is_zero()) continue;
            for (size_t s = 0; s < rb.size(); ++s) {
              Scalar c = A.coeff_of(u, rb[s]);
              if (!c.is_zero()) K.at(roff[i] + int(s), coff[j] + int(t)) += c;
            }
          }
        }
    }
    std::vector<int> all_r, all_c, c1, c2, r2;
    for (int r = 0; r < K.rows; ++r) {
      all_r.push_back(r);
      if (rdeg[size_t(r)] >= 2) r2.push_back(r);
    }
    for (int c = 0; c < K.cols; ++c) {
      all_c.push_back(c);
      if (cdeg[size_t(c)] >= 1) c1.push_back(c);
      if (cdeg[size_t(c)] >= 2) c2.push_back(c);
    }
    key << "n" << n << ":" << K.rank() << "," << sub_rank(K, all_r, c1) << ","
        << sub_rank(K, all_r, c2) << "," << sub_rank(K, r2, all_c) << "[";
    for (int a : arrow_paths) {
      Mat layer(F, int(rv.size()), int(cv.size()));
      if (dit != P.d.end())
        for (size_t i = 0; i < rv.size(); ++i)
          for (size_t j = 0; j < cv.size(); ++j)
            layer.at(int(i), int(j)) = A.coeff_of(dit->second[i][j], a);
      key << layer.rank() << ",";
    }
    key << "];";
  }
  return key.str();
}

}  // namespace

OrbitCensus enum_census(const AlgebraBasis& A, const VectorRank& rank, int64_t q,
                        double ceiling) {
  const Field& F = A.field();
  require_census_field(F, q, "complex census");
  const int nv = A.num_vertices();
  for (const auto& [n, v] : rank.r) {
    if (int(v.size()) != nv)
      fail(Err::Validation, "vector rank at degree " + std::to_string(n) + " lists " +
                                std::to_string(v.size()) + " entries, expected " +
                                std::to_string(nv));
    for (int x : v)
      if (x < 0)
        fail(Err::Validation,
             "vector rank has a negative entry at degree " + std::to_string(n));
  }
  std::map<int, std::vector<int>> mult;
  for (const auto& [n, v] : rank.r)
    if (std::any_of(v.begin(), v.end(), [](int x) { return x > 0; })) mult[n] = v;

  OrbitCensus out;
  out.q = q;
  out.rank.r = mult;
  if (mult.empty()) {
    out.entries.push_back({ProjComplex{}, false, 1});
    return out;
  }

  ProjComplex base;
  base.nmin = mult.begin()->first;
  base.nmax = mult.rbegin()->first;
  for (int n = base.nmin; n <= base.nmax; ++n) {
    auto it = mult.find(n);
    base.mult[n] = it != mult.end() ? it->second : std::vector<int>(size_t(nv), 0);
  }
  std::map<int, std::vector<int>> sv;
  for (int n = base.nmin; n <= base.nmax; ++n) sv[n] = summand_vertices(A, base, n);

  struct Slot {
    int n, i, j, g;
  };
  std::vector<Slot> slots;
  for (int n = base.nmin + 1; n <= base.nmax; ++n) {
    const auto& cv = sv[n];
    const auto& rv = sv[n - 1];
    for (size_t i = 0; i < rv.size(); ++i)
      for (size_t j = 0; j < cv.size(); ++j)
        for (int g : A.radical_basis(cv[j], rv[i])) slots.push_back({n, int(i), int(j), g});
  }
  check_space(q, slots.size(), ceiling, "complex census");

  std::vector<std::vector<int>> by_dst(size_t(nv), std::vector<int>{});
  for (int g = 0; g < int(A.basis().size()); ++g) by_dst[size_t(A.path(g).dst)].push_back(g);
  std::vector<int> arrow_paths;
  for (int g = 0; g < int(A.basis().size()); ++g)
    if (A.path(g).degree == 1) arrow_paths.push_back(g);

  std::map<std::string, std::vector<size_t>> buckets;
  std::vector<int64_t> dig(slots.size(), 0);
  while (true) {
    ProjComplex P = base;
    for (int n = base.nmin + 1; n <= base.nmax; ++n) {
      const auto& cv = sv[n];
      const auto& rv = sv[n - 1];
      if (cv.empty() || rv.empty()) continue;
      DMat dm(rv.size());
      for (size_t i = 0; i < rv.size(); ++i)
        for (size_t j = 0; j < cv.size(); ++j) dm[i].push_back(A.zero(cv[j], rv[i]));
      P.d[n] = std::move(dm);
    }
    for (size_t s = 0; s < slots.size(); ++s) {
      if (dig[s] == 0) continue;
      const Slot& sl = slots[s];
      auto& e = P.d[sl.n][size_t(sl.i)][size_t(sl.j)];
      e = A.add(e, A.scale(F.from_int(dig[s]), A.from_basis(sl.g)));
    }
    bool valid = true;
    for (int n = base.nmin + 2; n <= base.nmax && valid; ++n) {
      auto hi = P.d.find(n);
      auto lo = P.d.find(n - 1);
      if (hi == P.d.end() || lo == P.d.end()) continue;
      const auto& mid = sv[n - 1];
      for (size_t i = 0; i < sv[n - 2].size() && valid; ++i)
        for (size_t j = 0; j < sv[n].size() && valid; ++j) {
          AlgebraElement acc = A.zero(sv[n][j], sv[n - 2][i]);
          for (size_t k = 0; k < mid.size(); ++k)
            acc = A.add(acc, A.multiply(lo->second[i][k], hi->second[k][j]));
          if (!acc.is_zero()) valid = false;
        }
    }
    if (valid) {
      std::string key = complex_census_key(A, P, sv, by_dst, arrow_paths);
      auto& bucket = buckets[key];
      bool found = false;
      for (size_t idx : bucket) {
        if (iso_complexes_exhaustive(A, P, out.entries[idx].rep).has_value()) {
          ++out.entries[idx].instances;
          found = true;
          break;
        }
      }
      if (!found) {
        bucket.push_back(out.entries.size());
        out.entries.push_back({std::move(P), false, 1});
      }
    }
    size_t s = 0;
    while (s < dig.size() && ++dig[s] == q) dig[s++] = 0;
    if (s == dig.size()) break;
  }

  for (auto& e : out.entries)
    e.indecomposable = !e.rep.is_zero() && decompose(A, e.rep).size() == 1;
  return out;
}

int64_t count_indecomposables(const AlgebraBasis& A, const VectorRank& rank, int64_t q) {
  return enum_census(A, rank, q).indecomposables();
}

BoxCensus enum_box_census(const BoxPresentation& B, const std::vector<int>& dim, int64_t q,
                          double ceiling) {
  require_census_field(B.field, q, "box census");
  if (int(dim.size()) != B.num_vertices())
    fail(Err::Validation, "dimension vector lists " + std::to_string(dim.size()) +
                              " entries, expected " + std::to_string(B.num_vertices()));
  for (int d : dim)
    if (d < 0) fail(Err::Validation, "dimension vector has a negative entry");

  BoxCensus out;
  out.q = q;
  out.dim = dim;

  const auto solids = B.solid_ids();
  struct Slot {
    int a, r, c;
  };
  std::vector<Slot> slots;
  for (int a : solids) {
    const auto& ar = B.arrows[size_t(a)];
    for (int r = 0; r < dim[size_t(ar.dst)]; ++r)
      for (int c = 0; c < dim[size_t(ar.src)]; ++c) slots.push_back({a, r, c});
  }
  check_space(q, slots.size(), ceiling, "box census");

  // invariant keys may only use differential-free data: the matrix of a solid arrow
  // with nonzero differential is not constant on isomorphism classes
  std::vector<int> dzero;
  for (int a : solids)
    if (B.diff_of(a).is_zero()) dzero.push_back(a);
  std::vector<std::pair<int, int>> dzero_pairs;
  for (int a : dzero)
    for (int b : dzero)
      if (B.arrows[size_t(a)].src == B.arrows[size_t(b)].dst) dzero_pairs.emplace_back(a, b);

  std::map<std::string, std::vector<size_t>> buckets;
  std::vector<int64_t> dig(slots.size(), 0);
  while (true) {
    BoxRep R;
    R.dim = dim;
    {
      std::map<int, Mat> mats;
      for (size_t s = 0; s < slots.size(); ++s) {
        if (dig[s] == 0) continue;
        const Slot& sl = slots[s];
        auto it = mats.find(sl.a);
        if (it == mats.end()) {
          const auto& ar = B.arrows[size_t(sl.a)];
          it = mats.emplace(sl.a, Mat(B.field, dim[size_t(ar.dst)], dim[size_t(ar.src)])).first;
        }
        it->second.at(sl.r, sl.c) = B.field.from_int(dig[s]);
      }
      R.m = std::move(mats);
    }
    if (rep_satisfies_relations(B, R) && rep_satisfies_marked(B, R)) {
      std::ostringstream key;
      for (int a : dzero) key << rep_matrix(B, R, a).rank() << ",";
      key << "|";
      for (const auto& [a, b] : dzero_pairs)
        key << (rep_matrix(B, R, a) * rep_matrix(B, R, b)).rank() << ",";
      auto& bucket = buckets[key.str()];
      bool found = false;
      for (size_t idx : bucket) {
        if (iso_box_reps_exhaustive(B, R, out.entries[idx].rep).has_value()) {
          ++out.entries[idx].instances;
          found = true;
          break;
        }
      }
      if (!found) {
        bucket.push_back(out.entries.size());
        out.entries.push_back({std::move(R), 1});
      }
    }
    size_t s = 0;
    while (s < dig.size() && ++dig[s] == q) dig[s++] = 0;
    if (s == dig.size()) break;
  }
  return out;
}

namespace {

void require_param_module(const ParamModule& L) {
  if (L.X.rows != L.X.cols || L.Y.rows != L.Y.cols || L.X.rows != L.Y.rows)
    fail(Err::PreconditionViolated,
         "a parameter module is a pair of square matrices of equal size");
}

// Basis of {T : T X1 = X2 T, T Y1 = Y2 T} as matrices.
std::vector<Mat> intertwiner_basis(const ParamModule& L1, const ParamModule& L2) {
  const Field f = L1.X.field;
  const int n1 = L1.X.rows, n2 = L2.X.rows;
  LinSystem S(f);
  int tv = S.add_vars(n2 * n1);
  auto add_commute = [&](const Mat& A1, const Mat& A2) {
    for (int i = 0; i < n2; ++i)
      for (int j = 0; j < n1; ++j) {
        std::map<int, Scalar> row;
        for (int k = 0; k < n1; ++k) acc_row(row, tv + i * n1 + k, A1.at(k, j));
        for (int k = 0; k < n2; ++k) acc_row(row, tv + k * n1 + j, -A2.at(i, k));
        S.add_row(std::move(row), f.zero());
      }
  };
  add_commute(L1.X, L2.X);
  add_commute(L1.Y, L2.Y);
  auto sol = S.solve();
  std::vector<Mat> basis;
  for (const auto& v : sol->second) {
    Mat T(f, n2, n1);
    for (int i = 0; i < n2; ++i)
      for (int j = 0; j < n1; ++j) T.at(i, j) = v[size_t(tv + i * n1 + j)];
    basis.push_back(std::move(T));
  }
  return basis;
}

// Exhaustively scans the span of `basis`, calling visit on each nonzero element;
// stops early when visit returns true.
bool scan_span(const Field& f, const std::vector<Mat>& basis, double ceiling, const char* what,
               const std::function<bool(const Mat&)>& visit) {
  if (basis.empty()) return false;
  if (f.is_rational())
    fail(Err::SearchSpaceTooLarge, std::string(what) + " requires a finite prime field");
  check_space(f.p, basis.size(), ceiling, what);
  std::vector<int64_t> dig(basis.size(), 0);
  while (true) {
    size_t s = 0;
    while (s < dig.size() && ++dig[s] == f.p) dig[s++] = 0;
    if (s == dig.size()) return false;
    Mat T(f, basis[0].rows, basis[0].cols);
    for (size_t i = 0; i < basis.size(); ++i)
      if (dig[i] != 0) T = T + basis[i] * f.from_int(dig[i]);
    if (visit(T)) return true;
  }
}

}  // namespace

bool param_modules_isomorphic(const ParamModule& L1, const ParamModule& L2, double ceiling) {
  require_param_module(L1);
  require_param_module(L2);
  if (L1.X.rows != L2.X.rows) return false;
  if (L1.X.rows == 0) return true;
  auto basis = intertwiner_basis(L1, L2);
  return scan_span(L1.X.field, basis, ceiling, "module isomorphism search",
                   [](const Mat& T) { return T.inverse().has_value(); });
}

bool param_module_indecomposable(const ParamModule& L, double ceiling) {
  require_param_module(L);
  if (L.X.rows == 0) return false;  // the zero module
  auto basis = intertwiner_basis(L, L);
  bool split = scan_span(L.X.field, basis, ceiling, "idempotent search", [](const Mat& T) {
    return !T.is_identity() && (T * T - T).is_zero();
  });
  return !split;
}

StrictFamilyReport check_strict_family(const AlgebraBasis& A, const TwoParamFamily& F,
                                       const std::vector<ParamModule>& samples,
                                       double ceiling) {
  const Field& f = A.field();
  StrictFamilyReport report;
  report.samples = int(samples.size());
  std::vector<ProjComplex> img;
  for (const auto& L : samples) {
    require_param_module(L);
    if (L.X.field.is_rational() != f.is_rational() || L.X.field.p != f.p)
      fail(Err::PreconditionViolated, "parameter module field does not match the algebra field");
    img.push_back(minimize(A, specialize_two_param(A, F, L.X, L.Y)).min);
  }
  for (size_t i = 0; i < samples.size(); ++i)
    for (size_t j = i + 1; j < samples.size(); ++j) {
      bool miso = param_modules_isomorphic(samples[i], samples[j], ceiling);
      bool ciso = iso_complexes_exhaustive(A, img[i], img[j]).has_value();
      if (!miso) ++report.non_isomorphic_pairs;
      if (miso && !ciso)
        report.violations.push_back("samples " + std::to_string(i) + " and " + std::to_string(j) +
                                    ": modules are isomorphic but specializations are not");
      if (!miso && ciso)
        report.violations.push_back("samples " + std::to_string(i) + " and " + std::to_string(j) +
                                    ": specializations are isomorphic but modules are not");
    }
  for (size_t i = 0; i < samples.size(); ++i) {
    bool mind = param_module_indecomposable(samples[i], ceiling);
    bool cind = !img[i].is_zero() && decompose(A, img[i]).size() == 1;
    if (mind) ++report.indecomposable_modules;
    if (cind) ++report.indecomposable_images;
    if (mind != cind)
      report.violations.push_back("sample " + std::to_string(i) + ": module is " +
                                  (mind ? "in" : "") + "decomposable but its specialization is " +
                                  (cind ? "in" : "") + "decomposable");
  }
  return report;
}

}  // namespace derbox
