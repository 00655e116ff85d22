#include "derbox/complex.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <tuple>

#include "derbox/linsys.hpp"

namespace derbox {

namespace {

// ---------- matrices over the algebra ----------

DMat amat_zero(const AlgebraBasis& A, const std::vector<int>& row_v,
               const std::vector<int>& col_v) {
  DMat m(row_v.size(), std::vector<AlgebraElement>(col_v.size()));
  for (size_t i = 0; i < row_v.size(); ++i)
    for (size_t j = 0; j < col_v.size(); ++j) m[i][j] = A.zero(col_v[j], row_v[i]);
  return m;
}

DMat amat_identity(const AlgebraBasis& A, const std::vector<int>& verts) {
  DMat m = amat_zero(A, verts, verts);
  for (size_t i = 0; i < verts.size(); ++i) m[i][i] = A.identity(verts[i]);
  return m;
}

// g after f; output shape is given explicitly so an empty middle still yields
// a correctly shaped zero matrix
DMat amat_mul(const AlgebraBasis& A, const DMat& g, const DMat& f, const std::vector<int>& rv,
              const std::vector<int>& cv) {
  DMat out = amat_zero(A, rv, cv);
  size_t mid = f.size();
  for (size_t i = 0; i < rv.size(); ++i)
    for (size_t c = 0; c < cv.size(); ++c) {
      AlgebraElement acc = A.zero(cv[c], rv[i]);
      for (size_t j = 0; j < mid; ++j) acc = A.add(acc, A.multiply(g[i][j], f[j][c]));
      out[i][c] = acc;
    }
  return out;
}

DMat amat_add(const AlgebraBasis& A, const DMat& a, const DMat& b, const Scalar& cb) {
  DMat out = a;
  for (size_t i = 0; i < out.size(); ++i)
    for (size_t j = 0; j < out[i].size(); ++j) out[i][j] = A.add(a[i][j], A.scale(cb, b[i][j]));
  return out;
}

bool amat_is_zero(const DMat& m) {
  for (auto& row : m)
    for (auto& e : row)
      if (!e.is_zero()) return false;
  return true;
}

// inverse of a square matrix over A whose scalar part is the identity
DMat amat_inverse_unipotent(const AlgebraBasis& A, const DMat& u, const std::vector<int>& verts) {
  DMat id = amat_identity(A, verts);
  DMat n = amat_add(A, u, id, -A.field().one());  // radical entries
  DMat acc = id, pw = id;
  for (int k = 1; k < A.nil_degree(); ++k) {
    pw = amat_mul(A, pw, n, verts, verts);
    if (amat_is_zero(pw)) break;
    acc = amat_add(A, acc, pw, (k % 2) ? -A.field().one() : A.field().one());
  }
  return acc;
}

// matrix of u |-> multiply(u, v) : A(a,b) -> A(v.src, b)
Mat right_mult_matrix(const AlgebraBasis& A, const AlgebraElement& v, int a, int b) {
  const auto& dom = A.pair_basis(a, b);
  const auto& cod = A.pair_basis(v.src, b);
  Mat m(A.field(), int(cod.size()), int(dom.size()));
  for (size_t j = 0; j < dom.size(); ++j) {
    AlgebraElement prod = A.multiply(A.from_basis(dom[j]), v);
    for (size_t i = 0; i < cod.size(); ++i) m.at(int(i), int(j)) = prod.c[i];
  }
  return m;
}

// matrix of u |-> multiply(w, u) : A(a,b) -> A(a, w.dst)
Mat left_mult_matrix(const AlgebraBasis& A, const AlgebraElement& w, int a, int b) {
  const auto& dom = A.pair_basis(a, b);
  const auto& cod = A.pair_basis(a, w.dst);
  Mat m(A.field(), int(cod.size()), int(dom.size()));
  for (size_t j = 0; j < dom.size(); ++j) {
    AlgebraElement prod = A.multiply(w, A.from_basis(dom[j]));
    for (size_t i = 0; i < cod.size(); ++i) m.at(int(i), int(j)) = prod.c[i];
  }
  return m;
}

std::vector<int> verts_of_mult(const AlgebraBasis& A, const std::vector<int>& m) {
  std::vector<int> out;
  for (int x = 0; x < A.num_vertices(); ++x)
    for (int c = 0; c < m[size_t(x)]; ++c) out.push_back(x);
  return out;
}

}  // namespace

bool ProjComplex::is_zero() const {
  for (auto& [n, m] : mult)
    for (int v : m)
      if (v != 0) return false;
  return true;
}

std::vector<int> mult_at(const AlgebraBasis& A, const ProjComplex& P, int n) {
  auto it = P.mult.find(n);
  if (it != P.mult.end()) return it->second;
  return std::vector<int>(size_t(A.num_vertices()), 0);
}

std::vector<int> summand_vertices(const AlgebraBasis& A, const ProjComplex& P, int n) {
  return verts_of_mult(A, mult_at(A, P, n));
}

int VectorRank::total() const {
  int t = 0;
  for (auto& [n, m] : r)
    for (int v : m) t += v;
  return t;
}

std::string VectorRank::str(const AlgebraBasis& A) const {
  std::ostringstream os;
  bool first = true;
  for (auto it = r.rbegin(); it != r.rend(); ++it) {
    if (!first) os << " ";
    first = false;
    os << it->first << ":";
    bool inner = false;
    for (int x = 0; x < A.num_vertices(); ++x) {
      if (it->second[size_t(x)] == 0) continue;
      if (inner) os << ",";
      inner = true;
      os << A.vertex_name(x) << "^" << it->second[size_t(x)];
    }
    if (!inner) os << "-";
  }
  return first ? "empty" : os.str();
}

std::optional<std::string> validate_complex(const AlgebraBasis& A, const ProjComplex& P) {
  if (P.nmin > P.nmax) {
    if (!P.mult.empty() || !P.d.empty()) return "window empty but data present";
    return std::nullopt;
  }
  for (auto& [n, m] : P.mult) {
    if (n < P.nmin || n > P.nmax)
      return "multiplicity outside window at degree " + std::to_string(n);
    if (int(m.size()) != A.num_vertices()) return "multiplicity vector length mismatch";
    for (int v : m)
      if (v < 0) return "negative multiplicity";
  }
  for (auto& [n, dm] : P.d) {
    auto rows = summand_vertices(A, P, n - 1);
    auto cols = summand_vertices(A, P, n);
    if (dm.size() != rows.size())
      return "d at degree " + std::to_string(n) + ": row count mismatch";
    for (size_t i = 0; i < dm.size(); ++i) {
      if (dm[i].size() != cols.size())
        return "d at degree " + std::to_string(n) + ": column count mismatch";
      for (size_t j = 0; j < cols.size(); ++j) {
        const auto& e = dm[i][j];
        if (e.src != cols[j] || e.dst != rows[i])
          return "d at degree " + std::to_string(n) + ": entry (" + std::to_string(i) + "," +
                 std::to_string(j) + ") has wrong endpoints";
        if (int(e.c.size()) != A.dim(e.src, e.dst))
          return "d at degree " + std::to_string(n) + ": entry coefficient length mismatch";
      }
    }
  }
  for (int n = P.nmin; n <= P.nmax; ++n) {
    auto itn = P.d.find(n);
    auto itm = P.d.find(n + 1);
    if (itn == P.d.end() || itm == P.d.end()) continue;
    auto rows = summand_vertices(A, P, n - 1);
    auto cols = summand_vertices(A, P, n + 1);
    DMat prod = amat_mul(A, itn->second, itm->second, rows, cols);
    for (size_t i = 0; i < prod.size(); ++i)
      for (size_t j = 0; j < prod[i].size(); ++j)
        if (!prod[i][j].is_zero())
          return "not a complex: (d_" + std::to_string(n) + " d_" + std::to_string(n + 1) +
                 ") entry (" + std::to_string(i) + "," + std::to_string(j) + ") = " +
                 A.element_str(prod[i][j]);
  }
  return std::nullopt;
}

void require_valid(const AlgebraBasis& A, const ProjComplex& P) {
  auto v = validate_complex(A, P);
  if (v) fail(Err::Validation, *v);
}

bool is_minimal(const AlgebraBasis& A, const ProjComplex& P) {
  for (auto& [n, dm] : P.d)
    for (auto& row : dm)
      for (auto& e : row)
        if (!A.in_radical(e)) return false;
  return true;
}

VectorRank vector_rank(const AlgebraBasis& A, const ProjComplex& P) {
  (void)A;
  VectorRank vr;
  for (auto& [n, m] : P.mult) {
    bool nz = false;
    for (int v : m) nz = nz || v != 0;
    if (nz) vr.r[n] = m;
  }
  return vr;
}

ProjComplex trim_window(const AlgebraBasis& A, const ProjComplex& P) {
  ProjComplex Q;
  VectorRank vr = vector_rank(A, P);
  if (vr.r.empty()) return Q;  // zero complex
  Q.nmin = vr.r.begin()->first;
  Q.nmax = vr.r.rbegin()->first;
  for (int n = Q.nmin; n <= Q.nmax; ++n) Q.mult[n] = mult_at(A, P, n);
  for (auto& [n, dm] : P.d) {
    if (n <= Q.nmin || n > Q.nmax) continue;
    if (!dm.empty() && !dm[0].empty()) Q.d[n] = dm;
  }
  return Q;
}

bool same_data(const AlgebraBasis& A, const ProjComplex& P, const ProjComplex& Q) {
  ProjComplex a = trim_window(A, P), b = trim_window(A, Q);
  if (a.nmin > a.nmax && b.nmin > b.nmax) return true;
  if (a.nmin != b.nmin || a.nmax != b.nmax || a.mult != b.mult) return false;
  for (int n = a.nmin; n <= a.nmax; ++n) {
    auto ia = a.d.find(n), ib = b.d.find(n);
    bool za = (ia == a.d.end()) || amat_is_zero(ia->second);
    bool zb = (ib == b.d.end()) || amat_is_zero(ib->second);
    if (za != zb) return false;
    if (za) continue;
    if (ia->second != ib->second) return false;
  }
  return true;
}

ProjComplex direct_sum(const AlgebraBasis& A, const ProjComplex& P, const ProjComplex& Q) {
  if (P.is_zero()) return trim_window(A, Q);
  if (Q.is_zero()) return trim_window(A, P);
  ProjComplex R;
  R.nmin = std::min(P.nmin, Q.nmin);
  R.nmax = std::max(P.nmax, Q.nmax);
  for (int n = R.nmin; n <= R.nmax; ++n) {
    auto mp = mult_at(A, P, n), mq = mult_at(A, Q, n);
    std::vector<int> m(size_t(A.num_vertices()));
    for (int x = 0; x < A.num_vertices(); ++x) m[size_t(x)] = mp[size_t(x)] + mq[size_t(x)];
    R.mult[n] = m;
  }
  // block-diagonal differential; within each vertex the P copies come first
  for (int n = R.nmin + 1; n <= R.nmax; ++n) {
    auto rows = summand_vertices(A, R, n - 1);
    auto cols = summand_vertices(A, R, n);
    if (rows.empty() || cols.empty()) continue;
    DMat dm = amat_zero(A, rows, cols);
    bool any = false;
    auto place = [&](const ProjComplex& S, bool isP) {
      auto it = S.d.find(n);
      if (it == S.d.end()) return;
      any = true;
      auto mpn = mult_at(A, P, n), mqn = mult_at(A, Q, n);
      auto mpn1 = mult_at(A, P, n - 1), mqn1 = mult_at(A, Q, n - 1);
      auto reindex = [&](int vtx, int copy, const std::vector<int>& mP,
                         const std::vector<int>& mQ) {
        int base = 0;
        for (int x = 0; x < vtx; ++x) base += mP[size_t(x)] + mQ[size_t(x)];
        return base + (isP ? copy : mP[size_t(vtx)] + copy);
      };
      std::vector<std::pair<int, int>> scols_vc, srows_vc;
      {
        auto m = mult_at(A, S, n);
        for (int x = 0; x < A.num_vertices(); ++x)
          for (int c = 0; c < m[size_t(x)]; ++c) scols_vc.push_back({x, c});
        auto m1 = mult_at(A, S, n - 1);
        for (int x = 0; x < A.num_vertices(); ++x)
          for (int c = 0; c < m1[size_t(x)]; ++c) srows_vc.push_back({x, c});
      }
      for (size_t i = 0; i < srows_vc.size(); ++i)
        for (size_t j = 0; j < scols_vc.size(); ++j) {
          int ri = reindex(srows_vc[i].first, srows_vc[i].second, mpn1, mqn1);
          int cj = reindex(scols_vc[j].first, scols_vc[j].second, mpn, mqn);
          dm[size_t(ri)][size_t(cj)] = it->second[i][j];
        }
    };
    place(P, true);
    place(Q, false);
    if (any) R.d[n] = dm;
  }
  return R;
}

ProjComplex shift_complex(const AlgebraBasis& A, const ProjComplex& P, int by) {
  (void)A;
  ProjComplex Q;
  Q.nmin = P.nmin + by;
  Q.nmax = P.nmax + by;
  for (auto& [n, m] : P.mult) Q.mult[n + by] = m;
  for (auto& [n, dm] : P.d) Q.d[n + by] = dm;
  return Q;
}

ProjComplex stalk_complex(const AlgebraBasis& A, int vertex, int degree) {
  ProjComplex P;
  P.nmin = P.nmax = degree;
  std::vector<int> m(size_t(A.num_vertices()), 0);
  m[size_t(vertex)] = 1;
  P.mult[degree] = m;
  return P;
}

// ---------- chain maps ----------

ChainMap identity_chain_map(const AlgebraBasis& A, const ProjComplex& P) {
  ChainMap f;
  for (int n = P.nmin; n <= P.nmax; ++n) {
    auto v = summand_vertices(A, P, n);
    if (!v.empty()) f.f[n] = amat_identity(A, v);
  }
  return f;
}

ChainMap zero_chain_map(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y) {
  ChainMap f;
  int lo = std::max(X.nmin, Y.nmin), hi = std::min(X.nmax, Y.nmax);
  for (int n = lo; n <= hi; ++n) {
    auto cv = summand_vertices(A, X, n);
    auto rv = summand_vertices(A, Y, n);
    if (!cv.empty() && !rv.empty()) f.f[n] = amat_zero(A, rv, cv);
  }
  return f;
}

namespace {

DMat cm_block(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
              const ChainMap& f, int n) {
  auto it = f.f.find(n);
  if (it != f.f.end() && !it->second.empty() && !it->second[0].empty()) return it->second;
  return amat_zero(A, summand_vertices(A, Y, n), summand_vertices(A, X, n));
}

DMat d_block(const AlgebraBasis& A, const ProjComplex& P, int n) {
  auto it = P.d.find(n);
  if (it != P.d.end() && !it->second.empty() && !it->second[0].empty()) return it->second;
  return amat_zero(A, summand_vertices(A, P, n - 1), summand_vertices(A, P, n));
}

}  // namespace

bool is_chain_map(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                  const ChainMap& f) {
  int lo = std::min(X.nmin, Y.nmin), hi = std::max(X.nmax, Y.nmax);
  for (int n = lo; n <= hi + 1; ++n) {
    auto rv = summand_vertices(A, Y, n - 1);
    auto cv = summand_vertices(A, X, n);
    if (rv.empty() || cv.empty()) continue;
    DMat lhs = amat_mul(A, cm_block(A, X, Y, f, n - 1), d_block(A, X, n), rv, cv);
    DMat rhs = amat_mul(A, d_block(A, Y, n), cm_block(A, X, Y, f, n), rv, cv);
    for (size_t i = 0; i < lhs.size(); ++i)
      for (size_t j = 0; j < lhs[i].size(); ++j)
        if (lhs[i][j] != rhs[i][j]) return false;
  }
  return true;
}

std::vector<ChainMap> hom_chain_maps(const AlgebraBasis& A, const ProjComplex& X,
                                     const ProjComplex& Y) {
  LinSystem sys(A.field());
  std::map<std::tuple<int, int, int>, int> base;  // (degree,row,col) -> first variable
  std::map<int, std::pair<std::vector<int>, std::vector<int>>> shape;
  int lo = std::max(X.nmin, Y.nmin), hi = std::min(X.nmax, Y.nmax);
  for (int n = lo; n <= hi; ++n) {
    auto cv = summand_vertices(A, X, n);
    auto rv = summand_vertices(A, Y, n);
    if (cv.empty() || rv.empty()) continue;
    shape[n] = {rv, cv};
    for (size_t i = 0; i < rv.size(); ++i)
      for (size_t j = 0; j < cv.size(); ++j)
        base[{n, int(i), int(j)}] = sys.add_vars(A.dim(cv[j], rv[i]));
  }
  // f_{n-1} dX_n = dY_n f_n
  for (int n = std::min(X.nmin, Y.nmin); n <= std::max(X.nmax, Y.nmax) + 1; ++n) {
    auto xcols = summand_vertices(A, X, n);
    auto yrows = summand_vertices(A, Y, n - 1);
    if (xcols.empty() || yrows.empty()) continue;
    DMat dX = d_block(A, X, n);
    DMat dY = d_block(A, Y, n);
    auto xmid = summand_vertices(A, X, n - 1);
    auto ymid = summand_vertices(A, Y, n);
    for (size_t i = 0; i < yrows.size(); ++i)
      for (size_t c = 0; c < xcols.size(); ++c) {
        const auto& tspace = A.pair_basis(xcols[c], yrows[i]);
        if (tspace.empty()) continue;
        std::vector<std::map<int, Scalar>> rows(tspace.size());
        for (size_t j = 0; j < xmid.size(); ++j) {  // + f_{n-1}[i][j] dX[j][c]
          auto bit = base.find({n - 1, int(i), int(j)});
          if (bit == base.end()) continue;
          Mat rm = right_mult_matrix(A, dX[j][c], xmid[j], yrows[i]);
          for (int t = 0; t < rm.rows; ++t)
            for (int u = 0; u < rm.cols; ++u)
              acc_row(rows[size_t(t)], bit->second + u, rm.at(t, u));
        }
        for (size_t kk = 0; kk < ymid.size(); ++kk) {  // - dY[i][k] f_n[k][c]
          auto bit = base.find({n, int(kk), int(c)});
          if (bit == base.end()) continue;
          Mat lm = left_mult_matrix(A, dY[i][kk], xcols[c], ymid[kk]);
          for (int t = 0; t < lm.rows; ++t)
            for (int u = 0; u < lm.cols; ++u)
              acc_row(rows[size_t(t)], bit->second + u, -lm.at(t, u));
        }
        for (auto& row : rows)
          if (!row.empty()) sys.add_row(std::move(row), A.field().zero());
      }
  }
  auto sol = sys.solve();
  std::vector<ChainMap> out;
  if (!sol) return out;
  for (const auto& kv : sol->second) {
    ChainMap f;
    for (auto& [n, sh] : shape) {
      DMat m = amat_zero(A, sh.first, sh.second);
      for (size_t i = 0; i < sh.first.size(); ++i)
        for (size_t j = 0; j < sh.second.size(); ++j) {
          int b = base[{n, int(i), int(j)}];
          for (size_t t = 0; t < m[i][j].c.size(); ++t) m[i][j].c[t] = kv[size_t(b) + t];
        }
      f.f[n] = m;
    }
    out.push_back(std::move(f));
  }
  return out;
}

ChainMap compose_chain_maps(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                            const ProjComplex& Z, const ChainMap& g, const ChainMap& f) {
  ChainMap h;
  int lo = std::max(X.nmin, Z.nmin), hi = std::min(X.nmax, Z.nmax);
  for (int n = lo; n <= hi; ++n) {
    auto cv = summand_vertices(A, X, n);
    auto rv = summand_vertices(A, Z, n);
    if (cv.empty() || rv.empty()) continue;
    h.f[n] = amat_mul(A, cm_block(A, Y, Z, g, n), cm_block(A, X, Y, f, n), rv, cv);
  }
  return h;
}

ChainMap add_chain_maps(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                        const ChainMap& f, const ChainMap& g, const Scalar& cg) {
  ChainMap h;
  int lo = std::max(X.nmin, Y.nmin), hi = std::min(X.nmax, Y.nmax);
  for (int n = lo; n <= hi; ++n) {
    auto cv = summand_vertices(A, X, n);
    auto rv = summand_vertices(A, Y, n);
    if (cv.empty() || rv.empty()) continue;
    h.f[n] = amat_add(A, cm_block(A, X, Y, f, n), cm_block(A, X, Y, g, n), cg);
  }
  return h;
}

std::optional<Homotopy> quasi_homotopy_witness(const AlgebraBasis& A, const ProjComplex& X,
                                               const ProjComplex& Y, const ChainMap& f,
                                               const ChainMap& g, int N) {
  for (auto& [n, m] : X.mult)
    if (n > N)
      for (int v : m)
        if (v) fail(Err::PreconditionViolated, "complex does not vanish above the cut degree");
  for (auto& [n, m] : Y.mult)
    if (n > N)
      for (int v : m)
        if (v) fail(Err::PreconditionViolated, "complex does not vanish above the cut degree");
  LinSystem sys(A.field());
  std::map<std::tuple<int, int, int>, int> base;
  std::map<int, std::pair<std::vector<int>, std::vector<int>>> shape;
  int lo = std::min(X.nmin, Y.nmin);
  for (int n = lo; n <= N - 1; ++n) {
    auto cv = summand_vertices(A, X, n);
    auto rv = summand_vertices(A, Y, n + 1);
    if (cv.empty() || rv.empty()) continue;
    shape[n] = {rv, cv};
    for (size_t i = 0; i < rv.size(); ++i)
      for (size_t j = 0; j < cv.size(); ++j)
        base[{n, int(i), int(j)}] = sys.add_vars(A.dim(cv[j], rv[i]));
  }
  // for n < N: (f - g)_n = dY_{n+1} s_n + s_{n-1} dX_n; degree N is unconstrained
  ChainMap diff = add_chain_maps(A, X, Y, f, g, -A.field().one());
  for (int n = lo; n <= N - 1; ++n) {
    auto xcols = summand_vertices(A, X, n);
    auto yrows = summand_vertices(A, Y, n);
    if (xcols.empty() || yrows.empty()) continue;
    DMat dm = cm_block(A, X, Y, diff, n);
    DMat dY = d_block(A, Y, n + 1);
    DMat dX = d_block(A, X, n);
    auto ymid = summand_vertices(A, Y, n + 1);
    auto xmid = summand_vertices(A, X, n - 1);
    for (size_t i = 0; i < yrows.size(); ++i)
      for (size_t c = 0; c < xcols.size(); ++c) {
        const auto& tspace = A.pair_basis(xcols[c], yrows[i]);
        if (tspace.empty()) continue;
        std::vector<std::map<int, Scalar>> rows(tspace.size());
        for (size_t kk = 0; kk < ymid.size(); ++kk) {  // dY_{n+1}[i][k] s_n[k][c]
          auto bit = base.find({n, int(kk), int(c)});
          if (bit == base.end()) continue;
          Mat lm = left_mult_matrix(A, dY[i][kk], xcols[c], ymid[kk]);
          for (int t = 0; t < lm.rows; ++t)
            for (int u = 0; u < lm.cols; ++u)
              acc_row(rows[size_t(t)], bit->second + u, lm.at(t, u));
        }
        for (size_t j = 0; j < xmid.size(); ++j) {  // s_{n-1}[i][j] dX_n[j][c]
          auto bit = base.find({n - 1, int(i), int(j)});
          if (bit == base.end()) continue;
          Mat rm = right_mult_matrix(A, dX[j][c], xmid[j], yrows[i]);
          for (int t = 0; t < rm.rows; ++t)
            for (int u = 0; u < rm.cols; ++u)
              acc_row(rows[size_t(t)], bit->second + u, rm.at(t, u));
        }
        for (size_t t = 0; t < rows.size(); ++t) sys.add_row(std::move(rows[t]), dm[i][c].c[t]);
      }
  }
  auto sol = sys.solve();
  if (!sol) return std::nullopt;
  Homotopy h;
  for (auto& [n, sh] : shape) {
    DMat m = amat_zero(A, sh.first, sh.second);
    for (size_t i = 0; i < sh.first.size(); ++i)
      for (size_t j = 0; j < sh.second.size(); ++j) {
        int b = base[{n, int(i), int(j)}];
        for (size_t t = 0; t < m[i][j].c.size(); ++t) m[i][j].c[t] = sol->first[size_t(b) + t];
      }
    h.s[n] = m;
  }
  return h;
}

bool is_quasi_homotopic(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                        const ChainMap& f, const ChainMap& g, int N) {
  return quasi_homotopy_witness(A, X, Y, f, g, N).has_value();
}

bool is_chain_iso(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                  const ChainMap& f) {
  if (vector_rank(A, X) != vector_rank(A, Y)) return false;
  int lo = std::min(X.nmin, Y.nmin), hi = std::max(X.nmax, Y.nmax);
  for (int n = lo; n <= hi; ++n) {
    auto cv = summand_vertices(A, X, n);
    auto rv = summand_vertices(A, Y, n);
    if (cv.empty() && rv.empty()) continue;
    if (cv.size() != rv.size()) return false;
    DMat m = cm_block(A, X, Y, f, n);
    // the scalar part is blockwise per vertex; every block must be invertible
    for (int x = 0; x < A.num_vertices(); ++x) {
      std::vector<int> ridx, cidx;
      for (size_t i = 0; i < rv.size(); ++i)
        if (rv[i] == x) ridx.push_back(int(i));
      for (size_t j = 0; j < cv.size(); ++j)
        if (cv[j] == x) cidx.push_back(int(j));
      if (ridx.size() != cidx.size()) return false;
      if (ridx.empty()) continue;
      Mat blk(A.field(), int(ridx.size()), int(cidx.size()));
      for (size_t i = 0; i < ridx.size(); ++i)
        for (size_t j = 0; j < cidx.size(); ++j)
          blk.at(int(i), int(j)) = A.identity_coeff(m[size_t(ridx[i])][size_t(cidx[j])]);
      if (!blk.inverse().has_value()) return false;
    }
  }
  return true;
}

namespace {

// Greedy subset of H whose identity-coefficient layers are linearly independent. Being a
// chain isomorphism depends only on that layer, so the search can restrict to
// combinations of this subset without losing witnesses.
std::vector<size_t> scalar_spanning_subset(const AlgebraBasis& A, const ProjComplex& X,
                                           const ProjComplex& Y,
                                           const std::vector<ChainMap>& H) {
  std::vector<std::vector<Scalar>> red;
  std::vector<size_t> pivot;
  std::vector<size_t> keep;
  for (size_t i = 0; i < H.size(); ++i) {
    std::vector<Scalar> v;
    for (int n = std::min(X.nmin, Y.nmin); n <= std::max(X.nmax, Y.nmax); ++n) {
      auto cv = summand_vertices(A, X, n);
      auto rv = summand_vertices(A, Y, n);
      if (cv.empty() || rv.empty()) continue;
      DMat m = cm_block(A, X, Y, H[i], n);
      for (const auto& row : m)
        for (const auto& e : row) v.push_back(A.identity_coeff(e));
    }
    for (size_t r = 0; r < red.size(); ++r) {
      const Scalar c = v[pivot[r]];
      if (c.is_zero()) continue;
      for (size_t j = 0; j < v.size(); ++j) v[j] -= red[r][j] * c;
    }
    size_t p = v.size();
    for (size_t j = 0; j < v.size(); ++j)
      if (!v[j].is_zero()) {
        p = j;
        break;
      }
    if (p == v.size()) continue;
    Scalar inv = v[p].inverse();
    for (auto& x : v) x = x * inv;
    red.push_back(std::move(v));
    pivot.push_back(p);
    keep.push_back(i);
  }
  return keep;
}

std::optional<ChainMap> iso_complex_search(const AlgebraBasis& A, const ProjComplex& X,
                                           const ProjComplex& Y, bool exhaustive_only) {
  if (!is_minimal(A, X) || !is_minimal(A, Y))
    fail(Err::NotMinimal, "isomorphism testing requires minimal complexes");
  if (vector_rank(A, X) != vector_rank(A, Y)) return std::nullopt;
  if (X.is_zero() && Y.is_zero()) return ChainMap{};
  auto H = hom_chain_maps(A, X, Y);
  if (H.empty()) return std::nullopt;
  for (const auto& f : H)
    if (is_chain_iso(A, X, Y, f)) return f;
  auto keep = scalar_spanning_subset(A, X, Y, H);
  if (keep.empty()) return std::nullopt;  // every chain map has zero scalar layer
  const Field& k = A.field();
  auto combine = [&](const std::vector<Scalar>& co) {
    ChainMap f = zero_chain_map(A, X, Y);
    for (size_t i = 0; i < keep.size(); ++i) f = add_chain_maps(A, X, Y, f, H[keep[i]], co[i]);
    return f;
  };
  if (!k.is_rational()) {
    double total = 1;
    for (size_t i = 0; i < keep.size() && total <= 2e6; ++i) total *= double(k.p);
    if (total <= 2e6) {  // exhaustive scan of the scalar-layer span
      std::vector<int64_t> cnt(keep.size(), 0);
      while (true) {
        std::vector<Scalar> co;
        co.reserve(cnt.size());
        for (int64_t v : cnt) co.push_back(k.from_int(v));
        ChainMap f = combine(co);
        if (is_chain_iso(A, X, Y, f)) return f;
        size_t i = 0;
        while (i < cnt.size() && ++cnt[i] == k.p) cnt[i++] = 0;
        if (i == cnt.size()) break;
      }
      return std::nullopt;
    }
  }
  if (exhaustive_only)
    fail(Err::ResourceCeiling, "isomorphism search space exceeds the exhaustive ceiling (" +
                                   std::to_string(keep.size()) + " independent scalar directions)");
  // seeded random combinations; the isomorphisms form a dense open locus of the
  // hom space whenever one exists, so misses are overwhelmingly unlikely
  std::mt19937_64 rng(0xD15C0u);
  for (int trial = 0; trial < 4000; ++trial) {
    std::vector<Scalar> co;
    for (size_t i = 0; i < keep.size(); ++i) {
      if (k.is_rational())
        co.push_back(k.from_int(int64_t(rng() % 2001) - 1000));
      else
        co.push_back(k.from_int(int64_t(rng() % uint64_t(k.p))));
    }
    ChainMap f = combine(co);
    if (is_chain_iso(A, X, Y, f)) return f;
  }
  return std::nullopt;
}

}  // namespace

std::optional<ChainMap> iso_complexes(const AlgebraBasis& A, const ProjComplex& X,
                                      const ProjComplex& Y) {
  return iso_complex_search(A, X, Y, false);
}

std::optional<ChainMap> iso_complexes_exhaustive(const AlgebraBasis& A, const ProjComplex& X,
                                                 const ProjComplex& Y) {
  return iso_complex_search(A, X, Y, true);
}

// ---------- minimize ----------

MinimizeResult minimize(const AlgebraBasis& A, const ProjComplex& P0) {
  ProjComplex P = P0;
  ChainMap to = identity_chain_map(A, P0);    // P0 -> current
  ChainMap from = identity_chain_map(A, P0);  // current -> P0

  auto apply_colop = [&](int n, int c0, int c, const AlgebraElement& coef) {
    // column c of d_n -= column c0 * coef, with the inverse change upstream
    DMat& dn = P.d[n];
    for (size_t i = 0; i < dn.size(); ++i)
      dn[i][size_t(c)] = A.sub(dn[i][size_t(c)], A.multiply(dn[i][size_t(c0)], coef));
    auto it = P.d.find(n + 1);
    if (it != P.d.end())
      for (size_t j = 0; j < it->second[size_t(c0)].size(); ++j)
        it->second[size_t(c0)][j] =
            A.add(it->second[size_t(c0)][j], A.multiply(coef, it->second[size_t(c)][j]));
    auto tit = to.f.find(n);
    if (tit != to.f.end())
      for (size_t j = 0; j < tit->second[size_t(c0)].size(); ++j)
        tit->second[size_t(c0)][j] =
            A.add(tit->second[size_t(c0)][j], A.multiply(coef, tit->second[size_t(c)][j]));
    auto fit = from.f.find(n);
    if (fit != from.f.end())
      for (size_t i = 0; i < fit->second.size(); ++i)
        fit->second[i][size_t(c)] =
            A.sub(fit->second[i][size_t(c)], A.multiply(fit->second[i][size_t(c0)], coef));
  };
  auto apply_rowop = [&](int n, int r0, int r, const AlgebraElement& coef) {
    // row r of d_n -= coef * row r0
    DMat& dn = P.d[n];
    for (size_t j = 0; j < dn[size_t(r)].size(); ++j)
      dn[size_t(r)][j] = A.sub(dn[size_t(r)][j], A.multiply(coef, dn[size_t(r0)][j]));
    auto it = P.d.find(n - 1);
    if (it != P.d.end())
      for (size_t i = 0; i < it->second.size(); ++i)
        it->second[i][size_t(r0)] =
            A.add(it->second[i][size_t(r0)], A.multiply(it->second[i][size_t(r)], coef));
    auto tit = to.f.find(n - 1);
    if (tit != to.f.end())
      for (size_t j = 0; j < tit->second[size_t(r)].size(); ++j)
        tit->second[size_t(r)][j] =
            A.sub(tit->second[size_t(r)][j], A.multiply(coef, tit->second[size_t(r0)][j]));
    auto fit = from.f.find(n - 1);
    if (fit != from.f.end())
      for (size_t i = 0; i < fit->second.size(); ++i)
        fit->second[i][size_t(r0)] =
            A.add(fit->second[i][size_t(r0)], A.multiply(fit->second[i][size_t(r)], coef));
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (int n = P.nmin + 1; n <= P.nmax && !changed; ++n) {
      auto it = P.d.find(n);
      if (it == P.d.end()) continue;
      auto rows = summand_vertices(A, P, n - 1);
      auto cols = summand_vertices(A, P, n);
      int pr = -1, pc = -1;
      for (size_t i = 0; i < it->second.size() && pr < 0; ++i)
        for (size_t j = 0; j < it->second[i].size(); ++j)
          if (rows[i] == cols[j] && !A.identity_coeff(it->second[i][j]).is_zero()) {
            pr = int(i);
            pc = int(j);
            break;
          }
      if (pr < 0) continue;
      changed = true;
      AlgebraElement u = it->second[size_t(pr)][size_t(pc)];
      AlgebraElement uinv = *A.invert(u);
      for (size_t j = 0; j < it->second[size_t(pr)].size(); ++j) {
        if (int(j) == pc) continue;
        AlgebraElement v = it->second[size_t(pr)][j];
        if (v.is_zero()) continue;
        apply_colop(n, pc, int(j), A.multiply(uinv, v));
      }
      for (size_t i = 0; i < it->second.size(); ++i) {
        if (int(i) == pr) continue;
        AlgebraElement w = it->second[i][size_t(pc)];
        if (w.is_zero()) continue;
        apply_rowop(n, pr, int(i), A.multiply(w, uinv));
      }
      // the cancelled pair now sits alone in its row and column; the adjacent
      // differentials vanish against it by d.d = 0, so both summands drop out
      {
        DMat& m = P.d[n];
        m.erase(m.begin() + pr);
        for (auto& row : m) row.erase(row.begin() + pc);
      }
      auto itup = P.d.find(n + 1);
      if (itup != P.d.end()) itup->second.erase(itup->second.begin() + pc);
      auto itdn = P.d.find(n - 1);
      if (itdn != P.d.end())
        for (auto& row : itdn->second) row.erase(row.begin() + pr);
      P.mult[n][size_t(cols[size_t(pc)])] -= 1;
      P.mult[n - 1][size_t(rows[size_t(pr)])] -= 1;
      auto tn = to.f.find(n);
      if (tn != to.f.end()) tn->second.erase(tn->second.begin() + pc);
      auto fn = from.f.find(n);
      if (fn != from.f.end())
        for (auto& row : fn->second) row.erase(row.begin() + pc);
      auto tn1 = to.f.find(n - 1);
      if (tn1 != to.f.end()) tn1->second.erase(tn1->second.begin() + pr);
      auto fn1 = from.f.find(n - 1);
      if (fn1 != from.f.end())
        for (auto& row : fn1->second) row.erase(row.begin() + pr);
      for (auto dit = P.d.begin(); dit != P.d.end();) {
        if (dit->second.empty() || dit->second[0].empty())
          dit = P.d.erase(dit);
        else
          ++dit;
      }
    }
  }
  MinimizeResult res;
  res.min = trim_window(A, P);
  for (auto it2 = to.f.begin(); it2 != to.f.end();)
    it2 = (it2->second.empty() || it2->second[0].empty()) ? to.f.erase(it2) : std::next(it2);
  for (auto it2 = from.f.begin(); it2 != from.f.end();)
    it2 = (it2->second.empty() || it2->second[0].empty()) ? from.f.erase(it2) : std::next(it2);
  res.to_min = to;
  res.from_min = from;
  return res;
}

// ---------- decompose ----------

namespace {

std::vector<Scalar> flatten_cm(const AlgebraBasis& A, const ProjComplex& P, const ChainMap& f) {
  std::vector<Scalar> out;
  for (int n = P.nmin; n <= P.nmax; ++n) {
    auto v = summand_vertices(A, P, n);
    if (v.empty()) continue;
    DMat m = cm_block(A, P, P, f, n);
    for (auto& row : m)
      for (auto& e : row)
        for (auto& c : e.c) out.push_back(c);
  }
  return out;
}

// minimal polynomial of u in End(P) via linear dependence of its powers
Poly min_poly(const AlgebraBasis& A, const ProjComplex& P, const ChainMap& u) {
  const Field& k = A.field();
  std::vector<ChainMap> powers;
  powers.push_back(identity_chain_map(A, P));
  std::vector<std::vector<Scalar>> flats;
  flats.push_back(flatten_cm(A, P, powers[0]));
  int dim = int(flats[0].size());
  for (int deg = 1; deg <= dim + 1; ++deg) {
    powers.push_back(compose_chain_maps(A, P, P, P, u, powers.back()));
    flats.push_back(flatten_cm(A, P, powers.back()));
    Mat m(k, dim, deg);
    for (int i = 0; i < deg; ++i)
      for (int r = 0; r < dim; ++r) m.at(r, i) = flats[size_t(i)][size_t(r)];
    auto sol = m.solve(flats.back());
    if (sol) {
      std::vector<Scalar> coeffs;
      for (int i = 0; i < deg; ++i) coeffs.push_back(-(*sol)[size_t(i)]);
      coeffs.push_back(k.one());
      return Poly(k, coeffs);
    }
  }
  fail(Err::Internal, "minimal polynomial not found");
}

// nontrivial coprime factorization m = a * b, when the factor structure allows one
std::optional<std::pair<Poly, Poly>> coprime_split(const Poly& m) {
  const Field& k = m.field();
  auto rd = m.roots();
  if (!rd.roots.empty()) {
    auto [lambda, mult] = rd.roots[0];
    Poly lin(k, {-lambda, k.one()});
    Poly apow = Poly::constant(k, k.one());
    for (int i = 0; i < mult; ++i) apow = apow * lin;
    Poly b = m.divmod(apow).first;
    if (b.degree() >= 1) return std::make_pair(apow, b);
    return std::nullopt;  // primary
  }
  if (m.degree() < 4) return std::nullopt;  // rootless of degree <= 3 is irreducible
  if (!k.is_rational()) {
    auto w = m.irreducible_witness();
    if (!w || w->degree() == m.degree()) return std::nullopt;
    Poly apow = Poly::constant(k, k.one());
    Poly rest = m;
    while (true) {
      auto dm = rest.divmod(*w);
      if (!dm.second.is_zero()) break;
      apow = apow * *w;
      rest = dm.first;
    }
    if (rest.degree() >= 1) return std::make_pair(apow, rest);
    return std::nullopt;
  }
  // over the rationals: probe small quadratic divisors
  for (int64_t b = -30; b <= 30; ++b)
    for (int64_t c = -30; c <= 30; ++c) {
      Poly q(k, {k.from_int(c), k.from_int(b), k.one()});
      auto dm = m.divmod(q);
      if (!dm.second.is_zero()) continue;
      Poly apow = q, rest = dm.first;
      while (true) {
        auto d2 = rest.divmod(q);
        if (!d2.second.is_zero()) break;
        apow = apow * q;
        rest = d2.first;
      }
      if (rest.degree() >= 1 && Poly::gcd(apow, rest).degree() == 0)
        return std::make_pair(apow, rest);
    }
  return std::nullopt;
}

ChainMap eval_poly_cm(const AlgebraBasis& A, const ProjComplex& P, const Poly& p,
                      const ChainMap& u) {
  ChainMap acc = zero_chain_map(A, P, P);
  ChainMap pw = identity_chain_map(A, P);
  for (int i = 0; i <= p.degree(); ++i) {
    acc = add_chain_maps(A, P, P, acc, pw, p.coeff(i));
    if (i < p.degree()) pw = compose_chain_maps(A, P, P, P, u, pw);
  }
  return acc;
}

std::optional<ChainMap> find_idempotent(const AlgebraBasis& A, const ProjComplex& P) {
  auto H = hom_chain_maps(A, P, P);
  const Field& k = A.field();
  auto try_u = [&](const ChainMap& u) -> std::optional<ChainMap> {
    Poly m = min_poly(A, P, u);
    auto split = coprime_split(m);
    if (!split) return std::nullopt;
    auto [pa, pb] = *split;
    auto [g, gx, gy] = Poly::ext_gcd(pa, pb);
    if (g.degree() != 0) return std::nullopt;
    // e = (gy*pb)(u) acts as 1 on the pa-primary part and 0 on the pb-part
    Poly ep = (gy * pb) * g.coeff(0).inverse();
    ChainMap e = eval_poly_cm(A, P, ep.divmod(m).second, u);
    ChainMap ee = compose_chain_maps(A, P, P, P, e, e);
    auto fe = flatten_cm(A, P, e);
    if (fe != flatten_cm(A, P, ee)) return std::nullopt;
    auto fid = flatten_cm(A, P, identity_chain_map(A, P));
    bool zero = true, ident = true;
    for (size_t i = 0; i < fe.size(); ++i) {
      if (!fe[i].is_zero()) zero = false;
      if (fe[i] != fid[i]) ident = false;
    }
    if (zero || ident) return std::nullopt;
    return e;
  };
  for (const auto& u : H) {
    auto e = try_u(u);
    if (e) return e;
  }
  std::mt19937_64 rng(0x1DE0u);
  for (int trial = 0; trial < 300; ++trial) {
    ChainMap u = zero_chain_map(A, P, P);
    for (const auto& h : H) {
      Scalar c = k.is_rational() ? k.from_int(int64_t(rng() % 41) - 20)
                                 : k.from_int(int64_t(rng() % uint64_t(k.p)));
      u = add_chain_maps(A, P, P, u, h, c);
    }
    auto e = try_u(u);
    if (e) return e;
  }
  if (!k.is_rational()) {
    double total = 1;
    for (size_t i = 0; i < H.size() && total <= 200000; ++i) total *= double(k.p);
    if (total <= 200000) {  // small hom space: scan it completely
      std::vector<int64_t> cnt(H.size(), 0);
      while (true) {
        ChainMap u = zero_chain_map(A, P, P);
        for (size_t i = 0; i < H.size(); ++i)
          u = add_chain_maps(A, P, P, u, H[i], k.from_int(cnt[i]));
        auto e = try_u(u);
        if (e) return e;
        size_t i = 0;
        while (i < cnt.size() && ++cnt[i] == k.p) cnt[i++] = 0;
        if (i == cnt.size()) break;
      }
    }
  }
  return std::nullopt;
}

// conjugate P so that e becomes an exact 0/1 diagonal, then cut along it
std::pair<ProjComplex, ProjComplex> split_by_idempotent(const AlgebraBasis& A,
                                                        const ProjComplex& P0,
                                                        const ChainMap& e0) {
  ProjComplex P = P0;
  ChainMap e = e0;
  const Field& k = A.field();
  std::map<int, std::vector<int>> keep1;  // per degree: positions of the e=1 part
  for (int n = P.nmin; n <= P.nmax; ++n) {
    auto verts = summand_vertices(A, P, n);
    if (verts.empty()) continue;
    DMat en = cm_block(A, P, P, e, n);
    int s = int(verts.size());
    Mat ebar(k, s, s);  // scalar part; blockwise per vertex
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        if (verts[size_t(i)] == verts[size_t(j)])
          ebar.at(i, j) = A.identity_coeff(en[size_t(i)][size_t(j)]);
    Mat img(k, s, 0);
    {
      Mat r = ebar;
      auto piv = rref(r);
      Mat sel(k, s, int(piv.size()));
      for (size_t c = 0; c < piv.size(); ++c)
        for (int i = 0; i < s; ++i) sel.at(i, int(c)) = ebar.at(i, piv[c]);
      img = sel;
    }
    Mat kerb = ebar.kernel();
    Mat vin = hstack(img, kerb);
    if (vin.cols != s) fail(Err::Internal, "idempotent image/kernel split has wrong size");
    int rank = img.cols;
    // keep summands grouped by vertex: reorder the new basis columns; every
    // column touches a single vertex block because ebar is block diagonal
    struct Slot {
      int vertex, kind, pos;  // kind 0 = image, 1 = kernel
    };
    std::vector<Slot> slots;
    for (int c = 0; c < vin.cols; ++c) {
      int vtx = -1;
      for (int i = 0; i < s; ++i)
        if (!vin.at(i, c).is_zero()) {
          vtx = verts[size_t(i)];
          break;
        }
      if (vtx < 0) fail(Err::Internal, "empty column in idempotent basis");
      slots.push_back({vtx, c < rank ? 0 : 1, c});
    }
    std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
      if (a.vertex != b.vertex) return a.vertex < b.vertex;
      return a.kind < b.kind;
    });
    Mat vin2(k, s, s);
    for (int c = 0; c < s; ++c)
      for (int i = 0; i < s; ++i) vin2.at(i, c) = vin.at(i, slots[size_t(c)].pos);
    auto vinv2 = vin2.inverse();
    if (!vinv2) fail(Err::Internal, "idempotent basis change is singular");
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        if (verts[size_t(i)] != verts[size_t(j)] &&
            (!vin2.at(i, j).is_zero() || !vinv2->at(i, j).is_zero()))
          fail(Err::Internal, "idempotent basis change mixes vertices");
    auto embed = [&](const Mat& m) {
      DMat out = amat_zero(A, verts, verts);
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
          if (verts[size_t(i)] == verts[size_t(j)])
            out[size_t(i)][size_t(j)] = A.scale(m.at(i, j), A.identity(verts[size_t(i)]));
      return out;
    };
    DMat V = embed(*vinv2), Vi = embed(vin2);  // new coordinates = V * old
    auto dup = P.d.find(n + 1);
    if (dup != P.d.end())
      dup->second = amat_mul(A, V, dup->second, verts, summand_vertices(A, P, n + 1));
    auto ddn = P.d.find(n);
    if (ddn != P.d.end())
      ddn->second = amat_mul(A, ddn->second, Vi, summand_vertices(A, P, n - 1), verts);
    for (auto& [m2, blk] : e.f)
      if (m2 == n) blk = amat_mul(A, amat_mul(A, V, blk, verts, verts), Vi, verts, verts);
    std::vector<int> ones;
    for (int c = 0; c < s; ++c)
      if (slots[size_t(c)].kind == 0) ones.push_back(c);
    keep1[n] = ones;
  }
  // straighten the radical tail: conjugating by u = E ehat + (1-E)(1-ehat)
  // turns ehat into the exact 0/1 diagonal E
  for (int n = P.nmin; n <= P.nmax; ++n) {
    auto verts = summand_vertices(A, P, n);
    if (verts.empty()) continue;
    DMat en = cm_block(A, P, P, e, n);
    DMat E = amat_zero(A, verts, verts);
    for (int c : keep1[n]) E[size_t(c)][size_t(c)] = A.identity(verts[size_t(c)]);
    DMat id = amat_identity(A, verts);
    DMat one_minus_E = amat_add(A, id, E, -k.one());
    DMat one_minus_e = amat_add(A, id, en, -k.one());
    DMat u = amat_add(A, amat_mul(A, E, en, verts, verts),
                      amat_mul(A, one_minus_E, one_minus_e, verts, verts), k.one());
    DMat uinv = amat_inverse_unipotent(A, u, verts);
    auto dup = P.d.find(n + 1);
    if (dup != P.d.end())
      dup->second = amat_mul(A, u, dup->second, verts, summand_vertices(A, P, n + 1));
    auto ddn = P.d.find(n);
    if (ddn != P.d.end())
      ddn->second = amat_mul(A, ddn->second, uinv, summand_vertices(A, P, n - 1), verts);
    for (auto& [m2, blk] : e.f)
      if (m2 == n) blk = amat_mul(A, amat_mul(A, u, blk, verts, verts), uinv, verts, verts);
  }
  // e now equals E; the differential must respect the partition exactly
  for (int n = P.nmin + 1; n <= P.nmax; ++n) {
    auto it = P.d.find(n);
    if (it == P.d.end()) continue;
    auto rows = summand_vertices(A, P, n - 1);
    auto cols = summand_vertices(A, P, n);
    std::vector<bool> r1(rows.size(), false), c1(cols.size(), false);
    for (int c : keep1[n - 1]) r1[size_t(c)] = true;
    for (int c : keep1[n]) c1[size_t(c)] = true;
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < cols.size(); ++j)
        if (r1[i] != c1[j] && !it->second[i][j].is_zero())
          fail(Err::Internal, "idempotent split leaves cross terms");
  }
  auto extract = [&](bool ones) {
    ProjComplex Q;
    Q.nmin = P.nmin;
    Q.nmax = P.nmax;
    std::map<int, std::vector<int>> sel;
    for (int n = P.nmin; n <= P.nmax; ++n) {
      auto verts = summand_vertices(A, P, n);
      std::vector<bool> in1(verts.size(), false);
      for (int c : keep1[n]) in1[size_t(c)] = true;
      std::vector<int> idx;
      for (size_t c = 0; c < verts.size(); ++c)
        if (in1[c] == ones) idx.push_back(int(c));
      sel[n] = idx;
      std::vector<int> m(size_t(A.num_vertices()), 0);
      for (int c : idx) m[size_t(verts[size_t(c)])] += 1;
      Q.mult[n] = m;
    }
    for (int n = P.nmin + 1; n <= P.nmax; ++n) {
      auto it = P.d.find(n);
      if (it == P.d.end()) continue;
      const auto& ridx = sel[n - 1];
      const auto& cidx = sel[n];
      if (ridx.empty() || cidx.empty()) continue;
      DMat m(ridx.size(), std::vector<AlgebraElement>(cidx.size()));
      for (size_t i = 0; i < ridx.size(); ++i)
        for (size_t j = 0; j < cidx.size(); ++j)
          m[i][j] = it->second[size_t(ridx[i])][size_t(cidx[j])];
      Q.d[n] = m;
    }
    return trim_window(A, Q);
  };
  return {extract(true), extract(false)};
}

}  // namespace

std::vector<ProjComplex> decompose(const AlgebraBasis& A, const ProjComplex& Pin) {
  ProjComplex P = trim_window(A, Pin);
  std::vector<ProjComplex> out;
  if (P.is_zero()) return out;
  auto e = find_idempotent(A, P);
  if (!e) {
    out.push_back(P);
    return out;
  }
  auto [P1, P2] = split_by_idempotent(A, P, *e);
  if (P1.is_zero() || P2.is_zero()) {
    out.push_back(P);  // defensive: a trivial split would loop forever
    return out;
  }
  auto r1 = decompose(A, P1);
  auto r2 = decompose(A, P2);
  out.insert(out.end(), r1.begin(), r1.end());
  out.insert(out.end(), r2.begin(), r2.end());
  return out;
}

// ---------- families ----------

ProjComplex specialize_family(const AlgebraBasis& A, const FamilyComplex& F, int m,
                              const Scalar& lambda) {
  if (m < 1) fail(Err::PreconditionViolated, "Jordan block size must be at least 1");
  if (!F.denom.is_zero() && F.denom.eval(lambda).is_zero())
    fail(Err::OutsideLocus, "family denominator vanishes at " + lambda.str());
  const Field& k = A.field();
  Mat J(k, m, m);  // action of t on k[t]/(t-lambda)^m
  for (int i = 0; i < m; ++i) {
    J.at(i, i) = lambda;
    if (i + 1 < m) J.at(i + 1, i) = k.one();
  }
  auto fam_mult = [&](int n) {
    auto it = F.mult.find(n);
    if (it != F.mult.end()) return it->second;
    return std::vector<int>(size_t(A.num_vertices()), 0);
  };
  ProjComplex P;
  P.nmin = F.nmin;
  P.nmax = F.nmax;
  for (auto& [n, mm] : F.mult) {
    std::vector<int> v = mm;
    for (auto& x : v) x *= m;
    P.mult[n] = v;
  }
  for (auto& [n, dm] : F.d) {
    auto rowv = verts_of_mult(A, fam_mult(n - 1));
    auto colv = verts_of_mult(A, fam_mult(n));
    size_t rows = dm.size(), cols = rows ? dm[0].size() : 0;
    if (rows != rowv.size() || (rows && cols != colv.size()))
      fail(Err::Validation, "family differential shape mismatch at degree " + std::to_string(n));
    int maxdeg = 0;
    for (auto& row : dm)
      for (auto& entry : row) maxdeg = std::max(maxdeg, int(entry.size()) - 1);
    std::vector<Mat> Jp;
    Jp.push_back(Mat::identity(k, m));
    for (int i = 1; i <= maxdeg; ++i) Jp.push_back(Jp.back() * J);
    DMat out(rows * size_t(m));
    for (auto& row : out) row.resize(cols * size_t(m));
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) {
        const auto& entry = dm[r][c];  // coefficients of powers of the parameter
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) {
            AlgebraElement acc = A.zero(colv[c], rowv[r]);
            for (size_t kd = 0; kd < entry.size(); ++kd) {
              Scalar sc = Jp[kd].at(i, j);
              if (!sc.is_zero()) acc = A.add(acc, A.scale(sc, entry[kd]));
            }
            out[r * size_t(m) + size_t(i)][c * size_t(m) + size_t(j)] = acc;
          }
      }
    if (!out.empty() && !out[0].empty()) P.d[n] = out;
  }
  return P;
}

ProjComplex specialize_two_param(const AlgebraBasis& A, const TwoParamFamily& F, const Mat& X,
                                 const Mat& Y) {
  if (X.rows != X.cols || Y.rows != Y.cols || X.rows != Y.rows)
    fail(Err::PreconditionViolated, "parameter matrices must be square and of equal size");
  int m = X.rows;
  if (m < 1) fail(Err::PreconditionViolated, "parameter module must be nonzero");
  auto fam_mult = [&](int n) {
    auto it = F.mult.find(n);
    if (it != F.mult.end()) return it->second;
    return std::vector<int>(size_t(A.num_vertices()), 0);
  };
  ProjComplex P;
  P.nmin = F.nmin;
  P.nmax = F.nmax;
  for (auto& [n, mm] : F.mult) {
    std::vector<int> v = mm;
    for (auto& x : v) x *= m;
    P.mult[n] = v;
  }
  for (auto& [n, dm] : F.d) {
    auto rowv = verts_of_mult(A, fam_mult(n - 1));
    auto colv = verts_of_mult(A, fam_mult(n));
    size_t rows = dm.size(), cols = rows ? dm[0].size() : 0;
    if (rows != rowv.size() || (rows && cols != colv.size()))
      fail(Err::Validation, "family differential shape mismatch at degree " + std::to_string(n));
    DMat out(rows * size_t(m));
    for (auto& row : out) row.resize(cols * size_t(m));
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) {
        const TwoParamEntry& e = dm[r][c];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) {
            AlgebraElement acc = A.zero(colv[c], rowv[r]);
            if (i == j && !e.c0.is_zero()) acc = A.add(acc, e.c0);
            if (!e.cx.is_zero() && !X.at(i, j).is_zero())
              acc = A.add(acc, A.scale(X.at(i, j), e.cx));
            if (!e.cy.is_zero() && !Y.at(i, j).is_zero())
              acc = A.add(acc, A.scale(Y.at(i, j), e.cy));
            out[r * size_t(m) + size_t(i)][c * size_t(m) + size_t(j)] = acc;
          }
      }
    if (!out.empty() && !out[0].empty()) P.d[n] = out;
  }
  return P;
}

// ---------- extend_top ----------

ProjComplex extend_top(const AlgebraBasis& A, const ProjComplex& Pin, int N) {
  for (auto& [n, m] : Pin.mult)
    if (n > N)
      for (int v : m)
        if (v) fail(Err::PreconditionViolated, "complex does not vanish above the cut degree");
  ProjComplex P = Pin;
  if (P.nmin > P.nmax) {
    P.nmin = N + 1;
    P.nmax = N + 1;
    P.mult[N + 1] = std::vector<int>(size_t(A.num_vertices()), 0);
    return P;
  }
  const Field& k = A.field();
  auto cols = summand_vertices(A, P, N);
  auto rows = summand_vertices(A, P, N - 1);
  DMat dN = d_block(A, P, N);
  // K(z) = kernel of P_N(z) -> P_{N-1}(z); elements are tuples over the summands
  std::map<int, std::vector<std::vector<AlgebraElement>>> kerbasis;
  for (int z = 0; z < A.num_vertices(); ++z) {
    std::vector<std::pair<int, int>> dom;  // (summand, basis position)
    for (size_t c = 0; c < cols.size(); ++c)
      for (size_t t = 0; t < A.pair_basis(z, cols[c]).size(); ++t)
        dom.push_back({int(c), int(t)});
    if (dom.empty()) continue;
    int cod_dim = 0;
    std::vector<int> cod_base(rows.size(), 0);
    for (size_t r = 0; r < rows.size(); ++r) {
      cod_base[r] = cod_dim;
      cod_dim += A.dim(z, rows[r]);
    }
    Mat m(k, cod_dim, int(dom.size()));
    for (size_t u = 0; u < dom.size(); ++u) {
      auto [c, t] = dom[u];
      AlgebraElement b = A.from_basis(A.pair_basis(z, cols[size_t(c)])[size_t(t)]);
      for (size_t r = 0; r < rows.size(); ++r) {
        AlgebraElement img = A.multiply(dN[r][size_t(c)], b);
        for (size_t q = 0; q < img.c.size(); ++q) m.at(cod_base[r] + int(q), int(u)) = img.c[q];
      }
    }
    Mat ker = m.kernel();
    for (int kc = 0; kc < ker.cols; ++kc) {
      std::vector<AlgebraElement> elt;
      for (size_t c = 0; c < cols.size(); ++c) elt.push_back(A.zero(z, cols[c]));
      for (size_t u = 0; u < dom.size(); ++u) {
        auto [c, t] = dom[u];
        elt[size_t(c)].c[size_t(t)] += ker.at(int(u), kc);
      }
      kerbasis[z].push_back(std::move(elt));
    }
  }
  // top of K: kernel elements modulo the span of kappa . a over arrows a out of z
  std::map<int, std::vector<std::vector<AlgebraElement>>> toplift;
  for (int z = 0; z < A.num_vertices(); ++z) {
    auto itz = kerbasis.find(z);
    if (itz == kerbasis.end() || itz->second.empty()) continue;
    std::vector<std::pair<int, int>> dom;
    for (size_t c = 0; c < cols.size(); ++c)
      for (size_t t = 0; t < A.pair_basis(z, cols[c]).size(); ++t)
        dom.push_back({int(c), int(t)});
    auto flat = [&](const std::vector<AlgebraElement>& elt) {
      std::vector<Scalar> v;
      for (auto& [c, t] : dom) v.push_back(elt[size_t(c)].c[size_t(t)]);
      return v;
    };
    std::vector<std::vector<Scalar>> radrows;
    for (int a = 0; a < int(A.pres().arrows.size()); ++a) {
      const Arrow& ar = A.pres().arrows[size_t(a)];
      if (ar.src != z) continue;
      auto itw = kerbasis.find(ar.dst);
      if (itw == kerbasis.end()) continue;
      for (const auto& kap : itw->second) {
        std::vector<AlgebraElement> moved;
        for (size_t c = 0; c < cols.size(); ++c)
          moved.push_back(A.multiply(kap[c], A.from_arrow(a)));
        radrows.push_back(flat(moved));
      }
    }
    int kd = int(itz->second.size());
    Mat kmat(k, int(dom.size()), kd);
    for (int c = 0; c < kd; ++c) {
      auto v = flat(itz->second[size_t(c)]);
      for (size_t r = 0; r < v.size(); ++r) kmat.at(int(r), c) = v[r];
    }
    Mat radc(k, kd, int(radrows.size()));  // radical vectors in K(z) coordinates
    for (size_t j = 0; j < radrows.size(); ++j) {
      auto sol = kmat.solve(radrows[j]);
      if (!sol) fail(Err::Internal, "radical image escapes the kernel");
      for (int r = 0; r < kd; ++r) radc.at(r, int(j)) = (*sol)[size_t(r)];
    }
    Mat rt = radc.transpose();
    auto piv = rref(rt);  // pivot coordinates of the radical subspace
    std::vector<bool> used(size_t(kd), false);
    for (int c : piv) used[size_t(c)] = true;
    for (int c = 0; c < kd; ++c)
      if (!used[size_t(c)]) toplift[z].push_back(itz->second[size_t(c)]);
  }
  ProjComplex Q = P;
  if (N + 1 > Q.nmax) Q.nmax = N + 1;
  std::vector<int> newmult(size_t(A.num_vertices()), 0);
  for (auto& [z, lifts] : toplift) newmult[size_t(z)] = int(lifts.size());
  Q.mult[N + 1] = newmult;
  int total_new = 0;
  for (int v : newmult) total_new += v;
  if (total_new > 0 && !cols.empty()) {
    DMat dNew(cols.size());
    for (size_t c = 0; c < cols.size(); ++c) {
      dNew[c].reserve(size_t(total_new));
      for (int z = 0; z < A.num_vertices(); ++z) {
        auto itz = toplift.find(z);
        if (itz == toplift.end()) continue;
        for (auto& kap : itz->second) dNew[c].push_back(kap[c]);
      }
    }
    Q.d[N + 1] = dNew;
  }
  return Q;
}

// ---------- text format ----------

ProjComplex parse_complex(const AlgebraBasis& A, const std::string& text) {
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  ProjComplex P;
  bool have_header = false;
  std::map<int, std::vector<std::tuple<int, int, std::string>>> dlines;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = raw;
    auto hashpos = line.find('#');
    if (hashpos != std::string::npos) line = line.substr(0, hashpos);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "complex") {
      std::string over, ref, win;
      int a = 0, b = 0;
      if (!(ls >> over >> ref >> win >> a >> b) || over != "over" || win != "window")
        fail(Err::Parse, "line " + std::to_string(lineno) +
                             ": expected 'complex over <algebra> window <nmin> <nmax>'");
      if (a > b) fail(Err::Parse, "line " + std::to_string(lineno) + ": empty window");
      P.nmin = a;
      P.nmax = b;
      have_header = true;
    } else if (kw == "P") {
      if (!have_header) fail(Err::Parse, "line " + std::to_string(lineno) + ": P before header");
      std::string nstr;
      ls >> nstr;
      if (!nstr.empty() && nstr.back() == ':') nstr.pop_back();
      int n = 0;
      try {
        n = std::stoi(nstr);
      } catch (...) {
        fail(Err::Parse, "line " + std::to_string(lineno) + ": bad degree");
      }
      if (n < P.nmin || n > P.nmax)
        fail(Err::Parse, "line " + std::to_string(lineno) + ": degree outside window");
      std::vector<int> m(size_t(A.num_vertices()), 0);
      std::string item;
      while (ls >> item) {
        auto caret = item.find('^');
        std::string vname = caret == std::string::npos ? item : item.substr(0, caret);
        int cnt = 1;
        if (caret != std::string::npos) {
          try {
            cnt = std::stoi(item.substr(caret + 1));
          } catch (...) {
            fail(Err::Parse, "line " + std::to_string(lineno) + ": bad multiplicity");
          }
        }
        if (cnt < 0)
          fail(Err::Parse, "line " + std::to_string(lineno) + ": negative multiplicity");
        m[size_t(A.vertex_id(vname))] += cnt;
      }
      P.mult[n] = m;
    } else if (kw == "d") {
      if (!have_header) fail(Err::Parse, "line " + std::to_string(lineno) + ": d before header");
      std::string nstr;
      ls >> nstr;
      if (!nstr.empty() && nstr.back() == ':') nstr.pop_back();
      int n = 0, r = 0, c = 0;
      try {
        n = std::stoi(nstr);
      } catch (...) {
        fail(Err::Parse, "line " + std::to_string(lineno) + ": bad degree");
      }
      if (!(ls >> r >> c))
        fail(Err::Parse, "line " + std::to_string(lineno) + ": expected row and column indices");
      std::string expr;
      std::getline(ls, expr);
      dlines[n].push_back({r, c, expr});
    } else {
      fail(Err::Parse, "line " + std::to_string(lineno) + ": unknown keyword '" + kw + "'");
    }
  }
  if (!have_header) fail(Err::Parse, "missing complex header");
  for (int n = P.nmin; n <= P.nmax; ++n)
    if (!P.mult.count(n)) P.mult[n] = std::vector<int>(size_t(A.num_vertices()), 0);
  for (auto& [n, entries] : dlines) {
    if (n <= P.nmin || n > P.nmax)
      fail(Err::Parse, "d at degree " + std::to_string(n) + " lies outside the window");
    auto rows = summand_vertices(A, P, n - 1);
    auto cols = summand_vertices(A, P, n);
    DMat m = amat_zero(A, rows, cols);
    for (auto& [r, c, expr] : entries) {
      if (r < 0 || r >= int(rows.size()) || c < 0 || c >= int(cols.size()))
        fail(Err::Parse, "d entry index out of range at degree " + std::to_string(n));
      m[size_t(r)][size_t(c)] = A.parse_element(expr, cols[size_t(c)], rows[size_t(r)]);
    }
    if (!rows.empty() && !cols.empty()) P.d[n] = m;
  }
  return P;
}

std::string serialize_complex(const AlgebraBasis& A, const ProjComplex& P,
                              const std::string& algebra_ref) {
  std::ostringstream os;
  if (P.nmin > P.nmax) {
    os << "complex over " << algebra_ref << " window 0 0\nP 0:\n";
    return os.str();
  }
  os << "complex over " << algebra_ref << " window " << P.nmin << " " << P.nmax << "\n";
  for (int n = P.nmax; n >= P.nmin; --n) {
    auto m = mult_at(A, P, n);
    os << "P " << n << ":";
    for (int x = 0; x < A.num_vertices(); ++x)
      if (m[size_t(x)] > 0) os << " " << A.vertex_name(x) << "^" << m[size_t(x)];
    os << "\n";
  }
  for (int n = P.nmax; n > P.nmin; --n) {
    auto it = P.d.find(n);
    if (it == P.d.end()) continue;
    for (size_t i = 0; i < it->second.size(); ++i)
      for (size_t j = 0; j < it->second[i].size(); ++j)
        if (!it->second[i][j].is_zero())
          os << "d " << n << ": " << i << " " << j << " " << A.element_str(it->second[i][j])
             << "\n";
  }
  return os.str();
}

std::string extract_algebra_ref(const std::string& complex_text) {
  std::istringstream is(complex_text);
  std::string raw;
  while (std::getline(is, raw)) {
    std::istringstream ls(raw);
    std::string kw, over, ref;
    if (ls >> kw >> over >> ref)
      if (kw == "complex" && over == "over") return ref;
  }
  fail(Err::Parse, "missing complex header");
}

}  // namespace derbox
