#include "derbox/derived_box.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace derbox {

namespace {

std::string sanitize(const std::string& path_name) {
  std::string s = path_name;
  for (auto& ch : s)
    if (ch == '*') ch = '.';
  return s;
}

std::string level_vertex_name(const AlgebraBasis& A, int x, int n) {
  return A.vertex_name(x) + "@" + std::to_string(n);
}

std::vector<int> radical_indices(const AlgebraBasis& A) {
  std::vector<int> out;
  for (int g = 0; g < A.dim_total(); ++g)
    if (A.path(g).degree > 0) out.push_back(g);
  return out;
}

// positions of the arrows laid down by build_box, computable without the box
struct ArrowIndex {
  std::vector<int> rad;        // global radical path ids, build order
  std::map<int, int> rad_pos;  // inverse
  LevelWindow w;
  int levels() const { return w.n_max - w.n_min; }  // solid levels count
  int solid(int g, int n) const {
    return (n - (w.n_min + 1)) * int(rad.size()) + rad_pos.at(g);
  }
  int dashed(int g, int n) const {
    return levels() * int(rad.size()) + (n - w.n_min) * int(rad.size()) + rad_pos.at(g);
  }
};

ArrowIndex arrow_index(const AlgebraBasis& A, LevelWindow w) {
  ArrowIndex ix;
  ix.rad = radical_indices(A);
  for (size_t i = 0; i < ix.rad.size(); ++i) ix.rad_pos[ix.rad[i]] = int(i);
  ix.w = w;
  return ix;
}

std::vector<int> vertex_offsets(const std::vector<int>& mult) {
  std::vector<int> off(mult.size() + 1, 0);
  for (size_t x = 0; x < mult.size(); ++x) off[x + 1] = off[x] + mult[x];
  return off;
}

void require_window(LevelWindow w, const ProjComplex& P) {
  if (P.is_zero()) return;
  if (P.nmin < w.n_min || P.nmax > w.n_max)
    fail(Err::PreconditionViolated, "complex leaves the box window");
}

}  // namespace

int box_vertex(const AlgebraBasis& A, LevelWindow w, int x, int n) {
  if (n < w.n_min || n > w.n_max || x < 0 || x >= A.num_vertices())
    fail(Err::PreconditionViolated, "box vertex outside the window");
  return (n - w.n_min) * A.num_vertices() + x;
}

std::string solid_arrow_name(const AlgebraBasis& A, int g, int n) {
  return sanitize(A.path(g).name) + "(" + std::to_string(n) + ")";
}

std::string dashed_arrow_name(const AlgebraBasis& A, int g, int n) {
  return sanitize(A.path(g).name) + "[" + std::to_string(n) + "]";
}

BoxPresentation build_box(const AlgebraBasis& A, LevelWindow w) {
  if (w.n_min > w.n_max) fail(Err::EmptyWindow, "empty level window");
  BoxPresentation B;
  B.field = A.field();
  for (int n = w.n_min; n <= w.n_max; ++n)
    for (int x = 0; x < A.num_vertices(); ++x) B.add_vertex(level_vertex_name(A, x, n), n);

  auto ix = arrow_index(A, w);
  for (int n = w.n_min + 1; n <= w.n_max; ++n)
    for (int g : ix.rad) {
      const auto& p = A.path(g);
      int id = B.add_arrow(solid_arrow_name(A, g, n), box_vertex(A, w, p.src, n),
                           box_vertex(A, w, p.dst, n - 1), false);
      if (id != ix.solid(g, n)) fail(Err::Internal, "solid arrow index drift");
    }
  for (int n = w.n_min; n <= w.n_max; ++n)
    for (int g : ix.rad) {
      const auto& p = A.path(g);
      int id = B.add_arrow(dashed_arrow_name(A, g, n), box_vertex(A, w, p.src, n),
                           box_vertex(A, w, p.dst, n), true);
      if (id != ix.dashed(g, n)) fail(Err::Internal, "dashed arrow index drift");
    }

  for (int n = w.n_min + 1; n <= w.n_max; ++n)
    for (int g : ix.rad) {
      WordSum ds;
      for (const auto& t : A.nu(g)) {
        ds = ws_add(ds,
                    ws_word(BoxWord{{ix.dashed(t.beta, n - 1), ix.solid(t.gamma, n)}}, t.coeff));
        ds = ws_add(ds, ws_word(BoxWord{{ix.solid(t.beta, n), ix.dashed(t.gamma, n)}}, -t.coeff));
      }
      if (!ds.is_zero()) B.diff[ix.solid(g, n)] = std::move(ds);
    }
  for (int n = w.n_min; n <= w.n_max; ++n)
    for (int g : ix.rad) {
      WordSum ds;
      for (const auto& t : A.nu(g))
        ds = ws_add(ds, ws_word(BoxWord{{ix.dashed(t.beta, n), ix.dashed(t.gamma, n)}}, t.coeff));
      if (!ds.is_zero()) B.diff[ix.dashed(g, n)] = std::move(ds);
    }
  for (int n = w.n_min + 2; n <= w.n_max; ++n)
    for (int g : ix.rad) {
      WordSum r;
      for (const auto& t : A.nu(g))
        r = ws_add(r, ws_word(BoxWord{{ix.solid(t.beta, n - 1), ix.solid(t.gamma, n)}}, t.coeff));
      if (!r.is_zero()) B.relations.push_back(std::move(r));
    }
  return B;
}

BoxRep complex_to_rep(const AlgebraBasis& A, LevelWindow w, const ProjComplex& P) {
  if (!is_minimal(A, P)) fail(Err::NotMinimal, "complex is not minimal");
  require_window(w, P);
  int nv = A.num_vertices();
  BoxRep M;
  M.dim.assign(size_t((w.n_max - w.n_min + 1) * nv), 0);
  if (P.is_zero()) return M;
  for (int n = P.nmin; n <= P.nmax; ++n) {
    auto m = mult_at(A, P, n);
    for (int x = 0; x < nv; ++x) M.dim[size_t(box_vertex(A, w, x, n))] = m[size_t(x)];
  }
  auto ix = arrow_index(A, w);
  for (int n = P.nmin + 1; n <= P.nmax; ++n) {
    auto it = P.d.find(n);
    if (it == P.d.end() || it->second.empty()) continue;
    const DMat& dm = it->second;
    auto rows = mult_at(A, P, n - 1), cols = mult_at(A, P, n);
    auto roff = vertex_offsets(rows), coff = vertex_offsets(cols);
    for (int g : ix.rad) {
      const auto& p = A.path(g);
      int x = p.src, y = p.dst;
      if (rows[size_t(y)] == 0 || cols[size_t(x)] == 0) continue;
      Mat block(A.field(), rows[size_t(y)], cols[size_t(x)]);
      for (int r = 0; r < block.rows; ++r)
        for (int c = 0; c < block.cols; ++c)
          block.at(r, c) =
              A.coeff_of(dm[size_t(roff[size_t(y)] + r)][size_t(coff[size_t(x)] + c)], g);
      if (!block.is_zero()) M.m[ix.solid(g, n)] = std::move(block);
    }
  }
  return M;
}

ProjComplex rep_to_complex(const AlgebraBasis& A, LevelWindow w, const BoxRep& M) {
  int nv = A.num_vertices();
  if (int(M.dim.size()) != (w.n_max - w.n_min + 1) * nv)
    fail(Err::PreconditionViolated, "representation does not match the window");
  BoxPresentation B = build_box(A, w);
  if (auto bad = check_rep(B, M)) fail(Err::PreconditionViolated, *bad);
  if (!rep_satisfies_relations(B, M))
    fail(Err::RelationsViolated, "representation violates the box relations");

  // tight support window
  int lo = w.n_max + 1, hi = w.n_min - 1;
  for (int n = w.n_min; n <= w.n_max; ++n)
    for (int x = 0; x < nv; ++x)
      if (M.dim[size_t(box_vertex(A, w, x, n))] > 0) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
  ProjComplex P;
  if (lo > hi) return P;  // zero representation
  P.nmin = lo;
  P.nmax = hi;
  for (int n = lo; n <= hi; ++n) {
    std::vector<int> m(size_t(nv), 0);
    for (int x = 0; x < nv; ++x) m[size_t(x)] = M.dim[size_t(box_vertex(A, w, x, n))];
    P.mult[n] = std::move(m);
  }
  auto ix = arrow_index(A, w);
  for (int n = lo + 1; n <= hi; ++n) {
    auto rows = mult_at(A, P, n - 1), cols = mult_at(A, P, n);
    auto roff = vertex_offsets(rows), coff = vertex_offsets(cols);
    auto rvs = summand_vertices(A, P, n - 1);
    auto cvs = summand_vertices(A, P, n);
    DMat dm(rvs.size(), std::vector<AlgebraElement>(cvs.size()));
    for (size_t i = 0; i < rvs.size(); ++i)
      for (size_t j = 0; j < cvs.size(); ++j) dm[i][j] = A.zero(cvs[j], rvs[i]);
    bool nonzero = false;
    for (int g : ix.rad) {
      const auto& p = A.path(g);
      int x = p.src, y = p.dst;
      auto mit = M.m.find(ix.solid(g, n));
      if (mit == M.m.end() || mit->second.is_zero()) continue;
      const Mat& block = mit->second;
      for (int r = 0; r < block.rows; ++r)
        for (int c = 0; c < block.cols; ++c) {
          if (block.at(r, c).is_zero()) continue;
          auto& e = dm[size_t(roff[size_t(y)] + r)][size_t(coff[size_t(x)] + c)];
          e = A.add(e, A.scale(block.at(r, c), A.from_basis(g)));
          nonzero = true;
        }
    }
    if (nonzero) P.d[n] = std::move(dm);
  }
  if (auto bad = validate_complex(A, P)) fail(Err::Internal, "assembled complex invalid: " + *bad);
  return P;
}

BoxRep trivial_rep(const AlgebraBasis& A, LevelWindow w, TrivialRepTag tag) {
  BoxRep M;
  M.dim.assign(size_t((w.n_max - w.n_min + 1) * A.num_vertices()), 0);
  M.dim[size_t(box_vertex(A, w, tag.vertex, tag.level))] = 1;
  return M;
}

ProjComplex trivial_complex(const AlgebraBasis& A, TrivialRepTag tag) {
  return stalk_complex(A, tag.vertex, tag.level);
}

namespace {

// shapes of a chain map component at level n
void require_chainmap_shape(const AlgebraBasis& A, LevelWindow w, const ProjComplex& X,
                            const ProjComplex& Y, const ChainMap& f) {
  if (!is_minimal(A, X) || !is_minimal(A, Y)) fail(Err::NotMinimal, "complexes must be minimal");
  require_window(w, X);
  require_window(w, Y);
  for (const auto& [n, blk] : f.f) {
    if (blk.empty()) continue;
    auto rows = summand_vertices(A, Y, n);
    auto cols = summand_vertices(A, X, n);
    if (blk.size() != rows.size())
      fail(Err::PreconditionViolated, "chain map block height mismatch");
    for (const auto& row : blk)
      if (row.size() != cols.size())
        fail(Err::PreconditionViolated, "chain map block width mismatch");
  }
}

AlgebraElement cm_entry(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                        const ChainMap& f, int n, int i, int j) {
  auto it = f.f.find(n);
  if (it == f.f.end() || it->second.empty())
    return A.zero(summand_vertices(A, X, n)[size_t(j)], summand_vertices(A, Y, n)[size_t(i)]);
  return it->second[size_t(i)][size_t(j)];
}

}  // namespace

BoxMorphism chainmap_to_boxmorphism(const AlgebraBasis& A, LevelWindow w, const ProjComplex& X,
                                    const ProjComplex& Y, const ChainMap& f) {
  require_chainmap_shape(A, w, X, Y, f);
  int nv = A.num_vertices();
  auto ix = arrow_index(A, w);
  BoxMorphism out;
  out.omega.assign(size_t((w.n_max - w.n_min + 1) * nv), Mat(A.field(), 0, 0));
  for (int n = w.n_min; n <= w.n_max; ++n) {
    auto rows = mult_at(A, Y, n), cols = mult_at(A, X, n);
    auto roff = vertex_offsets(rows), coff = vertex_offsets(cols);
    for (int v = 0; v < nv; ++v) {
      Mat o(A.field(), rows[size_t(v)], cols[size_t(v)]);
      for (int r = 0; r < o.rows; ++r)
        for (int c = 0; c < o.cols; ++c)
          o.at(r, c) = A.identity_coeff(
              cm_entry(A, X, Y, f, n, roff[size_t(v)] + r, coff[size_t(v)] + c));
      out.omega[size_t(box_vertex(A, w, v, n))] = std::move(o);
    }
    for (int g : ix.rad) {
      const auto& p = A.path(g);
      Mat ph(A.field(), rows[size_t(p.dst)], cols[size_t(p.src)]);
      for (int r = 0; r < ph.rows; ++r)
        for (int c = 0; c < ph.cols; ++c)
          ph.at(r, c) = A.coeff_of(
              cm_entry(A, X, Y, f, n, roff[size_t(p.dst)] + r, coff[size_t(p.src)] + c), g);
      if (!ph.is_zero()) out.phi[ix.dashed(g, n)] = std::move(ph);
    }
  }
  return out;
}

ChainMap boxmorphism_to_chainmap(const AlgebraBasis& A, LevelWindow w, const ProjComplex& X,
                                 const ProjComplex& Y, const BoxMorphism& f) {
  if (!is_minimal(A, X) || !is_minimal(A, Y)) fail(Err::NotMinimal, "complexes must be minimal");
  require_window(w, X);
  require_window(w, Y);
  int nv = A.num_vertices();
  if (int(f.omega.size()) != (w.n_max - w.n_min + 1) * nv)
    fail(Err::PreconditionViolated, "box morphism does not match the window");
  auto ix = arrow_index(A, w);
  ChainMap out;
  for (int n = w.n_min; n <= w.n_max; ++n) {
    auto rvs = summand_vertices(A, Y, n);
    auto cvs = summand_vertices(A, X, n);
    if (rvs.empty() || cvs.empty()) continue;
    auto rows = mult_at(A, Y, n), cols = mult_at(A, X, n);
    auto roff = vertex_offsets(rows), coff = vertex_offsets(cols);
    DMat blk(rvs.size(), std::vector<AlgebraElement>(cvs.size()));
    for (size_t i = 0; i < rvs.size(); ++i)
      for (size_t j = 0; j < cvs.size(); ++j) blk[i][j] = A.zero(cvs[j], rvs[i]);
    bool nonzero = false;
    for (int v = 0; v < nv; ++v) {
      const Mat& o = f.omega[size_t(box_vertex(A, w, v, n))];
      if (o.rows != rows[size_t(v)] || o.cols != cols[size_t(v)])
        fail(Err::PreconditionViolated, "box morphism block shape mismatch");
      for (int r = 0; r < o.rows; ++r)
        for (int c = 0; c < o.cols; ++c) {
          if (o.at(r, c).is_zero()) continue;
          auto& e = blk[size_t(roff[size_t(v)] + r)][size_t(coff[size_t(v)] + c)];
          e = A.add(e, A.scale(o.at(r, c), A.identity(v)));
          nonzero = true;
        }
    }
    for (int g : ix.rad) {
      auto it = f.phi.find(ix.dashed(g, n));
      if (it == f.phi.end() || it->second.is_zero()) continue;
      const auto& p = A.path(g);
      const Mat& ph = it->second;
      if (ph.rows != rows[size_t(p.dst)] || ph.cols != cols[size_t(p.src)])
        fail(Err::PreconditionViolated, "box morphism block shape mismatch");
      for (int r = 0; r < ph.rows; ++r)
        for (int c = 0; c < ph.cols; ++c) {
          if (ph.at(r, c).is_zero()) continue;
          auto& e = blk[size_t(roff[size_t(p.dst)] + r)][size_t(coff[size_t(p.src)] + c)];
          e = A.add(e, A.scale(ph.at(r, c), A.from_basis(g)));
          nonzero = true;
        }
    }
    if (nonzero) out.f[n] = std::move(blk);
  }
  return out;
}

bool is_zero_in_QN(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                   const ChainMap& f, int N) {
  return is_quasi_homotopic(A, X, Y, f, zero_chain_map(A, X, Y), N);
}

}  // namespace derbox
