#include "derbox/engine.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace derbox {

// ===========================================================================
// PolyMat

PolyMat::PolyMat(Field f, int rows, int cols)
    : field_(f), rows_(rows), cols_(cols), a_(size_t(rows) * size_t(cols), Poly(f)) {
  if (rows < 0 || cols < 0) fail(Err::Validation, "negative PolyMat shape");
}

PolyMat PolyMat::identity(Field f, int n) {
  PolyMat m(f, n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = Poly::constant(f, f.one());
  return m;
}

PolyMat PolyMat::lift(const Mat& m) {
  PolyMat out(m.field, m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(i, j) = Poly::constant(m.field, m.at(i, j));
  return out;
}

Poly& PolyMat::at(int i, int j) {
  if (i < 0 || i >= rows_ || j < 0 || j >= cols_) fail(Err::Internal, "PolyMat index");
  return a_[size_t(i) * size_t(cols_) + size_t(j)];
}

const Poly& PolyMat::at(int i, int j) const {
  if (i < 0 || i >= rows_ || j < 0 || j >= cols_) fail(Err::Internal, "PolyMat index");
  return a_[size_t(i) * size_t(cols_) + size_t(j)];
}

bool PolyMat::is_zero() const {
  for (const auto& p : a_)
    if (!p.is_zero()) return false;
  return true;
}

PolyMat PolyMat::operator+(const PolyMat& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_) fail(Err::Validation, "PolyMat shape mismatch in +");
  PolyMat out(field_, rows_, cols_);
  for (size_t i = 0; i < a_.size(); ++i) out.a_[i] = a_[i] + o.a_[i];
  return out;
}

PolyMat PolyMat::operator*(const PolyMat& o) const {
  if (cols_ != o.rows_) fail(Err::Validation, "PolyMat shape mismatch in *");
  PolyMat out(field_, rows_, o.cols_);
  for (int i = 0; i < rows_; ++i)
    for (int k = 0; k < cols_; ++k) {
      if (at(i, k).is_zero()) continue;
      for (int j = 0; j < o.cols_; ++j) out.at(i, j) = out.at(i, j) + at(i, k) * o.at(k, j);
    }
  return out;
}

PolyMat PolyMat::scale(const Scalar& c) const {
  PolyMat out = *this;
  for (auto& p : out.a_) p = p * c;
  return out;
}

PolyMat PolyMat::scale_poly(const Poly& p) const {
  PolyMat out = *this;
  for (auto& q : out.a_) q = q * p;
  return out;
}

Mat PolyMat::eval(const Scalar& lambda) const {
  Mat out(field_, rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) out.at(i, j) = at(i, j).eval(lambda);
  return out;
}

Mat PolyMat::eval_matrix(const Mat& J) const {
  if (J.rows != J.cols) fail(Err::Validation, "substituted matrix must be square");
  int m = J.rows;
  int dmax = max_degree();
  std::vector<Mat> pw;
  pw.push_back(Mat::identity(field_, m));
  for (int k = 1; k <= dmax; ++k) pw.push_back(pw.back() * J);
  Mat out(field_, rows_ * m, cols_ * m);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) {
      const Poly& p = at(i, j);
      for (int k = 0; k <= p.degree(); ++k) {
        Scalar c = p.coeff(k);
        if (c.is_zero()) continue;
        for (int r = 0; r < m; ++r)
          for (int s = 0; s < m; ++s)
            out.at(i * m + r, j * m + s) = out.at(i * m + r, j * m + s) + pw[size_t(k)].at(r, s) * c;
      }
    }
  return out;
}

int PolyMat::max_degree() const {
  int d = 0;
  for (const auto& p : a_) d = std::max(d, p.degree());
  return d;
}

std::string PolyMat::str() const {
  std::ostringstream os;
  for (int i = 0; i < rows_; ++i) {
    os << (i == 0 ? "[" : " ");
    os << "[";
    for (int j = 0; j < cols_; ++j) os << (j ? ", " : "") << at(i, j).str();
    os << "]";
    os << (i + 1 == rows_ ? "]" : "\n");
  }
  if (rows_ == 0) os << "[]";
  return os.str();
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.field, a.rows * b.rows, a.cols * b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) {
      if (a.at(i, j).is_zero()) continue;
      for (int r = 0; r < b.rows; ++r)
        for (int s = 0; s < b.cols; ++s)
          out.at(i * b.rows + r, j * b.cols + s) = a.at(i, j) * b.at(r, s);
    }
  return out;
}

// ===========================================================================
// AffineMat

AffineMat::AffineMat(Field f, int rows, int cols)
    : c0(f, rows, cols), cx(f, rows, cols), cy(f, rows, cols) {}

AffineMat AffineMat::lift(const Mat& m) {
  AffineMat out(m.field, m.rows, m.cols);
  out.c0 = m;
  return out;
}

AffineMat AffineMat::x_block(Field f) {
  AffineMat out(f, 1, 1);
  out.cx.at(0, 0) = f.one();
  return out;
}

AffineMat AffineMat::y_block(Field f) {
  AffineMat out(f, 1, 1);
  out.cy.at(0, 0) = f.one();
  return out;
}

bool AffineMat::is_zero() const { return c0.is_zero() && cx.is_zero() && cy.is_zero(); }

AffineMat AffineMat::operator+(const AffineMat& o) const {
  AffineMat out(field(), rows(), cols());
  out.c0 = c0 + o.c0;
  out.cx = cx + o.cx;
  out.cy = cy + o.cy;
  return out;
}

AffineMat AffineMat::operator*(const AffineMat& o) const {
  // (c0 + cx X + cy Y)(d0 + dx X + dy Y): quadratic terms must vanish.
  auto quad = [](const Mat& a, const Mat& b) { return !(a * b).is_zero(); };
  if (quad(cx, o.cx) || quad(cx, o.cy) || quad(cy, o.cx) || quad(cy, o.cy))
    fail(Err::Internal, "two-parameter family product has a quadratic term");
  AffineMat out(field(), rows(), o.cols());
  out.c0 = c0 * o.c0;
  out.cx = c0 * o.cx + cx * o.c0;
  out.cy = c0 * o.cy + cy * o.c0;
  return out;
}

AffineMat AffineMat::scale(const Scalar& c) const {
  AffineMat out = *this;
  out.c0 = out.c0 * c;
  out.cx = out.cx * c;
  out.cy = out.cy * c;
  return out;
}

Mat AffineMat::eval(const Mat& X, const Mat& Y) const {
  if (X.rows != X.cols || Y.rows != Y.cols || X.rows != Y.rows)
    fail(Err::Validation, "parameter matrices must be square of equal size");
  Mat id = Mat::identity(c0.field, X.rows);
  return kron(c0, id) + kron(cx, X) + kron(cy, Y);
}

// ===========================================================================
// Smith normal form over k[t]

namespace {

struct SmithWork {
  PolyMat a;
  PolyMat u, uinv;  // row transforms: a_cur = u_acc * a_orig * e_acc (u tracks inverse action)
  PolyMat e, einv;

  explicit SmithWork(const PolyMat& m)
      : a(m),
        u(PolyMat::identity(m.field(), m.rows())),
        uinv(PolyMat::identity(m.field(), m.rows())),
        e(PolyMat::identity(m.field(), m.cols())),
        einv(PolyMat::identity(m.field(), m.cols())) {}

  // row_i -> row_i + p * row_j on a; bookkeeping keeps  u * a_orig * e == a.
  void row_add(int i, int j, const Poly& p) {
    for (int c = 0; c < a.cols(); ++c) a.at(i, c) = a.at(i, c) + p * a.at(j, c);
    for (int c = 0; c < u.cols(); ++c) u.at(i, c) = u.at(i, c) + p * u.at(j, c);
    for (int r = 0; r < uinv.rows(); ++r) uinv.at(r, j) = uinv.at(r, j) - p * uinv.at(r, i);
  }
  void row_swap(int i, int j) {
    for (int c = 0; c < a.cols(); ++c) std::swap(a.at(i, c), a.at(j, c));
    for (int c = 0; c < u.cols(); ++c) std::swap(u.at(i, c), u.at(j, c));
    for (int r = 0; r < uinv.rows(); ++r) std::swap(uinv.at(r, i), uinv.at(r, j));
  }
  void row_scale(int i, const Scalar& c) {
    for (int k = 0; k < a.cols(); ++k) a.at(i, k) = a.at(i, k) * c;
    for (int k = 0; k < u.cols(); ++k) u.at(i, k) = u.at(i, k) * c;
    Scalar ci = c.inverse();
    for (int r = 0; r < uinv.rows(); ++r) uinv.at(r, i) = uinv.at(r, i) * ci;
  }
  void col_add(int j, int i, const Poly& p) {  // col_j += p * col_i
    for (int r = 0; r < a.rows(); ++r) a.at(r, j) = a.at(r, j) + p * a.at(r, i);
    for (int r = 0; r < e.rows(); ++r) e.at(r, j) = e.at(r, j) + p * e.at(r, i);
    for (int c = 0; c < einv.cols(); ++c) einv.at(i, c) = einv.at(i, c) - p * einv.at(j, c);
  }
  void col_swap(int i, int j) {
    for (int r = 0; r < a.rows(); ++r) std::swap(a.at(r, i), a.at(r, j));
    for (int r = 0; r < e.rows(); ++r) std::swap(e.at(r, i), e.at(r, j));
    for (int c = 0; c < einv.cols(); ++c) std::swap(einv.at(i, c), einv.at(j, c));
  }
};

}  // namespace

SmithResult smith_normal_form(const PolyMat& m) {
  SmithWork w(m);
  int nr = m.rows(), nc = m.cols();
  int n = std::min(nr, nc);
  for (int rounds = 0;; ++rounds) {
    if (rounds > 200) fail(Err::Internal, "Smith normal form did not stabilize");
    // eliminate to diagonal
    for (int k = 0; k < n; ++k) {
      for (int guard = 0;; ++guard) {
        if (guard > 10000) fail(Err::Internal, "Smith elimination did not terminate");
        // pick pivot: minimal degree, then smallest (row, col)
        int pr = -1, pc = -1, pd = -1;
        for (int i = k; i < nr; ++i)
          for (int j = k; j < nc; ++j) {
            const Poly& p = w.a.at(i, j);
            if (p.is_zero()) continue;
            if (pd < 0 || p.degree() < pd) {
              pd = p.degree();
              pr = i;
              pc = j;
            }
          }
        if (pd < 0) break;  // submatrix zero
        if (pr != k) w.row_swap(k, pr);
        if (pc != k) w.col_swap(k, pc);
        bool clean = true;
        for (int i = k + 1; i < nr; ++i) {
          if (w.a.at(i, k).is_zero()) continue;
          auto qr = w.a.at(i, k).divmod(w.a.at(k, k));
          w.row_add(i, k, -qr.first);
          if (!w.a.at(i, k).is_zero()) clean = false;
        }
        for (int j = k + 1; j < nc; ++j) {
          if (w.a.at(k, j).is_zero()) continue;
          auto qr = w.a.at(k, j).divmod(w.a.at(k, k));
          w.col_add(j, k, -qr.first);
          if (!w.a.at(k, j).is_zero()) clean = false;
        }
        if (clean) break;
      }
    }
    // enforce the divisibility chain d_k | d_{k+1}
    bool fixed = true;
    for (int k = 0; k + 1 < n; ++k) {
      const Poly& dk = w.a.at(k, k);
      const Poly& dn = w.a.at(k + 1, k + 1);
      if (dk.is_zero() && !dn.is_zero()) {
        w.col_swap(k, k + 1);
        w.row_swap(k, k + 1);
        fixed = false;
        continue;
      }
      if (dk.is_zero() || dn.is_zero()) continue;
      if (dn.divmod(dk).second.is_zero()) continue;
      w.col_add(k, k + 1, Poly::constant(m.field(), m.field().one()));
      fixed = false;
    }
    if (fixed) break;
  }
  // monic normalization
  for (int k = 0; k < n; ++k) {
    const Poly& d = w.a.at(k, k);
    if (d.is_zero()) continue;
    Scalar lead = d.leading();
    if (!(lead == m.field().one())) w.row_scale(k, lead.inverse());
  }
  SmithResult out{w.a, w.uinv, w.u, w.einv, w.e};
  return out;
}

// ===========================================================================
// Step kinds and generic word-block algebra

const char* step_kind_name(StepKind k) {
  switch (k) {
    case StepKind::Regularization: return "regularization";
    case StepKind::EdgeReduction: return "edge-reduction";
    case StepKind::LoopReduction: return "loop-reduction";
    case StepKind::RelationDiagonalization: return "relation-diagonalization";
    case StepKind::Amalgamation: return "amalgamation";
    case StepKind::Pruning: return "pruning";
  }
  return "unknown";
}

namespace {

using WSMat = std::vector<std::vector<WordSum>>;

// Word concatenation treating the empty word as an identity (no endpoint data
// needed; callers guarantee composability, check_reduced_box re-validates).
WordSum ws_concat_free(const WordSum& a, const WordSum& b) {
  WordSum out;
  for (const auto& [wa, ca] : a.t)
    for (const auto& [wb, cb] : b.t) {
      BoxWord w;
      w.arrows = wa.arrows;
      w.arrows.insert(w.arrows.end(), wb.arrows.begin(), wb.arrows.end());
      Scalar c = ca * cb;
      auto it = out.t.find(w);
      if (it == out.t.end()) {
        if (!c.is_zero()) out.t.emplace(std::move(w), c);
      } else {
        it->second = it->second + c;
        if (it->second.is_zero()) out.t.erase(it);
      }
    }
  return out;
}

WSMat ws_zeros(size_t rows, size_t cols) { return WSMat(rows, std::vector<WordSum>(cols)); }

WSMat ws_block_mul(const WSMat& a, const WSMat& b) {
  size_t n = a.empty() ? 0 : a[0].size();
  if (n != b.size()) fail(Err::Internal, "word block shape mismatch");
  size_t bc = b.empty() ? 0 : b[0].size();
  WSMat out = ws_zeros(a.size(), bc);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t k = 0; k < n; ++k) {
      if (a[i][k].is_zero()) continue;
      for (size_t j = 0; j < bc; ++j) {
        if (b[k][j].is_zero()) continue;
        out[i][j] = ws_add(out[i][j], ws_concat_free(a[i][k], b[k][j]));
      }
    }
  return out;
}

std::string fresh_name(const BoxPresentation& b, std::string name) {
  while (b.vertex_id.count(name) || b.arrow_id.count(name)) name += "'";
  return name;
}

std::string fresh_vertex_name(const BoxPresentation& b, std::string name) {
  while (b.vertex_id.count(name)) name += "'";
  return name;
}

// Drop every word containing the given arrow.
WordSum ws_drop_arrow(const WordSum& s, int arrow) {
  WordSum out;
  for (const auto& [w, c] : s.t)
    if (std::find(w.arrows.begin(), w.arrows.end(), arrow) == w.arrows.end()) out.t.emplace(w, c);
  return out;
}

bool ws_contains_arrow(const WordSum& s, int arrow) {
  for (const auto& [w, c] : s.t)
    if (std::find(w.arrows.begin(), w.arrows.end(), arrow) != w.arrows.end()) return true;
  return false;
}

void validate_built_box(const BoxPresentation& b, const char* where) {
  try {
    check_reduced_box(b);
  } catch (const Error& e) {
    fail(Err::Internal, std::string(where) + " produced an invalid box: " + e.what());
  }
}

}  // namespace

// ===========================================================================
// Dimension transfer and pull-back

std::vector<int> dims_before(const ReductionStep& st, const std::vector<int>& after_dims) {
  if (st.kind == StepKind::Amalgamation) {
    std::vector<int> cur = after_dims;
    for (auto it = st.parts.rbegin(); it != st.parts.rend(); ++it) cur = dims_before(*it, cur);
    return cur;
  }
  if (int(after_dims.size()) != st.after.num_vertices())
    fail(Err::PreconditionViolated, "dimension vector does not match the step's target box");
  std::vector<int> out(size_t(st.before.num_vertices()), 0);
  for (int v = 0; v < st.before.num_vertices(); ++v)
    for (const auto& p : st.image[size_t(v)])
      out[size_t(v)] += p.layers * after_dims[size_t(p.vertex)];
  return out;
}

namespace {

// Generic block evaluation of one old arrow's image under a step.  MatT must
// provide: zero via ctor-like make(r, c), identity(n), operator+, operator*,
// scale(Scalar).
template <class MatT, class Ops>
MatT eval_image(const ReductionStep& st, int old_arrow, const std::vector<int>& after_dims,
                const std::map<int, MatT>& mats, const Ops& ops) {
  const auto& oa = st.before.arrows[size_t(old_arrow)];
  // slot lists of src/dst old vertices
  auto slots = [&](int oldv) {
    std::vector<int> vx;  // after-vertex per slot
    for (const auto& p : st.image[size_t(oldv)])
      for (int l = 0; l < p.layers; ++l) vx.push_back(p.vertex);
    return vx;
  };
  std::vector<int> rslots = slots(oa.dst), cslots = slots(oa.src);
  auto dim_of = [&](int v) { return after_dims[size_t(v)]; };
  std::vector<int> roff(rslots.size() + 1, 0), coff(cslots.size() + 1, 0);
  for (size_t i = 0; i < rslots.size(); ++i) roff[i + 1] = roff[i] + dim_of(rslots[i]);
  for (size_t j = 0; j < cslots.size(); ++j) coff[j + 1] = coff[j] + dim_of(cslots[j]);

  MatT out = ops.make(roff.back(), coff.back());
  auto img_it = st.solid_image.find(old_arrow);
  if (img_it == st.solid_image.end()) return out;
  const WSMat& img = img_it->second;
  if (img.size() != rslots.size() || (!img.empty() && img[0].size() != cslots.size()))
    fail(Err::Internal, "solid image block shape mismatch");

  auto arrow_mat = [&](int id) -> MatT {
    const auto& ar = st.after.arrows[size_t(id)];
    auto it = mats.find(id);
    if (it != mats.end()) return it->second;
    return ops.make(dim_of(ar.dst), dim_of(ar.src));
  };

  for (size_t i = 0; i < rslots.size(); ++i)
    for (size_t j = 0; j < cslots.size(); ++j) {
      const WordSum& ws = img[i][j];
      if (ws.is_zero()) continue;
      MatT acc = ops.make(dim_of(rslots[i]), dim_of(cslots[j]));
      for (const auto& [w, c] : ws.t) {
        MatT val = ops.identity(dim_of(rslots[i]));
        if (!w.arrows.empty()) {
          val = arrow_mat(w.arrows[0]);
          for (size_t k = 1; k < w.arrows.size(); ++k) val = val * arrow_mat(w.arrows[k]);
        }
        acc = acc + ops.scale(val, c);
      }
      ops.insert(out, roff[i], coff[j], acc);
    }
  return out;
}

struct MatOps {
  Field f;
  Mat make(int r, int c) const { return Mat(f, r, c); }
  Mat identity(int n) const { return Mat::identity(f, n); }
  Mat scale(const Mat& m, const Scalar& c) const { return m * c; }
  void insert(Mat& dst, int r0, int c0, const Mat& b) const {
    for (int i = 0; i < b.rows; ++i)
      for (int j = 0; j < b.cols; ++j) dst.at(r0 + i, c0 + j) = b.at(i, j);
  }
};

struct PolyMatOps {
  Field f;
  PolyMat make(int r, int c) const { return PolyMat(f, r, c); }
  PolyMat identity(int n) const { return PolyMat::identity(f, n); }
  PolyMat scale(const PolyMat& m, const Scalar& c) const { return m.scale(c); }
  void insert(PolyMat& dst, int r0, int c0, const PolyMat& b) const {
    for (int i = 0; i < b.rows(); ++i)
      for (int j = 0; j < b.cols(); ++j) dst.at(r0 + i, c0 + j) = b.at(i, j);
  }
};

struct AffineMatOps {
  Field f;
  AffineMat make(int r, int c) const { return AffineMat(f, r, c); }
  AffineMat identity(int n) const { return AffineMat::lift(Mat::identity(f, n)); }
  AffineMat scale(const AffineMat& m, const Scalar& c) const { return m.scale(c); }
  void insert(AffineMat& dst, int r0, int c0, const AffineMat& b) const {
    for (int i = 0; i < b.rows(); ++i)
      for (int j = 0; j < b.cols(); ++j) {
        dst.c0.at(r0 + i, c0 + j) = b.c0.at(i, j);
        dst.cx.at(r0 + i, c0 + j) = b.cx.at(i, j);
        dst.cy.at(r0 + i, c0 + j) = b.cy.at(i, j);
      }
  }
};

}  // namespace

namespace {

// Pull the full solid-matrix assignment back through a step, folding the
// replayed parts of an amalgamation in reverse order.
template <class MatT, class Ops>
std::map<int, MatT> pull_back_map(const ReductionStep& st, const std::vector<int>& after_dims,
                                  const std::map<int, MatT>& mats, const Ops& ops,
                                  std::vector<int>* before_dims_out) {
  if (st.kind == StepKind::Amalgamation) {
    std::vector<int> dims = after_dims;
    std::map<int, MatT> cur = mats;
    for (auto it = st.parts.rbegin(); it != st.parts.rend(); ++it) {
      std::vector<int> bd;
      cur = pull_back_map(*it, dims, cur, ops, &bd);
      dims = std::move(bd);
    }
    if (before_dims_out) *before_dims_out = std::move(dims);
    return cur;
  }
  std::map<int, MatT> out;
  for (int a : st.before.solid_ids()) {
    MatT e = eval_image(st, a, after_dims, mats, ops);
    if (!e.is_zero()) out.emplace(a, std::move(e));
  }
  if (before_dims_out) *before_dims_out = dims_before(st, after_dims);
  return out;
}

}  // namespace

BoxRep pull_back(const ReductionStep& st, const BoxRep& rep) {
  if (st.kind != StepKind::Amalgamation && int(rep.dim.size()) != st.after.num_vertices())
    fail(Err::PreconditionViolated, "representation does not match the step's target box");
  BoxRep out;
  out.m = pull_back_map(st, rep.dim, rep.m, MatOps{st.before.field}, &out.dim);
  return out;
}

PolyMat pull_back_entry(const ReductionStep& st, int old_arrow, const std::vector<int>& after_dims,
                        const std::map<int, PolyMat>& after_mats) {
  std::vector<int> bd;
  auto all = pull_back_map(st, after_dims, after_mats, PolyMatOps{st.before.field}, &bd);
  auto it = all.find(old_arrow);
  if (it != all.end()) return it->second;
  const auto& ar = st.before.arrows[size_t(old_arrow)];
  return PolyMat(st.before.field, bd[size_t(ar.dst)], bd[size_t(ar.src)]);
}

AffineMat pull_back_entry_affine(const ReductionStep& st, int old_arrow,
                                 const std::vector<int>& after_dims,
                                 const std::map<int, AffineMat>& after_mats) {
  std::vector<int> bd;
  auto all = pull_back_map(st, after_dims, after_mats, AffineMatOps{st.before.field}, &bd);
  auto it = all.find(old_arrow);
  if (it != all.end()) return it->second;
  const auto& ar = st.before.arrows[size_t(old_arrow)];
  return AffineMat(st.before.field, bd[size_t(ar.dst)], bd[size_t(ar.src)]);
}

// ===========================================================================
// Reduced-box validity, minimality

void check_reduced_box(const BoxPresentation& b) {
  // As check_box, but relation words of length 1 are admitted (the degree-zero
  // coefficient of a constraint polynomial).  The structural checks run on a
  // copy without the short relations; those are then validated by hand.
  BoxPresentation c = b;
  std::vector<WordSum> shorts;
  std::vector<WordSum> keep;
  for (const auto& r : b.relations) {
    bool has_short = false;
    for (const auto& [w, coeff] : r.t)
      if (w.arrows.size() < 2) has_short = true;
    (has_short ? shorts : keep).push_back(r);
  }
  c.relations = keep;
  if (auto bad = check_box(c)) fail(Err::Validation, *bad);
  // validate the short-word relations by hand: solid, composable, endpoint-
  // homogeneous, nonzero coefficients
  for (const auto& r : shorts) {
    if (r.is_zero()) fail(Err::Validation, "zero relation");
    int src = -1, dst = -1;
    for (const auto& [w, coeff] : r.t) {
      if (coeff.is_zero()) fail(Err::Validation, "stored zero coefficient in relation");
      if (w.arrows.empty()) fail(Err::Validation, "empty relation word");
      for (size_t i = 0; i < w.arrows.size(); ++i) {
        int id = w.arrows[i];
        if (id < 0 || id >= int(b.arrows.size())) fail(Err::Validation, "relation arrow id");
        if (b.arrows[size_t(id)].dashed) fail(Err::Validation, "dashed arrow in relation");
        if (i + 1 < w.arrows.size() &&
            b.arrows[size_t(id)].src != b.arrows[size_t(w.arrows[i + 1])].dst)
          fail(Err::Validation, "non-composable relation word");
      }
      int wsrc = b.arrows[size_t(w.arrows.back())].src;
      int wdst = b.arrows[size_t(w.arrows.front())].dst;
      if (src < 0) {
        src = wsrc;
        dst = wdst;
      } else if (src != wsrc || dst != wdst) {
        fail(Err::Validation, "relation words with mixed endpoints");
      }
    }
  }
}

bool check_minimal(const BoxPresentation& b) {
  if (!b.relations.empty()) return false;
  std::map<int, int> loops;
  for (int a : b.solid_ids()) {
    const auto& ar = b.arrows[size_t(a)];
    if (ar.src != ar.dst) return false;
    if (!b.diff_of(a).is_zero()) return false;
    if (loops.count(ar.src)) return false;
    loops[ar.src] = a;
  }
  return true;
}

MinimalBox as_minimal_box(const BoxPresentation& b) {
  if (!check_minimal(b)) fail(Err::NotMinimal, "box admits further solid reductions");
  MinimalBox out;
  out.box = b;
  for (int a : b.solid_ids()) out.loop_at[b.arrows[size_t(a)].src] = a;
  return out;
}

// ===========================================================================
// Regularization

ReductionStep regularize(BoxPresentation b, const std::string& solid_arrow) {
  auto it = b.arrow_id.find(solid_arrow);
  if (it == b.arrow_id.end())
    fail(Err::PreconditionViolated, "no arrow named '" + solid_arrow + "'");
  int a = it->second;
  if (b.arrows[size_t(a)].dashed)
    fail(Err::PreconditionViolated, "'" + solid_arrow + "' is dashed");

  // locate a single-letter dashed word with nonzero (hence invertible)
  // coefficient in the differential of a
  const WordSum& da = b.diff_of(a);
  int gamma = -1;
  Scalar c = b.field.zero();
  for (const auto& [w, coeff] : da.t) {
    if (w.arrows.size() != 1) continue;
    int id = w.arrows[0];
    if (!b.arrows[size_t(id)].dashed) continue;
    if (gamma < 0 || id < gamma) {
      gamma = id;
      c = coeff;
    }
  }
  if (gamma < 0)
    fail(Err::PreconditionViolated,
         "differential of '" + solid_arrow + "' has no dashed generator with invertible coefficient");
  const auto& ga = b.arrows[size_t(gamma)];
  const auto& aa = b.arrows[size_t(a)];
  if (ga.src != aa.src || ga.dst != aa.dst)
    fail(Err::Internal, "regularization pair with mismatched endpoints");

  ReductionStep st;
  st.kind = StepKind::Regularization;
  st.detail = "regularization: remove solid '" + aa.name + "' and dashed '" + ga.name + "'";
  st.recipe = StepRecipe{StepKind::Regularization, aa.name, {}, 0};
  st.before = b;

  // rho = -c^{-1} (da - c*[gamma]), with a-words dropped
  WordSum rest = ws_drop_arrow(da, a);
  {
    BoxWord g;
    g.arrows = {gamma};
    rest = ws_add(rest, ws_word(g, -c));
  }
  WordSum rho = ws_scale(-(c.inverse()), rest);

  // substitute gamma := rho inside a word sum until gamma disappears
  auto subst_gamma = [&](WordSum s) {
    for (int guard = 0; guard <= 64; ++guard) {
      if (!ws_contains_arrow(s, gamma)) return s;
      if (guard == 64) fail(Err::Internal, "regularization substitution did not terminate");
      WordSum next;
      for (const auto& [w, coeff] : s.t) {
        auto pos = std::find(w.arrows.begin(), w.arrows.end(), gamma);
        if (pos == w.arrows.end()) {
          next = ws_add(next, ws_word(w, coeff));
          continue;
        }
        BoxWord pre, post;
        pre.arrows.assign(w.arrows.begin(), pos);
        post.arrows.assign(pos + 1, w.arrows.end());
        WordSum piece = ws_concat_free(ws_word(pre, b.field.one()),
                                       ws_concat_free(rho, ws_word(post, b.field.one())));
        next = ws_add(next, ws_scale(coeff, piece));
      }
      s = std::move(next);
    }
    return s;
  };

  // build the new box without a and gamma
  BoxPresentation nb;
  nb.field = b.field;
  for (int v = 0; v < b.num_vertices(); ++v) nb.add_vertex(b.vertices[size_t(v)], b.slice[size_t(v)]);
  std::vector<int> amap(b.arrows.size(), -1);
  for (int id = 0; id < int(b.arrows.size()); ++id) {
    if (id == a || id == gamma) continue;
    const auto& ar = b.arrows[size_t(id)];
    amap[size_t(id)] = nb.add_arrow(ar.name, ar.src, ar.dst, ar.dashed);
  }
  auto remap = [&](const WordSum& s) {
    WordSum out;
    for (const auto& [w, coeff] : s.t) {
      BoxWord nw;
      for (int id : w.arrows) {
        if (amap[size_t(id)] < 0) fail(Err::Internal, "remap hit a deleted arrow");
        nw.arrows.push_back(amap[size_t(id)]);
      }
      out = ws_add(out, ws_word(nw, coeff));
    }
    return out;
  };
  for (int id = 0; id < int(b.arrows.size()); ++id) {
    if (id == a || id == gamma) continue;
    WordSum d = subst_gamma(ws_drop_arrow(b.diff_of(id), a));
    if (!d.is_zero()) nb.diff[amap[size_t(id)]] = remap(d);
  }
  for (const auto& r : b.relations) {
    WordSum nr = ws_drop_arrow(r, a);
    if (!nr.is_zero()) nb.relations.push_back(remap(nr));
  }
  for (const auto& [v, ml] : b.marked) {
    if (ml.arrow == a) fail(Err::PreconditionViolated, "cannot regularize a marked loop");
    nb.marked[v] = MarkedLoop{amap[size_t(ml.arrow)], ml.f};
  }
  validate_built_box(nb, "regularize");

  st.after = nb;
  for (int v = 0; v < b.num_vertices(); ++v) st.image.push_back({VertexPart{v, 1}});
  for (int id : b.solid_ids()) {
    WSMat blk = ws_zeros(1, 1);
    if (id != a) {
      BoxWord w;
      w.arrows = {amap[size_t(id)]};
      blk[0][0] = ws_word(w, b.field.one());
    }
    st.solid_image[id] = blk;
  }
  return st;
}

// ===========================================================================
// Shared vertex-splitting core (edge and loop reduction)

namespace {

struct PartSpec {
  std::string name;
  int slice = 0;
  int layers = 1;
};

struct XiSpec {
  std::string name;
  int vertex = -1;                      // old split vertex
  std::vector<std::pair<int, int>> at;  // (dst slot, src slot) placements
  int arrow = -1;                       // filled during the build
};

struct SplitPlan {
  int consumed = -1;
  std::map<int, std::vector<PartSpec>> parts;
  std::vector<XiSpec> xi;
  // differential of xi #t is the sum of [xi#a, xi#b] over these triples
  std::vector<std::array<int, 3>> xi_diff;
  std::map<std::pair<int, int>, Scalar> pat_const;               // slot pair -> c * empty
  std::vector<std::tuple<int, int, std::string>> pat_loops;      // slot pair -> new solid loop
  std::map<int, std::set<int>> kill_dst;                         // old arrow -> dst slots dropped
  std::set<size_t> drop_relations;
};

struct SplitResult {
  BoxPresentation nb;
  std::vector<std::vector<VertexPart>> image;
  std::map<int, std::vector<int>> slot_vx;                      // old vertex -> slot vertices
  std::map<int, WSMat> img;                                     // old arrow -> image blocks
  std::map<int, std::map<std::pair<int, int>, int>> comp;       // old arrow -> slot pair -> id
  std::map<std::string, int> pat_loop_arrow;
};

SplitResult run_split(const BoxPresentation& b, SplitPlan& plan) {
  SplitResult R;
  BoxPresentation& nb = R.nb;
  nb.field = b.field;
  const int consumed = plan.consumed;
  if (consumed < 0) fail(Err::Internal, "split without a consumed arrow");
  const auto& ca = b.arrows[size_t(consumed)];

  // vertices
  std::map<std::string, int> part_id;
  R.image.resize(size_t(b.num_vertices()));
  for (int v = 0; v < b.num_vertices(); ++v) {
    auto pit = plan.parts.find(v);
    if (pit == plan.parts.end()) {
      int nv = nb.add_vertex(b.vertices[size_t(v)], b.slice[size_t(v)]);
      R.image[size_t(v)] = {VertexPart{nv, 1}};
      R.slot_vx[v] = {nv};
      continue;
    }
    for (const auto& ps : pit->second) {
      int nv;
      auto f = part_id.find(ps.name);
      if (f == part_id.end()) {
        nv = nb.add_vertex(ps.name, ps.slice);
        part_id.emplace(ps.name, nv);
      } else {
        nv = f->second;
      }
      R.image[size_t(v)].push_back(VertexPart{nv, ps.layers});
      for (int l = 0; l < ps.layers; ++l) R.slot_vx[v].push_back(nv);
    }
    if (!R.slot_vx.count(v)) R.slot_vx[v] = {};
  }

  auto kill_set = [&](int arrow) -> const std::set<int>* {
    auto it = plan.kill_dst.find(arrow);
    return it == plan.kill_dst.end() ? nullptr : &it->second;
  };

  // pattern loops
  for (const auto& [ds, ss, name] : plan.pat_loops) {
    int dv = R.slot_vx.at(ca.dst)[size_t(ds)];
    int sv = R.slot_vx.at(ca.src)[size_t(ss)];
    if (dv != sv) fail(Err::Internal, "pattern loop entry is not on the diagonal");
    R.pat_loop_arrow[name] = nb.add_arrow(name, sv, dv, false);
  }

  // xi arrows
  for (auto& xs : plan.xi) {
    if (xs.at.empty()) fail(Err::Internal, "xi arrow without placements");
    int dv = R.slot_vx.at(xs.vertex)[size_t(xs.at[0].first)];
    int sv = R.slot_vx.at(xs.vertex)[size_t(xs.at[0].second)];
    for (const auto& [di, si] : xs.at)
      if (R.slot_vx.at(xs.vertex)[size_t(di)] != dv || R.slot_vx.at(xs.vertex)[size_t(si)] != sv)
        fail(Err::Internal, "xi placements with inconsistent endpoints");
    xs.arrow = nb.add_arrow(xs.name, sv, dv, true);
  }

  // component arrows
  for (int id = 0; id < int(b.arrows.size()); ++id) {
    if (id == consumed) continue;
    const auto& ar = b.arrows[size_t(id)];
    bool ssplit = plan.parts.count(ar.src) > 0, dsplit = plan.parts.count(ar.dst) > 0;
    const auto& svx = R.slot_vx.at(ar.src);
    const auto& dvx = R.slot_vx.at(ar.dst);
    const auto* kd = kill_set(id);
    for (size_t i = 0; i < dvx.size(); ++i) {
      if (kd && kd->count(int(i))) continue;
      for (size_t j = 0; j < svx.size(); ++j) {
        std::string nm = ar.name;
        if (ssplit && dsplit)
          nm += "." + std::to_string(i) + "." + std::to_string(j);
        else if (dsplit)
          nm += ".d" + std::to_string(i);
        else if (ssplit)
          nm += ".s" + std::to_string(j);
        while (nb.arrow_id.count(nm)) nm += "'";
        R.comp[id][{int(i), int(j)}] = nb.add_arrow(nm, svx[j], dvx[i], ar.dashed);
      }
    }
  }

  // image blocks
  for (int id = 0; id < int(b.arrows.size()); ++id) {
    const auto& ar = b.arrows[size_t(id)];
    size_t nr = R.slot_vx.at(ar.dst).size(), nc = R.slot_vx.at(ar.src).size();
    WSMat blk = ws_zeros(nr, nc);
    if (id == consumed) {
      for (const auto& [pos, c] : plan.pat_const) {
        BoxWord empty;
        blk[size_t(pos.first)][size_t(pos.second)] =
            ws_add(blk[size_t(pos.first)][size_t(pos.second)], ws_word(empty, c));
      }
      for (const auto& [ds, ss, name] : plan.pat_loops) {
        BoxWord w;
        w.arrows = {R.pat_loop_arrow.at(name)};
        blk[size_t(ds)][size_t(ss)] =
            ws_add(blk[size_t(ds)][size_t(ss)], ws_word(w, b.field.one()));
      }
    } else {
      for (const auto& [pos, nid] : R.comp[id]) {
        BoxWord w;
        w.arrows = {nid};
        blk[size_t(pos.first)][size_t(pos.second)] = ws_word(w, b.field.one());
      }
    }
    R.img[id] = std::move(blk);
  }

  // xi placement matrices per old vertex
  std::map<int, WSMat> ximat;
  for (const auto& [v, parts] : plan.parts) {
    size_t n = R.slot_vx.at(v).size();
    ximat[v] = ws_zeros(n, n);
  }
  for (const auto& xs : plan.xi) {
    BoxWord w;
    w.arrows = {xs.arrow};
    for (const auto& [di, si] : xs.at)
      ximat[xs.vertex][size_t(di)][size_t(si)] =
          ws_add(ximat[xs.vertex][size_t(di)][size_t(si)], ws_word(w, b.field.one()));
  }
  auto xi_at = [&](int v) -> const WSMat* {
    auto it = ximat.find(v);
    return it == ximat.end() ? nullptr : &it->second;
  };

  // blockwise substitution of a word sum over the old box
  auto subst = [&](const WordSum& s, int wsrc, int wdst) {
    size_t nr = R.slot_vx.at(wdst).size(), nc = R.slot_vx.at(wsrc).size();
    WSMat acc = ws_zeros(nr, nc);
    for (const auto& [w, c] : s.t) {
      if (w.arrows.empty()) fail(Err::Internal, "empty word in substitution");
      WSMat prod = R.img.at(w.arrows[0]);
      for (size_t k = 1; k < w.arrows.size(); ++k) prod = ws_block_mul(prod, R.img.at(w.arrows[k]));
      for (size_t i = 0; i < nr; ++i)
        for (size_t j = 0; j < nc; ++j) acc[i][j] = ws_add(acc[i][j], ws_scale(c, prod[i][j]));
    }
    return acc;
  };

  // differentials of components
  for (int id = 0; id < int(b.arrows.size()); ++id) {
    if (id == consumed) continue;
    const auto& ar = b.arrows[size_t(id)];
    const WordSum& dx = b.diff_of(id);
    WSMat ds;
    bool have_ds = !dx.is_zero();
    if (have_ds) ds = subst(dx, ar.src, ar.dst);
    const WSMat* xd = xi_at(ar.dst);
    const WSMat* xs = xi_at(ar.src);
    for (const auto& [pos, nid] : R.comp[id]) {
      int i = pos.first, j = pos.second;
      WordSum dn;
      if (have_ds) dn = ds[size_t(i)][size_t(j)];
      if (xd) {
        // + [xi_{i,i'} , x_{i',j}]   (same sign for solid and dashed)
        for (size_t i2 = 0; i2 < xd->size(); ++i2) {
          const WordSum& x_entry = (*xd)[size_t(i)][i2];
          if (x_entry.is_zero()) continue;
          auto cit = R.comp[id].find({int(i2), j});
          if (cit == R.comp[id].end()) continue;
          BoxWord w;
          w.arrows = {cit->second};
          dn = ws_add(dn, ws_concat_free(x_entry, ws_word(w, b.field.one())));
        }
      }
      if (xs) {
        // -/+ [x_{i,j'} , xi_{j',j}]: minus for solid arrows, plus for dashed
        for (size_t j2 = 0; j2 < xs->size(); ++j2) {
          const WordSum& x_entry = (*xs)[j2][size_t(j)];
          if (x_entry.is_zero()) continue;
          auto cit = R.comp[id].find({i, int(j2)});
          if (cit == R.comp[id].end()) continue;
          BoxWord w;
          w.arrows = {cit->second};
          WordSum term = ws_concat_free(ws_word(w, b.field.one()), x_entry);
          dn = ws_add(dn, ar.dashed ? term : ws_scale(-b.field.one(), term));
        }
      }
      if (!dn.is_zero()) nb.diff[nid] = dn;
    }
  }

  // xi differentials
  for (const auto& tr : plan.xi_diff) {
    const XiSpec& t = plan.xi[size_t(tr[0])];
    const XiSpec& p = plan.xi[size_t(tr[1])];
    const XiSpec& q = plan.xi[size_t(tr[2])];
    BoxWord w;
    w.arrows = {p.arrow, q.arrow};
    nb.diff[t.arrow] = ws_add(nb.diff.count(t.arrow) ? nb.diff[t.arrow] : WordSum{},
                              ws_word(w, b.field.one()));
  }

  // relations
  for (size_t ri = 0; ri < b.relations.size(); ++ri) {
    if (plan.drop_relations.count(ri)) continue;
    const WordSum& r = b.relations[ri];
    int wsrc = b.word_src(r.t.begin()->first);
    int wdst = b.word_dst(r.t.begin()->first);
    WSMat blocks = subst(r, wsrc, wdst);
    for (const auto& row : blocks)
      for (const auto& entry : row)
        if (!entry.is_zero()) nb.relations.push_back(entry);
  }

  // markings of unsplit vertices
  for (const auto& [v, ml] : b.marked) {
    if (plan.parts.count(v)) continue;  // caller handles split vertices
    auto cit = R.comp[ml.arrow].find({0, 0});
    if (cit == R.comp[ml.arrow].end()) fail(Err::Internal, "marked loop lost in split");
    nb.marked[R.slot_vx.at(v)[0]] = MarkedLoop{cit->second, ml.f};
  }

  return R;
}

ReductionStep finish_split_step(const BoxPresentation& before, SplitResult& R, StepKind kind,
                                const std::string& detail, StepRecipe recipe) {
  ReductionStep st;
  st.kind = kind;
  st.detail = detail;
  st.recipe = std::move(recipe);
  st.before = before;
  st.after = R.nb;
  st.image = R.image;
  for (int id : before.solid_ids()) st.solid_image[id] = R.img.at(id);
  return st;
}

}  // namespace

// ===========================================================================
// Edge reduction

ReductionStep reduce_edge(BoxPresentation b, const std::string& solid_arrow) {
  auto it = b.arrow_id.find(solid_arrow);
  if (it == b.arrow_id.end())
    fail(Err::PreconditionViolated, "no arrow named '" + solid_arrow + "'");
  int a = it->second;
  const auto& aa = b.arrows[size_t(a)];
  if (aa.dashed) fail(Err::PreconditionViolated, "'" + solid_arrow + "' is dashed");
  if (aa.src == aa.dst) fail(Err::PreconditionViolated, "'" + solid_arrow + "' is a loop");
  if (!b.diff_of(a).is_zero())
    fail(Err::PreconditionViolated, "'" + solid_arrow + "' has a nonzero differential");
  for (int s : b.solid_ids()) {
    const auto& ar = b.arrows[size_t(s)];
    if (ar.src == ar.dst && (ar.src == aa.src || ar.src == aa.dst) && b.diff_of(s).is_zero())
      fail(Err::PreconditionViolated,
           "edge reduction endpoint carries the minimal solid loop '" + ar.name + "'");
  }

  int v = aa.src, w = aa.dst;
  std::set<std::string> used;
  auto fresh = [&](std::string nm) {
    while (b.vertex_id.count(nm) || b.arrow_id.count(nm) || used.count(nm)) nm += "'";
    used.insert(nm);
    return nm;
  };
  std::string sh = fresh(aa.name + ":i");
  std::string vk = fresh(b.vertices[size_t(v)] + ":k:" + aa.name);
  std::string wc = fresh(b.vertices[size_t(w)] + ":c:" + aa.name);
  int shs = std::min(b.slice[size_t(v)], b.slice[size_t(w)]);

  SplitPlan plan;
  plan.consumed = a;
  plan.parts[v] = {PartSpec{vk, b.slice[size_t(v)], 1}, PartSpec{sh, shs, 1}};
  plan.parts[w] = {PartSpec{wc, b.slice[size_t(w)], 1}, PartSpec{sh, shs, 1}};
  plan.pat_const[{1, 1}] = b.field.one();  // shared slot of w <- shared slot of v
  plan.xi.push_back(XiSpec{fresh(aa.name + ":xi"), v, {{0, 1}}, -1});
  plan.xi.push_back(XiSpec{fresh(aa.name + ":eta"), w, {{1, 0}}, -1});

  SplitResult R = run_split(b, plan);
  validate_built_box(R.nb, "reduce_edge");
  return finish_split_step(b, R, StepKind::EdgeReduction,
                           "edge reduction at '" + aa.name + "': strata '" + vk + "', '" + sh +
                               "', '" + wc + "'",
                           StepRecipe{StepKind::EdgeReduction, aa.name, {}, 0});
}

// ===========================================================================
// Loop reduction

ReductionStep reduce_loop(BoxPresentation b, const std::string& loop_arrow,
                          const std::vector<Scalar>& lambda, int jordan_bound) {
  auto it = b.arrow_id.find(loop_arrow);
  if (it == b.arrow_id.end())
    fail(Err::PreconditionViolated, "no arrow named '" + loop_arrow + "'");
  int beta = it->second;
  const auto& ba = b.arrows[size_t(beta)];
  if (ba.dashed) fail(Err::PreconditionViolated, "'" + loop_arrow + "' is dashed");
  if (ba.src != ba.dst) fail(Err::PreconditionViolated, "'" + loop_arrow + "' is not a loop");
  if (!b.diff_of(beta).is_zero())
    fail(Err::PreconditionViolated, "'" + loop_arrow + "' has a nonzero differential");
  if (jordan_bound < 0) fail(Err::PreconditionViolated, "negative Jordan bound");
  int bb = ba.src;

  Poly oldmark = Poly::constant(b.field, b.field.one());
  bool marked_here = b.marked.count(bb) > 0;
  if (marked_here) {
    if (b.marked.at(bb).arrow != beta)
      fail(Err::PreconditionViolated, "vertex marking involves a different loop");
    oldmark = b.marked.at(bb).f;
  }

  // sorted, deduplicated eigenvalues compatible with the existing marking
  std::vector<Scalar> L = lambda;
  std::sort(L.begin(), L.end());
  L.erase(std::unique(L.begin(), L.end(),
                      [](const Scalar& x, const Scalar& y) { return x == y; }),
          L.end());
  {
    std::vector<Scalar> keep;
    for (const auto& l : L)
      if (!oldmark.eval(l).is_zero()) keep.push_back(l);
    L = std::move(keep);
  }
  const int d = jordan_bound;

  // classify relations: consumable ones have every word of the form
  // beta^p . alpha for one common alpha != beta into bb
  struct Bound {
    int alpha = -1;
    Poly f;
  };
  std::vector<std::optional<Bound>> consreal(b.relations.size());
  for (size_t ri = 0; ri < b.relations.size(); ++ri) {
    const WordSum& r = b.relations[ri];
    int alpha = -1;
    Poly f(b.field);
    bool ok = true;
    for (const auto& [w, c] : r.t) {
      if (w.arrows.empty()) {
        ok = false;
        break;
      }
      int last = w.arrows.back();
      const auto& la = b.arrows[size_t(last)];
      if (last == beta || la.dst != bb || la.src == bb) {
        ok = false;
        break;
      }
      if (alpha < 0) alpha = last;
      if (last != alpha) {
        ok = false;
        break;
      }
      for (size_t k = 0; k + 1 < w.arrows.size(); ++k)
        if (w.arrows[k] != beta) {
          ok = false;
          break;
        }
      if (!ok) break;
      int p = int(w.arrows.size()) - 1;
      std::vector<Scalar> mono(size_t(p) + 1, b.field.zero());
      mono[size_t(p)] = c;
      f = f + Poly(b.field, mono);
    }
    if (ok && alpha >= 0 && !f.is_zero()) consreal[ri] = Bound{alpha, f};
  }

  std::set<std::string> used;
  auto fresh = [&](std::string nm) {
    while (b.vertex_id.count(nm) || b.arrow_id.count(nm) || used.count(nm)) nm += "'";
    used.insert(nm);
    return nm;
  };

  SplitPlan plan;
  plan.consumed = beta;
  // parts: Jordan strata (lambda, m), then the generic part
  struct JPart {
    int lam;  // index into L
    int m;
    int base;  // first slot index
  };
  std::vector<JPart> jparts;
  std::vector<PartSpec> parts;
  int slot = 0;
  if (d >= 1) {
    for (size_t li = 0; li < L.size(); ++li)
      for (int m = 1; m <= d; ++m) {
        parts.push_back(PartSpec{
            fresh(b.vertices[size_t(bb)] + ":j:" + L[li].str() + ":" + std::to_string(m)),
            b.slice[size_t(bb)], m});
        jparts.push_back(JPart{int(li), m, slot});
        slot += m;
      }
  }
  int gslot = -1;
  std::string gname;
  if (d >= 1) {
    gname = fresh(b.vertices[size_t(bb)] + ":g");
    parts.push_back(PartSpec{gname, b.slice[size_t(bb)], 1});
    gslot = slot++;
  }
  plan.parts[bb] = parts;

  // pattern: upper Jordan blocks J_m(lambda) plus the generic loop
  for (const auto& jp : jparts) {
    for (int i = 0; i < jp.m; ++i) {
      plan.pat_const[{jp.base + i, jp.base + i}] = L[size_t(jp.lam)];
      if (i + 1 < jp.m) plan.pat_const[{jp.base + i, jp.base + i + 1}] = b.field.one();
    }
  }
  std::string gloop;
  if (d >= 1) {
    gloop = fresh(ba.name + ":g");
    plan.pat_loops.emplace_back(gslot, gslot, gloop);
  }

  // xi staircases between same-eigenvalue Jordan parts
  std::map<std::array<int, 3>, int> xi_ix;  // (p part, q part, k) -> xi index
  for (size_t pi = 0; pi < jparts.size(); ++pi)
    for (size_t qi = 0; qi < jparts.size(); ++qi) {
      const JPart &p = jparts[pi], &q = jparts[qi];
      if (p.lam != q.lam) continue;
      for (int k = std::max(0, q.m - p.m); k <= q.m - 1; ++k) {
        if (pi == qi && k == 0) continue;
        XiSpec xs;
        xs.name = fresh(ba.name + ":s:" + std::to_string(pi) + ":" + std::to_string(qi) + ":" +
                        std::to_string(k));
        xs.vertex = bb;
        for (int j = k; j < std::min(q.m, k + p.m); ++j) xs.at.push_back({p.base + j - k, q.base + j});
        xi_ix[{int(pi), int(qi), k}] = int(plan.xi.size());
        plan.xi.push_back(std::move(xs));
      }
    }
  // d(xi^{p,q,t}) = sum over r, k+l = t of [xi^{p,r,k}, xi^{r,q,l}]
  for (const auto& [key, ti] : xi_ix) {
    int pi = key[0], qi = key[1], t = key[2];
    for (size_t ri = 0; ri < jparts.size(); ++ri) {
      if (jparts[ri].lam != jparts[size_t(pi)].lam) continue;
      for (int k = 0; k <= t; ++k) {
        int l = t - k;
        auto a1 = xi_ix.find({pi, int(ri), k});
        auto a2 = xi_ix.find({int(ri), qi, l});
        if (a1 == xi_ix.end() || a2 == xi_ix.end()) continue;
        plan.xi_diff.push_back({ti, a1->second, a2->second});
      }
    }
  }

  // consume single-arrow relations: layer kills plus generic vanishing
  std::set<int> generic_killed;
  std::vector<std::pair<int, Poly>> residual;  // (alpha, f) kept on the generic part
  for (size_t ri = 0; ri < b.relations.size(); ++ri) {
    if (!consreal[ri]) continue;
    plan.drop_relations.insert(ri);
    const auto& bd = *consreal[ri];
    // multiplicity of each chosen eigenvalue in f kills the layers above it
    for (const auto& jp : jparts) {
      const Scalar& lam = L[size_t(jp.lam)];
      Poly g = bd.f;
      int k = 0;
      Poly lin(b.field, {-lam, b.field.one()});
      while (!g.is_zero() && g.eval(lam).is_zero()) {
        g = g.divmod(lin).first;
        ++k;
      }
      for (int j = k; j < jp.m; ++j) plan.kill_dst[bd.alpha].insert(jp.base + j);
    }
    if (d >= 1) {
      // on the generic stratum f(beta) acts invertibly iff every root of f is
      // outside the stratum (chosen or excluded by the old marking) and f splits
      auto rd = bd.f.roots();
      bool invertible = rd.residual.is_constant();
      if (invertible)
        for (const auto& [root, mult] : rd.roots) {
          bool chosen = std::find(L.begin(), L.end(), root) != L.end();
          bool excluded = oldmark.eval(root).is_zero();
          if (!chosen && !excluded) invertible = false;
        }
      if (invertible)
        generic_killed.insert(bd.alpha);
      else
        residual.emplace_back(bd.alpha, bd.f);
    }
  }
  for (int alpha : generic_killed)
    if (gslot >= 0) plan.kill_dst[alpha].insert(gslot);

  SplitResult R = run_split(b, plan);

  // generic marking
  if (d >= 1) {
    Poly mark = oldmark;
    for (const auto& l : L) mark = mark * Poly(b.field, {-l, b.field.one()});
    if (!mark.is_constant()) {
      int gv = R.nb.vertex_id.at(gname);
      R.nb.marked[gv] = MarkedLoop{R.pat_loop_arrow.at(gloop), mark};
    }
  }
  // residual generic relations f(beta_g) . alpha_g
  for (const auto& [alpha, f] : residual) {
    if (generic_killed.count(alpha)) continue;
    auto cit = R.comp[alpha].find({gslot, 0});
    if (cit == R.comp[alpha].end()) continue;
    int ag = cit->second;
    int bg = R.pat_loop_arrow.at(gloop);
    WordSum rel;
    for (int p = 0; p <= f.degree(); ++p) {
      Scalar c = f.coeff(p);
      if (c.is_zero()) continue;
      BoxWord w;
      w.arrows.assign(size_t(p), bg);
      w.arrows.push_back(ag);
      rel = ws_add(rel, ws_word(w, c));
    }
    if (!rel.is_zero()) R.nb.relations.push_back(rel);
  }

  validate_built_box(R.nb, "reduce_loop");
  std::string lamtxt;
  for (const auto& l : L) lamtxt += (lamtxt.empty() ? "" : ",") + l.str();
  return finish_split_step(
      b, R, StepKind::LoopReduction,
      "loop reduction at '" + ba.name + "' w.r.t. {" + lamtxt + "}, Jordan bound " +
          std::to_string(d),
      StepRecipe{StepKind::LoopReduction, ba.name, L, d});
}

// ===========================================================================
// Relation diagonalization

namespace {

std::string box_fingerprint(const BoxPresentation& b) {
  std::string s;
  for (int v = 0; v < b.num_vertices(); ++v)
    s += b.vertices[size_t(v)] + "@" + std::to_string(b.slice[size_t(v)]) + ";";
  for (const auto& a : b.arrows)
    s += a.name + ":" + std::to_string(a.src) + ">" + std::to_string(a.dst) +
         (a.dashed ? "-" : "+") + ";";
  for (int a = 0; a < int(b.arrows.size()); ++a) {
    const WordSum& d = b.diff_of(a);
    if (!d.is_zero()) s += "d" + std::to_string(a) + "=" + wordsum_str(b, d) + ";";
  }
  std::vector<std::string> rels;
  for (const auto& r : b.relations) rels.push_back(wordsum_str(b, r));
  std::sort(rels.begin(), rels.end());
  for (const auto& r : rels) s += "r" + r + ";";
  for (const auto& [v, ml] : b.marked)
    s += "m" + std::to_string(v) + ":" + std::to_string(ml.arrow) + ":" + ml.f.str("t") + ";";
  return s;
}

}  // namespace

DiagonalizedRelations diagonalize_relations(const BoxPresentation& b, int src_vertex) {
  if (src_vertex < 0 || src_vertex >= b.num_vertices())
    fail(Err::PreconditionViolated, "bad source vertex");
  const int sv = src_vertex;

  DiagonalizedRelations out;
  out.box = b;

  std::map<int, std::vector<size_t>> by_dst;
  for (size_t ri = 0; ri < b.relations.size(); ++ri) {
    const BoxWord& w0 = b.relations[ri].t.begin()->first;
    if (b.word_src(w0) == sv) by_dst[b.word_dst(w0)].push_back(ri);
  }
  if (by_dst.empty()) return out;

  std::set<size_t> consumed;
  std::map<int, WordSum> lsub;     // col arrow -> expansion (ids keep their meaning order)
  std::map<int, WordSum> coldiff;  // col arrow -> q * (old differentials)
  std::set<int> deleted;
  struct NewRel {
    int beta;  // -1 when no loop is involved
    int alpha;
    Poly f;
  };
  std::vector<NewRel> newrels;

  for (const auto& [bv, rels] : by_dst) {
    if (bv == sv)
      fail(Err::UnsupportedRelationShape, "relations looping at vertex '" +
                                              b.vertices[size_t(sv)] + "' are not supported");
    // the loop beta: the common non-final letter of all words
    int beta = -1;
    for (size_t ri : rels)
      for (const auto& [w, c] : b.relations[ri].t)
        for (size_t k = 0; k + 1 < w.arrows.size(); ++k) {
          if (beta < 0) beta = w.arrows[k];
          if (w.arrows[k] != beta)
            fail(Err::UnsupportedRelationShape,
                 "relation word is not a power of one loop followed by an arrow");
        }
    if (beta >= 0) {
      const auto& ba = b.arrows[size_t(beta)];
      if (ba.dashed || ba.src != bv || ba.dst != bv || !b.diff_of(beta).is_zero())
        fail(Err::UnsupportedRelationShape,
             "relation prefix '" + ba.name + "' is not a differential-free loop at the target");
    }
    // candidate columns: all solid arrows src_vertex -> bv except the loop
    std::vector<int> cols;
    for (int a : b.solid_ids()) {
      if (a == beta) continue;
      const auto& ar = b.arrows[size_t(a)];
      if (ar.src == sv && ar.dst == bv) cols.push_back(a);
    }
    std::map<int, size_t> colix;
    for (size_t j = 0; j < cols.size(); ++j) colix[cols[j]] = j;
    for (const auto& [v, ml] : b.marked)
      if (colix.count(ml.arrow))
        fail(Err::UnsupportedRelationShape, "cannot transform the marked loop '" +
                                                b.arrows[size_t(ml.arrow)].name + "'");

    PolyMat A(b.field, int(rels.size()), int(cols.size()));
    for (size_t r = 0; r < rels.size(); ++r) {
      for (const auto& [w, c] : b.relations[rels[r]].t) {
        int last = w.arrows.back();
        auto it = colix.find(last);
        if (it == colix.end())
          fail(Err::UnsupportedRelationShape,
               "relation word ends in '" + b.arrows[size_t(last)].name + "'");
        int p = int(w.arrows.size()) - 1;
        std::vector<Scalar> mono(size_t(p) + 1, b.field.zero());
        mono[size_t(p)] = c;
        A.at(int(r), int(it->second)) = A.at(int(r), int(it->second)) + Poly(b.field, mono);
      }
      consumed.insert(rels[r]);
    }

    SmithResult S = smith_normal_form(A);
    // old_j = sum_i E[j][i](beta) alpha'_i with E = q_inv; d alpha' = q * d old
    auto poly_words = [&](const Poly& f, int tail, const WordSum& tail_ws) {
      // f(beta) composed with either a single arrow (tail >= 0) or a word sum
      WordSum acc;
      for (int p = 0; p <= f.degree(); ++p) {
        Scalar c = f.coeff(p);
        if (c.is_zero()) continue;
        if (p > 0 && beta < 0) fail(Err::Internal, "loop power without a loop");
        BoxWord pre;
        pre.arrows.assign(size_t(p), beta);
        if (tail >= 0) {
          BoxWord w = pre;
          w.arrows.push_back(tail);
          acc = ws_add(acc, ws_word(w, c));
        } else {
          acc = ws_add(acc, ws_scale(c, ws_concat_free(ws_word(pre, b.field.one()), tail_ws)));
        }
      }
      return acc;
    };
    for (size_t j = 0; j < cols.size(); ++j) {
      WordSum expand;
      for (size_t i = 0; i < cols.size(); ++i)
        expand = ws_add(expand, poly_words(S.q_inv.at(int(j), int(i)), cols[i], WordSum{}));
      lsub[cols[j]] = expand;
    }
    for (size_t i = 0; i < cols.size(); ++i) {
      WordSum nd;
      for (size_t j = 0; j < cols.size(); ++j) {
        const WordSum& dj = b.diff_of(cols[j]);
        if (dj.is_zero()) continue;
        nd = ws_add(nd, poly_words(S.q.at(int(i), int(j)), -1, dj));
      }
      coldiff[cols[i]] = nd;
    }
    for (size_t k = 0; k < cols.size(); ++k) {
      Poly dk = int(k) < S.d.rows() ? S.d.at(int(k), int(k)) : Poly(b.field);
      if (dk.is_zero()) {
        bool touched = false;
        for (int r = 0; r < A.rows(); ++r)
          if (!A.at(r, int(k)).is_zero()) touched = true;
        if (touched) out.unconstrained.push_back(cols[k]);
      } else if (dk.degree() == 0) {
        deleted.insert(cols[k]);
      } else {
        newrels.push_back(NewRel{beta, cols[k], dk});
      }
    }
  }

  // rebuild the box with the rewritten generators
  auto expand_ws = [&](const WordSum& s) {
    WordSum acc;
    for (const auto& [w, c] : s.t) {
      BoxWord empty;
      WordSum prod = ws_word(empty, c);
      for (int l : w.arrows) {
        auto it = lsub.find(l);
        if (it != lsub.end()) {
          prod = ws_concat_free(prod, it->second);
        } else {
          BoxWord lw;
          lw.arrows = {l};
          prod = ws_concat_free(prod, ws_word(lw, b.field.one()));
        }
      }
      acc = ws_add(acc, prod);
    }
    return acc;
  };
  auto drop_deleted = [&](const WordSum& s) {
    WordSum acc;
    for (const auto& [w, c] : s.t) {
      bool dead = false;
      for (int l : w.arrows)
        if (deleted.count(l)) dead = true;
      if (!dead) acc = ws_add(acc, ws_word(w, c));
    }
    return acc;
  };

  BoxPresentation nb;
  nb.field = b.field;
  for (int v = 0; v < b.num_vertices(); ++v)
    nb.add_vertex(b.vertices[size_t(v)], b.slice[size_t(v)]);
  std::vector<int> amap(b.arrows.size(), -1);
  for (int a = 0; a < int(b.arrows.size()); ++a) {
    if (deleted.count(a)) continue;
    const auto& ar = b.arrows[size_t(a)];
    amap[size_t(a)] = nb.add_arrow(ar.name, ar.src, ar.dst, ar.dashed);
  }
  auto remap = [&](const WordSum& s) {
    WordSum acc;
    for (const auto& [w, c] : s.t) {
      BoxWord nw;
      for (int l : w.arrows) {
        if (amap[size_t(l)] < 0) fail(Err::Internal, "deleted arrow survived substitution");
        nw.arrows.push_back(amap[size_t(l)]);
      }
      acc = ws_add(acc, ws_word(nw, c));
    }
    return acc;
  };
  for (int a = 0; a < int(b.arrows.size()); ++a) {
    if (deleted.count(a)) continue;
    auto cit = coldiff.find(a);
    const WordSum& base = cit != coldiff.end() ? cit->second : b.diff_of(a);
    WordSum nd = drop_deleted(expand_ws(base));
    if (!nd.is_zero()) nb.diff[amap[size_t(a)]] = remap(nd);
  }
  for (size_t ri = 0; ri < b.relations.size(); ++ri) {
    if (consumed.count(ri)) continue;
    WordSum nr = drop_deleted(expand_ws(b.relations[ri]));
    if (!nr.is_zero()) nb.relations.push_back(remap(nr));
  }
  for (const auto& nrl : newrels) {
    WordSum rel;
    for (int p = 0; p <= nrl.f.degree(); ++p) {
      Scalar c = nrl.f.coeff(p);
      if (c.is_zero()) continue;
      BoxWord w;
      w.arrows.assign(size_t(p), amap[size_t(nrl.beta)]);
      w.arrows.push_back(amap[size_t(nrl.alpha)]);
      rel = ws_add(rel, ws_word(w, c));
    }
    if (!rel.is_zero()) nb.relations.push_back(rel);
  }
  for (const auto& [v, ml] : b.marked) {
    if (amap[size_t(ml.arrow)] < 0) fail(Err::Internal, "marked loop deleted");
    nb.marked[v] = MarkedLoop{amap[size_t(ml.arrow)], ml.f};
  }
  validate_built_box(nb, "diagonalize_relations");

  for (const auto& nrl : newrels)
    out.bound.push_back(BoundArrow{amap[size_t(nrl.alpha)], nrl.f});
  // remap the unconstrained report to the new box (ids shift under deletions)
  for (int& a : out.unconstrained) a = amap[size_t(a)];

  if (box_fingerprint(nb) == box_fingerprint(b)) return out;  // no-op: keep the input box

  ReductionStep st;
  st.kind = StepKind::RelationDiagonalization;
  st.detail = "diagonalized the relations from vertex '" + b.vertices[size_t(sv)] + "'";
  st.recipe = StepRecipe{StepKind::RelationDiagonalization, b.vertices[size_t(sv)], {}, 0};
  st.before = b;
  st.after = nb;
  for (int v = 0; v < b.num_vertices(); ++v) st.image.push_back({VertexPart{v, 1}});
  for (int a : b.solid_ids()) {
    WSMat blk = ws_zeros(1, 1);
    auto it = lsub.find(a);
    if (it != lsub.end()) {
      blk[0][0] = remap(drop_deleted(it->second));
    } else if (!deleted.count(a)) {
      BoxWord w;
      w.arrows = {amap[size_t(a)]};
      blk[0][0] = ws_word(w, b.field.one());
    }
    st.solid_image[a] = blk;
  }
  out.step = std::move(st);
  out.box = std::move(nb);
  return out;
}

// ===========================================================================
// Restriction and amalgamation

BoxPresentation restrict_below(const BoxPresentation& b, int cut) {
  BoxPresentation nb;
  nb.field = b.field;
  std::vector<int> vmap(size_t(b.num_vertices()), -1);
  for (int v = 0; v < b.num_vertices(); ++v)
    if (b.slice[size_t(v)] < cut) vmap[size_t(v)] = nb.add_vertex(b.vertices[size_t(v)], b.slice[size_t(v)]);
  std::vector<int> amap(b.arrows.size(), -1);
  for (int a = 0; a < int(b.arrows.size()); ++a) {
    const auto& ar = b.arrows[size_t(a)];
    if (vmap[size_t(ar.src)] < 0 || vmap[size_t(ar.dst)] < 0) continue;
    amap[size_t(a)] = nb.add_arrow(ar.name, vmap[size_t(ar.src)], vmap[size_t(ar.dst)], ar.dashed);
  }
  auto remap = [&](const WordSum& s, const char* what) {
    WordSum acc;
    for (const auto& [w, c] : s.t) {
      BoxWord nw;
      for (int l : w.arrows) {
        if (amap[size_t(l)] < 0)
          fail(Err::Internal, std::string("restriction leak in ") + what);
        nw.arrows.push_back(amap[size_t(l)]);
      }
      acc = ws_add(acc, ws_word(nw, c));
    }
    return acc;
  };
  for (const auto& [a, d] : b.diff)
    if (amap[size_t(a)] >= 0 && !d.is_zero()) nb.diff[amap[size_t(a)]] = remap(d, "differential");
  for (const auto& r : b.relations) {
    const BoxWord& w0 = r.t.begin()->first;
    if (vmap[size_t(b.word_src(w0))] < 0) continue;
    nb.relations.push_back(remap(r, "relation"));
  }
  for (const auto& [v, ml] : b.marked) {
    if (vmap[size_t(v)] < 0) continue;
    if (amap[size_t(ml.arrow)] < 0) fail(Err::Internal, "restriction leak in marking");
    nb.marked[vmap[size_t(v)]] = MarkedLoop{amap[size_t(ml.arrow)], ml.f};
  }
  return nb;
}

ReductionStep prune_vertex(BoxPresentation b, const std::string& vertex) {
  auto vit = b.vertex_id.find(vertex);
  if (vit == b.vertex_id.end())
    fail(Err::PreconditionViolated, "no vertex named '" + vertex + "'");
  int pv = vit->second;

  BoxPresentation nb;
  nb.field = b.field;
  std::vector<int> vmap(b.vertices.size(), -1);
  for (int v = 0; v < b.num_vertices(); ++v)
    if (v != pv) vmap[size_t(v)] = nb.add_vertex(b.vertices[size_t(v)], b.slice[size_t(v)]);
  std::vector<int> amap(b.arrows.size(), -1);
  for (size_t a = 0; a < b.arrows.size(); ++a) {
    const auto& ar = b.arrows[a];
    if (ar.src == pv || ar.dst == pv) continue;
    amap[a] = nb.add_arrow(ar.name, vmap[size_t(ar.src)], vmap[size_t(ar.dst)], ar.dashed);
  }
  // words through the pruned vertex evaluate to zero in every surviving rep
  auto remap_drop = [&](const WordSum& ws) {
    WordSum out;
    for (const auto& [w, c] : ws.t) {
      BoxWord nw;
      bool ok = true;
      for (int x : w.arrows) {
        if (amap[size_t(x)] < 0) {
          ok = false;
          break;
        }
        nw.arrows.push_back(amap[size_t(x)]);
      }
      if (ok) out = ws_add(out, ws_word(nw, c));
    }
    return out;
  };
  for (size_t a = 0; a < b.arrows.size(); ++a) {
    if (amap[a] < 0) continue;
    WordSum d = remap_drop(b.diff_of(int(a)));
    if (!d.is_zero()) nb.diff[amap[a]] = std::move(d);
  }
  for (const auto& r : b.relations) {
    WordSum nr = remap_drop(r);
    if (!nr.is_zero()) nb.relations.push_back(std::move(nr));
  }
  for (const auto& [mv, ml] : b.marked)
    if (mv != pv) nb.marked[vmap[size_t(mv)]] = MarkedLoop{amap[size_t(ml.arrow)], ml.f};
  validate_built_box(nb, "prune_vertex");

  ReductionStep st;
  st.kind = StepKind::Pruning;
  st.detail = "pruning: vertex '" + vertex + "' exceeds the dimension bound";
  st.recipe = StepRecipe{StepKind::Pruning, vertex, {}, 0};
  st.before = std::move(b);
  st.after = std::move(nb);
  st.image.resize(st.before.vertices.size());
  for (int v = 0; v < st.before.num_vertices(); ++v)
    if (v != pv) st.image[size_t(v)] = {VertexPart{vmap[size_t(v)], 1}};
  for (size_t a = 0; a < st.before.arrows.size(); ++a) {
    if (st.before.arrows[a].dashed || amap[a] < 0) continue;
    WSMat m(1, std::vector<WordSum>(1));
    m[0][0] = ws_word(BoxWord{{amap[a]}}, st.before.field.one());
    st.solid_image[int(a)] = std::move(m);
  }
  return st;
}

ReductionStep apply_recipe(const BoxPresentation& b, const StepRecipe& recipe) {
  auto need_arrow = [&]() {
    if (!b.arrow_id.count(recipe.target))
      fail(Err::SlicingMismatch, "replay target arrow '" + recipe.target + "' is missing");
  };
  switch (recipe.kind) {
    case StepKind::Regularization:
      need_arrow();
      return regularize(b, recipe.target);
    case StepKind::EdgeReduction:
      need_arrow();
      return reduce_edge(b, recipe.target);
    case StepKind::LoopReduction:
      need_arrow();
      return reduce_loop(b, recipe.target, recipe.lambda, recipe.jordan_bound);
    case StepKind::RelationDiagonalization: {
      auto it = b.vertex_id.find(recipe.target);
      if (it == b.vertex_id.end())
        fail(Err::SlicingMismatch, "replay target vertex '" + recipe.target + "' is missing");
      auto d = diagonalize_relations(b, it->second);
      if (!d.step) fail(Err::Internal, "replayed diagonalization did not change the box");
      return *d.step;
    }
    case StepKind::Pruning:
      if (!b.vertex_id.count(recipe.target))
        fail(Err::SlicingMismatch, "replay target vertex '" + recipe.target + "' is missing");
      return prune_vertex(b, recipe.target);
    case StepKind::Amalgamation:
      break;
  }
  fail(Err::Internal, "amalgamation recipes are replayed through their parts");
}

std::optional<ReductionStep> amalgamate(const BoxPresentation& b,
                                        const std::vector<ReductionStep>& lower_trace) {
  ReductionStep out;
  out.kind = StepKind::Amalgamation;
  out.recipe = StepRecipe{StepKind::Amalgamation, "", {}, 0};
  out.before = b;
  BoxPresentation cur = b;
  std::function<void(const std::vector<ReductionStep>&)> replay =
      [&](const std::vector<ReductionStep>& steps) {
        for (const auto& st : steps) {
          if (st.kind == StepKind::Amalgamation) {
            replay(st.parts);
            continue;
          }
          ReductionStep rs = apply_recipe(cur, st.recipe);
          cur = rs.after;
          out.parts.push_back(std::move(rs));
        }
      };
  replay(lower_trace);
  if (out.parts.empty()) return std::nullopt;
  out.after = cur;
  out.detail = "amalgamation: replayed " + std::to_string(out.parts.size()) + " lower step(s)";
  return out;
}

// ===========================================================================
// Wildness detection and two-parameter families

namespace {

std::vector<int> free_solid_loops_at(const BoxPresentation& b, int v) {
  std::vector<int> out;
  for (int a : b.solid_ids()) {
    const auto& ar = b.arrows[size_t(a)];
    if (ar.src == v && ar.dst == v && b.diff_of(a).is_zero()) out.push_back(a);
  }
  return out;
}

bool relation_inside(const BoxPresentation& b, const std::vector<int>& pattern) {
  std::set<int> ps(pattern.begin(), pattern.end());
  for (const auto& r : b.relations)
    for (const auto& [w, c] : r.t) {
      bool all = true;
      for (int l : w.arrows)
        if (!ps.count(l)) {
          all = false;
          break;
        }
      if (all) return true;
    }
  return false;
}

}  // namespace

std::optional<WildPattern> detect_wild_pattern(const BoxPresentation& b) {
  for (int v = 0; v < b.num_vertices(); ++v) {
    if (b.marked.count(v)) continue;
    auto loops = free_solid_loops_at(b, v);
    for (size_t i = 0; i < loops.size(); ++i)
      for (size_t j = i + 1; j < loops.size(); ++j) {
        std::vector<int> pat{loops[i], loops[j]};
        if (!relation_inside(b, pat)) return WildPattern{"two-loops", pat, {v}};
      }
  }
  for (int a : b.solid_ids()) {
    const auto& ar = b.arrows[size_t(a)];
    if (ar.src == ar.dst || !b.diff_of(a).is_zero()) continue;
    if (b.marked.count(ar.src) || b.marked.count(ar.dst)) continue;
    for (int w : {ar.dst, ar.src}) {
      for (int loop : free_solid_loops_at(b, w)) {
        std::vector<int> pat{a, loop};
        if (!relation_inside(b, pat)) return WildPattern{"edge-loop", pat, {ar.src, ar.dst}};
      }
    }
  }
  return std::nullopt;
}

BoxRep specialize_box_family(const BoxPresentation& b, const BoxTwoParamFamily& fam,
                             const Mat& X, const Mat& Y) {
  if (X.rows != X.cols || Y.rows != Y.cols || X.rows != Y.rows)
    fail(Err::PreconditionViolated, "parameter matrices must be square of equal size");
  int s = X.rows;
  if (s < 1) fail(Err::PreconditionViolated, "parameter matrices must be nonempty");
  if (int(fam.dim.size()) != b.num_vertices())
    fail(Err::PreconditionViolated, "family dimension vector does not match the box");
  BoxRep M;
  for (int v = 0; v < b.num_vertices(); ++v) M.dim.push_back(fam.dim[size_t(v)] * s);
  for (const auto& [a, am] : fam.m) {
    if (a < 0 || a >= int(b.arrows.size())) fail(Err::PreconditionViolated, "family arrow id");
    Mat v = am.eval(X, Y);
    if (!v.is_zero()) M.m[a] = std::move(v);
  }
  return M;
}

BoxRep specialize_box_one_param(const BoxPresentation& b, const BoxFamily& fam,
                                const Scalar& lambda) {
  if (fam.jordan < 1) fail(Err::PreconditionViolated, "Jordan size must be at least 1");
  if (!fam.denom.is_zero() && fam.denom.eval(lambda).is_zero())
    fail(Err::OutsideLocus,
         "parameter " + lambda.str() + " is excluded by " + fam.denom.str("t"));
  if (int(fam.dim.size()) != b.num_vertices())
    fail(Err::PreconditionViolated, "family dimension vector does not match the box");
  int m = fam.jordan;
  Mat J(b.field, m, m);
  for (int i = 0; i < m; ++i) {
    J.at(i, i) = lambda;
    if (i + 1 < m) J.at(i, i + 1) = b.field.one();
  }
  BoxRep M;
  M.dim = fam.dim;
  for (const auto& [a, pm] : fam.m) {
    if (a < 0 || a >= int(b.arrows.size())) fail(Err::PreconditionViolated, "family arrow id");
    Mat v = pm.eval_matrix(J);
    if (!v.is_zero()) M.m[a] = std::move(v);
  }
  return M;
}

// ===========================================================================
// Classification driver

namespace {

void bump_steps(int& used, int add, int max_steps) {
  used += add;
  if (used > max_steps)
    fail(Err::ResourceCeiling,
         "reduction exceeded the step ceiling of " + std::to_string(max_steps));
}

struct CanonicalRelation {
  int dst = -1;
  int beta = -1;  // -1: no loop involved
  int alpha = -1;
  Poly f;
};

// After a diagonalization sweep every relation reads f(beta)·alpha = 0.
CanonicalRelation canonical_shape(const BoxPresentation& b, const WordSum& r) {
  CanonicalRelation out;
  out.f = Poly(b.field);
  for (const auto& [w, c] : r.t) {
    int last = w.arrows.back();
    if (out.alpha < 0) out.alpha = last;
    if (last != out.alpha) fail(Err::Internal, "non-canonical relation after diagonalization");
    for (size_t k = 0; k + 1 < w.arrows.size(); ++k) {
      if (out.beta < 0) out.beta = w.arrows[k];
      if (w.arrows[k] != out.beta)
        fail(Err::Internal, "non-canonical relation after diagonalization");
    }
    int p = int(w.arrows.size()) - 1;
    std::vector<Scalar> mono(size_t(p) + 1, b.field.zero());
    mono[size_t(p)] = c;
    out.f = out.f + Poly(b.field, mono);
  }
  out.dst = b.word_dst(r.t.begin()->first);
  return out;
}

BoxTwoParamFamily wild_family_for(const BoxPresentation& b, const WildPattern& pat) {
  const Field& F = b.field;
  BoxTwoParamFamily fam;
  fam.dim.assign(size_t(b.num_vertices()), 0);
  if (pat.kind == "two-loops") {
    fam.dim[size_t(pat.vertices[0])] = 1;
    AffineMat mx(F, 1, 1), my(F, 1, 1);
    mx.cx.at(0, 0) = F.one();
    my.cy.at(0, 0) = F.one();
    fam.m.emplace(pat.arrows[0], std::move(mx));
    fam.m.emplace(pat.arrows[1], std::move(my));
    return fam;
  }
  int a = pat.arrows[0], loop = pat.arrows[1];
  const auto& ar = b.arrows[size_t(a)];
  int z = b.arrows[size_t(loop)].src;
  AffineMat mb(F, 2, 2);  // [[0, 1], [Y, X]]
  mb.c0.at(0, 1) = F.one();
  mb.cx.at(1, 1) = F.one();
  mb.cy.at(1, 0) = F.one();
  if (z == ar.dst) {
    fam.dim[size_t(ar.src)] = 1;
    fam.dim[size_t(ar.dst)] = 2;
    AffineMat ma(F, 2, 1);  // include into the second coordinate
    ma.c0.at(1, 0) = F.one();
    fam.m.emplace(a, std::move(ma));
  } else {
    fam.dim[size_t(ar.src)] = 2;
    fam.dim[size_t(ar.dst)] = 1;
    AffineMat ma(F, 1, 2);  // project onto the first coordinate
    ma.c0.at(0, 0) = F.one();
    fam.m.emplace(a, std::move(ma));
  }
  fam.m.emplace(loop, std::move(mb));
  return fam;
}

BoxTwoParamFamily pull_back_two_param(const ReductionStep& st, const BoxTwoParamFamily& fam) {
  BoxTwoParamFamily out;
  out.m = pull_back_map(st, fam.dim, fam.m, AffineMatOps{st.before.field}, &out.dim);
  return out;
}

struct PolyFam {
  std::vector<int> dim;  // size-one member dimensions
  std::map<int, PolyMat> m;
};

PolyFam pull_back_poly(const ReductionStep& st, const PolyFam& fam) {
  PolyFam out;
  out.m = pull_back_map(st, fam.dim, fam.m, PolyMatOps{st.before.field}, &out.dim);
  return out;
}

BoxClassification classify_impl(const BoxPresentation& b, const std::vector<int>& bound,
                                int max_steps) {
  BoxClassification out;
  BoxPresentation cur = b;
  std::vector<ReductionStep> trace;
  int used = 0;

  // induction on the slicing: classify the part below the top slice first,
  // then replay its reduction on the full box
  std::set<int> slices(cur.slice.begin(), cur.slice.end());
  if (slices.size() >= 2) {
    int top = *slices.rbegin();
    BoxPresentation low = restrict_below(b, top);
    std::vector<int> lbound;
    for (int v = 0; v < low.num_vertices(); ++v)
      lbound.push_back(bound[size_t(b.vertex_id.at(low.vertices[size_t(v)]))]);
    BoxClassification sub = classify_impl(low, lbound, max_steps);
    if (sub.wild) {
      out.wild = true;
      WildCertificate cert = std::move(*sub.certificate);
      BoxTwoParamFamily fam;
      fam.dim.assign(size_t(b.num_vertices()), 0);
      for (int v = 0; v < low.num_vertices(); ++v)
        fam.dim[size_t(b.vertex_id.at(low.vertices[size_t(v)]))] = cert.family.dim[size_t(v)];
      for (const auto& [a, am] : cert.family.m)
        fam.m.emplace(b.arrow_id.at(low.arrows[size_t(a)].name), am);
      cert.family = std::move(fam);
      out.certificate = std::move(cert);
      out.trace = std::move(sub.trace);
      return out;
    }
    if (auto amal = amalgamate(b, sub.trace)) {
      bump_steps(used, int(amal->parts.size()), max_steps);
      cur = amal->after;
      trace.push_back(std::move(*amal));
    }
  }

  // growth control: a vertex whose unit representation already pulls back
  // outside the bound can only support out-of-bound representations
  auto prune_sweep = [&]() {
    for (bool again = true; again;) {
      again = false;
      for (int v = 0; v < cur.num_vertices() && !again; ++v) {
        std::vector<int> e(size_t(cur.num_vertices()), 0);
        e[size_t(v)] = 1;
        for (auto it = trace.rbegin(); it != trace.rend(); ++it) e = dims_before(*it, e);
        for (int u = 0; u < b.num_vertices(); ++u)
          if (e[size_t(u)] > bound[size_t(u)]) {
            ReductionStep st = prune_vertex(cur, cur.vertices[size_t(v)]);
            bump_steps(used, 1, max_steps);
            cur = st.after;
            trace.push_back(std::move(st));
            again = true;
            break;
          }
      }
    }
  };

  for (int rounds = 0;; ++rounds) {
    if (rounds > 4 * max_steps + 16) fail(Err::Internal, "reduction loop failed to settle");
    bool acted = false;
    prune_sweep();

    // (a) canonicalize every relation via column reduction at its source
    for (int sv = 0; sv < cur.num_vertices(); ++sv) {
      bool has = false;
      for (const auto& r : cur.relations)
        if (cur.word_src(r.t.begin()->first) == sv) has = true;
      if (!has) continue;
      auto d = diagonalize_relations(cur, sv);
      if (d.step) {
        bump_steps(used, 1, max_steps);
        trace.push_back(std::move(*d.step));
        cur = std::move(d.box);
        acted = true;
      }
    }

    // (b) wild configuration?
    if (auto pat = detect_wild_pattern(cur)) {
      out.wild = true;
      WildCertificate cert;
      cert.pattern = *pat;
      cert.host = cur;
      BoxTwoParamFamily fam = wild_family_for(cur, *pat);
      for (auto it = trace.rbegin(); it != trace.rend(); ++it)
        fam = pull_back_two_param(*it, fam);
      cert.family = std::move(fam);
      cert.trace = trace;
      out.certificate = std::move(cert);
      out.trace = std::move(trace);
      return out;
    }

    // (c) consume the constraints at the lowest constrained target vertex
    if (!cur.relations.empty()) {
      std::map<int, std::vector<CanonicalRelation>> by_dst;
      for (const auto& r : cur.relations) {
        CanonicalRelation cr = canonical_shape(cur, r);
        by_dst[cr.dst].push_back(std::move(cr));
      }
      const auto& [bv, rels] = *by_dst.begin();
      int beta = -1;
      for (const auto& cr : rels)
        if (cr.beta >= 0) beta = cr.beta;
      if (beta < 0) fail(Err::Internal, "constant relation survived diagonalization");
      std::vector<Scalar> lam;
      for (const auto& cr : rels) {
        auto rd = cr.f.roots();
        if (!rd.residual.is_constant()) {
          std::string msg =
              "constraint " + cr.f.str("t") + " does not split over " + cur.field.str();
          if (auto wtn = rd.residual.irreducible_witness())
            msg += "; irreducible factor " + wtn->str("t");
          fail(Err::RootFieldTooSmall, msg);
        }
        for (const auto& [root, mult] : rd.roots) lam.push_back(root);
      }
      int dcap = 2;
      for (int x : bound) dcap = std::max(dcap, x);
      ReductionStep st = reduce_loop(cur, cur.arrows[size_t(beta)].name, lam, dcap);
      bump_steps(used, 1, max_steps);
      cur = st.after;
      trace.push_back(std::move(st));
      continue;
    }

    // (d) free reductions: regularization, then edge reduction
    {
      bool did = false;
      for (int a : cur.solid_ids()) {
        const auto& ar = cur.arrows[size_t(a)];
        const WordSum& da = cur.diff_of(a);
        bool single = false;
        for (const auto& [w, c] : da.t)
          if (w.arrows.size() == 1 && cur.arrows[size_t(w.arrows[0])].dashed) single = true;
        if (single) {
          ReductionStep st = regularize(cur, ar.name);
          bump_steps(used, 1, max_steps);
          cur = st.after;
          trace.push_back(std::move(st));
          did = true;
          break;
        }
        if (ar.src != ar.dst && da.is_zero()) {
          bool blocked = false;
          for (int s : cur.solid_ids()) {
            const auto& lr = cur.arrows[size_t(s)];
            if (lr.src == lr.dst && (lr.src == ar.src || lr.src == ar.dst) &&
                cur.diff_of(s).is_zero())
              blocked = true;
          }
          if (!blocked) {
            ReductionStep st = reduce_edge(cur, ar.name);
            bump_steps(used, 1, max_steps);
            cur = st.after;
            trace.push_back(std::move(st));
            did = true;
            break;
          }
        }
      }
      if (did) continue;
    }

    if (check_minimal(cur)) break;
    if (!acted) fail(Err::Internal, "stuck: no applicable reduction step");
  }

  // tame assembly: one atom per plain vertex, one one-parameter family per
  // loop vertex, pulled back through the trace
  MinimalBox mb = as_minimal_box(cur);
  std::map<std::vector<int>, BoxRankEntry> table;
  auto fits = [&](const std::vector<int>& d) {
    for (int v = 0; v < b.num_vertices(); ++v)
      if (d[size_t(v)] > bound[size_t(v)]) return false;
    return true;
  };
  for (int v = 0; v < cur.num_vertices(); ++v) {
    auto lit = mb.loop_at.find(v);
    if (lit == mb.loop_at.end()) {
      BoxRep rep;
      rep.dim.assign(size_t(cur.num_vertices()), 0);
      rep.dim[size_t(v)] = 1;
      for (auto it = trace.rbegin(); it != trace.rend(); ++it) rep = pull_back(*it, rep);
      if (!fits(rep.dim)) continue;
      auto& e = table[rep.dim];
      e.dim = rep.dim;
      e.indecomposables.push_back(std::move(rep));
    } else {
      PolyFam pf;
      pf.dim.assign(size_t(cur.num_vertices()), 0);
      pf.dim[size_t(v)] = 1;
      PolyMat t(cur.field, 1, 1);
      t.at(0, 0) = Poly::x(cur.field);
      pf.m.emplace(lit->second, std::move(t));
      for (auto it = trace.rbegin(); it != trace.rend(); ++it) pf = pull_back_poly(*it, pf);
      int tot = 0;
      for (int x : pf.dim) tot += x;
      if (tot == 0) fail(Err::Internal, "family with empty support");
      Poly denom = cur.marked.count(v) ? cur.marked.at(v).f : Poly(cur.field);
      for (int m = 1;; ++m) {
        std::vector<int> dm;
        for (int x : pf.dim) dm.push_back(x * m);
        if (!fits(dm)) break;
        BoxFamily bf;
        bf.dim = dm;
        bf.jordan = m;
        bf.m = pf.m;
        bf.denom = denom;
        auto& e = table[dm];
        e.dim = std::move(dm);
        e.families.push_back(std::move(bf));
      }
    }
  }
  for (auto& [d, e] : table) out.by_dim.push_back(std::move(e));
  out.trace = std::move(trace);
  out.minimal = std::move(mb);
  return out;
}

}  // namespace

BoxClassification classify(const BoxPresentation& b, const std::vector<int>& bound,
                           int max_steps) {
  if (auto bad = check_box(b)) fail(Err::Validation, *bad);
  if (auto bad = check_sliced(b)) fail(Err::PreconditionViolated, *bad);
  if (!check_triangular(b)) fail(Err::PreconditionViolated, "box is not triangular");
  if (int(bound.size()) != b.num_vertices())
    fail(Err::PreconditionViolated, "bound vector does not match the box");
  for (int x : bound)
    if (x < 0) fail(Err::PreconditionViolated, "negative bound entry");
  if (max_steps < 1) fail(Err::PreconditionViolated, "step ceiling must be positive");
  return classify_impl(b, bound, max_steps);
}

// ===========================================================================
// Algebra-level driver

RankBound parse_rank_bound(const std::string& text) {
  RankBound out;
  auto bad = [&](const std::string& why) {
    fail(Err::Parse, "rank bound '" + text + "': " + why);
  };
  if (text.rfind("total:", 0) == 0) {
    std::string rest = text.substr(6);
    size_t pos = 0;
    int n = 0;
    try {
      n = std::stoi(rest, &pos);
    } catch (const std::exception&) {
      bad("expected an integer after 'total:'");
    }
    if (pos != rest.size()) bad("trailing characters after the total");
    if (n < 1) bad("the total must be at least 1");
    out.total = n;
    return out;
  }
  if (text.rfind("explicit:", 0) == 0) {
    VectorRank vr;
    std::string rest = text.substr(9);
    if (rest.empty()) bad("empty explicit bound");
    size_t start = 0;
    while (start <= rest.size()) {
      size_t end = rest.find(';', start);
      std::string item =
          rest.substr(start, end == std::string::npos ? std::string::npos : end - start);
      start = end == std::string::npos ? rest.size() + 1 : end + 1;
      if (item.empty()) continue;
      size_t eq = item.find('=');
      if (eq == std::string::npos) bad("entry '" + item + "' lacks '='");
      int deg = 0;
      size_t pos = 0;
      try {
        deg = std::stoi(item.substr(0, eq), &pos);
      } catch (const std::exception&) {
        bad("bad degree in '" + item + "'");
      }
      if (pos != eq) bad("bad degree in '" + item + "'");
      if (vr.r.count(deg)) bad("degree " + std::to_string(deg) + " repeated");
      std::vector<int> row;
      std::string list = item.substr(eq + 1);
      size_t p = 0;
      while (p <= list.size()) {
        size_t q = list.find(',', p);
        std::string tok =
            list.substr(p, q == std::string::npos ? std::string::npos : q - p);
        p = q == std::string::npos ? list.size() + 1 : q + 1;
        if (tok.empty()) bad("empty rank in '" + item + "'");
        int val = 0;
        size_t used = 0;
        try {
          val = std::stoi(tok, &used);
        } catch (const std::exception&) {
          bad("bad rank '" + tok + "'");
        }
        if (used != tok.size()) bad("bad rank '" + tok + "'");
        if (val < 0) bad("ranks must be nonnegative");
        row.push_back(val);
      }
      if (row.empty()) bad("entry '" + item + "' lists no ranks");
      vr.r[deg] = std::move(row);
    }
    if (vr.r.empty()) bad("no degrees listed");
    out.ceiling = std::move(vr);
    return out;
  }
  bad("expected 'total:<n>' or 'explicit:<deg>=<r1>,<r2>,...;...'");
  return out;  // unreachable
}

namespace {

std::vector<int> rad_indices(const AlgebraBasis& A) {
  std::vector<int> out;
  for (int g = 0; g < A.dim_total(); ++g)
    if (A.path(g).degree >= 1) out.push_back(g);
  return out;
}

std::vector<int> offsets_of(const std::vector<int>& mult) {
  std::vector<int> off(mult.size() + 1, 0);
  for (size_t i = 0; i < mult.size(); ++i) off[i + 1] = off[i] + mult[i];
  return off;
}

std::vector<int> verts_of(const std::vector<int>& mult) {
  std::vector<int> out;
  for (size_t x = 0; x < mult.size(); ++x)
    for (int k = 0; k < mult[x]; ++k) out.push_back(int(x));
  return out;
}

FamilyComplex box_family_to_complex(const AlgebraBasis& A, LevelWindow w,
                                    const BoxPresentation& B, const BoxFamily& bf) {
  int nv = A.num_vertices();
  std::vector<int> dim1;
  for (int x : bf.dim) dim1.push_back(x / bf.jordan);
  FamilyComplex F;
  F.denom = bf.denom;
  int lo = w.n_max + 1, hi = w.n_min - 1;
  for (int n = w.n_min; n <= w.n_max; ++n)
    for (int x = 0; x < nv; ++x)
      if (dim1[size_t(box_vertex(A, w, x, n))] > 0) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
  if (lo > hi) fail(Err::Internal, "family with empty support window");
  F.nmin = lo;
  F.nmax = hi;
  for (int n = lo; n <= hi; ++n) {
    std::vector<int> m(size_t(nv), 0);
    for (int x = 0; x < nv; ++x) m[size_t(x)] = dim1[size_t(box_vertex(A, w, x, n))];
    F.mult[n] = std::move(m);
  }
  auto rad = rad_indices(A);
  for (int n = lo + 1; n <= hi; ++n) {
    const auto& rows = F.mult.at(n - 1);
    const auto& cols = F.mult.at(n);
    auto roff = offsets_of(rows), coff = offsets_of(cols);
    auto rvx = verts_of(rows), cvx = verts_of(cols);
    std::vector<std::vector<std::vector<AlgebraElement>>> dm(
        rvx.size(), std::vector<std::vector<AlgebraElement>>(cvx.size()));
    bool nonzero = false;
    for (int g : rad) {
      const auto& p = A.path(g);
      auto ait = B.arrow_id.find(solid_arrow_name(A, g, n));
      if (ait == B.arrow_id.end()) continue;
      auto mit = bf.m.find(ait->second);
      if (mit == bf.m.end()) continue;
      const PolyMat& block = mit->second;
      for (int r = 0; r < block.rows(); ++r)
        for (int c = 0; c < block.cols(); ++c) {
          const Poly& q = block.at(r, c);
          if (q.is_zero()) continue;
          auto& cell = dm[size_t(roff[size_t(p.dst)] + r)][size_t(coff[size_t(p.src)] + c)];
          for (int k = 0; k <= q.degree(); ++k) {
            Scalar sc = q.coeff(k);
            if (sc.is_zero()) continue;
            while (int(cell.size()) <= k)
              cell.push_back(A.zero(cvx[size_t(coff[size_t(p.src)] + c)],
                                    rvx[size_t(roff[size_t(p.dst)] + r)]));
            cell[size_t(k)] = A.add(cell[size_t(k)], A.scale(sc, A.from_basis(g)));
            nonzero = true;
          }
        }
    }
    if (nonzero) F.d[n] = std::move(dm);
  }
  return F;
}

TwoParamFamily box_two_param_to_complex(const AlgebraBasis& A, LevelWindow w,
                                        const BoxPresentation& B,
                                        const BoxTwoParamFamily& fam) {
  int nv = A.num_vertices();
  TwoParamFamily F;
  int lo = w.n_max + 1, hi = w.n_min - 1;
  for (int n = w.n_min; n <= w.n_max; ++n)
    for (int x = 0; x < nv; ++x)
      if (fam.dim[size_t(box_vertex(A, w, x, n))] > 0) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
  if (lo > hi) fail(Err::Internal, "wild family with empty support window");
  F.nmin = lo;
  F.nmax = hi;
  for (int n = lo; n <= hi; ++n) {
    std::vector<int> m(size_t(nv), 0);
    for (int x = 0; x < nv; ++x) m[size_t(x)] = fam.dim[size_t(box_vertex(A, w, x, n))];
    F.mult[n] = std::move(m);
  }
  auto rad = rad_indices(A);
  for (int n = lo + 1; n <= hi; ++n) {
    const auto& rows = F.mult.at(n - 1);
    const auto& cols = F.mult.at(n);
    auto roff = offsets_of(rows), coff = offsets_of(cols);
    auto rvx = verts_of(rows), cvx = verts_of(cols);
    std::vector<std::vector<TwoParamEntry>> dm(rvx.size(),
                                               std::vector<TwoParamEntry>(cvx.size()));
    for (size_t i = 0; i < rvx.size(); ++i)
      for (size_t j = 0; j < cvx.size(); ++j)
        dm[i][j] = TwoParamEntry{A.zero(cvx[j], rvx[i]), A.zero(cvx[j], rvx[i]),
                                 A.zero(cvx[j], rvx[i])};
    bool nonzero = false;
    for (int g : rad) {
      const auto& p = A.path(g);
      auto ait = B.arrow_id.find(solid_arrow_name(A, g, n));
      if (ait == B.arrow_id.end()) continue;
      auto mit = fam.m.find(ait->second);
      if (mit == fam.m.end()) continue;
      const AffineMat& am = mit->second;
      for (int r = 0; r < am.rows(); ++r)
        for (int c = 0; c < am.cols(); ++c) {
          auto& cell = dm[size_t(roff[size_t(p.dst)] + r)][size_t(coff[size_t(p.src)] + c)];
          auto put = [&](AlgebraElement& e, const Scalar& sc) {
            if (sc.is_zero()) return;
            e = A.add(e, A.scale(sc, A.from_basis(g)));
            nonzero = true;
          };
          put(cell.c0, am.c0.at(r, c));
          put(cell.cx, am.cx.at(r, c));
          put(cell.cy, am.cy.at(r, c));
        }
    }
    if (nonzero) F.d[n] = std::move(dm);
  }
  return F;
}

}  // namespace

AlgebraClassification classify_algebra(const AlgebraBasis& a, const RankBound& bound,
                                       int max_steps) {
  AlgebraClassification out;
  LevelWindow w{};
  if (bound.total >= 0) {
    if (bound.total < 1) fail(Err::PreconditionViolated, "total rank bound must be at least 1");
    w.n_min = 0;
    w.n_max = bound.total - 1;
  } else if (bound.ceiling) {
    const auto& r = bound.ceiling->r;
    if (r.empty()) fail(Err::PreconditionViolated, "explicit rank bound is empty");
    for (const auto& [n, row] : r) {
      if (int(row.size()) != a.num_vertices())
        fail(Err::PreconditionViolated,
             "rank bound at degree " + std::to_string(n) + " has the wrong length");
      for (int x : row)
        if (x < 0) fail(Err::PreconditionViolated, "negative rank bound entry");
    }
    w.n_min = r.begin()->first;
    w.n_max = r.rbegin()->first;
  } else {
    fail(Err::PreconditionViolated, "no rank bound given");
  }
  out.window = w;

  BoxPresentation B = build_box(a, w);
  std::vector<int> vbound(size_t(B.num_vertices()), 0);
  for (int n = w.n_min; n <= w.n_max; ++n)
    for (int x = 0; x < a.num_vertices(); ++x) {
      int bv = box_vertex(a, w, x, n);
      if (bound.total >= 0) {
        vbound[size_t(bv)] = bound.total;
      } else {
        auto it = bound.ceiling->r.find(n);
        vbound[size_t(bv)] = it == bound.ceiling->r.end() ? 0 : it->second[size_t(x)];
      }
    }

  BoxClassification bc = classify(B, vbound, max_steps);
  out.wild = bc.wild;
  if (bc.wild) {
    out.trace = std::move(bc.trace);
    out.certificate = std::move(bc.certificate);
    out.family = box_two_param_to_complex(a, w, B, out.certificate->family);
    return out;
  }

  std::map<VectorRank, RankEntry> table;
  for (auto& e : bc.by_dim) {
    VectorRank vr;
    for (int n = w.n_min; n <= w.n_max; ++n) {
      std::vector<int> row(size_t(a.num_vertices()), 0);
      bool nz = false;
      for (int x = 0; x < a.num_vertices(); ++x) {
        row[size_t(x)] = e.dim[size_t(box_vertex(a, w, x, n))];
        if (row[size_t(x)] > 0) nz = true;
      }
      if (nz) vr.r[n] = std::move(row);
    }
    if (bound.total >= 0 && vr.total() > bound.total) continue;
    auto& re = table[vr];
    re.rank = vr;
    for (auto& rep : e.indecomposables) re.indecomposables.push_back(rep_to_complex(a, w, rep));
    for (auto& bf : e.families)
      re.families.push_back(RankFamily{box_family_to_complex(a, w, B, bf), bf.jordan});
  }
  out.trace = std::move(bc.trace);
  for (auto& [k, v] : table) out.ranks.push_back(std::move(v));
  return out;
}

}  // namespace derbox
