#include "derbox/box.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "derbox/linsys.hpp"
#include "derbox/textutil.hpp"

namespace derbox {

namespace {

using textutil::kNumberRe;
using textutil::signed_terms;
using textutil::split_star;
using textutil::split_ws;
using textutil::strip_comment;

void ws_acc(WordSum& s, const BoxWord& w, const Scalar& c) {
  if (c.is_zero()) return;
  auto it = s.t.find(w);
  if (it == s.t.end()) {
    s.t.emplace(w, c);
  } else {
    it->second = it->second + c;
    if (it->second.is_zero()) s.t.erase(it);
  }
}

}  // namespace

int BoxPresentation::add_vertex(const std::string& name, int s) {
  if (vertex_id.count(name)) fail(Err::Parse, "duplicate box vertex '" + name + "'");
  int id = int(vertices.size());
  vertices.push_back(name);
  vertex_id[name] = id;
  slice.push_back(s);
  return id;
}

int BoxPresentation::add_arrow(const std::string& name, int src, int dst, bool dashed) {
  if (arrow_id.count(name)) fail(Err::Parse, "duplicate box arrow '" + name + "'");
  if (src < 0 || src >= num_vertices() || dst < 0 || dst >= num_vertices())
    fail(Err::Parse, "arrow '" + name + "' references an unknown vertex");
  int id = int(arrows.size());
  arrows.push_back(BoxArrow{name, src, dst, dashed});
  arrow_id[name] = id;
  return id;
}

int BoxPresentation::word_src(const BoxWord& w) const {
  if (w.arrows.empty()) fail(Err::PreconditionViolated, "empty word has no endpoints");
  return arrows[size_t(w.arrows.back())].src;
}

int BoxPresentation::word_dst(const BoxWord& w) const {
  if (w.arrows.empty()) fail(Err::PreconditionViolated, "empty word has no endpoints");
  return arrows[size_t(w.arrows.front())].dst;
}

int BoxPresentation::dashed_degree(const BoxWord& w) const {
  int k = 0;
  for (int a : w.arrows) k += arrows[size_t(a)].dashed ? 1 : 0;
  return k;
}

std::vector<int> BoxPresentation::solid_ids() const {
  std::vector<int> out;
  for (size_t i = 0; i < arrows.size(); ++i)
    if (!arrows[i].dashed) out.push_back(int(i));
  return out;
}

std::vector<int> BoxPresentation::dashed_ids() const {
  std::vector<int> out;
  for (size_t i = 0; i < arrows.size(); ++i)
    if (arrows[i].dashed) out.push_back(int(i));
  return out;
}

const WordSum& BoxPresentation::diff_of(int arrow) const {
  static const WordSum kZero{};
  auto it = diff.find(arrow);
  return it == diff.end() ? kZero : it->second;
}

WordSum ws_word(const BoxWord& w, const Scalar& c) {
  WordSum s;
  ws_acc(s, w, c);
  return s;
}

WordSum ws_add(const WordSum& a, const WordSum& b) {
  WordSum s = a;
  for (auto& [w, c] : b.t) ws_acc(s, w, c);
  return s;
}

WordSum ws_scale(const Scalar& c, const WordSum& a) {
  WordSum s;
  for (auto& [w, cc] : a.t) ws_acc(s, w, c * cc);
  return s;
}

WordSum ws_mul(const BoxPresentation& B, const WordSum& a, const WordSum& b) {
  WordSum s;
  for (auto& [wa, ca] : a.t)
    for (auto& [wb, cb] : b.t) {
      if (B.word_src(wa) != B.word_dst(wb))
        fail(Err::EndpointMismatch, "word composition endpoint mismatch");
      BoxWord w;
      w.arrows = wa.arrows;
      w.arrows.insert(w.arrows.end(), wb.arrows.begin(), wb.arrows.end());
      ws_acc(s, w, ca * cb);
    }
  return s;
}

std::string word_str(const BoxPresentation& B, const BoxWord& w) {
  std::string s;
  for (size_t i = 0; i < w.arrows.size(); ++i) {
    if (i) s += "*";
    s += B.arrows[size_t(w.arrows[i])].name;
  }
  return s;
}

std::string wordsum_str(const BoxPresentation& B, const WordSum& s) {
  if (s.t.empty()) return "0";
  std::string out;
  bool first = true;
  for (auto& [w, c] : s.t) {
    Scalar cc = c;
    bool neg = B.field.is_rational() && cc.rational() < 0;
    if (first) {
      if (neg) {
        out += "-";
        cc = -cc;
      }
    } else {
      out += neg ? " - " : " + ";
      if (neg) cc = -cc;
    }
    first = false;
    if (cc.is_one())
      out += word_str(B, w);
    else
      out += cc.str() + "*" + word_str(B, w);
  }
  return out;
}

WordSum parse_wordsum(const BoxPresentation& B, const std::string& text) {
  auto toks = split_ws(text);
  WordSum out;
  if (toks.size() == 1 && toks[0] == "0") return out;
  auto terms = signed_terms(toks, 0);
  if (terms.empty()) fail(Err::Parse, "empty word expression");
  for (auto& [sign, body] : terms) {
    auto chunks = split_star(body);
    Scalar coeff = B.field.from_int(sign);
    size_t idx = 0;
    if (std::regex_match(chunks[0], kNumberRe)) {
      coeff = coeff * parse_scalar(B.field, chunks[0]);
      idx = 1;
    }
    if (idx >= chunks.size()) fail(Err::Parse, "scalar-only term in word sum '" + text + "'");
    BoxWord w;
    for (size_t i = idx; i < chunks.size(); ++i) {
      auto it = B.arrow_id.find(chunks[i]);
      if (it == B.arrow_id.end()) fail(Err::Parse, "unknown box arrow '" + chunks[i] + "'");
      w.arrows.push_back(it->second);
    }
    for (size_t i = 0; i + 1 < w.arrows.size(); ++i)
      if (B.arrows[size_t(w.arrows[i])].src != B.arrows[size_t(w.arrows[i + 1])].dst)
        fail(Err::Parse, "arrows do not compose in '" + body + "'");
    ws_acc(out, w, coeff);
  }
  return out;
}

// ---------- validators ----------

std::optional<std::string> check_box(const BoxPresentation& B) {
  int nv = B.num_vertices();
  if (int(B.slice.size()) != nv) return "slice table size mismatch";
  if (B.vertex_id.size() != size_t(nv)) return "vertex name table size mismatch";
  for (int v = 0; v < nv; ++v) {
    auto it = B.vertex_id.find(B.vertices[size_t(v)]);
    if (it == B.vertex_id.end() || it->second != v)
      return "vertex name table inconsistent at '" + B.vertices[size_t(v)] + "'";
  }
  if (B.arrow_id.size() != B.arrows.size()) return "arrow name table size mismatch";
  for (size_t i = 0; i < B.arrows.size(); ++i) {
    const auto& a = B.arrows[i];
    if (a.src < 0 || a.src >= nv || a.dst < 0 || a.dst >= nv)
      return "arrow '" + a.name + "' has out-of-range endpoints";
    auto it = B.arrow_id.find(a.name);
    if (it == B.arrow_id.end() || it->second != int(i))
      return "arrow name table inconsistent at '" + a.name + "'";
  }
  auto word_ok = [&](const BoxWord& w) -> std::optional<std::string> {
    if (w.arrows.empty()) return "empty word";
    for (int id : w.arrows)
      if (id < 0 || id >= int(B.arrows.size())) return "word references an unknown arrow";
    for (size_t i = 0; i + 1 < w.arrows.size(); ++i)
      if (B.arrows[size_t(w.arrows[i])].src != B.arrows[size_t(w.arrows[i + 1])].dst)
        return "non-composable word " + word_str(B, w);
    return std::nullopt;
  };
  for (auto& [id, ws] : B.diff) {
    if (id < 0 || id >= int(B.arrows.size())) return "differential of an unknown arrow";
    const auto& a = B.arrows[size_t(id)];
    int want = a.dashed ? 2 : 1;
    for (auto& [w, c] : ws.t) {
      if (auto bad = word_ok(w)) return "d " + a.name + ": " + *bad;
      if (c.is_zero()) return "d " + a.name + ": stored zero coefficient";
      if (B.word_src(w) != a.src || B.word_dst(w) != a.dst)
        return "d " + a.name + ": word " + word_str(B, w) + " has wrong endpoints";
      if (B.dashed_degree(w) != want)
        return "d " + a.name + ": word " + word_str(B, w) + " has dashed-degree " +
               std::to_string(B.dashed_degree(w)) + ", want " + std::to_string(want);
    }
  }
  for (size_t r = 0; r < B.relations.size(); ++r) {
    const auto& ws = B.relations[r];
    if (ws.is_zero()) return "relation " + std::to_string(r) + " is zero";
    int rs = -1, rd = -1;
    for (auto& [w, c] : ws.t) {
      if (auto bad = word_ok(w)) return "relation " + std::to_string(r) + ": " + *bad;
      if (B.dashed_degree(w) != 0)
        return "relation " + std::to_string(r) + " contains a dashed arrow";
      if (int(w.arrows.size()) < 2)
        return "relation " + std::to_string(r) + " has a word of length < 2";
      if (rs < 0) {
        rs = B.word_src(w);
        rd = B.word_dst(w);
      } else if (B.word_src(w) != rs || B.word_dst(w) != rd) {
        return "relation " + std::to_string(r) + " mixes endpoints";
      }
    }
  }
  for (auto& [v, ml] : B.marked) {
    if (v < 0 || v >= nv) return "marked loop at an unknown vertex";
    if (ml.arrow < 0 || ml.arrow >= int(B.arrows.size()))
      return "marked loop names an unknown arrow";
    const auto& a = B.arrows[size_t(ml.arrow)];
    if (a.dashed || a.src != v || a.dst != v)
      return "marked loop arrow '" + a.name + "' is not a solid loop at its vertex";
    if (ml.f.is_zero()) return "marked polynomial at '" + B.vertices[size_t(v)] + "' is zero";
  }
  return std::nullopt;
}

std::optional<std::string> check_sliced(const BoxPresentation& B) {
  for (const auto& a : B.arrows) {
    if (a.dashed) {
      if (B.slice[size_t(a.src)] != B.slice[size_t(a.dst)])
        return "dashed arrow '" + a.name + "' crosses slices";
    } else {
      if (B.slice[size_t(a.dst)] >= B.slice[size_t(a.src)])
        return "solid arrow '" + a.name + "' does not drop the slicing";
    }
  }
  return std::nullopt;
}

std::optional<HeightFunction> check_triangular(const BoxPresentation& B) {
  int n = int(B.arrows.size());
  HeightFunction hf;
  hf.h.assign(size_t(n), 0);
  std::vector<int> state(size_t(n), 0);  // 0 new, 1 active, 2 done
  std::function<bool(int)> dfs = [&](int a) -> bool {
    if (state[size_t(a)] == 1) return false;
    if (state[size_t(a)] == 2) return true;
    state[size_t(a)] = 1;
    int hh = 0;
    for (auto& [w, c] : B.diff_of(a).t)
      for (int dep : w.arrows) {
        if (!dfs(dep)) return false;
        hh = std::max(hh, hf.h[size_t(dep)] + 1);
      }
    hf.h[size_t(a)] = hh;
    state[size_t(a)] = 2;
    return true;
  };
  for (int a = 0; a < n; ++a)
    if (!dfs(a)) return std::nullopt;
  return hf;
}

namespace {

struct PathInfo {
  std::vector<int> path;
  int src = -1, dst = -1;
};

// all solid paths of length 0..maxlen (length 0 = one empty path per vertex)
std::vector<std::vector<PathInfo>> solid_paths_up_to(const BoxPresentation& B, int maxlen) {
  std::vector<std::vector<PathInfo>> by_len(size_t(maxlen) + 1);
  for (int v = 0; v < B.num_vertices(); ++v) by_len[0].push_back(PathInfo{{}, v, v});
  for (int len = 1; len <= maxlen; ++len) {
    for (const auto& p : by_len[size_t(len - 1)])
      for (int a : B.solid_ids()) {
        const auto& ar = B.arrows[size_t(a)];
        if (ar.dst != p.src) continue;
        PathInfo q;
        q.path = p.path;
        q.path.push_back(a);
        q.src = ar.src;
        q.dst = (len == 1) ? ar.dst : p.dst;
        by_len[size_t(len)].push_back(std::move(q));
      }
  }
  return by_len;
}

// the differential of a solid word sum via the Leibniz rule (no signs in
// dashed-degree zero)
WordSum diff_wordsum(const BoxPresentation& B, const WordSum& s) {
  WordSum out;
  for (auto& [w, c] : s.t) {
    for (size_t i = 0; i < w.arrows.size(); ++i) {
      for (auto& [dw, dc] : B.diff_of(w.arrows[i]).t) {
        BoxWord nw;
        nw.arrows.insert(nw.arrows.end(), w.arrows.begin(), w.arrows.begin() + long(i));
        nw.arrows.insert(nw.arrows.end(), dw.arrows.begin(), dw.arrows.end());
        nw.arrows.insert(nw.arrows.end(), w.arrows.begin() + long(i) + 1, w.arrows.end());
        ws_acc(out, nw, c * dc);
      }
    }
  }
  return out;
}

}  // namespace

std::optional<std::string> check_ideal_compatibility(const BoxPresentation& B) {
  if (auto bad = check_box(B)) return bad;
  for (size_t ri = 0; ri < B.relations.size(); ++ri) {
    const WordSum& r = B.relations[ri];
    WordSum dr = diff_wordsum(B, r);
    if (dr.is_zero()) continue;
    int rsrc = B.word_src(r.t.begin()->first);
    int rdst = B.word_dst(r.t.begin()->first);
    int maxlen = 0;
    for (auto& [w, c] : dr.t) maxlen = std::max(maxlen, int(w.arrows.size()));
    auto by_len = solid_paths_up_to(B, maxlen);

    std::vector<WordSum> cands;
    std::set<std::map<BoxWord, Scalar>> seen;
    auto push_candidate = [&](const std::vector<int>& pre, const WordSum& g,
                              const std::vector<int>& post) {
      WordSum cand;
      for (auto& [gw, gc] : g.t) {
        BoxWord w;
        w.arrows = pre;
        w.arrows.insert(w.arrows.end(), gw.arrows.begin(), gw.arrows.end());
        w.arrows.insert(w.arrows.end(), post.begin(), post.end());
        ws_acc(cand, w, gc);
      }
      if (!cand.is_zero() && seen.insert(cand.t).second) cands.push_back(std::move(cand));
    };

    for (const auto& g : B.relations) {
      int gsrc = B.word_src(g.t.begin()->first);
      int gdst = B.word_dst(g.t.begin()->first);
      int glen = int(g.t.begin()->first.arrows.size());
      int rem = maxlen - glen - 1;
      if (rem < 0) continue;
      for (int phi : B.dashed_ids()) {
        const auto& ph = B.arrows[size_t(phi)];
        for (int lp = 0; lp <= rem; ++lp)
          for (int lq = 0; lp + lq <= rem; ++lq) {
            int ly = rem - lp - lq;
            // I on the left of the dashed factor: p g q phi y
            for (const auto& p : by_len[size_t(lp)]) {
              if (p.dst != rdst || p.src != gdst) continue;
              for (const auto& q : by_len[size_t(lq)]) {
                if (q.dst != gsrc || q.src != ph.dst) continue;
                for (const auto& y : by_len[size_t(ly)]) {
                  if (y.dst != ph.src || y.src != rsrc) continue;
                  std::vector<int> post = q.path;
                  post.push_back(phi);
                  post.insert(post.end(), y.path.begin(), y.path.end());
                  push_candidate(p.path, g, post);
                }
              }
            }
            // I on the right of the dashed factor: p phi q g y
            for (const auto& p : by_len[size_t(lp)]) {
              if (p.dst != rdst || p.src != ph.dst) continue;
              for (const auto& q : by_len[size_t(lq)]) {
                if (q.dst != ph.src || q.src != gdst) continue;
                for (const auto& y : by_len[size_t(ly)]) {
                  if (y.dst != gsrc || y.src != rsrc) continue;
                  std::vector<int> pre = p.path;
                  pre.push_back(phi);
                  pre.insert(pre.end(), q.path.begin(), q.path.end());
                  push_candidate(pre, g, y.path);
                }
              }
            }
            if (cands.size() > 50000)
              fail(Err::ResourceCeiling, "ideal-compatibility candidate set too large");
          }
      }
    }

    // membership: dr in span(cands)?
    std::map<BoxWord, int> word_index;
    auto index_of = [&](const BoxWord& w) {
      auto it = word_index.find(w);
      if (it != word_index.end()) return it->second;
      int id = int(word_index.size());
      word_index.emplace(w, id);
      return id;
    };
    for (auto& cand : cands)
      for (auto& [w, c] : cand.t) index_of(w);
    for (auto& [w, c] : dr.t) index_of(w);

    if (double(word_index.size()) * double(cands.size()) > 4e6)
      fail(Err::ResourceCeiling, "ideal-compatibility system too large");
    Mat m(B.field, int(word_index.size()), int(cands.size()));
    for (size_t j = 0; j < cands.size(); ++j)
      for (auto& [w, c] : cands[j].t) m.at(index_of(w), int(j)) += c;
    std::vector<Scalar> rhs(size_t(word_index.size()), B.field.zero());
    for (auto& [w, c] : dr.t) rhs[size_t(index_of(w))] = c;
    if (!m.solve(rhs).has_value())
      return "relation " + std::to_string(ri) + ": differential escapes I.V + V.I";
  }
  return std::nullopt;
}

// ---------- representations ----------

BoxRep zero_rep(const BoxPresentation& B, const std::vector<int>& dim) {
  if (int(dim.size()) != B.num_vertices())
    fail(Err::PreconditionViolated, "dimension vector length mismatch");
  BoxRep M;
  M.dim = dim;
  return M;
}

std::optional<std::string> check_rep(const BoxPresentation& B, const BoxRep& M) {
  if (int(M.dim.size()) != B.num_vertices()) return "dimension vector length mismatch";
  for (int d : M.dim)
    if (d < 0) return "negative dimension";
  for (auto& [id, mat] : M.m) {
    if (id < 0 || id >= int(B.arrows.size())) return "matrix for an unknown arrow";
    const auto& a = B.arrows[size_t(id)];
    if (a.dashed) return "matrix assigned to dashed arrow '" + a.name + "'";
    if (mat.rows != M.dim[size_t(a.dst)] || mat.cols != M.dim[size_t(a.src)])
      return "matrix shape mismatch at '" + a.name + "'";
  }
  return std::nullopt;
}

Mat rep_matrix(const BoxPresentation& B, const BoxRep& M, int arrow) {
  const auto& a = B.arrows[size_t(arrow)];
  if (a.dashed) fail(Err::PreconditionViolated, "dashed arrows carry no representation matrix");
  auto it = M.m.find(arrow);
  if (it != M.m.end()) return it->second;
  return Mat(B.field, M.dim[size_t(a.dst)], M.dim[size_t(a.src)]);
}

Mat eval_solid_path(const BoxPresentation& B, const BoxRep& M, const std::vector<int>& path,
                    int src, int dst) {
  if (path.empty()) {
    if (src != dst) fail(Err::Internal, "empty path with distinct endpoints");
    return Mat::identity(B.field, M.dim[size_t(src)]);
  }
  if (B.arrows[size_t(path.back())].src != src || B.arrows[size_t(path.front())].dst != dst)
    fail(Err::Internal, "path endpoints disagree with the requested ones");
  Mat acc = rep_matrix(B, M, path[0]);
  for (size_t i = 1; i < path.size(); ++i) acc = acc * rep_matrix(B, M, path[i]);
  return acc;
}

bool rep_satisfies_relations(const BoxPresentation& B, const BoxRep& M) {
  for (const auto& r : B.relations) {
    if (r.is_zero()) continue;
    int src = B.word_src(r.t.begin()->first);
    int dst = B.word_dst(r.t.begin()->first);
    Mat acc(B.field, M.dim[size_t(dst)], M.dim[size_t(src)]);
    for (auto& [w, c] : r.t) acc = acc + eval_solid_path(B, M, w.arrows, src, dst) * c;
    if (!acc.is_zero()) return false;
  }
  return true;
}

bool rep_satisfies_marked(const BoxPresentation& B, const BoxRep& M) {
  for (auto& [v, ml] : B.marked) {
    if (M.dim[size_t(v)] == 0) continue;
    Mat val = ml.f.eval_matrix(rep_matrix(B, M, ml.arrow));
    if (!val.inverse().has_value()) return false;
  }
  return true;
}

// ---------- morphisms ----------

std::vector<SolidConstraint> morphism_constraints(const BoxPresentation& B) {
  std::vector<SolidConstraint> out;
  for (int a : B.solid_ids()) {
    SolidConstraint sc;
    sc.arrow = a;
    for (auto& [w, c] : B.diff_of(a).t) {
      SolidConstraint::Term t;
      t.c = c;
      int seen = -1;
      for (size_t i = 0; i < w.arrows.size(); ++i) {
        int id = w.arrows[i];
        if (B.arrows[size_t(id)].dashed) {
          if (seen >= 0) fail(Err::Internal, "solid differential with two dashed factors");
          seen = int(i);
          t.dashed = id;
        } else if (seen < 0) {
          t.left.push_back(id);
        } else {
          t.right.push_back(id);
        }
      }
      if (seen < 0) fail(Err::Internal, "solid differential word without a dashed factor");
      sc.terms.push_back(std::move(t));
    }
    out.push_back(std::move(sc));
  }
  return out;
}

namespace {

Mat phi_of(const BoxPresentation& B, const BoxMorphism& f, const BoxRep& M, const BoxRep& N,
           int dashed) {
  auto it = f.phi.find(dashed);
  if (it != f.phi.end()) return it->second;
  const auto& a = B.arrows[size_t(dashed)];
  return Mat(B.field, N.dim[size_t(a.dst)], M.dim[size_t(a.src)]);
}

// split a dashed-degree-2 word into L b Mid g R
struct DashedSplit {
  std::vector<int> left, mid, right;
  int beta = -1, gamma = -1;
};

DashedSplit split_two_dashed(const BoxPresentation& B, const BoxWord& w) {
  DashedSplit s;
  int seen = 0;
  for (int id : w.arrows) {
    if (B.arrows[size_t(id)].dashed) {
      ++seen;
      if (seen == 1)
        s.beta = id;
      else if (seen == 2)
        s.gamma = id;
      else
        fail(Err::Internal, "dashed differential with more than two dashed factors");
    } else if (seen == 0) {
      s.left.push_back(id);
    } else if (seen == 1) {
      s.mid.push_back(id);
    } else {
      s.right.push_back(id);
    }
  }
  if (seen != 2) fail(Err::Internal, "dashed differential word without two dashed factors");
  return s;
}

}  // namespace

BoxMorphism identity_box_morphism(const BoxPresentation& B, const BoxRep& M) {
  BoxMorphism f;
  for (int v = 0; v < B.num_vertices(); ++v)
    f.omega.push_back(Mat::identity(B.field, M.dim[size_t(v)]));
  return f;
}

BoxMorphism zero_box_morphism(const BoxPresentation& B, const BoxRep& M, const BoxRep& N) {
  BoxMorphism f;
  for (int v = 0; v < B.num_vertices(); ++v)
    f.omega.push_back(Mat(B.field, N.dim[size_t(v)], M.dim[size_t(v)]));
  return f;
}

bool is_box_morphism(const BoxPresentation& B, const BoxRep& M, const BoxRep& N,
                     const BoxMorphism& f) {
  if (int(f.omega.size()) != B.num_vertices()) return false;
  for (int v = 0; v < B.num_vertices(); ++v)
    if (f.omega[size_t(v)].rows != N.dim[size_t(v)] || f.omega[size_t(v)].cols != M.dim[size_t(v)])
      return false;
  for (const auto& sc : morphism_constraints(B)) {
    const auto& a = B.arrows[size_t(sc.arrow)];
    Mat lhs = rep_matrix(B, N, sc.arrow) * f.omega[size_t(a.src)] -
              f.omega[size_t(a.dst)] * rep_matrix(B, M, sc.arrow);
    Mat rhs(B.field, N.dim[size_t(a.dst)], M.dim[size_t(a.src)]);
    for (const auto& t : sc.terms) {
      const auto& ph = B.arrows[size_t(t.dashed)];
      Mat L = eval_solid_path(B, N, t.left, ph.dst, a.dst);
      Mat R = eval_solid_path(B, M, t.right, a.src, ph.src);
      rhs = rhs + L * phi_of(B, f, M, N, t.dashed) * R * t.c;
    }
    if (!(lhs == rhs)) return false;
  }
  return true;
}

std::vector<BoxMorphism> hom_box_morphisms(const BoxPresentation& B, const BoxRep& M,
                                           const BoxRep& N) {
  LinSystem sys(B.field);
  std::vector<int> obase(size_t(B.num_vertices()), -1);
  for (int v = 0; v < B.num_vertices(); ++v)
    obase[size_t(v)] = sys.add_vars(N.dim[size_t(v)] * M.dim[size_t(v)]);
  std::map<int, int> pbase;
  for (int d : B.dashed_ids()) {
    const auto& a = B.arrows[size_t(d)];
    pbase[d] = sys.add_vars(N.dim[size_t(a.dst)] * M.dim[size_t(a.src)]);
  }
  auto ovar = [&](int v, int r, int c) { return obase[size_t(v)] + r * M.dim[size_t(v)] + c; };
  auto pvar = [&](int d, int r, int c) {
    return pbase.at(d) + r * M.dim[size_t(B.arrows[size_t(d)].src)] + c;
  };

  for (const auto& sc : morphism_constraints(B)) {
    const auto& a = B.arrows[size_t(sc.arrow)];
    Mat Na = rep_matrix(B, N, sc.arrow);
    Mat Ma = rep_matrix(B, M, sc.arrow);
    int rows = N.dim[size_t(a.dst)], cols = M.dim[size_t(a.src)];
    struct TermMats {
      Mat L, R;
      int dashed;
      Scalar c;
    };
    std::vector<TermMats> tm;
    for (const auto& t : sc.terms) {
      const auto& ph = B.arrows[size_t(t.dashed)];
      tm.push_back(TermMats{eval_solid_path(B, N, t.left, ph.dst, a.dst),
                            eval_solid_path(B, M, t.right, a.src, ph.src), t.dashed, t.c});
    }
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        std::map<int, Scalar> row;
        // N(a) . omega_src at (r,c)
        for (int k = 0; k < N.dim[size_t(a.src)]; ++k)
          acc_row(row, ovar(a.src, k, c), Na.at(r, k));
        // - omega_dst . M(a)
        for (int k = 0; k < M.dim[size_t(a.dst)]; ++k)
          acc_row(row, ovar(a.dst, r, k), -Ma.at(k, c));
        // - sum c . L phi R
        for (const auto& t : tm) {
          const auto& ph = B.arrows[size_t(t.dashed)];
          for (int u = 0; u < N.dim[size_t(ph.dst)]; ++u)
            for (int w = 0; w < M.dim[size_t(ph.src)]; ++w)
              acc_row(row, pvar(t.dashed, u, w), -(t.c * t.L.at(r, u) * t.R.at(w, c)));
        }
        sys.add_row(std::move(row), B.field.zero());
      }
  }

  auto sol = sys.solve();
  if (!sol) fail(Err::Internal, "homogeneous system reported inconsistent");
  std::vector<BoxMorphism> out;
  for (const auto& vec : sol->second) {
    BoxMorphism f;
    for (int v = 0; v < B.num_vertices(); ++v) {
      Mat o(B.field, N.dim[size_t(v)], M.dim[size_t(v)]);
      for (int r = 0; r < o.rows; ++r)
        for (int c = 0; c < o.cols; ++c) o.at(r, c) = vec[size_t(ovar(v, r, c))];
      f.omega.push_back(std::move(o));
    }
    for (int d : B.dashed_ids()) {
      const auto& a = B.arrows[size_t(d)];
      Mat p(B.field, N.dim[size_t(a.dst)], M.dim[size_t(a.src)]);
      for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) p.at(r, c) = vec[size_t(pvar(d, r, c))];
      if (!p.is_zero()) f.phi[d] = std::move(p);
    }
    out.push_back(std::move(f));
  }
  return out;
}

BoxMorphism compose_box_morphisms(const BoxPresentation& B, const BoxRep& M1, const BoxRep& M2,
                                  const BoxRep& M3, const BoxMorphism& g, const BoxMorphism& f) {
  BoxMorphism h;
  for (int v = 0; v < B.num_vertices(); ++v)
    h.omega.push_back(g.omega[size_t(v)] * f.omega[size_t(v)]);
  for (int d : B.dashed_ids()) {
    const auto& a = B.arrows[size_t(d)];
    Mat acc = g.omega[size_t(a.dst)] * phi_of(B, f, M1, M2, d) +
              phi_of(B, g, M2, M3, d) * f.omega[size_t(a.src)];
    for (auto& [w, c] : B.diff_of(d).t) {
      DashedSplit s = split_two_dashed(B, w);
      const auto& b = B.arrows[size_t(s.beta)];
      const auto& gm = B.arrows[size_t(s.gamma)];
      Mat L = eval_solid_path(B, M3, s.left, b.dst, a.dst);
      Mat Mid = eval_solid_path(B, M2, s.mid, gm.dst, b.src);
      Mat R = eval_solid_path(B, M1, s.right, a.src, gm.src);
      acc = acc + L * phi_of(B, g, M2, M3, s.beta) * Mid * phi_of(B, f, M1, M2, s.gamma) * R * c;
    }
    if (!acc.is_zero()) h.phi[d] = std::move(acc);
  }
  return h;
}

BoxMorphism add_box_morphisms(const BoxPresentation& B, const BoxMorphism& f,
                              const BoxMorphism& g, const Scalar& cg) {
  BoxMorphism h;
  for (size_t v = 0; v < f.omega.size(); ++v)
    h.omega.push_back(f.omega[v] + g.omega[v] * cg);
  std::set<int> keys;
  for (auto& [d, m] : f.phi) keys.insert(d);
  for (auto& [d, m] : g.phi) keys.insert(d);
  for (int d : keys) {
    auto fi = f.phi.find(d);
    auto gi = g.phi.find(d);
    Mat m = fi != f.phi.end()
                ? fi->second
                : Mat(B.field, gi->second.rows, gi->second.cols);
    if (gi != g.phi.end()) m = m + gi->second * cg;
    if (!m.is_zero()) h.phi[d] = std::move(m);
  }
  return h;
}

bool is_isomorphism_boxrep(const BoxPresentation& B, const BoxMorphism& f) {
  if (int(f.omega.size()) != B.num_vertices()) return false;
  for (const auto& o : f.omega) {
    if (o.rows != o.cols) return false;
    if (!o.inverse().has_value()) return false;
  }
  return true;
}

BoxMorphism invert_box_morphism(const BoxPresentation& B, const BoxRep& M, const BoxRep& N,
                                const BoxMorphism& f) {
  auto hf = check_triangular(B);
  if (!hf) fail(Err::PreconditionViolated, "cannot invert morphisms of a non-triangular box");
  BoxMorphism g;
  for (int v = 0; v < B.num_vertices(); ++v) {
    auto inv = f.omega[size_t(v)].inverse();
    if (!inv) fail(Err::PreconditionViolated, "morphism is not an isomorphism");
    g.omega.push_back(std::move(*inv));
  }
  auto dashed = B.dashed_ids();
  std::sort(dashed.begin(), dashed.end(), [&](int x, int y) {
    if (hf->h[size_t(x)] != hf->h[size_t(y)]) return hf->h[size_t(x)] < hf->h[size_t(y)];
    return x < y;
  });
  // solve (g o f)_d = 0 in height order; g: N -> M
  for (int d : dashed) {
    const auto& a = B.arrows[size_t(d)];
    Mat acc = g.omega[size_t(a.dst)] * phi_of(B, f, M, N, d);
    for (auto& [w, c] : B.diff_of(d).t) {
      DashedSplit s = split_two_dashed(B, w);
      const auto& b = B.arrows[size_t(s.beta)];
      const auto& gm = B.arrows[size_t(s.gamma)];
      Mat L = eval_solid_path(B, M, s.left, b.dst, a.dst);
      Mat Mid = eval_solid_path(B, N, s.mid, gm.dst, b.src);
      Mat R = eval_solid_path(B, M, s.right, a.src, gm.src);
      acc = acc + L * phi_of(B, g, N, M, s.beta) * Mid * phi_of(B, f, M, N, s.gamma) * R * c;
    }
    Mat gd = -(acc * g.omega[size_t(a.src)]);
    if (!gd.is_zero()) g.phi[d] = std::move(gd);
  }
  return g;
}

namespace {

// Greedy subset of H whose omega layers are linearly independent. Invertibility of a
// combination depends only on its omega layer, so the isomorphism search can restrict
// to combinations of this subset without losing witnesses.
std::vector<size_t> omega_spanning_subset(const std::vector<BoxMorphism>& H) {
  std::vector<std::vector<Scalar>> red;
  std::vector<size_t> pivot;
  std::vector<size_t> keep;
  for (size_t i = 0; i < H.size(); ++i) {
    std::vector<Scalar> v;
    for (const Mat& w : H[i].omega) v.insert(v.end(), w.a.begin(), w.a.end());
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

std::optional<BoxMorphism> iso_box_search(const BoxPresentation& B, const BoxRep& M,
                                          const BoxRep& N, bool exhaustive_only) {
  if (M.dim != N.dim) return std::nullopt;
  int total = 0;
  for (int d : M.dim) total += d;
  if (total == 0) return identity_box_morphism(B, M);
  auto H = hom_box_morphisms(B, M, N);
  if (H.empty()) return std::nullopt;
  for (const auto& h : H)
    if (is_isomorphism_boxrep(B, h)) return h;
  auto keep = omega_spanning_subset(H);
  if (keep.empty()) return std::nullopt;  // every morphism has zero omega layer

  const Field& F = B.field;
  auto combine = [&](const std::vector<Scalar>& coef) {
    BoxMorphism f = zero_box_morphism(B, M, N);
    for (size_t i = 0; i < keep.size(); ++i) f = add_box_morphisms(B, f, H[keep[i]], coef[i]);
    return f;
  };
  if (!F.is_rational()) {
    double space = 1;
    for (size_t i = 0; i < keep.size() && space <= 2e6; ++i) space *= double(F.p);
    if (space <= 2e6) {
      std::vector<int64_t> idx(keep.size(), 0);
      while (true) {
        std::vector<Scalar> coef;
        for (int64_t v : idx) coef.push_back(F.from_int(v));
        BoxMorphism f = combine(coef);
        if (is_isomorphism_boxrep(B, f)) return f;
        size_t k = 0;
        while (k < idx.size()) {
          if (++idx[k] < F.p) break;
          idx[k] = 0;
          ++k;
        }
        if (k == idx.size()) break;
      }
      return std::nullopt;
    }
  }
  if (exhaustive_only)
    fail(Err::ResourceCeiling, "isomorphism search space exceeds the exhaustive ceiling (" +
                                   std::to_string(keep.size()) + " independent omega directions)");
  std::mt19937_64 rng(0xB0C5EA11ull);
  for (int trial = 0; trial < 4000; ++trial) {
    std::vector<Scalar> coef;
    for (size_t i = 0; i < keep.size(); ++i) {
      if (F.is_rational()) {
        coef.push_back(F.from_int(int64_t(rng() % 2001) - 1000));
      } else {
        coef.push_back(F.from_int(int64_t(rng() % uint64_t(F.p))));
      }
    }
    BoxMorphism f = combine(coef);
    if (is_isomorphism_boxrep(B, f)) return f;
  }
  return std::nullopt;
}

}  // namespace

std::optional<BoxMorphism> iso_box_reps(const BoxPresentation& B, const BoxRep& M,
                                        const BoxRep& N) {
  return iso_box_search(B, M, N, false);
}

std::optional<BoxMorphism> iso_box_reps_exhaustive(const BoxPresentation& B, const BoxRep& M,
                                                   const BoxRep& N) {
  return iso_box_search(B, M, N, true);
}

// ---------- serialization ----------

std::string serialize_box(const BoxPresentation& B) {
  std::ostringstream os;
  os << "box field " << B.field.str() << "\n";
  for (int v = 0; v < B.num_vertices(); ++v)
    os << "vertex " << B.vertices[size_t(v)] << " slice " << B.slice[size_t(v)] << "\n";
  for (const auto& a : B.arrows)
    os << (a.dashed ? "dashed " : "solid ") << a.name << ": " << B.vertices[size_t(a.src)]
       << " -> " << B.vertices[size_t(a.dst)] << "\n";
  for (size_t i = 0; i < B.arrows.size(); ++i) {
    const auto& ws = B.diff_of(int(i));
    if (!ws.is_zero()) os << "d " << B.arrows[i].name << " = " << wordsum_str(B, ws) << "\n";
  }
  for (const auto& r : B.relations) os << "relation " << wordsum_str(B, r) << "\n";
  for (auto& [v, ml] : B.marked) {
    os << "marked " << B.vertices[size_t(v)] << ": " << B.arrows[size_t(ml.arrow)].name
       << " poly";
    for (const auto& c : ml.f.coeffs()) os << " " << c.str();
    os << "\n";
  }
  return os.str();
}

BoxPresentation parse_box(const std::string& text) {
  BoxPresentation B;
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  bool have_field = false;
  std::vector<std::pair<int, std::vector<std::string>>> deferred;  // d / relation / marked
  while (std::getline(is, raw)) {
    ++lineno;
    auto toks = split_ws(strip_comment(raw));
    if (toks.empty()) continue;
    const std::string& kw = toks[0];
    auto want = [&](bool ok, const std::string& msg) {
      if (!ok) fail(Err::Parse, "line " + std::to_string(lineno) + ": " + msg);
    };
    if (kw == "box") {
      want(toks.size() == 3 && toks[1] == "field", "malformed box header");
      B.field = Field::parse(toks[2]);
      have_field = true;
    } else if (kw == "vertex") {
      want(have_field, "vertex before box header");
      want(toks.size() == 4 && toks[2] == "slice", "malformed vertex line");
      B.add_vertex(toks[1], std::stoi(toks[3]));
    } else if (kw == "solid" || kw == "dashed") {
      want(toks.size() == 5 && toks[3] == "->", "malformed arrow line");
      std::string name = toks[1];
      want(!name.empty() && name.back() == ':', "arrow name must end with ':'");
      name.pop_back();
      auto sv = B.vertex_id.find(toks[2]);
      auto dv = B.vertex_id.find(toks[4]);
      want(sv != B.vertex_id.end() && dv != B.vertex_id.end(), "unknown vertex in arrow line");
      B.add_arrow(name, sv->second, dv->second, kw == "dashed");
    } else if (kw == "d" || kw == "relation" || kw == "marked") {
      deferred.emplace_back(lineno, toks);
    } else {
      fail(Err::Parse, "line " + std::to_string(lineno) + ": unknown keyword '" + kw + "'");
    }
  }
  if (!have_field) fail(Err::Parse, "missing box header");
  for (auto& [ln, toks] : deferred) {
    auto want = [&, ln = ln](bool ok, const std::string& msg) {
      if (!ok) fail(Err::Parse, "line " + std::to_string(ln) + ": " + msg);
    };
    auto join = [&](size_t from) {
      std::string s;
      for (size_t i = from; i < toks.size(); ++i) {
        if (i > from) s += " ";
        s += toks[i];
      }
      return s;
    };
    if (toks[0] == "d") {
      want(toks.size() >= 4 && toks[2] == "=", "malformed differential line");
      auto it = B.arrow_id.find(toks[1]);
      want(it != B.arrow_id.end(), "differential of unknown arrow '" + toks[1] + "'");
      WordSum ws = parse_wordsum(B, join(3));
      if (!ws.is_zero()) B.diff[it->second] = std::move(ws);
    } else if (toks[0] == "relation") {
      want(toks.size() >= 2, "empty relation line");
      B.relations.push_back(parse_wordsum(B, join(1)));
    } else {
      want(toks.size() >= 5 && toks[3] == "poly", "malformed marked line");
      std::string vname = toks[1];
      want(!vname.empty() && vname.back() == ':', "marked vertex must end with ':'");
      vname.pop_back();
      auto vit = B.vertex_id.find(vname);
      want(vit != B.vertex_id.end(), "marked loop at unknown vertex");
      auto ait = B.arrow_id.find(toks[2]);
      want(ait != B.arrow_id.end(), "marked loop with unknown arrow");
      std::vector<Scalar> coeffs;
      for (size_t i = 4; i < toks.size(); ++i) coeffs.push_back(parse_scalar(B.field, toks[i]));
      B.marked[vit->second] = MarkedLoop{ait->second, Poly(B.field, std::move(coeffs))};
    }
  }
  if (auto bad = check_box(B)) fail(Err::Parse, "invalid box: " + *bad);
  return B;
}

}  // namespace derbox
