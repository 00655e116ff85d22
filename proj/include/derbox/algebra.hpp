#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "derbox/field.hpp"
#include "derbox/linalg.hpp"

namespace derbox {

struct Arrow {
  std::string name;
  int src = -1;
  int dst = -1;
};

// One term of a relation: coeff * a1*a2*...*ad, leftmost arrow applied last.
struct RelTerm {
  Rat coeff;
  std::vector<int> arrows;
};

struct RelationDecl {
  std::vector<RelTerm> terms;
  int src = -1, dst = -1;
  int length = 0;
  int line = 0;
};

struct AlgebraPresentation {
  std::vector<std::string> vertices;
  std::map<std::string, int> vertex_id;
  std::vector<Arrow> arrows;
  std::map<std::string, int> arrow_id;
  std::vector<RelationDecl> relations;
  std::optional<Field> declared_field;
  int degree_cap = 12;
  std::string text;  // original source, kept for serialization
};

AlgebraPresentation parse_algebra(const std::string& text);

// Element of A(src,dst) as a coefficient vector over the normal-form basis.
struct AlgebraElement {
  int src = -1, dst = -1;
  std::vector<Scalar> c;

  bool is_zero() const {
    for (const auto& v : c)
      if (!v.is_zero()) return false;
    return true;
  }
  friend bool operator==(const AlgebraElement& a, const AlgebraElement& b) {
    return a.src == b.src && a.dst == b.dst && a.c == b.c;
  }
  friend bool operator!=(const AlgebraElement& a, const AlgebraElement& b) { return !(a == b); }
};

// One summand of nu(alpha*): coeff * beta* (x) gamma*, global radical indices.
struct NuTerm {
  int beta = -1, gamma = -1;
  Scalar coeff;
};

class AlgebraBasis {
 public:
  struct BPath {
    std::vector<int> arrows;  // written order, leftmost applied last; empty = identity
    int src = -1, dst = -1;
    int degree = 0;
    std::string name;  // "1_<vertex>" or "a*b*c"
  };

  static AlgebraBasis compute(const AlgebraPresentation& pres,
                              std::optional<Field> field_override = std::nullopt);

  const AlgebraPresentation& pres() const { return pres_; }
  const Field& field() const { return field_; }
  int num_vertices() const { return int(pres_.vertices.size()); }
  int dim_total() const { return int(paths_.size()); }
  int nil_degree() const { return nil_degree_; }  // minimal d with J^d = 0

  const std::vector<BPath>& basis() const { return paths_; }
  const BPath& path(int g) const { return paths_[size_t(g)]; }
  const std::vector<int>& pair_basis(int x, int y) const;
  const std::vector<int>& radical_basis(int x, int y) const;
  int identity_index(int x) const { return identity_idx_[size_t(x)]; }
  int dim(int x, int y) const { return int(pair_basis(x, y).size()); }

  AlgebraElement zero(int x, int y) const;
  AlgebraElement identity(int x) const;
  AlgebraElement from_basis(int g) const;  // the basis element as an element
  AlgebraElement from_arrow(int arrow) const;
  Scalar coeff_of(const AlgebraElement& e, int g) const;
  AlgebraElement add(const AlgebraElement& a, const AlgebraElement& b) const;
  AlgebraElement sub(const AlgebraElement& a, const AlgebraElement& b) const;
  AlgebraElement scale(const Scalar& s, const AlgebraElement& a) const;
  // multiply(u, v) = u applied after v; requires src(u) == dst(v).
  AlgebraElement multiply(const AlgebraElement& u, const AlgebraElement& v) const;
  bool in_radical(const AlgebraElement& e) const;
  Scalar identity_coeff(const AlgebraElement& e) const;  // 0 when src != dst
  AlgebraElement radical_part(const AlgebraElement& e) const;
  // Inverse of an element of A(x,x) with nonzero identity coefficient.
  std::optional<AlgebraElement> invert(const AlgebraElement& e) const;

  // Dual of multiplication on the radical: alpha must index a radical basis path.
  std::vector<NuTerm> nu(int alpha) const;

  AlgebraElement parse_element(const std::string& text, int src, int dst) const;
  std::string element_str(const AlgebraElement& e) const;

  int vertex_id(const std::string& name) const;
  const std::string& vertex_name(int x) const { return pres_.vertices[size_t(x)]; }

 private:
  AlgebraPresentation pres_;
  Field field_;
  std::vector<BPath> paths_;             // global normal-form basis, sorted
  std::vector<int> identity_idx_;        // per vertex
  std::map<std::pair<int, int>, std::vector<int>> by_pair_;
  std::map<std::pair<int, int>, std::vector<int>> radical_by_pair_;
  std::vector<int> empty_;
  int nil_degree_ = 1;
  // product of basis elements i (after) j: coefficient vector over (src_j, dst_i)
  std::map<std::pair<int, int>, std::vector<Scalar>> mult_;
  // reduction of an arbitrary quiver path (degree 1..nil-1) to the basis
  std::map<std::vector<int>, std::vector<Scalar>> path_nf_;
  std::map<std::vector<int>, std::pair<int, int>> path_ep_;

  AlgebraElement reduce_path(const std::vector<int>& arrows) const;
  void verify_associativity() const;
};

}  // namespace derbox
