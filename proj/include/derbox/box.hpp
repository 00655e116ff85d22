#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "derbox/algebra.hpp"
#include "derbox/linalg.hpp"
#include "derbox/poly.hpp"

namespace derbox {

struct BoxArrow {
  std::string name;
  int src = -1, dst = -1;
  bool dashed = false;
};

// Alternating word of arrows; written order, leftmost factor applied last
// (the same composition convention as algebra paths).
struct BoxWord {
  std::vector<int> arrows;
  friend bool operator==(const BoxWord& a, const BoxWord& b) { return a.arrows == b.arrows; }
  friend bool operator<(const BoxWord& a, const BoxWord& b) { return a.arrows < b.arrows; }
};

// Formal k-linear combination of words; only nonzero coefficients stored.
struct WordSum {
  std::map<BoxWord, Scalar> t;
  bool is_zero() const { return t.empty(); }
};

// A solid loop whose polynomial must act invertibly in every representation
// (produced by loop reduction; plain boxes carry none).
struct MarkedLoop {
  int arrow = -1;
  Poly f;
};

struct BoxPresentation {
  Field field;
  std::vector<std::string> vertices;
  std::map<std::string, int> vertex_id;
  std::vector<int> slice;  // s(v) per vertex
  std::vector<BoxArrow> arrows;
  std::map<std::string, int> arrow_id;
  std::map<int, WordSum> diff;       // per arrow id; absent = zero differential
  std::vector<WordSum> relations;    // solid words only, length >= 2
  std::map<int, MarkedLoop> marked;  // per vertex

  int add_vertex(const std::string& name, int s);
  int add_arrow(const std::string& name, int src, int dst, bool dashed);
  int num_vertices() const { return int(vertices.size()); }
  int word_src(const BoxWord& w) const;
  int word_dst(const BoxWord& w) const;
  int dashed_degree(const BoxWord& w) const;
  std::vector<int> solid_ids() const;
  std::vector<int> dashed_ids() const;
  const WordSum& diff_of(int arrow) const;  // zero sum when absent
};

WordSum ws_word(const BoxWord& w, const Scalar& c);
WordSum ws_add(const WordSum& a, const WordSum& b);
WordSum ws_scale(const Scalar& c, const WordSum& a);
// concatenation, a applied after b; endpoint-checked against B
WordSum ws_mul(const BoxPresentation& B, const WordSum& a, const WordSum& b);

std::string word_str(const BoxPresentation& B, const BoxWord& w);
std::string wordsum_str(const BoxPresentation& B, const WordSum& s);
WordSum parse_wordsum(const BoxPresentation& B, const std::string& text);

// Structural well-formedness: ids, endpoints of differential words, the
// dashed-degree grading (1 on solid arrows, 2 on dashed), solid-only relations
// of length >= 2, marked-loop validity. nullopt = ok.
std::optional<std::string> check_box(const BoxPresentation& B);

// Slicing axioms: s strictly drops along solid arrows, is constant along
// dashed ones. nullopt = ok, otherwise names the first violating arrow.
std::optional<std::string> check_sliced(const BoxPresentation& B);

struct HeightFunction {
  std::vector<int> h;  // per arrow id
};
// Topologically sorts arrow dependencies through the differential; nullopt if
// cyclic. h(a) = 0 exactly when the differential of a vanishes.
std::optional<HeightFunction> check_triangular(const BoxPresentation& B);

// Checks that the differential of every relation generator lies in
// I.V + V.I for the two-sided ideal I spanned by the relation generators,
// by symbolic expansion and a linear membership solve. nullopt = ok.
std::optional<std::string> check_ideal_compatibility(const BoxPresentation& B);

struct BoxRep {
  std::vector<int> dim;   // per vertex
  std::map<int, Mat> m;   // per solid arrow id; absent = zero matrix
};

BoxRep zero_rep(const BoxPresentation& B, const std::vector<int>& dim);
std::optional<std::string> check_rep(const BoxPresentation& B, const BoxRep& M);
Mat rep_matrix(const BoxPresentation& B, const BoxRep& M, int arrow);
// path: solid arrow ids, leftmost applied last; empty path = identity at src (= dst)
Mat eval_solid_path(const BoxPresentation& B, const BoxRep& M, const std::vector<int>& path,
                    int src, int dst);
bool rep_satisfies_relations(const BoxPresentation& B, const BoxRep& M);
// marked loops: f(M(loop)) invertible at every marked vertex
bool rep_satisfies_marked(const BoxPresentation& B, const BoxRep& M);

struct BoxMorphism {
  std::vector<Mat> omega;  // per vertex: dim_N(v) x dim_M(v)
  std::map<int, Mat> phi;  // per dashed arrow id: dim_N(dst) x dim_M(src)
};

// The matrix identity imposed on morphisms by the differential of one solid
// arrow, split at the unique dashed factor of each word.
struct SolidConstraint {
  struct Term {
    Scalar c;
    std::vector<int> left;   // solid path evaluated in the target rep
    int dashed = -1;
    std::vector<int> right;  // solid path evaluated in the source rep
  };
  int arrow = -1;
  std::vector<Term> terms;
};
std::vector<SolidConstraint> morphism_constraints(const BoxPresentation& B);

BoxMorphism identity_box_morphism(const BoxPresentation& B, const BoxRep& M);
BoxMorphism zero_box_morphism(const BoxPresentation& B, const BoxRep& M, const BoxRep& N);
bool is_box_morphism(const BoxPresentation& B, const BoxRep& M, const BoxRep& N,
                     const BoxMorphism& f);
// basis of the space of morphisms M -> N
std::vector<BoxMorphism> hom_box_morphisms(const BoxPresentation& B, const BoxRep& M,
                                           const BoxRep& N);
// g after f, for f: M1 -> M2 and g: M2 -> M3
BoxMorphism compose_box_morphisms(const BoxPresentation& B, const BoxRep& M1, const BoxRep& M2,
                                  const BoxRep& M3, const BoxMorphism& g, const BoxMorphism& f);
BoxMorphism add_box_morphisms(const BoxPresentation& B, const BoxMorphism& f,
                              const BoxMorphism& g, const Scalar& cg);

// On a triangular box a morphism is invertible iff every omega-part is.
bool is_isomorphism_boxrep(const BoxPresentation& B, const BoxMorphism& f);
BoxMorphism invert_box_morphism(const BoxPresentation& B, const BoxRep& M, const BoxRep& N,
                                const BoxMorphism& f);
std::optional<BoxMorphism> iso_box_reps(const BoxPresentation& B, const BoxRep& M,
                                        const BoxRep& N);
// Like iso_box_reps, but raises ResourceCeiling instead of falling back to random
// sampling when the search space is too large to scan exhaustively.
std::optional<BoxMorphism> iso_box_reps_exhaustive(const BoxPresentation& B, const BoxRep& M,
                                                   const BoxRep& N);

std::string serialize_box(const BoxPresentation& B);
BoxPresentation parse_box(const std::string& text);

}  // namespace derbox
