#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "derbox/algebra.hpp"
#include "derbox/box.hpp"
#include "derbox/complex.hpp"
#include "derbox/derived_box.hpp"
#include "derbox/linalg.hpp"
#include "derbox/poly.hpp"

namespace derbox {

// ---------------------------------------------------------------------------
// Matrices with polynomial entries (one central parameter t).

class PolyMat {
 public:
  PolyMat(Field f, int rows, int cols);
  static PolyMat identity(Field f, int n);
  static PolyMat lift(const Mat& m);  // constant entries

  Field field() const { return field_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Poly& at(int i, int j);
  const Poly& at(int i, int j) const;
  bool is_zero() const;

  PolyMat operator+(const PolyMat& o) const;
  PolyMat operator*(const PolyMat& o) const;
  PolyMat scale(const Scalar& c) const;
  PolyMat scale_poly(const Poly& p) const;

  // Evaluate at t = lambda.
  Mat eval(const Scalar& lambda) const;
  // Evaluate at t = J, an m x m matrix: each entry p becomes the block p(J),
  // laid out so row r expands to rows r*m .. r*m+m-1.
  Mat eval_matrix(const Mat& J) const;
  int max_degree() const;
  std::string str() const;

 private:
  Field field_;
  int rows_, cols_;
  std::vector<Poly> a_;
};

// Kronecker product (a ⊗ b)[i*br+k][j*bc+l] = a[i][j] * b[k][l].
Mat kron(const Mat& a, const Mat& b);

// ---------------------------------------------------------------------------
// Matrices affine in two non-commuting parameters: c0 + cx·X + cy·Y.
// Entries act blockwise on k^s ⊗ V: scalar c in position (i,j) of cx
// contributes c·X as block (i,j).

struct AffineMat {
  Mat c0, cx, cy;

  AffineMat(Field f, int rows, int cols);
  static AffineMat lift(const Mat& m);
  static AffineMat x_block(Field f);  // 1x1, entry X
  static AffineMat y_block(Field f);  // 1x1, entry Y

  Field field() const { return c0.field; }
  int rows() const { return c0.rows; }
  int cols() const { return c0.cols; }
  bool is_zero() const;

  AffineMat operator+(const AffineMat& o) const;
  // Fails (Err::Internal) if the product has a quadratic term in X, Y.
  AffineMat operator*(const AffineMat& o) const;
  AffineMat scale(const Scalar& c) const;

  // Substitute concrete square matrices for X and Y (both s x s).
  Mat eval(const Mat& X, const Mat& Y) const;
};

// ---------------------------------------------------------------------------
// Smith normal form over k[t].
//
// Decomposes A = P · D · Q with P, Q invertible over k[t] and D diagonal
// with monic (or zero) entries forming a divisibility chain
// d_0 | d_1 | ... .  Only the pieces needed by callers are returned.

struct SmithResult {
  PolyMat d;      // diagonal form
  PolyMat p;      // row transform:     a = p * d * q
  PolyMat p_inv;  // inverse of p
  PolyMat q;      // column transform
  PolyMat q_inv;  // inverse of q
};

SmithResult smith_normal_form(const PolyMat& a);

// ---------------------------------------------------------------------------
// Reduction steps.

enum class StepKind {
  Regularization,
  EdgeReduction,
  LoopReduction,
  RelationDiagonalization,
  Amalgamation,
  Pruning,
};

const char* step_kind_name(StepKind k);

// How one old vertex decomposes after a step: a list of parts, each a vertex
// of the new box taken with `layers` copies.  dim_old(v) = sum over parts of
// layers * dim_new(part vertex).
struct VertexPart {
  int vertex;  // vertex id in the new box
  int layers;
};

// Deterministic replay data: enough to re-execute the step on another box
// that contains the same-named target.
struct StepRecipe {
  StepKind kind = StepKind::Regularization;
  std::string target;          // arrow name (or vertex name for diagonalization)
  std::vector<Scalar> lambda;  // loop reduction: eigenvalues handled
  int jordan_bound = 0;        // loop reduction: maximal Jordan block size
};

struct ReductionStep {
  StepKind kind = StepKind::Regularization;
  std::string detail;  // human-readable one-liner
  StepRecipe recipe;
  BoxPresentation before;
  BoxPresentation after;

  // image[old vertex] = its parts in the new box.
  std::vector<std::vector<VertexPart>> image;

  // solid_image[old solid arrow id] = block matrix of word sums over the new
  // box.  Rows/cols run over the flattened (part, layer) slots of the arrow's
  // old dst/src vertex; an empty word denotes the identity of that slot's
  // vertex (only valid on diagonal-compatible slots).
  std::map<int, std::vector<std::vector<WordSum>>> solid_image;

  // Amalgamation: the replayed sub-steps, in order.  For other kinds empty.
  std::vector<ReductionStep> parts;
};

// Dimension transfer: dimensions over `after` -> dimensions over `before`.
std::vector<int> dims_before(const ReductionStep& st, const std::vector<int>& after_dims);

// Pull a representation of st.after back to a representation of st.before.
BoxRep pull_back(const ReductionStep& st, const BoxRep& rep);

// Polynomial / affine variants used for families (same block evaluation).
PolyMat pull_back_entry(const ReductionStep& st, int old_arrow,
                        const std::vector<int>& after_dims,
                        const std::map<int, PolyMat>& after_mats);
AffineMat pull_back_entry_affine(const ReductionStep& st, int old_arrow,
                                 const std::vector<int>& after_dims,
                                 const std::map<int, AffineMat>& after_mats);

// ---------------------------------------------------------------------------
// Box validity for reduced (not necessarily sliced) boxes: as check_box, but
// relation words may have length 1 (a bound arrow with an invertibility-free
// polynomial constraint of degree 0 at the front).
void check_reduced_box(const BoxPresentation& b);

// A box is minimal when no solid arrow admits a further reduction: every
// solid arrow is a loop with zero differential, at most one solid loop per
// vertex.  Dashed arrows are unrestricted.
struct MinimalBox {
  BoxPresentation box;
  // Vertices carrying a solid loop, with the loop arrow id.
  std::map<int, int> loop_at;
};

bool check_minimal(const BoxPresentation& b);
MinimalBox as_minimal_box(const BoxPresentation& b);  // Err::NotMinimal

// ---------------------------------------------------------------------------
// The three elementary reductions.  Each returns the step performed; the new
// box is step.after.

// Remove a solid arrow whose differential contains a single-letter dashed
// word, together with that dashed arrow.
ReductionStep regularize(BoxPresentation b, const std::string& solid_arrow);

// Reduce a solid edge a: v -> w (v != w, ∂a = 0, no solid loops at v or w)
// to its rank strata: v splits into [complement, shared], w into
// [complement, shared], and a becomes the identity on the shared part.
ReductionStep reduce_edge(BoxPresentation b, const std::string& solid_arrow);

// Reduce a solid loop b at a vertex with ∂b = 0: split into Jordan strata
// J_m(λ) for λ in `lambda`, 1 <= m <= jordan_bound, plus a generic part that
// keeps a marked loop avoiding `lambda`.  jordan_bound = 0 drops the Jordan
// strata (the vertex keeps only its generic part).
ReductionStep reduce_loop(BoxPresentation b, const std::string& loop_arrow,
                          const std::vector<Scalar>& lambda, int jordan_bound);

// Drop a vertex whose representations are forced outside the dimension bound:
// restricts to the subcategory of representations that vanish there (growth
// control; words through the vertex are erased from differentials/relations).
ReductionStep prune_vertex(BoxPresentation b, const std::string& vertex);

// ---------------------------------------------------------------------------
// Relation diagonalization at a source vertex.

struct BoundArrow {
  int arrow;  // solid arrow id in the resulting box
  Poly f;     // constraint polynomial: relation f(loop)·arrow = 0
};

struct DiagonalizedRelations {
  std::optional<ReductionStep> step;  // absent when nothing changed
  BoxPresentation box;                // resulting box (== input if no step)
  std::vector<BoundArrow> bound;      // arrows with a nonzero constraint
  std::vector<int> unconstrained;     // formerly-constrained arrows set free
};

// Bring all relations with source vertex `src_vertex` to diagonal shape
// f_i(β)·a_i = 0 via column operations on the arrows.  Requires every such
// relation to be a combination of words β^p · a with a single loop β at the
// relation's target (Err::UnsupportedRelationShape otherwise).
DiagonalizedRelations diagonalize_relations(const BoxPresentation& b, int src_vertex);

// ---------------------------------------------------------------------------
// Induction plumbing: restriction and amalgamation.

// The sub-box on the vertices with slice value < cut (their arrows,
// differentials, relations and markings; everything else must not leak in).
BoxPresentation restrict_below(const BoxPresentation& b, int cut);

// Re-execute a recorded step on a (usually larger) box containing the same
// named target.  Used to replay a lower-slice reduction on the full box.
ReductionStep apply_recipe(const BoxPresentation& b, const StepRecipe& recipe);

// Replay the reduction trace of the restricted lower part on the full box.
// Returns one amalgamation step whose `parts` are the replayed steps, or
// nothing when the lower trace is empty (pushout along the identity).
// Err::SlicingMismatch when a replayed target is missing from b.
std::optional<ReductionStep> amalgamate(const BoxPresentation& b,
                                        const std::vector<ReductionStep>& lower_trace);

// ---------------------------------------------------------------------------
// Wildness.

struct WildPattern {
  std::string kind;  // "two-loops" or "edge-loop"
  std::vector<int> arrows;
  std::vector<int> vertices;
};

// Look for a wild configuration: two ∂-zero unmarked solid loops at one
// vertex, or a ∂-zero solid edge next to a ∂-zero unmarked solid loop.
std::optional<WildPattern> detect_wild_pattern(const BoxPresentation& b);

struct BoxTwoParamFamily {
  std::vector<int> dim;  // per vertex, multiplied by the parameter size s
  std::map<int, AffineMat> m;
};

// Substitute s x s matrices X, Y; the result is a representation with
// dim[v] * s at each vertex.
BoxRep specialize_box_family(const BoxPresentation& b, const BoxTwoParamFamily& fam,
                             const Mat& X, const Mat& Y);

struct WildCertificate {
  WildPattern pattern;
  BoxPresentation host;       // the reduced box exhibiting the pattern
  BoxTwoParamFamily family;   // family over the box classify() was given
  std::vector<ReductionStep> trace;
};

// ---------------------------------------------------------------------------
// Classification output.

struct BoxFamily {
  std::vector<int> dim;    // dims of the Jordan-size `jordan` member
  int jordan = 1;
  std::map<int, PolyMat> m;  // size-one data: entries polynomial in the parameter
  Poly denom;                // excluded parameter values (zero poly: none)
};

BoxRep specialize_box_one_param(const BoxPresentation& b, const BoxFamily& fam,
                                const Scalar& lambda);

struct BoxRankEntry {
  std::vector<int> dim;
  std::vector<BoxRep> indecomposables;
  std::vector<BoxFamily> families;
};

struct BoxClassification {
  bool wild = false;
  std::optional<WildCertificate> certificate;
  std::vector<BoxRankEntry> by_dim;  // tame only; sorted by dim vector
  std::vector<ReductionStep> trace;
  std::optional<MinimalBox> minimal;  // tame only
};

// Classify representations of a sliced triangular box up to the given
// per-vertex dimension bound.
BoxClassification classify(const BoxPresentation& b, const std::vector<int>& bound,
                           int max_steps = 400);

// ---------------------------------------------------------------------------
// Algebra-level driver.

struct RankBound {
  int total = -1;                     // total: sum of all ranks <= total
  std::optional<VectorRank> ceiling;  // explicit: per-degree-per-vertex caps
};

RankBound parse_rank_bound(const std::string& text);

struct RankFamily {
  FamilyComplex family;
  int jordan = 1;
};

struct RankEntry {
  VectorRank rank;
  std::vector<ProjComplex> indecomposables;
  std::vector<RankFamily> families;
};

struct AlgebraClassification {
  LevelWindow window{0, 0};
  bool wild = false;
  std::optional<WildCertificate> certificate;
  std::optional<TwoParamFamily> family;  // certificate translated to complexes
  std::vector<RankEntry> ranks;
  std::vector<ReductionStep> trace;
};

AlgebraClassification classify_algebra(const AlgebraBasis& a, const RankBound& bound,
                                       int max_steps = 400);

}  // namespace derbox
