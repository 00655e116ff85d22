#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "derbox/algebra.hpp"
#include "derbox/poly.hpp"

namespace derbox {

using DMat = std::vector<std::vector<AlgebraElement>>;  // rows x cols of algebra elements

// Bounded complex of projectives P_n = (+)_x (A^x)^{mult[n][x]} with d_n: P_n -> P_{n-1}.
// Summands at a degree are ordered by vertex, then copy. Entry (row = summand A^y of
// P_{n-1}, col = summand A^x of P_n) lies in A(x,y) = Hom(A^x, A^y).
struct ProjComplex {
  int nmin = 0, nmax = -1;  // nmin > nmax encodes the zero complex
  std::map<int, std::vector<int>> mult;  // per degree, length = #vertices
  std::map<int, DMat> d;                 // key n: P_n -> P_{n-1}; absent = zero

  bool is_zero() const;
};

struct ChainMap {
  std::map<int, DMat> f;  // per degree: rows = target summands, cols = source summands
};

struct Homotopy {
  std::map<int, DMat> s;  // s_n : P_n -> P'_{n+1}
};

struct VectorRank {
  std::map<int, std::vector<int>> r;  // all-zero degrees removed
  friend bool operator==(const VectorRank& a, const VectorRank& b) { return a.r == b.r; }
  friend bool operator!=(const VectorRank& a, const VectorRank& b) { return !(a == b); }
  friend bool operator<(const VectorRank& a, const VectorRank& b) { return a.r < b.r; }
  int total() const;
  std::string str(const AlgebraBasis& A) const;
};

// One-parameter family: entries are polynomials in t with AlgebraElement coefficients,
// defined over k[t, denom(t)^{-1}].
struct FamilyComplex {
  int nmin = 0, nmax = -1;
  std::map<int, std::vector<int>> mult;
  std::map<int, std::vector<std::vector<std::vector<AlgebraElement>>>> d;  // entry: t-coeff list
  Poly denom;
};

// Two-parameter family over the free algebra k<X,Y>: entries c0 + cx.X + cy.Y.
struct TwoParamEntry {
  AlgebraElement c0, cx, cy;
};
struct TwoParamFamily {
  int nmin = 0, nmax = -1;
  std::map<int, std::vector<int>> mult;
  std::map<int, std::vector<std::vector<TwoParamEntry>>> d;
};

std::vector<int> summand_vertices(const AlgebraBasis& A, const ProjComplex& P, int n);
std::vector<int> mult_at(const AlgebraBasis& A, const ProjComplex& P, int n);

// nullopt = valid; otherwise a human-readable violation report.
std::optional<std::string> validate_complex(const AlgebraBasis& A, const ProjComplex& P);
void require_valid(const AlgebraBasis& A, const ProjComplex& P);

bool is_minimal(const AlgebraBasis& A, const ProjComplex& P);

struct MinimizeResult {
  ProjComplex min;
  ChainMap to_min;    // original -> minimal
  ChainMap from_min;  // minimal -> original
};
MinimizeResult minimize(const AlgebraBasis& A, const ProjComplex& P);

VectorRank vector_rank(const AlgebraBasis& A, const ProjComplex& P);

ProjComplex trim_window(const AlgebraBasis& A, const ProjComplex& P);
bool same_data(const AlgebraBasis& A, const ProjComplex& P, const ProjComplex& Q);
ProjComplex direct_sum(const AlgebraBasis& A, const ProjComplex& P, const ProjComplex& Q);
ProjComplex shift_complex(const AlgebraBasis& A, const ProjComplex& P, int by);
ProjComplex stalk_complex(const AlgebraBasis& A, int vertex, int degree);

bool is_chain_map(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                  const ChainMap& f);
std::vector<ChainMap> hom_chain_maps(const AlgebraBasis& A, const ProjComplex& X,
                                     const ProjComplex& Y);
ChainMap identity_chain_map(const AlgebraBasis& A, const ProjComplex& P);
ChainMap zero_chain_map(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y);
ChainMap compose_chain_maps(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                            const ProjComplex& Z, const ChainMap& g, const ChainMap& f);
ChainMap add_chain_maps(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                        const ChainMap& f, const ChainMap& g, const Scalar& cg);

std::optional<Homotopy> quasi_homotopy_witness(const AlgebraBasis& A, const ProjComplex& X,
                                               const ProjComplex& Y, const ChainMap& f,
                                               const ChainMap& g, int N);
bool is_quasi_homotopic(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                        const ChainMap& f, const ChainMap& g, int N);

bool is_chain_iso(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                  const ChainMap& f);
std::optional<ChainMap> iso_complexes(const AlgebraBasis& A, const ProjComplex& X,
                                      const ProjComplex& Y);
// Like iso_complexes, but raises ResourceCeiling instead of falling back to random
// sampling when the search space is too large to scan exhaustively.
std::optional<ChainMap> iso_complexes_exhaustive(const AlgebraBasis& A, const ProjComplex& X,
                                                 const ProjComplex& Y);

std::vector<ProjComplex> decompose(const AlgebraBasis& A, const ProjComplex& P);

ProjComplex specialize_family(const AlgebraBasis& A, const FamilyComplex& F, int m,
                              const Scalar& lambda);
ProjComplex specialize_two_param(const AlgebraBasis& A, const TwoParamFamily& F, const Mat& X,
                                 const Mat& Y);

ProjComplex extend_top(const AlgebraBasis& A, const ProjComplex& P, int N);

// Text format: header `complex over <algebra-ref> window <nmin> <nmax>`, then
// `P <n>: <vertex>^<mult> ...` and `d <n>: <row> <col> <expr>` lines.
ProjComplex parse_complex(const AlgebraBasis& A, const std::string& text);
std::string serialize_complex(const AlgebraBasis& A, const ProjComplex& P,
                              const std::string& algebra_ref = "-");
std::string extract_algebra_ref(const std::string& complex_text);

}  // namespace derbox
