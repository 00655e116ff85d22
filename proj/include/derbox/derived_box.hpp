#pragma once

#include "derbox/algebra.hpp"
#include "derbox/box.hpp"
#include "derbox/complex.hpp"

namespace derbox {

// Level range [n_min, n_max] carried by a box built from an algebra.
struct LevelWindow {
  int n_min = 0;
  int n_max = 0;
};

// Names the one-dimensional representation concentrated at (x, N).
struct TrivialRepTag {
  int vertex = -1;
  int level = 0;
};

// The sliced box of an algebra over a level window: one vertex per (module
// vertex, level), solid arrows dual to the radical basis dropping one level,
// dashed arrows dual to the radical basis within a level.  Differentials and
// relation generators come from the dual of radical multiplication.
BoxPresentation build_box(const AlgebraBasis& A, LevelWindow w);

// Index of the box vertex (x, n) in build_box's ordering.
int box_vertex(const AlgebraBasis& A, LevelWindow w, int x, int n);

// Arrow names used by build_box ('*' in path names becomes '.').
std::string solid_arrow_name(const AlgebraBasis& A, int g, int n);
std::string dashed_arrow_name(const AlgebraBasis& A, int g, int n);

// Minimal complexes inside the window <-> box representations.
BoxRep complex_to_rep(const AlgebraBasis& A, LevelWindow w, const ProjComplex& P);
ProjComplex rep_to_complex(const AlgebraBasis& A, LevelWindow w, const BoxRep& M);

BoxRep trivial_rep(const AlgebraBasis& A, LevelWindow w, TrivialRepTag tag);
ProjComplex trivial_complex(const AlgebraBasis& A, TrivialRepTag tag);

// Chain maps between minimal complexes inside the window <-> box morphisms.
BoxMorphism chainmap_to_boxmorphism(const AlgebraBasis& A, LevelWindow w, const ProjComplex& X,
                                    const ProjComplex& Y, const ChainMap& f);
ChainMap boxmorphism_to_chainmap(const AlgebraBasis& A, LevelWindow w, const ProjComplex& X,
                                 const ProjComplex& Y, const BoxMorphism& f);

// Whether a chain map between complexes vanishing above N dies in the quotient
// category at level N.
bool is_zero_in_QN(const AlgebraBasis& A, const ProjComplex& X, const ProjComplex& Y,
                   const ChainMap& f, int N);

}  // namespace derbox
