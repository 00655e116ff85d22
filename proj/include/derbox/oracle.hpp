#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "derbox/box.hpp"
#include "derbox/complex.hpp"

namespace derbox {

// Exhaustive isomorphism census of the minimal complexes with a fixed vector rank
// over F_q. Representatives are pairwise non-isomorphic, listed in first-encounter
// order of a deterministic enumeration, and every valid instance is isomorphic to
// exactly one of them. `instances` is the orbit size inside the enumerated space.
struct OrbitCensus {
  int64_t q = 0;
  VectorRank rank;
  struct Entry {
    ProjComplex rep;
    bool indecomposable = false;
    int64_t instances = 0;
  };
  std::vector<Entry> entries;

  int64_t total_instances() const;
  int64_t indecomposables() const;
};

OrbitCensus enum_census(const AlgebraBasis& A, const VectorRank& rank, int64_t q,
                        double ceiling = 2e6);

int64_t count_indecomposables(const AlgebraBasis& A, const VectorRank& rank, int64_t q);

// Same census for representations of an arbitrary box at a fixed dimension vector:
// all solid matrices over F_q satisfying the relations and marked-loop conditions,
// bucketed into isomorphism classes.
struct BoxCensus {
  int64_t q = 0;
  std::vector<int> dim;
  struct Entry {
    BoxRep rep;
    int64_t instances = 0;
  };
  std::vector<Entry> entries;

  int64_t total_instances() const;
};

BoxCensus enum_box_census(const BoxPresentation& B, const std::vector<int>& dim, int64_t q,
                          double ceiling = 2e6);

// A sample point of a two-parameter family: a pair of square matrices of the same
// size, read as the images of the two free generators.
struct ParamModule {
  Mat X, Y;
};

bool param_modules_isomorphic(const ParamModule& L1, const ParamModule& L2,
                              double ceiling = 2e6);
bool param_module_indecomposable(const ParamModule& L, double ceiling = 2e6);

// Strictness check of a two-parameter family on concrete samples: specializations
// must be isomorphic exactly when the parameter modules are, and indecomposability
// must transfer. Failures are reported, not thrown.
struct StrictFamilyReport {
  int samples = 0;
  int non_isomorphic_pairs = 0;    // pairs i<j whose parameter modules differ
  int indecomposable_modules = 0;  // samples that are indecomposable modules
  int indecomposable_images = 0;   // samples whose specialization is indecomposable
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

StrictFamilyReport check_strict_family(const AlgebraBasis& A, const TwoParamFamily& F,
                                       const std::vector<ParamModule>& samples,
                                       double ceiling = 2e6);

}  // namespace derbox
