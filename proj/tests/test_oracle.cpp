#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "derbox/oracle.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "derbox/derived_box.hpp"

using namespace derbox;

namespace {

const char* ALG_A2 = "vertices 1 2\narrow a: 1 -> 2\n";
const char* ALG_A3 = "vertices 1 2 3\narrow a: 1 -> 2\narrow b: 2 -> 3\n";
const char* ALG_DUAL = "vertex 1\narrow e: 1 -> 1\nrelation e*e\n";
const char* ALG_K3 = "vertices 1 2\narrow a1: 1 -> 2\narrow a2: 1 -> 2\narrow a3: 1 -> 2\n";
const char* ALG_K3_REV = "vertices 1 2\narrow a3: 1 -> 2\narrow a2: 1 -> 2\narrow a1: 1 -> 2\n";

AlgebraBasis mk(const char* text, const char* fld = "Q") {
  return AlgebraBasis::compute(parse_algebra(text), Field::parse(fld));
}

template <typename Fn>
std::optional<Err> thrown(Fn&& fn) {
  try {
    fn();
    return std::nullopt;
  } catch (const Error& e) {
    return e.code;
  }
}

VectorRank vr(std::map<int, std::vector<int>> r) {
  VectorRank v;
  v.r = std::move(r);
  return v;
}

std::vector<int64_t> sorted_instances(const OrbitCensus& c) {
  std::vector<int64_t> out;
  for (const auto& e : c.entries) out.push_back(e.instances);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int64_t> sorted_instances(const BoxCensus& c) {
  std::vector<int64_t> out;
  for (const auto& e : c.entries) out.push_back(e.instances);
  std::sort(out.begin(), out.end());
  return out;
}

Mat imat(const Field& F, std::vector<std::vector<int>> rows) {
  Mat m(F, int(rows.size()), rows.empty() ? 0 : int(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) m.at(int(i), int(j)) = F.from_int(rows[i][j]);
  return m;
}

TwoParamFamily k3_family(const AlgebraBasis& A) {
  TwoParamFamily fam;
  fam.nmin = 0;
  fam.nmax = 1;
  fam.mult[1] = {1, 0};
  fam.mult[0] = {0, 1};
  fam.d[1] = {{TwoParamEntry{A.from_arrow(0), A.from_arrow(1), A.from_arrow(2)}}};
  return fam;
}

}  // namespace

TEST_CASE("census hand counts") {
  SUBCASE("one-step complexes over the arrow algebra") {
    auto A = mk(ALG_A2, "F2");
    auto c = enum_census(A, vr({{1, {1, 0}}, {0, {0, 1}}}), 2);
    CHECK(c.entries.size() == 2);
    CHECK(c.total_instances() == 2);
    CHECK(c.indecomposables() == 1);
    // the zero differential comes first in enumeration order and is decomposable
    CHECK(!c.entries[0].indecomposable);
    CHECK(c.entries[1].indecomposable);
    CHECK(count_indecomposables(A, vr({{1, {1, 0}}, {0, {0, 1}}}), 2) == 1);
  }
  SUBCASE("the all-zero rank carries exactly the zero complex") {
    auto A = mk(ALG_A2, "F2");
    auto c = enum_census(A, vr({}), 2);
    CHECK(c.entries.size() == 1);
    CHECK(c.entries[0].rep.is_zero());
    CHECK(!c.entries[0].indecomposable);
    CHECK(c.total_instances() == 1);
    auto c2 = enum_census(A, vr({{0, {0, 0}}}), 2);
    CHECK(c2.entries.size() == 1);
    CHECK(c2.indecomposables() == 0);
  }
  SUBCASE("dual numbers, rank one in two adjacent degrees over F3") {
    auto A = mk(ALG_DUAL, "F3");
    auto c = enum_census(A, vr({{1, {1}}, {0, {1}}}), 3);
    // d = 0 and d = lambda e with lambda a unit; the units are conjugate
    CHECK(c.entries.size() == 2);
    CHECK(c.indecomposables() == 1);
    CHECK(c.total_instances() == 3);
    CHECK(sorted_instances(c) == std::vector<int64_t>{1, 2});
  }
  SUBCASE("dual numbers, interval rank of length three over F2") {
    auto A = mk(ALG_DUAL, "F2");
    auto c = enum_census(A, vr({{2, {1}}, {1, {1}}, {0, {1}}}), 2);
    // d_2, d_1 range over {0, e} freely since e*e = 0
    CHECK(c.entries.size() == 4);
    CHECK(c.total_instances() == 4);
    CHECK(c.indecomposables() == 1);
  }
}

TEST_CASE("census partitions the instance space") {
  SUBCASE("orbit sizes of rank (2,2) over the dual numbers") {
    auto A = mk(ALG_DUAL, "F2");
    auto c = enum_census(A, vr({{1, {2}}, {0, {2}}}), 2);
    // classes are the coefficient-matrix ranks 0, 1, 2 with orbit sizes 1, 9, 6
    CHECK(c.entries.size() == 3);
    CHECK(c.total_instances() == 16);
    CHECK(sorted_instances(c) == std::vector<int64_t>{1, 6, 9});
    CHECK(c.indecomposables() == 0);
  }
  SUBCASE("d^2 = 0 filtering against an independent validity count") {
    for (int64_t q : {2, 3}) {
      auto A = mk(ALG_A3, q == 2 ? "F2" : "F3");
      auto rank = vr({{2, {1, 0, 0}}, {1, {0, 1, 0}}, {0, {0, 0, 1}}});
      auto c = enum_census(A, rank, q);
      // independent count: d_2 = x a, d_1 = y b, valid iff (y b)(x a) = xy ba = 0
      int64_t valid = 0;
      for (int64_t x = 0; x < q; ++x)
        for (int64_t y = 0; y < q; ++y)
          if ((x * y) % q == 0) ++valid;
      CHECK(c.total_instances() == valid);
      CHECK(c.entries.size() == 3);  // zero, a-only, b-only
      CHECK(c.indecomposables() == 0);
      for (const auto& e : c.entries) {
        REQUIRE(!validate_complex(A, e.rep).has_value());
        CHECK(is_minimal(A, e.rep));
      }
    }
  }
  SUBCASE("a degree gap leaves a single class of stalks") {
    auto A = mk(ALG_A3, "F2");
    auto c = enum_census(A, vr({{2, {1, 0, 0}}, {0, {0, 0, 1}}}), 2);
    CHECK(c.entries.size() == 1);
    CHECK(c.total_instances() == 1);
    CHECK(c.indecomposables() == 0);
  }
}

TEST_CASE("census counts ignore arrow declaration order") {
  for (int64_t q : {2, 3}) {
    auto A = mk(ALG_K3, q == 2 ? "F2" : "F3");
    auto B = mk(ALG_K3_REV, q == 2 ? "F2" : "F3");
    auto rank = vr({{1, {1, 0}}, {0, {0, 1}}});
    auto ca = enum_census(A, rank, q);
    auto cb = enum_census(B, rank, q);
    CHECK(ca.entries.size() == cb.entries.size());
    CHECK(ca.total_instances() == cb.total_instances());
    CHECK(ca.indecomposables() == cb.indecomposables());
    CHECK(sorted_instances(ca) == sorted_instances(cb));
    // unit scaling is the only symmetry at this rank
    CHECK(ca.total_instances() == q * q * q);
    CHECK(ca.entries.size() == size_t(1 + (q * q * q - 1) / (q - 1)));
  }
}

TEST_CASE("census input validation and ceilings") {
  auto A = mk(ALG_DUAL, "F3");
  CHECK(thrown([&] { enum_census(A, vr({{0, {4}}, {1, {4}}}), 3); }) ==
        Err::SearchSpaceTooLarge);
  CHECK(thrown([&] { enum_census(A, vr({{0, {2}}, {1, {2}}}), 3, 8.0); }) ==
        Err::SearchSpaceTooLarge);
  CHECK(thrown([&] { enum_census(A, vr({{0, {1}}}), 2); }) == Err::PreconditionViolated);
  CHECK(thrown([&] { enum_census(mk(ALG_DUAL), vr({{0, {1}}}), 2); }) ==
        Err::PreconditionViolated);
  CHECK(thrown([&] { enum_census(A, vr({{0, {-1}}}), 3); }) == Err::Validation);
  CHECK(thrown([&] { enum_census(A, vr({{0, {1, 1}}}), 3); }) == Err::Validation);
  auto B = build_box(A, {0, 1});
  CHECK(thrown([&] { enum_box_census(B, {4, 4}, 3, 8.0); }) == Err::SearchSpaceTooLarge);
  CHECK(thrown([&] { enum_box_census(B, {1}, 3); }) == Err::Validation);
  CHECK(thrown([&] { enum_box_census(B, {-1, 1}, 3); }) == Err::Validation);
  CHECK(thrown([&] { enum_box_census(B, {1, 1}, 2); }) == Err::PreconditionViolated);
}

TEST_CASE("box census agrees with the complex census through the derived box") {
  SUBCASE("dual numbers on a window of length two") {
    auto A = mk(ALG_DUAL, "F2");
    LevelWindow w{0, 2};
    auto B = build_box(A, w);
    for (int d0 = 0; d0 <= 2; ++d0)
      for (int d1 = 0; d1 <= 2; ++d1)
        for (int d2 = 0; d2 <= 2; ++d2) {
          std::vector<int> dim(3, 0);
          dim[size_t(box_vertex(A, w, 0, 0))] = d0;
          dim[size_t(box_vertex(A, w, 0, 1))] = d1;
          dim[size_t(box_vertex(A, w, 0, 2))] = d2;
          auto bc = enum_box_census(B, dim, 2);
          auto cc = enum_census(A, vr({{0, {d0}}, {1, {d1}}, {2, {d2}}}), 2);
          CHECK(bc.entries.size() == cc.entries.size());
          CHECK(bc.total_instances() == cc.total_instances());
          CHECK(sorted_instances(bc) == sorted_instances(cc));
        }
  }
  SUBCASE("arrow algebra on a window of length one") {
    auto A = mk(ALG_A2, "F2");
    LevelWindow w{0, 1};
    auto B = build_box(A, w);
    for (int p0 = 0; p0 <= 2; ++p0)
      for (int p1 = 0; p1 <= 2; ++p1)
        for (int q0 = 0; q0 <= 2; ++q0)
          for (int q1 = 0; q1 <= 2; ++q1) {
            std::vector<int> dim(4, 0);
            dim[size_t(box_vertex(A, w, 0, 0))] = p0;
            dim[size_t(box_vertex(A, w, 1, 0))] = q0;
            dim[size_t(box_vertex(A, w, 0, 1))] = p1;
            dim[size_t(box_vertex(A, w, 1, 1))] = q1;
            auto bc = enum_box_census(B, dim, 2);
            auto cc = enum_census(A, vr({{0, {p0, q0}}, {1, {p1, q1}}}), 2);
            CHECK(bc.entries.size() == cc.entries.size());
            CHECK(bc.total_instances() == cc.total_instances());
            CHECK(sorted_instances(bc) == sorted_instances(cc));
          }
  }
}

TEST_CASE("box census respects relations and marked loops") {
  SUBCASE("a relation cuts the instance space") {
    BoxPresentation B;
    B.field = Field::parse("F3");
    int u = B.add_vertex("u", 2), v = B.add_vertex("v", 1), w = B.add_vertex("w", 0);
    int x = B.add_arrow("x", u, v, false);
    int y = B.add_arrow("y", v, w, false);
    B.relations.push_back(ws_word(BoxWord{{y, x}}, B.field.one()));
    REQUIRE(!check_box(B).has_value());
    auto c = enum_box_census(B, {1, 1, 1}, 3);
    // valid instances: M(y) M(x) = 0, i.e. 5 of the 9 assignments
    CHECK(c.total_instances() == 5);
    CHECK(c.entries.size() == 3);
    CHECK(sorted_instances(c) == std::vector<int64_t>{1, 2, 2});
  }
  SUBCASE("a marked loop counts invertible conjugacy classes") {
    BoxPresentation B;
    B.field = Field::parse("F3");
    int v = B.add_vertex("v", 0);
    int s = B.add_arrow("s", v, v, false);
    B.marked[v] = MarkedLoop{s, Poly::x(B.field)};
    REQUIRE(!check_box(B).has_value());
    auto c1 = enum_box_census(B, {1}, 3);
    CHECK(c1.entries.size() == 2);
    CHECK(c1.total_instances() == 2);
    auto c2 = enum_box_census(B, {2}, 3);
    // conjugacy classes of GL(2, F3): q^2 - 1 = 8, partitioning its 48 elements
    CHECK(c2.entries.size() == 8);
    CHECK(c2.total_instances() == 48);
  }
}

TEST_CASE("census output is deterministic") {
  auto A = mk(ALG_DUAL, "F2");
  auto rank = vr({{2, {1}}, {1, {1}}, {0, {1}}});
  auto c1 = enum_census(A, rank, 2);
  auto c2 = enum_census(A, rank, 2);
  REQUIRE(c1.entries.size() == c2.entries.size());
  for (size_t i = 0; i < c1.entries.size(); ++i) {
    CHECK(serialize_complex(A, c1.entries[i].rep) == serialize_complex(A, c2.entries[i].rep));
    CHECK(c1.entries[i].instances == c2.entries[i].instances);
    CHECK(c1.entries[i].indecomposable == c2.entries[i].indecomposable);
  }
  // the all-zero differential is enumerated first
  bool zero_d = true;
  for (const auto& [n, dm] : c1.entries[0].rep.d)
    for (const auto& row : dm)
      for (const auto& e : row) zero_d = zero_d && e.is_zero();
  CHECK(zero_d);
}

TEST_CASE("parameter module isomorphism and indecomposability") {
  Field F = Field::parse("F2");
  Mat z1(F, 1, 1);
  Mat o1 = imat(F, {{1}});
  Mat z2(F, 2, 2);
  Mat jord = imat(F, {{0, 1}, {0, 0}});
  Mat jord_t = imat(F, {{0, 0}, {1, 0}});
  Mat e11 = imat(F, {{1, 0}, {0, 0}});

  CHECK(param_modules_isomorphic({z1, z1}, {z1, z1}));
  CHECK(param_modules_isomorphic({o1, z1}, {o1, z1}));
  CHECK(!param_modules_isomorphic({z1, z1}, {o1, z1}));
  CHECK(!param_modules_isomorphic({z1, z1}, {z2, z2}));  // size mismatch
  CHECK(param_modules_isomorphic({jord, z2}, {jord_t, z2}));
  CHECK(!param_modules_isomorphic({jord, z2}, {z2, jord}));
  CHECK(!param_modules_isomorphic({jord, z2}, {z2, z2}));

  CHECK(param_module_indecomposable({z1, z1}));
  CHECK(param_module_indecomposable({o1, z1}));
  CHECK(param_module_indecomposable({jord, z2}));
  CHECK(param_module_indecomposable({jord, e11}));
  CHECK(!param_module_indecomposable({z2, z2}));
  CHECK(!param_module_indecomposable({e11, z2}));

  CHECK(thrown([&] { param_modules_isomorphic({imat(F, {{0, 0}}), imat(F, {{0, 0}})},
                                              {imat(F, {{0, 0}}), imat(F, {{0, 0}})}); }) ==
        Err::PreconditionViolated);
}

TEST_CASE("strict family checking on the three-arrow quiver") {
  auto A = mk(ALG_K3, "F2");
  Field F = A.field();
  auto fam = k3_family(A);
  Mat z1(F, 1, 1);
  Mat o1 = imat(F, {{1}});
  Mat z2(F, 2, 2);
  Mat jord = imat(F, {{0, 1}, {0, 0}});

  SUBCASE("pairwise distinct samples pass with zero violations") {
    std::vector<ParamModule> samples = {{z1, z1}, {o1, z1}, {z1, o1},
                                        {o1, o1}, {jord, z2}, {z2, jord}};
    auto rep = check_strict_family(A, fam, samples);
    CHECK(rep.ok());
    CHECK(rep.samples == 6);
    CHECK(rep.non_isomorphic_pairs == 15);
    CHECK(rep.indecomposable_modules == 6);
    CHECK(rep.indecomposable_images == 6);
  }
  SUBCASE("isomorphic samples yield isomorphic specializations") {
    std::vector<ParamModule> samples = {{o1, z1}, {o1, z1}};
    auto rep = check_strict_family(A, fam, samples);
    CHECK(rep.ok());
    CHECK(rep.non_isomorphic_pairs == 0);
  }
  SUBCASE("a constant family is flagged") {
    TwoParamFamily flat = fam;
    flat.d[1][0][0].cx = A.zero(0, 1);
    flat.d[1][0][0].cy = A.zero(0, 1);
    std::vector<ParamModule> samples = {{z1, z1}, {o1, z1}};
    auto rep = check_strict_family(A, flat, samples);
    CHECK(!rep.ok());
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].find("specializations are isomorphic") != std::string::npos);
  }
  SUBCASE("a family missing one direction is flagged") {
    TwoParamFamily half = fam;
    half.d[1][0][0].cy = A.zero(0, 1);
    std::vector<ParamModule> samples = {{z1, z1}, {z1, o1}};
    auto rep = check_strict_family(A, half, samples);
    CHECK(!rep.ok());
  }
  SUBCASE("decomposable samples must give decomposable images") {
    std::vector<ParamModule> samples = {{z2, z2}};
    auto rep = check_strict_family(A, fam, samples);
    CHECK(rep.ok());
    CHECK(rep.indecomposable_modules == 0);
    CHECK(rep.indecomposable_images == 0);
  }
}
