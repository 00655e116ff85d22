#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "derbox/box.hpp"

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

using namespace derbox;

namespace {

template <typename Fn>
std::optional<Err> thrown(Fn&& fn) {
  try {
    fn();
    return std::nullopt;
  } catch (const Error& e) {
    return e.code;
  }
}

// Three-level box of a square-zero loop: two parallel slices of nothing but
// levelwise dashed loops and solid connectors with zero differential.
BoxPresentation dual_box(const char* fld = "F5") {
  BoxPresentation B;
  B.field = Field::parse(fld);
  B.add_vertex("v0", 0);
  B.add_vertex("v1", 1);
  B.add_vertex("v2", 2);
  B.add_arrow("ae1", 1, 0, false);
  B.add_arrow("ae2", 2, 1, false);
  B.add_arrow("fb0", 0, 0, true);
  B.add_arrow("fb1", 1, 1, true);
  B.add_arrow("fb2", 2, 2, true);
  return B;
}

// Three-level box of a cube-zero loop: solids a_n (the loop) and b_n (its
// square), dashed loops f_n and g_n, one length-two relation at the top level.
BoxPresentation e3_box(const char* fld = "F5") {
  BoxPresentation B;
  B.field = Field::parse(fld);
  B.add_vertex("v0", 0);
  B.add_vertex("v1", 1);
  B.add_vertex("v2", 2);
  B.add_arrow("a1", 1, 0, false);
  B.add_arrow("a2", 2, 1, false);
  B.add_arrow("b1", 1, 0, false);
  B.add_arrow("b2", 2, 1, false);
  B.add_arrow("f0", 0, 0, true);
  B.add_arrow("f1", 1, 1, true);
  B.add_arrow("f2", 2, 2, true);
  B.add_arrow("g0", 0, 0, true);
  B.add_arrow("g1", 1, 1, true);
  B.add_arrow("g2", 2, 2, true);
  auto D = [&](const char* a, const char* expr) {
    B.diff[B.arrow_id.at(a)] = parse_wordsum(B, expr);
  };
  D("b1", "f0*a1 - a1*f1");
  D("b2", "f1*a2 - a2*f2");
  D("g0", "f0*f0");
  D("g1", "f1*f1");
  D("g2", "f2*f2");
  B.relations.push_back(parse_wordsum(B, "a1*a2"));
  return B;
}

// Fourth-power-zero loop: adds the cube arrows c_n / h_n and a second relation
// whose differential lands in the two-sided ideal only after cancellation.
BoxPresentation e4_box(const char* fld = "F5") {
  BoxPresentation B;
  B.field = Field::parse(fld);
  B.add_vertex("v0", 0);
  B.add_vertex("v1", 1);
  B.add_vertex("v2", 2);
  B.add_arrow("a1", 1, 0, false);
  B.add_arrow("a2", 2, 1, false);
  B.add_arrow("b1", 1, 0, false);
  B.add_arrow("b2", 2, 1, false);
  B.add_arrow("c1", 1, 0, false);
  B.add_arrow("c2", 2, 1, false);
  B.add_arrow("f0", 0, 0, true);
  B.add_arrow("f1", 1, 1, true);
  B.add_arrow("f2", 2, 2, true);
  B.add_arrow("g0", 0, 0, true);
  B.add_arrow("g1", 1, 1, true);
  B.add_arrow("g2", 2, 2, true);
  B.add_arrow("h0", 0, 0, true);
  B.add_arrow("h1", 1, 1, true);
  B.add_arrow("h2", 2, 2, true);
  auto D = [&](const char* a, const char* expr) {
    B.diff[B.arrow_id.at(a)] = parse_wordsum(B, expr);
  };
  D("b1", "f0*a1 - a1*f1");
  D("b2", "f1*a2 - a2*f2");
  D("c1", "f0*b1 + g0*a1 - a1*g1 - b1*f1");
  D("c2", "f1*b2 + g1*a2 - a2*g2 - b2*f2");
  D("g0", "f0*f0");
  D("g1", "f1*f1");
  D("g2", "f2*f2");
  D("h0", "f0*g0 + g0*f0");
  D("h1", "f1*g1 + g1*f1");
  D("h2", "f2*g2 + g2*f2");
  B.relations.push_back(parse_wordsum(B, "a1*a2"));
  B.relations.push_back(parse_wordsum(B, "a1*b2 + b1*a2"));
  return B;
}

// One solid loop with a marked invertibility polynomial.
BoxPresentation marked_box(const char* fld = "F5") {
  BoxPresentation B;
  B.field = Field::parse(fld);
  B.add_vertex("w", 0);
  B.add_arrow("s", 0, 0, false);
  B.marked[0] = MarkedLoop{0, Poly::x(B.field)};
  return B;
}

BoxRep mk_rep(const BoxPresentation& B, const std::vector<int>& dim,
              const std::map<std::string, std::vector<std::vector<int>>>& mats) {
  BoxRep M = zero_rep(B, dim);
  for (const auto& [name, rows] : mats) {
    const auto& a = B.arrows[size_t(B.arrow_id.at(name))];
    Mat m(B.field, dim[size_t(a.dst)], dim[size_t(a.src)]);
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c < m.cols; ++c) m.at(r, c) = B.field.from_int(rows[size_t(r)][size_t(c)]);
    M.m[B.arrow_id.at(name)] = std::move(m);
  }
  return M;
}

Mat phim(const BoxPresentation& B, const BoxMorphism& f, const BoxRep& M, const BoxRep& N,
         int d) {
  auto it = f.phi.find(d);
  if (it != f.phi.end()) return it->second;
  const auto& a = B.arrows[size_t(d)];
  return Mat(B.field, N.dim[size_t(a.dst)], M.dim[size_t(a.src)]);
}

bool mor_equal(const BoxPresentation& B, const BoxRep& M, const BoxRep& N, const BoxMorphism& x,
               const BoxMorphism& y) {
  for (int v = 0; v < B.num_vertices(); ++v)
    if (!(x.omega[size_t(v)] == y.omega[size_t(v)])) return false;
  for (int d : B.dashed_ids())
    if (!(phim(B, x, M, N, d) == phim(B, y, M, N, d))) return false;
  return true;
}

Mat rand_mat(const Field& F, int rows, int cols, std::mt19937_64& rng) {
  Mat m(F, rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m.at(r, c) = F.from_int(int64_t(rng() % uint64_t(F.p)));
  return m;
}

BoxRep rand_rep(const BoxPresentation& B, const std::vector<int>& dim, std::mt19937_64& rng) {
  BoxRep M = zero_rep(B, dim);
  for (int a : B.solid_ids()) {
    const auto& ar = B.arrows[size_t(a)];
    Mat m = rand_mat(B.field, dim[size_t(ar.dst)], dim[size_t(ar.src)], rng);
    if (!m.is_zero()) M.m[a] = std::move(m);
  }
  return M;
}

BoxMorphism rand_mor_data(const BoxPresentation& B, const BoxRep& M, const BoxRep& N,
                          std::mt19937_64& rng) {
  BoxMorphism f;
  for (int v = 0; v < B.num_vertices(); ++v)
    f.omega.push_back(rand_mat(B.field, N.dim[size_t(v)], M.dim[size_t(v)], rng));
  for (int d : B.dashed_ids()) {
    const auto& a = B.arrows[size_t(d)];
    Mat p = rand_mat(B.field, N.dim[size_t(a.dst)], M.dim[size_t(a.src)], rng);
    if (!p.is_zero()) f.phi[d] = std::move(p);
  }
  return f;
}

}  // namespace

TEST_CASE("word sums: algebra, printing, parsing") {
  auto B = e3_box("Q");
  REQUIRE(!check_box(B));

  BoxWord wa1{{B.arrow_id.at("a1")}};
  BoxWord wa2{{B.arrow_id.at("a2")}};
  WordSum s1 = ws_word(wa1, B.field.one());
  WordSum s2 = ws_word(wa2, B.field.one());
  WordSum prod = ws_mul(B, s1, s2);
  REQUIRE(prod.t.size() == 1);
  CHECK(prod.t.begin()->first.arrows ==
        std::vector<int>{B.arrow_id.at("a1"), B.arrow_id.at("a2")});
  CHECK(B.word_src(prod.t.begin()->first) == 2);
  CHECK(B.word_dst(prod.t.begin()->first) == 0);
  CHECK(thrown([&] { ws_mul(B, s2, s1); }) == Err::EndpointMismatch);

  WordSum sum = ws_add(prod, ws_scale(B.field.from_int(-1), prod));
  CHECK(sum.is_zero());
  CHECK(wordsum_str(B, sum) == "0");

  WordSum two = ws_add(prod, prod);
  CHECK(wordsum_str(B, two) == "2*a1*a2");
  WordSum neg = ws_scale(B.field.from_int(-1), prod);
  CHECK(wordsum_str(B, neg) == "-a1*a2");

  // printing and reparsing is the identity
  for (const char* expr : {"f0*a1 - a1*f1", "2*a1*a2", "a1*b2 + b1*a2", "0"}) {
    WordSum ws = parse_wordsum(B, expr);
    CHECK(parse_wordsum(B, wordsum_str(B, ws)).t == ws.t);
  }

  CHECK(thrown([&] { parse_wordsum(B, "a1*zz"); }) == Err::Parse);
  CHECK(thrown([&] { parse_wordsum(B, "a2*a1"); }) == Err::Parse);  // wrong order
  CHECK(thrown([&] { parse_wordsum(B, "3"); }) == Err::Parse);      // scalar-only
  CHECK(thrown([&] { parse_wordsum(B, "a1 +"); }) == Err::Parse);
  CHECK(thrown([&] { B.word_src(BoxWord{}); }) == Err::PreconditionViolated);
}

TEST_CASE("structural validation") {
  CHECK(!check_box(dual_box()));
  CHECK(!check_box(e3_box()));
  CHECK(!check_box(e4_box()));
  CHECK(!check_box(marked_box()));

  SUBCASE("solid differential needs dashed-degree one") {
    auto B = dual_box();
    B.diff[B.arrow_id.at("ae1")] = ws_word(BoxWord{{B.arrow_id.at("ae1")}}, B.field.one());
    auto bad = check_box(B);
    REQUIRE(bad.has_value());
    CHECK(bad->find("dashed-degree") != std::string::npos);
  }
  SUBCASE("dashed differential needs dashed-degree two") {
    auto B = dual_box();
    B.diff[B.arrow_id.at("fb0")] = ws_word(BoxWord{{B.arrow_id.at("fb0")}}, B.field.one());
    CHECK(check_box(B).has_value());
  }
  SUBCASE("differential endpoints must match the arrow") {
    auto B = e3_box();
    B.diff[B.arrow_id.at("b1")] = parse_wordsum(B, "f1*a2");
    auto bad = check_box(B);
    REQUIRE(bad.has_value());
    CHECK(bad->find("endpoints") != std::string::npos);
  }
  SUBCASE("relations are solid, long, and endpoint-homogeneous") {
    auto B = e3_box();
    B.relations.push_back(parse_wordsum(B, "f0*a1"));
    CHECK(check_box(B).has_value());
    B = e3_box();
    B.relations.push_back(ws_word(BoxWord{{B.arrow_id.at("a1")}}, B.field.one()));
    CHECK(check_box(B).has_value());
    B = e3_box();
    B.relations.push_back(parse_wordsum(B, "a1*a2 + a1*b2 + b1*a2"));
    CHECK(!check_box(B));  // same endpoints: fine
    B = e3_box();
    B.relations.push_back(WordSum{});
    CHECK(check_box(B).has_value());
  }
  SUBCASE("marked loops point at solid loops") {
    auto B = marked_box();
    B.add_arrow("t", 0, 0, true);
    B.marked[0] = MarkedLoop{B.arrow_id.at("t"), Poly::x(B.field)};
    CHECK(check_box(B).has_value());
    B = marked_box();
    B.marked[0].f = Poly(B.field);
    CHECK(check_box(B).has_value());
  }
  SUBCASE("broken name tables are caught") {
    auto B = dual_box();
    B.vertices.push_back("ghost");
    B.slice.push_back(0);
    CHECK(check_box(B).has_value());
  }
}

TEST_CASE("slicing and triangularity") {
  CHECK(!check_sliced(dual_box()));
  CHECK(!check_sliced(e3_box()));
  CHECK(!check_sliced(e4_box()));

  SUBCASE("solid arrows must strictly drop the slice") {
    auto B = dual_box();
    B.add_arrow("bad", 1, 1, false);
    auto v = check_sliced(B);
    REQUIRE(v.has_value());
    CHECK(v->find("bad") != std::string::npos);
    B = dual_box();
    B.add_arrow("up", 0, 2, false);
    CHECK(check_sliced(B).has_value());
  }
  SUBCASE("dashed arrows must stay within a slice") {
    auto B = dual_box();
    B.add_arrow("skew", 1, 0, true);
    auto v = check_sliced(B);
    REQUIRE(v.has_value());
    CHECK(v->find("skew") != std::string::npos);
  }
  SUBCASE("marked boxes need not be sliced") {
    auto B = marked_box();
    CHECK(check_sliced(B).has_value());  // solid loop keeps the slice
    CHECK(!check_box(B));
  }

  SUBCASE("height function") {
    auto h0 = check_triangular(dual_box());
    REQUIRE(h0.has_value());
    for (int v : h0->h) CHECK(v == 0);

    auto B = e3_box();
    auto h = check_triangular(B);
    REQUIRE(h.has_value());
    CHECK(h->h[size_t(B.arrow_id.at("a1"))] == 0);
    CHECK(h->h[size_t(B.arrow_id.at("f1"))] == 0);
    CHECK(h->h[size_t(B.arrow_id.at("b1"))] == 1);
    CHECK(h->h[size_t(B.arrow_id.at("g1"))] == 1);

    auto E4 = e4_box();
    auto h4 = check_triangular(E4);
    REQUIRE(h4.has_value());
    CHECK(h4->h[size_t(E4.arrow_id.at("c1"))] == 2);
    CHECK(h4->h[size_t(E4.arrow_id.at("h1"))] == 2);
  }
  SUBCASE("differential cycles are rejected") {
    BoxPresentation B;
    B.field = Field::parse("F5");
    B.add_vertex("v", 0);
    B.add_arrow("d1", 0, 0, true);
    B.add_arrow("d2", 0, 0, true);
    B.diff[0] = parse_wordsum(B, "d2*d2");
    B.diff[1] = parse_wordsum(B, "d1*d1");
    REQUIRE(!check_box(B));
    CHECK(!check_triangular(B).has_value());
  }
}

TEST_CASE("ideal compatibility") {
  CHECK(!check_ideal_compatibility(dual_box()));
  CHECK(!check_ideal_compatibility(e3_box()));  // differential of the relation vanishes
  CHECK(!check_ideal_compatibility(e4_box()));  // needs genuine membership

  // dropping the square relation strands the cube relation's differential
  auto B = e4_box();
  B.relations.erase(B.relations.begin());
  auto bad = check_ideal_compatibility(B);
  REQUIRE(bad.has_value());
  CHECK(bad->find("escapes") != std::string::npos);
}

TEST_CASE("representations and relation checks") {
  auto B = e3_box();

  auto M = mk_rep(B, {1, 1, 1}, {{"a1", {{1}}}, {"a2", {{0}}}, {"b1", {{2}}}, {"b2", {{3}}}});
  REQUIRE(!check_rep(B, M));
  CHECK(rep_satisfies_relations(B, M));

  auto Mbad = mk_rep(B, {1, 1, 1}, {{"a1", {{1}}}, {"a2", {{1}}}});
  CHECK(!rep_satisfies_relations(B, Mbad));

  // relation a1*a2 + ... evaluates right-to-left
  auto M2 = mk_rep(B, {1, 2, 1}, {{"a1", {{1, 0}}}, {"a2", {{0}, {1}}}});
  CHECK(rep_satisfies_relations(B, M2));  // a1 . a2 = [1 0][0;1] = 0

  SUBCASE("rep validation") {
    auto bad = zero_rep(B, {1, 1, 1});
    bad.m[B.arrow_id.at("a1")] = Mat(B.field, 2, 2);
    CHECK(check_rep(B, bad).has_value());
    bad = zero_rep(B, {1, 1, 1});
    bad.m[B.arrow_id.at("f0")] = Mat(B.field, 1, 1);
    CHECK(check_rep(B, bad).has_value());
    CHECK(thrown([&] { zero_rep(B, {1, 1}); }) == Err::PreconditionViolated);
    CHECK(thrown([&] { rep_matrix(B, M, B.arrow_id.at("f0")); }) == Err::PreconditionViolated);
  }

  SUBCASE("path evaluation") {
    Mat idv = eval_solid_path(B, M2, {}, 1, 1);
    CHECK(idv.is_identity());
    Mat comp = eval_solid_path(B, M2, {B.arrow_id.at("a1"), B.arrow_id.at("a2")}, 2, 0);
    CHECK(comp.is_zero());
    CHECK(thrown([&] { eval_solid_path(B, M2, {}, 1, 0); }) == Err::Internal);
    CHECK(thrown([&] { eval_solid_path(B, M2, {B.arrow_id.at("a1")}, 2, 0); }) == Err::Internal);
  }

}

TEST_CASE("marked loop invertibility") {
  auto MB = marked_box();  // f = t
  CHECK(rep_satisfies_marked(MB, mk_rep(MB, {1}, {{"s", {{2}}}})));
  CHECK(!rep_satisfies_marked(MB, mk_rep(MB, {1}, {{"s", {{0}}}})));
  CHECK(rep_satisfies_marked(MB, zero_rep(MB, {0})));  // vacuous at dimension zero
  CHECK(rep_satisfies_marked(MB, mk_rep(MB, {2}, {{"s", {{1, 1}, {0, 1}}}})));

  MB.marked[0].f = Poly(MB.field, {MB.field.from_int(-1), MB.field.one()});  // t - 1
  CHECK(!rep_satisfies_marked(MB, mk_rep(MB, {1}, {{"s", {{1}}}})));
  CHECK(rep_satisfies_marked(MB, mk_rep(MB, {1}, {{"s", {{3}}}})));
}

TEST_CASE("morphism constraints and membership") {
  auto B = e3_box();
  auto cons = morphism_constraints(B);
  REQUIRE(cons.size() == 4);  // a1 a2 b1 b2
  for (const auto& sc : cons) {
    if (sc.arrow == B.arrow_id.at("a1") || sc.arrow == B.arrow_id.at("a2"))
      CHECK(sc.terms.empty());
  }
  bool found_left = false, found_right = false;
  for (const auto& sc : cons) {
    if (sc.arrow != B.arrow_id.at("b1")) continue;
    REQUIRE(sc.terms.size() == 2);
    for (const auto& t : sc.terms) {
      if (t.dashed == B.arrow_id.at("f0")) {
        CHECK(t.left.empty());
        CHECK(t.right == std::vector<int>{B.arrow_id.at("a1")});
        CHECK(t.c == B.field.one());
        found_left = true;
      }
      if (t.dashed == B.arrow_id.at("f1")) {
        CHECK(t.left == std::vector<int>{B.arrow_id.at("a1")});
        CHECK(t.right.empty());
        CHECK(t.c == B.field.from_int(-1));
        found_right = true;
      }
    }
  }
  CHECK(found_left);
  CHECK(found_right);

  auto M = mk_rep(B, {1, 1, 1}, {{"a1", {{1}}}, {"a2", {{0}}}, {"b1", {{2}}}, {"b2", {{3}}}});
  auto id = identity_box_morphism(B, M);
  CHECK(is_box_morphism(B, M, M, id));
  CHECK(is_isomorphism_boxrep(B, id));

  // omega = id forces phi_f0 = phi_f1 through the b1 constraint
  auto f = id;
  f.phi[B.arrow_id.at("f0")] = Mat::identity(B.field, 1);
  f.phi[B.arrow_id.at("f1")] = Mat::identity(B.field, 1);
  f.phi[B.arrow_id.at("f2")] = Mat::identity(B.field, 1) * B.field.from_int(2);
  f.phi[B.arrow_id.at("g0")] = Mat::identity(B.field, 1) * B.field.from_int(3);
  CHECK(is_box_morphism(B, M, M, f));
  auto g = f;
  g.phi[B.arrow_id.at("f1")] = Mat::identity(B.field, 1) * B.field.from_int(2);
  CHECK(!is_box_morphism(B, M, M, g));

  auto z = zero_box_morphism(B, M, M);
  CHECK(is_box_morphism(B, M, M, z));
  CHECK(!is_isomorphism_boxrep(B, z));

  // f + (-1) f = 0
  auto diff = add_box_morphisms(B, f, f, B.field.from_int(-1));
  CHECK(mor_equal(B, M, M, diff, z));
}

TEST_CASE("hom spaces") {
  auto B = dual_box();
  auto M = mk_rep(B, {1, 1, 1}, {{"ae1", {{1}}}, {"ae2", {{1}}}});
  auto H = hom_box_morphisms(B, M, M);
  CHECK(H.size() == 4);  // scalar chain part + three free dashed loops
  for (const auto& h : H) CHECK(is_box_morphism(B, M, M, h));

  auto N = mk_rep(B, {1, 1, 1}, {{"ae1", {{0}}}, {"ae2", {{1}}}});
  auto H2 = hom_box_morphisms(B, M, N);
  for (const auto& h : H2) CHECK(is_box_morphism(B, M, N, h));

  auto Z = zero_rep(B, {0, 0, 0});
  CHECK(hom_box_morphisms(B, M, Z).empty());

  auto E = e3_box();
  auto ME = mk_rep(E, {1, 1, 1}, {{"a1", {{1}}}, {"a2", {{0}}}, {"b1", {{2}}}, {"b2", {{3}}}});
  auto HE = hom_box_morphisms(E, ME, ME);
  CHECK(!HE.empty());
  for (const auto& h : HE) CHECK(is_box_morphism(E, ME, ME, h));
  // the identity lies in the span: some basis element has invertible omega
  // after combination; cheap check: hom of the zero rep with itself is empty
  CHECK(hom_box_morphisms(E, zero_rep(E, {0, 0, 0}), zero_rep(E, {0, 0, 0})).empty());
}

TEST_CASE("composition is associative on raw morphism data") {
  auto B = e4_box();
  std::mt19937_64 rng(0xA550Cu);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<int>> dims(4);
    for (auto& dv : dims) {
      dv.resize(size_t(B.num_vertices()));
      for (auto& d : dv) d = int(rng() % 3);
    }
    BoxRep M1 = rand_rep(B, dims[0], rng);
    BoxRep M2 = rand_rep(B, dims[1], rng);
    BoxRep M3 = rand_rep(B, dims[2], rng);
    BoxRep M4 = rand_rep(B, dims[3], rng);
    BoxMorphism f = rand_mor_data(B, M1, M2, rng);
    BoxMorphism g = rand_mor_data(B, M2, M3, rng);
    BoxMorphism h = rand_mor_data(B, M3, M4, rng);
    BoxMorphism left = compose_box_morphisms(B, M1, M2, M4, compose_box_morphisms(B, M2, M3, M4, h, g), f);
    BoxMorphism right = compose_box_morphisms(B, M1, M3, M4, h, compose_box_morphisms(B, M1, M2, M3, g, f));
    REQUIRE(mor_equal(B, M1, M4, left, right));
  }
}

TEST_CASE("composition preserves morphisms and units act as identities") {
  auto B = e3_box();
  std::mt19937_64 rng(0xC0FFEEu);
  auto M = rand_rep(B, {2, 1, 2}, rng);
  M.m.erase(B.arrow_id.at("a2"));
  M.m.erase(B.arrow_id.at("b2"));  // kill top maps so the relation holds
  auto N = rand_rep(B, {1, 2, 1}, rng);
  N.m.erase(B.arrow_id.at("a2"));
  N.m.erase(B.arrow_id.at("b2"));
  auto HMN = hom_box_morphisms(B, M, N);
  auto HNM = hom_box_morphisms(B, N, M);
  REQUIRE(!HMN.empty());
  REQUIRE(!HNM.empty());
  int checked = 0;
  for (const auto& f : HMN) {
    for (const auto& g : HNM) {
      auto gf = compose_box_morphisms(B, M, N, M, g, f);
      CHECK(is_box_morphism(B, M, M, gf));
      if (++checked >= 25) break;
    }
    if (checked >= 25) break;
  }

  auto idM = identity_box_morphism(B, M);
  auto idN = identity_box_morphism(B, N);
  const auto& f = HMN.front();
  CHECK(mor_equal(B, M, N, compose_box_morphisms(B, M, N, N, idN, f), f));
  CHECK(mor_equal(B, M, N, compose_box_morphisms(B, M, M, N, f, idM), f));
}

TEST_CASE("inversion") {
  auto B = e3_box();
  auto M = mk_rep(B, {1, 1, 1}, {{"a1", {{1}}}, {"a2", {{0}}}, {"b1", {{2}}}, {"b2", {{3}}}});
  auto f = identity_box_morphism(B, M);
  f.phi[B.arrow_id.at("f0")] = Mat::identity(B.field, 1);
  f.phi[B.arrow_id.at("f1")] = Mat::identity(B.field, 1);
  f.phi[B.arrow_id.at("f2")] = Mat::identity(B.field, 1) * B.field.from_int(2);
  f.phi[B.arrow_id.at("g1")] = Mat::identity(B.field, 1) * B.field.from_int(4);
  REQUIRE(is_box_morphism(B, M, M, f));
  auto g = invert_box_morphism(B, M, M, f);
  CHECK(is_box_morphism(B, M, M, g));
  auto gf = compose_box_morphisms(B, M, M, M, g, f);
  auto fg = compose_box_morphisms(B, M, M, M, f, g);
  auto id = identity_box_morphism(B, M);
  CHECK(mor_equal(B, M, M, gf, id));
  CHECK(mor_equal(B, M, M, fg, id));

  // bigger blocks, change of basis plus dashed noise found by the hom solver
  std::mt19937_64 rng(0xBEEF5u);
  auto M2 = rand_rep(B, {2, 2, 2}, rng);
  M2.m.erase(B.arrow_id.at("a2"));
  M2.m.erase(B.arrow_id.at("b2"));
  auto H = hom_box_morphisms(B, M2, M2);
  REQUIRE(!H.empty());
  BoxMorphism iso = identity_box_morphism(B, M2);
  for (size_t i = 0; i < H.size(); ++i)
    iso = add_box_morphisms(B, iso, H[i], B.field.from_int(int64_t(i % 3)));
  if (is_isomorphism_boxrep(B, iso)) {
    auto inv = invert_box_morphism(B, M2, M2, iso);
    CHECK(mor_equal(B, M2, M2, compose_box_morphisms(B, M2, M2, M2, inv, iso),
                    identity_box_morphism(B, M2)));
    CHECK(mor_equal(B, M2, M2, compose_box_morphisms(B, M2, M2, M2, iso, inv),
                    identity_box_morphism(B, M2)));
  }

  auto z = zero_box_morphism(B, M, M);
  CHECK(thrown([&] { invert_box_morphism(B, M, M, z); }) == Err::PreconditionViolated);
}

TEST_CASE("isomorphism search") {
  auto B = dual_box();
  auto M = mk_rep(B, {1, 1, 1}, {{"ae1", {{1}}}, {"ae2", {{1}}}});
  auto N = mk_rep(B, {1, 1, 1}, {{"ae1", {{2}}}, {"ae2", {{3}}}});
  auto iso = iso_box_reps(B, M, N);
  REQUIRE(iso.has_value());
  CHECK(is_box_morphism(B, M, N, *iso));
  CHECK(is_isomorphism_boxrep(B, *iso));
  auto inv = invert_box_morphism(B, M, N, *iso);
  CHECK(mor_equal(B, M, M, compose_box_morphisms(B, M, N, M, inv, *iso),
                  identity_box_morphism(B, M)));

  auto N0 = mk_rep(B, {1, 1, 1}, {{"ae1", {{0}}}, {"ae2", {{1}}}});
  CHECK(!iso_box_reps(B, M, N0).has_value());
  CHECK(!iso_box_reps(B, M, zero_rep(B, {1, 1, 0})).has_value());  // dim mismatch

  auto Z1 = zero_rep(B, {0, 0, 0});
  auto Z2 = zero_rep(B, {0, 0, 0});
  auto zi = iso_box_reps(B, Z1, Z2);
  REQUIRE(zi.has_value());
  CHECK(is_isomorphism_boxrep(B, *zi));

  // conjugated representations are isomorphic
  auto E = e3_box();
  std::mt19937_64 rng(0x15011u);
  auto ME = rand_rep(E, {2, 2, 2}, rng);
  ME.m.erase(E.arrow_id.at("a2"));
  ME.m.erase(E.arrow_id.at("b2"));
  std::vector<Mat> T;
  for (int v = 0; v < 3; ++v) {
    Mat t(E.field, 2, 2);
    do {
      t = rand_mat(E.field, 2, 2, rng);
    } while (!t.inverse().has_value());
    T.push_back(t);
  }
  auto NE = zero_rep(E, {2, 2, 2});
  for (int a : E.solid_ids()) {
    const auto& ar = E.arrows[size_t(a)];
    Mat m = T[size_t(ar.dst)] * rep_matrix(E, ME, a) * *T[size_t(ar.src)].inverse();
    if (!m.is_zero()) NE.m[a] = std::move(m);
  }
  auto isoE = iso_box_reps(E, ME, NE);
  REQUIRE(isoE.has_value());
  CHECK(is_box_morphism(E, ME, NE, *isoE));
  CHECK(is_isomorphism_boxrep(E, *isoE));
}

TEST_CASE("box serialization round trips") {
  for (auto maker : {e3_box, e4_box, dual_box, marked_box}) {
    auto B = maker("F5");
    std::string text = serialize_box(B);
    auto C = parse_box(text);
    CHECK(serialize_box(C) == text);
    CHECK(C.vertices == B.vertices);
    CHECK(C.slice == B.slice);
    CHECK(C.relations.size() == B.relations.size());
    CHECK(C.marked.size() == B.marked.size());
    for (size_t i = 0; i < B.arrows.size(); ++i) {
      CHECK(C.arrows[i].name == B.arrows[i].name);
      CHECK(C.arrows[i].src == B.arrows[i].src);
      CHECK(C.arrows[i].dst == B.arrows[i].dst);
      CHECK(C.arrows[i].dashed == B.arrows[i].dashed);
      CHECK(C.diff_of(int(i)).t == B.diff_of(int(i)).t);
    }
  }

  auto MB = marked_box("Q");
  MB.marked[0].f = Poly(MB.field, {MB.field.from_int(-1), MB.field.zero(), MB.field.one()});
  auto C = parse_box(serialize_box(MB));
  CHECK(C.marked.at(0).f == MB.marked.at(0).f);

  SUBCASE("parse errors") {
    CHECK(thrown([] { parse_box("vertex v slice 0\n"); }) == Err::Parse);
    CHECK(thrown([] { parse_box("box field F5\nnonsense here\n"); }) == Err::Parse);
    CHECK(thrown([] { parse_box("box field F5\nsolid a: u -> v\n"); }) == Err::Parse);
    CHECK(thrown([] { parse_box("box field F5\nvertex v slice 0\nd q = 0\n"); }) == Err::Parse);
    CHECK(thrown([] {
            parse_box("box field F5\nvertex v slice 0\nsolid a: v -> v\nd a = a\n");
          }) == Err::Parse);
    CHECK(thrown([] {
            parse_box("box field F5\nvertex v slice 0\nvertex v slice 1\n");
          }) == Err::Parse);
    CHECK(thrown([] {
            parse_box("box field F5\nvertex v slice 0\nsolid a: v -> v\nrelation a\n");
          }) == Err::Parse);
  }
}

TEST_CASE("zero-dimensional corners") {
  auto B = dual_box();
  auto Z = zero_rep(B, {0, 0, 0});
  auto id = identity_box_morphism(B, Z);
  CHECK(is_box_morphism(B, Z, Z, id));
  CHECK(is_isomorphism_boxrep(B, id));
  auto inv = invert_box_morphism(B, Z, Z, id);
  CHECK(mor_equal(B, Z, Z, inv, id));
  CHECK(rep_satisfies_relations(B, Z));

  auto Mixed = mk_rep(B, {1, 0, 1}, {});
  CHECK(!check_rep(B, Mixed).has_value());
  auto H = hom_box_morphisms(B, Mixed, Mixed);
  CHECK(H.size() == 4);  // omega and dashed loop at v0 and at v2; middle vertex is empty
  for (const auto& h : H) CHECK(is_box_morphism(B, Mixed, Mixed, h));
}
