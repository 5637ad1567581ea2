#include "cstar/positivity.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "cstar/rng.hpp"

using namespace cstar;

TEST_CASE("the transpose map is positive but not completely positive", "[positivity]") {
  Algebra a = make_algebra({2});
  AlgMap transpose{a, a, {}};
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) transpose.img.push_back(AlgElem::unit(a, 0, l, k));
  CPResult res = is_completely_positive(transpose);
  CHECK_FALSE(res.cp);
  CHECK(std::abs(res.min_eigenvalue + 1.0) < 1e-12);  // Choi eigenvalue -1
  CHECK_THROWS_AS(ksgns(transpose), Error);
  try {
    ksgns(transpose);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "not-completely-positive");
  }
}

TEST_CASE("random completely positive maps certify as such", "[positivity]") {
  Rng rng(61);
  for (int trial = 0; trial < 5; ++trial) {
    Algebra a = rng.algebra(2, 3), b = rng.algebra(2, 3);
    AlgMap rho = random_cp_map(rng, a, b, 2);
    CHECK(is_completely_positive(rho).cp);
    CHECK((rho.apply(AlgElem::identity(a)) - AlgElem::identity(b)).norm() < 1e-12);
  }
}

TEST_CASE("dilation reproduces the map and is minimal", "[positivity]") {
  Rng rng(67);
  for (int trial = 0; trial < 6; ++trial) {
    Algebra a = rng.algebra(2, 3), b = rng.algebra(2, 3);
    AlgMap rho = random_cp_map(rng, a, b, 2);
    DilationResult d = ksgns(rho);
    CHECK(d.corr.phi.is_star_hom());
    CHECK(d.corr.phi.is_unital());
    CHECK(d.action_residual < 1e-10);
    CHECK(d.v_residual < 1e-10);
    Correspondence orig{a, module_of(b), as_op_map(rho)};
    CHECK(dilation_compression_residual(orig, d) < 1e-10);
    CHECK(dilation_is_minimal(orig, d));
    CHECK(isometry_defect(d.v) < 1e-10);  // unital map -> isometric embedding
  }
}

TEST_CASE("dilating a homomorphism gives back the same correspondence", "[positivity]") {
  Rng rng(71);
  Algebra a = make_algebra({2, 1});
  HomWithStructure h = random_star_hom(rng, a, 2, 2);
  DilationResult d = ksgns(h.map);
  Correspondence orig{a, module_of(h.map.cod), as_op_map(h.map)};
  auto iso = find_unitary_iso(orig, d.corr, rng);
  REQUIRE(iso.has_value());
  CHECK(iso_residual(orig, d.corr, *iso) < 1e-9);
}

TEST_CASE("unitary isomorphism decision is exact", "[positivity]") {
  Rng rng(73);
  Algebra a = make_algebra({1, 1});  // functions on two points
  Algebra b = make_algebra({1});
  HilbertModule m = make_module(b, {2});
  // X: the two points act as diag(z, w); Y: both slots act as z.
  OpMap phix{a, m, {}}, phiy{a, m, {}};
  AdjOp p0 = AdjOp::zero(m, m), p1 = AdjOp::zero(m, m);
  p0.b[0](0, 0) = 1.0;
  p1.b[0](1, 1) = 1.0;
  phix.img = {p0, p1};
  AdjOp q0 = AdjOp::identity(m), q1 = AdjOp::zero(m, m);
  phiy.img = {q0, q1};
  Correspondence x{a, m, phix}, y{a, m, phiy};
  CHECK_FALSE(find_unitary_iso(x, y, rng).has_value());
  CHECK(find_unitary_iso(x, x, rng).has_value());

  // conjugating by a random module unitary is undone exactly
  AdjOp u = rng.module_unitary(m);
  OpMap conj{a, m, {}};
  for (const AdjOp& t : phix.img) conj.img.push_back(u * t * u.adjoint());
  Correspondence xc{a, m, conj};
  auto iso = find_unitary_iso(x, xc, rng);
  REQUIRE(iso.has_value());
  CHECK(iso_residual(x, xc, *iso) < 1e-10);
}

TEST_CASE("composition satisfies the identity laws up to unitaries", "[positivity]") {
  Rng rng(79);
  for (int trial = 0; trial < 4; ++trial) {
    Algebra a = rng.algebra(2, 2), b = rng.algebra(2, 2);
    Correspondence x = random_hom_correspondence(rng, a, b, 2);
    Correspondence right = compose_positive(x, identity_correspondence(b));
    auto iso_r = find_unitary_iso(x, right, rng);
    REQUIRE(iso_r.has_value());
    CHECK(iso_residual(x, right, *iso_r) < 1e-9);
    Correspondence left = compose_positive(identity_correspondence(a), x);
    auto iso_l = find_unitary_iso(x, left, rng);
    REQUIRE(iso_l.has_value());
    CHECK(iso_residual(x, left, *iso_l) < 1e-9);
  }
}

TEST_CASE("composition is associative up to unitaries", "[positivity]") {
  Rng rng(83);
  for (int trial = 0; trial < 3; ++trial) {
    Algebra a = rng.algebra(2, 2), b = rng.algebra(2, 2), c = rng.algebra(2, 2),
            d = rng.algebra(1, 2);
    Correspondence x = random_hom_correspondence(rng, a, b, 2);
    Correspondence y = random_hom_correspondence(rng, b, c, 2);
    Correspondence z = random_hom_correspondence(rng, c, d, 2);
    Correspondence lhs = compose_positive(compose_positive(x, y), z);
    Correspondence rhs = compose_positive(x, compose_positive(y, z));
    auto iso = find_unitary_iso(lhs, rhs, rng);
    REQUIRE(iso.has_value());
    CHECK(iso_residual(lhs, rhs, *iso) < 1e-8);
  }
}

TEST_CASE("dilation turns homomorphism composition into correspondence composition",
          "[positivity]") {
  Rng rng(89);
  for (int trial = 0; trial < 3; ++trial) {
    Algebra a = rng.algebra(2, 2);
    HomWithStructure h1 = random_star_hom(rng, a, 2, 1);
    HomWithStructure h2 = random_star_hom(rng, h1.map.cod, 2, 1);
    Correspondence f_comp = ksgns(compose(h2.map, h1.map)).corr;
    Correspondence comp_f = compose_positive(ksgns(h1.map).corr, ksgns(h2.map).corr);
    auto iso = find_unitary_iso(f_comp, comp_f, rng);
    REQUIRE(iso.has_value());
    CHECK(iso_residual(f_comp, comp_f, *iso) < 1e-8);
  }
}

TEST_CASE("for completely positive maps composition embeds laxly", "[positivity]") {
  // The composite dilation sits isometrically and covariantly inside the
  // composition of the dilations: 1 (x) (1 (x) c) compresses the composed
  // left action back to the composed map.
  Rng rng(90);
  Algebra a = rng.algebra(2, 2), b = rng.algebra(2, 2), c = rng.algebra(2, 2);
  AlgMap rho = random_cp_map(rng, a, b, 2);
  AlgMap sigma = random_cp_map(rng, b, c, 2);
  DilationResult drho = ksgns(rho), dsigma = ksgns(sigma);
  CompositionResult comp = compose_positive_full(drho.corr, dsigma.corr);

  HilbertModule cmod = module_of(c);
  ModVec xv = drho.v.apply(elem_to_vec(AlgElem::identity(b)));
  Mat w_flat(comp.corr.mod.flat_dim(), cmod.flat_dim());
  for (int q = 0; q < cmod.flat_dim(); ++q) {
    ModVec basis = ModVec::unflatten(cmod, Vec(Vec::Unit(cmod.flat_dim(), q)));
    w_flat.col(q) = compose_vector(comp, xv, dsigma.v.apply(basis)).flatten();
  }
  auto [w, wres] = adjop_from_flat(comp.corr.mod, cmod, w_flat);
  CHECK(wres < 1e-10);
  CHECK(isometry_defect(w) < 1e-10);
  AlgMap composite = compose(sigma, rho);
  for (int p = 0; p < a.vec_dim(); ++p) {
    AdjOp compressed = w.adjoint() * comp.corr.phi.img[p] * w;
    CHECK((compressed - left_mult_op(composite.img[p])).norm() < 1e-9);
  }
}

TEST_CASE("dilation is idempotent and fixes homomorphism correspondences", "[positivity]") {
  Rng rng(97);
  Algebra a = make_algebra({2, 1}), b = make_algebra({1, 2});
  Correspondence x = random_hom_correspondence(rng, a, b, 2);
  DilationResult once = ksgns_dilate(x);
  auto fixed = find_unitary_iso(x, once.corr, rng);
  REQUIRE(fixed.has_value());
  DilationResult twice = ksgns_dilate(once.corr);
  auto idem = find_unitary_iso(once.corr, twice.corr, rng);
  REQUIRE(idem.has_value());

  // A completely positive non-homomorphism action dilates to something
  // genuinely bigger: the left identity law fails.
  HilbertModule m = make_module(b, {2, 2});
  Correspondence cp_corr = random_cp_correspondence(rng, a, m, 2);
  Correspondence left = compose_positive(identity_correspondence(a), cp_corr);
  CHECK(left.mod.mults != cp_corr.mod.mults);
  auto no_iso = find_unitary_iso(cp_corr, left, rng);
  CHECK_FALSE(no_iso.has_value());
  // ... but composing with the identity is exactly dilation.
  DilationResult dil = ksgns_dilate(cp_corr);
  auto same = find_unitary_iso(left, dil.corr, rng);
  REQUIRE(same.has_value());
  CHECK(iso_residual(left, dil.corr, *same) < 1e-9);
}

TEST_CASE("a Morita equivalence composes to identities both ways", "[positivity]") {
  Rng rng(101);
  Algebra m2 = make_algebra({2}), c = make_algebra({1});
  // X: rows, a module over scalars carrying the defining action of M_2.
  HilbertModule xm = make_module(c, {2});
  OpMap phix{m2, xm, {}};
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) {
      AdjOp t = AdjOp::zero(xm, xm);
      t.b[0](k, l) = 1.0;
      phix.img.push_back(t);
    }
  Correspondence x{m2, xm, phix};
  // Y: columns, a module over M_2 on which scalars act as scalars.
  HilbertModule ym = make_module(m2, {1});
  OpMap phiy{c, ym, {AdjOp::identity(ym)}};
  Correspondence y{c, ym, phiy};

  Correspondence xy = compose_positive(x, y);
  auto iso1 = find_unitary_iso(xy, identity_correspondence(m2), rng);
  REQUIRE(iso1.has_value());
  CHECK(iso_residual(xy, identity_correspondence(m2), *iso1) < 1e-10);
  Correspondence yx = compose_positive(y, x);
  auto iso2 = find_unitary_iso(yx, identity_correspondence(c), rng);
  REQUIRE(iso2.has_value());
  CHECK(iso_residual(yx, identity_correspondence(c), *iso2) < 1e-10);
}

TEST_CASE("conditional expectations from structured inclusions", "[positivity]") {
  Rng rng(103);
  Algebra b = make_algebra({2, 1});
  HomWithStructure inc = random_star_hom(rng, b, 2, 2);
  AlgMap exp = conditional_expectation_for(inc);
  ExpectationResult res = is_conditional_expectation(exp, inc.map);
  CHECK(res.ok);
  CHECK(res.retraction_residual < 1e-12);
  CHECK(res.bimodule_residual < 1e-11);
}

TEST_CASE("quotients of completely positive maps by ideals", "[positivity]") {
  Rng rng(107);
  Algebra a = make_algebra({2, 1, 2}), b = make_algebra({1, 2});
  AlgMap rho = random_cp_map(rng, a, b, 1);
  // Build a map that respects the ideal pair by zeroing what the domain
  // ideal hits: rho'(x) = rho(x restricted to the complement), then check
  // the induced map.
  Ideal ideal_a = make_ideal(a, {1, 0, 0});
  Ideal ideal_b = make_ideal(b, {0, 0});
  AlgMap resp{a, b, {}};
  for (int p = 0; p < a.vec_dim(); ++p) {
    AlgElem unit = AlgMap::identity(a).img[p];
    AlgElem masked = quotient_splitting(quotient_map(unit, ideal_a), ideal_a);
    resp.img.push_back(rho.apply(masked));
  }
  AlgMap induced = quotient_cp(resp, ideal_a, ideal_b);
  CHECK(induced.dom.blocks == std::vector<int>{1, 2});
  CHECK(induced.cod.blocks == b.blocks);
  // the induced map composes correctly with quotient and splitting
  AlgElem test = rng.elem(induced.dom);
  AlgElem via_lift = resp.apply(quotient_splitting(test, ideal_a));
  CHECK((induced.apply(test) - quotient_map(via_lift, ideal_b)).norm() < 1e-12);

  // the normalized trace map hits every block, so it cannot respect a
  // nontrivial domain ideal mapped to the zero ideal
  AlgMap trace_map{a, b, {}};
  for (int p = 0; p < a.vec_dim(); ++p) {
    AlgElem unit = AlgMap::identity(a).img[p];
    trace_map.img.push_back((unit.trace() / static_cast<double>(a.total_dim())) *
                            AlgElem::identity(b));
  }
  try {
    quotient_cp(trace_map, ideal_a, ideal_b);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "ideal-not-respected");
  }
}
