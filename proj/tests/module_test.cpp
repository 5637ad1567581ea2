#include "cstar/module.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "cstar/rng.hpp"

using namespace cstar;

namespace {
Algebra alg() { return make_algebra({2, 1, 3}); }
HilbertModule mod() { return make_module(alg(), {2, 3, 1}); }
}  // namespace

TEST_CASE("inner product is sesquilinear and compatible with the action", "[module]") {
  Rng rng(17);
  HilbertModule m = mod();
  ModVec x = rng.vec(m), y = rng.vec(m);
  AlgElem b = rng.elem(m.coeff);
  CHECK((inner(x, y * b) - inner(x, y) * b).norm() < 1e-12);
  CHECK((inner(x * b, y) - b.adjoint() * inner(x, y)).norm() < 1e-12);
  CHECK((inner(x, y).adjoint() - inner(y, x)).norm() < 1e-13);
  CHECK(is_positive(inner(x, x)).positive);
  CHECK(((x * b) * b - x * (b * b)).norm() < 1e-12);
}

TEST_CASE("scalar pairing equals the Frobenius pairing of flats", "[module]") {
  Rng rng(23);
  HilbertModule m = mod();
  ModVec x = rng.vec(m), y = rng.vec(m);
  cd direct = x.flatten().dot(y.flatten());  // Eigen dot conjugates the left factor
  CHECK(std::abs(scalar_inner(x, y) - direct) < 1e-12);
  CHECK((ModVec::unflatten(m, x.flatten()) - x).norm() == 0.0);
}

TEST_CASE("rank-one operators and the standard frame", "[module]") {
  Rng rng(29);
  HilbertModule m = mod();
  ModVec x = rng.vec(m), y = rng.vec(m), z = rng.vec(m);
  CHECK((rank_one(x, y).apply(z) - x * inner(y, z)).norm() < 1e-12);
  CHECK((rank_one(x, y).adjoint() - rank_one(y, x)).norm() < 1e-13);

  auto frame = standard_frame(m);
  CHECK(static_cast<int>(frame.size()) == m.frame_size());
  AdjOp total = AdjOp::zero(m, m);
  ModVec recon = ModVec::zero(m);
  for (const ModVec& u : frame) {
    total = total + rank_one(u, u);
    recon = recon + u * inner(u, x);
  }
  CHECK((total - AdjOp::identity(m)).norm() < 1e-13);
  CHECK((recon - x).norm() < 1e-13);
}

TEST_CASE("adjointable operators have true adjoints and flat matrices", "[module]") {
  Rng rng(31);
  HilbertModule m = mod();
  AdjOp t{m, m, {}};
  for (int mi : m.mults) t.b.push_back(rng.gaussian_matrix(mi, mi));
  ModVec x = rng.vec(m), y = rng.vec(m);
  CHECK((inner(t.apply(x), y) - inner(x, t.adjoint().apply(y))).norm() < 1e-12);
  CHECK((t.apply(x).flatten() - t.flat_matrix() * x.flatten()).norm() < 1e-12);
  // operators commute with the right action
  AlgElem b = rng.elem(m.coeff);
  CHECK((t.apply(x * b) - t.apply(x) * b).norm() < 1e-12);
}

TEST_CASE("an algebra acting on itself", "[module]") {
  Rng rng(37);
  Algebra a = alg();
  AlgElem x = rng.elem(a), y = rng.elem(a);
  CHECK((left_mult_op(x).apply(elem_to_vec(y)) - elem_to_vec(x * y)).norm() < 1e-13);
  CHECK((left_mult_op(x) * left_mult_op(y) - left_mult_op(x * y)).norm() < 1e-12);
  CHECK((inner(elem_to_vec(x), elem_to_vec(y)) - x.adjoint() * y).norm() < 1e-13);
  CHECK((vec_to_elem(elem_to_vec(x)) - x).norm() == 0.0);
}

TEST_CASE("direct sums come with isometric embeddings", "[module]") {
  Rng rng(41);
  Algebra a = alg();
  HilbertModule m1 = make_module(a, {1, 2, 0}), m2 = make_module(a, {2, 0, 1});
  DirectSum d = direct_sum({m1, m2});
  CHECK(d.sum.mults == std::vector<int>{3, 2, 1});
  AdjOp total = AdjOp::zero(d.sum, d.sum);
  for (size_t i = 0; i < d.embed.size(); ++i) {
    CHECK((d.project[i] * d.embed[i] - AdjOp::identity(i == 0 ? m1 : m2)).norm() < 1e-14);
    total = total + d.embed[i] * d.project[i];
  }
  CHECK((total - AdjOp::identity(d.sum)).norm() < 1e-14);
  CHECK((d.project[1] * d.embed[0]).norm() == 0.0);
  ModVec x = rng.vec(m1);
  CHECK((inner(d.embed[0].apply(x), d.embed[0].apply(x)) - inner(x, x)).norm() < 1e-13);
}

TEST_CASE("mismatched operands are rejected", "[module]") {
  HilbertModule m = mod();
  HilbertModule other = make_module(alg(), {1, 1, 1});
  try {
    inner(ModVec::zero(m), ModVec::zero(other));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "incompatible-operands");
  }
}
