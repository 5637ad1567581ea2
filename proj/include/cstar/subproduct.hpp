// Subproduct systems of finite-dimensional Hilbert spaces: a family of
// fibers E_k inside the tensor powers of a one-particle space C^d, given by
// projections p_k with E_{n+m} contained in E_n (x) E_m, together with the
// compressed creation operators on the truncated tower of fibers.
#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "cstar/fock.hpp"
#include "cstar/tensor.hpp"

namespace cstar {

struct SubproductSystem {
  int d = 0;               // dimension of the one-particle space
  std::vector<Mat> p;      // p[k]: orthogonal projection on (C^d)^{(x)k}
  std::vector<Mat> embed;  // embed[k]: isometry of the fiber onto range p[k]

  int top() const { return static_cast<int>(p.size()) - 1; }
  int fiber_dim(int k) const { return static_cast<int>(embed[k].cols()); }
  int ambient_dim(int k) const { return static_cast<int>(p[k].rows()); }

  std::vector<int> fiber_offsets() const {
    std::vector<int> off(p.size() + 1, 0);
    for (size_t k = 0; k < p.size(); ++k) off[k + 1] = off[k] + fiber_dim(static_cast<int>(k));
    return off;
  }
  std::vector<int> ambient_offsets() const {
    std::vector<int> off(p.size() + 1, 0);
    for (size_t k = 0; k < p.size(); ++k) off[k + 1] = off[k] + ambient_dim(static_cast<int>(k));
    return off;
  }
  int tower_dim() const { return fiber_offsets().back(); }
  int ambient_tower_dim() const { return ambient_offsets().back(); }
};

/// Validates the family of projections and extracts fiber coordinates.
/// Throws "inconsistent-subproduct" when some E_{n+m} fails to sit inside
/// E_n (x) E_m.
inline SubproductSystem make_subproduct(int d, std::vector<Mat> projections,
                                        double tol = kDefaultTol) {
  require(d >= 1, "invalid-argument", "one-particle dimension must be positive");
  require(!projections.empty(), "invalid-argument", "need at least the vacuum projection");
  SubproductSystem s;
  s.d = d;
  s.p = std::move(projections);
  int dim = 1;
  for (int k = 0; k <= s.top(); ++k) {
    require(s.p[k].rows() == dim && s.p[k].cols() == dim, "invalid-argument",
            "projection has the wrong ambient dimension");
    require(operator_norm(Mat(s.p[k] * s.p[k] - s.p[k])) < std::max(tol, 1e-10) &&
                operator_norm(Mat(s.p[k].adjoint() - s.p[k])) < std::max(tol, 1e-10),
            "invalid-argument", "fiber projections must be orthogonal projections");
    dim *= d;
  }
  require(operator_norm(Mat(s.p[0] - Mat::Identity(1, 1))) < 1e-12, "invalid-argument",
          "the vacuum fiber must be the full scalar line");
  for (int n = 1; n <= s.top(); ++n)
    for (int m = 1; n + m <= s.top(); ++m)
      require(operator_norm(Mat(kron(s.p[n], s.p[m]) * s.p[n + m] - s.p[n + m])) <
                  std::max(tol, 1e-9),
              "inconsistent-subproduct",
              "a fiber escapes the tensor product of two earlier fibers");
  for (int k = 0; k <= s.top(); ++k) {
    GramQuotient g = gram_quotient(s.p[k], tol);
    s.embed.push_back(g.s);  // for a projection the section is an isometry
  }
  return s;
}

/// Dense matrix on the truncated tower of fibers, given blockwise.
inline Mat fiber_tower_matrix(const SubproductSystem& s,
                              const std::vector<std::pair<std::pair<int, int>, Mat>>& blocks) {
  std::vector<int> off = s.fiber_offsets();
  Mat m = Mat::Zero(s.tower_dim(), s.tower_dim());
  for (const auto& [key, b] : blocks)
    m.block(off[key.first], off[key.second], s.fiber_dim(key.first), s.fiber_dim(key.second)) =
        b;
  return m;
}

/// Creation by an ambient vector on the full tensor-power tower (no fiber
/// compression): blocks (p+k, k) = xi (x) id.
inline Mat full_creation(const SubproductSystem& s, const Vec& xi, int p) {
  require(0 <= p && p <= s.top(), "invalid-argument", "creation level out of range");
  require(xi.size() == s.ambient_dim(p), "incompatible-operands",
          "vector does not live on its tensor power");
  std::vector<int> off = s.ambient_offsets();
  Mat m = Mat::Zero(s.ambient_tower_dim(), s.ambient_tower_dim());
  Mat col = xi;
  for (int k = 0; p + k <= s.top(); ++k)
    m.block(off[p + k], off[k], s.ambient_dim(p + k), s.ambient_dim(k)) =
        kron(col, Mat::Identity(s.ambient_dim(k), s.ambient_dim(k)));
  return m;
}

/// The block-diagonal projection onto the fibers, on the full tower.
inline Mat tower_projection(const SubproductSystem& s) {
  std::vector<int> off = s.ambient_offsets();
  Mat m = Mat::Zero(s.ambient_tower_dim(), s.ambient_tower_dim());
  for (int k = 0; k <= s.top(); ++k)
    m.block(off[k], off[k], s.ambient_dim(k), s.ambient_dim(k)) = s.p[k];
  return m;
}

/// The block-diagonal isometry from the fiber tower into the full tower.
inline Mat tower_embed(const SubproductSystem& s) {
  std::vector<int> offa = s.ambient_offsets(), offf = s.fiber_offsets();
  Mat m = Mat::Zero(s.ambient_tower_dim(), s.tower_dim());
  for (int k = 0; k <= s.top(); ++k)
    m.block(offa[k], offf[k], s.ambient_dim(k), s.fiber_dim(k)) = s.embed[k];
  return m;
}

/// Compression of a full-tower operator to the fiber tower.
inline Mat sub_compress(const SubproductSystem& s, const Mat& full) {
  Mat e = tower_embed(s);
  return e.adjoint() * full * e;
}

/// Projected creation by a fiber vector xi in E_p: blocks (p+k, k) given by
/// compressing xi (x) id between the fibers.
inline Mat sub_creation(const SubproductSystem& s, const Vec& xi, int p) {
  require(0 <= p && p <= s.top(), "invalid-argument", "creation level out of range");
  require(xi.size() == s.fiber_dim(p), "incompatible-operands",
          "vector does not live on its fiber");
  return sub_compress(s, full_creation(s, Vec(s.embed[p] * xi), p));
}

/// The matrix of the permutation of tensor factors on (C^d)^{(x)k}.
inline Mat permutation_matrix(int d, const std::vector<int>& perm) {
  int k = static_cast<int>(perm.size());
  int dim = 1;
  for (int j = 0; j < k; ++j) dim *= d;
  Mat m = Mat::Zero(dim, dim);
  std::vector<int> digits(k);
  for (int idx = 0; idx < dim; ++idx) {
    int rest = idx;
    for (int j = k - 1; j >= 0; --j) {
      digits[j] = rest % d;
      rest /= d;
    }
    int out = 0;
    for (int j = 0; j < k; ++j) out = out * d + digits[perm[j]];
    m(out, idx) = 1;
  }
  return m;
}

/// The symmetrizer: the average of all permutations of the tensor factors.
inline Mat symmetric_projection(int d, int k) {
  if (k == 0) return Mat::Identity(1, 1);
  std::vector<int> perm(k);
  for (int j = 0; j < k; ++j) perm[j] = j;
  int dim = 1;
  for (int j = 0; j < k; ++j) dim *= d;
  Mat acc = Mat::Zero(dim, dim);
  int count = 0;
  do {
    acc += permutation_matrix(d, perm);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return acc / static_cast<double>(count);
}

/// The symmetric subproduct system: fibers are the symmetric tensors.
inline SubproductSystem symmetric_subproduct(int d, int levels, double tol = kDefaultTol) {
  std::vector<Mat> ps;
  for (int k = 0; k <= levels; ++k) ps.push_back(symmetric_projection(d, k));
  return make_subproduct(d, std::move(ps), tol);
}

/// The diagonal Fock operator cutting the tower of a d-dimensional
/// correspondence over scalars down to the subproduct fibers.  The tower's
/// levels are identified with plain tensor powers through its recorded
/// quotient maps.
inline FockOp subproduct_projection(const SubproductSystem& s, const FockTower& t) {
  require(t.x.left.vec_dim() == 1, "inconsistent-subproduct",
          "subproduct projections act on towers over scalar coefficients");
  require(t.x.mod.flat_dim() == s.d, "inconsistent-subproduct",
          "fibre dimension does not match the subproduct system");
  require(t.top() <= s.top(), "inconsistent-subproduct",
          "tower is deeper than the subproduct system");
  FockOp f = FockOp::zero(t);
  Mat u = Mat::Identity(1, 1);  // (C^d)^{(x) k} -> level[k]
  f.set(0, 0, AdjOp::identity(t.level[0]));
  for (int k = 1; k <= t.top(); ++k) {
    u = t.q[k] * kron(u, Mat::Identity(s.d, s.d));
    auto [pk, res] = adjop_from_flat(t.level[k], t.level[k], Mat(u * s.p[k] * u.adjoint()));
    require(res < 1e-10, "inconsistent-subproduct",
            "subproduct projection failed to act on the tower");
    f.set(k, k, pk);
  }
  return f;
}

/// The projected creation operator P T_xi P of a subproduct system.
inline FockOp projected_creation(const SubproductSystem& s, const FockTower& t, const ModVec& xi,
                                 double tol = kDefaultTol) {
  FockOp p = subproduct_projection(s, t);
  return p * creation(t, xi, tol) * p;
}

}  // namespace cstar
