// Dilation of completely positive left actions (the module analogue of the
// Stinespring construction), composition of positive correspondences, and
// exact decision + construction of unitary isomorphisms of correspondences.
#pragma once

#include <optional>
#include <vector>

#include "cstar/maps.hpp"
#include "cstar/module.hpp"
#include "cstar/rng.hpp"
#include "cstar/tensor.hpp"

namespace cstar {

/// Dilation of a positive correspondence (X, phi) over (A, B): the
/// correspondence A (x)_phi X whose left action pi is a *-homomorphism,
/// together with the embedding v : X -> A (x) X, v(x) = 1 (x) x, which
/// compresses pi back to phi: v* pi(a) v = phi(a).
struct DilationResult {
  Correspondence corr;
  AdjOp v;
  Mat q, s;                  // raw A (x) X coordinates <-> canonical module
  double action_residual = 0.0;
  double v_residual = 0.0;
};

inline DilationResult ksgns_dilate(const Correspondence& c, double tol = kDefaultTol) {
  CPResult cp = is_completely_positive(c.phi, tol);
  require(cp.cp, "not-completely-positive",
          "left action is not completely positive (Choi eigenvalue " +
              std::to_string(cp.min_eigenvalue) + ")");
  const Algebra& a = c.left;
  OpMap left_mult = as_op_map(AlgMap::identity(a));
  TensorResult t = balanced_tensor(module_of(a), left_mult, c, tol);
  DilationResult res;
  res.q = t.q;
  res.s = t.s;
  res.action_residual = t.left_residual;
  res.corr = Correspondence{a, t.mod, *t.left};
  Mat one = elem_to_vec(AlgElem::identity(a)).flatten();
  Mat v_flat = t.q * kron(one, Mat::Identity(c.mod.flat_dim(), c.mod.flat_dim()));
  auto [v, vres] = adjop_from_flat(t.mod, c.mod, v_flat);
  res.v = v;
  res.v_residual = vres;
  return res;
}

/// Dilation of a completely positive map rho : A -> B, viewing B as the
/// module over itself.  rho(a) = v* pi(a) v on the nose.
inline DilationResult ksgns(const AlgMap& rho, double tol = kDefaultTol) {
  return ksgns_dilate(Correspondence{rho.dom, module_of(rho.cod), as_op_map(rho)}, tol);
}

/// Largest deviation of v* pi(a) v from the original action over the
/// matrix-unit basis.
inline double dilation_compression_residual(const Correspondence& orig,
                                            const DilationResult& d) {
  double r = 0;
  for (int p = 0; p < orig.left.vec_dim(); ++p)
    r = std::max(r, (d.v.adjoint() * d.corr.phi.img[p] * d.v - orig.phi.img[p]).norm());
  return r;
}

/// Whether pi(A) v X spans the dilation module (minimality).
inline bool dilation_is_minimal(const Correspondence& orig, const DilationResult& d,
                                double tol = kDefaultTol) {
  int da = orig.left.vec_dim(), dx = orig.mod.flat_dim();
  int de = d.corr.mod.flat_dim();
  Mat v_flat = d.v.flat_matrix();
  Mat span(de, da * dx);
  for (int p = 0; p < da; ++p)
    span.middleCols(p * dx, dx) = d.corr.phi.img[p].flat_matrix() * v_flat;
  return numeric_rank(span, std::max(tol, 1e-10)) == de;
}

inline double isometry_defect(const AdjOp& v) {
  return (v.adjoint() * v - AdjOp::identity(v.src)).norm();
}

/// Composition of positive correspondences: (X, rho) over (A,B) followed by
/// (Y, sigma) over (B,C) is X (x)_B (B (x)_sigma Y) with left action
/// rho (x) id.  When both actions are *-homomorphisms this is the usual
/// interior tensor product up to unitary isomorphism.
struct CompositionResult {
  Correspondence corr;
  DilationResult dilation;  // dilation of the right factor
  TensorResult tensor;      // left factor (x) dilated right factor
};

inline CompositionResult compose_positive_full(const Correspondence& x, const Correspondence& y,
                                               double tol = kDefaultTol) {
  require(x.mod.coeff == y.left, "incompatible-operands",
          "correspondences are not composable: middle algebras differ");
  CompositionResult res;
  res.dilation = ksgns_dilate(y, tol);
  res.tensor = balanced_tensor(x.mod, x.phi, res.dilation.corr, tol);
  res.corr = Correspondence{x.left, res.tensor.mod, *res.tensor.left};
  return res;
}

inline Correspondence compose_positive(const Correspondence& x, const Correspondence& y,
                                       double tol = kDefaultTol) {
  return compose_positive_full(x, y, tol).corr;
}

/// Image of the simple tensor xv (x) yv in the composite module.
inline ModVec compose_vector(const CompositionResult& comp, const ModVec& xv,
                             const ModVec& yv) {
  return tensor_vector(comp.tensor, xv, comp.dilation.v.apply(yv));
}

namespace detail {
/// Adapted basis for a unital *-representation on module block `block`:
/// columns ordered (domain block j, copy r, row c) so that conjugating by
/// it puts every unit image into the standard form (+)_j I_mu (x) E_kl.
/// Returns the basis and the per-domain-block multiplicities, or nothing
/// when the action fails to organize (then callers fall back to the
/// general intertwiner machinery).
struct AdaptedBasis {
  Mat u;
  std::vector<int> mult;
};
inline std::optional<AdaptedBasis> adapted_rep_basis(const OpMap& phi, int block) {
  int m = phi.mod.mults[block];
  const Algebra& dom = phi.dom;
  AdaptedBasis res;
  res.u = Mat::Zero(m, m);
  res.mult.assign(dom.block_count(), 0);
  int col = 0;
  for (int j = 0; j < dom.block_count(); ++j) {
    int aj = dom.blocks[j];
    cd tr = 0;
    for (int k = 0; k < aj; ++k) tr += phi.unit_image(j, k, k).b[block].trace();
    double mu_real = tr.real() / aj;
    int mu = static_cast<int>(std::lround(mu_real));
    if (std::abs(mu_real - mu) > 1e-6 || mu < 0) return std::nullopt;
    res.mult[j] = mu;
    if (mu == 0) continue;
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(phi.unit_image(j, 0, 0).b[block]));
    if (es.eigenvalues()(m - mu) < 0.5 || (m > mu && es.eigenvalues()(m - mu - 1) > 0.5))
      return std::nullopt;
    for (int r = 0; r < mu; ++r) {
      Vec w = es.eigenvectors().col(m - mu + r);
      for (int c = 0; c < aj; ++c) res.u.col(col++) = phi.unit_image(j, c, 0).b[block] * w;
    }
  }
  if (col != m) return std::nullopt;  // not unital on this block
  if (operator_norm(Mat(res.u.adjoint() * res.u) - Mat::Identity(m, m)) > 1e-7)
    return std::nullopt;
  return res;
}

/// Normal matrix K*K of the intertwiner equation W phi_x(u) = phi_y(u) W
/// on block `block`, in vec (column-major) coordinates.
inline Mat intertwiner_normal_matrix(const OpMap& phi_x, const OpMap& phi_y, int block) {
  int mx = phi_x.mod.mults[block], my = phi_y.mod.mults[block];
  Mat g = Mat::Zero(mx * my, mx * my);
  for (size_t p = 0; p < phi_x.img.size(); ++p) {
    const Mat& ax = phi_x.img[p].b[block];
    const Mat& ay = phi_y.img[p].b[block];
    Mat k = kron(Mat::Identity(mx, mx), ay) - kron(ax.transpose(), Mat::Identity(my, my));
    g += k.adjoint() * k;
  }
  return g;
}
}  // namespace detail

/// Per-block dimension of the space of intertwiners W with
/// W phi_x(u) = phi_y(u) W for all matrix units u.
inline int intertwiner_dimension(const OpMap& phi_x, const OpMap& phi_y, int block) {
  int mx = phi_x.mod.mults[block], my = phi_y.mod.mults[block];
  if (mx == 0 || my == 0) return 0;
  Mat g = detail::intertwiner_normal_matrix(phi_x, phi_y, block);
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  double top = std::max(1.0, es.eigenvalues()(mx * my - 1));
  int null = 0;
  for (int i = 0; i < mx * my; ++i)
    if (es.eigenvalues()(i) <= 1e-14 * top) ++null;
  return null;
}

/// Exact decision and construction of a unitary isomorphism of
/// correspondences: returns a blockwise unitary u with u phi_x(a) = phi_y(a) u,
/// or nothing when none exists.  The decision compares, per coefficient
/// block, the multiplicities and the three intertwiner-space dimensions
/// hom(X,X), hom(X,Y), hom(Y,Y); equality of all three characterizes
/// unitary equivalence of the (semisimple) restricted actions.
inline std::optional<AdjOp> find_unitary_iso(const Correspondence& x, const Correspondence& y,
                                             Rng& rng, double tol = kDefaultTol) {
  require(x.left == y.left && x.mod.coeff == y.mod.coeff, "incompatible-operands",
          "correspondences over different algebra pairs");
  if (x.mod.mults != y.mod.mults) return std::nullopt;
  int blocks = x.mod.block_count();
  double scale = std::max(x.phi.image_scale(), y.phi.image_scale());

  // Fast exact path for *-homomorphism actions: compare per-block
  // multiplicities of the domain blocks and conjugate adapted bases.
  if (x.phi.is_star_hom(std::max(tol, 1e-8)) && y.phi.is_star_hom(std::max(tol, 1e-8))) {
    AdjOp u = AdjOp::identity(x.mod);
    bool adapted_ok = true;
    for (int i = 0; i < blocks && adapted_ok; ++i) {
      if (x.mod.mults[i] == 0) continue;
      auto bx = detail::adapted_rep_basis(x.phi, i);
      auto by = detail::adapted_rep_basis(y.phi, i);
      if (!bx || !by) {
        adapted_ok = false;
        break;
      }
      if (bx->mult != by->mult) return std::nullopt;
      u.b[i] = by->u * bx->u.adjoint();
    }
    if (adapted_ok) {
      double res = 0;
      for (size_t p = 0; p < x.phi.img.size(); ++p)
        res = std::max(res, (u * x.phi.img[p] - y.phi.img[p] * u).norm());
      if (approx_zero(res, scale, std::max(tol, 1e-8))) return u;
      // adapted bases disagreed with the actions (non-multiplicative data):
      // fall through to the general machinery
    }
  }

  for (int i = 0; i < blocks; ++i) {
    int hxx = intertwiner_dimension(x.phi, x.phi, i);
    int hxy = intertwiner_dimension(x.phi, y.phi, i);
    int hyy = intertwiner_dimension(y.phi, y.phi, i);
    if (!(hxx == hxy && hxy == hyy)) return std::nullopt;
  }
  AdjOp u = AdjOp::identity(x.mod);
  for (int i = 0; i < blocks; ++i) {
    int m = x.mod.mults[i];
    if (m == 0) continue;
    // Nullspace basis of the intertwiner equation.
    int units = static_cast<int>(x.phi.img.size());
    Mat g = detail::intertwiner_normal_matrix(x.phi, y.phi, i);
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    double top = std::max(1.0, es.eigenvalues()(m * m - 1));
    std::vector<Vec> basis;
    for (int j = 0; j < m * m; ++j)
      if (es.eigenvalues()(j) <= 1e-14 * top) basis.push_back(es.eigenvectors().col(j));
    if (basis.empty()) return std::nullopt;
    bool done = false;
    for (int attempt = 0; attempt < 8 && !done; ++attempt) {
      Vec combo = Vec::Zero(m * m);
      for (const Vec& b : basis) combo += rng.cgauss() * b;
      Mat w = Eigen::Map<Mat>(combo.data(), m, m);  // column-major
      Eigen::JacobiSVD<Mat> pol(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
      if (pol.singularValues()(m - 1) <= 1e-8 * std::max(1.0, pol.singularValues()(0))) continue;
      Mat cand = pol.matrixU() * pol.matrixV().adjoint();
      double res = 0;
      for (int p = 0; p < units; ++p)
        res = std::max(res, operator_norm(cand * x.phi.img[p].b[i] -
                                          y.phi.img[p].b[i] * cand));
      if (approx_zero(res, scale, std::max(tol, 1e-8))) {
        u.b[i] = cand;
        done = true;
      }
    }
    if (!done)
      throw Error("invalid-argument",
                  "intertwiner dimensions matched but no unitary intertwiner was found");
  }
  return u;
}

/// Residual of u as an isomorphism of correspondences.
inline double iso_residual(const Correspondence& x, const Correspondence& y, const AdjOp& u) {
  double r = isometry_defect(u);
  r = std::max(r, (u * u.adjoint() - AdjOp::identity(y.mod)).norm());
  for (int p = 0; p < x.left.vec_dim(); ++p)
    r = std::max(r, (u * x.phi.img[p] - y.phi.img[p] * u).norm());
  return r;
}

}  // namespace cstar
