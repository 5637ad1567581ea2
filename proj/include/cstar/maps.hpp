// Linear maps from a block algebra into the adjointable operators of a
// module (left actions), complete positivity certificates via Choi
// matrices, correspondences, conditional expectations, and quotients of
// completely positive maps by ideals.
#pragma once

#include <vector>

#include "cstar/algebra.hpp"
#include "cstar/common.hpp"
#include "cstar/module.hpp"

namespace cstar {

/// A linear map dom -> End(mod), stored by its values on the matrix units.
struct OpMap {
  Algebra dom;
  HilbertModule mod;
  std::vector<AdjOp> img;  // one per matrix unit of dom

  AdjOp apply(const AlgElem& a) const {
    require(a.alg == dom, "incompatible-operands", "argument not in the map's domain");
    AdjOp r = AdjOp::zero(mod, mod);
    Vec v = a.flatten();
    for (int p = 0; p < v.size(); ++p)
      if (v(p) != cd(0)) r = r + v(p) * img[p];
    return r;
  }
  const AdjOp& unit_image(int block, int k, int l) const {
    int n = dom.blocks[block];
    return img[dom.unit_offset(block) + k * n + l];
  }

  double image_scale() const {
    double s = 1.0;
    for (const AdjOp& t : img) s = std::max(s, t.norm());
    return s;
  }

  bool is_star_hom(double tol = kDefaultTol) const {
    double scale = image_scale();
    for (int i = 0; i < dom.block_count(); ++i) {
      int n = dom.blocks[i];
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          const AdjOp& ekl = unit_image(i, k, l);
          if (!approx_zero((ekl.adjoint() - unit_image(i, l, k)).norm(), scale, tol)) return false;
          for (int m = 0; m < n; ++m) {
            if (!approx_zero((ekl * unit_image(i, l, m) - unit_image(i, k, m)).norm(),
                             scale * scale, tol))
              return false;
            if (m != l &&
                !approx_zero((ekl * unit_image(i, m, m)).norm(), scale * scale, tol))
              return false;
          }
        }
      for (int j = 0; j < dom.block_count(); ++j)
        if (j != i && !approx_zero((unit_image(i, 0, 0) * unit_image(j, 0, 0)).norm(),
                                   scale * scale, tol))
          return false;
    }
    return true;
  }

  bool is_unital(double tol = kDefaultTol) const {
    return approx_zero((apply(AlgElem::identity(dom)) - AdjOp::identity(mod)).norm(), 1.0, tol);
  }
};

/// Complete-positivity certificate.  On failure the witness is the most
/// negative Choi eigenvalue with its eigenvector and the domain block.
struct CPResult {
  bool cp = false;
  int block = -1;
  double min_eigenvalue = 0.0;
  Vec witness;
};

/// Choi test: for each domain block j the matrix [rho(E^{(j)}_{kl})]_{kl},
/// with operator values embedded as block-diagonal matrices on the direct
/// sum of the multiplicity spaces, must be positive semidefinite.
inline CPResult is_completely_positive(const OpMap& rho, double tol = kDefaultTol) {
  int D = 0;
  for (int m : rho.mod.mults) D += m;
  auto embed = [&](const AdjOp& t) {
    Mat e = Mat::Zero(D, D);
    int off = 0;
    for (const Mat& m : t.b) {
      e.block(off, off, m.rows(), m.cols()) = m;
      off += static_cast<int>(m.rows());
    }
    return e;
  };
  CPResult res;
  res.cp = true;
  double scale = rho.image_scale();
  for (int j = 0; j < rho.dom.block_count(); ++j) {
    int n = rho.dom.blocks[j];
    if (n * D == 0) continue;
    Mat choi = Mat::Zero(n * D, n * D);
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l)
        choi.block(k * D, l * D, D, D) = embed(rho.unit_image(j, k, l));
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(choi));
    double lo = es.eigenvalues()(0);
    if (res.block < 0 || lo < res.min_eigenvalue) {
      res.min_eigenvalue = lo;
      res.block = j;
      res.witness = es.eigenvectors().col(0);
    }
    if (lo < -tol * std::max(1.0, scale)) res.cp = false;
  }
  return res;
}

/// View an algebra-valued linear map as operators on cod-as-a-module.
inline OpMap as_op_map(const AlgMap& f) {
  OpMap r{f.dom, module_of(f.cod), {}};
  for (const AlgElem& e : f.img) r.img.push_back(left_mult_op(e));
  return r;
}

/// Inverse of as_op_map for maps landing in End(B_B) = B.
inline AlgMap as_alg_map(const OpMap& f) {
  require(f.mod == module_of(f.mod.coeff), "incompatible-operands",
          "operator map does not land in an algebra acting on itself");
  AlgMap r{f.dom, f.mod.coeff, {}};
  for (const AdjOp& t : f.img) r.img.push_back(AlgElem{f.mod.coeff, t.b});
  return r;
}

inline CPResult is_completely_positive(const AlgMap& rho, double tol = kDefaultTol) {
  return is_completely_positive(as_op_map(rho), tol);
}

/// A correspondence from A to B: a right Hilbert B-module together with a
/// left action of A by adjointable operators.
struct Correspondence {
  Algebra left;  // = phi.dom
  HilbertModule mod;
  OpMap phi;
};

inline Correspondence make_correspondence(const Algebra& a, const HilbertModule& mod,
                                          const OpMap& phi) {
  require(phi.dom == a && phi.mod == mod, "incompatible-operands",
          "left action endpoints do not match the correspondence data");
  return Correspondence{a, mod, phi};
}

/// The identity correspondence of A: A acting on itself from the left.
inline Correspondence identity_correspondence(const Algebra& a) {
  return Correspondence{a, module_of(a), as_op_map(AlgMap::identity(a))};
}

struct ExpectationResult {
  bool ok = false;
  double retraction_residual = 0.0;  // || rho(iota(b)) - b ||
  double norm_excess = 0.0;          // max(0, ||rho(1)|| - 1)
  double bimodule_residual = 0.0;    // || rho(iota(b1) a iota(b2)) - b1 rho(a) b2 ||
  bool cp = false;
};

/// Checks that rho : A -> B is a conditional expectation onto the unital
/// subalgebra iota(B): completely positive, contractive, rho . iota = id,
/// and B-bimodular.
inline ExpectationResult is_conditional_expectation(const AlgMap& rho, const AlgMap& iota,
                                                    double tol = kDefaultTol) {
  require(iota.dom == rho.cod && iota.cod == rho.dom, "incompatible-operands",
          "expectation and inclusion endpoints do not match");
  require(iota.is_star_hom(tol), "not-a-homomorphism", "inclusion must be a *-homomorphism");
  ExpectationResult res;
  res.cp = is_completely_positive(rho, tol).cp;
  const Algebra& b = rho.cod;
  for (const AlgElem& e : AlgMap::identity(b).img) {  // matrix units of B
    AlgElem lifted = iota.apply(e);
    res.retraction_residual =
        std::max(res.retraction_residual, (rho.apply(lifted) - e).norm());
  }
  res.norm_excess = std::max(0.0, rho.apply(AlgElem::identity(rho.dom)).norm() - 1.0);
  double scale = 1.0;
  for (const AlgElem& e : rho.img) scale = std::max(scale, e.norm());
  for (int p = 0; p < b.vec_dim(); ++p)
    for (int q = 0; q < b.vec_dim(); ++q) {
      AlgElem b1 = AlgMap::identity(b).img[p], b2 = AlgMap::identity(b).img[q];
      for (int r = 0; r < rho.dom.vec_dim(); ++r) {
        AlgElem a = AlgMap::identity(rho.dom).img[r];
        AlgElem lhs = rho.apply(iota.apply(b1) * a * iota.apply(b2));
        AlgElem rhs = b1 * rho.apply(a) * b2;
        res.bimodule_residual = std::max(res.bimodule_residual, (lhs - rhs).norm());
      }
    }
  res.ok = res.cp && approx_zero(res.retraction_residual, 1.0, tol) &&
           res.norm_excess <= tol && approx_zero(res.bimodule_residual, scale, tol);
  return res;
}

/// Induced map A/I -> B/J of a completely positive rho with rho(I) <= J,
/// computed through the canonical splitting of the quotient of A.
inline AlgMap quotient_cp(const AlgMap& rho, const Ideal& ideal_dom, const Ideal& ideal_cod,
                          double tol = kDefaultTol) {
  require(ideal_dom.parent == rho.dom && ideal_cod.parent == rho.cod, "incompatible-operands",
          "ideals do not live in the map's endpoint algebras");
  double scale = 1.0;
  for (const AlgElem& e : rho.img) scale = std::max(scale, e.norm());
  // rho(I) <= J: images of ideal-block units must vanish in the quotient.
  for (int i = 0; i < rho.dom.block_count(); ++i) {
    if (!ideal_dom.mask[i]) continue;
    int n = rho.dom.blocks[i], off = rho.dom.unit_offset(i);
    for (int p = off; p < off + n * n; ++p)
      require(approx_zero(quotient_map(rho.img[p], ideal_cod).norm(), scale, tol),
              "ideal-not-respected", "map does not send the domain ideal into the target ideal");
  }
  Algebra qa = quotient_algebra(ideal_dom), qb = quotient_algebra(ideal_cod);
  AlgMap r{qa, qb, {}};
  for (const AlgElem& e : AlgMap::identity(qa).img)
    r.img.push_back(quotient_map(rho.apply(quotient_splitting(e, ideal_dom)), ideal_cod));
  return r;
}

}  // namespace cstar
