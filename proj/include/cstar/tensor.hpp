// Canonicalization of semi-inner-product modules and balanced tensor
// products.  A raw space is a finite basis with a scalar Gram matrix and
// coordinate matrices for the right action (and optionally a left action).
// Canonicalization quotients by the null space and produces a unitary
// change of coordinates onto a canonical module, carrying operators along.
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "cstar/algebra.hpp"
#include "cstar/common.hpp"
#include "cstar/maps.hpp"
#include "cstar/module.hpp"

namespace cstar {

inline Mat kron(const Mat& a, const Mat& b) {
  Mat r(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return r;
}

/// Decomposes a flat coordinate index of a canonical module into
/// (block, row, column) with the column-major layout used by ModVec.
struct FlatIndex {
  int block, row, col;
};
inline FlatIndex decode_flat(const HilbertModule& m, int p) {
  for (int i = 0; i < m.block_count(); ++i) {
    int sz = m.mults[i] * m.coeff.blocks[i];
    if (p < sz) return {i, p % std::max(1, m.mults[i]), p / std::max(1, m.mults[i])};
    p -= sz;
  }
  throw Error("invalid-argument", "flat index out of range");
}

/// Matrix of x -> x . e_{kl}^{(i)} on flat coordinates.
inline Mat right_unit_matrix(const HilbertModule& m, int block, int k, int l) {
  Mat r = Mat::Zero(m.flat_dim(), m.flat_dim());
  int mi = m.mults[block], off = m.flat_offset(block);
  for (int row = 0; row < mi; ++row) r(off + l * mi + row, off + k * mi + row) = 1.0;
  return r;
}

/// A module presented on an arbitrary finite basis: scalar Gram matrix,
/// right-action coordinate matrices (one per matrix unit of coeff), and an
/// optional left action of another algebra.
struct SemiInnerSpace {
  Algebra coeff;
  int dim = 0;
  Mat gram;
  std::vector<Mat> right;
  std::optional<Algebra> left_alg;
  std::vector<Mat> left;
};

/// The canonical module of a right-module X: standard basis, identity Gram.
inline SemiInnerSpace raw_from_module(const HilbertModule& x) {
  SemiInnerSpace s;
  s.coeff = x.coeff;
  s.dim = x.flat_dim();
  s.gram = Mat::Identity(s.dim, s.dim);
  for (int i = 0; i < x.block_count(); ++i)
    for (int k = 0; k < x.coeff.blocks[i]; ++k)
      for (int l = 0; l < x.coeff.blocks[i]; ++l) s.right.push_back(right_unit_matrix(x, i, k, l));
  return s;
}

inline SemiInnerSpace raw_from_correspondence(const Correspondence& c) {
  SemiInnerSpace s = raw_from_module(c.mod);
  s.left_alg = c.left;
  for (const AdjOp& t : c.phi.img) s.left.push_back(t.flat_matrix());
  return s;
}

struct GramQuotient {
  int rank = 0;
  Mat q;  // rank x dim, maps raw coordinates to orthonormal coordinates
  Mat s;  // dim x rank section, q * s = identity
};

/// Splits off the null space of a positive semidefinite Gram matrix.  The
/// quotient coordinates carry the standard inner product: q^* q = gram on
/// the non-null part.  Throws when the Gram matrix has a genuinely negative
/// eigenvalue.
inline GramQuotient gram_quotient(const Mat& gram, double tol = kDefaultTol) {
  GramQuotient r;
  int d = static_cast<int>(gram.rows());
  if (d == 0) {
    r.q = Mat::Zero(0, 0);
    r.s = Mat::Zero(0, 0);
    return r;
  }
  if (operator_norm(gram - Mat::Identity(d, d)) < 1e-13) {
    r.rank = d;
    r.q = Mat::Identity(d, d);
    r.s = Mat::Identity(d, d);
    return r;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(gram));
  RVec vals = es.eigenvalues();
  double top = std::max(0.0, vals(d - 1));
  require(vals(0) >= -std::max(tol, 1e-12) * std::max(1.0, top), "not-positive-semidefinite",
          "Gram matrix has negative eigenvalue " + std::to_string(vals(0)));
  double cut = std::max(tol, 1e-12) * std::max(top, 1e-300);
  std::vector<int> keep;
  for (int i = 0; i < d; ++i)
    if (vals(i) > cut) keep.push_back(i);
  r.rank = static_cast<int>(keep.size());
  r.q = Mat::Zero(r.rank, d);
  r.s = Mat::Zero(d, r.rank);
  for (int j = 0; j < r.rank; ++j) {
    double lam = vals(keep[j]);
    r.q.row(j) = std::sqrt(lam) * es.eigenvectors().col(keep[j]).adjoint();
    r.s.col(j) = es.eigenvectors().col(keep[j]) / std::sqrt(lam);
  }
  return r;
}

/// Result of canonicalization: a canonical module, the quotient map q from
/// raw coordinates onto its flat coordinates, a section s with q s = id,
/// and (when a left action was supplied) the induced left action.
struct CanonResult {
  HilbertModule mod;
  Mat q, s;
  std::optional<OpMap> left;
  double left_residual = 0.0;
};

/// Extracts the blockwise form of a module map from its flat matrix; the
/// residual reports how far the matrix is from commuting with the right
/// action (exactly the failure of right-linearity).
inline std::pair<AdjOp, double> adjop_from_flat(const HilbertModule& tgt,
                                                const HilbertModule& src, const Mat& m) {
  require(m.rows() == tgt.flat_dim() && m.cols() == src.flat_dim(), "invalid-argument",
          "flat operator has wrong shape");
  AdjOp t = AdjOp::zero(tgt, src);
  for (int i = 0; i < src.block_count(); ++i) {
    int n = src.coeff.blocks[i], mt = tgt.mults[i], ms = src.mults[i];
    int ot = tgt.flat_offset(i), os = src.flat_offset(i);
    if (mt == 0 || ms == 0 || n == 0) continue;
    Mat avg = Mat::Zero(mt, ms);
    for (int c = 0; c < n; ++c) avg += m.block(ot + c * mt, os + c * ms, mt, ms);
    t.b[i] = avg / static_cast<double>(n);
  }
  double residual = operator_norm(m - t.flat_matrix());
  return {t, residual};
}

/// Canonicalizes a raw space: quotient by the Gram null space, organize the
/// right action into matrix blocks, rotate onto the canonical module, and
/// push any left action along.
inline CanonResult canonicalize(const SemiInnerSpace& raw, double tol = kDefaultTol) {
  require(static_cast<int>(raw.right.size()) == raw.coeff.vec_dim(), "invalid-argument",
          "right action must provide one matrix per matrix unit");
  GramQuotient gq = gram_quotient(raw.gram, tol);
  int d = gq.rank;

  // Push the right action to the quotient.
  std::vector<Mat> R(raw.right.size());
  for (size_t p = 0; p < raw.right.size(); ++p) R[p] = gq.q * raw.right[p] * gq.s;
  auto runit = [&](int block, int k, int l) -> const Mat& {
    return R[raw.coeff.unit_offset(block) + k * raw.coeff.blocks[block] + l];
  };

  // Multiplicities from the traces of the central projections.
  std::vector<int> mults(raw.coeff.block_count());
  int total = 0;
  for (int i = 0; i < raw.coeff.block_count(); ++i) {
    int n = raw.coeff.blocks[i];
    cd tr = 0;
    for (int k = 0; k < n; ++k) tr += runit(i, k, k).trace();
    double mi = tr.real() / n;
    mults[i] = static_cast<int>(std::lround(mi));
    require(std::abs(mi - mults[i]) < 1e-6 && mults[i] >= 0, "invalid-argument",
            "right action does not organize into matrix blocks");
    total += mults[i] * n;
  }
  require(total == d, "invalid-argument", "right action is not unital on the quotient");

  CanonResult res;
  res.mod = HilbertModule{raw.coeff, mults};

  // Unitary from quotient coordinates to the canonical flat layout.
  Mat U;
  if (raw.coeff.block_count() == 1 && raw.coeff.blocks[0] == 1) {
    U = Mat::Identity(d, d);  // trivial right action: keep coordinates
  } else {
    U = Mat::Zero(d, d);
    for (int i = 0; i < raw.coeff.block_count(); ++i) {
      int n = raw.coeff.blocks[i], mi = mults[i], off = res.mod.flat_offset(i);
      if (mi == 0) continue;
      Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(runit(i, 0, 0)));
      require(es.eigenvalues()(d - mi) > 0.5 && (d == mi || es.eigenvalues()(d - mi - 1) < 0.5),
              "invalid-argument", "right action unit image is not a projection of expected rank");
      for (int r = 0; r < mi; ++r) {
        Vec w = es.eigenvectors().col(d - mi + r);
        for (int c = 0; c < n; ++c) U.col(off + c * mi + r) = runit(i, 0, c) * w;
      }
    }
    require(operator_norm(Mat(U.adjoint() * U) - Mat::Identity(d, d)) < 1e-7,
            "invalid-argument", "canonical basis failed to be orthonormal");
  }
  res.q = U.adjoint() * gq.q;
  res.s = gq.s * U;

  if (raw.left_alg) {
    OpMap left{*raw.left_alg, res.mod, {}};
    for (const Mat& lraw : raw.left) {
      auto [op, residual] = adjop_from_flat(res.mod, res.mod, Mat(res.q * lraw * res.s));
      res.left_residual = std::max(res.left_residual, residual);
      left.img.push_back(op);
    }
    res.left = left;
  }
  return res;
}

/// Raw presentation of the balanced tensor product X (x)_B Y on the basis
/// e_p (x) e_q (index p * dim(Y) + q).  The inner product is
/// <x1 (x) y1 | x2 (x) y2> = <y1 | phi(<x1|x2>) y2>.
inline SemiInnerSpace raw_balanced_tensor(const HilbertModule& x,
                                          const std::optional<OpMap>& left_x,
                                          const Correspondence& y) {
  require(x.coeff == y.left, "incompatible-operands",
          "tensor factors do not share the middle algebra");
  int dx = x.flat_dim(), dy = y.mod.flat_dim();
  SemiInnerSpace s;
  s.coeff = y.mod.coeff;
  s.dim = dx * dy;
  s.gram = Mat::Zero(s.dim, s.dim);
  // <e_p | e_p'> of basis vectors of X is a matrix unit (or zero), so the
  // Gram matrix tiles with images of matrix units under the left action.
  for (int p = 0; p < dx; ++p) {
    FlatIndex a = decode_flat(x, p);
    for (int pp = 0; pp < dx; ++pp) {
      FlatIndex b = decode_flat(x, pp);
      if (a.block != b.block || a.row != b.row) continue;
      s.gram.block(p * dy, pp * dy, dy, dy) =
          y.phi.unit_image(a.block, a.col, b.col).flat_matrix();
    }
  }
  for (int i = 0; i < s.coeff.block_count(); ++i)
    for (int k = 0; k < s.coeff.blocks[i]; ++k)
      for (int l = 0; l < s.coeff.blocks[i]; ++l)
        s.right.push_back(kron(Mat::Identity(dx, dx), right_unit_matrix(y.mod, i, k, l)));
  if (left_x) {
    s.left_alg = left_x->dom;
    for (const AdjOp& t : left_x->img)
      s.left.push_back(kron(t.flat_matrix(), Mat::Identity(dy, dy)));
  }
  return s;
}

/// Canonicalized balanced tensor product.  `q`/`s` translate between the
/// raw product basis (index p * dim(Y) + q) and the canonical module.
struct TensorResult {
  HilbertModule mod;
  Mat q, s;
  std::optional<OpMap> left;
  double left_residual = 0.0;
};

/// Computes the canonical form of X (x)_B Y.  The Gram matrix is block
/// diagonal over the (block, row) slices of X and the slices for a fixed
/// block are identical, so only one canonicalization per X-block is needed;
/// the pieces are then assembled as a direct sum.  Falls back to nothing:
/// this is exactly equivalent to canonicalizing the full raw space.
inline TensorResult balanced_tensor(const HilbertModule& x, const std::optional<OpMap>& left_x,
                                    const Correspondence& y, double tol = kDefaultTol) {
  require(x.coeff == y.left, "incompatible-operands",
          "tensor factors do not share the middle algebra");
  int dy = y.mod.flat_dim();
  int D = x.flat_dim() * dy;
  TensorResult t;

  std::vector<CanonResult> piece(x.block_count());
  std::vector<HilbertModule> parts;
  for (int i = 0; i < x.block_count(); ++i) {
    if (x.mults[i] == 0) continue;
    std::vector<int> row_mults(x.block_count(), 0);
    row_mults[i] = 1;
    HilbertModule row = make_module(x.coeff, row_mults);
    piece[i] = canonicalize(raw_balanced_tensor(row, std::nullopt, y), tol);
    for (int r = 0; r < x.mults[i]; ++r) parts.push_back(piece[i].mod);
  }

  if (parts.empty()) {
    t.mod = HilbertModule{y.mod.coeff, std::vector<int>(y.mod.block_count(), 0)};
    t.q = Mat::Zero(0, D);
    t.s = Mat::Zero(D, 0);
  } else {
    DirectSum ds = direct_sum(parts);
    t.mod = ds.sum;
    int flat = t.mod.flat_dim();
    t.q = Mat::Zero(flat, D);
    t.s = Mat::Zero(D, flat);
    int part = 0;
    for (int i = 0; i < x.block_count(); ++i) {
      int n = x.coeff.blocks[i], mi = x.mults[i];
      for (int r = 0; r < mi; ++r, ++part) {
        Mat e = ds.embed[part].flat_matrix();  // flat x flat(piece)
        Mat eq = e * piece[i].q;               // flat x (n * dy)
        Mat se = piece[i].s * e.adjoint();     // (n * dy) x flat
        for (int c = 0; c < n; ++c) {
          int raw0 = (x.flat_offset(i) + c * mi + r) * dy;
          t.q.middleCols(raw0, dy) = eq.middleCols(c * dy, dy);
          t.s.middleRows(raw0, dy) = se.middleRows(c * dy, dy);
        }
      }
    }
  }

  if (left_x) {
    int dx = x.flat_dim(), flat = t.mod.flat_dim();
    OpMap left{left_x->dom, t.mod, {}};
    for (const AdjOp& op : left_x->img) {
      Mat lx = op.flat_matrix();
      Mat tmp = Mat::Zero(flat, D);  // q * (lx (x) id)
      for (int pc = 0; pc < dx; ++pc)
        for (int pr = 0; pr < dx; ++pr)
          if (lx(pr, pc) != cd(0)) tmp.middleCols(pc * dy, dy) += lx(pr, pc) * t.q.middleCols(pr * dy, dy);
      auto [aop, residual] = adjop_from_flat(t.mod, t.mod, Mat(tmp * t.s));
      t.left_residual = std::max(t.left_residual, residual);
      left.img.push_back(aop);
    }
    t.left = left;
  }
  return t;
}

/// Raw coordinates of x (x) y in the tensor basis.
inline Vec raw_tensor_coords(const ModVec& x, const ModVec& y) {
  return kron(x.flatten(), y.flatten());
}

/// Image of x (x) y in the canonical tensor module.
inline ModVec tensor_vector(const TensorResult& t, const ModVec& x, const ModVec& y) {
  return ModVec::unflatten(t.mod, Vec(t.q * raw_tensor_coords(x, y)));
}

}  // namespace cstar
