// Finite-dimensional C*-algebras presented as direct sums of full complex
// matrix blocks, their elements, ideals (block masks), positivity via
// Hermitian eigendecomposition, and spectral functional calculus.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "cstar/common.hpp"

namespace cstar {

/// A finite-dimensional C*-algebra: the direct sum of full matrix blocks
/// M_{n_1} + ... + M_{n_k}, recorded by the ordered list of block sizes.
struct Algebra {
  std::vector<int> blocks;

  int block_count() const { return static_cast<int>(blocks.size()); }
  /// Dimension as a complex vector space: sum of n_i^2.
  int vec_dim() const {
    int d = 0;
    for (int n : blocks) d += n * n;
    return d;
  }
  /// Total matrix dimension: sum of n_i.
  int total_dim() const { return std::accumulate(blocks.begin(), blocks.end(), 0); }
  int unit_offset(int block) const {
    int off = 0;
    for (int i = 0; i < block; ++i) off += blocks[i] * blocks[i];
    return off;
  }
  bool operator==(const Algebra& other) const { return blocks == other.blocks; }
  bool operator!=(const Algebra& other) const { return !(*this == other); }
};

inline Algebra make_algebra(const std::vector<int>& block_dims) {
  require(!block_dims.empty(), "invalid-argument", "algebra needs at least one block");
  for (int n : block_dims)
    require(n >= 1, "invalid-argument", "block dimensions must be positive");
  return Algebra{block_dims};
}

/// An element of a block algebra: one dense complex matrix per block.
struct AlgElem {
  Algebra alg;
  std::vector<Mat> b;

  static AlgElem zero(const Algebra& a) {
    AlgElem e{a, {}};
    for (int n : a.blocks) e.b.push_back(Mat::Zero(n, n));
    return e;
  }
  static AlgElem identity(const Algebra& a) {
    AlgElem e{a, {}};
    for (int n : a.blocks) e.b.push_back(Mat::Identity(n, n));
    return e;
  }
  /// Matrix unit e_{kl} in one block, zero elsewhere.
  static AlgElem unit(const Algebra& a, int block, int k, int l) {
    AlgElem e = zero(a);
    e.b[block](k, l) = 1.0;
    return e;
  }

  AlgElem adjoint() const {
    AlgElem r{alg, {}};
    for (const Mat& m : b) r.b.push_back(m.adjoint());
    return r;
  }
  double norm() const {
    double v = 0;
    for (const Mat& m : b) v = std::max(v, operator_norm(m));
    return v;
  }
  /// Unnormalized blockwise trace; faithful, used for scalarization.
  cd trace() const {
    cd t = 0;
    for (const Mat& m : b) t += m.trace();
    return t;
  }
  bool is_hermitian(double tol = kDefaultTol) const {
    double defect = 0, scale = norm();
    for (const Mat& m : b) defect = std::max(defect, operator_norm(m - Mat(m.adjoint())));
    return approx_zero(defect, scale, tol);
  }
  /// Coordinates on the matrix-unit basis, block-major then row-major.
  Vec flatten() const {
    Vec v(alg.vec_dim());
    int off = 0;
    for (const Mat& m : b)
      for (int k = 0; k < m.rows(); ++k)
        for (int l = 0; l < m.cols(); ++l) v(off++) = m(k, l);
    return v;
  }
  static AlgElem unflatten(const Algebra& a, const Vec& v) {
    require(v.size() == a.vec_dim(), "invalid-argument", "coordinate length mismatch");
    AlgElem e = zero(a);
    int off = 0;
    for (Mat& m : e.b)
      for (int k = 0; k < m.rows(); ++k)
        for (int l = 0; l < m.cols(); ++l) m(k, l) = v(off++);
    return e;
  }
};

inline void check_same_algebra(const AlgElem& x, const AlgElem& y) {
  require(x.alg == y.alg, "incompatible-operands", "elements live in different algebras");
}

inline AlgElem operator+(const AlgElem& x, const AlgElem& y) {
  check_same_algebra(x, y);
  AlgElem r{x.alg, {}};
  for (size_t i = 0; i < x.b.size(); ++i) r.b.push_back(x.b[i] + y.b[i]);
  return r;
}
inline AlgElem operator-(const AlgElem& x, const AlgElem& y) {
  check_same_algebra(x, y);
  AlgElem r{x.alg, {}};
  for (size_t i = 0; i < x.b.size(); ++i) r.b.push_back(x.b[i] - y.b[i]);
  return r;
}
inline AlgElem operator*(const AlgElem& x, const AlgElem& y) {
  check_same_algebra(x, y);
  AlgElem r{x.alg, {}};
  for (size_t i = 0; i < x.b.size(); ++i) r.b.push_back(x.b[i] * y.b[i]);
  return r;
}
inline AlgElem operator*(const cd& s, const AlgElem& x) {
  AlgElem r{x.alg, {}};
  for (const Mat& m : x.b) r.b.push_back(s * m);
  return r;
}
inline AlgElem operator*(const AlgElem& x, const cd& s) { return s * x; }

/// Result of a positivity test; on failure `block`, `min_eigenvalue` and
/// `eigenvector` describe the most negative spectral witness.
struct PositivityResult {
  bool positive = false;
  double hermitian_defect = 0.0;
  double min_eigenvalue = 0.0;
  int block = -1;
  Vec eigenvector;
};

inline PositivityResult is_positive(const AlgElem& a, double tol = kDefaultTol) {
  PositivityResult res;
  double scale = a.norm();
  for (const Mat& m : a.b)
    res.hermitian_defect = std::max(res.hermitian_defect, operator_norm(m - Mat(m.adjoint())));
  if (!approx_zero(res.hermitian_defect, scale, tol)) {
    res.positive = false;
    return res;
  }
  res.min_eigenvalue = 0.0;
  res.block = -1;
  for (size_t i = 0; i < a.b.size(); ++i) {
    if (a.b[i].rows() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(a.b[i]));
    double lo = es.eigenvalues()(0);
    if (res.block < 0 || lo < res.min_eigenvalue) {
      res.min_eigenvalue = lo;
      res.block = static_cast<int>(i);
      res.eigenvector = es.eigenvectors().col(0);
    }
  }
  res.positive = res.min_eigenvalue >= -tol * std::max(1.0, scale);
  return res;
}

/// Spectral calculus for Hermitian elements: applies `f` to each eigenvalue.
inline AlgElem spectral_map(const AlgElem& a, const std::function<double(double)>& f,
                            double tol = kDefaultTol) {
  require(a.is_hermitian(tol), "invalid-argument", "spectral calculus needs a Hermitian element");
  AlgElem r = AlgElem::zero(a.alg);
  for (size_t i = 0; i < a.b.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(a.b[i]));
    RVec vals = es.eigenvalues();
    for (int k = 0; k < vals.size(); ++k) vals(k) = f(vals(k));
    r.b[i] = es.eigenvectors() * vals.cast<cd>().asDiagonal() * es.eigenvectors().adjoint();
  }
  return r;
}

/// a^{p} for positive a (p may be negative; invertibility is the caller's
/// responsibility and is checked against tol * ||a||).
inline AlgElem spectral_power(const AlgElem& a, double p, double tol = kDefaultTol) {
  PositivityResult pos = is_positive(a, tol);
  require(pos.positive, "not-positive-semidefinite",
          "spectral power of a non-positive element (min eigenvalue " +
              std::to_string(pos.min_eigenvalue) + ")");
  double scale = a.norm();
  if (p < 0)
    for (const Mat& m : a.b) {
      if (m.rows() == 0) continue;
      Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(m));
      require(es.eigenvalues()(0) > tol * std::max(1.0, scale), "index-not-invertible",
              "element is not invertible within tolerance");
    }
  return spectral_map(a, [p](double x) { return x <= 0 ? 0.0 : std::pow(x, p); }, tol);
}

/// A closed two-sided ideal: a subset of blocks, recorded as a mask.
struct Ideal {
  Algebra parent;
  std::vector<char> mask;  // mask[i] != 0 iff block i belongs to the ideal

  int block_count_in() const {
    int c = 0;
    for (char m : mask) c += (m != 0);
    return c;
  }
  Ideal complement() const {
    Ideal r{parent, mask};
    for (char& m : r.mask) m = !m;
    return r;
  }
  bool operator==(const Ideal& o) const { return parent == o.parent && mask == o.mask; }
};

inline Ideal make_ideal(const Algebra& a, const std::vector<char>& mask) {
  require(static_cast<int>(mask.size()) == a.block_count(), "invalid-argument",
          "ideal mask length must match block count");
  return Ideal{a, mask};
}

/// The quotient A/I: the algebra formed by the blocks outside the ideal.
inline Algebra quotient_algebra(const Ideal& ideal) {
  std::vector<int> dims;
  for (int i = 0; i < ideal.parent.block_count(); ++i)
    if (!ideal.mask[i]) dims.push_back(ideal.parent.blocks[i]);
  if (dims.empty()) dims.push_back(0);  // zero algebra placeholder
  return Algebra{dims};
}

/// Quotient map A -> A/I (drops the ideal blocks).
inline AlgElem quotient_map(const AlgElem& a, const Ideal& ideal) {
  require(a.alg == ideal.parent, "incompatible-operands", "element not in the ideal's algebra");
  AlgElem r{quotient_algebra(ideal), {}};
  for (int i = 0; i < ideal.parent.block_count(); ++i)
    if (!ideal.mask[i]) r.b.push_back(a.b[i]);
  if (r.b.empty()) r.b.push_back(Mat::Zero(0, 0));
  return r;
}

/// The canonical completely positive splitting A/I -> A (zero on the ideal).
inline AlgElem quotient_splitting(const AlgElem& q, const Ideal& ideal) {
  AlgElem r = AlgElem::zero(ideal.parent);
  int j = 0;
  for (int i = 0; i < ideal.parent.block_count(); ++i)
    if (!ideal.mask[i]) r.b[i] = q.b[j++];
  return r;
}

/// A linear map between block algebras, stored by its values on the
/// matrix-unit basis of the domain.
struct AlgMap {
  Algebra dom, cod;
  std::vector<AlgElem> img;  // one per matrix unit of dom

  static AlgMap identity(const Algebra& a) {
    AlgMap m{a, a, {}};
    for (int i = 0; i < a.block_count(); ++i)
      for (int k = 0; k < a.blocks[i]; ++k)
        for (int l = 0; l < a.blocks[i]; ++l) m.img.push_back(AlgElem::unit(a, i, k, l));
    return m;
  }

  AlgElem apply(const AlgElem& a) const {
    require(a.alg == dom, "incompatible-operands", "argument not in the map's domain");
    AlgElem r = AlgElem::zero(cod);
    Vec v = a.flatten();
    for (int p = 0; p < v.size(); ++p)
      if (v(p) != cd(0)) r = r + v(p) * img[p];
    return r;
  }

  bool is_star_hom(double tol = kDefaultTol) const {
    double scale = 1.0;
    for (const AlgElem& e : img) scale = std::max(scale, e.norm());
    // adjoint compatibility and multiplicativity on matrix units
    for (int i = 0; i < dom.block_count(); ++i) {
      int n = dom.blocks[i], off = dom.unit_offset(i);
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          const AlgElem& ekl = img[off + k * n + l];
          const AlgElem& elk = img[off + l * n + k];
          if (!approx_zero((ekl.adjoint() - elk).norm(), scale, tol)) return false;
          for (int m = 0; m < n; ++m) {
            const AlgElem& elm = img[off + l * n + m];
            const AlgElem& ekm = img[off + k * n + m];
            if (!approx_zero((ekl * elm - ekm).norm(), scale * scale, tol)) return false;
          }
          // units from the same block with mismatched middle index multiply to 0
          for (int m = 0; m < n; ++m)
            if (m != l) {
              const AlgElem& emm = img[off + m * n + m];
              if (!approx_zero((ekl * emm).norm(), scale * scale, tol)) return false;
            }
        }
      // cross-block products vanish
      for (int j = 0; j < dom.block_count(); ++j)
        if (j != i) {
          const AlgElem& zi = img[off];
          const AlgElem& zj = img[dom.unit_offset(j)];
          if (!approx_zero((zi * zj).norm(), scale * scale, tol)) return false;
        }
    }
    return true;
  }

  bool is_unital(double tol = kDefaultTol) const {
    return approx_zero((apply(AlgElem::identity(dom)) - AlgElem::identity(cod)).norm(), 1.0, tol);
  }
};

inline AlgMap compose(const AlgMap& f, const AlgMap& g) {
  require(g.cod == f.dom, "incompatible-operands", "map composition domain mismatch");
  AlgMap r{g.dom, f.cod, {}};
  for (const AlgElem& e : g.img) r.img.push_back(f.apply(e));
  return r;
}

/// Kernel ideal and its complement for a *-homomorphism between block
/// algebras.  Each domain block is either annihilated or mapped faithfully.
inline std::pair<Ideal, Ideal> ideal_from_kernel(const AlgMap& phi, double tol = kDefaultTol) {
  require(phi.is_star_hom(tol), "not-a-homomorphism",
          "kernel ideals are only defined for *-homomorphisms");
  double scale = 1.0;
  for (const AlgElem& e : phi.img) scale = std::max(scale, e.norm());
  std::vector<char> mask(phi.dom.block_count(), 0);
  for (int i = 0; i < phi.dom.block_count(); ++i) {
    int n = phi.dom.blocks[i], off = phi.dom.unit_offset(i);
    double biggest = 0;
    for (int p = off; p < off + n * n; ++p) biggest = std::max(biggest, phi.img[p].norm());
    mask[i] = approx_zero(biggest, scale, tol) ? 1 : 0;
  }
  Ideal ker = make_ideal(phi.dom, mask);
  return {ker, ker.complement()};
}

}  // namespace cstar
