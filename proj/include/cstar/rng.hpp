// Deterministic random generators for algebras, modules, vectors, left
// actions and completely positive maps.  All randomness flows through one
// mt19937_64 stream with a hand-rolled Box-Muller transform so that a seed
// reproduces byte-identical instances on every platform.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "cstar/algebra.hpp"
#include "cstar/common.hpp"
#include "cstar/maps.hpp"
#include "cstar/module.hpp"

namespace cstar {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(raw() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double uniform01() {
    return (static_cast<double>(raw() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }
  double gauss() {
    double u1 = uniform01(), u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  cd cgauss() { return cd(gauss(), gauss()) * std::sqrt(0.5); }

  Mat gaussian_matrix(int rows, int cols) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = cgauss();
    return m;
  }
  /// Random isometry (rows >= cols) via phase-fixed QR.
  Mat isometry(int rows, int cols) {
    require(rows >= cols, "invalid-argument", "isometry needs rows >= cols");
    if (cols == 0) return Mat::Zero(rows, 0);
    Eigen::HouseholderQR<Mat> qr(gaussian_matrix(rows, cols));
    Mat q = qr.householderQ() * Mat::Identity(rows, cols);
    Mat r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (int j = 0; j < cols; ++j) {
      cd d = r(j, j);
      if (std::abs(d) > 0) q.col(j) *= d / std::abs(d);
    }
    return q;
  }
  Mat unitary(int n) { return isometry(n, n); }

  Algebra algebra(int max_blocks, int max_dim) {
    int k = uniform_int(1, max_blocks);
    std::vector<int> dims;
    for (int i = 0; i < k; ++i) dims.push_back(uniform_int(1, max_dim));
    return make_algebra(dims);
  }

  AlgElem elem(const Algebra& a) {
    AlgElem e{a, {}};
    for (int n : a.blocks) e.b.push_back(gaussian_matrix(n, n));
    return e;
  }
  AlgElem positive_elem(const Algebra& a) {
    AlgElem g = elem(a);
    return g.adjoint() * g;
  }

  HilbertModule module(const Algebra& coeff, int max_mult, bool allow_zero = false) {
    std::vector<int> mults;
    for (int i = 0; i < coeff.block_count(); ++i)
      mults.push_back(uniform_int(allow_zero ? 0 : 1, max_mult));
    if (allow_zero) {  // at least one nonzero block
      bool any = false;
      for (int m : mults) any = any || (m > 0);
      if (!any) mults[uniform_int(0, coeff.block_count() - 1)] = 1;
    }
    return make_module(coeff, mults);
  }

  ModVec vec(const HilbertModule& m) {
    ModVec v{m, {}};
    for (int i = 0; i < m.block_count(); ++i)
      v.b.push_back(gaussian_matrix(m.mults[i], m.coeff.blocks[i]));
    return v;
  }

  /// Random adjointable unitary on a module (blockwise unitary).
  AdjOp module_unitary(const HilbertModule& m) {
    AdjOp t{m, m, {}};
    for (int mi : m.mults) t.b.push_back(unitary(mi));
    return t;
  }

 private:
  std::mt19937_64 gen_;
};

/// The internal shape of a representation of A on a family of spaces: for
/// output space i, mult[i][j] copies of the j-th block of A, conjugated by
/// basis_change[i].  Output space i has dimension sum_j mult[i][j] * a_j.
struct RepStructure {
  Algebra dom;
  std::vector<std::vector<int>> mult;
  std::vector<Mat> basis_change;

  int space_dim(int i) const {
    int d = 0;
    for (int j = 0; j < dom.block_count(); ++j) d += mult[i][j] * dom.blocks[j];
    return d;
  }
  /// Value of the representation on an element, on space i.
  Mat rep(int i, const AlgElem& a) const {
    int d = space_dim(i);
    Mat m = Mat::Zero(d, d);
    int off = 0;
    for (int j = 0; j < dom.block_count(); ++j) {
      int nj = dom.blocks[j];
      for (int c = 0; c < mult[i][j]; ++c) {
        m.block(off, off, nj, nj) = a.b[j];
        off += nj;
      }
    }
    return basis_change[i] * m * basis_change[i].adjoint();
  }
};

/// Random representation structure with `spaces` output spaces and
/// multiplicities in [0, max_mult].  When ensure_faithful is set every
/// domain block appears somewhere.  min_dim forces space dimensions up.
inline RepStructure random_rep_structure(Rng& rng, const Algebra& dom, int spaces, int max_mult,
                                         bool ensure_faithful, const std::vector<int>& min_dim) {
  RepStructure rs;
  rs.dom = dom;
  int J = dom.block_count();
  rs.mult.assign(spaces, std::vector<int>(J, 0));
  for (int i = 0; i < spaces; ++i)
    for (int j = 0; j < J; ++j) rs.mult[i][j] = rng.uniform_int(0, max_mult);
  if (ensure_faithful)
    for (int j = 0; j < J; ++j) {
      bool seen = false;
      for (int i = 0; i < spaces; ++i) seen = seen || rs.mult[i][j] > 0;
      if (!seen) rs.mult[rng.uniform_int(0, spaces - 1)][j] = 1;
    }
  for (int i = 0; i < spaces; ++i) {
    int need = min_dim.empty() ? 0 : min_dim[i];
    while (rs.space_dim(i) < std::max(need, 0)) rs.mult[i][rng.uniform_int(0, J - 1)] += 1;
    rs.basis_change.push_back(rng.unitary(rs.space_dim(i)));
  }
  return rs;
}

/// Random unital *-homomorphism out of A; the codomain block sizes are the
/// dimensions carried by the representation structure (blocks of size zero
/// are bumped to contain something).
struct HomWithStructure {
  AlgMap map;
  RepStructure structure;
};

inline HomWithStructure random_star_hom(Rng& rng, const Algebra& dom, int cod_blocks,
                                        int max_mult, bool ensure_injective = true) {
  RepStructure rs =
      random_rep_structure(rng, dom, cod_blocks, max_mult, ensure_injective,
                           std::vector<int>(cod_blocks, 1));
  std::vector<int> dims;
  for (int i = 0; i < cod_blocks; ++i) dims.push_back(rs.space_dim(i));
  Algebra cod = make_algebra(dims);
  AlgMap map{dom, cod, {}};
  for (const AlgElem& e : AlgMap::identity(dom).img) {
    AlgElem v = AlgElem::zero(cod);
    for (int i = 0; i < cod_blocks; ++i) v.b[i] = rs.rep(i, e);
    map.img.push_back(v);
  }
  return {map, rs};
}

/// The trace-weighted conditional expectation from the codomain of a
/// structured unital inclusion back onto its domain copy: partial trace
/// over the multiplicity spaces, averaged with dimension weights.
inline AlgMap conditional_expectation_for(const HomWithStructure& inc) {
  const Algebra& b = inc.map.dom;
  const Algebra& a = inc.map.cod;
  const RepStructure& rs = inc.structure;
  AlgMap exp{a, b, {}};
  std::vector<int> total_mult(b.block_count(), 0);
  for (int i = 0; i < a.block_count(); ++i)
    for (int j = 0; j < b.block_count(); ++j) total_mult[j] += rs.mult[i][j];
  for (const AlgElem& e : AlgMap::identity(a).img) {
    AlgElem v = AlgElem::zero(b);
    for (int i = 0; i < a.block_count(); ++i) {
      Mat inner = rs.basis_change[i].adjoint() * e.b[i] * rs.basis_change[i];
      int off = 0;
      for (int j = 0; j < b.block_count(); ++j) {
        int nj = b.blocks[j];
        for (int c = 0; c < rs.mult[i][j]; ++c) {
          v.b[j] += inner.block(off, off, nj, nj);
          off += nj;
        }
      }
    }
    for (int j = 0; j < b.block_count(); ++j)
      if (total_mult[j] > 0) v.b[j] /= static_cast<double>(total_mult[j]);
    exp.img.push_back(v);
  }
  return exp;
}

/// Random correspondence from A to B: module over B with a unital left
/// action of A built from a random representation structure on the
/// multiplicity spaces.
inline Correspondence random_hom_correspondence(Rng& rng, const Algebra& a, const Algebra& b,
                                                int max_mult, bool ensure_injective = true) {
  RepStructure rs = random_rep_structure(rng, a, b.block_count(), max_mult, ensure_injective, {});
  std::vector<int> mults;
  for (int i = 0; i < b.block_count(); ++i) mults.push_back(rs.space_dim(i));
  HilbertModule mod = make_module(b, mults);
  OpMap phi{a, mod, {}};
  for (const AlgElem& e : AlgMap::identity(a).img) {
    AdjOp t = AdjOp::zero(mod, mod);
    for (int i = 0; i < b.block_count(); ++i) t.b[i] = rs.rep(i, e);
    phi.img.push_back(t);
  }
  return Correspondence{a, mod, phi};
}

/// Random unital completely positive map A -> B in Stinebring form
/// rho_i(a) = V_i^* pi_i(a) V_i with isometries V_i.
inline AlgMap random_cp_map(Rng& rng, const Algebra& a, const Algebra& b, int max_mult) {
  RepStructure rs = random_rep_structure(rng, a, b.block_count(), max_mult, false, b.blocks);
  std::vector<Mat> v;
  for (int i = 0; i < b.block_count(); ++i) v.push_back(rng.isometry(rs.space_dim(i), b.blocks[i]));
  AlgMap map{a, b, {}};
  for (const AlgElem& e : AlgMap::identity(a).img) {
    AlgElem x = AlgElem::zero(b);
    for (int i = 0; i < b.block_count(); ++i) x.b[i] = v[i].adjoint() * rs.rep(i, e) * v[i];
    map.img.push_back(x);
  }
  return map;
}

/// Random unital completely positive left action of A on a given module
/// (generally not multiplicative).
inline Correspondence random_cp_correspondence(Rng& rng, const Algebra& a,
                                               const HilbertModule& mod, int max_mult) {
  OpMap phi{a, mod, {}};
  std::vector<Mat> v;
  RepStructure rs = random_rep_structure(rng, a, mod.block_count(), max_mult, false, mod.mults);
  for (int i = 0; i < mod.block_count(); ++i) v.push_back(rng.isometry(rs.space_dim(i), mod.mults[i]));
  for (const AlgElem& e : AlgMap::identity(a).img) {
    AdjOp t = AdjOp::zero(mod, mod);
    for (int i = 0; i < mod.block_count(); ++i) t.b[i] = v[i].adjoint() * rs.rep(i, e) * v[i];
    phi.img.push_back(t);
  }
  return Correspondence{a, mod, phi};
}

}  // namespace cstar
