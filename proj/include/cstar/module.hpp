// Right Hilbert modules over block C*-algebras in canonical form: over
// B = M_{n_1} + ... + M_{n_k} every such module is a direct sum of row
// spaces, so a module is described by a multiplicity vector (m_i) and a
// vector is one m_i x n_i matrix per block.  Adjointable operators act
// blockwise on the row index.
#pragma once

#include <vector>

#include "cstar/algebra.hpp"
#include "cstar/common.hpp"

namespace cstar {

struct HilbertModule {
  Algebra coeff;
  std::vector<int> mults;  // m_i, one per coefficient block (0 allowed)

  int block_count() const { return coeff.block_count(); }
  /// Complex dimension of the underlying vector space: sum of m_i * n_i.
  int flat_dim() const {
    int d = 0;
    for (int i = 0; i < block_count(); ++i) d += mults[i] * coeff.blocks[i];
    return d;
  }
  int flat_offset(int block) const {
    int off = 0;
    for (int i = 0; i < block; ++i) off += mults[i] * coeff.blocks[i];
    return off;
  }
  /// Number of standard frame vectors: sum of m_i.
  int frame_size() const {
    int s = 0;
    for (int m : mults) s += m;
    return s;
  }
  bool operator==(const HilbertModule& o) const {
    return coeff == o.coeff && mults == o.mults;
  }
  bool operator!=(const HilbertModule& o) const { return !(*this == o); }
};

inline HilbertModule make_module(const Algebra& coeff, const std::vector<int>& mults) {
  require(static_cast<int>(mults.size()) == coeff.block_count(), "invalid-argument",
          "multiplicity vector length must match block count");
  for (int m : mults) require(m >= 0, "invalid-argument", "multiplicities must be nonnegative");
  return HilbertModule{coeff, mults};
}

/// B as a right module over itself (multiplicity n_i in block i).
inline HilbertModule module_of(const Algebra& b) { return HilbertModule{b, b.blocks}; }

struct ModVec {
  HilbertModule mod;
  std::vector<Mat> b;  // m_i x n_i per block

  static ModVec zero(const HilbertModule& m) {
    ModVec v{m, {}};
    for (int i = 0; i < m.block_count(); ++i)
      v.b.push_back(Mat::Zero(m.mults[i], m.coeff.blocks[i]));
    return v;
  }
  /// Standard frame vector: matrix unit E_{r0} in block `block`.
  static ModVec frame(const HilbertModule& m, int block, int r) {
    ModVec v = zero(m);
    v.b[block](r, 0) = 1.0;
    return v;
  }

  double norm() const {  // Hilbert C*-module norm: sqrt(|| <x|x> ||)
    double v = 0;
    for (const Mat& m : b) v = std::max(v, operator_norm(m));
    return v;
  }
  /// Column-major per block, blocks concatenated.
  Vec flatten() const {
    Vec v(mod.flat_dim());
    int off = 0;
    for (const Mat& m : b) {
      for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r) v(off++) = m(r, c);
    }
    return v;
  }
  static ModVec unflatten(const HilbertModule& mod, const Vec& v) {
    require(v.size() == mod.flat_dim(), "invalid-argument", "coordinate length mismatch");
    ModVec x = zero(mod);
    int off = 0;
    for (Mat& m : x.b)
      for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r) m(r, c) = v(off++);
    return x;
  }
};

inline void check_same_module(const ModVec& x, const ModVec& y) {
  require(x.mod == y.mod, "incompatible-operands", "vectors live in different modules");
}

inline ModVec operator+(const ModVec& x, const ModVec& y) {
  check_same_module(x, y);
  ModVec r{x.mod, {}};
  for (size_t i = 0; i < x.b.size(); ++i) r.b.push_back(x.b[i] + y.b[i]);
  return r;
}
inline ModVec operator-(const ModVec& x, const ModVec& y) {
  check_same_module(x, y);
  ModVec r{x.mod, {}};
  for (size_t i = 0; i < x.b.size(); ++i) r.b.push_back(x.b[i] - y.b[i]);
  return r;
}
inline ModVec operator*(const cd& s, const ModVec& x) {
  ModVec r{x.mod, {}};
  for (const Mat& m : x.b) r.b.push_back(s * m);
  return r;
}

/// Right action x . b, blockwise x_i b_i.
inline ModVec operator*(const ModVec& x, const AlgElem& a) {
  require(x.mod.coeff == a.alg, "incompatible-operands", "right action algebra mismatch");
  ModVec r{x.mod, {}};
  for (size_t i = 0; i < x.b.size(); ++i) r.b.push_back(x.b[i] * a.b[i]);
  return r;
}

/// B-valued inner product <x|y>, conjugate-linear in x, linear in y.
inline AlgElem inner(const ModVec& x, const ModVec& y) {
  check_same_module(x, y);
  AlgElem r{x.mod.coeff, {}};
  for (size_t i = 0; i < x.b.size(); ++i) r.b.push_back(x.b[i].adjoint() * y.b[i]);
  return r;
}

/// Scalar pairing tau(<x|y>) = Frobenius inner product of the flats.
inline cd scalar_inner(const ModVec& x, const ModVec& y) {
  return inner(x, y).trace();
}

/// An adjointable operator between canonical modules over the same algebra:
/// one m'_i x m_i matrix per block acting on the row index.
struct AdjOp {
  HilbertModule src, tgt;
  std::vector<Mat> b;

  static AdjOp zero(const HilbertModule& tgt, const HilbertModule& src) {
    require(src.coeff == tgt.coeff, "incompatible-operands",
            "operator endpoints must share the coefficient algebra");
    AdjOp t{src, tgt, {}};
    for (int i = 0; i < src.block_count(); ++i)
      t.b.push_back(Mat::Zero(tgt.mults[i], src.mults[i]));
    return t;
  }
  static AdjOp identity(const HilbertModule& m) {
    AdjOp t{m, m, {}};
    for (int mi : m.mults) t.b.push_back(Mat::Identity(mi, mi));
    return t;
  }

  ModVec apply(const ModVec& x) const {
    require(x.mod == src, "incompatible-operands", "operator applied outside its source module");
    ModVec r = ModVec::zero(tgt);
    for (size_t i = 0; i < b.size(); ++i) r.b[i] = b[i] * x.b[i];
    return r;
  }
  AdjOp adjoint() const {
    AdjOp t{tgt, src, {}};
    for (const Mat& m : b) t.b.push_back(m.adjoint());
    return t;
  }
  double norm() const {
    double v = 0;
    for (const Mat& m : b) v = std::max(v, operator_norm(m));
    return v;
  }
  /// Dense matrix on flattened coordinates: block diagonal of I_{n_i} (x) L_i.
  Mat flat_matrix() const {
    Mat f = Mat::Zero(tgt.flat_dim(), src.flat_dim());
    int ro = 0, co = 0;
    for (size_t i = 0; i < b.size(); ++i) {
      int n = src.coeff.blocks[i];
      for (int c = 0; c < n; ++c)
        f.block(ro + c * b[i].rows(), co + c * b[i].cols(), b[i].rows(), b[i].cols()) = b[i];
      ro += n * static_cast<int>(b[i].rows());
      co += n * static_cast<int>(b[i].cols());
    }
    return f;
  }
};

inline AdjOp operator+(const AdjOp& s, const AdjOp& t) {
  require(s.src == t.src && s.tgt == t.tgt, "incompatible-operands", "operator shape mismatch");
  AdjOp r{s.src, s.tgt, {}};
  for (size_t i = 0; i < s.b.size(); ++i) r.b.push_back(s.b[i] + t.b[i]);
  return r;
}
inline AdjOp operator-(const AdjOp& s, const AdjOp& t) {
  require(s.src == t.src && s.tgt == t.tgt, "incompatible-operands", "operator shape mismatch");
  AdjOp r{s.src, s.tgt, {}};
  for (size_t i = 0; i < s.b.size(); ++i) r.b.push_back(s.b[i] - t.b[i]);
  return r;
}
inline AdjOp operator*(const AdjOp& s, const AdjOp& t) {  // composition s . t
  require(t.tgt == s.src, "incompatible-operands", "operator composition mismatch");
  AdjOp r{t.src, s.tgt, {}};
  for (size_t i = 0; i < s.b.size(); ++i) r.b.push_back(s.b[i] * t.b[i]);
  return r;
}
inline AdjOp operator*(const cd& c, const AdjOp& t) {
  AdjOp r{t.src, t.tgt, {}};
  for (const Mat& m : t.b) r.b.push_back(c * m);
  return r;
}

/// Rank-one operator theta_{x,y} : z -> x . <y|z>; block matrix x_i y_i^*.
/// x and y may live in different modules over the same algebra.
inline AdjOp rank_one(const ModVec& x, const ModVec& y) {
  require(x.mod.coeff == y.mod.coeff, "incompatible-operands",
          "rank-one factors over different coefficient algebras");
  AdjOp t{y.mod, x.mod, {}};
  for (size_t i = 0; i < x.b.size(); ++i) t.b.push_back(x.b[i] * y.b[i].adjoint());
  return t;
}

/// The standard frame u_1..u_F (block-major): sum theta_{u,u} = identity and
/// x = sum u_j . <u_j|x> for every x.
inline std::vector<ModVec> standard_frame(const HilbertModule& m) {
  std::vector<ModVec> frame;
  for (int i = 0; i < m.block_count(); ++i)
    for (int r = 0; r < m.mults[i]; ++r) frame.push_back(ModVec::frame(m, i, r));
  return frame;
}

/// Left multiplication by an algebra element on B viewed as a module over
/// itself (the isomorphism End(B_B) = B).
inline AdjOp left_mult_op(const AlgElem& a) {
  HilbertModule m = module_of(a.alg);
  AdjOp t{m, m, {}};
  t.b = a.b;
  return t;
}

inline ModVec elem_to_vec(const AlgElem& a) {
  ModVec v{module_of(a.alg), {}};
  v.b = a.b;
  return v;
}
inline AlgElem vec_to_elem(const ModVec& v) {
  require(v.mod == module_of(v.mod.coeff), "incompatible-operands",
          "vector is not shaped like an algebra element");
  return AlgElem{v.mod.coeff, v.b};
}

/// Direct sum of modules over the same algebra, with the block embeddings
/// and projections as adjointable operators.
struct DirectSum {
  HilbertModule sum;
  std::vector<AdjOp> embed;    // summand -> sum
  std::vector<AdjOp> project;  // sum -> summand
};

inline DirectSum direct_sum(const std::vector<HilbertModule>& parts) {
  require(!parts.empty(), "invalid-argument", "direct sum needs at least one summand");
  const Algebra& b = parts[0].coeff;
  std::vector<int> mults(b.block_count(), 0);
  for (const HilbertModule& p : parts) {
    require(p.coeff == b, "incompatible-operands", "direct sum over mixed coefficient algebras");
    for (int i = 0; i < b.block_count(); ++i) mults[i] += p.mults[i];
  }
  DirectSum d;
  d.sum = HilbertModule{b, mults};
  std::vector<int> used(b.block_count(), 0);
  for (const HilbertModule& p : parts) {
    AdjOp e = AdjOp::zero(d.sum, p);
    for (int i = 0; i < b.block_count(); ++i)
      e.b[i].block(used[i], 0, p.mults[i], p.mults[i]) = Mat::Identity(p.mults[i], p.mults[i]);
    d.embed.push_back(e);
    d.project.push_back(e.adjoint());
    for (int i = 0; i < b.block_count(); ++i) used[i] += p.mults[i];
  }
  return d;
}

}  // namespace cstar
