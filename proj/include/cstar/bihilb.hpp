// Bi-Hilbertian bimodules: two-sided inner products, the module index and
// its frame calculus, the index projection, conjugated correspondences
// F* (x) X (x) F, the interleaving isometries W_n into the ambient Fock
// picture, the representation psi, the compression Phi back onto the Fock
// module of X, and a covering-space example generator.
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "cstar/fock.hpp"
#include "cstar/rng.hpp"
#include "cstar/tensor.hpp"

namespace cstar {

/// A left inner product on a correspondence: A-valued, linear in the first
/// argument, conjugate-linear in the second.
using LeftInner = std::function<AlgElem(const ModVec&, const ModVec&)>;

/// The trace-dual left inner product: the unique A-valued form with
/// tau_A(c . <f|g>) = flat(g)^* phi(c) flat(f) for every c.  For column
/// modules this is f g^*; for function modules over a finite cover it is the
/// fibre sum.
inline AlgElem default_left_inner(const Correspondence& corr, const ModVec& f,
                                  const ModVec& g) {
  Vec vf = f.flatten(), vg = g.flatten();
  AlgElem x = AlgElem::zero(corr.left);
  for (int j = 0; j < corr.left.block_count(); ++j)
    for (int k = 0; k < corr.left.blocks[j]; ++k)
      for (int l = 0; l < corr.left.blocks[j]; ++l)
        x.b[j](l, k) = vg.dot(corr.phi.unit_image(j, k, l).flat_matrix() * vf);
  return x;
}

/// A correspondence together with a validated left inner product: the left
/// action of A is by adjointables for <.|.>_B, the right action of B is
/// adjointable for the left form, and both forms are definite.
struct BiHilbModule {
  Correspondence corr;
  std::vector<std::vector<AlgElem>> table;  // left inner products of flat basis pairs
  double norm_lower = 0.0, norm_upper = 0.0;

  AlgElem left_inner(const ModVec& f, const ModVec& g) const {
    Vec vf = f.flatten(), vg = g.flatten();
    AlgElem r = AlgElem::zero(corr.left);
    for (int p = 0; p < vf.size(); ++p) {
      if (vf(p) == cd(0)) continue;
      for (int q = 0; q < vg.size(); ++q) {
        cd c = vf(p) * std::conj(vg(q));
        if (c != cd(0)) r = r + c * table[p][q];
      }
    }
    return r;
  }
};

namespace detail {
inline Mat block_diag_rep(const AlgElem& a) {
  int d = 0;
  for (const Mat& m : a.b) d += static_cast<int>(m.rows());
  Mat r = Mat::Zero(d, d);
  int off = 0;
  for (const Mat& m : a.b) {
    r.block(off, off, m.rows(), m.cols()) = m;
    off += static_cast<int>(m.rows());
  }
  return r;
}
}  // namespace detail

inline BiHilbModule make_bihilb(const Correspondence& corr, const LeftInner& li,
                                double tol = kDefaultTol) {
  BiHilbModule f;
  f.corr = corr;
  int d = corr.mod.flat_dim();
  std::vector<ModVec> basis;
  for (int p = 0; p < d; ++p)
    basis.push_back(ModVec::unflatten(corr.mod, Vec(Vec::Unit(d, p))));
  f.table.assign(d, std::vector<AlgElem>());
  double scale = 1.0;
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q) {
      AlgElem x = li(basis[p], basis[q]);
      require(x.alg == corr.left, "not-bihilbertian",
              "left inner product must take values in the left algebra");
      scale = std::max(scale, x.norm());
      f.table[p].push_back(x);
    }
  double cut = std::max(tol, 1e-10) * scale;

  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q)
      require((f.table[p][q].adjoint() - f.table[q][p]).norm() < cut, "not-bihilbertian",
              "left inner product is not hermitian");

  AlgMap ida = AlgMap::identity(corr.left);
  for (const AlgElem& a : ida.img)
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q)
        require((li(corr.phi.apply(a).apply(basis[p]), basis[q]) - a * f.table[p][q]).norm() <
                    cut * std::max(1.0, corr.phi.image_scale()),
                "not-bihilbertian", "left inner product is not A-linear on the left");

  AlgMap idb = AlgMap::identity(corr.mod.coeff);
  for (const AlgElem& b : idb.img)
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q)
        require((li(basis[p] * b, basis[q]) - li(basis[p], basis[q] * b.adjoint())).norm() <
                    cut * std::max(1.0, b.norm()),
                "not-bihilbertian", "right action is not adjointable for the left form");

  // Positivity of the form in the complete sense: the matrix of represented
  // left inner products of basis vectors must be positive semidefinite.
  int rep_dim = 0;
  for (int n : corr.left.blocks) rep_dim += n;
  Mat big = Mat::Zero(d * rep_dim, d * rep_dim);
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q)
      big.block(p * rep_dim, q * rep_dim, rep_dim, rep_dim) =
          detail::block_diag_rep(f.table[p][q]);
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(big), Eigen::EigenvaluesOnly);
  require(es.eigenvalues()(0) > -cut, "not-bihilbertian",
          "left inner product is not positive");

  // Scalarized Gram of the left form; its spectrum against the (orthonormal)
  // right Gram gives the reported norm-equivalence constants.
  Mat gl(d, d);
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q) gl(p, q) = f.table[p][q].trace();
  Eigen::SelfAdjointEigenSolver<Mat> gs(hermitize(gl), Eigen::EigenvaluesOnly);
  f.norm_lower = gs.eigenvalues()(0);
  f.norm_upper = gs.eigenvalues()(d - 1);
  require(f.norm_lower > cut, "not-bihilbertian", "left inner product is degenerate");
  return f;
}

inline BiHilbModule make_bihilb(const Correspondence& corr, double tol = kDefaultTol) {
  return make_bihilb(
      corr, [&corr](const ModVec& a, const ModVec& b) { return default_left_inner(corr, a, b); },
      tol);
}

/// The conjugate module F*: the same space with conjugated coordinates, a
/// right A-module via the old left action, carrying a left action of B.
struct ConjugateModule {
  HilbertModule mod;  // canonical right-A module
  Mat q, s;           // q : conj(flat F) -> flat F*, with q s = id
  OpMap left;         // left action of B
  double left_residual = 0.0;
};

inline ConjugateModule conjugate_module(const BiHilbModule& f, double tol = kDefaultTol) {
  const Correspondence& c = f.corr;
  int d = c.mod.flat_dim();
  SemiInnerSpace raw;
  raw.coeff = c.left;
  raw.dim = d;
  raw.gram = Mat(d, d);
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q) raw.gram(p, q) = f.table[p][q].trace();
  for (int j = 0; j < c.left.block_count(); ++j)
    for (int k = 0; k < c.left.blocks[j]; ++k)
      for (int l = 0; l < c.left.blocks[j]; ++l)
        raw.right.push_back(c.phi.unit_image(j, l, k).flat_matrix().conjugate());
  raw.left_alg = c.mod.coeff;
  for (int i = 0; i < c.mod.coeff.block_count(); ++i)
    for (int k = 0; k < c.mod.coeff.blocks[i]; ++k)
      for (int l = 0; l < c.mod.coeff.blocks[i]; ++l)
        raw.left.push_back(right_unit_matrix(c.mod, i, l, k).conjugate());
  CanonResult can = canonicalize(raw, tol);
  require(can.left.has_value(), "invalid-argument", "conjugate module lost its left action");
  return ConjugateModule{can.mod, can.q, can.s, *can.left, can.left_residual};
}

/// The conjugate of a vector: f |-> f^* in the canonical conjugate module.
inline ModVec conj_vec(const ConjugateModule& cm, const ModVec& f) {
  return ModVec::unflatten(cm.mod, Vec(cm.q * f.flatten().conjugate()));
}

/// The inverse transport: a canonical conjugate vector pulled back to F.
inline ModVec conj_vec_back(const ConjugateModule& cm, const HilbertModule& fmod,
                            const ModVec& w) {
  return ModVec::unflatten(fmod, Vec((cm.s * w.flatten()).conjugate()));
}

/// The right module index, its inverse square root, and the regularity flag.
struct IndexData {
  AlgElem ebeta;       // sum of left inner products over a right frame
  AlgElem ebeta_left;  // mirror index: sum of right inner products over a left frame
  std::optional<AlgElem> ebeta_inv_sqrt;
  bool regular = false;
  double frame_residual = 0.0;
  double central_residual = 0.0;
};

inline IndexData watatani_index(const BiHilbModule& f, double tol = kDefaultTol,
                                unsigned seed = 7) {
  IndexData idx{AlgElem::zero(f.corr.left), AlgElem::zero(f.corr.mod.coeff), std::nullopt};
  auto frame = standard_frame(f.corr.mod);
  for (const ModVec& u : frame) idx.ebeta = idx.ebeta + f.left_inner(u, u);

  double scale = std::max(1.0, idx.ebeta.norm());
  require((idx.ebeta.adjoint() - idx.ebeta).norm() < std::max(tol, 1e-10) * scale,
          "not-bihilbertian", "module index is not hermitian");
  double min_eig = std::numeric_limits<double>::infinity();
  for (const Mat& m : idx.ebeta.b) {
    if (m.rows() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(m), Eigen::EigenvaluesOnly);
    min_eig = std::min(min_eig, es.eigenvalues()(0));
  }
  require(min_eig > -std::max(tol, 1e-10) * scale, "not-bihilbertian",
          "module index is not positive");

  AlgMap ida = AlgMap::identity(f.corr.left);
  for (const AlgElem& a : ida.img)
    idx.central_residual =
        std::max(idx.central_residual, (idx.ebeta * a - a * idx.ebeta).norm());

  // Recompute against an independently rotated frame.
  Rng rng(seed);
  AdjOp w = rng.module_unitary(f.corr.mod);
  AlgElem again = AlgElem::zero(f.corr.left);
  for (const ModVec& u : frame) again = again + f.left_inner(w.apply(u), w.apply(u));
  idx.frame_residual = (again - idx.ebeta).norm();

  idx.regular = min_eig > std::max(tol, 1e-9) * scale;
  if (idx.regular) idx.ebeta_inv_sqrt = spectral_power(idx.ebeta, -0.5, tol);

  // Mirror index from the conjugate module's frame, pulled back to a left
  // frame of F.
  ConjugateModule cm = conjugate_module(f, tol);
  for (const ModVec& v : standard_frame(cm.mod)) {
    ModVec u = conj_vec_back(cm, f.corr.mod, v);
    idx.ebeta_left = idx.ebeta_left + inner(u, u);
  }
  return idx;
}

/// The trace on adjointable operators dual to the left inner product:
/// the frame sum of left inner products <T u_j | u_j>.
inline AlgElem upsilon(const BiHilbModule& f, const AdjOp& t) {
  require(t.src == f.corr.mod && t.tgt == f.corr.mod, "incompatible-operands",
          "operator does not act on the bimodule");
  AlgElem r = AlgElem::zero(f.corr.left);
  for (const ModVec& u : standard_frame(f.corr.mod)) r = r + f.left_inner(t.apply(u), u);
  return r;
}

/// The canonical tensor square F (x)_B F* with its central unit vector Z and
/// the index projection onto A . Z.
struct IndexCorner {
  ConjugateModule fstar;
  TensorResult ffstar;  // canonical F (x)_B F*, left action of A
  ModVec z;             // e^{-beta/2} sum_j u_j (x) u_j^*
  AdjOp p0;             // rank one of z against itself
};

inline IndexCorner index_projection(const BiHilbModule& f, double tol = kDefaultTol) {
  IndexData idx = watatani_index(f, tol);
  require(idx.regular, "index-not-invertible",
          "the index projection needs an invertible module index");
  IndexCorner c;
  c.fstar = conjugate_module(f, tol);
  Correspondence fstar_corr{f.corr.mod.coeff, c.fstar.mod, c.fstar.left};
  c.ffstar = balanced_tensor(f.corr.mod, f.corr.phi, fstar_corr, tol);
  require(c.ffstar.left.has_value(), "invalid-argument", "tensor square lost its left action");
  c.z = ModVec::zero(c.ffstar.mod);
  AdjOp half = f.corr.phi.apply(*idx.ebeta_inv_sqrt);
  for (const ModVec& u : standard_frame(f.corr.mod))
    c.z = c.z + tensor_vector(c.ffstar, half.apply(u), conj_vec(c.fstar, u));
  c.p0 = rank_one(c.z, c.z);
  return c;
}

/// The conjugated correspondence F* (x)_A X (x)_A F over B, built in two
/// recorded tensor steps.
struct ConjugatedCorrespondence {
  ConjugateModule fstar;
  TensorResult xf;    // canonical X (x)_A F: module over B, left action of A
  TensorResult full;  // canonical F* (x)_A (XF): module over B, left action of B
  Correspondence g;

  /// The image of f1^* (x) xmid (x) f2 in the canonical module.
  ModVec vec(const ModVec& f1, const ModVec& xmid, const ModVec& f2) const {
    return tensor_vector(full, conj_vec(fstar, f1), tensor_vector(xf, xmid, f2));
  }
};

inline ConjugatedCorrespondence conjugate_correspondence(const Correspondence& x,
                                                         const BiHilbModule& f,
                                                         double tol = kDefaultTol) {
  require(x.mod.coeff == x.left && x.left == f.corr.left, "incompatible-operands",
          "correspondence and bimodule must share the left algebra");
  ConjugatedCorrespondence c;
  c.fstar = conjugate_module(f, tol);
  c.xf = balanced_tensor(x.mod, x.phi, f.corr, tol);
  require(c.xf.left.has_value(), "invalid-argument", "tensor step lost its left action");
  Correspondence xf_corr{x.left, c.xf.mod, *c.xf.left};
  c.full = balanced_tensor(c.fstar.mod, c.fstar.left, xf_corr, tol);
  require(c.full.left.has_value(), "invalid-argument", "tensor step lost its left action");
  c.g = Correspondence{f.corr.mod.coeff, c.full.mod, *c.full.left};
  return c;
}

/// The ambient tower: level n is the canonical form of
/// F (x) (F*XF)^{(x) n} (x) F*, assembled levelwise from the Fock tower of
/// the conjugated correspondence, together with the interleaving isometries
/// W_n from the Fock tower of X.
struct AmbientTower {
  Correspondence x;
  BiHilbModule f;
  ConjugatedCorrespondence conj;
  FockTower gt;  // Fock tower of F*XF over B
  FockTower xt;  // Fock tower of X over A
  std::vector<TensorResult> st1;  // F (x) G_k
  std::vector<TensorResult> st2;  // (F (x) G_k) (x) F*
  std::vector<HilbertModule> level;
  AlgElem ebeta, ebh;  // the index and its inverse square root
  ModVec z0;           // Z in level 0
  std::vector<AdjOp> w;

  int top() const { return static_cast<int>(level.size()) - 1; }

  /// Raw triple coordinates of a level vector: rows indexed by
  /// (F-index * dim G_k + G_k-index), columns by the conjugate index.
  Mat from_can(int k, const Vec& v) const {
    int dfs = conj.fstar.mod.flat_dim();
    Vec u2 = st2[k].s * v;
    Mat u(st1[k].mod.flat_dim(), dfs);
    for (int p = 0; p < u.rows(); ++p)
      for (int h = 0; h < dfs; ++h) u(p, h) = u2(p * dfs + h);
    return st1[k].s * u;
  }

  /// Back from raw triple coordinates to the canonical level vector.
  Vec to_can(int k, const Mat& v3) const {
    int dfs = conj.fstar.mod.flat_dim();
    Mat u = st1[k].q * v3;
    Vec u2(u.rows() * dfs);
    for (int p = 0; p < u.rows(); ++p)
      for (int h = 0; h < dfs; ++h) u2(p * dfs + h) = u(p, h);
    return st2[k].q * u2;
  }

  /// The elementary ambient vector f (x) zword (x) g^* at level k.
  ModVec vec(const ModVec& fv, const ModVec& zword, int k, const ModVec& gv) const {
    return tensor_vector(st2[k], tensor_vector(st1[k], fv, zword), conj_vec(conj.fstar, gv));
  }

  /// The diagonal left action of A on the whole ambient tower.
  FockOp action(const AlgElem& a) const {
    FockOp r{level, {}};
    for (int k = 0; k <= top(); ++k) r.set(k, k, st2[k].left->apply(a));
    return r;
  }
};

namespace detail {
/// Appends "(x) e_r (x) Z" to an ambient level-k vector, landing at level
/// k+1: the new X-factor and one Z-leg are folded into the middle word and
/// the trailing conjugate slot is replaced by the Z-leg's conjugate frame
/// vector.
inline Vec ambient_append(const AmbientTower& t, int k, const std::vector<std::vector<Mat>>& tr,
                          const std::vector<Vec>& culflat, int r, const Vec& v) {
  int df = t.f.corr.mod.flat_dim();
  int dgk = t.gt.level[k].flat_dim();
  int dgk1 = t.gt.level[k + 1].flat_dim();
  int dg = t.conj.g.mod.flat_dim();
  int dfs = t.conj.fstar.mod.flat_dim();
  Mat v3 = t.from_can(k, v);
  Mat out3 = Mat::Zero(df * dgk1, dfs);
  for (std::size_t l = 0; l < culflat.size(); ++l) {
    for (int fi = 0; fi < df; ++fi) {
      Mat zf = v3.middleRows(fi * dgk, dgk) * tr[r][l].transpose();  // dgk x dg
      Vec raw(dgk * dg);
      for (int om = 0; om < dgk; ++om)
        for (int gg = 0; gg < dg; ++gg) raw(om * dg + gg) = zf(om, gg);
      Vec gvec = t.gt.q[k + 1] * raw;
      out3.middleRows(fi * dgk1, dgk1) += gvec * culflat[l].transpose();
    }
  }
  return t.to_can(k + 1, out3);
}
}  // namespace detail

inline AmbientTower ambient_tower(const Correspondence& x, const BiHilbModule& f, int depth,
                                  double tol = kDefaultTol) {
  AmbientTower t;
  t.x = x;
  t.f = f;
  IndexData idx = watatani_index(f, tol);
  require(idx.regular, "index-not-invertible",
          "the ambient compression needs an invertible module index");
  t.ebeta = idx.ebeta;
  t.ebh = *idx.ebeta_inv_sqrt;
  t.conj = conjugate_correspondence(x, f, tol);
  t.gt = truncated_fock(t.conj.g, depth, tol);
  t.xt = truncated_fock(x, depth, tol);
  for (int k = 0; k <= depth; ++k) {
    Correspondence gk{f.corr.mod.coeff, t.gt.level[k], t.gt.action[k]};
    TensorResult s1 = balanced_tensor(f.corr.mod, f.corr.phi, gk, tol);
    require(s1.left.has_value(), "invalid-argument", "ambient level lost its left action");
    Correspondence fstar_corr{f.corr.mod.coeff, t.conj.fstar.mod, t.conj.fstar.left};
    TensorResult s2 = balanced_tensor(s1.mod, s1.left, fstar_corr, tol);
    require(s2.left.has_value(), "invalid-argument", "ambient level lost its left action");
    t.st1.push_back(std::move(s1));
    t.st2.push_back(std::move(s2));
    t.level.push_back(t.st2.back().mod);
  }

  auto frame = standard_frame(f.corr.mod);
  AdjOp half = f.corr.phi.apply(t.ebh);
  ModVec one_b = elem_to_vec(AlgElem::identity(f.corr.mod.coeff));
  t.z0 = ModVec::zero(t.level[0]);
  for (const ModVec& u : frame) t.z0 = t.z0 + t.vec(half.apply(u), one_b, 0, u);

  // Per (X-basis, frame) matrices sending a conjugate-slot coordinate h to
  // the middle-word coordinates of h^* (x) e_r (x) e^{-beta/2} u_l.
  int dfs = t.conj.fstar.mod.flat_dim();
  int dxf = t.conj.xf.mod.flat_dim();
  std::vector<std::vector<Mat>> tr(x.mod.flat_dim());
  std::vector<Vec> culflat;
  for (const ModVec& u : frame) culflat.push_back(conj_vec(t.conj.fstar, u).flatten());
  for (int r = 0; r < x.mod.flat_dim(); ++r) {
    ModVec er = ModVec::unflatten(x.mod, Vec(Vec::Unit(x.mod.flat_dim(), r)));
    for (const ModVec& u : frame) {
      Vec xrl = tensor_vector(t.conj.xf, er, half.apply(u)).flatten();
      Mat m(t.conj.g.mod.flat_dim(), dfs);
      for (int h = 0; h < dfs; ++h) m.col(h) = t.conj.full.q.middleCols(h * dxf, dxf) * xrl;
      tr[r].push_back(std::move(m));
    }
  }

  // W_0 sends an algebra element a to a . Z; higher levels interleave the
  // word with Z-legs one tensor factor at a time.
  Mat w0(t.level[0].flat_dim(), t.xt.level[0].flat_dim());
  for (int p = 0; p < w0.cols(); ++p) {
    AlgElem ap =
        vec_to_elem(ModVec::unflatten(t.xt.level[0], Vec(Vec::Unit(w0.cols(), p))));
    w0.col(p) = t.st2[0].left->apply(ap).apply(t.z0).flatten();
  }
  std::vector<Mat> wflat{w0};
  int dx = x.mod.flat_dim();
  for (int k = 0; k < depth; ++k) {
    Mat next = Mat::Zero(t.level[k + 1].flat_dim(), t.xt.level[k + 1].flat_dim());
    std::vector<std::vector<Vec>> appended(wflat[k].cols(), std::vector<Vec>(dx));
    for (int p = 0; p < wflat[k].cols(); ++p)
      for (int r = 0; r < dx; ++r)
        appended[p][r] =
            detail::ambient_append(t, k, tr, culflat, r, Vec(wflat[k].col(p)));
    for (int c = 0; c < next.cols(); ++c) {
      Vec raw = t.xt.s[k + 1].col(c);
      for (int p = 0; p < wflat[k].cols(); ++p)
        for (int r = 0; r < dx; ++r)
          if (raw(p * dx + r) != cd(0)) next.col(c) += raw(p * dx + r) * appended[p][r];
    }
    wflat.push_back(std::move(next));
  }
  for (int k = 0; k <= depth; ++k) {
    auto [wk, res] = adjop_from_flat(t.level[k], t.xt.level[k], wflat[k]);
    require(res < std::max(tol, 1e-8) * std::max(1.0, operator_norm(wflat[k])),
            "invalid-argument", "interleaving isometry failed to be right-linear");
    t.w.push_back(wk);
  }
  return t;
}

/// The interleaving isometry at level n.
inline AdjOp wn_isometry(const AmbientTower& t, int n) {
  require(0 <= n && n <= t.top(), "invalid-argument", "level out of range");
  return t.w[n];
}

/// An operator f (x) S (x) g^* on the ambient tower: S acts on the middle
/// Fock word after the inner product <g|.>_B absorbs the incoming F-leg, f
/// refills the F-leg, and the trailing conjugate slot is untouched.
inline FockOp elementary_op(const AmbientTower& t, const ModVec& fv, const FockOp& s,
                            const ModVec& gv, double tol = kDefaultTol) {
  require(s.levels == t.gt.level, "incompatible-operands",
          "middle operator must live on the conjugated Fock tower");
  int df = t.f.corr.mod.flat_dim();
  int dfs = t.conj.fstar.mod.flat_dim();
  Vec fflat = fv.flatten();
  FockOp r{t.level, {}};
  for (const auto& [key, op] : s.blocks) {
    auto [kt, kf] = key;
    int dgt = t.gt.level[kt].flat_dim(), dgf = t.gt.level[kf].flat_dim();
    Mat sm = op.flat_matrix();
    std::vector<Mat> srep(df);
    for (int h = 0; h < df; ++h) {
      ModVec eh = ModVec::unflatten(t.f.corr.mod, Vec(Vec::Unit(df, h)));
      srep[h] = sm * t.gt.action[kf].apply(inner(gv, eh)).flat_matrix();
    }
    Mat block(t.level[kt].flat_dim(), t.level[kf].flat_dim());
    for (int c = 0; c < block.cols(); ++c) {
      Mat v3 = t.from_can(kf, Vec(Vec::Unit(block.cols(), c)));
      Mat wmat = Mat::Zero(dgt, dfs);
      for (int h = 0; h < df; ++h) wmat += srep[h] * v3.middleRows(h * dgf, dgf);
      Mat out3(df * dgt, dfs);
      for (int fo = 0; fo < df; ++fo) out3.middleRows(fo * dgt, dgt) = fflat(fo) * wmat;
      block.col(c) = t.to_can(kt, out3);
    }
    auto [bop, res] = adjop_from_flat(t.level[kt], t.level[kf], block);
    require(res < std::max(tol, 1e-8) * std::max(1.0, operator_norm(block)),
            "invalid-argument", "elementary operator failed to be right-linear");
    r.set(kt, kf, bop);
  }
  return r;
}

/// The representation of X on the ambient tower: the frame sum of
/// elementary operators with middle creations by u_i^* (x) e^{-beta/2} x
/// (x) u_j.
inline FockOp psi_representation(const AmbientTower& t, const ModVec& xv,
                                 double tol = kDefaultTol) {
  require(xv.mod == t.x.mod, "incompatible-operands", "vector does not live in X");
  FockOp r{t.level, {}};
  AdjOp half = t.x.phi.apply(t.ebh);
  auto frame = standard_frame(t.f.corr.mod);
  for (const ModVec& ui : frame)
    for (const ModVec& uj : frame) {
      ModVec mid = t.conj.vec(ui, half.apply(xv), uj);
      r = r + elementary_op(t, ui, creation(t.gt, mid, tol), uj, tol);
    }
  return r;
}

/// Compression of an ambient operator back onto the Fock tower of X through
/// the interleaving isometries.
inline FockOp phi_expectation(const AmbientTower& t, const FockOp& s) {
  require(s.levels == t.level, "incompatible-operands",
          "operator must live on the ambient tower");
  FockOp r{t.xt.level, {}};
  for (const auto& [key, op] : s.blocks)
    r.set(key.first, key.second, t.w[key.first].adjoint() * op * t.w[key.second]);
  return r;
}

/// One factor f^* (x) x (x) g of a word in the conjugated correspondence.
struct GFactor {
  ModVec fs, xm, fr;
};

/// The canonical vector of a word of conjugated factors at its level.
inline ModVec g_word_vector(const AmbientTower& t, const std::vector<GFactor>& fac) {
  require(!fac.empty() && static_cast<int>(fac.size()) <= t.gt.top(), "invalid-argument",
          "word length out of range");
  ModVec cur = embed_generator(t.gt, t.conj.vec(fac[0].fs, fac[0].xm, fac[0].fr));
  for (std::size_t i = 1; i < fac.size(); ++i) {
    ModVec next = t.conj.vec(fac[i].fs, fac[i].xm, fac[i].fr);
    int k = static_cast<int>(i);
    Vec raw = kron(Mat(cur.flatten()), Mat(next.flatten())).col(0);
    cur = ModVec::unflatten(t.gt.level[k + 1], Vec(t.gt.q[k + 1] * raw));
  }
  return cur;
}

/// The X-tower vector obtained by threading pair inner products through a
/// word: factors e^{-beta/2} <prev | f_i>_A . x_i, starting from `lead`.
inline ModVec threaded_word(const AmbientTower& t, const ModVec& lead,
                            const std::vector<GFactor>& fac) {
  ModVec prev = lead;
  ModVec cur = ModVec::zero(t.xt.level[0]);
  for (std::size_t i = 0; i < fac.size(); ++i) {
    AlgElem a = t.ebh * t.f.left_inner(prev, fac[i].fs);
    ModVec xi = t.x.phi.apply(a).apply(fac[i].xm);
    if (i == 0) {
      cur = embed_generator(t.xt, xi);
    } else {
      int k = static_cast<int>(i);
      Vec raw = kron(Mat(cur.flatten()), Mat(xi.flatten())).col(0);
      cur = ModVec::unflatten(t.xt.level[k + 1], Vec(t.xt.q[k + 1] * raw));
    }
    prev = fac[i].fr;
  }
  return cur;
}

/// The closed form of the compression of f (x) T_z T_w^* (x) g^*: a creation
/// word by the threaded z-factors, the middle index contraction, and the
/// adjoint creation word by the threaded w-factors.
inline FockOp phi_closed_form(const AmbientTower& t, const ModVec& fv,
                              const std::vector<GFactor>& z, const std::vector<GFactor>& w,
                              const ModVec& gv, double tol = kDefaultTol) {
  require(!z.empty() && !w.empty(), "invalid-argument", "closed form needs nonempty words");
  ModVec xi = threaded_word(t, fv, z);
  ModVec eta = threaded_word(t, gv, w);
  AlgElem mid = t.ebh * t.ebh * t.f.left_inner(z.back().fr, w.back().fr);
  return creation(t.xt, xi, static_cast<int>(z.size()), tol) * fock_action(t.xt, mid) *
         creation(t.xt, eta, static_cast<int>(w.size()), tol).adjoint();
}

/// A finite covering-space instance: A = functions on the base, B = functions
/// on the cover, F = C(cover) with the fibre-sum left inner product, X the
/// twist of C(base) by the base bijection.
struct CoveringData {
  Algebra a, b;
  Correspondence x;
  BiHilbModule f;
  ConjugatedCorrespondence conj;
  int fibre_product_dim = 0;
};

inline CoveringData covering_bimodule(int m, const std::vector<int>& gamma, int mtilde,
                                      const std::vector<int>& pi, double tol = kDefaultTol) {
  require(m >= 1 && mtilde >= 1, "not-a-cover", "base and cover must be nonempty");
  require(static_cast<int>(gamma.size()) == m, "not-a-cover",
          "the base map must be defined on every point");
  std::vector<char> hit(m, 0);
  for (int v : gamma) {
    require(0 <= v && v < m, "not-a-cover", "base map image out of range");
    hit[v] = 1;
  }
  require(std::all_of(hit.begin(), hit.end(), [](char c) { return c != 0; }), "not-a-cover",
          "the base map is not a bijection");
  require(static_cast<int>(pi.size()) == mtilde, "not-a-cover",
          "the covering map must be defined on every point");
  std::vector<char> covered(m, 0);
  for (int v : pi) {
    require(0 <= v && v < m, "not-a-cover", "covering map image out of range");
    covered[v] = 1;
  }
  require(std::all_of(covered.begin(), covered.end(), [](char c) { return c != 0; }),
          "not-a-cover", "the covering map is not surjective");

  CoveringData c;
  c.a = make_algebra(std::vector<int>(m, 1));
  c.b = make_algebra(std::vector<int>(mtilde, 1));
  std::vector<int> ginv(m);
  for (int i = 0; i < m; ++i) ginv[gamma[i]] = i;

  HilbertModule xmod = make_module(c.a, std::vector<int>(m, 1));
  OpMap phix{c.a, xmod, {}};
  for (int y = 0; y < m; ++y) {
    AdjOp op = AdjOp::zero(xmod, xmod);
    op.b[ginv[y]](0, 0) = 1.0;
    phix.img.push_back(op);
  }
  c.x = Correspondence{c.a, xmod, phix};

  HilbertModule fmod = make_module(c.b, std::vector<int>(mtilde, 1));
  OpMap phif{c.a, fmod, {}};
  for (int y = 0; y < m; ++y) {
    AdjOp op = AdjOp::zero(fmod, fmod);
    for (int i = 0; i < mtilde; ++i)
      if (pi[i] == y) op.b[i](0, 0) = 1.0;
    phif.img.push_back(op);
  }
  c.f = make_bihilb(Correspondence{c.a, fmod, phif}, tol);

  c.conj = conjugate_correspondence(c.x, c.f, tol);
  int expected = 0;
  std::vector<int> fibre(m, 0);
  for (int v : pi) ++fibre[v];
  for (int xpt = 0; xpt < m; ++xpt) expected += fibre[xpt] * fibre[gamma[xpt]];
  c.fibre_product_dim = expected;
  require(c.conj.g.mod.flat_dim() == expected, "not-a-cover",
          "conjugated correspondence does not match the fibre product");
  return c;
}

}  // namespace cstar
