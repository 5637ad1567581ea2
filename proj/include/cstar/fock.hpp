// Truncated Fock modules of a correspondence, creation operators, the
// covariance ideal, complemented subcorrespondences and the Fock-projection
// expectation.
#pragma once

#include <map>
#include <utility>
#include <vector>

#include "cstar/maps.hpp"
#include "cstar/module.hpp"
#include "cstar/tensor.hpp"

namespace cstar {

/// The tower of tensor powers of a correspondence X over (A, A), truncated
/// at level N.  level[0] is A as a module over itself; level[k+1] is the
/// canonical form of level[k] (x)_A X, with the quotient pair (q, s)
/// recorded so operators can be carried between levels.
struct FockTower {
  Correspondence x;
  std::vector<HilbertModule> level;
  std::vector<OpMap> action;  // left action of A on each level
  std::vector<Mat> q, s;      // q[k] : raw(level[k-1] (x) X) -> level[k]

  int top() const { return static_cast<int>(level.size()) - 1; }

  /// The flat matrix of "op (x) id_X" descended one level: given op mapping
  /// level `from` to level `to`, returns the flat matrix of the induced map
  /// from level `from`+1 to level `to`+1.
  Mat descend_flat(const Mat& op_flat, int to, int from) const {
    int dx = x.mod.flat_dim();
    Mat acc = Mat::Zero(level[to + 1].flat_dim(), level[from].flat_dim() * dx);
    for (int pc = 0; pc < op_flat.cols(); ++pc)
      for (int pr = 0; pr < op_flat.rows(); ++pr)
        if (op_flat(pr, pc) != cd(0))
          acc.middleCols(pc * dx, dx) += op_flat(pr, pc) * q[to + 1].middleCols(pr * dx, dx);
    return acc * s[from + 1];
  }
};

inline FockTower truncated_fock(const Correspondence& x, int levels, double tol = kDefaultTol) {
  require(x.mod.coeff == x.left, "incompatible-operands",
          "Fock towers need a correspondence over a single algebra");
  require(levels >= 0, "invalid-argument", "level count must be nonnegative");
  FockTower t;
  t.x = x;
  t.level.push_back(module_of(x.left));
  t.action.push_back(as_op_map(AlgMap::identity(x.left)));
  t.q.emplace_back();
  t.s.emplace_back();
  for (int k = 0; k < levels; ++k) {
    TensorResult r = balanced_tensor(t.level.back(), t.action.back(), x, tol);
    require(r.left_residual < std::max(tol, 1e-9) * std::max(1.0, x.phi.image_scale()),
            "invalid-argument", "left action failed to descend to a Fock level");
    t.level.push_back(r.mod);
    t.action.push_back(*r.left);
    t.q.push_back(r.q);
    t.s.push_back(r.s);
  }
  return t;
}

/// A finitely supported operator on the truncated Fock module: a sparse
/// matrix of adjointable blocks indexed by (target level, source level).
struct FockOp {
  std::vector<HilbertModule> levels;
  std::map<std::pair<int, int>, AdjOp> blocks;

  static FockOp zero(const FockTower& t) { return FockOp{t.level, {}}; }
  static FockOp identity(const FockTower& t) {
    FockOp f{t.level, {}};
    for (int k = 0; k < static_cast<int>(t.level.size()); ++k)
      f.blocks.emplace(std::make_pair(k, k), AdjOp::identity(t.level[k]));
    return f;
  }

  const AdjOp* block(int to, int from) const {
    auto it = blocks.find({to, from});
    return it == blocks.end() ? nullptr : &it->second;
  }
  AdjOp block_or_zero(int to, int from) const {
    const AdjOp* b = block(to, from);
    return b ? *b : AdjOp::zero(levels[to], levels[from]);
  }
  void set(int to, int from, const AdjOp& op) {
    require(op.tgt == levels[to] && op.src == levels[from], "incompatible-operands",
            "block endpoints do not match the tower levels");
    if (op.norm() == 0.0) return;
    blocks.insert_or_assign({to, from}, op);
  }

  FockOp adjoint() const {
    FockOp r{levels, {}};
    for (const auto& [key, op] : blocks)
      r.blocks.emplace(std::make_pair(key.second, key.first), op.adjoint());
    return r;
  }
  int total_flat_dim() const {
    int d = 0;
    for (const HilbertModule& m : levels) d += m.flat_dim();
    return d;
  }
  /// Dense matrix over the direct sum of all levels (for norms and tests).
  Mat full_matrix() const {
    std::vector<int> off(levels.size() + 1, 0);
    for (size_t k = 0; k < levels.size(); ++k) off[k + 1] = off[k] + levels[k].flat_dim();
    Mat m = Mat::Zero(off.back(), off.back());
    for (const auto& [key, op] : blocks)
      m.block(off[key.first], off[key.second], levels[key.first].flat_dim(),
              levels[key.second].flat_dim()) = op.flat_matrix();
    return m;
  }
  double norm() const { return operator_norm(full_matrix()); }
};

inline FockOp operator+(const FockOp& a, const FockOp& b) {
  require(a.levels == b.levels, "incompatible-operands", "Fock operators over different towers");
  FockOp r = a;
  for (const auto& [key, op] : b.blocks) {
    auto it = r.blocks.find(key);
    if (it == r.blocks.end())
      r.blocks.emplace(key, op);
    else
      it->second = it->second + op;
  }
  return r;
}
inline FockOp operator*(const cd& c, const FockOp& a) {
  FockOp r = a;
  for (auto& [key, op] : r.blocks) op = c * op;
  return r;
}
inline FockOp operator-(const FockOp& a, const FockOp& b) { return a + cd(-1.0) * b; }
inline FockOp operator*(const FockOp& a, const FockOp& b) {
  require(a.levels == b.levels, "incompatible-operands", "Fock operators over different towers");
  FockOp r{a.levels, {}};
  for (const auto& [ka, opa] : a.blocks)
    for (const auto& [kb, opb] : b.blocks) {
      if (ka.second != kb.first) continue;
      AdjOp prod = opa * opb;
      auto it = r.blocks.find({ka.first, kb.second});
      if (it == r.blocks.end())
        r.blocks.emplace(std::make_pair(ka.first, kb.second), prod);
      else
        it->second = it->second + prod;
    }
  return r;
}

/// The diagonal action of an algebra element on the whole tower.
inline FockOp fock_action(const FockTower& t, const AlgElem& a) {
  FockOp f = FockOp::zero(t);
  for (int k = 0; k <= t.top(); ++k) f.set(k, k, t.action[k].apply(a));
  return f;
}

/// Generalized creation by a vector at level p: maps level k to level p+k
/// by inserting xi in front of the word; levels that would overflow the
/// truncation are annihilated.  For p = 0 this is diagonal module
/// multiplication by a level-0 vector (an algebra element).
inline FockOp creation(const FockTower& t, const ModVec& xi, int p, double tol = kDefaultTol) {
  require(0 <= p && p <= t.top(), "invalid-argument", "creation level out of range");
  require(xi.mod == t.level[p], "incompatible-operands", "vector does not live at its level");
  FockOp f = FockOp::zero(t);
  // base block: level 0 -> level p, a |-> xi . a
  const HilbertModule& base = t.level[0];
  Mat cur(t.level[p].flat_dim(), base.flat_dim());
  for (int col = 0; col < base.flat_dim(); ++col) {
    AlgElem a = vec_to_elem(ModVec::unflatten(base, Vec(Vec::Unit(base.flat_dim(), col))));
    cur.col(col) = (xi * a).flatten();
  }
  for (int k = 0; p + k <= t.top(); ++k) {
    auto [op, residual] = adjop_from_flat(t.level[p + k], t.level[k], cur);
    require(residual < std::max(tol, 1e-8) * std::max(1.0, xi.norm()), "invalid-argument",
            "creation block failed to be right-linear");
    f.set(p + k, k, op);
    if (p + k + 1 > t.top()) break;
    cur = t.descend_flat(cur, p + k, k);
  }
  return f;
}

/// A vector of X viewed as a level-1 vector of the tower (the canonical form
/// of A (x) X identifies 1_A (x) xi with xi).
inline ModVec embed_generator(const FockTower& t, const ModVec& xi) {
  require(xi.mod == t.x.mod, "incompatible-operands", "vector does not live in the fibre");
  require(t.top() >= 1, "invalid-argument", "tower has no level 1");
  Vec raw =
      kron(Mat(elem_to_vec(AlgElem::identity(t.x.left)).flatten()), Mat(xi.flatten())).col(0);
  return ModVec::unflatten(t.level[1], Vec(t.q[1] * raw));
}

/// Creation by a vector of the fibre X itself (inserted as a level-1 word).
inline FockOp creation(const FockTower& t, const ModVec& xi, double tol = kDefaultTol) {
  return creation(t, embed_generator(t, xi), 1, tol);
}

/// Rank-one operator between Fock levels: zeta |-> xi . <eta|zeta>.
inline FockOp fock_rank_one(const FockTower& t, const ModVec& xi, int p, const ModVec& eta,
                            int r) {
  FockOp f = FockOp::zero(t);
  f.set(p, r, rank_one(xi, eta));
  return f;
}

/// The covariance ideal of a correspondence: the kernel of the left action
/// (a block mask) and its complement.
inline std::pair<Ideal, Ideal> covariance_ideal(const Correspondence& x,
                                                double tol = kDefaultTol) {
  double scale = x.phi.image_scale();
  std::vector<char> mask(x.left.block_count(), 0);
  for (int j = 0; j < x.left.block_count(); ++j) {
    double biggest = 0;
    for (int k = 0; k < x.left.blocks[j]; ++k)
      for (int l = 0; l < x.left.blocks[j]; ++l)
        biggest = std::max(biggest, x.phi.unit_image(j, k, l).norm());
    mask[j] = approx_zero(biggest, scale, tol) ? 1 : 0;
  }
  Ideal ker = make_ideal(x.left, mask);
  return {ker, ker.complement()};
}

/// A complemented subcorrespondence cut out of X by an adjointable
/// projection commuting with the left action.
struct Complemented {
  Correspondence sub;  // Y with the compressed (still multiplicative) action
  AdjOp embed;         // Y -> X isometry onto the range of the projection
  AdjOp p0;            // the projection X -> X, equal to embed embed*
};

inline Complemented complemented_from_projection(const Correspondence& x, const AdjOp& p0,
                                                 double tol = kDefaultTol) {
  require(p0.src == x.mod && p0.tgt == x.mod, "incompatible-operands",
          "projection does not act on the module");
  require((p0 * p0 - p0).norm() < std::max(tol, 1e-10) &&
              (p0.adjoint() - p0).norm() < std::max(tol, 1e-10),
          "invalid-argument", "not an orthogonal projection");
  for (const AdjOp& t : x.phi.img)
    require((t * p0 - p0 * t).norm() <
                std::max(tol, 1e-9) * std::max(1.0, x.phi.image_scale()),
            "invalid-argument", "projection does not commute with the left action");
  std::vector<int> mults(x.mod.block_count());
  std::vector<Mat> iso(x.mod.block_count());
  for (int i = 0; i < x.mod.block_count(); ++i) {
    int m = x.mod.mults[i];
    if (m == 0) {
      mults[i] = 0;
      iso[i] = Mat::Zero(0, 0);
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(p0.b[i]));
    int r = 0;
    for (int j = 0; j < m; ++j)
      if (es.eigenvalues()(j) > 0.5) ++r;
    mults[i] = r;
    iso[i] = es.eigenvectors().rightCols(r);
  }
  Complemented c;
  HilbertModule ymod = make_module(x.mod.coeff, mults);
  c.embed = AdjOp{ymod, x.mod, iso};
  c.p0 = c.embed * c.embed.adjoint();
  require((c.p0 - p0).norm() < std::max(tol, 1e-9), "invalid-argument",
          "projection eigenvalues are not 0/1");
  OpMap phiy{x.left, ymod, {}};
  for (const AdjOp& t : x.phi.img) phiy.img.push_back(c.embed.adjoint() * t * c.embed);
  c.sub = Correspondence{x.left, ymod, phiy};
  return c;
}

/// The Fock operator P = diag(P_k) induced by a correspondence projection:
/// P_0 = id on level 0 and P_{k} = (P_{k-1} (x) p0) descended.
inline FockOp induced_fock_projection(const AdjOp& p0, const FockTower& t,
                                      double tol = kDefaultTol) {
  require(p0.src == t.x.mod && p0.tgt == t.x.mod, "precondition-violated",
          "projection does not act on the fibre");
  require((p0 * p0 - p0).norm() < std::max(tol, 1e-10) &&
              (p0.adjoint() - p0).norm() < std::max(tol, 1e-10),
          "precondition-violated", "not an orthogonal projection");
  for (const AdjOp& op : t.x.phi.img)
    require((op * p0 - p0 * op).norm() <
                std::max(tol, 1e-9) * std::max(1.0, t.x.phi.image_scale()),
            "precondition-violated", "projection does not commute with the left action");
  FockOp f = FockOp::zero(t);
  AdjOp cur = AdjOp::identity(t.level[0]);
  f.set(0, 0, cur);
  for (int k = 1; k <= t.top(); ++k) {
    Mat pk_flat = t.q[k] * kron(cur.flat_matrix(), p0.flat_matrix()) * t.s[k];
    auto [pk, res] = adjop_from_flat(t.level[k], t.level[k], pk_flat);
    require(res < std::max(tol, 1e-8), "precondition-violated",
            "induced projection failed to be right-linear");
    cur = pk;
    f.set(k, k, cur);
  }
  return f;
}

/// The compression P T P by a projection-valued Fock operator.
inline FockOp fock_expectation(const FockOp& p, const FockOp& t, double tol = kDefaultTol) {
  require(p.levels == t.levels, "incompatible-operands",
          "Fock operators over different towers");
  require((p * p - p).norm() < std::max(tol, 1e-9) &&
              (p.adjoint() - p).norm() < std::max(tol, 1e-9),
          "precondition-violated", "compressing operator is not a projection");
  return p * t * p;
}

/// Levelwise Fock projections P_k = (P_{k-1} (x) P_0) descended, and the
/// embeddings of the sub-Fock tower, with P_k = iota_k iota_k*.
struct FockExpectation {
  FockTower x, y;
  Complemented comp;
  std::vector<AdjOp> p;     // projection on x.level[k]
  std::vector<AdjOp> iota;  // y.level[k] -> x.level[k]
};

inline FockExpectation fock_expectation(const Correspondence& x, const AdjOp& p0, int levels,
                                        double tol = kDefaultTol) {
  FockExpectation fe;
  fe.comp = complemented_from_projection(x, p0, tol);
  fe.x = truncated_fock(x, levels, tol);
  fe.y = truncated_fock(fe.comp.sub, levels, tol);
  fe.p.push_back(AdjOp::identity(fe.x.level[0]));
  fe.iota.push_back(AdjOp::identity(fe.x.level[0]));
  for (int k = 1; k <= fe.x.top(); ++k) {
    Mat pk_flat =
        fe.x.q[k] * kron(fe.p[k - 1].flat_matrix(), fe.comp.p0.flat_matrix()) * fe.x.s[k];
    auto [pk, pres] = adjop_from_flat(fe.x.level[k], fe.x.level[k], pk_flat);
    require(pres < std::max(tol, 1e-8), "invalid-argument",
            "Fock projection failed to be right-linear");
    fe.p.push_back(pk);
    Mat ik_flat = fe.x.q[k] *
                  kron(fe.iota[k - 1].flat_matrix(), fe.comp.embed.flat_matrix()) * fe.y.s[k];
    auto [ik, ires] = adjop_from_flat(fe.x.level[k], fe.y.level[k], ik_flat);
    require(ires < std::max(tol, 1e-8), "invalid-argument",
            "Fock embedding failed to be right-linear");
    fe.iota.push_back(ik);
  }
  return fe;
}

/// P T P on the big tower.
inline FockOp fock_compress(const FockExpectation& fe, const FockOp& t) {
  FockOp p = FockOp::zero(fe.x);
  for (int k = 0; k <= fe.x.top(); ++k) p.set(k, k, fe.p[k]);
  return p * t * p;
}

/// iota* T iota: the compression transported onto the sub-Fock tower.
inline FockOp fock_expect(const FockExpectation& fe, const FockOp& t) {
  FockOp r = FockOp::zero(fe.y);
  for (const auto& [key, op] : t.blocks)
    r.set(key.first, key.second, fe.iota[key.first].adjoint() * op * fe.iota[key.second]);
  return r;
}

/// iota T iota* viewed on the big tower.
inline FockOp fock_induce(const FockExpectation& fe, const FockOp& t) {
  FockOp r = FockOp::zero(fe.x);
  for (const auto& [key, op] : t.blocks)
    r.set(key.first, key.second, fe.iota[key.first] * op * fe.iota[key.second].adjoint());
  return r;
}

/// Source levels k for which every prefix of the displacement profile keeps
/// k + partial-sum inside [0, top]: the window on which a word of creations
/// and annihilations acts without hitting the truncation.
inline std::vector<int> safe_window(int top, const std::vector<int>& displacements) {
  std::vector<int> ok;
  for (int k = 0; k <= top; ++k) {
    int pos = k;
    bool good = true;
    for (auto it = displacements.rbegin(); it != displacements.rend(); ++it) {
      pos += *it;
      if (pos < 0 || pos > top) {
        good = false;
        break;
      }
    }
    if (good) ok.push_back(k);
  }
  return ok;
}

/// A morphism of correspondence data from (B, Y, phi_Y) into (A, X, phi_X):
/// a *-homomorphism pi : B -> A and a linear map psi : Y -> X given by its
/// flat matrix.
struct CorrMorphism {
  AlgMap pi;
  Mat psi;  // flat(X) x flat(Y)
};

/// Residuals of the morphism axioms and of covariance: psi must intertwine
/// the right actions and inner products through pi, intertwine the left
/// actions, and on the covariance ideal of Y the induced map on compacts
/// (computed by frame expansion) must turn the Y-covariance operator into
/// the X one: sum_u theta_{psi(phi_Y(b) u), psi(u)} = phi_X(pi(b)).
struct CovarianceReport {
  double right_residual = 0.0;
  double inner_residual = 0.0;
  double left_residual = 0.0;
  double covariance_residual = 0.0;
};

inline CovarianceReport covariance_residuals(const Correspondence& y, const Correspondence& x,
                                             const CorrMorphism& mor,
                                             double tol = kDefaultTol) {
  require(mor.pi.dom == y.left && mor.pi.cod == x.left, "incompatible-operands",
          "morphism endpoints do not match");
  require(mor.pi.is_star_hom(tol), "not-a-morphism",
          "the algebra part of a covariance morphism must be a *-homomorphism");
  require(mor.psi.rows() == x.mod.flat_dim() && mor.psi.cols() == y.mod.flat_dim(),
          "incompatible-operands", "module map has the wrong shape");
  CovarianceReport rep;
  auto right_mult = [](const HilbertModule& m, const AlgElem& a) {
    Mat r = Mat::Zero(m.flat_dim(), m.flat_dim());
    for (int i = 0; i < m.block_count(); ++i)
      for (int k = 0; k < m.coeff.blocks[i]; ++k)
        for (int l = 0; l < m.coeff.blocks[i]; ++l)
          if (a.b[i](k, l) != cd(0)) r += a.b[i](k, l) * right_unit_matrix(m, i, k, l);
    return r;
  };
  auto psi_of = [&](const ModVec& v) {
    return ModVec::unflatten(x.mod, Vec(mor.psi * v.flatten()));
  };
  AlgMap idb = AlgMap::identity(y.left);
  for (int p = 0; p < y.left.vec_dim(); ++p) {
    const AlgElem& b = idb.img[p];
    AlgElem pib = mor.pi.apply(b);
    rep.right_residual = std::max(
        rep.right_residual,
        operator_norm(Mat(mor.psi * right_mult(y.mod, b)) - right_mult(x.mod, pib) * mor.psi));
    rep.left_residual = std::max(
        rep.left_residual, operator_norm(Mat(mor.psi * y.phi.img[p].flat_matrix()) -
                                         x.phi.apply(pib).flat_matrix() * mor.psi));
  }
  for (int qa = 0; qa < y.mod.flat_dim(); ++qa)
    for (int qb = 0; qb < y.mod.flat_dim(); ++qb) {
      ModVec ya = ModVec::unflatten(y.mod, Vec(Vec::Unit(y.mod.flat_dim(), qa)));
      ModVec yb = ModVec::unflatten(y.mod, Vec(Vec::Unit(y.mod.flat_dim(), qb)));
      rep.inner_residual =
          std::max(rep.inner_residual,
                   (inner(psi_of(ya), psi_of(yb)) - mor.pi.apply(inner(ya, yb))).norm());
    }
  auto [ker, cov] = covariance_ideal(y, tol);
  (void)ker;
  auto frame = standard_frame(y.mod);
  for (int j = 0; j < y.left.block_count(); ++j) {
    if (!cov.mask[j]) continue;
    for (int k = 0; k < y.left.blocks[j]; ++k)
      for (int l = 0; l < y.left.blocks[j]; ++l) {
        AlgElem b = AlgElem::unit(y.left, j, k, l);
        AdjOp lhs = AdjOp::zero(x.mod, x.mod);
        for (const ModVec& u : frame)
          lhs = lhs + rank_one(psi_of(y.phi.apply(b).apply(u)), psi_of(u));
        rep.covariance_residual =
            std::max(rep.covariance_residual, (lhs - x.phi.apply(mor.pi.apply(b))).norm());
      }
  }
  return rep;
}

/// Decides covariance of a morphism of correspondences.  The morphism axioms
/// (right action, inner products, left action through pi) must hold up to
/// tolerance, otherwise the pair is rejected; the returned flag says whether
/// the frame-expansion covariance identity also holds, together with its
/// residual.
inline std::pair<bool, double> check_covariance(const Correspondence& y,
                                                const Correspondence& x, const CorrMorphism& mor,
                                                double tol = kDefaultTol) {
  CovarianceReport rep = covariance_residuals(y, x, mor, tol);
  double scale = std::max(1.0, operator_norm(mor.psi));
  double axiom = std::max({rep.right_residual, rep.inner_residual, rep.left_residual});
  require(axiom < std::max(tol, 1e-9) * scale * scale, "not-a-morphism",
          "the map does not satisfy the morphism axioms");
  return {rep.covariance_residual < std::max(tol, 1e-9) * scale * scale,
          rep.covariance_residual};
}

}  // namespace cstar
