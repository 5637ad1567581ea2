#pragma once
// Finite directed graphs and their Cuntz--Krieger generator algebras in exact
// symbolic normal form: paths, generator monomials S_mu S_nu^*, uniform depth
// expansion for equality, the edge correspondence over the vertex algebra,
// and the compressed-expectation tensor machinery connecting a graph with a
// subgraph.
//
// Conventions, fixed throughout:
//   * A path mu = e1 e2 ... ek is read so that S_mu = S_{e1} ... S_{ek};
//     consecutive edges satisfy s(e_i) = r(e_{i+1}), and r(mu) = r(e1),
//     s(mu) = s(e_k).  A length-zero path is a vertex, S_v = P_v.
//   * Generator monomials are S_mu S_nu^* with s(mu) = s(nu).  Products
//     reduce by S_nu^* S_alpha = S_{alpha'} when alpha = nu alpha',
//     = S_{nu'}^* when nu = alpha nu', and 0 otherwise, so the set of
//     monomials together with 0 is closed under multiplication (it is the
//     graph inverse semigroup) and no summed-range relation is applied
//     during products.
//   * The summed-range relation P_v = sum_{r(e)=v} S_e S_e^* enters only
//     through uniform depth expansion inside nf_equal, which is exact for
//     row-finite graphs without sources and refuses to answer otherwise.
//   * Left actions go through ranges, the right module structure through
//     sources.
// All coefficients are exact complex rationals; the symbolic layer never
// touches floating point.

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/rational.hpp>

#include "algebra.hpp"
#include "common.hpp"
#include "maps.hpp"
#include "module.hpp"

namespace cstar {

// ---------------------------------------------------------------------------
// Exact complex-rational scalars.
// ---------------------------------------------------------------------------

using Rat = boost::rational<long long>;

/// A complex number with rational real and imaginary parts.
struct RatC {
  Rat re{0};
  Rat im{0};

  RatC() = default;
  RatC(long long n) : re(n) {}  // NOLINT: implicit from integers is the point
  RatC(Rat r) : re(std::move(r)) {}
  RatC(Rat r, Rat i) : re(std::move(r)), im(std::move(i)) {}

  // Comparisons go through numerator/denominator on purpose: the shipped
  // boost::rational mixed-type comparison operators self-recurse under
  // C++20's reversed-candidate overload resolution.  Rationals are kept
  // normalized, so component equality is value equality.
  bool is_zero() const { return re.numerator() == 0 && im.numerator() == 0; }
  friend bool operator==(const RatC& a, const RatC& b) {
    return a.re.numerator() == b.re.numerator() && a.re.denominator() == b.re.denominator() &&
           a.im.numerator() == b.im.numerator() && a.im.denominator() == b.im.denominator();
  }
  friend RatC operator+(const RatC& a, const RatC& b) { return {a.re + b.re, a.im + b.im}; }
  friend RatC operator-(const RatC& a, const RatC& b) { return {a.re - b.re, a.im - b.im}; }
  friend RatC operator-(const RatC& a) { return {-a.re, -a.im}; }
  friend RatC operator*(const RatC& a, const RatC& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
  }
  RatC conj() const { return {re, -im}; }
  cd to_cd() const {
    return {boost::rational_cast<double>(re), boost::rational_cast<double>(im)};
  }
  std::string str() const {
    auto one = [](const Rat& r) {
      std::string s = std::to_string(r.numerator());
      if (r.denominator() != 1) s += "/" + std::to_string(r.denominator());
      return s;
    };
    if (im.numerator() == 0) return one(re);
    if (re.numerator() == 0) return one(im) + "i";
    return one(re) + (im.numerator() > 0 ? "+" : "") + one(im) + "i";
  }
};

// ---------------------------------------------------------------------------
// Graphs.
// ---------------------------------------------------------------------------

/// A finite directed graph with named vertices and edges.  Edge e runs from
/// its source vertex s(e) to its range vertex r(e).
struct GraphSpec {
  std::vector<std::string> vertices;
  std::vector<std::string> edges;
  std::vector<int> source;  // s(e), by edge id
  std::vector<int> range;   // r(e), by edge id
  std::map<std::string, int> vertex_id;
  std::map<std::string, int> edge_id;
  std::vector<std::vector<int>> in_edges;   // by range vertex
  std::vector<std::vector<int>> out_edges;  // by source vertex
  std::vector<int> source_vertices;         // vertices receiving no edge
  std::vector<int> sink_vertices;           // vertices emitting no edge

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  friend bool operator==(const GraphSpec& a, const GraphSpec& b) = default;
};

inline bool same_graph(const GraphSpec* a, const GraphSpec* b) {
  return a == b || (a != nullptr && b != nullptr && *a == *b);
}

/// Parses the line-oriented graph format:
///   vertex <name>
///   edge <name> <source> <range>
/// with '#' starting a comment.  Vertices may be declared anywhere in the
/// file; an edge endpoint that is never declared is a parse error reported
/// with its line number.
inline GraphSpec parse_graph(const std::string& text) {
  struct EdgeLine {
    int line;
    std::string name, src, rng;
  };
  GraphSpec g;
  std::vector<EdgeLine> pending;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [](int ln, const std::string& msg) {
    throw Error("parse-error", "line " + std::to_string(ln) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0] == "vertex") {
      if (tok.size() != 2) fail(lineno, "expected: vertex <name>");
      if (g.vertex_id.count(tok[1])) fail(lineno, "duplicate vertex '" + tok[1] + "'");
      g.vertex_id[tok[1]] = g.vertex_count();
      g.vertices.push_back(tok[1]);
    } else if (tok[0] == "edge") {
      if (tok.size() != 4) fail(lineno, "expected: edge <name> <source> <range>");
      pending.push_back({lineno, tok[1], tok[2], tok[3]});
    } else {
      fail(lineno, "unknown directive '" + tok[0] + "'");
    }
  }
  g.in_edges.resize(g.vertex_count());
  g.out_edges.resize(g.vertex_count());
  for (const EdgeLine& e : pending) {
    if (g.edge_id.count(e.name)) fail(e.line, "duplicate edge '" + e.name + "'");
    auto src = g.vertex_id.find(e.src);
    if (src == g.vertex_id.end()) fail(e.line, "edge '" + e.name + "' has undeclared source '" + e.src + "'");
    auto rng = g.vertex_id.find(e.rng);
    if (rng == g.vertex_id.end()) fail(e.line, "edge '" + e.name + "' has undeclared range '" + e.rng + "'");
    int id = g.edge_count();
    g.edge_id[e.name] = id;
    g.edges.push_back(e.name);
    g.source.push_back(src->second);
    g.range.push_back(rng->second);
    g.out_edges[src->second].push_back(id);
    g.in_edges[rng->second].push_back(id);
  }
  for (int v = 0; v < g.vertex_count(); ++v) {
    if (g.in_edges[v].empty()) g.source_vertices.push_back(v);
    if (g.out_edges[v].empty()) g.sink_vertices.push_back(v);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Paths and generator monomials.
// ---------------------------------------------------------------------------

/// A directed path; `source` is always s(path), which for the empty path is
/// the vertex itself.  Edge ids are relative to one GraphSpec.
struct Path {
  int source = -1;
  std::vector<int> edges;  // e1 ... ek with S = S_{e1} ... S_{ek}

  int length() const { return static_cast<int>(edges.size()); }
  bool empty() const { return edges.empty(); }
  friend bool operator==(const Path& a, const Path& b) = default;
  friend auto operator<=>(const Path& a, const Path& b) = default;
};

inline Path vertex_path(int v) { return Path{v, {}}; }

inline int path_range(const GraphSpec& g, const Path& p) {
  return p.empty() ? p.source : g.range[p.edges.front()];
}

inline bool path_valid(const GraphSpec& g, const Path& p) {
  if (p.source < 0 || p.source >= g.vertex_count()) return false;
  for (std::size_t i = 0; i < p.edges.size(); ++i) {
    int e = p.edges[i];
    if (e < 0 || e >= g.edge_count()) return false;
    if (i + 1 < p.edges.size() && g.source[p.edges[i]] != g.range[p.edges[i + 1]]) return false;
  }
  if (!p.empty() && g.source[p.edges.back()] != p.source) return false;
  return true;
}

/// S_a S_b = S_{ab}: defined when s(a) = r(b).
inline std::optional<Path> path_concat(const GraphSpec& g, const Path& a, const Path& b) {
  if (a.source != path_range(g, b)) return std::nullopt;
  if (a.empty()) return b;
  if (b.empty()) return a;
  Path r{b.source, a.edges};
  r.edges.insert(r.edges.end(), b.edges.begin(), b.edges.end());
  return r;
}

/// If whole = prefix . rest (the prefix at the range end), returns rest.
inline std::optional<Path> strip_prefix(const GraphSpec& g, const Path& whole,
                                        const Path& prefix) {
  if (prefix.empty()) {
    if (path_range(g, whole) != prefix.source) return std::nullopt;
    return whole;
  }
  if (whole.length() < prefix.length()) return std::nullopt;
  if (!std::equal(prefix.edges.begin(), prefix.edges.end(), whole.edges.begin()))
    return std::nullopt;
  Path rest{whole.source, {whole.edges.begin() + prefix.length(), whole.edges.end()}};
  if (rest.empty()) rest.source = prefix.source;
  return rest;
}

inline std::string path_str(const GraphSpec& g, const Path& p) {
  if (p.empty()) return "[" + g.vertices[p.source] + "]";
  std::string s;
  for (std::size_t i = 0; i < p.edges.size(); ++i)
    s += (i ? "." : "") + g.edges[p.edges[i]];
  return s;
}

/// A generator monomial S_mu S_nu^* with s(mu) = s(nu).
struct Mono {
  Path mu, nu;
  friend bool operator==(const Mono& a, const Mono& b) = default;
  friend auto operator<=>(const Mono& a, const Mono& b) = default;
};

inline int gauge_degree(const Mono& m) { return m.mu.length() - m.nu.length(); }
inline Mono mono_adjoint(const Mono& m) { return {m.nu, m.mu}; }
inline Mono vertex_mono(int v) { return {vertex_path(v), vertex_path(v)}; }

inline std::string mono_str(const GraphSpec& g, const Mono& m, char letter = 'S') {
  std::string l(1, letter);
  return l + "(" + path_str(g, m.mu) + ")" + l + "(" + path_str(g, m.nu) + ")*";
}

/// The reduced product of two generator monomials, or nothing when it
/// vanishes.  The coefficient of a nonzero product is always 1.
inline std::optional<Mono> mono_mul(const GraphSpec& g, const Mono& x, const Mono& y) {
  if (auto rest = strip_prefix(g, y.mu, x.nu)) {  // y.mu = x.nu . rest
    auto mu = path_concat(g, x.mu, *rest);
    require(bool(mu), "invalid-argument", "monomial invariant violated in product");
    return Mono{*mu, y.nu};
  }
  if (auto rest = strip_prefix(g, x.nu, y.mu)) {  // x.nu = y.mu . rest
    auto nu = path_concat(g, y.nu, *rest);
    require(bool(nu), "invalid-argument", "monomial invariant violated in product");
    return Mono{x.mu, *nu};
  }
  return std::nullopt;
}

/// All paths lambda with r(lambda) = v and the exact given length.
inline std::vector<Path> paths_from(const GraphSpec& g, int v, int len) {
  std::vector<Path> cur{vertex_path(v)};
  for (int step = 0; step < len; ++step) {
    std::vector<Path> next;
    for (const Path& p : cur)
      for (int e : g.in_edges[p.source]) {
        Path q{g.source[e], p.edges};
        q.edges.push_back(e);
        next.push_back(std::move(q));
      }
    cur = std::move(next);
  }
  return cur;
}

/// All paths of length at most maxlen, every range vertex, lengths ascending.
inline std::vector<Path> paths_up_to(const GraphSpec& g, int maxlen) {
  std::vector<Path> all;
  for (int len = 0; len <= maxlen; ++len)
    for (int v = 0; v < g.vertex_count(); ++v)
      for (Path& p : paths_from(g, v, len)) all.push_back(std::move(p));
  return all;
}

// ---------------------------------------------------------------------------
// Normal-form polynomials.
// ---------------------------------------------------------------------------

/// A finite linear combination of generator monomials over one graph, with
/// exact complex-rational coefficients.  The pointed-to GraphSpec must
/// outlive the polynomial.
struct NFPoly {
  const GraphSpec* g = nullptr;
  std::map<Mono, RatC> terms;
};

namespace detail {
inline void nf_add_term(NFPoly& p, const Mono& m, const RatC& c) {
  if (c.is_zero()) return;
  auto it = p.terms.find(m);
  if (it == p.terms.end()) {
    p.terms.emplace(m, c);
    return;
  }
  it->second = it->second + c;
  if (it->second.is_zero()) p.terms.erase(it);
}
}  // namespace detail

inline NFPoly nf_zero(const GraphSpec& g) { return NFPoly{&g, {}}; }

inline NFPoly nf_mono(const GraphSpec& g, const Path& mu, const Path& nu, RatC c = RatC{1}) {
  require(path_valid(g, mu) && path_valid(g, nu), "invalid-argument", "invalid path");
  require(mu.source == nu.source, "invalid-argument",
          "monomial paths must share their source vertex");
  NFPoly p = nf_zero(g);
  detail::nf_add_term(p, Mono{mu, nu}, c);
  return p;
}

inline NFPoly nf_vertex(const GraphSpec& g, int v) {
  return nf_mono(g, vertex_path(v), vertex_path(v));
}

inline NFPoly nf_unit(const GraphSpec& g) {
  NFPoly p = nf_zero(g);
  for (int v = 0; v < g.vertex_count(); ++v) detail::nf_add_term(p, vertex_mono(v), RatC{1});
  return p;
}

inline NFPoly nf_path(const GraphSpec& g, const Path& mu) {
  return nf_mono(g, mu, vertex_path(mu.source));
}

inline NFPoly nf_edge(const GraphSpec& g, int e) {
  return nf_path(g, Path{g.source[e], {e}});
}

inline NFPoly nf_adjoint(const NFPoly& p) {
  NFPoly r = nf_zero(*p.g);
  for (const auto& [m, c] : p.terms) detail::nf_add_term(r, mono_adjoint(m), c.conj());
  return r;
}

inline NFPoly operator+(const NFPoly& a, const NFPoly& b) {
  require(same_graph(a.g, b.g), "incompatible-operands", "polynomials over different graphs");
  NFPoly r = a;
  for (const auto& [m, c] : b.terms) detail::nf_add_term(r, m, c);
  return r;
}

inline NFPoly operator-(const NFPoly& a, const NFPoly& b) {
  require(same_graph(a.g, b.g), "incompatible-operands", "polynomials over different graphs");
  NFPoly r = a;
  for (const auto& [m, c] : b.terms) detail::nf_add_term(r, m, -c);
  return r;
}

inline NFPoly operator*(const RatC& c, const NFPoly& p) {
  NFPoly r = nf_zero(*p.g);
  for (const auto& [m, x] : p.terms) detail::nf_add_term(r, m, c * x);
  return r;
}

inline NFPoly nf_multiply(const NFPoly& a, const NFPoly& b) {
  require(same_graph(a.g, b.g), "incompatible-operands", "polynomials over different graphs");
  NFPoly r = nf_zero(*a.g);
  for (const auto& [ma, ca] : a.terms)
    for (const auto& [mb, cb] : b.terms)
      if (auto m = mono_mul(*a.g, ma, mb)) detail::nf_add_term(r, *m, ca * cb);
  return r;
}

inline NFPoly operator*(const NFPoly& a, const NFPoly& b) { return nf_multiply(a, b); }

inline std::string nf_str(const NFPoly& p, char letter = 'S') {
  if (p.terms.empty()) return "0";
  std::string s;
  for (const auto& [m, c] : p.terms) {
    if (!s.empty()) s += " + ";
    s += "(" + c.str() + ")" + mono_str(*p.g, m, letter);
  }
  return s;
}

/// Decides equality exactly by expanding every monomial with the
/// summed-range relation S_mu S_nu^* = sum_{|lambda| = d - |nu|, r(lambda) =
/// s(nu)} S_{mu lambda} S_{nu lambda}^* to a common adjoint depth d within
/// each gauge degree.  Valid precisely for row-finite graphs without
/// sources; refuses otherwise rather than answering wrongly.
inline bool nf_equal(const NFPoly& a, const NFPoly& b) {
  require(same_graph(a.g, b.g), "incompatible-operands", "polynomials over different graphs");
  const GraphSpec& g = *a.g;
  for (int v : g.source_vertices)
    throw Error("equality-undecidable-by-expansion",
                "vertex '" + g.vertices[v] +
                    "' receives no edge, so the summed-range relation cannot expand past it");
  NFPoly diff = a - b;
  if (diff.terms.empty()) return true;
  std::map<int, std::vector<std::pair<Mono, RatC>>> by_degree;
  for (const auto& [m, c] : diff.terms) by_degree[gauge_degree(m)].push_back({m, c});
  for (const auto& [deg, group] : by_degree) {
    (void)deg;
    int d = 0;
    for (const auto& [m, c] : group) d = std::max(d, m.nu.length());
    std::map<Mono, RatC> expanded;
    for (const auto& [m, c] : group) {
      for (const Path& lam : paths_from(g, m.nu.source, d - m.nu.length())) {
        auto mu = path_concat(g, m.mu, lam);
        auto nu = path_concat(g, m.nu, lam);
        require(bool(mu) && bool(nu), "invalid-argument", "expansion produced an invalid path");
        auto& slot = expanded[Mono{*mu, *nu}];
        slot = slot + c;
      }
    }
    for (const auto& [m, c] : expanded)
      if (!c.is_zero()) return false;
  }
  return true;
}

inline bool nf_is_zero(const NFPoly& p) { return nf_equal(p, nf_zero(*p.g)); }

// ---------------------------------------------------------------------------
// Subgraphs with the same vertex set.
// ---------------------------------------------------------------------------

/// A subgraph F of an ambient graph E, matched by vertex and edge names.
/// The complement E\F is the graph on the same vertices with the remaining
/// edges; it is recorded as regular when every vertex receives a complement
/// edge, or when the complement has no edges at all (the trivial split).
struct Subgraph {
  const GraphSpec* e = nullptr;
  const GraphSpec* f = nullptr;
  std::vector<int> fvertex_of;  // e-vertex id -> f-vertex id
  std::vector<int> evertex_of;  // f-vertex id -> e-vertex id
  std::vector<int> fedge_of;    // e-edge id -> f-edge id, or -1
  std::vector<int> eedge_of;    // f-edge id -> e-edge id
  bool complement_regular = true;
  std::vector<int> complement_sources;  // e-vertex ids receiving no complement edge
};

inline Subgraph make_subgraph(const GraphSpec& e, const GraphSpec& f) {
  Subgraph s;
  s.e = &e;
  s.f = &f;
  require(e.vertex_count() == f.vertex_count(), "invalid-argument",
          "subgraph must keep the full vertex set");
  s.fvertex_of.assign(e.vertex_count(), -1);
  s.evertex_of.assign(f.vertex_count(), -1);
  for (int v = 0; v < f.vertex_count(); ++v) {
    auto it = e.vertex_id.find(f.vertices[v]);
    require(it != e.vertex_id.end(), "invalid-argument",
            "subgraph vertex '" + f.vertices[v] + "' is not an ambient vertex");
    s.fvertex_of[it->second] = v;
    s.evertex_of[v] = it->second;
  }
  s.fedge_of.assign(e.edge_count(), -1);
  s.eedge_of.assign(f.edge_count(), -1);
  for (int x = 0; x < f.edge_count(); ++x) {
    auto it = e.edge_id.find(f.edges[x]);
    require(it != e.edge_id.end(), "invalid-argument",
            "subgraph edge '" + f.edges[x] + "' is not an ambient edge");
    int ee = it->second;
    require(s.evertex_of[f.source[x]] == e.source[ee] && s.evertex_of[f.range[x]] == e.range[ee],
            "invalid-argument", "subgraph edge '" + f.edges[x] + "' has different endpoints");
    s.fedge_of[ee] = x;
    s.eedge_of[x] = ee;
  }
  bool complement_empty = f.edge_count() == e.edge_count();
  if (!complement_empty) {
    for (int v = 0; v < e.vertex_count(); ++v) {
      bool receives = false;
      for (int ee : e.in_edges[v]) receives = receives || s.fedge_of[ee] < 0;
      if (!receives) s.complement_sources.push_back(v);
    }
    s.complement_regular = s.complement_sources.empty();
  }
  return s;
}

/// Translates an ambient path into the subgraph, when all its edges lie there.
inline std::optional<Path> to_sub(const Subgraph& s, const Path& p) {
  Path q{s.fvertex_of[p.source], {}};
  q.edges.reserve(p.edges.size());
  for (int e : p.edges) {
    int x = s.fedge_of[e];
    if (x < 0) return std::nullopt;
    q.edges.push_back(x);
  }
  return q;
}

inline Path to_ambient(const Subgraph& s, const Path& p) {
  Path q{s.evertex_of[p.source], {}};
  q.edges.reserve(p.edges.size());
  for (int e : p.edges) q.edges.push_back(s.eedge_of[e]);
  return q;
}

inline bool in_sub(const Subgraph& s, const Path& p) { return bool(to_sub(s, p)); }

/// Splits mu = mu0 . lambda where lambda is the maximal subgraph tail (the
/// longest source-end segment whose edges all lie in the subgraph).  Returns
/// (mu0 as an ambient path, lambda as a subgraph path).
inline std::pair<Path, Path> split_subgraph_tail(const Subgraph& s, const Path& mu) {
  int keep = mu.length();
  while (keep > 0 && s.fedge_of[mu.edges[keep - 1]] >= 0) --keep;
  Path head{mu.source, {mu.edges.begin(), mu.edges.begin() + keep}};
  if (keep > 0) head.source = s.e->source[mu.edges[keep - 1]];
  else head.source = path_range(*s.e, mu);
  Path tail{s.fvertex_of[mu.source], {}};
  for (int i = keep; i < mu.length(); ++i) tail.edges.push_back(s.fedge_of[mu.edges[i]]);
  return {head, tail};
}

/// The compressed expectation onto the subgraph algebra: keeps exactly the
/// monomials whose two paths both lie in the subgraph, renaming generators
/// from the ambient family to the subgraph family.  Requires the complement
/// to be regular (every vertex keeps an incoming complement edge, or the
/// complement is empty).
inline NFPoly projected_expectation(const Subgraph& s, const NFPoly& p) {
  require(same_graph(p.g, s.e), "incompatible-operands",
          "polynomial is not over the ambient graph");
  if (!s.complement_regular)
    throw Error("precondition-violated",
                "complement subgraph has a source at vertex '" +
                    s.e->vertices[s.complement_sources.front()] + "'");
  NFPoly r = nf_zero(*s.f);
  for (const auto& [m, c] : p.terms) {
    auto mu = to_sub(s, m.mu);
    if (!mu) continue;
    auto nu = to_sub(s, m.nu);
    if (!nu) continue;
    detail::nf_add_term(r, Mono{*mu, *nu}, c);
  }
  return r;
}

/// The inclusion of subgraph polynomials into the ambient generator family.
inline NFPoly embed_poly(const Subgraph& s, const NFPoly& p) {
  require(same_graph(p.g, s.f), "incompatible-operands",
          "polynomial is not over the subgraph");
  NFPoly r = nf_zero(*s.e);
  for (const auto& [m, c] : p.terms)
    detail::nf_add_term(r, Mono{to_ambient(s, m.mu), to_ambient(s, m.nu)}, c);
  return r;
}

// ---------------------------------------------------------------------------
// The compressed-expectation tensor module and its Fock-coordinate form.
// ---------------------------------------------------------------------------

/// A vector in the tensor module built from the compressed expectation: a
/// finite combination of generators (ambient monomial) (x) (subgraph
/// monomial), with scalars pulled out front.  The inner product is
///   < p1 (x) q1 | p2 (x) q2 > = q1^* E(p1^* p2) q2
/// with E the compressed expectation, valued in subgraph polynomials.
struct KSGNSGraphVec {
  const Subgraph* sub = nullptr;
  std::map<std::pair<Mono, Mono>, RatC> terms;
};

namespace detail {
inline void ksgns_add_term(KSGNSGraphVec& v, const Mono& em, const Mono& fm, const RatC& c) {
  if (c.is_zero()) return;
  auto key = std::make_pair(em, fm);
  auto it = v.terms.find(key);
  if (it == v.terms.end()) {
    v.terms.emplace(std::move(key), c);
    return;
  }
  it->second = it->second + c;
  if (it->second.is_zero()) v.terms.erase(it);
}
}  // namespace detail

inline KSGNSGraphVec ksgns_zero(const Subgraph& s) { return KSGNSGraphVec{&s, {}}; }

inline KSGNSGraphVec ksgns_generator(const Subgraph& s, const Mono& em, const Mono& fm,
                                     RatC c = RatC{1}) {
  require(path_valid(*s.e, em.mu) && path_valid(*s.e, em.nu) && em.mu.source == em.nu.source,
          "invalid-argument", "invalid ambient monomial");
  require(path_valid(*s.f, fm.mu) && path_valid(*s.f, fm.nu) && fm.mu.source == fm.nu.source,
          "invalid-argument", "invalid subgraph monomial");
  KSGNSGraphVec v = ksgns_zero(s);
  detail::ksgns_add_term(v, em, fm, c);
  return v;
}

inline KSGNSGraphVec ksgns_tensor(const Subgraph& s, const NFPoly& a, const NFPoly& b) {
  require(same_graph(a.g, s.e) && same_graph(b.g, s.f), "incompatible-operands",
          "tensor factors over the wrong graphs");
  KSGNSGraphVec v = ksgns_zero(s);
  for (const auto& [ma, ca] : a.terms)
    for (const auto& [mb, cb] : b.terms) detail::ksgns_add_term(v, ma, mb, ca * cb);
  return v;
}

inline KSGNSGraphVec operator+(const KSGNSGraphVec& a, const KSGNSGraphVec& b) {
  require(a.sub == b.sub, "incompatible-operands", "vectors over different subgraph data");
  KSGNSGraphVec r = a;
  for (const auto& [k, c] : b.terms) detail::ksgns_add_term(r, k.first, k.second, c);
  return r;
}

inline KSGNSGraphVec operator-(const KSGNSGraphVec& a, const KSGNSGraphVec& b) {
  require(a.sub == b.sub, "incompatible-operands", "vectors over different subgraph data");
  KSGNSGraphVec r = a;
  for (const auto& [k, c] : b.terms) detail::ksgns_add_term(r, k.first, k.second, -c);
  return r;
}

inline KSGNSGraphVec ksgns_left_mult(const NFPoly& a, const KSGNSGraphVec& v) {
  require(same_graph(a.g, v.sub->e), "incompatible-operands",
          "left factor must be an ambient polynomial");
  KSGNSGraphVec r = ksgns_zero(*v.sub);
  for (const auto& [ma, ca] : a.terms)
    for (const auto& [k, c] : v.terms)
      if (auto m = mono_mul(*v.sub->e, ma, k.first))
        detail::ksgns_add_term(r, *m, k.second, ca * c);
  return r;
}

inline KSGNSGraphVec ksgns_right_mult(const KSGNSGraphVec& v, const NFPoly& b) {
  require(same_graph(b.g, v.sub->f), "incompatible-operands",
          "right factor must be a subgraph polynomial");
  KSGNSGraphVec r = ksgns_zero(*v.sub);
  for (const auto& [k, c] : v.terms)
    for (const auto& [mb, cb] : b.terms)
      if (auto m = mono_mul(*v.sub->f, k.second, mb))
        detail::ksgns_add_term(r, k.first, *m, c * cb);
  return r;
}

namespace detail {
/// Single-generator inner product: q1^* E(p1^* p2) q2 as a reduced monomial,
/// or nothing when it vanishes.  Scalars multiply outside.
inline std::optional<Mono> ksgns_inner_term(const Subgraph& s, const Mono& p1, const Mono& q1,
                                            const Mono& p2, const Mono& q2) {
  auto mid = mono_mul(*s.e, mono_adjoint(p1), p2);
  if (!mid) return std::nullopt;
  auto mu = to_sub(s, mid->mu);
  if (!mu) return std::nullopt;
  auto nu = to_sub(s, mid->nu);
  if (!nu) return std::nullopt;
  auto t = mono_mul(*s.f, mono_adjoint(q1), Mono{*mu, *nu});
  if (!t) return std::nullopt;
  return mono_mul(*s.f, *t, q2);
}
}  // namespace detail

/// The subgraph-valued inner product of tensor vectors, conjugate-linear in
/// the first slot.
inline NFPoly ksgns_graph_inner(const KSGNSGraphVec& v, const KSGNSGraphVec& w) {
  require(v.sub == w.sub, "incompatible-operands", "vectors over different subgraph data");
  NFPoly r = nf_zero(*v.sub->f);
  for (const auto& [kv, cv] : v.terms)
    for (const auto& [kw, cw] : w.terms)
      if (auto m = detail::ksgns_inner_term(*v.sub, kv.first, kv.second, kw.first, kw.second))
        detail::nf_add_term(r, *m, cv.conj() * cw);
  return r;
}

/// A vector in the Fock-coordinate module: a combination of coordinates
/// delta_mu (x) (subgraph monomial), mu an ambient path.  Coordinates are
/// balanced over the vertex algebra, so a term survives only when the range
/// of its monomial's first path is s(mu); the inner product is
///   < delta_mu (x) m1 | delta_alpha (x) m2 > = [mu = alpha] m1^* Q_{s(mu)} m2.
struct FockGraphVec {
  const Subgraph* sub = nullptr;
  std::map<std::pair<Path, Mono>, RatC> terms;
};

namespace detail {
inline void fock_add_term(FockGraphVec& v, const Path& mu, const Mono& m, const RatC& c) {
  if (c.is_zero()) return;
  if (v.sub->fvertex_of[mu.source] != path_range(*v.sub->f, m.mu)) return;
  auto key = std::make_pair(mu, m);
  auto it = v.terms.find(key);
  if (it == v.terms.end()) {
    v.terms.emplace(std::move(key), c);
    return;
  }
  it->second = it->second + c;
  if (it->second.is_zero()) v.terms.erase(it);
}
}  // namespace detail

inline FockGraphVec fock_zero(const Subgraph& s) { return FockGraphVec{&s, {}}; }

inline FockGraphVec fock_generator(const Subgraph& s, const Path& mu, const Mono& m,
                                   RatC c = RatC{1}) {
  require(path_valid(*s.e, mu), "invalid-argument", "invalid ambient path");
  require(path_valid(*s.f, m.mu) && path_valid(*s.f, m.nu) && m.mu.source == m.nu.source,
          "invalid-argument", "invalid subgraph monomial");
  FockGraphVec v = fock_zero(s);
  detail::fock_add_term(v, mu, m, c);
  return v;
}

inline FockGraphVec operator+(const FockGraphVec& a, const FockGraphVec& b) {
  require(a.sub == b.sub, "incompatible-operands", "vectors over different subgraph data");
  FockGraphVec r = a;
  for (const auto& [k, c] : b.terms) detail::fock_add_term(r, k.first, k.second, c);
  return r;
}

inline FockGraphVec operator-(const FockGraphVec& a, const FockGraphVec& b) {
  require(a.sub == b.sub, "incompatible-operands", "vectors over different subgraph data");
  FockGraphVec r = a;
  for (const auto& [k, c] : b.terms) detail::fock_add_term(r, k.first, k.second, -c);
  return r;
}

inline NFPoly fock_graph_inner(const FockGraphVec& v, const FockGraphVec& w) {
  require(v.sub == w.sub, "incompatible-operands", "vectors over different subgraph data");
  const GraphSpec& f = *v.sub->f;
  NFPoly r = nf_zero(f);
  for (const auto& [kv, cv] : v.terms)
    for (const auto& [kw, cw] : w.terms) {
      if (kv.first != kw.first) continue;
      Mono q = vertex_mono(v.sub->fvertex_of[kv.first.source]);
      auto t = mono_mul(f, mono_adjoint(kv.second), q);
      if (!t) continue;
      if (auto m = mono_mul(f, *t, kw.second)) detail::nf_add_term(r, *m, cv.conj() * cw);
    }
  return r;
}

/// The coordinatewise recipe (mu, nu, m) -> delta_mu (x) W_nu^* m on tensor
/// generators, with generators whose adjoint path leaves the subgraph sent
/// to zero.  This matches the tensor inner product only diagonally: the
/// balancing S_{mu lambda} (x) q = S_mu (x) W_lambda q of the tensor module
/// identifies vectors with different coordinatewise images, which is why
/// kappa_reduced below strips tails first.  kappa_check verifies both
/// statements.
inline FockGraphVec kappa_termwise(const KSGNSGraphVec& v) {
  const Subgraph& s = *v.sub;
  FockGraphVec r = fock_zero(s);
  for (const auto& [k, c] : v.terms) {
    auto nu = to_sub(s, k.first.nu);
    if (!nu) continue;
    if (auto leg = mono_mul(*s.f, Mono{vertex_path(nu->source), *nu}, k.second))
      detail::fock_add_term(r, k.first.mu, *leg, c);
  }
  return r;
}

/// The reduced (well-defined, isometric) form: strips the maximal subgraph
/// tail of the left path into the right leg before taking coordinates,
///   S_{mu0 lambda} S_nu^* (x) q  ->  delta_{mu0} (x) W_lambda W_nu^* q.
inline FockGraphVec kappa_reduced(const KSGNSGraphVec& v) {
  const Subgraph& s = *v.sub;
  FockGraphVec r = fock_zero(s);
  for (const auto& [k, c] : v.terms) {
    auto nu = to_sub(s, k.first.nu);
    if (!nu) continue;
    auto leg = mono_mul(*s.f, Mono{vertex_path(nu->source), *nu}, k.second);
    if (!leg) continue;
    auto [head, tail] = split_subgraph_tail(s, k.first.mu);
    if (auto full = mono_mul(*s.f, Mono{tail, vertex_path(tail.source)}, *leg))
      detail::fock_add_term(r, head, *full, c);
  }
  return r;
}

/// The displayed case action of an ambient monomial on Fock coordinates:
///   S_alpha S_beta^* . (delta_mu (x) m) =
///     delta_{alpha mu'} (x) m            when mu = beta mu',
///     delta_alpha (x) W_{beta'}^* m      when beta = mu beta', beta' in F,
///     0                                  otherwise.
inline FockGraphVec rho_apply(const Mono& x, const FockGraphVec& v) {
  const Subgraph& s = *v.sub;
  FockGraphVec r = fock_zero(s);
  for (const auto& [k, c] : v.terms) {
    if (auto rest = strip_prefix(*s.e, k.first, x.nu)) {
      auto mu = path_concat(*s.e, x.mu, *rest);
      require(bool(mu), "invalid-argument", "monomial invariant violated in action");
      detail::fock_add_term(r, *mu, k.second, c);
      continue;
    }
    if (auto rest = strip_prefix(*s.e, x.nu, k.first)) {
      auto bf = to_sub(s, *rest);
      if (!bf) continue;
      if (auto leg = mono_mul(*s.f, Mono{vertex_path(bf->source), *bf}, k.second))
        detail::fock_add_term(r, x.mu, *leg, c);
    }
  }
  return r;
}

inline FockGraphVec rho_apply(const NFPoly& a, const FockGraphVec& v) {
  require(same_graph(a.g, v.sub->e), "incompatible-operands",
          "action polynomial must be over the ambient graph");
  FockGraphVec r = fock_zero(*v.sub);
  for (const auto& [m, c] : a.terms) {
    FockGraphVec part = rho_apply(m, v);
    for (const auto& [k, x] : part.terms) detail::fock_add_term(r, k.first, k.second, c * x);
  }
  return r;
}

// ---------------------------------------------------------------------------
// kappa_check: the generator-level verification battery.
// ---------------------------------------------------------------------------

struct KappaCheck {
  std::string name;
  long long cases = 0;
  long long failures = 0;
  std::string counterexample;  // first failure, in generator order
  bool pass() const { return failures == 0; }
};

struct KappaCheckReport {
  int depth = 0;
  long long generators = 0;
  std::string convention_note;
  std::vector<KappaCheck> checks;
  bool pass() const {
    for (const KappaCheck& c : checks)
      if (!c.pass()) return false;
    return true;
  }
};

namespace detail {

/// Runs fn(begin, end, slot) over [0, n) split into contiguous chunks, one
/// worker thread per chunk.  Chunks ascend, so slot order is index order.
template <class Fn>
inline void parallel_chunks(long long n, int threads, Fn&& fn) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  int t = threads > 0 ? threads : (hw > 0 ? hw : 1);
  t = static_cast<int>(std::min<long long>(t, std::max<long long>(n, 1)));
  if (t <= 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int k = 0; k < t; ++k) {
    long long lo = n * k / t, hi = n * (k + 1) / t;
    pool.emplace_back([&fn, lo, hi, k] { fn(lo, hi, k); });
  }
  for (std::thread& th : pool) th.join();
}

inline void merge_partials(KappaCheck& out, const std::vector<KappaCheck>& parts) {
  for (const KappaCheck& p : parts) {
    out.cases += p.cases;
    out.failures += p.failures;
    if (out.counterexample.empty()) out.counterexample = p.counterexample;
  }
}

}  // namespace detail

/// Enumerates every tensor generator S_mu S_nu^* (x) W_xi W_eta^* with path
/// lengths at most `depth` (nu, xi, eta in the subgraph, sources matched)
/// and verifies, exactly over the rationals:
///   * diagonal-inner-products: the tensor inner product of each generator
///     with itself equals the Fock-coordinate norm of its coordinatewise
///     image and equals the comparability closed form
///     (W_{eta nu'} W_{eta nu'}^* when nu = xi nu', W_eta W_eta^* when
///     xi = nu xi', zero otherwise);
///   * mismatched-source-vanishing: generators with trivial adjoint path
///     and r(xi) != s(mu) vanish on both sides;
///   * reduced-isometry-all-pairs: kappa_reduced preserves every pairwise
///     inner product;
///   * tail-balancing-identification: when mu carries a subgraph tail, the
///     generator equals its tail-stripped form in the tensor module (their
///     difference has vanishing inner products) while the coordinatewise
///     images differ, so only the reduced map is well defined;
///   * termwise-map-hits-generators / reduced-map-onto-reduced-generators:
///     every Fock coordinate generator is hit by the stated preimage, and
///     every coordinate over a tail-free path is hit isometrically;
///   * left-action-case-formula: the coordinatewise map intertwines left
///     multiplication with the displayed case action.
inline KappaCheckReport kappa_check(const Subgraph& sub, int depth, int threads = 0) {
  require(depth >= 1, "invalid-argument", "depth must be at least 1");
  if (!sub.complement_regular)
    throw Error("precondition-violated",
                "complement subgraph has a source at vertex '" +
                    sub.e->vertices[sub.complement_sources.front()] + "'");
  const GraphSpec& ge = *sub.e;
  const GraphSpec& gf = *sub.f;

  std::vector<Path> epaths = paths_up_to(ge, depth);
  std::vector<Path> fpaths = paths_up_to(gf, depth);
  std::vector<Mono> fmonos;
  for (const Path& xi : fpaths)
    for (const Path& eta : fpaths)
      if (xi.source == eta.source) fmonos.push_back(Mono{xi, eta});
  std::vector<Mono> emonos;
  for (const Path& al : epaths)
    for (const Path& be : epaths)
      if (al.source == be.source) emonos.push_back(Mono{al, be});

  struct Gen {
    Mono em;                    // (mu, nu) with nu inside the subgraph
    Mono leg0;                  // (xi, eta)
    Path head;                  // mu with its subgraph tail stripped
    Path tail;                  // the stripped tail, as a subgraph path
    std::optional<Mono> leg_t;  // W_nu^* (xi, eta)
    std::optional<Mono> leg_r;  // W_tail W_nu^* (xi, eta)
  };
  std::vector<Gen> gens;
  for (const Path& mu : epaths)
    for (const Path& nuf : fpaths) {
      if (sub.evertex_of[nuf.source] != mu.source) continue;
      Mono em{mu, to_ambient(sub, nuf)};
      auto [head, tail] = split_subgraph_tail(sub, mu);
      for (const Mono& leg0 : fmonos) {
        Gen g{em, leg0, head, tail, std::nullopt, std::nullopt};
        g.leg_t = mono_mul(gf, Mono{vertex_path(nuf.source), nuf}, leg0);
        if (g.leg_t) g.leg_r = mono_mul(gf, Mono{tail, vertex_path(tail.source)}, *g.leg_t);
        gens.push_back(std::move(g));
      }
    }

  KappaCheckReport report;
  report.depth = depth;
  report.generators = static_cast<long long>(gens.size());
  report.convention_note =
      "tensor generators are taken as S_mu S_nu^* (x) W_xi W_eta^*: the second path of the "
      "left factor carries the adjoint";

  auto gen_str = [&](const Gen& g) {
    return mono_str(ge, g.em, 'S') + " (x) " + mono_str(gf, g.leg0, 'W');
  };
  auto opt_str = [&](const std::optional<Mono>& m) {
    return m ? mono_str(gf, *m, 'W') : std::string("0");
  };

  // --- diagonal inner products, three ways, plus source-mismatch vanishing.
  {
    KappaCheck diag{"diagonal-inner-products", 0, 0, ""};
    KappaCheck vanish{"mismatched-source-vanishing", 0, 0, ""};
    for (const Gen& g : gens) {
      std::optional<Mono> tensor_side =
          detail::ksgns_inner_term(sub, g.em, g.leg0, g.em, g.leg0);
      std::optional<Mono> fock_side;
      if (g.leg_t) {
        Mono q = vertex_mono(sub.fvertex_of[g.em.mu.source]);
        if (auto t = mono_mul(gf, mono_adjoint(*g.leg_t), q)) fock_side = mono_mul(gf, *t, *g.leg_t);
      }
      std::optional<Mono> closed;
      Path nuf = *to_sub(sub, g.em.nu);
      if (auto rest = strip_prefix(gf, nuf, g.leg0.mu)) {  // nu = xi nu'
        if (auto p = path_concat(gf, g.leg0.nu, *rest)) closed = Mono{*p, *p};
      } else if (strip_prefix(gf, g.leg0.mu, nuf)) {  // xi = nu xi'
        closed = Mono{g.leg0.nu, g.leg0.nu};
      }
      ++diag.cases;
      if (!(tensor_side == fock_side && tensor_side == closed)) {
        ++diag.failures;
        if (diag.counterexample.empty())
          diag.counterexample = gen_str(g) + ": tensor " + opt_str(tensor_side) + ", coordinate " +
                                opt_str(fock_side) + ", closed form " + opt_str(closed);
      }
      if (g.em.nu.empty() && path_range(gf, g.leg0.mu) != sub.fvertex_of[g.em.mu.source]) {
        ++vanish.cases;
        bool coord_zero = fock_generator(sub, g.em.mu, g.leg0).terms.empty();
        if (tensor_side || fock_side || !coord_zero) {
          ++vanish.failures;
          if (vanish.counterexample.empty())
            vanish.counterexample = gen_str(g) + ": tensor " + opt_str(tensor_side) +
                                    ", coordinate " + opt_str(fock_side);
        }
      }
    }
    report.checks.push_back(std::move(diag));
    report.checks.push_back(std::move(vanish));
  }

  // --- pairwise isometry of the reduced form.  Both sides vanish outside
  //     structured pairs, and that vanishing is decided wholesale: the tensor
  //     inner product survives only when one left path extends the other by a
  //     wholly-subgraph suffix (the middle product must reduce into the
  //     subgraph), such pairs always share a stripped head, and the reduced
  //     side needs equal heads with both reduced legs present.  So every pair
  //     that can be nonzero on either side lives in an equal-head bucket;
  //     the rest pass structurally and are counted in bulk.
  {
    const long long n = static_cast<long long>(gens.size());
    std::map<Path, int> mu_id;
    std::vector<int> mu_of(gens.size());
    for (std::size_t i = 0; i < gens.size(); ++i)
      mu_of[i] = mu_id.emplace(gens[i].em.mu, static_cast<int>(mu_id.size())).first->second;
    std::vector<std::vector<long long>> by_mu(mu_id.size());
    for (std::size_t i = 0; i < gens.size(); ++i)
      by_mu[mu_of[i]].push_back(static_cast<long long>(i));
    // Proper truncations of each left path by nonempty subgraph suffixes.
    std::vector<std::vector<int>> trunc(mu_id.size());
    for (const auto& [p, q] : mu_id) {
      int tail_len = split_subgraph_tail(sub, p).second.length();
      Path cur = p;
      for (int k = 0; k < tail_len; ++k) {
        cur.edges.pop_back();
        cur.source = cur.empty() ? path_range(ge, p) : ge.source[cur.edges.back()];
        auto it = mu_id.find(cur);
        if (it != mu_id.end()) trunc[q].push_back(it->second);
      }
    }
    auto suffix_related = [&](int qa, int qb) {
      if (qa == qb) return true;
      const std::vector<int>& ta = trunc[qa];
      if (std::find(ta.begin(), ta.end(), qb) != ta.end()) return true;
      const std::vector<int>& tb = trunc[qb];
      return std::find(tb.begin(), tb.end(), qa) != tb.end();
    };
    std::vector<std::vector<long long>> by_head;  // generators with a reduced leg
    {
      std::map<Path, int> head_id;
      for (std::size_t i = 0; i < gens.size(); ++i) {
        if (!gens[i].leg_r) continue;
        int h = head_id.emplace(gens[i].head, static_cast<int>(head_id.size())).first->second;
        if (h == static_cast<int>(by_head.size())) by_head.emplace_back();
        by_head[h].push_back(static_cast<long long>(i));
      }
    }
    auto eval_pair = [&](KappaCheck& part, const Gen& a, const Gen& b) {
      std::optional<Mono> tensor_side =
          detail::ksgns_inner_term(sub, a.em, a.leg0, b.em, b.leg0);
      std::optional<Mono> fock_side;
      if (a.leg_r && b.leg_r && a.head == b.head)
        fock_side = mono_mul(gf, mono_adjoint(*a.leg_r), *b.leg_r);
      ++part.cases;
      if (tensor_side == fock_side) return;
      // Distinct reduced monomials can still name the same algebra
      // element through the summed-range relation; decide exactly.
      bool equal = false;
      if (tensor_side && fock_side) {
        try {
          equal = nf_equal(nf_mono(gf, tensor_side->mu, tensor_side->nu),
                           nf_mono(gf, fock_side->mu, fock_side->nu));
        } catch (const Error&) {
          equal = false;
        }
      }
      if (!equal) {
        ++part.failures;
        if (part.counterexample.empty())
          part.counterexample = "<" + gen_str(a) + " | " + gen_str(b) + ">: tensor " +
                                opt_str(tensor_side) + ", reduced coordinates " +
                                opt_str(fock_side);
      }
    };
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    int t = threads > 0 ? threads : (hw > 0 ? hw : 1);
    // Suffix-related pairs: both sides in play, full comparison.
    std::vector<KappaCheck> parts(std::max(t, 1));
    detail::parallel_chunks(static_cast<long long>(by_mu.size()), t,
                            [&](long long lo, long long hi, int slot) {
                              KappaCheck& part = parts[slot];
                              for (long long q = lo; q < hi; ++q) {
                                const std::vector<long long>& bucket = by_mu[q];
                                for (std::size_t x = 0; x < bucket.size(); ++x)
                                  for (std::size_t y = x; y < bucket.size(); ++y)
                                    eval_pair(part, gens[bucket[x]], gens[bucket[y]]);
                                for (int tq : trunc[q])
                                  for (long long i : bucket)
                                    for (long long j : by_mu[tq])
                                      eval_pair(part, gens[i], gens[j]);
                              }
                            });
    // Equal-head pairs whose left paths are not suffix-related: the tensor
    // side vanishes identically, so only the reduced side needs deciding.
    std::vector<KappaCheck> parts2(std::max(t, 1));
    detail::parallel_chunks(static_cast<long long>(by_head.size()), t,
                            [&](long long lo, long long hi, int slot) {
                              KappaCheck& part = parts2[slot];
                              for (long long h = lo; h < hi; ++h) {
                                const std::vector<long long>& bucket = by_head[h];
                                for (std::size_t x = 0; x < bucket.size(); ++x)
                                  for (std::size_t y = x + 1; y < bucket.size(); ++y) {
                                    long long i = bucket[x], j = bucket[y];
                                    if (suffix_related(mu_of[i], mu_of[j])) continue;
                                    const Gen& a = gens[i];
                                    const Gen& b = gens[j];
                                    ++part.cases;
                                    auto fock_side =
                                        mono_mul(gf, mono_adjoint(*a.leg_r), *b.leg_r);
                                    if (!fock_side) continue;
                                    ++part.failures;
                                    if (part.counterexample.empty())
                                      part.counterexample = "<" + gen_str(a) + " | " +
                                                            gen_str(b) + ">: tensor 0" +
                                                            ", reduced coordinates " +
                                                            opt_str(fock_side);
                                  }
                              }
                            });
    KappaCheck pairs{"reduced-isometry-all-pairs", 0, 0, ""};
    detail::merge_partials(pairs, parts);
    detail::merge_partials(pairs, parts2);
    // Every pair outside the buckets vanishes on both sides by the structure
    // above, so the whole range counts as verified.
    pairs.cases = n * (n + 1) / 2;
    report.checks.push_back(std::move(pairs));
  }

  // --- balancing: a tail on mu moves across the tensor sign, so the
  //     generator and its stripped form are the same vector even though
  //     their coordinatewise images differ.
  {
    KappaCheck bal{"tail-balancing-identification", 0, 0, ""};
    for (const Gen& g : gens) {
      if (g.tail.empty() || !g.leg_r) continue;
      ++bal.cases;
      KSGNSGraphVec orig = ksgns_generator(sub, g.em, g.leg0);
      Mono em2{g.head, vertex_path(g.head.source)};
      KSGNSGraphVec red = ksgns_generator(sub, em2, *g.leg_r);
      KSGNSGraphVec diff = orig - red;
      bool null_diff = false;
      try {
        null_diff = nf_is_zero(ksgns_graph_inner(diff, diff));
      } catch (const Error&) {
        null_diff = false;
      }
      FockGraphVec kt_orig = kappa_termwise(orig);
      FockGraphVec kt_red = kappa_termwise(red);
      bool termwise_differ = !(kt_orig.terms == kt_red.terms);
      bool reduced_agree = kappa_reduced(orig).terms == kappa_reduced(red).terms;
      if (!(null_diff && termwise_differ && reduced_agree)) {
        ++bal.failures;
        if (bal.counterexample.empty())
          bal.counterexample = gen_str(g) + (null_diff ? "" : ": difference is not null") +
                               (termwise_differ ? "" : "; coordinatewise images coincide") +
                               (reduced_agree ? "" : "; reduced images differ");
      }
    }
    report.checks.push_back(std::move(bal));
  }

  // --- surjectivity onto coordinate generators.
  {
    KappaCheck hits{"termwise-map-hits-generators", 0, 0, ""};
    KappaCheck onto{"reduced-map-onto-reduced-generators", 0, 0, ""};
    for (const Path& mu : epaths) {
      int vf = sub.fvertex_of[mu.source];
      bool tail_free = split_subgraph_tail(sub, mu).second.empty();
      for (const Mono& leg : fmonos) {
        if (path_range(gf, leg.mu) != vf) continue;
        KSGNSGraphVec pre =
            ksgns_generator(sub, Mono{mu, vertex_path(mu.source)}, leg);
        FockGraphVec target = fock_generator(sub, mu, leg);
        ++hits.cases;
        if (!(kappa_termwise(pre).terms == target.terms)) {
          ++hits.failures;
          if (hits.counterexample.empty())
            hits.counterexample = "delta_" + path_str(ge, mu) + " (x) " + mono_str(gf, leg, 'W');
        }
        if (tail_free) {
          ++onto.cases;
          if (!(kappa_reduced(pre).terms == target.terms)) {
            ++onto.failures;
            if (onto.counterexample.empty())
              onto.counterexample = "delta_" + path_str(ge, mu) + " (x) " + mono_str(gf, leg, 'W');
          }
        }
      }
    }
    report.checks.push_back(std::move(hits));
    report.checks.push_back(std::move(onto));
  }

  // --- the displayed left-action case formula (threaded over monomials).
  //     Both sides act by prefix matching of the monomial's adjoint path
  //     against the generator's left path, so only prefix-comparable
  //     combinations can produce anything; the rest vanish on both sides and
  //     are counted in bulk.
  {
    const long long n = static_cast<long long>(emonos.size());
    std::vector<KSGNSGraphVec> gvecs;
    std::vector<FockGraphVec> gimgs;
    gvecs.reserve(gens.size());
    gimgs.reserve(gens.size());
    for (const Gen& g : gens) {
      gvecs.push_back(ksgns_generator(sub, g.em, g.leg0));
      gimgs.push_back(kappa_termwise(gvecs.back()));
    }
    std::map<Path, int> path_id;
    std::vector<std::vector<long long>> by_mu;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      int q = path_id.emplace(gens[i].em.mu, static_cast<int>(path_id.size())).first->second;
      if (q == static_cast<int>(by_mu.size())) by_mu.emplace_back();
      by_mu[q].push_back(static_cast<long long>(i));
    }
    // Index each left path under all of its proper front segments, so a
    // monomial can enumerate the generators its adjoint path extends into.
    std::map<Path, std::vector<int>> extending;
    for (const auto& [p, q] : path_id) {
      Path cur = p;
      while (!cur.empty()) {
        cur.edges.pop_back();
        cur.source = cur.empty() ? path_range(ge, p) : ge.source[cur.edges.back()];
        extending[cur].push_back(q);
      }
    }
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    int t = threads > 0 ? threads : (hw > 0 ? hw : 1);
    std::vector<KappaCheck> parts(std::max(t, 1));
    detail::parallel_chunks(n, t, [&](long long lo, long long hi, int slot) {
      KappaCheck& part = parts[slot];
      for (long long i = lo; i < hi; ++i) {
        const Mono& x = emonos[i];
        NFPoly xp = nf_mono(ge, x.mu, x.nu);
        std::vector<int> cand;
        if (auto it = path_id.find(x.nu); it != path_id.end()) cand.push_back(it->second);
        Path cur = x.nu;
        while (!cur.empty()) {
          cur.edges.pop_back();
          cur.source = cur.empty() ? path_range(ge, x.nu) : ge.source[cur.edges.back()];
          if (auto it = path_id.find(cur); it != path_id.end()) cand.push_back(it->second);
        }
        if (auto it = extending.find(x.nu); it != extending.end())
          cand.insert(cand.end(), it->second.begin(), it->second.end());
        for (int q : cand)
          for (long long gi : by_mu[q]) {
            ++part.cases;
            FockGraphVec lhs = kappa_termwise(ksgns_left_mult(xp, gvecs[gi]));
            FockGraphVec rhs = rho_apply(x, gimgs[gi]);
            if (!(lhs.terms == rhs.terms)) {
              ++part.failures;
              if (part.counterexample.empty())
                part.counterexample = mono_str(ge, x, 'S') + " . " + gen_str(gens[gi]);
            }
          }
      }
    });
    KappaCheck act{"left-action-case-formula", 0, 0, ""};
    detail::merge_partials(act, parts);
    // Monomials whose adjoint path is not prefix-comparable with a
    // generator's left path act as zero on both sides; those combinations
    // pass structurally and complete the count.
    act.cases = n * static_cast<long long>(gens.size());
    report.checks.push_back(std::move(act));
  }

  return report;
}

inline KappaCheckReport kappa_check(const GraphSpec& e, const GraphSpec& f, int depth,
                                    int threads = 0) {
  Subgraph sub = make_subgraph(e, f);
  return kappa_check(sub, depth, threads);
}

// ---------------------------------------------------------------------------
// The numeric edge correspondence over the vertex algebra.
// ---------------------------------------------------------------------------

/// The edge correspondence of a graph: a module over the commutative vertex
/// algebra (one 1x1 block per vertex) with one basis vector per edge, the
/// right action at sources and the left action at ranges.
struct GraphCorrespondence {
  const GraphSpec* g = nullptr;
  Correspondence corr;
  std::vector<int> edge_block;  // = source vertex of the edge
  std::vector<int> edge_row;    // row inside that block

  ModVec edge_vector(int e) const {
    ModVec v = ModVec::zero(corr.mod);
    v.b[edge_block[e]](edge_row[e], 0) = 1.0;
    return v;
  }
};

inline GraphCorrespondence graph_correspondence(const GraphSpec& g) {
  GraphCorrespondence gc;
  gc.g = &g;
  Algebra a = make_algebra(std::vector<int>(g.vertex_count(), 1));
  std::vector<int> mults(g.vertex_count());
  gc.edge_block.resize(g.edge_count());
  gc.edge_row.resize(g.edge_count());
  for (int v = 0; v < g.vertex_count(); ++v) {
    mults[v] = static_cast<int>(g.out_edges[v].size());
    for (int i = 0; i < mults[v]; ++i) {
      gc.edge_block[g.out_edges[v][i]] = v;
      gc.edge_row[g.out_edges[v][i]] = i;
    }
  }
  HilbertModule mod = make_module(a, mults);
  OpMap phi{a, mod, {}};
  for (int v = 0; v < g.vertex_count(); ++v) {
    AdjOp p = AdjOp::zero(mod, mod);
    for (int e : g.in_edges[v]) p.b[gc.edge_block[e]](gc.edge_row[e], gc.edge_row[e]) = 1.0;
    phi.img.push_back(std::move(p));
  }
  gc.corr = Correspondence{a, mod, phi};
  return gc;
}

/// The projection onto the span of subgraph edges, commuting with the left
/// action; the complemented piece it cuts out is the subgraph correspondence.
inline AdjOp subgraph_projection(const GraphCorrespondence& gc, const Subgraph& s) {
  require(same_graph(gc.g, s.e), "incompatible-operands",
          "correspondence was built from a different graph");
  AdjOp p = AdjOp::zero(gc.corr.mod, gc.corr.mod);
  for (int e = 0; e < s.e->edge_count(); ++e)
    if (s.fedge_of[e] >= 0) p.b[gc.edge_block[e]](gc.edge_row[e], gc.edge_row[e]) = 1.0;
  return p;
}

}  // namespace cstar
