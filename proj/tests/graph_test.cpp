#include "cstar/graph.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "cstar/fock.hpp"
#include "cstar/rng.hpp"

using namespace cstar;

namespace {

const char* kTwoLoops = R"(# one vertex carrying two loops
vertex v
edge a v v
edge b v v
)";

const char* kOneLoop = R"(vertex v
edge a v v
)";

const char* kThreeLoops = R"(vertex v
edge a v v
edge b v v
edge c v v
)";

// Path from dotted edge names, read left to right as the operator product.
Path pth(const GraphSpec& g, const std::string& dotted) {
  Path p;
  std::string cur;
  std::vector<std::string> names;
  for (char ch : dotted) {
    if (ch == '.') {
      names.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  names.push_back(cur);
  for (const std::string& n : names) p.edges.push_back(g.edge_id.at(n));
  p.source = g.source[p.edges.back()];
  return p;
}

Path vp(const GraphSpec& g, const std::string& v) { return vertex_path(g.vertex_id.at(v)); }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& xs) {
  return xs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(xs.size()) - 1))];
}

std::vector<Mono> all_monos(const GraphSpec& g, int depth) {
  std::vector<Path> ps = paths_up_to(g, depth);
  std::vector<Mono> ms;
  for (const Path& mu : ps)
    for (const Path& nu : ps)
      if (mu.source == nu.source) ms.push_back(Mono{mu, nu});
  return ms;
}

NFPoly random_poly(Rng& rng, const GraphSpec& g, const std::vector<Mono>& ms, int nterms) {
  NFPoly p = nf_zero(g);
  for (int i = 0; i < nterms; ++i) {
    const Mono& m = pick(rng, ms);
    RatC c{Rat(rng.uniform_int(-3, 3), 1 + rng.uniform_int(0, 2)),
           Rat(rng.uniform_int(-3, 3), 1 + rng.uniform_int(0, 2))};
    p = p + nf_mono(g, m.mu, m.nu, c);
  }
  return p;
}

const KappaCheck& find_check(const KappaCheckReport& r, const std::string& name) {
  for (const KappaCheck& c : r.checks)
    if (c.name == name) return c;
  FAIL("missing check: " << name);
  static const KappaCheck dummy{};
  return dummy;
}

}  // namespace

TEST_CASE("graph files parse with declared endpoints") {
  GraphSpec g = parse_graph(kTwoLoops);
  REQUIRE(g.vertex_count() == 1);
  REQUIRE(g.edge_count() == 2);
  CHECK(g.vertices[0] == "v");
  CHECK(g.edges[0] == "a");
  CHECK(g.source[g.edge_id.at("b")] == 0);
  CHECK(g.range[g.edge_id.at("b")] == 0);
  CHECK(g.source_vertices.empty());
  CHECK(g.sink_vertices.empty());
  CHECK(g.in_edges[0].size() == 2);

  GraphSpec h = parse_graph("vertex u\nvertex w\nedge e u w\n");
  CHECK(h.source_vertices == std::vector<int>{h.vertex_id.at("u")});
  CHECK(h.sink_vertices == std::vector<int>{h.vertex_id.at("w")});

  // Edges may be declared before their vertices.
  GraphSpec fwd = parse_graph("edge a v v\nvertex v\n");
  CHECK(fwd.edge_count() == 1);

  try {
    parse_graph("vertex v\n\nedge a v w\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "parse-error");
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(std::string(e.what()).find("'w'") != std::string::npos);
  }
  try {
    parse_graph("vertex v\nedge a v\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "parse-error");
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_graph("vertex v\nvertex v\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "parse-error");
  }
  try {
    parse_graph("vertex v\nedge a v v\nedge a v v\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "parse-error");
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    parse_graph("node v\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "parse-error");
  }
}

TEST_CASE("generator monomials form an inverse semigroup") {
  GraphSpec g = parse_graph(kTwoLoops);
  Path a = pth(g, "a"), b = pth(g, "b"), v = vp(g, "v");

  // S_a^* S_a = P_v and S_a^* S_b = 0.
  CHECK(mono_mul(g, Mono{v, a}, Mono{a, v}) == Mono{v, v});
  CHECK(!mono_mul(g, Mono{v, a}, Mono{b, v}));
  // Inner cancellation: S_mu S_nu^* . S_nu S_beta^* = S_mu S_beta^*.
  CHECK(mono_mul(g, Mono{pth(g, "a.b"), a}, Mono{a, pth(g, "b.a")}) ==
        Mono{pth(g, "a.b"), pth(g, "b.a")});
  // Partial overlap pushes the leftover across: S_a^* S_{ab} = S_b.
  CHECK(mono_mul(g, Mono{v, a}, Mono{pth(g, "a.b"), v}) == Mono{pth(g, "b"), v});

  GraphSpec h = parse_graph(
      "vertex u\nvertex w\nedge p u u\nedge q u w\nedge r w u\nedge s w w\n");
  for (const GraphSpec* gr : {&g, &h}) {
    std::vector<Mono> ms = all_monos(*gr, 3);
    Rng rng(7);
    for (int it = 0; it < 300; ++it) {
      Mono x = pick(rng, ms), y = pick(rng, ms), z = pick(rng, ms);
      auto xy = mono_mul(*gr, x, y);
      auto yz = mono_mul(*gr, y, z);
      auto lhs = xy ? mono_mul(*gr, *xy, z) : std::nullopt;
      auto rhs = yz ? mono_mul(*gr, x, *yz) : std::nullopt;
      CHECK(lhs == rhs);  // associativity, including vanishing products
      auto adj = mono_mul(*gr, mono_adjoint(y), mono_adjoint(x));
      CHECK(adj == (xy ? std::optional<Mono>(mono_adjoint(*xy)) : std::nullopt));
      if (xy) CHECK(gauge_degree(*xy) == gauge_degree(x) + gauge_degree(y));
    }
  }
}

TEST_CASE("polynomials multiply and collect exactly") {
  GraphSpec g = parse_graph(kTwoLoops);
  Path a = pth(g, "a"), b = pth(g, "b"), v = vp(g, "v");

  NFPoly x = nf_mono(g, a, v, RatC{Rat(1, 3)}) + nf_mono(g, b, v, RatC{Rat(0), Rat(1, 7)});
  NFPoly xx = nf_adjoint(x) * x;
  REQUIRE(xx.terms.size() == 1);
  CHECK(xx.terms.begin()->first == Mono{v, v});
  CHECK(xx.terms.begin()->second == RatC{Rat(58, 441)});

  std::vector<Mono> ms = all_monos(g, 2);
  Rng rng(11);
  for (int it = 0; it < 40; ++it) {
    NFPoly p = random_poly(rng, g, ms, 3), q = random_poly(rng, g, ms, 3);
    CHECK((nf_unit(g) * p).terms == p.terms);
    CHECK((p * nf_unit(g)).terms == p.terms);
    CHECK(nf_adjoint(p * q).terms == (nf_adjoint(q) * nf_adjoint(p)).terms);
    CHECK(((p + q) * p).terms == (p * p + q * p).terms);
  }
}

TEST_CASE("uniform depth expansion decides equality") {
  GraphSpec g = parse_graph(kTwoLoops);
  Path a = pth(g, "a"), b = pth(g, "b"), v = vp(g, "v");

  // The summed-range relation over both loops.
  NFPoly resolved = nf_mono(g, a, a) + nf_mono(g, b, b);
  CHECK(nf_equal(nf_unit(g), resolved));
  CHECK(nf_equal(nf_vertex(g, 0), resolved));
  // Applying it twice reaches depth two.
  NFPoly depth2 = nf_zero(g);
  for (const Path& mu : paths_from(g, 0, 2)) depth2 = depth2 + nf_mono(g, mu, mu);
  CHECK(nf_equal(nf_unit(g), depth2));
  // A generator equals its own expansion: S_a = S_{aa} S_a^* + S_{ab} S_b^*.
  CHECK(nf_equal(nf_edge(g, 0), nf_mono(g, pth(g, "a.a"), a) + nf_mono(g, pth(g, "a.b"), b)));
  // Distinct families at one depth stay distinct.
  CHECK(!nf_equal(nf_mono(g, a, a), nf_mono(g, b, b)));
  CHECK(!nf_equal(nf_edge(g, 0), nf_edge(g, 1)));
  CHECK(!nf_equal(nf_edge(g, 0), nf_vertex(g, 0)));
  CHECK(nf_is_zero(nf_unit(g) - resolved));

  GraphSpec h = parse_graph("vertex u\nvertex w\nedge e u w\n");
  try {
    nf_equal(nf_unit(h), nf_unit(h));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "equality-undecidable-by-expansion");
    CHECK(std::string(e.what()).find("'u'") != std::string::npos);
  }
}

TEST_CASE("projection onto a subgraph keeps its generator monomials") {
  GraphSpec ge = parse_graph(kTwoLoops);
  GraphSpec gf = parse_graph(kOneLoop);
  Subgraph sub = make_subgraph(ge, gf);
  CHECK(sub.complement_regular);

  Path a = pth(ge, "a"), b = pth(ge, "b"), v = vp(ge, "v");
  CHECK(projected_expectation(sub, nf_vertex(ge, 0)).terms == nf_vertex(gf, 0).terms);
  CHECK(projected_expectation(sub, nf_mono(ge, a, a)).terms ==
        nf_mono(gf, pth(gf, "a"), pth(gf, "a")).terms);
  CHECK(projected_expectation(sub, nf_mono(ge, b, b)).terms.empty());
  CHECK(projected_expectation(sub, nf_mono(ge, a, b)).terms.empty());

  std::vector<Mono> ms = all_monos(ge, 2);
  Rng rng(13);
  for (int it = 0; it < 40; ++it) {
    NFPoly p = random_poly(rng, ge, ms, 4);
    NFPoly once = projected_expectation(sub, p);
    CHECK(projected_expectation(sub, embed_poly(sub, once)).terms == once.terms);
    // Complete positivity on generators: E(x^* x) is a nonnegative
    // combination of diagonal monomials W_gamma W_gamma^*.
    const Mono& m = pick(rng, ms);
    NFPoly diag = projected_expectation(
        sub, nf_mono(ge, m.nu, m.mu) * nf_mono(ge, m.mu, m.nu));
    for (const auto& [mm, c] : diag.terms) {
      CHECK(mm.mu == mm.nu);
      CHECK(c.im.numerator() == 0);
      CHECK(c.re.numerator() > 0);
    }
  }

  // A complement with a source is refused.
  GraphSpec ge2 = parse_graph("vertex u\nvertex w\nedge a u u\nedge b w u\nedge c w w\n");
  GraphSpec gf2 = parse_graph("vertex u\nvertex w\nedge a u u\nedge c w w\n");
  Subgraph bad = make_subgraph(ge2, gf2);
  CHECK(!bad.complement_regular);
  try {
    projected_expectation(bad, nf_unit(ge2));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "precondition-violated");
    CHECK(std::string(e.what()).find("'w'") != std::string::npos);
  }

  // Mismatched endpoints are not a subgraph.
  GraphSpec gf3 = parse_graph("vertex u\nvertex w\nedge b w w\n");
  try {
    make_subgraph(ge2, gf3);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "invalid-argument");
  }
  GraphSpec gf4 = parse_graph("vertex u\nvertex w\nedge z u u\n");
  try {
    make_subgraph(ge2, gf4);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "invalid-argument");
  }
}

TEST_CASE("tensor vectors reproduce the closed-form inner products") {
  GraphSpec ge = parse_graph(kThreeLoops);
  GraphSpec gf = parse_graph(kTwoLoops);
  Subgraph sub = make_subgraph(ge, gf);

  Path ev = vp(ge, "v"), fv = vp(gf, "v");
  auto gen = [&](const std::string& mu, const std::string& nu, const std::string& xi,
                 const std::string& eta) {
    Path pm = mu.empty() ? ev : pth(ge, mu);
    Path pn = nu.empty() ? ev : pth(ge, nu);
    Path px = xi.empty() ? fv : pth(gf, xi);
    Path pe = eta.empty() ? fv : pth(gf, eta);
    return ksgns_generator(sub, Mono{pm, pn}, Mono{px, pe});
  };

  // nu = xi nu': the diagonal inner product is W_{eta nu'} W_{eta nu'}^*.
  NFPoly d1 = ksgns_graph_inner(gen("c", "a.b", "a", "b"), gen("c", "a.b", "a", "b"));
  CHECK(d1.terms == nf_mono(gf, pth(gf, "b.b"), pth(gf, "b.b")).terms);
  // xi = nu xi': it collapses to W_eta W_eta^*.
  NFPoly d2 = ksgns_graph_inner(gen("c", "a", "a.a", "b"), gen("c", "a", "a.a", "b"));
  CHECK(d2.terms == nf_mono(gf, pth(gf, "b"), pth(gf, "b")).terms);
  // Incomparable paths vanish.
  NFPoly d3 = ksgns_graph_inner(gen("c", "a", "b", "b"), gen("c", "a", "b", "b"));
  CHECK(d3.terms.empty());
  // An adjoint path outside the subgraph makes the generator a null vector.
  NFPoly d4 = ksgns_graph_inner(gen("a", "c", "a", "a"), gen("a", "c", "a", "a"));
  CHECK(d4.terms.empty());

  std::vector<Mono> me = all_monos(ge, 2), mf = all_monos(gf, 2);
  Rng rng(17);
  for (int it = 0; it < 60; ++it) {
    KSGNSGraphVec x = ksgns_generator(sub, pick(rng, me), pick(rng, mf)) +
                      ksgns_generator(sub, pick(rng, me), pick(rng, mf));
    KSGNSGraphVec y = ksgns_generator(sub, pick(rng, me), pick(rng, mf));
    const Mono& bm = pick(rng, mf);
    NFPoly b = nf_mono(gf, bm.mu, bm.nu);
    const Mono& am = pick(rng, me);
    NFPoly a = nf_mono(ge, am.mu, am.nu);
    // Right linearity, left-action adjointability, conjugate symmetry.
    CHECK(nf_equal(ksgns_graph_inner(x, ksgns_right_mult(y, b)),
                   ksgns_graph_inner(x, y) * b));
    CHECK(nf_equal(ksgns_graph_inner(ksgns_left_mult(a, x), y),
                   ksgns_graph_inner(x, ksgns_left_mult(nf_adjoint(a), y))));
    CHECK(nf_equal(nf_adjoint(ksgns_graph_inner(x, y)), ksgns_graph_inner(y, x)));
  }
}

TEST_CASE("kappa_check verifies the loop-graph instance") {
  GraphSpec ge = parse_graph(kTwoLoops);
  GraphSpec gf = parse_graph(kOneLoop);
  KappaCheckReport r = kappa_check(ge, gf, 3);
  REQUIRE(r.pass());
  CHECK(r.depth == 3);
  CHECK(r.generators == 960);
  CHECK(r.checks.size() == 7);
  CHECK(!r.convention_note.empty());
  CHECK(find_check(r, "diagonal-inner-products").cases == 960);
  CHECK(find_check(r, "reduced-isometry-all-pairs").cases == 960LL * 961 / 2);
  CHECK(find_check(r, "tail-balancing-identification").cases > 0);
  CHECK(find_check(r, "termwise-map-hits-generators").cases > 0);
  CHECK(find_check(r, "reduced-map-onto-reduced-generators").cases > 0);
  CHECK(find_check(r, "left-action-case-formula").cases > 0);
  // A single range vertex can never mismatch a source.
  CHECK(find_check(r, "mismatched-source-vanishing").cases == 0);

  // The whole graph as its own subgraph: the identification sends everything
  // to the level-zero coordinate.
  GraphSpec ge2 = parse_graph(kTwoLoops);
  Subgraph idsub = make_subgraph(ge, ge2);
  CHECK(idsub.complement_regular);
  KappaCheckReport rid = kappa_check(idsub, 2);
  REQUIRE(rid.pass());
  KSGNSGraphVec gg = ksgns_generator(idsub, Mono{pth(ge, "a.b"), vp(ge, "v")}, vertex_mono(0));
  FockGraphVec red = kappa_reduced(gg);
  REQUIRE(red.terms.size() == 1);
  CHECK(red.terms.begin()->first.first.empty());
  CHECK(red.terms.begin()->first.second == Mono{pth(ge2, "a.b"), vp(ge2, "v")});

  // Chunked execution produces the identical report for any worker count.
  KappaCheckReport r1 = kappa_check(ge, gf, 2, 1);
  KappaCheckReport r3 = kappa_check(ge, gf, 2, 3);
  REQUIRE(r1.checks.size() == r3.checks.size());
  for (std::size_t i = 0; i < r1.checks.size(); ++i) {
    CHECK(r1.checks[i].name == r3.checks[i].name);
    CHECK(r1.checks[i].cases == r3.checks[i].cases);
    CHECK(r1.checks[i].failures == r3.checks[i].failures);
  }
  CHECK(r3.pass());

  try {
    kappa_check(ge, gf, 0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "invalid-argument");
  }
  GraphSpec ge3 = parse_graph("vertex u\nvertex w\nedge a u u\nedge b w u\nedge c w w\n");
  GraphSpec gf3 = parse_graph("vertex u\nvertex w\nedge a u u\nedge c w w\n");
  try {
    kappa_check(ge3, gf3, 2);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "precondition-violated");
  }
}

TEST_CASE("kappa_check handles a four-vertex random instance") {
  Rng rng(2024);
  std::ostringstream es, fs;
  const int nv = 4;
  for (int v = 0; v < nv; ++v) {
    es << "vertex v" << v << "\n";
    fs << "vertex v" << v << "\n";
  }
  for (int v = 0; v < nv; ++v) {  // one subgraph edge into every vertex
    int u = rng.uniform_int(0, nv - 1);
    es << "edge f" << v << " v" << u << " v" << v << "\n";
    fs << "edge f" << v << " v" << u << " v" << v << "\n";
  }
  for (int v = 0; v < nv; ++v) {  // one complement edge into every vertex
    int u = rng.uniform_int(0, nv - 1);
    es << "edge c" << v << " v" << u << " v" << v << "\n";
  }
  for (int k = 0; k < 2; ++k)  // extra complement edges keep regularity
    es << "edge x" << k << " v" << rng.uniform_int(0, nv - 1) << " v"
       << rng.uniform_int(0, nv - 1) << "\n";

  GraphSpec ge = parse_graph(es.str());
  GraphSpec gf = parse_graph(fs.str());
  Subgraph sub = make_subgraph(ge, gf);
  REQUIRE(sub.complement_regular);
  CHECK(ge.source_vertices.empty());
  CHECK(gf.source_vertices.empty());

  KappaCheckReport r = kappa_check(sub, 2);
  REQUIRE(r.pass());
  CHECK(r.generators > 0);
  CHECK(find_check(r, "mismatched-source-vanishing").cases > 0);
  CHECK(find_check(r, "tail-balancing-identification").cases > 0);

  std::vector<Mono> ms = all_monos(ge, 2);
  for (int it = 0; it < 20; ++it) {
    NFPoly p = random_poly(rng, ge, ms, 3);
    NFPoly once = projected_expectation(sub, p);
    CHECK(projected_expectation(sub, embed_poly(sub, once)).terms == once.terms);
  }
}

TEST_CASE("edge correspondence matches the vertex algebra structure") {
  GraphSpec g = parse_graph(kTwoLoops);
  GraphCorrespondence gc = graph_correspondence(g);
  CHECK(gc.corr.left.block_count() == 1);
  CHECK(gc.corr.mod.mults == std::vector<int>{2});
  CHECK(numeric_rank(gc.corr.phi.img[0].flat_matrix()) == 2);
  CHECK(std::abs(scalar_inner(gc.edge_vector(0), gc.edge_vector(0)) - cd(1, 0)) < 1e-12);
  CHECK(std::abs(scalar_inner(gc.edge_vector(0), gc.edge_vector(1))) < 1e-12);

  GraphSpec h = parse_graph("vertex u\nvertex w\nedge e u w\nedge f w w\n");
  GraphCorrespondence hc = graph_correspondence(h);
  // The left action of a vertex unit has rank equal to its in-degree.
  CHECK(numeric_rank(hc.corr.phi.img[h.vertex_id.at("u")].flat_matrix()) == 0);
  CHECK(numeric_rank(hc.corr.phi.img[h.vertex_id.at("w")].flat_matrix()) == 2);
  // The kernel of the left action is the span of the non-receiving vertices.
  auto [ker, cov] = covariance_ideal(hc.corr);
  std::vector<char> expect_mask(h.vertex_count());
  for (int v = 0; v < h.vertex_count(); ++v) expect_mask[v] = h.in_edges[v].empty() ? 1 : 0;
  CHECK(ker.mask == expect_mask);

  GraphSpec gf = parse_graph(kOneLoop);
  Subgraph sub = make_subgraph(g, gf);
  AdjOp p0 = subgraph_projection(gc, sub);
  CHECK(std::abs(p0.b[0](0, 0) - cd(1, 0)) < 1e-12);  // edge a spans the range
  CHECK(std::abs(p0.b[0](1, 1)) < 1e-12);
  CHECK((p0 * p0 - p0).norm() < 1e-12);
  for (const AdjOp& t : gc.corr.phi.img) CHECK((t * p0 - p0 * t).norm() < 1e-12);
}

TEST_CASE("compressed expectation agrees with the numeric tower") {
  GraphSpec ge = parse_graph(kTwoLoops);
  GraphSpec gf = parse_graph(kOneLoop);
  Subgraph sub = make_subgraph(ge, gf);
  GraphCorrespondence gc = graph_correspondence(ge);
  AdjOp p0 = subgraph_projection(gc, sub);
  const int levels = 4;
  FockExpectation fe = fock_expectation(gc.corr, p0, levels);

  auto tower_identity = [](const FockTower& t) {
    FockOp id = FockOp::zero(t);
    for (int k = 0; k <= t.top(); ++k) id.set(k, k, AdjOp::identity(t.level[k]));
    return id;
  };
  auto word = [&](const FockTower& t, const std::vector<ModVec>& vecs, const Path& mu) {
    FockOp w = tower_identity(t);
    for (int e : mu.edges) w = w * creation(t, vecs[e]);
    return w;
  };

  std::vector<ModVec> xvecs;
  for (int e = 0; e < ge.edge_count(); ++e) xvecs.push_back(gc.edge_vector(e));
  std::vector<ModVec> yvecs;
  for (int x = 0; x < gf.edge_count(); ++x)
    yvecs.push_back(fe.comp.embed.adjoint().apply(gc.edge_vector(sub.eedge_of[x])));

  std::vector<Path> epaths = paths_up_to(ge, levels - 1);
  for (const Path& mu : epaths)
    for (const Path& nu : epaths) {
      FockOp lhs = fock_expect(fe, word(fe.x, xvecs, mu) * word(fe.x, xvecs, nu).adjoint());
      FockOp rhs = FockOp::zero(fe.y);
      auto muf = to_sub(sub, mu);
      auto nuf = to_sub(sub, nu);
      if (muf && nuf)
        rhs = word(fe.y, yvecs, *muf) * word(fe.y, yvecs, *nuf).adjoint();
      INFO("mu = " << path_str(ge, mu) << ", nu = " << path_str(ge, nu));
      CHECK((lhs - rhs).norm() < 1e-9);
    }
}

TEST_CASE("nested subgraphs compose through the quotient tensor") {
  GraphSpec ge = parse_graph(kThreeLoops);
  GraphSpec gf = parse_graph(kTwoLoops);
  GraphSpec gg = parse_graph(kOneLoop);
  Subgraph ef = make_subgraph(ge, gf);
  Subgraph fg = make_subgraph(gf, gg);
  Subgraph eg = make_subgraph(ge, gg);

  std::vector<Mono> me = all_monos(ge, 2), mf = all_monos(gf, 2), mg = all_monos(gg, 2);
  Rng rng(2026);
  for (int it = 0; it < 150; ++it) {
    auto one = [&](const GraphSpec& g, const std::vector<Mono>& ms) {
      const Mono& m = pick(rng, ms);
      return nf_mono(g, m.mu, m.nu);
    };
    NFPoly a = one(ge, me), ap = one(ge, me);
    NFPoly b1 = one(gf, mf), b1p = one(gf, mf);
    NFPoly b2 = one(gf, mf), b2p = one(gf, mf);
    NFPoly c = one(gg, mg), cp = one(gg, mg);

    // Iterated inner product of (a (x) b1) (x) (b2 (x) c) against the primed
    // vector, evaluated stage by stage ...
    NFPoly t = nf_adjoint(b1) * projected_expectation(ef, nf_adjoint(a) * ap) * b1p;
    NFPoly lhs = nf_adjoint(c) * projected_expectation(fg, nf_adjoint(b2) * t * b2p) * cp;
    // ... equals the inner product of the flattened vectors a b1 b2 (x) c.
    NFPoly m1 = a * embed_poly(ef, b1 * b2);
    NFPoly m2 = ap * embed_poly(ef, b1p * b2p);
    NFPoly rhs = nf_adjoint(c) * projected_expectation(eg, nf_adjoint(m1) * m2) * cp;
    CHECK(nf_equal(lhs, rhs));
  }
}

TEST_CASE("graph operations refuse mismatched operands") {
  GraphSpec ge = parse_graph(kTwoLoops);
  GraphSpec gf = parse_graph(kOneLoop);
  Subgraph sub = make_subgraph(ge, gf);

  try {
    nf_multiply(nf_unit(ge), nf_unit(gf));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "incompatible-operands");
  }
  try {
    ksgns_tensor(sub, nf_unit(gf), nf_unit(ge));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "incompatible-operands");
  }
  try {
    projected_expectation(sub, nf_unit(gf));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "incompatible-operands");
  }
  try {
    embed_poly(sub, nf_unit(ge));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == "incompatible-operands");
  }
}
