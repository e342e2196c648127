#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "geonet/convstruct.hpp"
#include "geonet/engine.hpp"
#include "oracles.hpp"

using namespace geonet;
using namespace geonet::oracle;

namespace {

// Equivalence closure of the adapted-coefficient relation by union-find over edges.
std::vector<std::size_t> closure_slots(const ConvStructure& c) {
  const auto& a = c.arrow();
  std::vector<std::size_t> parent(a.pair_count());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (ElementId v = 0; v < a.target().size(); ++v)
    for (ElementId w = 0; w < a.target().size(); ++w)
      for (std::size_t p = 0; p < a.preimage(v).size(); ++p)
        if (auto q = c.transport(v, w, p)) parent[find(a.preimage_offset(v) + p)] = find(a.preimage_offset(w) + *q);
  std::vector<std::size_t> out(parent.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = find(i);
  return out;
}

template <class A, class B>
void expect_same_partition(const std::vector<A>& a, const std::vector<B>& b) {
  ASSERT_EQ(a.size(), b.size());
  std::map<A, B> ab;
  std::map<B, A> ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [i1, f1] = ab.try_emplace(a[i], b[i]);
    auto [i2, f2] = ba.try_emplace(b[i], a[i]);
    ASSERT_EQ(i1->second, b[i]) << "at " << i;
    ASSERT_EQ(i2->second, a[i]) << "at " << i;
  }
}

}  // namespace

TEST(Cayley, TorusTranslationOneClassNineSlots) {
  const auto t = Space::torus(8, 8);
  const auto arrow = metric_corr(t, 1.0);
  const auto c = cayley_structure(arrow, torus_translation(t, t));
  EXPECT_EQ(c.class_count(), 1u);
  EXPECT_EQ(c.slots_in_class(0), 9u);
  EXPECT_TRUE(validate(c).ok);
  const auto s = structure_slots(c);
  EXPECT_EQ(s.count, 9u);
  EXPECT_EQ(tie_parameters(c, 1, 64).slot_count(), 576u);
}

TEST(Cayley, GridTimesCircleSingleClass) {
  const auto t = Space::torus(5, 5);
  const auto mu = make_circle(6, false);
  const auto p = product_space(t, mu);
  const auto arrow = product_corr(metric_corr(t, 1.0), metric_corr(mu, adjacent_root_distance(6)));
  const auto act = product_action(torus_translation(t, t), rotation(mu, mu), mu.size(), mu.size());
  const auto c = cayley_structure(Correspondence::from_pairs(p, p, arrow.pairs()), act);
  EXPECT_EQ(c.class_count(), 1u);
  EXPECT_EQ(c.slots_in_class(0), 27u);
  EXPECT_TRUE(validate(c).ok);
}

TEST(Cayley, TrivialGroupAndErrors) {
  const auto g = make_grid(4, 4);
  const auto arrow = metric_corr(g, 1.0);
  const auto c = cayley_structure(arrow, trivial_action());
  EXPECT_EQ(c.class_count(), g.size());
  EXPECT_TRUE(validate(c).ok);
  const auto s = structure_slots(c);
  EXPECT_EQ(s.count, arrow.pair_count());

  const auto t = Space::torus(4, 4);
  const auto ta = metric_corr(t, 1.0);
  GroupAction fixes{2, [](std::size_t, ElementId v) { return v; }, [](std::size_t, ElementId v) { return v; }};
  EXPECT_THROW(cayley_structure(ta, fixes), ValidationError);
  // A free action that breaks edges: shift the source only.
  GroupAction breaks{2, [](std::size_t g, ElementId v) { return static_cast<ElementId>((v + 5 * g) % 16); },
                     [](std::size_t g, ElementId v) { return static_cast<ElementId>((v + 2 * g) % 16); }};
  EXPECT_THROW(cayley_structure(ta, breaks), ValidationError);
}

TEST(Restriction, G28NineClassesFortyNineSlots) {
  const auto g = make_grid(28, 28);
  const auto tying = grid_translation_tying(g, 1.0);
  const auto& c = tying.structure;
  EXPECT_EQ(c.class_count(), 9u);
  const auto slots = structure_slots(c);
  EXPECT_EQ(slots.count, 49u);
  EXPECT_EQ(tie_parameters(c, 1, 64).slot_count(), 3136u);
  EXPECT_TRUE(validate(c).ok);

  const auto o = orbit_oracle(28, 28, 1);
  EXPECT_EQ(o.offsets.size(), 9u);
  std::size_t oracle_slots = 0;
  std::map<std::size_t, std::size_t> sizes;
  for (const auto& off : o.offsets) oracle_slots += off.size();
  for (auto k : o.cls) ++sizes[o.offsets[static_cast<std::size_t>(k)].size()];
  EXPECT_EQ(oracle_slots, 49u);
  EXPECT_EQ(sizes[9], 676u);
  EXPECT_EQ(sizes[6], 4u * 26u);
  EXPECT_EQ(sizes[4], 4u);

  // Window vertex j is the torus vertex (x, y) with j = y * 28 + x.
  std::vector<std::uint32_t> lib(g.size());
  for (ElementId j = 0; j < g.size(); ++j) lib[j] = c.class_of(j);
  expect_same_partition(lib, o.cls);

  // Slots agree with (class, offset) pairs.
  const auto& a = slots.arrow;
  std::vector<std::pair<int, std::pair<long, long>>> keys;
  std::vector<std::uint32_t> ids;
  for (ElementId v = 0; v < a.target().size(); ++v) {
    const long vx = v % 28, vy = v / 28;
    const auto in = a.preimage(v);
    for (std::size_t p = 0; p < in.size(); ++p) {
      const long ux = in[p] % 28, uy = in[p] / 28;
      keys.push_back({o.cls[v], {ux - vx, uy - vy}});
      ids.push_back(slots.slot[a.preimage_offset(v) + p]);
    }
  }
  expect_same_partition(ids, keys);
}

TEST(Restriction, OtherWindowsMatchOracle) {
  for (auto [w, h, r] : std::vector<std::tuple<long, long, long>>{{5, 7, 1}, {9, 9, 2}, {12, 6, 1}, {3, 3, 1}}) {
    const auto g = make_grid(w, h);
    const auto c = grid_translation_tying(g, static_cast<double>(r)).structure;
    const auto o = orbit_oracle(w, h, r);
    std::vector<std::uint32_t> lib(g.size());
    for (ElementId j = 0; j < g.size(); ++j) lib[j] = c.class_of(j);
    expect_same_partition(lib, o.cls);
    std::size_t total = 0;
    for (const auto& off : o.offsets) total += off.size();
    EXPECT_EQ(structure_slots(c).count, total);
  }
}

TEST(Restriction, FullAndTrivial) {
  const auto t = Space::torus(6, 6);
  const auto arrow = metric_corr(t, 1.0);
  const auto cay = cayley_structure(arrow, torus_translation(t, t));
  const FeedForwardSystem s({t, t}, {arrow});
  std::vector<ElementId> all(t.size());
  for (ElementId v = 0; v < t.size(); ++v) all[v] = v;
  const auto full = restrict(s, {all, all});
  const auto r = restrict_structure(cay, full, 1);
  EXPECT_EQ(r.class_count(), 1u);
  EXPECT_EQ(structure_slots(r).count, 9u);

  const auto triv = trivial_structure(arrow);
  std::vector<ElementId> part;
  for (ElementId v = 0; v < 18; ++v) part.push_back(v);
  const auto sub = restrict(s, {all, part});
  const auto rt = restrict_structure(triv, sub, 1);
  EXPECT_EQ(rt.class_count(), part.size());
}

TEST(Restriction, RefinesParentPartition) {
  const auto g = make_grid(10, 10);
  const auto tying = grid_translation_tying(g, 1.0);
  const auto& w = tying.window;
  for (ElementId a = 0; a < g.size(); ++a)
    for (ElementId b = 0; b < g.size(); ++b)
      if (tying.structure.class_of(a) == tying.structure.class_of(b))
        EXPECT_EQ(tying.parent.class_of(w.parent_ids(1)[a]), tying.parent.class_of(w.parent_ids(1)[b]));
}

TEST(Validate, DetectsNonInverse) {
  const auto x = Space::set(2);
  const auto arrow = complete(x, x);
  // Both vertices in one class; psi(0,1) swaps, psi(1,0) also identity: not inverse of a swap.
  std::map<std::pair<ElementId, ElementId>, std::vector<std::uint32_t>> psi;
  psi[{0, 1}] = {1, 0};
  psi[{1, 0}] = {0, 1};
  const auto c = ConvStructure::pairwise(arrow, {0, 0}, psi);
  const auto rep = validate(c);
  EXPECT_FALSE(rep.ok);
  EXPECT_EQ(rep.violation, "psi(v,w) is not the inverse of psi(w,v)");
  EXPECT_TRUE(validate(trivial_structure(metric_corr(make_grid(3, 3), 1.0))).ok);
}

TEST(Validate, DetectsCocycleFailure) {
  const auto x = Space::set(3), y = Space::set(3);
  const auto arrow = complete(x, y);
  std::map<std::pair<ElementId, ElementId>, std::vector<std::uint32_t>> psi;
  // psi(0,1) = psi(1,2) = identity but psi(0,2) = a swap: inverse pairs hold, cocycle fails.
  for (auto [v, w] : std::vector<std::pair<ElementId, ElementId>>{{0, 1}, {1, 0}, {1, 2}, {2, 1}}) psi[{v, w}] = {0, 1, 2};
  psi[{0, 2}] = {1, 0, 2};
  psi[{2, 0}] = {1, 0, 2};
  const auto rep = validate(ConvStructure::pairwise(arrow, {0, 0, 0}, psi));
  EXPECT_FALSE(rep.ok);
  EXPECT_EQ(rep.violation, "cocycle identity fails");
  EXPECT_EQ(rep.witness.size(), 3u);
}

TEST(TieMap, SharingIsClosureOfAdaptedRelation) {
  std::mt19937_64 rng(4);
  for (auto [w, h] : std::vector<std::pair<long, long>>{{6, 6}, {7, 5}, {4, 9}}) {
    const auto c = grid_translation_tying(make_grid(w, h), 1.0).structure;
    ASSERT_LE(c.arrow().pair_count(), 500u);
    const auto s = structure_slots(c);
    expect_same_partition(s.slot, closure_slots(c));
  }
}

TEST(TieMap, ProductWithChannels) {
  const auto c = grid_translation_tying(make_grid(6, 6), 1.0).structure;
  const auto t = tie_parameters(c, 2, 3);
  EXPECT_EQ(t.slot_count(), structure_slots(c).count * 6u);
  std::set<std::size_t> seen;
  for (std::size_t ci = 0; ci < 2; ++ci)
    for (std::size_t co = 0; co < 3; ++co) seen.insert(t.slot(0, ci, co));
  EXPECT_EQ(seen.size(), 6u);
}

TEST(TieMap, InteriorEquivariance) {
  // Shifting the input by g shifts interior layer-1 activations by g.
  const long n = 12;
  const auto g = make_grid(n, n);
  const auto tying = grid_translation_tying(g, 1.0);
  const FeedForwardSystem s({g, g}, {metric_corr(g, 1.0)});
  const Activator act{Semigroup::Sum, CoefficientDomain::AllReals, Cutoff::Identity};
  auto net = Network::build(s, {act}, LossKind::L2, {structure_slots(tying.structure)});
  net.initialize(InitScheme::UniformScaled, 3);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, n * n), xs = Eigen::MatrixXd::Zero(1, n * n);
  for (long y = 0; y < n; ++y)
    for (long xx = 0; xx < n; ++xx) x(0, y * n + xx) = u(rng);
  const long gx = 2, gy = 1;
  for (long y = 0; y < n; ++y)
    for (long xx = 0; xx < n; ++xx)
      if (xx - gx >= 0 && y - gy >= 0) xs(0, y * n + xx) = x(0, (y - gy) * n + xx - gx);
  const auto a = net.forward(x).layers[1], b = net.forward(xs).layers[1];
  for (long y = 2; y < n - 2 - gy; ++y)
    for (long xx = 2; xx < n - 2 - gx; ++xx)
      EXPECT_NEAR(b(0, (y + gy) * n + xx + gx), a(0, y * n + xx), 1e-12);
}

TEST(Inherited, BoundaryReusesInteriorSlots) {
  const auto g = make_grid(8, 8);
  const auto tying = grid_translation_tying(g, 1.0);
  const auto inh = inherited_slots(tying.parent, tying.window, 1);
  EXPECT_EQ(inh.count, 9u);
  const auto& a = inh.arrow;
  // Every edge with offset (dx, dy) gets the same slot anywhere in the window.
  std::map<std::pair<long, long>, std::uint32_t> by_offset;
  for (ElementId v = 0; v < a.target().size(); ++v) {
    const auto in = a.preimage(v);
    for (std::size_t p = 0; p < in.size(); ++p) {
      const std::pair<long, long> off{static_cast<long>(in[p] % 8) - static_cast<long>(v % 8),
                                      static_cast<long>(in[p] / 8) - static_cast<long>(v / 8)};
      auto [it, fresh] = by_offset.try_emplace(off, inh.slot[a.preimage_offset(v) + p]);
      EXPECT_EQ(it->second, inh.slot[a.preimage_offset(v) + p]);
    }
  }
  EXPECT_EQ(by_offset.size(), 9u);
}
