#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "geonet/generator.hpp"
#include "geonet/mapper.hpp"
#include "oracles.hpp"

using namespace geonet;
using namespace geonet::oracle;

namespace {

PointCloud circle_points(std::size_t n) {
  PointCloud x(2);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    const double p[2] = {std::cos(t), std::sin(t)};
    x.push_back(p);
  }
  return x;
}

PointCloud random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  PointCloud x(dim);
  std::vector<double> p(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : p) v = g(rng);
    x.push_back(p);
  }
  return x;
}

void expect_mapper_properties(const MapperModel& m, const std::vector<std::vector<double>>& filters, const CoverSpec& c) {
  EXPECT_EQ(mapper_violations(m, filters, c), std::vector<std::string>{});
}

}  // namespace

TEST(Cover1d, BinsMatchOpenIntervals) {
  const std::vector<double> v = {-1.3, -0.2, 0.0, 0.25, 0.5, 0.77, 2.0};
  const double l = 0.6, s = 0.4;
  const auto bins = cover_1d(l, s, v);
  std::set<std::size_t> covered;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (b) EXPECT_LT(bins[b - 1].k, bins[b].k);
    EXPECT_DOUBLE_EQ(bins[b].lo, bins[b].k * s - l / 2);
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] > bins[b].lo && v[i] < bins[b].hi) want.push_back(i);
    EXPECT_EQ(bins[b].members, want);
    EXPECT_FALSE(want.empty());
    covered.insert(want.begin(), want.end());
  }
  EXPECT_EQ(covered.size(), v.size());
  // No nonempty interval is missing.
  for (long k = -10; k <= 10; ++k) {
    bool any = false;
    for (double x : v) any = any || (x > k * s - l / 2 && x < k * s + l / 2);
    const bool listed = std::any_of(bins.begin(), bins.end(), [&](const CoverBin& b) { return b.k == k; });
    EXPECT_EQ(any, listed) << k;
  }
  EXPECT_THROW(cover_1d(0.4, 0.4, v), ValidationError);
  EXPECT_THROW(cover_1d(0.4, 0.0, v), ValidationError);
  EXPECT_TRUE(cover_1d(1.0, 0.5, std::vector<double>{}).empty());
}

TEST(SingleLinkage, SeparatesClusters) {
  PointCloud x(1);
  for (double v : {0.0, 0.1, 0.2, 0.3, 5.0, 5.1, 5.2}) x.push_back(std::span<const double>(&v, 1));
  const auto blocks = single_linkage()(cloud_metric(x), {0, 1, 2, 3, 4, 5, 6});
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0], (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(blocks[1], (std::vector<std::size_t>{4, 5, 6}));
  // Equal merge heights: one block.
  EXPECT_EQ(single_linkage()(cloud_metric(x), {0, 1, 2}).size(), 1u);
  EXPECT_EQ(single_linkage()(cloud_metric(x), {6}), (std::vector<std::vector<std::size_t>>{{6}}));
}

TEST(Mapper, CircleGivesOneLoop) {
  const auto x = circle_points(120);
  const auto f = coordinate_filters(x, {0});
  const CoverSpec c{{{0.5, 0.3}}};
  const auto m = mapper(x.size(), cloud_metric(x), f, c);
  expect_mapper_properties(m, f, c);
  EXPECT_EQ(m.component_count(), 1u);
  EXPECT_EQ(m.cycle_rank(), 1u);
}

TEST(Mapper, PropertiesOnRandomClouds) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto x = random_cloud(80, 3, seed);
    const auto f = coordinate_filters(x, {0, 1});
    const CoverSpec c{{{0.8, 0.5}, {1.0, 0.6}}};
    expect_mapper_properties(mapper(x.size(), cloud_metric(x), f, c), f, c);
  }
}

TEST(Mapper, Errors) {
  const auto x = random_cloud(10, 2, 4);
  const auto f = coordinate_filters(x, {0});
  EXPECT_THROW(mapper(0, cloud_metric(x), {}, CoverSpec{{{1.0, 0.5}}}), ValidationError);
  EXPECT_THROW(mapper(x.size(), cloud_metric(x), f, CoverSpec{{{1.0, 0.5}, {1.0, 0.5}}}), ValidationError);
  EXPECT_THROW(mapper(x.size(), cloud_metric(x), f, CoverSpec{{{0.5, 1.0}}}), ValidationError);
}

TEST(Mapper, CorrespondencesFollowMembership) {
  const auto x = random_cloud(60, 2, 5);
  const auto f = coordinate_filters(x, {0});
  const auto seq = model_sequence(x.size(), cloud_metric(x), f, CoverSpec{{{0.6, 0.4}}}, 2);
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(double_cover(CoverSpec{{{0.6, 0.4}}}), (CoverSpec{{{1.2, 0.8}}}));

  const Space px = Space::set(x.size());
  const auto eps = augmentation_corr(px, seq[0]);
  for (std::size_t p = 0; p < x.size(); ++p)
    for (std::size_t v = 0; v < seq[0].size(); ++v) {
      const auto& mem = seq[0].nodes[v].members;
      const auto img = eps.image(static_cast<ElementId>(p));
      EXPECT_EQ(std::find(img.begin(), img.end(), v) != img.end(), std::binary_search(mem.begin(), mem.end(), p));
    }

  for (auto [a, b] : {std::pair{0, 1}, std::pair{1, 1}, std::pair{1, 2}}) {
    const auto& ma = seq[static_cast<std::size_t>(a)];
    const auto& mb = seq[static_cast<std::size_t>(b)];
    const auto c = inter_model_corr(ma, mb);
    for (std::size_t v = 0; v < ma.size(); ++v) {
      const auto img = c.image(static_cast<ElementId>(v));
      for (std::size_t w = 0; w < mb.size(); ++w)
        EXPECT_EQ(std::find(img.begin(), img.end(), w) != img.end(), meet(ma.nodes[v].members, mb.nodes[w].members));
    }
    if (a == b)
      for (std::size_t v = 0; v < ma.size(); ++v) EXPECT_TRUE(c.contains(static_cast<ElementId>(v), static_cast<ElementId>(v)));
  }

  const auto g = mapper_structural_generator(px, seq, 4);
  EXPECT_EQ(g.layer(1).size(), seq[0].size());
  EXPECT_EQ(g.layer(2).size(), seq[1].size());
  EXPECT_EQ(g.layer(4).size(), seq[2].size());
  EXPECT_NO_THROW(realize(g));
  EXPECT_THROW(mapper_structural_generator(px, {seq[0], seq[1]}, 4), ValidationError);

  const auto other = mapper(10, cloud_metric(x), {std::vector<double>(10, 0.0)}, CoverSpec{{{1.0, 0.5}}});
  EXPECT_THROW(inter_model_corr(seq[0], other), ValidationError);
}

TEST(Mapper, Output) {
  const auto x = circle_points(40);
  const auto f = coordinate_filters(x, {0});
  const auto m = mapper(x.size(), cloud_metric(x), f, CoverSpec{{{0.8, 0.5}}});
  const auto means = mean_vectors(m, x);
  ASSERT_EQ(means.size(), m.size());
  for (std::size_t v = 0; v < m.size(); ++v) {
    double sx = 0.0;
    for (auto p : m.nodes[v].members) sx += x.point(p)[0];
    EXPECT_NEAR(means[v][0], sx / static_cast<double>(m.node_size(v)), 1e-12);
  }
  const auto j = mapper_json(m, means);
  EXPECT_EQ(j["nodes"].size(), m.size());
  EXPECT_EQ(j["edges"].size(), m.edges.size());
  EXPECT_EQ(j["points"], 40);
  const auto dot = mapper_dot(m);
  EXPECT_EQ(dot.rfind("graph mapper {", 0), 0u);
}
