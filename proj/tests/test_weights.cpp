#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geonet/presets.hpp"
#include "geonet/weights.hpp"

using namespace geonet;

namespace {

const Network& mnist_net() {
  static Network net = [] {
    auto n = Network::build(mnist_generator(), image_activation(), {});
    n.initialize(InitScheme::UniformScaled, 3);
    return n;
  }();
  return net;
}

}  // namespace

TEST(WeightVectors, MnistCounts) {
  const auto& net = mnist_net();
  const auto l1 = extract_weight_vectors(net, 1);
  EXPECT_EQ(l1.size(), 64u);
  EXPECT_EQ(l1.dim(), 9u);
  const auto l3 = extract_weight_vectors(net, 3);
  EXPECT_EQ(l3.size(), 64u * 32u);
  EXPECT_EQ(l3.dim(), 9u);
  // Edge classes of the 28x28 window have 6 in-edges each.
  const auto& s = *net.plan(1).slots;
  std::vector<std::size_t> six;
  for (std::size_t k = 0; k < s.class_bases.size(); ++k)
    if (s.arrow.preimage(s.class_bases[k]).size() == 6) six.push_back(k);
  ASSERT_EQ(six.size(), 4u);
  const auto e = extract_weight_vectors(net, 1, ClassSelector::only(six));
  EXPECT_EQ(e.size(), 4u * 64u);
  EXPECT_EQ(e.dim(), 6u);
  EXPECT_THROW(extract_weight_vectors(net, 1, ClassSelector::all()), ValidationError);
  EXPECT_THROW(extract_weight_vectors(net, 1, ClassSelector::only({99})), ValidationError);
  EXPECT_THROW(extract_weight_vectors(net, 2), ValidationError);
  EXPECT_THROW(extract_weight_vectors(net, 0), ValidationError);
  EXPECT_THROW(extract_weight_vectors(net, 7), ValidationError);
  EXPECT_THROW(extract_weight_vectors(net, std::vector<double>(10, 0.0), 1), ValidationError);
}

TEST(WeightVectors, ValuesFollowTheTieMap) {
  const auto& net = mnist_net();
  const auto& st = net.plan(3).structural;
  const Space g = st.target();
  const auto v = extract_weight_vectors(net, 3);
  const auto params = net.parameters();
  // Every interior vertex sees the same filter, in the same in-edge order.
  for (auto [x, y] : {std::pair{5L, 5L}, std::pair{1L, 12L}, std::pair{12L, 12L}}) {
    const auto yv = g.at(x, y);
    ASSERT_EQ(st.preimage(yv).size(), 9u);
    for (std::size_t c = 0; c < 64; c += 21)
      for (std::size_t o = 0; o < 32; o += 7)
        for (std::size_t e = 0; e < 9; ++e)
          EXPECT_EQ(v.point(c * 32 + o)[e], params[net.parameter_index(3, st.preimage_offset(yv) + e, c, o)]);
  }
}

TEST(WeightVectors, UntiedLayerIsRejected) {
  ImageNetSpec s;
  s.side = 6;
  s.channels = {1, 2, 2, 2, 2, 2, 1};
  Network::Options o;
  o.tie = TieMode::None;
  const auto net = Network::build(product_generator(image_channel_factor(s), image_structural_factor(s)),
                                  image_activation(), o);
  EXPECT_THROW(extract_weight_vectors(net, 1), ValidationError);
}

TEST(WeightCloud, NormalizeAndFilter) {
  const auto& net = mnist_net();
  const auto a = extract_weight_vectors(net, 3);
  const auto w = build_weight_cloud({a, a}, 15, 30.0);
  EXPECT_EQ(w.raw.size(), 2u * 2048u);
  EXPECT_EQ(w.normalized.size(), 2u * 2048u);
  EXPECT_EQ(w.filtered.size(), static_cast<std::size_t>(std::ceil(0.3 * 4096)));
  EXPECT_EQ(build_weight_cloud({a}, 15, 100.0).filtered, build_weight_cloud({a}, 15, 100.0).normalized);
  EXPECT_THROW(build_weight_cloud({}, 15, 30.0), ValidationError);

  auto zero = Network::build(mnist_generator(), image_activation(), {});
  zero.initialize(InitScheme::Zero, 1);
  EXPECT_THROW(build_weight_cloud({extract_weight_vectors(zero, 1)}, 3, 30.0), ValidationError);
  PointCloud mixed = extract_weight_vectors(zero, 1);
  mixed.append(extract_weight_vectors(net, 1));
  const auto m = build_weight_cloud({mixed}, 3, 100.0);
  EXPECT_EQ(m.dropped, 64u);
  EXPECT_EQ(m.normalized.size(), 64u);
  EXPECT_THROW(build_weight_cloud({extract_weight_vectors(net, 1)}, 64, 30.0), ValidationError);
}

TEST(Pca, LeadingAxisAndSign) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  PointCloud x(3);
  for (int i = 0; i < 200; ++i) {
    const double t = 3.0 * g(rng);
    const double p[3] = {-2.0 * t + 0.01 * g(rng), t + 0.01 * g(rng), 0.01 * g(rng)};
    x.push_back(p);
  }
  const auto f = pca_filters(x, 2);
  ASSERT_EQ(f.size(), 2u);
  // Axis (-2, 1, 0)/sqrt(5), flipped so the largest coordinate is positive.
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < 200; ++i) {
    mx += x.point(static_cast<std::size_t>(i))[0];
    my += x.point(static_cast<std::size_t>(i))[1];
  }
  mx /= 200;
  my /= 200;
  for (std::size_t i = 0; i < 200; ++i) {
    const double want = (2.0 * (x.point(i)[0] - mx) - (x.point(i)[1] - my)) / std::sqrt(5.0);
    EXPECT_NEAR(f[0][i], want, 0.05);
  }
  EXPECT_THROW(pca_filters(x, 0), ValidationError);
  EXPECT_THROW(pca_filters(x, 4), ValidationError);
  EXPECT_THROW(pca_filters(PointCloud(3), 1), ValidationError);
}

TEST(WeightMapper, CoverAndMeans) {
  const std::vector<std::vector<double>> f = {{0.0, 1.0, 3.0, 10.0}};
  const auto c = interval_cover(f, 10, 0.5);
  ASSERT_EQ(c.ls.size(), 1u);
  EXPECT_DOUBLE_EQ(c.ls[0].second, 1.0);
  EXPECT_DOUBLE_EQ(c.ls[0].first, 1.5);
  EXPECT_THROW(interval_cover(f, 0, 0.5), ValidationError);
  EXPECT_THROW(interval_cover(f, 10, 0.0), ValidationError);
  EXPECT_EQ(interval_cover({{2.0, 2.0}}, 10, 0.5).ls[0].second, 1.0);

  const auto w = build_weight_cloud({extract_weight_vectors(mnist_net(), 3)}, 15, 30.0);
  const auto m = weight_mapper(w.filtered, 2, 10, 0.5);
  EXPECT_GT(m.size(), 0u);
  const auto means = mean_patch_per_node(m, w.filtered);
  ASSERT_EQ(means.size(), m.size());
  for (const auto& v : means) EXPECT_EQ(v.size(), 9u);
  EXPECT_EQ(weight_mapper(w.filtered, 2, 10, 0.5).edges, m.edges);
}
