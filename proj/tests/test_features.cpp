#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "geonet/features.hpp"
#include "geonet/presets.hpp"

using namespace geonet;

namespace {

std::vector<double> ramp(std::size_t w, std::size_t h, double ax, double ay) {
  std::vector<double> im(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) im[y * w + x] = ax * static_cast<double>(x) + ay * static_cast<double>(y);
  return im;
}

}  // namespace

TEST(LinearFilter, Values) {
  const auto f0 = linear_filter(0.0);
  const auto f90 = linear_filter(std::numbers::pi / 2);
  for (int j = -1; j <= 1; ++j)
    for (int i = -1; i <= 1; ++i) {
      const auto k = static_cast<std::size_t>((j + 1) * 3 + (i + 1));
      EXPECT_NEAR(f0[k], i, 1e-15);
      EXPECT_NEAR(f90[k], j, 1e-15);
    }
  const auto f = linear_filter(0.7);
  double s = 0.0;
  for (double v : f) s += v;
  EXPECT_NEAR(s, 0.0, 1e-14);
}

TEST(AngularFeature, Ramp) {
  const auto im = ramp(8, 6, 1.0, 0.0);
  EXPECT_NEAR(angular_feature(im, 8, 6, 3, 2, 0.0), 6.0, 1e-12);
  EXPECT_NEAR(angular_feature(im, 8, 6, 3, 2, std::numbers::pi), -6.0, 1e-12);
  EXPECT_NEAR(angular_feature(im, 8, 6, 3, 2, std::numbers::pi / 2), 0.0, 1e-12);
  EXPECT_NEAR(angular_feature(im, 8, 6, 3, 2, std::numbers::pi / 3), 3.0, 1e-12);
  const auto iy = ramp(8, 6, 0.0, 2.0);
  EXPECT_NEAR(angular_feature(iy, 8, 6, 1, 1, std::numbers::pi / 2), 12.0, 1e-12);
  EXPECT_THROW(angular_feature(im, 8, 6, 0, 2, 0.0), ValidationError);
  EXPECT_THROW(angular_feature(im, 8, 6, 7, 2, 0.0), ValidationError);
  EXPECT_THROW(angular_feature(im, 8, 6, 3, 5, 0.0), ValidationError);
  EXPECT_THROW(angular_feature(im, 7, 6, 3, 2, 0.0), ValidationError);
}

TEST(AugmentInput, Layout) {
  const auto im = ramp(5, 4, 1.0, 0.5);
  const AngularConfig cfg{8, true};
  const auto a = augment_input(im, 5, 4, cfg);
  ASSERT_EQ(a.size(), 5u * 4u * 9u);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      const std::size_t p = y * 5 + x;
      EXPECT_EQ(a[p * 9 + 8], im[p]);
      const bool border = x == 0 || y == 0 || x == 4 || y == 3;
      for (int t = 0; t < 8; ++t) {
        const double want = border ? 0.0
                                   : angular_feature(im, 5, 4, static_cast<long>(x), static_cast<long>(y),
                                                     2.0 * std::numbers::pi * t / 8);
        EXPECT_NEAR(a[p * 9 + static_cast<std::size_t>(t)], want, 1e-12);
      }
    }
  EXPECT_EQ(augment_input(im, 5, 4, AngularConfig{8, false}).size(), 5u * 4u * 8u);
  EXPECT_THROW(augment_input(std::vector<double>(4, 0.0), 2, 2, cfg), ValidationError);
}

TEST(AngularFactor, Shapes) {
  const auto c = angular_factor({AngularKind::Constant, 6, 16, true});
  EXPECT_EQ(c.depth(), 6);
  EXPECT_EQ(c.layer(0).size(), 17u);
  for (int i = 1; i <= 6; ++i) EXPECT_EQ(c.layer(i).size(), 1u);

  const auto m = angular_factor({AngularKind::Metric, 6, 16, false});
  EXPECT_EQ(m.layer(1).size(), 16u);
  EXPECT_EQ(m.arrow(1).pair_count(), 48u);

  const auto k = angular_factor({AngularKind::Complete, 6, 8, true});
  EXPECT_EQ(k.arrow(1).pair_count(), 81u);

  const auto p = angular_factor({AngularKind::Pooled, 6, 4, true});
  EXPECT_EQ(p.layer(0).size(), 17u);
  EXPECT_EQ(p.layer(2).size(), 9u);
  EXPECT_EQ(p.layer(4).size(), 5u);
  EXPECT_NO_THROW(realize(p));

  EXPECT_THROW(angular_factor({AngularKind::Pooled, 5, 4, true}), ValidationError);
  EXPECT_THROW(angular_factor({AngularKind::Constant, 6, 1, true}), ValidationError);
  EXPECT_THROW(angular_factor({AngularKind::Constant, 0, 4, true}), ValidationError);
}

TEST(AngularFactor, ProductNetworkInput) {
  ImageNetSpec s;
  s.side = 8;
  s.channels = {1, 3, 3, 2, 2, 3, 1};
  s.classes = 4;
  const auto g = product_generator(product_generator(image_channel_factor(s), image_structural_factor(s)),
                                   angular_factor({AngularKind::Constant, 6, 4, true}));
  const auto net = Network::build(g, image_activation(), {});
  EXPECT_EQ(net.layer_size(0), 64u * 5u);
  EXPECT_EQ(net.layer_parameter_count(1), 49u * 5u * 3u);
  EXPECT_EQ(net.layer_parameter_count(3), 49u * 3u * 2u);

  LabeledImageSet set;
  set.width = set.height = 8;
  set.classes = 4;
  set.images = {ramp(8, 8, 0.1, 0.02), ramp(8, 8, -0.05, 0.1)};
  set.labels = {1, 3};
  const auto ex = image_examples(set, 4);
  ASSERT_EQ(ex.inputs.cols(), 320);
  const auto aug = augment_input(set.images[1], 8, 8, AngularConfig{4, true});
  for (std::size_t p = 0; p < 64; ++p)
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(ex.inputs(1, static_cast<Eigen::Index>(p * 5 + t)), aug[p * 5 + t]);
  EXPECT_EQ(ex.labels, set.labels);
  EXPECT_EQ(net.forward(ex.inputs).layers.back().cols(), 4);

  const auto plain = image_examples(set);
  ASSERT_EQ(plain.inputs.cols(), 64);
  EXPECT_EQ(plain.inputs(0, 9), set.images[0][9]);
}

TEST(ImageExamples, ColourPlanes) {
  LabeledImageSet set;
  set.width = set.height = 4;
  set.channels = 3;
  set.classes = 2;
  std::vector<double> im(48);
  for (std::size_t k = 0; k < 48; ++k) im[k] = static_cast<double>(k);
  set.images = {im};
  set.labels = {0};
  const auto ex = image_examples(set);
  // Column c * pixels + p holds channel c of pixel p.
  EXPECT_EQ(ex.inputs(0, 16 + 5), im[5 * 3 + 1]);
  EXPECT_EQ(ex.inputs(0, 32 + 2), im[2 * 3 + 2]);
}
