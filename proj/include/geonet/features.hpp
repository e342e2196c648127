#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "geonet/corr.hpp"
#include "geonet/data.hpp"
#include "geonet/engine.hpp"
#include "geonet/error.hpp"
#include "geonet/generator.hpp"
#include "geonet/spaces.hpp"

namespace geonet {

/// f_theta(x, y) = x cos(theta) + y sin(theta) on {-1,0,1}^2, row-major: index (j+1)*3 + (i+1).
inline std::array<double, 9> linear_filter(double theta) {
  std::array<double, 9> f{};
  for (int j = -1; j <= 1; ++j)
    for (int i = -1; i <= 1; ++i) f[static_cast<std::size_t>((j + 1) * 3 + (i + 1))] = i * std::cos(theta) + j * std::sin(theta);
  return f;
}

/// q_{m,n,theta}(p) = sum over L of p(m+i, n+j) f_theta(i, j), for a single-channel image.
inline double angular_feature(const std::vector<double>& image, std::size_t width, std::size_t height, long m, long n,
                              double theta) {
  detail::require(image.size() == width * height, "angular_feature: image size mismatch");
  if (m < 1 || n < 1 || m + 1 >= static_cast<long>(width) || n + 1 >= static_cast<long>(height))
    throw ValidationError("angular_feature: centre (" + std::to_string(m) + "," + std::to_string(n) +
                          ") is within one pixel of the border");
  const auto f = linear_filter(theta);
  double q = 0.0;
  for (int j = -1; j <= 1; ++j)
    for (int i = -1; i <= 1; ++i)
      q += image[static_cast<std::size_t>((n + j) * static_cast<long>(width) + (m + i))] *
           f[static_cast<std::size_t>((j + 1) * 3 + (i + 1))];
  return q;
}

struct AngularConfig {
  int n = 16;
  bool include_raw = true;

  std::size_t channels() const { return static_cast<std::size_t>(n) + (include_raw ? 1 : 0); }
};

/// Values on grid x (mu_n)_+, pixel-major: index pixel * channels + t, t = 0..n-1 for
/// theta = 2 pi t / n and t = n for the raw value. Border pixels carry 0 on the angular channels.
inline std::vector<double> augment_input(const std::vector<double>& image, std::size_t width, std::size_t height,
                                         const AngularConfig& cfg) {
  detail::require(cfg.n >= 2, "angular config needs n >= 2");
  if (width < 3 || height < 3) throw ValidationError("augment_input needs an image of at least 3x3");
  detail::require(image.size() == width * height, "augment_input: image size mismatch");
  const auto ch = cfg.channels();
  std::vector<std::array<double, 9>> filters;
  for (int t = 0; t < cfg.n; ++t) filters.push_back(linear_filter(2.0 * std::numbers::pi * t / cfg.n));
  std::vector<double> out(width * height * ch, 0.0);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      double* px = &out[(y * width + x) * ch];
      if (cfg.include_raw) px[cfg.n] = image[y * width + x];
      if (x == 0 || y == 0 || x + 1 == width || y + 1 == height) continue;
      std::array<double, 9> patch{};
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i)
          patch[static_cast<std::size_t>((j + 1) * 3 + (i + 1))] =
              image[static_cast<std::size_t>((static_cast<long>(y) + j) * static_cast<long>(width) + static_cast<long>(x) + i)];
      for (int t = 0; t < cfg.n; ++t) {
        double q = 0.0;
        for (std::size_t k = 0; k < 9; ++k) q += patch[k] * filters[static_cast<std::size_t>(t)][k];
        px[t] = q;
      }
    }
  return out;
}

enum class AngularKind { Constant, Complete, Metric, Pooled };

struct AngularFactorParams {
  AngularKind kind = AngularKind::Constant;
  int depth = 6;
  int n = 16;           // order of the input circle; for Pooled the input is mu_{4n}
  bool pointed = true;  // include the raw base point
};

/// Circle-valued structural factors for products with the image structural factor.
///   Constant: (mu_n)_+ -C^c-> X(1) -> ... -> X(1)
///   Complete: (mu_n)_+ -C^c-> (mu_n)_+ -C^c-> X(1) -> ... -> X(1)
///   Metric:   mu_n -C_d(xi_n)-> mu_n -C^c-> X(1) -> ... -> X(1)
///   Pooled:   (mu_4n)_+ -C_d-> (mu_4n)_+ -pi-> (mu_2n)_+ -C_d-> (mu_2n)_+ -pi-> (mu_n)_+ -C^c-> X(1) -> X(1)
inline Generator angular_factor(const AngularFactorParams& p) {
  if (p.n < 2) throw ValidationError("angular factor needs n >= 2, got " + std::to_string(p.n));
  if (p.depth < 1) throw ValidationError("angular factor needs depth >= 1");
  const Space one = Space::set(1);
  std::vector<Space> layers;
  std::vector<Correspondence> arrows;
  auto tail_to_depth = [&]() {
    while (static_cast<int>(arrows.size()) < p.depth) {
      arrows.push_back(complete(layers.back(), one));
      layers.push_back(one);
    }
  };
  switch (p.kind) {
    case AngularKind::Constant: {
      layers.push_back(Space::circle(p.n, p.pointed));
      tail_to_depth();
      break;
    }
    case AngularKind::Complete: {
      if (p.depth < 2) throw ValidationError("complete angular factor needs depth >= 2");
      const Space c = Space::circle(p.n, p.pointed);
      layers = {c, c};
      arrows.push_back(complete(c, c));
      tail_to_depth();
      break;
    }
    case AngularKind::Metric: {
      if (p.depth < 2) throw ValidationError("metric angular factor needs depth >= 2");
      const Space c = Space::circle(p.n, p.pointed);
      layers = {c, c};
      arrows.push_back(metric_corr(c, adjacent_root_distance(p.n)));
      tail_to_depth();
      break;
    }
    case AngularKind::Pooled: {
      if (p.depth != 6) throw ValidationError("pooled angular factor has depth 6, got " + std::to_string(p.depth));
      const Space c4 = Space::circle(4 * p.n, p.pointed), c2 = Space::circle(2 * p.n, p.pointed),
                  c1 = Space::circle(p.n, p.pointed);
      layers = {c4, c4, c2, c2, c1, one, one};
      arrows = {metric_corr(c4, adjacent_root_distance(4 * p.n)), angular_pooling(2, 2 * p.n, p.pointed),
                metric_corr(c2, adjacent_root_distance(2 * p.n)), angular_pooling(2, p.n, p.pointed), complete(c1, one),
                complete(one, one)};
      break;
    }
  }
  return Generator(std::move(layers), std::move(arrows), "angular");
}

/// Layer-0 vectors of an image set for the generator F^c x F^s x A with the constant angular factor.
inline std::vector<double> augmented_layer0(const LabeledImageSet& s, std::size_t i, const AngularConfig& cfg) {
  detail::require(s.channels == 1, "angular augmentation needs single-channel images");
  return augment_input(s.images[i], s.width, s.height, cfg);
}

/// Input rows for a network over F^c x F^s [x A]: vertex ((c * pixels) + p) * A + t, where A is
/// the angular channel count (1 when angular == 0).
inline Examples image_examples(const LabeledImageSet& s, int angular = 0) {
  const std::size_t px = s.width * s.height, ch = s.channels;
  AngularConfig cfg{angular, true};
  const std::size_t a = angular > 0 ? cfg.channels() : 1;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(s.images.size()), static_cast<Eigen::Index>(ch * px * a));
  std::vector<double> plane(px);
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    const auto& img = s.images[i];
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t p = 0; p < px; ++p) plane[p] = img[p * ch + c];
      if (angular > 0) {
        const auto aug = augment_input(plane, s.width, s.height, cfg);
        for (std::size_t k = 0; k < px * a; ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c * px * a + k)) = aug[k];
      } else {
        for (std::size_t p = 0; p < px; ++p) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c * px + p)) = plane[p];
      }
    }
  }
  return make_examples(std::move(x), s.labels, s.classes);
}

}  // namespace geonet
