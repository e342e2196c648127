#pragma once

#include <string>
#include <vector>

#include "geonet/corr.hpp"
#include "geonet/engine.hpp"
#include "geonet/generator.hpp"
#include "geonet/spaces.hpp"

namespace geonet {

/// How the channel factor connects across a pooling arrow.
enum class PoolChannels {
  Complete,  // C^c: the max runs over every channel of the window
  Diagonal,  // identity on channels: each channel is pooled separately
};

struct ImageNetSpec {
  long side = 28;          // input grid side
  long pool1_n = 1;        // first pooling window is [2x, 2x + pool1_n]
  std::vector<long> channels = {1, 64, 64, 32, 32, 64, 1};
  int classes = 10;
  PoolChannels pool_channels = PoolChannels::Complete;
};

/// Structural factor G_s -> G_s -> G_{s/2} -> G_{s/2} -> G_{s/4} -> X(1) -> X(classes).
inline Generator image_structural_factor(const ImageNetSpec& s) {
  const long a = s.side, b = (a + 1) / 2, c = (b + 1) / 2;
  const Space g0 = Space::grid(a, a), g2 = Space::grid(b, b), g4 = Space::grid(c, c);
  const Space x1 = Space::set(1), xo = Space::set(static_cast<std::size_t>(s.classes));
  std::vector<Space> layers = {g0, g0, g2, g2, g4, x1, xo};
  std::vector<Correspondence> arrows = {metric_corr(g0, 1.0), grid_pooling(0, s.pool1_n, 2, g0, g2), metric_corr(g2, 1.0),
                                        grid_pooling(0, 1, 2, g2, g4), complete(g4, x1), complete(x1, xo)};
  return Generator(std::move(layers), std::move(arrows), "structural");
}

/// F^c: complete factor of the channel type, with pooling arrows optionally diagonal.
inline Generator image_channel_factor(const ImageNetSpec& s) {
  detail::require(s.channels.size() == 7, "image network channel type needs 7 entries");
  if (s.pool_channels == PoolChannels::Complete) return make_complete_generator(s.channels, "channels");
  std::vector<Space> layers;
  for (auto k : s.channels) {
    if (k < 1) throw ValidationError("channel counts must be >= 1");
    layers.push_back(Space::set(static_cast<std::size_t>(k)));
  }
  std::vector<Correspondence> arrows;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (i == 1 || i == 3) {
      if (layers[i].size() != layers[i + 1].size())
        throw ValidationError("diagonal pooling needs equal channel counts on both sides");
      arrows.push_back(identity(layers[i]));
    } else {
      arrows.push_back(complete(layers[i], layers[i + 1]));
    }
  }
  return Generator(std::move(layers), std::move(arrows), "channels");
}

inline Generator mnist_generator(PoolChannels pool = PoolChannels::Complete) {
  ImageNetSpec s;
  s.pool_channels = pool;
  return product_generator(image_channel_factor(s), image_structural_factor(s));
}

inline Generator cifar_generator(PoolChannels pool = PoolChannels::Complete) {
  ImageNetSpec s;
  s.side = 32;
  s.pool1_n = 2;
  s.pool_channels = pool;
  return product_generator(image_channel_factor(s), image_structural_factor(s));
}

/// (+,R,ReLU), (max,{1},id), (+,R,ReLU), (max,{1},id), (+,R,ReLU), (+,R,exp).
inline std::vector<Activator> image_activation() {
  const Activator conv{Semigroup::Sum, CoefficientDomain::AllReals, Cutoff::ReLU};
  const Activator pool{Semigroup::Max, CoefficientDomain::One, Cutoff::Identity};
  const Activator out{Semigroup::Sum, CoefficientDomain::AllReals, Cutoff::Exp};
  return {conv, pool, conv, pool, conv, out};
}

}  // namespace geonet
