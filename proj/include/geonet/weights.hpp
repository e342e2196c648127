#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geonet/convstruct.hpp"
#include "geonet/engine.hpp"
#include "geonet/error.hpp"
#include "geonet/mapper.hpp"
#include "geonet/tda.hpp"

namespace geonet {

/// Which structural classes of a tied layer become weight vectors.
struct ClassSelector {
  enum class Mode { Interior, All, Explicit } mode = Mode::Interior;
  std::vector<std::size_t> classes;  // for Explicit

  static ClassSelector interior() { return {}; }
  static ClassSelector all() { return {Mode::All, {}}; }
  static ClassSelector only(std::vector<std::size_t> c) { return {Mode::Explicit, std::move(c)}; }
};

/// Classes of the layer's slot structure that the selector picks, by class index.
inline std::vector<std::size_t> selected_classes(const LayerPlan& p, const ClassSelector& sel) {
  const auto& s = *p.slots;
  auto slots_in = [&](std::size_t k) { return s.arrow.preimage(s.class_bases[k]).size(); };
  std::vector<std::size_t> out;
  switch (sel.mode) {
    case ClassSelector::Mode::Interior: {
      std::size_t widest = 0;
      for (std::size_t k = 0; k < s.class_bases.size(); ++k) widest = std::max(widest, slots_in(k));
      for (std::size_t k = 0; k < s.class_bases.size(); ++k)
        if (slots_in(k) == widest) out.push_back(k);
      break;
    }
    case ClassSelector::Mode::All:
      for (std::size_t k = 0; k < s.class_bases.size(); ++k) out.push_back(k);
      break;
    case ClassSelector::Mode::Explicit:
      for (auto k : sel.classes) {
        if (k >= s.class_bases.size())
          throw ValidationError("class " + std::to_string(k) + " out of range (layer has " +
                                std::to_string(s.class_bases.size()) + ")");
        out.push_back(k);
      }
      break;
  }
  for (auto k : out)
    if (slots_in(k) != slots_in(out.front()))
      throw ValidationError("selected classes have different slot counts (" + std::to_string(slots_in(k)) + " vs " +
                            std::to_string(slots_in(out.front())) + ")");
  return out;
}

/// One point per (class, in-channel, out-channel), holding the slot values over the class
/// base's in-edges in their canonical (row-major offset) order.
inline PointCloud extract_weight_vectors(const Network& net, std::span<const double> params, int layer,
                                         const ClassSelector& sel = ClassSelector::interior()) {
  if (layer < 1 || layer > net.depth()) throw ValidationError("layer " + std::to_string(layer) + " out of range");
  detail::require(params.size() == net.parameter_count(), "snapshot size differs from the network's parameter count");
  const auto& p = net.plan(layer);
  if (!p.has_params()) throw ValidationError("layer " + std::to_string(layer) + " has no free coefficients");
  const auto& s = *p.slots;
  if (s.class_bases.size() == s.arrow.target().size() && s.class_bases.size() > 1)
    throw ValidationError("layer " + std::to_string(layer) + " is untied; weight vectors need a tie map");
  const auto classes = selected_classes(p, sel);
  PointCloud out;
  std::vector<double> v;
  for (auto k : classes) {
    const auto base = s.class_bases[k];
    const auto off = s.arrow.preimage_offset(base);
    const auto deg = s.arrow.preimage(base).size();
    for (std::size_t c = 0; c < p.cin; ++c)
      for (std::size_t o = 0; o < p.cout; ++o) {
        v.clear();
        for (std::size_t e = 0; e < deg; ++e) v.push_back(params[p.param_offset + (s.slot[off + e] * p.cin + c) * p.cout + o]);
        out.push_back(v);
      }
  }
  return out;
}

inline PointCloud extract_weight_vectors(const Network& net, int layer, const ClassSelector& sel = ClassSelector::interior()) {
  return extract_weight_vectors(net, net.parameters(), layer, sel);
}

struct WeightCloud {
  PointCloud raw;         // concatenation over snapshots
  PointCloud normalized;  // after mean-centring and contrast normalization
  PointCloud filtered;    // after the codensity filter
  std::size_t dropped = 0;
};

/// Concatenate, normalize, then keep the densest rho percent (k-th neighbour codensity).
inline WeightCloud build_weight_cloud(const std::vector<PointCloud>& snapshots, std::size_t k, double rho) {
  if (snapshots.empty()) throw ValidationError("weight cloud needs at least one snapshot");
  WeightCloud w;
  for (const auto& s : snapshots) w.raw.append(s);
  auto n = normalize_patches(w.raw);
  w.normalized = std::move(n.cloud);
  w.dropped = n.dropped;
  if (w.normalized.empty()) throw ValidationError("no weight vectors survive normalization");
  if (rho >= 100.0) {
    w.filtered = w.normalized;
  } else {
    if (k >= w.normalized.size())
      throw ValidationError("codensity k=" + std::to_string(k) + " needs more than " +
                            std::to_string(w.normalized.size()) + " points");
    w.filtered = density_filter(w.normalized, k, rho);
  }
  return w;
}

/// Mean vector of the members of each Mapper node.
inline std::vector<std::vector<double>> mean_patch_per_node(const MapperModel& m, const PointCloud& cloud) {
  return mean_vectors(m, cloud);
}

/// Projections onto the leading principal axes. Each axis is signed so its largest-magnitude
/// coordinate is positive, which keeps the filters deterministic.
inline std::vector<std::vector<double>> pca_filters(const PointCloud& x, std::size_t components) {
  const auto n = x.size(), d = x.dim();
  if (n == 0) throw ValidationError("pca of an empty cloud");
  if (components < 1 || components > d)
    throw ValidationError("pca components must be in 1.." + std::to_string(d) + ", got " + std::to_string(components));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x.point(i)[j];
  m.rowwise() -= m.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m);
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < components; ++c) {
    Eigen::VectorXd axis = es.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - c));
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis(big) < 0) axis = -axis;
    const Eigen::VectorXd proj = m * axis;
    out.emplace_back(proj.data(), proj.data() + proj.size());
  }
  return out;
}

/// Per filter: s = range / intervals, l = s * (1 + overlap).
inline CoverSpec interval_cover(const std::vector<std::vector<double>>& filters, std::size_t intervals, double overlap) {
  if (intervals < 1) throw ValidationError("cover needs at least one interval");
  if (!(overlap > 0.0)) throw ValidationError("cover overlap must be positive");
  CoverSpec c;
  for (const auto& f : filters) {
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    double s = (*hi - *lo) / static_cast<double>(intervals);
    if (!(s > 0.0)) s = 1.0;
    c.ls.push_back({s * (1.0 + overlap), s});
  }
  return c;
}

/// Mapper over a weight cloud with PCA filters and single linkage.
inline MapperModel weight_mapper(const PointCloud& x, std::size_t components, std::size_t intervals, double overlap) {
  const auto f = pca_filters(x, components);
  return mapper(x.size(), cloud_metric(x), f, interval_cover(f, intervals, overlap), single_linkage());
}

}  // namespace geonet
