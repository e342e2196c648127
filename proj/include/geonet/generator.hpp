#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geonet/corr.hpp"
#include "geonet/error.hpp"
#include "geonet/spaces.hpp"

namespace geonet {

/// A functor I_r -> Cor: spaces F(0..r) and arrows theta_i : F(i-1) -> F(i).
///
/// Products remember their atomic factors so that downstream code can see the
/// complete x structural decomposition of each arrow.
class Generator {
 public:
  Generator() = default;

  Generator(std::vector<Space> layers, std::vector<Correspondence> arrows, std::string name = {})
      : layers_(std::move(layers)), arrows_(std::move(arrows)), name_(std::move(name)) {
    detail::require(!layers_.empty(), "generator needs at least one layer");
    detail::require(arrows_.size() + 1 == layers_.size(), "generator needs exactly one arrow per consecutive layer pair");
    for (std::size_t i = 0; i < arrows_.size(); ++i) {
      if (!(arrows_[i].source() == layers_[i]) || !(arrows_[i].target() == layers_[i + 1]))
        throw ValidationError("arrow " + std::to_string(i + 1) + " does not connect " + layers_[i].name() + " -> " +
                              layers_[i + 1].name());
    }
  }

  int depth() const { return static_cast<int>(arrows_.size()); }
  const Space& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
  /// theta_i : F(i-1) -> F(i), for 1 <= i <= depth().
  const Correspondence& arrow(int i) const { return arrows_.at(static_cast<std::size_t>(i - 1)); }
  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  bool is_product() const { return !factors_.empty(); }

  /// Atomic factors in product order; an atomic generator is its own only factor.
  std::vector<Generator> atomic_factors() const {
    if (factors_.empty()) return {*this};
    return factors_;
  }

  /// [#F(0), ..., #F(r)] when every arrow is complete.
  std::optional<std::vector<std::size_t>> complete_type() const {
    for (const auto& a : arrows_)
      if (a.pair_count() != a.source().size() * a.target().size()) return std::nullopt;
    return layer_sizes();
  }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers_) out.push_back(l.size());
    return out;
  }

  friend Generator product_generator(const Generator& f, const Generator& g);

 private:
  std::vector<Space> layers_;
  std::vector<Correspondence> arrows_;
  std::string name_;
  std::vector<Generator> factors_;
};

/// Complete generator of the given type: abstract sets X(k_i) joined by complete arrows.
inline Generator make_complete_generator(const std::vector<long>& type, std::string name = {}) {
  detail::require(!type.empty(), "complete generator type must be nonempty");
  std::vector<Space> layers;
  for (auto k : type) {
    if (k < 1) throw ValidationError("complete generator type entries must be >= 1, got " + std::to_string(k));
    layers.push_back(Space::set(static_cast<std::size_t>(k)));
  }
  std::vector<Correspondence> arrows;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) arrows.push_back(complete(layers[i], layers[i + 1]));
  return Generator(std::move(layers), std::move(arrows), name);
}

/// Pointwise product on objects and product correspondences on arrows.
inline Generator product_generator(const Generator& f, const Generator& g) {
  if (f.depth() != g.depth())
    throw ValidationError("product of generators needs equal depth, got " + std::to_string(f.depth()) + " and " +
                          std::to_string(g.depth()));
  std::vector<Space> layers;
  std::vector<Correspondence> arrows;
  for (int i = 0; i <= f.depth(); ++i) layers.push_back(Space::product(f.layer(i), g.layer(i)));
  for (int i = 1; i <= f.depth(); ++i) arrows.push_back(product_corr(f.arrow(i), g.arrow(i)));
  Generator out(std::move(layers), std::move(arrows),
                f.name().empty() || g.name().empty() ? std::string{} : f.name() + " x " + g.name());
  out.factors_ = f.atomic_factors();
  for (auto& h : g.atomic_factors()) out.factors_.push_back(std::move(h));
  return out;
}

/// Layered DAG: vertices are the disjoint union of the layers, edges only V_{i-1} -> V_i.
class FeedForwardSystem {
 public:
  FeedForwardSystem(std::vector<Space> layers, std::vector<Correspondence> arrows)
      : layers_(std::move(layers)), arrows_(std::move(arrows)) {
    detail::require(arrows_.size() + 1 == layers_.size(), "feed-forward system: layer/arrow count mismatch");
    for (std::size_t i = 0; i < arrows_.size(); ++i) {
      detail::require(arrows_[i].source() == layers_[i] && arrows_[i].target() == layers_[i + 1],
                      "feed-forward system: arrow " + std::to_string(i + 1) + " endpoints mismatch");
      const auto& a = arrows_[i];
      for (ElementId v = 0; v < a.target().size(); ++v)
        if (a.preimage(v).empty())
          throw ValidationError("vertex " + a.target().label(v) + " of layer " + std::to_string(i + 1) +
                                " has no incoming edge");
    }
  }

  int depth() const { return static_cast<int>(arrows_.size()); }
  const Space& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
  std::size_t layer_size(int i) const { return layer(i).size(); }
  /// Edges from layer i-1 into layer i.
  const Correspondence& arrow(int i) const { return arrows_.at(static_cast<std::size_t>(i - 1)); }

  /// Gamma^-1(v) for v in layer i >= 1, as ids in layer i-1.
  std::span<const ElementId> in_neighbors(int i, ElementId v) const { return arrow(i).preimage(v); }
  /// Gamma(v) for v in layer i < depth, as ids in layer i+1.
  std::span<const ElementId> out_neighbors(int i, ElementId v) const { return arrow(i + 1).image(v); }

  std::size_t vertex_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.size();
    return n;
  }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& a : arrows_) n += a.pair_count();
    return n;
  }

  const std::optional<Generator>& generator() const { return generator_; }

  /// Set for sub-systems: the system this was restricted from and the kept ids per layer.
  const FeedForwardSystem* parent() const { return parent_.get(); }
  const std::vector<ElementId>& parent_ids(int i) const { return parent_ids_.at(static_cast<std::size_t>(i)); }

  friend FeedForwardSystem realize(const Generator& f);
  friend FeedForwardSystem restrict(const FeedForwardSystem& s, std::vector<std::vector<ElementId>> keep);

 private:
  std::vector<Space> layers_;
  std::vector<Correspondence> arrows_;
  std::optional<Generator> generator_;
  std::shared_ptr<const FeedForwardSystem> parent_;
  std::vector<std::vector<ElementId>> parent_ids_;
};

/// Vertex set is the disjoint union of F(i); (v, w) is an edge iff w is one layer
/// above v and (v, w) lies in the connecting arrow. Non-surjective arrows are refused.
inline FeedForwardSystem realize(const Generator& f) {
  std::vector<Space> layers;
  std::vector<Correspondence> arrows;
  for (int i = 0; i <= f.depth(); ++i) layers.push_back(f.layer(i));
  for (int i = 1; i <= f.depth(); ++i) {
    const auto& a = f.arrow(i);
    for (ElementId v = 0; v < a.target().size(); ++v)
      if (a.preimage(v).empty())
        throw ValidationError("arrow " + std::to_string(i) + " is not surjective: vertex " + a.target().label(v) +
                              " of layer " + std::to_string(i) + " has no preimage");
    arrows.push_back(a);
  }
  FeedForwardSystem s(std::move(layers), std::move(arrows));
  s.generator_ = f;
  return s;
}

/// Induced sub-system on the kept vertices (sorted, unique ids per layer).
/// Every kept non-initial vertex must keep at least one in-edge.
inline FeedForwardSystem restrict(const FeedForwardSystem& s, std::vector<std::vector<ElementId>> keep) {
  detail::require(keep.size() == static_cast<std::size_t>(s.depth() + 1), "restrict: need one keep set per layer");
  std::vector<Space> layers;
  for (int i = 0; i <= s.depth(); ++i) {
    auto& k = keep[static_cast<std::size_t>(i)];
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
    if (k.empty()) throw ValidationError("restrict: layer " + std::to_string(i) + " keeps no vertices");
    layers.push_back(Space::subspace(s.layer(i), k));
  }
  std::vector<Correspondence> arrows;
  for (int i = 1; i <= s.depth(); ++i) {
    auto a = restrict_corr(s.arrow(i), layers[static_cast<std::size_t>(i - 1)], layers[static_cast<std::size_t>(i)]);
    for (ElementId v = 0; v < a.target().size(); ++v)
      if (a.preimage(v).empty())
        throw ValidationError("restrict: vertex " + a.target().label(v) + " of layer " + std::to_string(i) +
                              " loses all incoming edges");
    arrows.push_back(std::move(a));
  }
  FeedForwardSystem out(std::move(layers), std::move(arrows));
  out.parent_ = std::make_shared<FeedForwardSystem>(s);
  out.parent_ids_ = std::move(keep);
  return out;
}

enum class LayerKind { FullyConnected, GridConvolutional, Pooling, Other };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::FullyConnected: return "FullyConnected";
    case LayerKind::GridConvolutional: return "GridConvolutional";
    case LayerKind::Pooling: return "Pooling";
    case LayerKind::Other: return "Other";
  }
  return "?";
}

/// Matches theta_i against C^c, C^c x C_d(r) over grids, and C^c x pi^2(m,n,N).
inline LayerKind classify_layer(const Generator& f, int i) {
  detail::require(i >= 1 && i <= f.depth(), "classify_layer: layer index out of range");
  auto full = [](const Correspondence& a) { return a.pair_count() == a.source().size() * a.target().size(); };
  if (full(f.arrow(i))) return LayerKind::FullyConnected;

  std::vector<const CorrInfo*> leaves;
  std::vector<Generator> factors = f.atomic_factors();
  for (const auto& g : factors) {
    const auto& a = g.arrow(i);
    if (full(a)) continue;
    std::vector<const CorrInfo*> parts;
    a.info().flatten_into(parts);
    for (const auto* p : parts)
      if (p->kind != CorrKind::Complete) leaves.push_back(p);
  }
  if (leaves.size() == 1) {
    const auto* p = leaves.front();
    if (p->kind == CorrKind::Metric && p->on == SpaceKind::Grid) return LayerKind::GridConvolutional;
    if (p->kind == CorrKind::GridPooling) return LayerKind::Pooling;
  }
  if (leaves.size() == 2 && leaves[0]->kind == CorrKind::Pooling && leaves[1]->kind == CorrKind::Pooling &&
      leaves[0]->m == leaves[1]->m && leaves[0]->n == leaves[1]->n && leaves[0]->stride == leaves[1]->stride)
    return LayerKind::Pooling;
  return LayerKind::Other;
}

}  // namespace geonet
