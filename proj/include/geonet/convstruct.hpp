#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "geonet/corr.hpp"
#include "geonet/error.hpp"
#include "geonet/generator.hpp"

namespace geonet {

/// A finite group acting on the source and target layers of an arrow.
/// Group elements are 0..order-1 with 0 the identity.
struct GroupAction {
  std::size_t order = 1;
  std::function<ElementId(std::size_t, ElementId)> on_source;
  std::function<ElementId(std::size_t, ElementId)> on_target;
};

inline GroupAction trivial_action() {
  auto id = [](std::size_t, ElementId v) { return v; };
  return {1, id, id};
}

/// Translations of Z/w x Z/h acting on two tori of the same shape.
inline GroupAction torus_translation(const Space& source, const Space& target) {
  detail::require(source.kind() == SpaceKind::Torus && source == target, "torus translation needs equal tori");
  const long w = source.width(), h = source.height();
  auto act = [w, h](std::size_t g, ElementId v) {
    const long gx = static_cast<long>(g) % w, gy = static_cast<long>(g) / w;
    const long x = (static_cast<long>(v) % w + gx) % w;
    const long y = (static_cast<long>(v) / w + gy) % h;
    return static_cast<ElementId>(y * w + x);
  };
  return {static_cast<std::size_t>(w * h), act, act};
}

/// Z/n rotating two unpointed circles mu_n.
inline GroupAction rotation(const Space& source, const Space& target) {
  detail::require(source.kind() == SpaceKind::Circle && source == target && !source.pointed(),
                  "rotation needs equal unpointed circles");
  const auto n = static_cast<ElementId>(source.roots());
  auto act = [n](std::size_t g, ElementId v) { return static_cast<ElementId>((v + g) % n); };
  return {n, act, act};
}

/// G x H acting on product layers (first factor major, like Space::product).
inline GroupAction product_action(const GroupAction& a, const GroupAction& b, std::size_t b_source_size,
                                  std::size_t b_target_size) {
  const auto bo = b.order;
  auto lift = [bo](auto fa, auto fb, std::size_t nb) {
    return [=](std::size_t g, ElementId v) {
      const auto nbe = static_cast<ElementId>(nb);
      return fa(g / bo, v / nbe) * nbe + fb(g % bo, v % nbe);
    };
  };
  return {a.order * b.order, lift(a.on_source, b.on_source, b_source_size),
          lift(a.on_target, b.on_target, b_target_size)};
}

/// Outcome of checking the transporter identities of a convolutional structure.
struct StructureReport {
  bool ok = true;
  std::string violation;
  std::vector<ElementId> witness;  // vertices involved in the first violation
};

/// Equivalence classes on the target layer of an arrow, with bijections
/// psi_(v,w): Gamma^-1(v) -> Gamma^-1(w) between equivalent vertices.
///
/// Canonical structures store psi through a base vertex per class:
/// psi_(v,w) = psi_(base,w) o psi_(v,base). `to_base` is indexed by inverse-CSR
/// edge offset: to_base[off(v) + p] is the position in Gamma^-1(base) of
/// psi_(v,base) applied to the p-th in-neighbor of v.
class ConvStructure {
 public:
  ConvStructure() = default;

  static ConvStructure canonical(Correspondence arrow, std::vector<std::uint32_t> class_of,
                                 std::vector<ElementId> bases, std::vector<std::uint32_t> to_base) {
    ConvStructure c;
    c.arrow_ = std::move(arrow);
    c.class_of_ = std::move(class_of);
    c.bases_ = std::move(bases);
    c.to_base_ = std::move(to_base);
    detail::require(c.class_of_.size() == c.arrow_.target().size(), "structure: class_of size mismatch");
    detail::require(c.to_base_.size() == c.arrow_.pair_count(), "structure: transporter table size mismatch");
    c.build_from_base();
    return c;
  }

  /// Structure given by explicit pairwise transporters. `psi[(v, w)][p]` is the
  /// position in Gamma^-1(w) of the image of the p-th in-neighbor of v.
  /// Unlisted pairs of equivalent distinct vertices count as undefined.
  static ConvStructure pairwise(Correspondence arrow, std::vector<std::uint32_t> class_of,
                                std::map<std::pair<ElementId, ElementId>, std::vector<std::uint32_t>> psi) {
    ConvStructure c;
    c.arrow_ = std::move(arrow);
    c.class_of_ = std::move(class_of);
    detail::require(c.class_of_.size() == c.arrow_.target().size(), "structure: class_of size mismatch");
    std::uint32_t nclass = 0;
    for (auto k : c.class_of_) nclass = std::max(nclass, k + 1);
    c.bases_.assign(nclass, static_cast<ElementId>(-1));
    for (ElementId v = 0; v < c.class_of_.size(); ++v)
      if (c.bases_[c.class_of_[v]] == static_cast<ElementId>(-1)) c.bases_[c.class_of_[v]] = v;
    c.explicit_ = std::move(psi);
    return c;
  }

  const Correspondence& arrow() const { return arrow_; }
  std::size_t class_count() const { return bases_.size(); }
  std::uint32_t class_of(ElementId v) const { return class_of_[v]; }
  ElementId base(std::uint32_t c) const { return bases_[c]; }
  std::size_t slots_in_class(std::uint32_t c) const { return arrow_.preimage(bases_[c]).size(); }
  bool is_canonical() const { return !explicit_.has_value(); }

  std::vector<ElementId> members(std::uint32_t c) const {
    std::vector<ElementId> out;
    for (ElementId v = 0; v < class_of_.size(); ++v)
      if (class_of_[v] == c) out.push_back(v);
    return out;
  }

  /// Position in Gamma^-1(base(class(v))) of psi_(v,base) applied to the p-th in-neighbor of v.
  std::uint32_t to_base(ElementId v, std::size_t p) const { return to_base_[arrow_.preimage_offset(v) + p]; }

  /// Position in Gamma^-1(w) of psi_(v,w) applied to the p-th in-neighbor of v, if defined.
  std::optional<std::uint32_t> transport(ElementId v, ElementId w, std::size_t p) const {
    if (class_of_[v] != class_of_[w]) return std::nullopt;
    if (v == w) return static_cast<std::uint32_t>(p);
    if (explicit_) {
      auto it = explicit_->find({v, w});
      if (it == explicit_->end() || p >= it->second.size()) return std::nullopt;
      return it->second[p];
    }
    return from_base_[arrow_.preimage_offset(w) + to_base(v, p)];
  }

  /// Element form of transport: psi_(v,w)(u).
  std::optional<ElementId> transport_element(ElementId v, ElementId w, ElementId u) const {
    auto in_v = arrow_.preimage(v);
    auto it = std::lower_bound(in_v.begin(), in_v.end(), u);
    if (it == in_v.end() || *it != u) return std::nullopt;
    auto q = transport(v, w, static_cast<std::size_t>(it - in_v.begin()));
    if (!q || *q >= arrow_.preimage(w).size()) return std::nullopt;
    return arrow_.preimage(w)[*q];
  }

  /// Converts an explicit structure to base-vertex form after checking it.
  ConvStructure canonicalize() const {
    if (!explicit_) return *this;
    std::vector<std::uint32_t> tb(arrow_.pair_count());
    for (ElementId v = 0; v < class_of_.size(); ++v) {
      const ElementId b = bases_[class_of_[v]];
      const auto deg = arrow_.preimage(v).size();
      for (std::size_t p = 0; p < deg; ++p) {
        auto q = transport(v, b, p);
        if (!q) throw ValidationError("structure: transporter from " + std::to_string(v) + " to base undefined");
        tb[arrow_.preimage_offset(v) + p] = *q;
      }
    }
    return canonical(arrow_, class_of_, bases_, std::move(tb));
  }

 private:
  void build_from_base() {
    from_base_.assign(to_base_.size(), 0);
    for (ElementId v = 0; v < class_of_.size(); ++v) {
      const auto off = arrow_.preimage_offset(v);
      const auto deg = arrow_.preimage(v).size();
      const auto base_deg = arrow_.preimage(bases_[class_of_[v]]).size();
      if (deg != base_deg)
        throw ValidationError("structure: vertex " + arrow_.target().label(v) + " has in-degree " + std::to_string(deg) +
                              " but its class base has " + std::to_string(base_deg));
      std::vector<char> seen(deg, 0);
      for (std::size_t p = 0; p < deg; ++p) {
        const auto q = to_base_[off + p];
        if (q >= deg || seen[q])
          throw ValidationError("structure: transporter of vertex " + arrow_.target().label(v) + " is not a bijection");
        seen[q] = 1;
        from_base_[off + q] = static_cast<std::uint32_t>(p);
      }
    }
  }

  Correspondence arrow_;
  std::vector<std::uint32_t> class_of_;
  std::vector<ElementId> bases_;
  std::vector<std::uint32_t> to_base_;
  std::vector<std::uint32_t> from_base_;
  std::optional<std::map<std::pair<ElementId, ElementId>, std::vector<std::uint32_t>>> explicit_;
};

/// Every vertex in its own class.
inline ConvStructure trivial_structure(const Correspondence& arrow) {
  const auto n = arrow.target().size();
  std::vector<std::uint32_t> cls(n);
  std::vector<ElementId> bases(n);
  std::vector<std::uint32_t> tb(arrow.pair_count());
  for (ElementId v = 0; v < n; ++v) {
    cls[v] = v;
    bases[v] = v;
    const auto off = arrow.preimage_offset(v);
    for (std::size_t p = 0; p < arrow.preimage(v).size(); ++p) tb[off + p] = static_cast<std::uint32_t>(p);
  }
  return ConvStructure::canonical(arrow, std::move(cls), std::move(bases), std::move(tb));
}

/// Cayley structure of a free, edge-preserving action: classes are orbits,
/// transporters are group translations.
inline ConvStructure cayley_structure(const Correspondence& arrow, const GroupAction& action) {
  const auto ns = arrow.source().size(), nt = arrow.target().size();
  for (std::size_t g = 1; g < action.order; ++g) {
    for (ElementId v = 0; v < ns; ++v)
      if (action.on_source(g, v) == v)
        throw ValidationError("action is not free: group element " + std::to_string(g) + " fixes source vertex " +
                              arrow.source().label(v));
    for (ElementId v = 0; v < nt; ++v)
      if (action.on_target(g, v) == v)
        throw ValidationError("action is not free: group element " + std::to_string(g) + " fixes target vertex " +
                              arrow.target().label(v));
  }
  for (std::size_t g = 0; g < action.order; ++g)
    for (ElementId u = 0; u < ns; ++u)
      for (auto v : arrow.image(u))
        if (!arrow.contains(action.on_source(g, u), action.on_target(g, v)))
          throw ValidationError("action does not preserve edges: group element " + std::to_string(g) + " moves edge (" +
                                arrow.source().label(u) + "," + arrow.target().label(v) + ") off the relation");

  constexpr auto kUnset = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> cls(nt, kUnset);
  std::vector<ElementId> bases;
  std::vector<std::uint32_t> tb(arrow.pair_count());
  for (ElementId b = 0; b < nt; ++b) {
    if (cls[b] != kUnset) continue;
    const auto c = static_cast<std::uint32_t>(bases.size());
    bases.push_back(b);
    auto in_b = arrow.preimage(b);
    for (std::size_t g = 0; g < action.order; ++g) {
      const ElementId w = action.on_target(g, b);
      if (cls[w] != kUnset) continue;
      cls[w] = c;
      auto in_w = arrow.preimage(w);
      const auto off = arrow.preimage_offset(w);
      for (std::size_t q = 0; q < in_b.size(); ++q) {
        const ElementId u = action.on_source(g, in_b[q]);
        auto it = std::lower_bound(in_w.begin(), in_w.end(), u);
        tb[off + static_cast<std::size_t>(it - in_w.begin())] = static_cast<std::uint32_t>(q);
      }
    }
  }
  return ConvStructure::canonical(arrow, std::move(cls), std::move(bases), std::move(tb));
}

/// Restriction to a sub-feed-forward system: v ~0 w iff v ~ w and psi_(v,w) carries
/// the kept in-neighbors of v exactly onto the kept in-neighbors of w.
/// `sub` must be a restriction of a system whose arrow `layer` is the structure's arrow.
inline ConvStructure restrict_structure(const ConvStructure& c, const FeedForwardSystem& sub, int layer) {
  detail::require(sub.parent() != nullptr, "restrict_structure: system is not a restriction");
  detail::require(sub.parent()->arrow(layer) == c.arrow(), "restrict_structure: structure belongs to another arrow");
  const auto& parent_arrow = c.arrow();
  const auto& sub_arrow = sub.arrow(layer);
  const auto& src_ids = sub.parent_ids(layer - 1);
  const auto& tgt_ids = sub.parent_ids(layer);

  // Signature of a kept vertex: its class and the base positions its kept in-neighbors map to.
  std::map<std::pair<std::uint32_t, std::vector<std::uint32_t>>, std::uint32_t> key_to_class;
  std::vector<std::uint32_t> cls(tgt_ids.size());
  std::vector<ElementId> bases;
  std::vector<std::vector<std::uint32_t>> base_pos;  // per kept vertex: base positions of its kept in-neighbors
  base_pos.resize(tgt_ids.size());
  for (ElementId j = 0; j < tgt_ids.size(); ++j) {
    const ElementId pv = tgt_ids[j];
    auto parent_in = parent_arrow.preimage(pv);
    for (auto uj : sub_arrow.preimage(j)) {
      const ElementId pu = src_ids[uj];
      const auto p = static_cast<std::size_t>(std::lower_bound(parent_in.begin(), parent_in.end(), pu) - parent_in.begin());
      base_pos[j].push_back(c.to_base(pv, p));
    }
    auto sig = base_pos[j];
    std::sort(sig.begin(), sig.end());
    auto [it, fresh] = key_to_class.try_emplace({c.class_of(pv), std::move(sig)}, static_cast<std::uint32_t>(bases.size()));
    if (fresh) bases.push_back(j);
    cls[j] = it->second;
  }

  std::vector<std::uint32_t> tb(sub_arrow.pair_count());
  std::vector<std::map<std::uint32_t, std::uint32_t>> base_index(bases.size());
  for (std::size_t k = 0; k < bases.size(); ++k) {
    const auto& bp = base_pos[bases[k]];
    for (std::uint32_t p = 0; p < bp.size(); ++p) base_index[k][bp[p]] = p;
  }
  for (ElementId j = 0; j < tgt_ids.size(); ++j) {
    const auto off = sub_arrow.preimage_offset(j);
    const auto& index = base_index[cls[j]];
    for (std::size_t p = 0; p < base_pos[j].size(); ++p) tb[off + p] = index.at(base_pos[j][p]);
  }
  return ConvStructure::canonical(sub_arrow, std::move(cls), std::move(bases), std::move(tb));
}

/// Product structure on a product arrow: classes and transporters are componentwise.
inline ConvStructure product_structure(const ConvStructure& a, const ConvStructure& b) {
  const Correspondence arrow = product_corr(a.arrow(), b.arrow());
  const auto nbt = static_cast<ElementId>(b.arrow().target().size());
  const auto nt = arrow.target().size();
  std::vector<std::uint32_t> cls(nt);
  std::vector<ElementId> bases;
  for (std::uint32_t ca = 0; ca < a.class_count(); ++ca)
    for (std::uint32_t cb = 0; cb < b.class_count(); ++cb) bases.push_back(a.base(ca) * nbt + b.base(cb));
  std::vector<std::uint32_t> tb(arrow.pair_count());
  const auto ncb = static_cast<std::uint32_t>(b.class_count());
  for (ElementId v = 0; v < nt; ++v) {
    const ElementId va = v / nbt, vb = v % nbt;
    cls[v] = a.class_of(va) * ncb + b.class_of(vb);
    const auto deg_b = b.arrow().preimage(vb).size();
    const auto deg_a = a.arrow().preimage(va).size();
    const auto off = arrow.preimage_offset(v);
    for (std::size_t pa = 0; pa < deg_a; ++pa)
      for (std::size_t pb = 0; pb < deg_b; ++pb)
        tb[off + pa * deg_b + pb] = static_cast<std::uint32_t>(a.to_base(va, pa) * deg_b + b.to_base(vb, pb));
  }
  return ConvStructure::canonical(arrow, std::move(cls), std::move(bases), std::move(tb));
}

/// Checks psi_(v,w) = psi_(w,v)^-1, psi_(u,w) = psi_(v,w) o psi_(u,v), and bijectivity.
/// Pairs are checked exhaustively for classes up to 1000 vertices and triples up
/// to 100 vertices; larger classes are sampled with a fixed seed.
inline StructureReport validate(const ConvStructure& c, std::size_t samples = 20000) {
  const auto& arrow = c.arrow();
  std::mt19937_64 rng(0x5eed);
  auto fail = [](std::string msg, std::vector<ElementId> w) { return StructureReport{false, std::move(msg), std::move(w)}; };

  auto check_pair = [&](ElementId v, ElementId w) -> std::optional<StructureReport> {
    const auto deg = arrow.preimage(v).size();
    if (arrow.preimage(w).size() != deg)
      return fail("in-neighborhoods of equivalent vertices differ in size", {v, w});
    std::vector<char> hit(deg, 0);
    for (std::size_t p = 0; p < deg; ++p) {
      auto q = c.transport(v, w, p);
      if (!q) return fail("transporter undefined", {v, w});
      if (*q >= deg || hit[*q]) return fail("transporter is not a bijection", {v, w});
      hit[*q] = 1;
      auto back = c.transport(w, v, *q);
      if (!back || *back != p) return fail("psi(v,w) is not the inverse of psi(w,v)", {v, w});
    }
    return std::nullopt;
  };
  auto check_triple = [&](ElementId u, ElementId v, ElementId w) -> std::optional<StructureReport> {
    const auto deg = arrow.preimage(u).size();
    for (std::size_t p = 0; p < deg; ++p) {
      auto uv = c.transport(u, v, p);
      if (!uv) return fail("transporter undefined", {u, v});
      auto uvw = c.transport(v, w, *uv);
      auto uw = c.transport(u, w, p);
      if (!uvw || !uw || *uvw != *uw) return fail("cocycle identity fails", {u, v, w});
    }
    return std::nullopt;
  };

  for (std::uint32_t k = 0; k < c.class_count(); ++k) {
    const auto mem = c.members(k);
    const auto n = mem.size();
    if (n <= 1) continue;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    if (n <= 1000) {
      for (auto v : mem)
        for (auto w : mem)
          if (auto r = check_pair(v, w)) return *r;
    } else {
      for (std::size_t s = 0; s < samples; ++s)
        if (auto r = check_pair(mem[pick(rng)], mem[pick(rng)])) return *r;
    }
    if (n <= 100) {
      for (auto u : mem)
        for (auto v : mem)
          for (auto w : mem)
            if (auto r = check_triple(u, v, w)) return *r;
    } else {
      for (std::size_t s = 0; s < samples; ++s)
        if (auto r = check_triple(mem[pick(rng)], mem[pick(rng)], mem[pick(rng)])) return *r;
    }
  }
  return {};
}

/// Per-edge parameter slots of a structural arrow; edges are indexed by inverse-CSR offset.
struct EdgeSlots {
  Correspondence arrow;
  std::vector<std::uint32_t> slot;
  std::size_t count = 0;
  /// Representative vertex per tying class; its in-neighborhood order is the canonical slot order.
  std::vector<ElementId> class_bases;
  std::vector<std::uint32_t> class_of;
};

/// Slot assignment for a layer: structural slots tensored with (in-channel, out-channel).
struct TieMap {
  EdgeSlots structural;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  std::size_t slot_count() const { return structural.count * in_channels * out_channels; }
  /// Slot of the edge (c_in, x) -> (c_out, y), where `edge` is the structural edge offset.
  std::size_t slot(std::uint64_t edge, std::size_t c_in, std::size_t c_out) const {
    return (static_cast<std::size_t>(structural.slot[edge]) * in_channels + c_in) * out_channels + c_out;
  }
  /// Structural slots of a class in canonical in-neighborhood order of its base.
  std::vector<std::uint32_t> class_slots(std::uint32_t k) const {
    const ElementId b = structural.class_bases.at(k);
    const auto off = structural.arrow.preimage_offset(b);
    std::vector<std::uint32_t> out;
    for (std::size_t p = 0; p < structural.arrow.preimage(b).size(); ++p) out.push_back(structural.slot[off + p]);
    return out;
  }
};

/// Slots from a structure: class k owns slots_in_class(k) consecutive ids,
/// the edge (u, v) gets offset(class v) + to_base position.
inline EdgeSlots structure_slots(const ConvStructure& cs) {
  const ConvStructure c = cs.canonicalize();
  EdgeSlots out;
  out.arrow = c.arrow();
  std::vector<std::uint32_t> class_off(c.class_count() + 1, 0);
  for (std::uint32_t k = 0; k < c.class_count(); ++k)
    class_off[k + 1] = class_off[k] + static_cast<std::uint32_t>(c.slots_in_class(k));
  out.count = class_off.back();
  out.slot.resize(out.arrow.pair_count());
  out.class_of.resize(out.arrow.target().size());
  for (ElementId v = 0; v < out.arrow.target().size(); ++v) {
    const auto off = out.arrow.preimage_offset(v);
    out.class_of[v] = c.class_of(v);
    for (std::size_t p = 0; p < out.arrow.preimage(v).size(); ++p)
      out.slot[off + p] = class_off[c.class_of(v)] + c.to_base(v, p);
  }
  for (std::uint32_t k = 0; k < c.class_count(); ++k) out.class_bases.push_back(c.base(k));
  return out;
}

/// Parameter tying for a product of a complete channel factor with the structure's arrow.
inline TieMap tie_parameters(const ConvStructure& c, std::size_t in_channels, std::size_t out_channels) {
  detail::require(in_channels >= 1 && out_channels >= 1, "tie_parameters: channel counts must be positive");
  return {structure_slots(c), in_channels, out_channels};
}

/// Slots of the parent structure carried to a sub-system without refining classes:
/// boundary vertices reuse the parameters of the matching interior offsets.
inline EdgeSlots inherited_slots(const ConvStructure& parent, const FeedForwardSystem& sub, int layer) {
  const EdgeSlots full = structure_slots(parent);
  const auto& sub_arrow = sub.arrow(layer);
  const auto& src_ids = sub.parent_ids(layer - 1);
  const auto& tgt_ids = sub.parent_ids(layer);
  EdgeSlots out;
  out.arrow = sub_arrow;
  out.count = full.count;
  out.slot.resize(sub_arrow.pair_count());
  out.class_of.resize(tgt_ids.size());
  std::vector<std::size_t> best_deg(parent.class_count(), 0);
  out.class_bases.assign(parent.class_count(), 0);
  for (ElementId j = 0; j < tgt_ids.size(); ++j) {
    const ElementId pv = tgt_ids[j];
    auto parent_in = full.arrow.preimage(pv);
    const auto poff = full.arrow.preimage_offset(pv);
    const auto off = sub_arrow.preimage_offset(j);
    auto in_j = sub_arrow.preimage(j);
    for (std::size_t p = 0; p < in_j.size(); ++p) {
      const ElementId pu = src_ids[in_j[p]];
      const auto q = static_cast<std::size_t>(std::lower_bound(parent_in.begin(), parent_in.end(), pu) - parent_in.begin());
      out.slot[off + p] = full.slot[poff + q];
    }
    const auto k = parent.class_of(pv);
    out.class_of[j] = k;
    if (in_j.size() > best_deg[k]) {
      best_deg[k] = in_j.size();
      out.class_bases[k] = j;
    }
  }
  return out;
}

/// Slots for a product arrow from slots on its two factors.
inline EdgeSlots product_slots(const EdgeSlots& a, const EdgeSlots& b) {
  EdgeSlots out;
  out.arrow = product_corr(a.arrow, b.arrow);
  out.count = a.count * b.count;
  out.slot.resize(out.arrow.pair_count());
  const auto nbt = static_cast<ElementId>(b.arrow.target().size());
  const auto nt = out.arrow.target().size();
  out.class_of.resize(nt);
  const auto ncb = static_cast<std::uint32_t>(b.class_bases.size());
  for (ElementId v = 0; v < nt; ++v) {
    const ElementId va = v / nbt, vb = v % nbt;
    const auto deg_a = a.arrow.preimage(va).size(), deg_b = b.arrow.preimage(vb).size();
    const auto off = out.arrow.preimage_offset(v), offa = a.arrow.preimage_offset(va), offb = b.arrow.preimage_offset(vb);
    for (std::size_t pa = 0; pa < deg_a; ++pa)
      for (std::size_t pb = 0; pb < deg_b; ++pb)
        out.slot[off + pa * deg_b + pb] =
            static_cast<std::uint32_t>(a.slot[offa + pa] * b.count + b.slot[offb + pb]);
    out.class_of[v] = a.class_of[va] * ncb + b.class_of[vb];
  }
  for (auto ba : a.class_bases)
    for (auto bb : b.class_bases) out.class_bases.push_back(ba * nbt + bb);
  return out;
}

/// One slot per structural edge.
inline EdgeSlots untied_slots(const Correspondence& arrow) { return structure_slots(trivial_structure(arrow)); }

/// Fully tied (shared) slots for arrows whose every edge carries the same coefficient.
inline EdgeSlots single_slot(const Correspondence& arrow) {
  EdgeSlots out;
  out.arrow = arrow;
  out.count = 1;
  out.slot.assign(arrow.pair_count(), 0);
  out.class_of.assign(arrow.target().size(), 0);
  out.class_bases = {0};
  return out;
}

/// Grid window tying from translations of Z^2. The infinite plane is replaced by a
/// torus wide enough that wrapped neighborhoods never re-enter the window; the
/// Cayley structure there is then restricted to the window.
struct GridTying {
  ConvStructure structure;  // restricted structure on the window arrow
  ConvStructure parent;     // Cayley structure on the torus
  FeedForwardSystem window;  // window sub-system of the torus system
};

inline GridTying grid_translation_tying(const Space& grid, double radius) {
  detail::require(grid.kind() == SpaceKind::Grid, "grid tying needs a grid");
  const long margin = static_cast<long>(std::floor(radius + 1e-12)) + 1;
  const Space torus = Space::torus(grid.width() + 2 * margin, grid.height() + 2 * margin);
  const Correspondence torus_arrow = metric_corr(torus, radius);
  const ConvStructure cayley = cayley_structure(torus_arrow, torus_translation(torus, torus));
  FeedForwardSystem plane({torus, torus}, {torus_arrow});
  std::vector<ElementId> ids;
  for (long y = 0; y < grid.height(); ++y)
    for (long x = 0; x < grid.width(); ++x) ids.push_back(static_cast<ElementId>(y * torus.width() + x));
  FeedForwardSystem window = restrict(plane, {ids, ids});
  ConvStructure restricted = restrict_structure(cayley, window, 1);
  return {std::move(restricted), cayley, std::move(window)};
}

}  // namespace geonet
