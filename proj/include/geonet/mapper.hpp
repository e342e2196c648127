#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "geonet/corr.hpp"
#include "geonet/error.hpp"
#include "geonet/generator.hpp"
#include "geonet/spaces.hpp"
#include "geonet/tda.hpp"

namespace geonet {

/// Per-filter (length, stride) pairs.
struct CoverSpec {
  std::vector<std::pair<double, double>> ls;

  void validate() const {
    detail::require(!ls.empty(), "cover needs at least one filter");
    for (std::size_t i = 0; i < ls.size(); ++i) {
      const auto [l, s] = ls[i];
      if (!(s > 0.0) || !(l > s))
        throw ValidationError("cover " + std::to_string(i) + " needs l > s > 0, got l=" + std::to_string(l) +
                              " s=" + std::to_string(s));
    }
  }
  friend bool operator==(const CoverSpec&, const CoverSpec&) = default;
};

/// (l, s) -> (2l, 2s) for every filter.
inline CoverSpec double_cover(const CoverSpec& c) {
  CoverSpec out = c;
  for (auto& [l, s] : out.ls) {
    l *= 2.0;
    s *= 2.0;
  }
  return out;
}

struct CoverBin {
  long k = 0;
  double lo = 0.0, hi = 0.0;  // open interval (lo, hi)
  std::vector<std::size_t> members;
};

/// Nonempty intervals (ks - l/2, ks + l/2) of U(l, s) with their members, by increasing k.
inline std::vector<CoverBin> cover_1d(double l, double s, std::span<const double> values) {
  CoverSpec{{{l, s}}}.validate();
  std::vector<CoverBin> out;
  if (values.empty()) return out;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const auto k0 = static_cast<long>(std::floor((*mn - l / 2) / s));
  const auto k1 = static_cast<long>(std::ceil((*mx + l / 2) / s));
  for (long k = k0; k <= k1; ++k) {
    CoverBin b{k, static_cast<double>(k) * s - l / 2, static_cast<double>(k) * s + l / 2, {}};
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] > b.lo && values[i] < b.hi) b.members.push_back(i);
    if (!b.members.empty()) out.push_back(std::move(b));
  }
  return out;
}

/// Distance oracle over point indices.
using Metric = std::function<double(std::size_t, std::size_t)>;
/// Partition of the given point indices into blocks.
using Clusterer = std::function<std::vector<std::vector<std::size_t>>(const Metric&, const std::vector<std::size_t>&)>;

/// Single linkage cut at the first empty bin of a histogram of merge distances.
inline Clusterer single_linkage(std::size_t bins = 10) {
  return [bins](const Metric& d, const std::vector<std::size_t>& pts) -> std::vector<std::vector<std::size_t>> {
    const auto m = pts.size();
    if (m <= 1) return {pts};
    // Prim's minimum spanning tree over the complete graph.
    std::vector<double> best(m, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(m, 0);
    std::vector<char> in(m, 0);
    struct MstEdge {
      double len;
      std::size_t a, b;
    };
    std::vector<MstEdge> mst;
    std::size_t cur = 0;
    in[0] = 1;
    for (std::size_t step = 1; step < m; ++step) {
      std::size_t nxt = m;
      for (std::size_t j = 0; j < m; ++j) {
        if (in[j]) continue;
        const double dj = d(pts[cur], pts[j]);
        if (dj < best[j]) {
          best[j] = dj;
          from[j] = cur;
        }
        if (nxt == m || best[j] < best[nxt]) nxt = j;
      }
      in[nxt] = 1;
      mst.push_back({best[nxt], from[nxt], nxt});
      cur = nxt;
    }
    double lo = mst.front().len, hi = lo;
    for (const auto& e : mst) {
      lo = std::min(lo, e.len);
      hi = std::max(hi, e.len);
    }
    double cutoff = std::numeric_limits<double>::infinity();
    // Heights equal up to rounding count as one merge level.
    if (hi - lo > 1e-9 * hi) {
      const double width = (hi - lo) / static_cast<double>(bins);
      std::vector<std::size_t> count(bins, 0);
      for (const auto& e : mst) count[std::min(bins - 1, static_cast<std::size_t>((e.len - lo) / width))]++;
      for (std::size_t b = 0; b < bins; ++b)
        if (count[b] == 0) {
          cutoff = lo + width * static_cast<double>(b);
          break;
        }
    }
    detail::UnionFind uf(m);
    for (const auto& e : mst)
      if (e.len < cutoff) uf.unite(e.a, e.b);
    std::vector<std::vector<std::size_t>> blocks;
    std::vector<std::size_t> block_of(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto r = uf.find(i);
      if (block_of[r] == m) {
        block_of[r] = blocks.size();
        blocks.emplace_back();
      }
      blocks[block_of[r]].push_back(pts[i]);
    }
    for (auto& b : blocks) std::sort(b.begin(), b.end());
    return blocks;
  };
}

struct MapperNode {
  std::vector<std::size_t> members;  // sorted point indices
  std::vector<long> bin;             // cover index per filter
  std::size_t cluster = 0;           // block index within the bin
};

struct MapperModel {
  std::size_t point_count = 0;
  std::vector<MapperNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // v < w

  std::size_t size() const { return nodes.size(); }
  std::size_t node_size(std::size_t v) const { return nodes[v].members.size(); }

  /// Point -> nodes containing it.
  std::vector<std::vector<std::size_t>> membership() const {
    std::vector<std::vector<std::size_t>> out(point_count);
    for (std::size_t v = 0; v < nodes.size(); ++v)
      for (auto x : nodes[v].members) out[x].push_back(v);
    return out;
  }

  std::size_t component_count() const {
    detail::UnionFind uf(nodes.size());
    std::size_t c = nodes.size();
    for (const auto& [a, b] : edges) c -= uf.unite(a, b);
    return c;
  }
  /// First Betti number of the graph.
  std::size_t cycle_rank() const { return edges.size() + component_count() - nodes.size(); }
};

namespace detail {

inline std::vector<std::pair<std::size_t, std::size_t>> overlap_edges(const MapperModel& m) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (const auto& vs : m.membership())
    for (std::size_t i = 0; i < vs.size(); ++i)
      for (std::size_t j = i + 1; j < vs.size(); ++j) e.emplace_back(std::min(vs[i], vs[j]), std::max(vs[i], vs[j]));
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

}  // namespace detail

/// Mapper over n points with the given distance, filter values (one vector per filter) and cover.
inline MapperModel mapper(std::size_t n, const Metric& metric, const std::vector<std::vector<double>>& filters,
                          const CoverSpec& cover, const Clusterer& clusterer = single_linkage()) {
  if (n == 0) throw ValidationError("mapper needs a nonempty space");
  cover.validate();
  if (filters.size() != cover.ls.size())
    throw ValidationError("mapper has " + std::to_string(filters.size()) + " filters but " +
                          std::to_string(cover.ls.size()) + " cover pairs");
  for (const auto& f : filters) detail::require(f.size() == n, "filter length differs from the point count");

  std::vector<std::vector<CoverBin>> per_filter;
  for (std::size_t a = 0; a < filters.size(); ++a)
    per_filter.push_back(cover_1d(cover.ls[a].first, cover.ls[a].second, filters[a]));

  MapperModel out;
  out.point_count = n;
  // Product cells in lexicographic order of the per-filter bins.
  std::size_t cells = 1;
  for (const auto& bins : per_filter) cells *= bins.size();
  std::vector<std::size_t> pick(filters.size(), 0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t cell_id = 0; cell_id < cells; ++cell_id) {
    for (std::size_t a = filters.size(), rem = cell_id; a-- > 0;) {
      pick[a] = rem % per_filter[a].size();
      rem /= per_filter[a].size();
    }
    std::vector<std::size_t> cell;
    for (std::size_t a = 0; a < filters.size(); ++a)
      for (auto x : per_filter[a][pick[a]].members) count[x]++;
    for (std::size_t x = 0; x < n; ++x) {
      if (count[x] == filters.size()) cell.push_back(x);
      count[x] = 0;
    }
    if (cell.empty()) continue;
    std::vector<long> bin;
    for (std::size_t a = 0; a < filters.size(); ++a) bin.push_back(per_filter[a][pick[a]].k);
    auto blocks = clusterer(metric, cell);
    for (std::size_t c = 0; c < blocks.size(); ++c) {
      detail::require(!blocks[c].empty(), "clusterer returned an empty block");
      std::sort(blocks[c].begin(), blocks[c].end());
      out.nodes.push_back({std::move(blocks[c]), bin, c});
    }
  }
  out.edges = detail::overlap_edges(out);
  return out;
}

inline Metric cloud_metric(const PointCloud& x) {
  return [&x](std::size_t a, std::size_t b) { return x.distance(a, b); };
}
inline Metric space_metric(const Space& s) {
  return [s](std::size_t a, std::size_t b) { return s.distance(static_cast<ElementId>(a), static_cast<ElementId>(b)); };
}

/// Coordinate projections of a cloud, usable as filters.
inline std::vector<std::vector<double>> coordinate_filters(const PointCloud& x, std::vector<std::size_t> coords) {
  std::vector<std::vector<double>> out;
  for (auto c : coords) {
    detail::require(c < x.dim(), "filter coordinate out of range");
    std::vector<double> f(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) f[i] = x.point(i)[c];
    out.push_back(std::move(f));
  }
  return out;
}

/// Gamma(0..r), Gamma(i) built with the i-fold double of the base cover.
inline std::vector<MapperModel> model_sequence(std::size_t n, const Metric& metric,
                                               const std::vector<std::vector<double>>& filters, const CoverSpec& base,
                                               int r, const Clusterer& clusterer = single_linkage()) {
  detail::require(r >= 0, "model sequence length must be >= 0");
  std::vector<MapperModel> out;
  CoverSpec c = base;
  for (int i = 0; i <= r; ++i) {
    out.push_back(mapper(n, metric, filters, c, clusterer));
    c = double_cover(c);
  }
  return out;
}

inline Space mapper_space(const MapperModel& m, const std::string& name = "Gamma") { return Space::set(m.size(), name); }

/// epsilon: X -> V(Gamma), (x, v) iff x in X_v.
inline Correspondence augmentation_corr(const Space& x, const MapperModel& m, const Space& v) {
  detail::require(x.size() == m.point_count, "augmentation: point count mismatch");
  detail::require(v.size() == m.size(), "augmentation: vertex space size mismatch");
  std::vector<ElementPair> pairs;
  for (std::size_t n = 0; n < m.size(); ++n)
    for (auto p : m.nodes[n].members) pairs.emplace_back(static_cast<ElementId>(p), static_cast<ElementId>(n));
  return Correspondence::from_pairs(x, v, std::move(pairs), {.kind = CorrKind::Explicit});
}
inline Correspondence augmentation_corr(const Space& x, const MapperModel& m) {
  return augmentation_corr(x, m, mapper_space(m));
}

/// C(Gamma, Gamma'): (v, w) iff X_v and X'_w meet. Includes the diagonal when Gamma = Gamma'.
inline Correspondence inter_model_corr(const MapperModel& a, const MapperModel& b, const Space& va, const Space& vb) {
  if (a.point_count != b.point_count)
    throw ValidationError("inter-model correspondence needs models over the same points (" +
                          std::to_string(a.point_count) + " vs " + std::to_string(b.point_count) + ")");
  detail::require(va.size() == a.size() && vb.size() == b.size(), "inter-model: vertex space size mismatch");
  const auto mb = b.membership();
  std::vector<ElementPair> pairs;
  for (std::size_t v = 0; v < a.size(); ++v)
    for (auto x : a.nodes[v].members)
      for (auto w : mb[x]) pairs.emplace_back(static_cast<ElementId>(v), static_cast<ElementId>(w));
  return Correspondence::from_pairs(va, vb, std::move(pairs), {.kind = CorrKind::Explicit});
}
inline Correspondence inter_model_corr(const MapperModel& a, const MapperModel& b) {
  return inter_model_corr(a, b, mapper_space(a), mapper_space(b));
}

/// Graph correspondence of the Mapper graph (no diagonal).
inline Correspondence mapper_graph_corr(const MapperModel& m, const Space& v) {
  std::vector<ElementPair> e;
  for (const auto& [a, b] : m.edges) e.emplace_back(static_cast<ElementId>(a), static_cast<ElementId>(b));
  return graph_corr(v, e);
}

/// X -eps-> G0 -> G1 -> G1 -> G2 -> X(1) -> X(outcomes), arrows C(G(i), G(j)).
inline Generator mapper_structural_generator(const Space& x, const std::vector<MapperModel>& seq, std::size_t outcomes) {
  detail::require(seq.size() >= 3, "mapper generator needs Gamma(0), Gamma(1), Gamma(2)");
  detail::require(outcomes >= 1, "mapper generator needs at least one outcome");
  const Space g0 = mapper_space(seq[0], "Gamma0"), g1 = mapper_space(seq[1], "Gamma1"),
              g2 = mapper_space(seq[2], "Gamma2");
  const Space one = Space::set(1), out = Space::set(outcomes);
  std::vector<Space> layers = {x, g0, g1, g1, g2, one, out};
  std::vector<Correspondence> arrows = {augmentation_corr(x, seq[0], g0),     inter_model_corr(seq[0], seq[1], g0, g1),
                                        inter_model_corr(seq[1], seq[1], g1, g1), inter_model_corr(seq[1], seq[2], g1, g2),
                                        complete(g2, one),                     complete(one, out)};
  return Generator(std::move(layers), std::move(arrows), "mapper");
}

// ---------------------------------------------------------------------------
// Output.

/// Per-node mean of the member vectors.
inline std::vector<std::vector<double>> mean_vectors(const MapperModel& m, const PointCloud& x) {
  detail::require(x.size() == m.point_count, "mean vectors: cloud size differs from the model");
  std::vector<std::vector<double>> out;
  for (const auto& node : m.nodes) {
    std::vector<double> mean(x.dim(), 0.0);
    for (auto i : node.members) {
      const auto p = x.point(i);
      for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
    }
    for (double& v : mean) v /= static_cast<double>(node.members.size());
    out.push_back(std::move(mean));
  }
  return out;
}

inline nlohmann::json mapper_json(const MapperModel& m, const std::vector<std::vector<double>>& means = {}) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t v = 0; v < m.size(); ++v) {
    nlohmann::json n = {{"id", v}, {"size", m.node_size(v)}, {"bin", m.nodes[v].bin},
                        {"cluster", m.nodes[v].cluster}, {"members", m.nodes[v].members}};
    if (!means.empty()) n["mean"] = means[v];
    nodes.push_back(std::move(n));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : m.edges) edges.push_back({a, b});
  return {{"points", m.point_count}, {"nodes", nodes}, {"edges", edges}};
}

inline std::string mapper_dot(const MapperModel& m, const std::vector<std::vector<double>>& means = {}) {
  std::ostringstream os;
  os.precision(4);
  os << "graph mapper {\n  node [shape=circle];\n";
  for (std::size_t v = 0; v < m.size(); ++v) {
    os << "  n" << v << " [size=" << m.node_size(v) << ", width=" << 0.2 + 0.05 * std::sqrt(double(m.node_size(v)));
    if (!means.empty()) {
      os << ", label=\"";
      for (std::size_t k = 0; k < means[v].size(); ++k) os << (k ? " " : "") << means[v][k];
      os << "\"";
    }
    os << "];\n";
  }
  for (const auto& [a, b] : m.edges) os << "  n" << a << " -- n" << b << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace geonet
