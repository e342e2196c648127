#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geonet/error.hpp"
#include "geonet/parallel.hpp"

namespace geonet {

/// Points of equal dimension, stored row by row.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::size_t dim) : dim_(dim) {}
  PointCloud(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
    detail::require(dim_ > 0, "point cloud dimension must be positive");
    detail::require(data_.size() % dim_ == 0, "point cloud data is not a multiple of the dimension");
    for (double v : data_)
      if (!std::isfinite(v)) throw ValidationError("point cloud holds a non-finite value");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ ? data_.size() / dim_ : 0; }
  bool empty() const { return size() == 0; }
  std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  const std::vector<double>& data() const { return data_; }

  void push_back(std::span<const double> p) {
    if (dim_ == 0) dim_ = p.size();
    detail::require(p.size() == dim_, "point dimension mismatch: expected " + std::to_string(dim_) + ", got " +
                                          std::to_string(p.size()));
    data_.insert(data_.end(), p.begin(), p.end());
  }
  void append(const PointCloud& other) {
    for (std::size_t i = 0; i < other.size(); ++i) push_back(other.point(i));
  }

  double distance(std::size_t a, std::size_t b) const {
    double s = 0.0;
    const double* p = data_.data() + a * dim_;
    const double* q = data_.data() + b * dim_;
    for (std::size_t k = 0; k < dim_; ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
    return std::sqrt(s);
  }

  PointCloud select(std::span<const std::size_t> idx) const {
    PointCloud out(dim_);
    out.data_.reserve(idx.size() * dim_);
    for (auto i : idx) out.data_.insert(out.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                                        data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_));
    return out;
  }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// delta_k(x): Euclidean distance from x to its k-th nearest other point.
inline std::vector<double> codensity(const PointCloud& x, std::size_t k) {
  if (k < 1 || k >= x.size())
    throw ValidationError("codensity needs 1 <= k < " + std::to_string(x.size()) + ", got k=" + std::to_string(k));
  std::vector<double> out(x.size());
  parallel_for(x.size(), [&](std::size_t i) {
    std::vector<double> d;
    d.reserve(x.size() - 1);
    for (std::size_t j = 0; j < x.size(); ++j)
      if (j != i) d.push_back(x.distance(i, j));
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    out[i] = d[k - 1];
  });
  return out;
}

/// Indices of the ceil(rho |X| / 100) points of lowest codensity, ties by index, in index order.
inline std::vector<std::size_t> density_filter_indices(const PointCloud& x, std::size_t k, double rho) {
  if (!(rho > 0.0 && rho <= 100.0)) throw ValidationError("density filter needs 0 < rho <= 100");
  if (x.empty()) return {};
  const auto keep = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(x.size()) / 100.0 - 1e-9));
  if (keep >= x.size()) {
    std::vector<std::size_t> all(x.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  const auto c = codensity(x, k);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

inline PointCloud density_filter(const PointCloud& x, std::size_t k, double rho) {
  return x.select(density_filter_indices(x, k, rho));
}

struct NormalizedPatches {
  PointCloud cloud;
  std::vector<std::size_t> kept;  // source index of each output point
  std::size_t dropped = 0;
};

constexpr double kPatchNormFloor = 1e-9;

/// Mean-centre each vector and scale it to unit Euclidean norm; near-constant vectors are dropped.
inline NormalizedPatches normalize_patches(const PointCloud& x) {
  detail::require(x.empty() || x.dim() >= 2, "normalize_patches needs dimension >= 2");
  NormalizedPatches out;
  out.cloud = PointCloud(x.dim());
  std::vector<double> v(x.dim());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = x.point(i);
    const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
    double norm = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = p[k] - mean;
      norm += v[k] * v[k];
    }
    norm = std::sqrt(norm);
    if (norm < kPatchNormFloor) {
      ++out.dropped;
      continue;
    }
    for (double& e : v) e /= norm;
    out.cloud.push_back(v);
    out.kept.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vietoris-Rips persistence in dimensions 0 and 1.

struct Bar {
  int dim = 0;
  double birth = 0.0;
  double death = std::numeric_limits<double>::infinity();

  double length() const { return death - birth; }
  friend bool operator==(const Bar&, const Bar&) = default;
};

struct Barcode {
  std::vector<Bar> bars;
  double max_scale = 0.0;

  std::vector<Bar> of_dim(int d) const {
    std::vector<Bar> out;
    for (const auto& b : bars)
      if (b.dim == d) out.push_back(b);
    return out;
  }
  /// Bars sorted by (dim, birth, death) for comparison.
  Barcode canonical() const {
    Barcode c = *this;
    std::sort(c.bars.begin(), c.bars.end(), [](const Bar& a, const Bar& b) {
      return std::tie(a.dim, a.birth, a.death) < std::tie(b.dim, b.birth, b.death);
    });
    return c;
  }
};

struct PersistenceLimits {
  std::size_t max_edges = 20'000'000;
  std::size_t max_triangles = 50'000'000;
};

/// 90th percentile of the pairwise distances.
inline double default_max_scale(const std::vector<double>& dist, std::size_t n) {
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(dist[i * n + j]);
  if (d.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(d.size()))) - 1;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  return d[k];
}

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (a < b) std::swap(a, b);
    parent[a] = b;
    return true;
  }
};

/// Symmetric difference of sorted index lists.
inline void xor_into(std::vector<std::uint32_t>& acc, const std::vector<std::uint32_t>& other, std::vector<std::uint32_t>& tmp) {
  tmp.clear();
  std::set_symmetric_difference(acc.begin(), acc.end(), other.begin(), other.end(), std::back_inserter(tmp));
  acc.swap(tmp);
}

}  // namespace detail

/// Persistence of the Rips filtration given by a full distance matrix (row-major n x n).
/// Simplices with value above max_scale are left out; classes alive there die at +inf.
/// Zero-length bars are not reported.
inline Barcode vr_persistence_matrix(const std::vector<double>& dist, std::size_t n, std::optional<double> max_scale = {},
                                     const PersistenceLimits& limits = {}) {
  detail::require(n >= 1, "vr_persistence needs at least one point");
  detail::require(dist.size() == n * n, "distance matrix has the wrong size");
  Barcode out;
  out.max_scale = max_scale ? *max_scale : default_max_scale(dist, n);

  struct Edge {
    double len;
    std::uint32_t a, b;
  };
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (dist[i * n + j] <= out.max_scale) {
        edges.push_back({dist[i * n + j], i, j});
        if (edges.size() > limits.max_edges)
          throw ResourceError("Rips complex exceeds the edge cap of " + std::to_string(limits.max_edges));
      }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.len, x.a, x.b) < std::tie(y.len, y.a, y.b);
  });

  // Dimension 0 by union-find; edges that close a cycle are the positive ones.
  detail::UnionFind uf(n);
  std::vector<char> positive(edges.size(), 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (uf.unite(edges[e].a, edges[e].b)) {
      if (edges[e].len > 0.0) out.bars.push_back({0, 0.0, edges[e].len});
    } else {
      positive[e] = 1;
    }
  }
  for (std::size_t v = 0; v < n; ++v)
    if (uf.find(v) == v) out.bars.push_back({0, 0.0, std::numeric_limits<double>::infinity()});

  // Dimension 1: reduce triangle boundaries in filtration order.
  std::vector<std::uint32_t> edge_index(n * n, std::numeric_limits<std::uint32_t>::max());
  for (std::uint32_t e = 0; e < edges.size(); ++e) {
    edge_index[edges[e].a * n + edges[e].b] = e;
    edge_index[edges[e].b * n + edges[e].a] = e;
  }
  struct Tri {
    double value;
    std::uint32_t e[3];  // sorted ascending, e[2] is the diameter edge
  };
  std::vector<Tri> tris;
  constexpr auto none = std::numeric_limits<std::uint32_t>::max();
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j) {
      const auto ij = edge_index[i * n + j];
      if (ij == none) continue;
      for (std::uint32_t k = j + 1; k < n; ++k) {
        const auto ik = edge_index[i * n + k], jk = edge_index[j * n + k];
        if (ik == none || jk == none) continue;
        Tri t{0.0, {ij, ik, jk}};
        std::sort(std::begin(t.e), std::end(t.e));
        t.value = edges[t.e[2]].len;
        tris.push_back(t);
        if (tris.size() > limits.max_triangles)
          throw ResourceError("Rips complex exceeds the triangle cap of " + std::to_string(limits.max_triangles));
      }
    }
  std::sort(tris.begin(), tris.end(), [](const Tri& x, const Tri& y) {
    return std::tie(x.value, x.e[2], x.e[1], x.e[0]) < std::tie(y.value, y.e[2], y.e[1], y.e[0]);
  });

  std::vector<std::vector<std::uint32_t>> reduced_by_pivot(edges.size());
  std::vector<char> killed(edges.size(), 0);
  std::vector<std::uint32_t> col, tmp;
  for (const auto& t : tris) {
    col.assign(std::begin(t.e), std::end(t.e));
    while (!col.empty() && !reduced_by_pivot[col.back()].empty()) detail::xor_into(col, reduced_by_pivot[col.back()], tmp);
    if (col.empty()) continue;
    const auto low = col.back();
    if (edges[low].len < t.value) out.bars.push_back({1, edges[low].len, t.value});
    killed[low] = 1;
    reduced_by_pivot[low] = col;
  }
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (positive[e] && !killed[e]) out.bars.push_back({1, edges[e].len, std::numeric_limits<double>::infinity()});
  return out;
}

inline std::vector<double> distance_matrix(const PointCloud& x) {
  const auto n = x.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i * n + j] = d[j * n + i] = x.distance(i, j);
  return d;
}

inline Barcode vr_persistence(const PointCloud& x, std::optional<double> max_scale = {},
                              const PersistenceLimits& limits = {}) {
  if (x.empty()) throw ValidationError("vr_persistence needs at least one point");
  return vr_persistence_matrix(distance_matrix(x), x.size(), max_scale, limits);
}

/// (beta_0, beta_1): bars with birth <= eps < death.
inline std::pair<std::size_t, std::size_t> betti_at_scale(const Barcode& b, double eps) {
  std::size_t b0 = 0, b1 = 0;
  for (const auto& bar : b.bars)
    if (bar.birth <= eps && eps < bar.death) (bar.dim == 0 ? b0 : b1)++;
  return {b0, b1};
}

// ---------------------------------------------------------------------------
// Output.

inline nlohmann::json barcode_json(const Barcode& b) {
  nlohmann::json bars = nlohmann::json::array();
  for (const auto& bar : b.canonical().bars)
    bars.push_back({{"dim", bar.dim}, {"birth", bar.birth}, {"death", std::isinf(bar.death) ? nlohmann::json() : nlohmann::json(bar.death)}});
  return bars;
}

inline Barcode barcode_from_json(const nlohmann::json& j) {
  Barcode b;
  for (const auto& e : j) {
    Bar bar;
    bar.dim = e.at("dim").get<int>();
    bar.birth = e.at("birth").get<double>();
    bar.death = e.at("death").is_null() ? std::numeric_limits<double>::infinity() : e.at("death").get<double>();
    b.bars.push_back(bar);
  }
  return b;
}

/// Two stacked panels of horizontal bars, dimension 0 on top.
inline std::string barcode_svg(const Barcode& b, double width = 600.0) {
  const auto c = b.canonical();
  double hi = c.max_scale;
  for (const auto& bar : c.bars) {
    if (std::isfinite(bar.death)) hi = std::max(hi, bar.death);
    hi = std::max(hi, bar.birth);
  }
  if (hi <= 0.0) hi = 1.0;
  const double left = 40.0, plot = width - left - 20.0, step = 4.0, gap = 30.0;
  auto x_of = [&](double v) { return left + plot * std::min(v, hi) / hi; };
  std::ostringstream body;
  double y = 20.0;
  for (int d = 0; d <= 1; ++d) {
    body << "<text x=\"4\" y=\"" << y + 10 << "\" font-size=\"12\">H" << d << "</text>\n";
    for (const auto& bar : c.bars) {
      if (bar.dim != d) continue;
      const double x2 = std::isinf(bar.death) ? left + plot : x_of(bar.death);
      body << "<line x1=\"" << x_of(bar.birth) << "\" y1=\"" << y << "\" x2=\"" << x2 << "\" y2=\"" << y
           << "\" stroke=\"" << (d == 0 ? "#1f4e9e" : "#b0302a") << "\" stroke-width=\"2\"/>\n";
      y += step;
    }
    y += gap;
  }
  body << "<line x1=\"" << left << "\" y1=\"" << y - gap / 2 << "\" x2=\"" << left + plot << "\" y2=\"" << y - gap / 2
       << "\" stroke=\"black\"/>\n<text x=\"" << left + plot - 40 << "\" y=\"" << y - gap / 2 + 14
       << "\" font-size=\"11\">" << hi << "</text>\n";
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << y << "\">\n"
      << body.str() << "</svg>\n";
  return svg.str();
}

inline void write_cloud_csv(std::ostream& os, const PointCloud& x) {
  os.precision(17);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = x.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) os << (k ? "," : "") << p[k];
    os << '\n';
  }
}

inline PointCloud read_cloud_csv(std::istream& is) {
  PointCloud x;
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<double> p;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        p.push_back(std::stod(cell));
      } catch (...) {
        throw ValidationError("point cloud CSV row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    x.push_back(p);
  }
  return x;
}

}  // namespace geonet
