#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "geonet/error.hpp"

namespace geonet {

/// Element ids are dense indices 0..size()-1.
using ElementId = std::uint32_t;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class SpaceKind {
  Set,        // abstract X(k), no metric
  Interval,   // integer window [lo, hi] of Z with |x - y|
  Grid,       // width x height window of Z^2 with L-infinity distance
  Torus,      // Z/w x Z/h with wrapped L-infinity distance
  Circle,     // n-th roots of unity, optionally pointed
  Product,    // ordered pairs, L-infinity product metric
  Subspace,   // subset of a parent space, inherited metric
  Euclidean,  // point cloud in R^p
  Matrix,     // explicit symmetric distance table
};

/// Chordal distance between adjacent n-th roots of unity, |1 - zeta_n|.
inline double adjacent_root_distance(int n) { return 2.0 * std::sin(std::numbers::pi / n); }

/// Immutable finite space. Copies share the underlying representation.
class Space {
 public:
  Space() : Space(std::make_shared<Rep>()) {}

  static Space set(std::size_t n, std::string name = {}) {
    detail::require(n >= 1, "set space must be nonempty");
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Set;
    r->size = n;
    r->name = name.empty() ? "X(" + std::to_string(n) + ")" : std::move(name);
    return Space(std::move(r));
  }

  static Space interval(long lo, long hi) {
    detail::require(lo <= hi, "interval requires lo <= hi");
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Interval;
    r->size = static_cast<std::size_t>(hi - lo + 1);
    r->ox = lo;
    r->width = static_cast<long>(r->size);
    r->height = 1;
    r->name = "[" + std::to_string(lo) + "," + std::to_string(hi) + "]";
    return Space(std::move(r));
  }

  static Space grid(long width, long height, long origin_x = 0, long origin_y = 0) {
    if (width < 1 || height < 1)
      throw ValidationError("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                            std::to_string(height));
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Grid;
    r->size = static_cast<std::size_t>(width * height);
    r->width = width;
    r->height = height;
    r->ox = origin_x;
    r->oy = origin_y;
    r->name = width == height ? "G_" + std::to_string(width)
                              : "G_" + std::to_string(width) + "x" + std::to_string(height);
    return Space(std::move(r));
  }

  static Space torus(long width, long height) {
    detail::require(width >= 1 && height >= 1, "torus dimensions must be positive");
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Torus;
    r->size = static_cast<std::size_t>(width * height);
    r->width = width;
    r->height = height;
    r->name = "T_" + std::to_string(width) + "x" + std::to_string(height);
    return Space(std::move(r));
  }

  /// mu_n, or (mu_n)_+ when pointed. The base point + has id n.
  static Space circle(int n, bool pointed) {
    if (n < 2) throw ValidationError("circle space needs n >= 2, got " + std::to_string(n));
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Circle;
    r->n = n;
    r->pointed = pointed;
    r->size = static_cast<std::size_t>(n) + (pointed ? 1 : 0);
    r->name = "mu_" + std::to_string(n) + (pointed ? "+" : "");
    return Space(std::move(r));
  }

  static Space product(const Space& a, const Space& b) {
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Product;
    r->size = a.size() * b.size();
    r->factors = {a, b};
    r->name = a.name() + " x " + b.name();
    return Space(std::move(r));
  }

  /// Subspace on the given parent ids (sorted, unique).
  static Space subspace(const Space& parent, std::vector<ElementId> ids) {
    detail::require(std::is_sorted(ids.begin(), ids.end()) &&
                        std::adjacent_find(ids.begin(), ids.end()) == ids.end(),
                    "subspace ids must be sorted and unique");
    for (auto id : ids) detail::require(id < parent.size(), "subspace id out of range");
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Subspace;
    r->size = ids.size();
    r->factors = {parent};
    r->ids = std::move(ids);
    r->name = "sub(" + parent.name() + ")";
    return Space(std::move(r));
  }

  /// Points stored row-major, `dim` coordinates each.
  static Space euclidean(std::shared_ptr<const std::vector<double>> coords, std::size_t dim) {
    detail::require(dim >= 1 && coords->size() % dim == 0, "euclidean space: bad coordinate layout");
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Euclidean;
    r->size = coords->size() / dim;
    r->dim = dim;
    r->coords = std::move(coords);
    r->name = "R^" + std::to_string(dim) + "[" + std::to_string(r->size) + "]";
    return Space(std::move(r));
  }

  /// Explicit distances, n*n row-major. Only symmetry and zero diagonal are checked here.
  static Space matrix(std::size_t n, std::vector<double> dist, std::string name = {}) {
    detail::require(n >= 1 && dist.size() == n * n, "matrix space: table must be n*n");
    for (std::size_t i = 0; i < n; ++i) {
      detail::require(dist[i * n + i] == 0.0, "matrix space: nonzero diagonal");
      for (std::size_t j = 0; j < i; ++j)
        detail::require(dist[i * n + j] == dist[j * n + i] && dist[i * n + j] >= 0.0,
                        "matrix space: table must be symmetric and nonnegative");
    }
    auto r = std::make_shared<Rep>();
    r->kind = SpaceKind::Matrix;
    r->size = n;
    r->table = std::move(dist);
    r->name = name.empty() ? "M(" + std::to_string(n) + ")" : std::move(name);
    return Space(std::move(r));
  }

  SpaceKind kind() const { return rep_->kind; }
  std::size_t size() const { return rep_->size; }
  const std::string& name() const { return rep_->name; }

  bool has_metric() const {
    switch (rep_->kind) {
      case SpaceKind::Set: return false;
      case SpaceKind::Product: return rep_->factors[0].has_metric() && rep_->factors[1].has_metric();
      case SpaceKind::Subspace: return rep_->factors[0].has_metric();
      default: return true;
    }
  }

  double distance(ElementId a, ElementId b) const {
    const Rep& r = *rep_;
    switch (r.kind) {
      case SpaceKind::Set:
        throw ValidationError("space " + r.name + " carries no metric");
      case SpaceKind::Interval:
        return std::abs(static_cast<double>(a) - static_cast<double>(b));
      case SpaceKind::Grid: {
        long ax = a % r.width, ay = a / r.width, bx = b % r.width, by = b / r.width;
        return static_cast<double>(std::max(std::labs(ax - bx), std::labs(ay - by)));
      }
      case SpaceKind::Torus: {
        long dx = std::labs(static_cast<long>(a % r.width) - static_cast<long>(b % r.width));
        long dy = std::labs(static_cast<long>(a / r.width) - static_cast<long>(b / r.width));
        dx = std::min(dx, r.width - dx);
        dy = std::min(dy, r.height - dy);
        return static_cast<double>(std::max(dx, dy));
      }
      case SpaceKind::Circle:
        return circle_distance(r, a, b);
      case SpaceKind::Product: {
        auto [a0, a1] = split(a);
        auto [b0, b1] = split(b);
        return std::max(r.factors[0].distance(a0, b0), r.factors[1].distance(a1, b1));
      }
      case SpaceKind::Subspace:
        return r.factors[0].distance(r.ids[a], r.ids[b]);
      case SpaceKind::Euclidean: {
        const double* pa = r.coords->data() + a * r.dim;
        const double* pb = r.coords->data() + b * r.dim;
        double s = 0.0;
        for (std::size_t k = 0; k < r.dim; ++k) s += (pa[k] - pb[k]) * (pa[k] - pb[k]);
        return std::sqrt(s);
      }
      case SpaceKind::Matrix:
        return r.table[a * r.size + b];
    }
    return kInfinity;
  }

  /// Product coordinates (first factor major).
  std::pair<ElementId, ElementId> split(ElementId id) const {
    const auto nb = static_cast<ElementId>(rep_->factors[1].size());
    return {id / nb, id % nb};
  }
  ElementId join(ElementId first, ElementId second) const {
    return first * static_cast<ElementId>(rep_->factors[1].size()) + second;
  }
  const Space& factor(std::size_t i) const { return rep_->factors.at(i); }
  const Space& parent() const { return rep_->factors.at(0); }
  const std::vector<ElementId>& parent_ids() const { return rep_->ids; }

  // Grid / interval / torus parameters.
  long width() const { return rep_->width; }
  long height() const { return rep_->height; }
  long origin_x() const { return rep_->ox; }
  long origin_y() const { return rep_->oy; }

  /// Integer plane coordinates (x, y) of a grid or torus element, or (x, 0) for intervals.
  std::pair<long, long> coords(ElementId id) const {
    const Rep& r = *rep_;
    return {static_cast<long>(id % r.width) + r.ox, static_cast<long>(id / r.width) + r.oy};
  }
  ElementId at(long x, long y) const {
    return static_cast<ElementId>((y - rep_->oy) * rep_->width + (x - rep_->ox));
  }
  bool contains_point(long x, long y) const {
    return x >= rep_->ox && x < rep_->ox + rep_->width && y >= rep_->oy && y < rep_->oy + rep_->height;
  }

  // Circle parameters.
  int roots() const { return rep_->n; }
  bool pointed() const { return rep_->pointed; }
  ElementId base_point() const { return static_cast<ElementId>(rep_->n); }

  std::size_t dim() const { return rep_->dim; }
  const double* point(ElementId id) const { return rep_->coords->data() + id * rep_->dim; }

  std::string label(ElementId id) const {
    const Rep& r = *rep_;
    switch (r.kind) {
      case SpaceKind::Set:
      case SpaceKind::Euclidean:
      case SpaceKind::Matrix:
        return std::to_string(id);
      case SpaceKind::Interval:
        return std::to_string(coords(id).first);
      case SpaceKind::Grid:
      case SpaceKind::Torus: {
        auto [x, y] = coords(id);
        return "(" + std::to_string(x) + "," + std::to_string(y) + ")";
      }
      case SpaceKind::Circle:
        return r.pointed && static_cast<int>(id) == r.n ? "+" : "z^" + std::to_string(id);
      case SpaceKind::Product: {
        auto [a, b] = split(id);
        return "(" + r.factors[0].label(a) + "," + r.factors[1].label(b) + ")";
      }
      case SpaceKind::Subspace:
        return r.factors[0].label(r.ids[id]);
    }
    return {};
  }

  /// Structural equality: same construction parameters.
  friend bool operator==(const Space& a, const Space& b) {
    if (a.rep_ == b.rep_) return true;
    const Rep& x = *a.rep_;
    const Rep& y = *b.rep_;
    if (x.kind != y.kind || x.size != y.size) return false;
    switch (x.kind) {
      case SpaceKind::Set: return true;
      case SpaceKind::Interval:
      case SpaceKind::Grid:
      case SpaceKind::Torus:
        return x.width == y.width && x.height == y.height && x.ox == y.ox && x.oy == y.oy;
      case SpaceKind::Circle: return x.n == y.n && x.pointed == y.pointed;
      case SpaceKind::Product: return x.factors[0] == y.factors[0] && x.factors[1] == y.factors[1];
      case SpaceKind::Subspace: return x.ids == y.ids && x.factors[0] == y.factors[0];
      case SpaceKind::Euclidean: return x.dim == y.dim && *x.coords == *y.coords;
      case SpaceKind::Matrix: return x.table == y.table;
    }
    return false;
  }

 private:
  struct Rep {
    SpaceKind kind = SpaceKind::Set;
    std::size_t size = 1;
    std::string name = "X(1)";
    long width = 1, height = 1, ox = 0, oy = 0;
    int n = 0;
    bool pointed = false;
    std::vector<Space> factors;
    std::vector<ElementId> ids;
    std::size_t dim = 0;
    std::shared_ptr<const std::vector<double>> coords;
    std::vector<double> table;
  };

  explicit Space(std::shared_ptr<const Rep> rep) : rep_(std::move(rep)) {}

  static double circle_distance(const Rep& r, ElementId a, ElementId b) {
    if (a == b) return 0.0;
    const double xi = adjacent_root_distance(r.n);
    const auto plus = static_cast<ElementId>(r.n);
    if (r.pointed && (a == plus || b == plus)) return xi;
    const double diff = std::numbers::pi * std::abs(static_cast<double>(a) - static_cast<double>(b)) / r.n;
    const double chord = 2.0 * std::abs(std::sin(diff));
    // Every root sits at distance xi from +, so root-root distances are capped at 2 xi.
    return r.pointed ? std::min(chord, 2.0 * xi) : chord;
  }

  std::shared_ptr<const Rep> rep_;
};

inline Space make_grid(long width, long height) { return Space::grid(width, height); }
inline Space make_circle(int n, bool pointed) { return Space::circle(n, pointed); }
inline Space product_space(const Space& a, const Space& b) { return Space::product(a, b); }

}  // namespace geonet
