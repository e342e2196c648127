#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "geonet/error.hpp"
#include "geonet/spaces.hpp"

namespace geonet {

enum class CorrKind {
  Explicit,
  Complete,
  Functional,
  Metric,
  Pooling,         // pi(m,n,N) on integer intervals
  GridPooling,     // pi^2(m,n,N) on grids
  AngularPooling,  // pi_{m,n} on circles
  Graph,
  Product,
  Composite,
  Restricted,
};

/// Construction provenance. Used to classify layers without re-deriving structure.
struct CorrInfo {
  CorrKind kind = CorrKind::Explicit;
  double radius = 0.0;
  long m = 0, n = 0, stride = 1;
  std::vector<CorrInfo> parts = {};
  SpaceKind on = SpaceKind::Set;  // underlying space of metric correspondences

  /// Leaves of nested products.
  void flatten_into(std::vector<const CorrInfo*>& out) const {
    if (kind == CorrKind::Product) {
      for (const auto& p : parts) p.flatten_into(out);
    } else {
      out.push_back(this);
    }
  }
};

using ElementPair = std::pair<ElementId, ElementId>;

/// A relation C subset of X x Y with forward (C(x)) and inverse (C^-1(y)) adjacency.
/// Immutable; copies share storage.
class Correspondence {
 public:
  Correspondence() = default;

  static Correspondence from_pairs(Space source, Space target, std::vector<ElementPair> pairs,
                                   CorrInfo info = {}) {
    const auto ns = source.size(), nt = target.size();
    for (const auto& [x, y] : pairs)
      if (x >= ns || y >= nt)
        throw ValidationError("correspondence pair (" + std::to_string(x) + "," + std::to_string(y) +
                              ") out of range for " + source.name() + " -> " + target.name());
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    std::vector<std::uint64_t> offsets(ns + 1, 0);
    std::vector<ElementId> targets;
    targets.reserve(pairs.size());
    for (const auto& [x, y] : pairs) {
      ++offsets[x + 1];
      targets.push_back(y);
    }
    for (std::size_t i = 0; i < ns; ++i) offsets[i + 1] += offsets[i];
    return from_forward(std::move(source), std::move(target), std::move(offsets), std::move(targets),
                        std::move(info));
  }

  /// Forward CSR; each row must be sorted and duplicate free.
  static Correspondence from_forward(Space source, Space target, std::vector<std::uint64_t> offsets,
                                     std::vector<ElementId> targets, CorrInfo info = {}) {
    auto d = std::make_shared<Data>();
    const auto nt = target.size();
    d->fwd_off = std::move(offsets);
    d->fwd = std::move(targets);
    d->inv_off.assign(nt + 1, 0);
    for (auto y : d->fwd) ++d->inv_off[y + 1];
    for (std::size_t i = 0; i < nt; ++i) d->inv_off[i + 1] += d->inv_off[i];
    d->inv.resize(d->fwd.size());
    std::vector<std::uint64_t> cursor(d->inv_off.begin(), d->inv_off.end() - 1);
    const auto ns = source.size();
    for (std::size_t x = 0; x < ns; ++x)
      for (auto k = d->fwd_off[x]; k < d->fwd_off[x + 1]; ++k) d->inv[cursor[d->fwd[k]]++] = static_cast<ElementId>(x);
    d->source = std::move(source);
    d->target = std::move(target);
    d->info = std::move(info);
    Correspondence c;
    c.d_ = std::move(d);
    return c;
  }

  const Space& source() const { return d_->source; }
  const Space& target() const { return d_->target; }
  const CorrInfo& info() const { return d_->info; }

  /// C(x), sorted.
  std::span<const ElementId> image(ElementId x) const {
    return {d_->fwd.data() + d_->fwd_off[x], d_->fwd.data() + d_->fwd_off[x + 1]};
  }
  /// C^-1(y), sorted.
  std::span<const ElementId> preimage(ElementId y) const {
    return {d_->inv.data() + d_->inv_off[y], d_->inv.data() + d_->inv_off[y + 1]};
  }
  /// Position of the pair (x, y) in the inverse CSR, i.e. a stable edge index ordered by target.
  std::uint64_t preimage_offset(ElementId y) const { return d_->inv_off[y]; }

  std::size_t pair_count() const { return d_->fwd.size(); }

  bool contains(ElementId x, ElementId y) const {
    auto im = image(x);
    return std::binary_search(im.begin(), im.end(), y);
  }

  std::vector<ElementPair> pairs() const {
    std::vector<ElementPair> out;
    out.reserve(pair_count());
    for (ElementId x = 0; x < source().size(); ++x)
      for (auto y : image(x)) out.emplace_back(x, y);
    return out;
  }

  /// Same endpoints and same relation; provenance is ignored.
  friend bool operator==(const Correspondence& a, const Correspondence& b) {
    return a.source() == b.source() && a.target() == b.target() && a.d_->fwd_off == b.d_->fwd_off &&
           a.d_->fwd == b.d_->fwd;
  }

 private:
  struct Data {
    Space source, target;
    std::vector<std::uint64_t> fwd_off{0};
    std::vector<ElementId> fwd;
    std::vector<std::uint64_t> inv_off{0};
    std::vector<ElementId> inv;
    CorrInfo info;
  };
  std::shared_ptr<const Data> d_ = std::make_shared<Data>();
};

inline Correspondence complete(const Space& x, const Space& y) {
  const auto nx = x.size(), ny = y.size();
  std::vector<std::uint64_t> off(nx + 1);
  std::vector<ElementId> tg;
  tg.reserve(nx * ny);
  for (std::size_t i = 0; i < nx; ++i) {
    off[i] = i * ny;
    for (std::size_t j = 0; j < ny; ++j) tg.push_back(static_cast<ElementId>(j));
  }
  off[nx] = nx * ny;
  return Correspondence::from_forward(x, y, std::move(off), std::move(tg), {.kind = CorrKind::Complete});
}

/// Graph of a map. The map must be defined on every element of x.
inline Correspondence functional(const Space& x, const Space& y,
                                 const std::function<std::optional<ElementId>(ElementId)>& f) {
  std::vector<ElementPair> pairs;
  pairs.reserve(x.size());
  for (ElementId e = 0; e < x.size(); ++e) {
    auto img = f(e);
    if (!img) throw ValidationError("map undefined at element " + x.label(e) + " of " + x.name());
    pairs.emplace_back(e, *img);
  }
  return Correspondence::from_pairs(x, y, std::move(pairs), {.kind = CorrKind::Functional});
}

inline Correspondence identity(const Space& x) {
  return functional(x, x, [](ElementId e) { return std::optional<ElementId>(e); });
}

namespace detail {

inline bool within(double d, double r) { return d <= r + 1e-12 * std::max(1.0, std::abs(r)); }

}  // namespace detail

inline Correspondence product_corr(const Correspondence& c, const Correspondence& d);

/// C_d(r): x -> { x' : d(x, x') <= r } on a metric space.
inline Correspondence metric_corr(const Space& x, double r) {
  if (!x.has_metric()) throw ValidationError("metric correspondence needs a metric on " + x.name());
  detail::require(r >= 0.0, "metric threshold must be nonnegative");
  const CorrInfo info{.kind = CorrKind::Metric, .radius = r, .on = x.kind()};
  if (x.kind() == SpaceKind::Product) {
    // Under the max metric the ball is the product of the factor balls.
    auto p = product_corr(metric_corr(x.factor(0), r), metric_corr(x.factor(1), r));
    return Correspondence::from_pairs(x, x, p.pairs(), info);
  }
  std::vector<ElementPair> pairs;
  if (x.kind() == SpaceKind::Grid || x.kind() == SpaceKind::Interval) {
    const long rad = static_cast<long>(std::floor(r + 1e-12));
    for (ElementId e = 0; e < x.size(); ++e) {
      auto [cx, cy] = x.coords(e);
      for (long yy = cy - rad; yy <= cy + rad; ++yy)
        for (long xx = cx - rad; xx <= cx + rad; ++xx)
          if (x.contains_point(xx, yy)) pairs.emplace_back(e, x.at(xx, yy));
    }
  } else {
    for (ElementId a = 0; a < x.size(); ++a)
      for (ElementId b = 0; b < x.size(); ++b)
        if (detail::within(x.distance(a, b), r)) pairs.emplace_back(a, b);
  }
  return Correspondence::from_pairs(x, x, std::move(pairs), info);
}

/// Graphical correspondence of an undirected graph on v: (a, b) iff {a, b} is an edge.
inline Correspondence graph_corr(const Space& v, const std::vector<ElementPair>& edges) {
  std::vector<ElementPair> pairs;
  for (const auto& [a, b] : edges) {
    pairs.emplace_back(a, b);
    pairs.emplace_back(b, a);
  }
  return Correspondence::from_pairs(v, v, std::move(pairs), {.kind = CorrKind::Graph});
}

namespace detail {

inline void check_pooling(long m, long n, long stride) {
  if (m > n) throw ValidationError("pooling requires m <= n, got m=" + std::to_string(m) + " n=" + std::to_string(n));
  if (stride < 1) throw ValidationError("pooling stride must be >= 1, got " + std::to_string(stride));
}

inline bool pools_into(long fine, long coarse, long m, long n, long stride) {
  return fine >= stride * coarse + m && fine <= stride * coarse + n;
}

}  // namespace detail

/// pi(m,n,N) from a fine integer window to a coarse one: (y, x) iff y in [Nx+m, Nx+n].
inline Correspondence pooling_corr(long m, long n, long stride, const Space& fine, const Space& coarse) {
  detail::check_pooling(m, n, stride);
  detail::require(fine.kind() == SpaceKind::Interval && coarse.kind() == SpaceKind::Interval,
                  "pooling_corr works on integer intervals");
  std::vector<ElementPair> pairs;
  for (ElementId y = 0; y < fine.size(); ++y)
    for (ElementId x = 0; x < coarse.size(); ++x)
      if (detail::pools_into(fine.coords(y).first, coarse.coords(x).first, m, n, stride)) pairs.emplace_back(y, x);
  return Correspondence::from_pairs(fine, coarse, std::move(pairs),
                                    {.kind = CorrKind::Pooling, .m = m, .n = n, .stride = stride});
}

/// Fine window aligned to the coarse window [a, b]: [N a + m, N b + n].
inline Correspondence pooling_corr(long m, long n, long stride, long coarse_lo, long coarse_hi) {
  detail::check_pooling(m, n, stride);
  return pooling_corr(m, n, stride, Space::interval(stride * coarse_lo + m, stride * coarse_hi + n),
                      Space::interval(coarse_lo, coarse_hi));
}

/// pi^2(m,n,N) between grids, coordinatewise.
inline Correspondence grid_pooling(long m, long n, long stride, const Space& fine, const Space& coarse) {
  detail::check_pooling(m, n, stride);
  detail::require(fine.kind() == SpaceKind::Grid && coarse.kind() == SpaceKind::Grid,
                  "grid_pooling works on grids");
  std::vector<ElementPair> pairs;
  for (ElementId c = 0; c < coarse.size(); ++c) {
    auto [cx, cy] = coarse.coords(c);
    for (long yy = stride * cy + m; yy <= stride * cy + n; ++yy)
      for (long xx = stride * cx + m; xx <= stride * cx + n; ++xx)
        if (fine.contains_point(xx, yy)) pairs.emplace_back(fine.at(xx, yy), c);
  }
  return Correspondence::from_pairs(fine, coarse, std::move(pairs),
                                    {.kind = CorrKind::GridPooling, .m = m, .n = n, .stride = stride});
}

/// pi_{m,n}: mu_{mn} -> mu_n, zeta_{mn}^x -> zeta_n^{floor(x/m)}; the pointed variant sends + to +.
inline Correspondence angular_pooling(int m, int n, bool pointed) {
  detail::require(m >= 1 && n >= 1, "angular pooling needs m, n >= 1");
  detail::require(m * n >= 2 && n >= 2, "angular pooling needs circles of order >= 2");
  const Space fine = Space::circle(m * n, pointed);
  const Space coarse = Space::circle(n, pointed);
  auto c = functional(fine, coarse, [&](ElementId e) -> std::optional<ElementId> {
    if (pointed && e == fine.base_point()) return coarse.base_point();
    return static_cast<ElementId>(e / static_cast<ElementId>(m));
  });
  return Correspondence::from_pairs(fine, coarse, c.pairs(), {.kind = CorrKind::AngularPooling, .m = m, .n = n});
}

/// D o C: (x, z) iff some y has (x, y) in C and (y, z) in D.
inline Correspondence compose(const Correspondence& c, const Correspondence& d) {
  if (!(c.target() == d.source()))
    throw ValidationError("cannot compose: " + c.target().name() + " != " + d.source().name());
  const auto nx = c.source().size(), nz = d.target().size();
  std::vector<std::uint64_t> off(nx + 1, 0);
  std::vector<ElementId> tg;
  std::vector<char> mark(nz, 0);
  std::vector<ElementId> row;
  for (ElementId x = 0; x < nx; ++x) {
    row.clear();
    for (auto y : c.image(x))
      for (auto z : d.image(y))
        if (!mark[z]) {
          mark[z] = 1;
          row.push_back(z);
        }
    std::sort(row.begin(), row.end());
    for (auto z : row) mark[z] = 0;
    tg.insert(tg.end(), row.begin(), row.end());
    off[x + 1] = tg.size();
  }
  return Correspondence::from_forward(c.source(), d.target(), std::move(off), std::move(tg),
                                      {.kind = CorrKind::Composite, .parts = {c.info(), d.info()}});
}

/// C x D: ((x, y), (u, w)) iff (x, u) in C and (y, w) in D.
inline Correspondence product_corr(const Correspondence& c, const Correspondence& d) {
  const Space src = Space::product(c.source(), d.source());
  const Space tgt = Space::product(c.target(), d.target());
  const auto nxs = c.source().size(), nys = d.source().size();
  const auto nw = static_cast<ElementId>(d.target().size());
  std::vector<std::uint64_t> off(nxs * nys + 1, 0);
  std::vector<ElementId> tg;
  tg.reserve(c.pair_count() * d.pair_count());
  std::size_t row = 0;
  for (ElementId x = 0; x < nxs; ++x)
    for (ElementId y = 0; y < nys; ++y) {
      for (auto u : c.image(x))
        for (auto w : d.image(y)) tg.push_back(u * nw + w);
      off[++row] = tg.size();
    }
  return Correspondence::from_forward(src, tgt, std::move(off), std::move(tg),
                                      {.kind = CorrKind::Product, .parts = {c.info(), d.info()}});
}

/// pi^s(m,n,N) as the s-fold product of interval pooling over the coarse window [lo, hi]^s.
inline Correspondence pooling_power(int s, long m, long n, long stride, long coarse_lo, long coarse_hi) {
  detail::require(s >= 1, "pooling power must be >= 1");
  Correspondence out = pooling_corr(m, n, stride, coarse_lo, coarse_hi);
  for (int i = 1; i < s; ++i) out = product_corr(out, pooling_corr(m, n, stride, coarse_lo, coarse_hi));
  return out;
}

/// Surjective: C^-1(y) nonempty for every y.
inline bool is_surjective(const Correspondence& c) {
  for (ElementId y = 0; y < c.target().size(); ++y)
    if (c.preimage(y).empty()) return false;
  return true;
}

/// Total: C(x) nonempty for every x.
inline bool is_total(const Correspondence& c) {
  for (ElementId x = 0; x < c.source().size(); ++x)
    if (c.image(x).empty()) return false;
  return true;
}

/// Restriction of c to the given subspaces of its source and target.
inline Correspondence restrict_corr(const Correspondence& c, const Space& sub_source, const Space& sub_target) {
  std::vector<long> tmap(c.target().size(), -1);
  const auto& tids = sub_target.parent_ids();
  for (std::size_t i = 0; i < tids.size(); ++i) tmap[tids[i]] = static_cast<long>(i);
  std::vector<ElementPair> pairs;
  const auto& sids = sub_source.parent_ids();
  for (std::size_t i = 0; i < sids.size(); ++i)
    for (auto y : c.image(sids[i]))
      if (tmap[y] >= 0) pairs.emplace_back(static_cast<ElementId>(i), static_cast<ElementId>(tmap[y]));
  return Correspondence::from_pairs(sub_source, sub_target, std::move(pairs),
                                    {.kind = CorrKind::Restricted, .parts = {c.info()}});
}

/// Line format: a "# corr <|X|> <|Y|>" header, then one "source target" pair per line.
inline void write_corr(std::ostream& os, const Correspondence& c) {
  os << "# corr " << c.source().size() << ' ' << c.target().size() << '\n';
  for (ElementId x = 0; x < c.source().size(); ++x)
    for (auto y : c.image(x)) os << x << ' ' << y << '\n';
}

/// Reads the line format onto abstract sets of the stated sizes.
inline Correspondence read_corr(std::istream& is) {
  std::string line;
  std::size_t nx = 0, ny = 0;
  std::vector<ElementPair> pairs;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, tag;
      ls >> hash >> tag >> nx >> ny;
      if (tag != "corr" || !ls) throw ValidationError("corr file line " + std::to_string(lineno) + ": bad header");
      header = true;
      continue;
    }
    long x = -1, y = -1;
    ls >> x >> y;
    if (!ls || x < 0 || y < 0) throw ValidationError("corr file line " + std::to_string(lineno) + ": expected two ids");
    pairs.emplace_back(static_cast<ElementId>(x), static_cast<ElementId>(y));
  }
  if (!header) throw ValidationError("corr file: missing header");
  return Correspondence::from_pairs(Space::set(nx), Space::set(ny), std::move(pairs));
}

}  // namespace geonet
