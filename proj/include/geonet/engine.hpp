#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geonet/convstruct.hpp"
#include "geonet/corr.hpp"
#include "geonet/data.hpp"
#include "geonet/error.hpp"
#include "geonet/generator.hpp"
#include "geonet/parallel.hpp"

namespace geonet {

enum class Semigroup { Sum, Max };
enum class CoefficientDomain { AllReals, One };
enum class Cutoff { Identity, ReLU, Exp };

/// (mu, S, f): combining semigroup, coefficient domain, cutoff function.
struct Activator {
  Semigroup semigroup = Semigroup::Sum;
  CoefficientDomain domain = CoefficientDomain::AllReals;
  Cutoff cutoff = Cutoff::Identity;

  friend bool operator==(const Activator&, const Activator&) = default;
};

enum class LossKind { L2, SoftmaxL2, CrossEntropy };

/// How grid and circle metric arrows share coefficients.
enum class TieMode {
  Restricted,  // classes refined on the finite window (boundary classes get their own slots)
  Inherited,   // boundary vertices reuse the interior slot of the same offset
  None,        // every structural edge has its own slot
};

enum class InitScheme { UniformScaled, Zero };

// ---------------------------------------------------------------------------
// Normalizations and losses on single vectors.

/// sigma_n(x) = x / (x_1 + ... + x_n) for positive x.
inline std::vector<double> sigma_normalize(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) {
    if (!(v > 0.0)) throw ValidationError("sigma_n needs strictly positive entries");
    s += v;
  }
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v /= s;
  return out;
}

/// sigma o exp, computed with the max shift.
inline std::vector<double> softmax(std::span<const double> x) {
  detail::require(!x.empty(), "softmax of an empty vector");
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (out[i] = std::exp(x[i] - m));
  for (double& v : out) v /= s;
  return out;
}

/// Loss of a logit/prediction vector against a target.
/// SoftmaxL2 is ||softmax(pred) - target||^2; CrossEntropy is -sum t log softmax(pred).
inline double loss_value(LossKind kind, std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw ValidationError("loss: prediction has " + std::to_string(pred.size()) + " entries, target " +
                          std::to_string(target.size()));
  double l = 0.0;
  switch (kind) {
    case LossKind::L2:
      for (std::size_t i = 0; i < pred.size(); ++i) l += (pred[i] - target[i]) * (pred[i] - target[i]);
      return l;
    case LossKind::SoftmaxL2: {
      auto p = softmax(pred);
      for (std::size_t i = 0; i < p.size(); ++i) l += (p[i] - target[i]) * (p[i] - target[i]);
      return l;
    }
    case LossKind::CrossEntropy: {
      const double m = *std::max_element(pred.begin(), pred.end());
      double s = 0.0;
      for (double v : pred) s += std::exp(v - m);
      const double lse = m + std::log(s);
      for (std::size_t i = 0; i < pred.size(); ++i) l -= target[i] * (pred[i] - lse);
      return l;
    }
  }
  return l;
}

// ---------------------------------------------------------------------------

/// One sample per row; columns in realized vertex order of layer 0 (inputs) and the last layer (targets).
struct Examples {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  std::vector<int> labels;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

/// One-hot targets for integer labels.
inline Examples make_examples(Eigen::MatrixXd inputs, const std::vector<int>& labels, int classes) {
  detail::require(static_cast<std::size_t>(inputs.rows()) == labels.size(), "examples: label count mismatch");
  Examples e;
  e.targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    detail::require(labels[j] >= 0 && labels[j] < classes, "examples: label out of range");
    e.targets(static_cast<Eigen::Index>(j), labels[j]) = 1.0;
  }
  e.inputs = std::move(inputs);
  e.labels = labels;
  return e;
}

/// Per-arrow execution plan. Vertices of layer i-1 (resp. i) are addressed as
/// (channel, structural) pairs; channels come from the factors whose arrow is complete.
struct LayerPlan {
  Activator act;
  std::size_t cin = 1, cout = 1, sin = 1, sout = 1;
  Correspondence structural;
  std::optional<EdgeSlots> slots;        // present when coefficients are free
  std::vector<ElementId> in_index;       // c * sin + x -> realized id in layer i-1
  std::vector<ElementId> out_index;      // c * sout + y -> realized id in layer i
  std::size_t param_offset = 0;
  // Output vertices sharing the same slot sequence over their in-edges.
  struct Group {
    std::vector<std::size_t> slots;
    std::vector<ElementId> members;
  };
  std::vector<Group> groups;

  bool has_params() const { return act.domain == CoefficientDomain::AllReals; }
  std::size_t param_count() const { return has_params() ? slots->count * cin * cout : 0; }
  TieMap tie_map() const { return {*slots, cin, cout}; }
};

/// Values of every layer for a batch; rows are samples.
///   layers[i]: B x |V_i| in realized order
///   inputs[i]: B x (sin * cin), column x * cin + c
///   pre[i]:    B x (sout * cout), column y * cout + c
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> layers;
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> pre;
  std::vector<std::vector<std::int64_t>> argmax;  // Max arrows: winning input column
  std::size_t batch = 0;
};

class Network {
 public:
  struct Options {
    LossKind loss = LossKind::SoftmaxL2;
    TieMode tie = TieMode::Restricted;
  };

  /// Network over a realized generator; `activation[i-1]` is the activator of layer i.
  static Network build(const Generator& g, std::vector<Activator> activation, Options opts) {
    detail::require(static_cast<int>(activation.size()) == g.depth(),
                    "network: need one activator per non-initial layer");
    (void)realize(g);  // refuses non-surjective arrows
    Network net;
    net.generator_ = g;
    net.loss_ = opts.loss;
    net.tie_ = opts.tie;
    const auto factors = g.atomic_factors();
    for (int i = 1; i <= g.depth(); ++i)
      net.plans_.push_back(plan_for(factors, i, activation[static_cast<std::size_t>(i - 1)], opts.tie));
    net.finish();
    return net;
  }

  /// Network over an arbitrary system; each arrow is a single structural factor with
  /// the given slots (untied when absent).
  static Network build(const FeedForwardSystem& s, std::vector<Activator> activation, LossKind loss,
                       std::vector<std::optional<EdgeSlots>> ties = {}) {
    detail::require(static_cast<int>(activation.size()) == s.depth(), "network: need one activator per layer");
    ties.resize(static_cast<std::size_t>(s.depth()));
    Network net;
    net.loss_ = loss;
    net.tie_ = TieMode::None;
    for (int i = 1; i <= s.depth(); ++i) {
      LayerPlan p;
      p.act = activation[static_cast<std::size_t>(i - 1)];
      p.structural = s.arrow(i);
      p.sin = s.layer_size(i - 1);
      p.sout = s.layer_size(i);
      p.in_index.resize(p.sin);
      std::iota(p.in_index.begin(), p.in_index.end(), 0u);
      p.out_index.resize(p.sout);
      std::iota(p.out_index.begin(), p.out_index.end(), 0u);
      if (p.has_params()) {
        auto& t = ties[static_cast<std::size_t>(i - 1)];
        p.slots = t ? rebase(*t, p.structural) : untied_slots(p.structural);
      }
      net.plans_.push_back(std::move(p));
    }
    net.finish();
    return net;
  }

  int depth() const { return static_cast<int>(plans_.size()); }
  const LayerPlan& plan(int i) const { return plans_.at(static_cast<std::size_t>(i - 1)); }
  std::size_t layer_size(int i) const {
    const auto& p = plans_.at(static_cast<std::size_t>(i == 0 ? 0 : i - 1));
    return i == 0 ? p.cin * p.sin : p.cout * p.sout;
  }
  LossKind loss() const { return loss_; }
  TieMode tie_mode() const { return tie_; }
  const std::optional<Generator>& generator() const { return generator_; }
  const Activator& activator(int i) const { return plan(i).act; }

  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t layer_parameter_count(int i) const { return plan(i).param_count(); }
  std::size_t layer_parameter_offset(int i) const { return plan(i).param_offset; }
  /// Parameter index of the edge (c_in, x) -> (c_out, y) given the structural edge offset.
  std::size_t parameter_index(int i, std::uint64_t edge, std::size_t c_in, std::size_t c_out) const {
    const auto& p = plan(i);
    return p.param_offset + p.tie_map().slot(edge, c_in, c_out);
  }

  void initialize(InitScheme scheme, std::uint64_t seed) {
    std::fill(params_.begin(), params_.end(), 0.0);
    if (scheme == InitScheme::Zero) return;
    std::mt19937_64 rng(seed);
    for (const auto& p : plans_) {
      if (!p.has_params()) continue;
      // Fan-in per slot group: in-degree of the class base times input channels.
      std::vector<double> bound(p.slots->count, 1.0 / std::sqrt(static_cast<double>(p.cin)));
      const auto& arrow = p.slots->arrow;
      for (auto b : p.slots->class_bases) {
        const auto deg = arrow.preimage(b).size();
        const auto off = arrow.preimage_offset(b);
        for (std::size_t q = 0; q < deg; ++q)
          bound[p.slots->slot[off + q]] = 1.0 / std::sqrt(static_cast<double>(deg * p.cin));
      }
      const std::size_t per = p.cin * p.cout;
      for (std::size_t s = 0; s < p.slots->count; ++s) {
        std::uniform_real_distribution<double> u(-bound[s], bound[s]);
        for (std::size_t k = 0; k < per; ++k) params_[p.param_offset + s * per + k] = u(rng);
      }
    }
  }

  /// Forward pass over a batch (rows are samples).
  ForwardTrace forward(const Eigen::MatrixXd& input) const {
    if (static_cast<std::size_t>(input.cols()) != layer_size(0))
      throw ValidationError("forward: input has " + std::to_string(input.cols()) + " values, layer 0 has " +
                            std::to_string(layer_size(0)));
    ForwardTrace t;
    const auto B = static_cast<std::size_t>(input.rows());
    t.batch = B;
    t.layers.push_back(input);
    for (const LayerPlan& p : plans_) {
      Eigen::MatrixXd in = gather(p, t.layers.back());
      Eigen::MatrixXd pre = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(p.sout * p.cout));
      std::vector<std::int64_t> arg;
      forward_layer(p, in, pre, arg);
      Eigen::MatrixXd post = apply_cutoff(p.act.cutoff, pre);
      Eigen::MatrixXd out(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(p.cout * p.sout));
      for (std::size_t c = 0; c < p.cout; ++c)
        for (std::size_t y = 0; y < p.sout; ++y)
          out.col(p.out_index[c * p.sout + y]) = post.col(static_cast<Eigen::Index>(y * p.cout + c));
      t.inputs.push_back(std::move(in));
      t.pre.push_back(std::move(pre));
      t.argmax.push_back(std::move(arg));
      t.layers.push_back(std::move(out));
    }
    return t;
  }

  /// Output layer values for a single input.
  std::vector<double> evaluate_one(std::span<const double> input) const {
    Eigen::MatrixXd in = Eigen::Map<const Eigen::MatrixXd>(input.data(), 1, static_cast<Eigen::Index>(input.size()));
    auto t = forward(in);
    const auto& o = t.layers.back();
    return {o.data(), o.data() + o.size()};
  }

  /// Logits seen by the softmax-based losses, one sample per row.
  /// With an Exp output cutoff the exp is already applied by the layer, so the
  /// logits are the pre-cutoff values; otherwise they are the outputs.
  Eigen::MatrixXd logits(const ForwardTrace& t) const {
    const LayerPlan& p = plans_.back();
    if (p.act.cutoff != Cutoff::Exp) return t.layers.back();
    Eigen::MatrixXd z(t.layers.back().rows(), t.layers.back().cols());
    for (std::size_t c = 0; c < p.cout; ++c)
      for (std::size_t y = 0; y < p.sout; ++y)
        z.col(p.out_index[c * p.sout + y]) = t.pre.back().col(static_cast<Eigen::Index>(y * p.cout + c));
    return z;
  }

  /// Mean loss over the batch.
  double batch_loss(const ForwardTrace& t, const Eigen::MatrixXd& targets) const {
    check_targets(t, targets);
    const Eigen::MatrixXd z = loss_ == LossKind::L2 ? t.layers.back() : logits(t);
    double total = 0.0;
    std::vector<double> zc(static_cast<std::size_t>(z.cols())), tc(zc.size());
    for (Eigen::Index b = 0; b < z.rows(); ++b) {
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        zc[static_cast<std::size_t>(j)] = z(b, j);
        tc[static_cast<std::size_t>(j)] = targets(b, j);
      }
      total += loss_value(loss_, zc, tc);
    }
    return total / static_cast<double>(z.rows());
  }

  /// Gradient of the mean batch loss with respect to every parameter.
  /// Tied edges accumulate into their shared slot; fixed (domain One) layers get none.
  std::vector<double> backward(const ForwardTrace& t, const Eigen::MatrixXd& targets) const {
    check_targets(t, targets);
    const std::size_t B = t.batch;
    std::vector<double> grad(params_.size(), 0.0);
    const LayerPlan& last = plans_.back();

    // Gradient with respect to the output layer values (realized order), or directly
    // with respect to the last pre-activation when the softmax absorbs an Exp cutoff.
    const bool through_logits_pre = loss_ != LossKind::L2 && last.act.cutoff == Cutoff::Exp;
    const Eigen::MatrixXd z = loss_ == LossKind::L2 ? t.layers.back() : logits(t);
    Eigen::MatrixXd d_layer(z.rows(), z.cols());
    for (Eigen::Index b = 0; b < z.rows(); ++b) {
      const Eigen::VectorXd zc = z.row(b).transpose();
      const Eigen::VectorXd tc = targets.row(b).transpose();
      Eigen::VectorXd dc;
      if (loss_ == LossKind::L2) {
        dc = 2.0 * (zc - tc);
      } else {
        auto pv = softmax(std::span<const double>(zc.data(), static_cast<std::size_t>(zc.size())));
        const Eigen::Map<const Eigen::VectorXd> pr(pv.data(), zc.size());
        if (loss_ == LossKind::SoftmaxL2) {
          const Eigen::VectorXd g = 2.0 * (pr - tc);
          dc = pr.cwiseProduct((g.array() - g.dot(pr)).matrix());
        } else {
          dc = pr * tc.sum() - tc;
        }
      }
      d_layer.row(b) = dc.transpose() / static_cast<double>(B);
    }

    for (std::size_t li = plans_.size(); li-- > 0;) {
      const LayerPlan& p = plans_[li];
      const Eigen::MatrixXd& pre = t.pre[li];
      Eigen::MatrixXd d_pre(pre.rows(), pre.cols());
      for (std::size_t c = 0; c < p.cout; ++c)
        for (std::size_t y = 0; y < p.sout; ++y)
          d_pre.col(static_cast<Eigen::Index>(y * p.cout + c)) = d_layer.col(p.out_index[c * p.sout + y]);
      const bool skip_cutoff = li + 1 == plans_.size() && through_logits_pre;
      if (!skip_cutoff) scale_by_cutoff_derivative(p.act.cutoff, pre, d_pre);
      const bool need_input_grad = li > 0;
      Eigen::MatrixXd d_in;
      if (need_input_grad) d_in = Eigen::MatrixXd::Zero(t.inputs[li].rows(), t.inputs[li].cols());
      backward_layer(p, t.inputs[li], d_pre, t.argmax[li], grad, need_input_grad ? &d_in : nullptr);
      if (!need_input_grad) break;
      Eigen::MatrixXd d_prev(t.layers[li].rows(), t.layers[li].cols());
      for (std::size_t c = 0; c < p.cin; ++c)
        for (std::size_t x = 0; x < p.sin; ++x)
          d_prev.col(p.in_index[c * p.sin + x]) = d_in.col(static_cast<Eigen::Index>(x * p.cin + c));
      d_layer = std::move(d_prev);
    }
    return grad;
  }

 private:
  static Eigen::MatrixXd apply_cutoff(Cutoff f, const Eigen::MatrixXd& x) {
    switch (f) {
      case Cutoff::Identity: return x;
      case Cutoff::ReLU: return x.cwiseMax(0.0);
      case Cutoff::Exp: return x.array().exp().matrix();
    }
    return x;
  }
  static void scale_by_cutoff_derivative(Cutoff f, const Eigen::MatrixXd& pre, Eigen::MatrixXd& d) {
    switch (f) {
      case Cutoff::Identity: return;
      case Cutoff::ReLU: d = (pre.array() > 0.0).select(d, 0.0); return;
      case Cutoff::Exp: d.array() *= pre.array().exp(); return;
    }
  }

  void check_targets(const ForwardTrace& t, const Eigen::MatrixXd& targets) const {
    if (targets.rows() != t.layers.back().rows() || targets.cols() != t.layers.back().cols())
      throw ValidationError("loss: target shape " + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) +
                            " does not match output " + std::to_string(t.layers.back().rows()) + "x" +
                            std::to_string(t.layers.back().cols()));
  }

  static EdgeSlots rebase(EdgeSlots s, const Correspondence& arrow) {
    detail::require(s.arrow.pair_count() == arrow.pair_count() && s.arrow.pairs() == arrow.pairs(),
                    "network: tie slots belong to a different relation");
    s.arrow = arrow;
    return s;
  }

  static EdgeSlots factor_slots(const Correspondence& a, TieMode mode) {
    const CorrInfo& info = a.info();
    if (mode != TieMode::None && info.kind == CorrKind::Metric && a.source() == a.target()) {
      if (info.on == SpaceKind::Grid) {
        GridTying gt = grid_translation_tying(a.source(), info.radius);
        if (mode == TieMode::Restricted) return rebase(structure_slots(gt.structure), a);
        return rebase(inherited_slots(gt.parent, gt.window, 1), a);
      }
      if (info.on == SpaceKind::Circle && !a.source().pointed())
        return structure_slots(cayley_structure(a, rotation(a.source(), a.target())));
    }
    return untied_slots(a);
  }

  static LayerPlan plan_for(const std::vector<Generator>& factors, int i, Activator act, TieMode mode) {
    LayerPlan p;
    p.act = act;
    const std::size_t k = factors.size();
    std::vector<bool> is_channel(k);
    std::vector<std::size_t> nin(k), nout(k);
    for (std::size_t f = 0; f < k; ++f) {
      const auto& a = factors[f].arrow(i);
      nin[f] = a.source().size();
      nout[f] = a.target().size();
      is_channel[f] = a.pair_count() == nin[f] * nout[f];
    }
    std::optional<Correspondence> st;
    std::optional<EdgeSlots> slots;
    const bool params = act.domain == CoefficientDomain::AllReals;
    for (std::size_t f = 0; f < k; ++f) {
      if (is_channel[f]) {
        p.cin *= nin[f];
        p.cout *= nout[f];
        continue;
      }
      const auto& a = factors[f].arrow(i);
      st = st ? product_corr(*st, a) : a;
      if (params) {
        EdgeSlots fs = factor_slots(a, mode);
        slots = slots ? product_slots(*slots, fs) : fs;
      }
    }
    if (!st) {
      st = complete(Space::set(1), Space::set(1));
      if (params) slots = untied_slots(*st);
    }
    p.structural = *st;
    p.sin = st->source().size();
    p.sout = st->target().size();
    if (params) {
      slots->arrow = p.structural;
      p.slots = std::move(slots);
    }
    p.in_index = index_map(is_channel, nin, p.sin);
    p.out_index = index_map(is_channel, nout, p.sout);
    return p;
  }

  /// (channel, structural) -> realized id under the mixed radix of the factor sizes.
  static std::vector<ElementId> index_map(const std::vector<bool>& is_channel, const std::vector<std::size_t>& sizes,
                                          std::size_t n_struct) {
    std::size_t total = 1;
    for (auto s : sizes) total *= s;
    std::vector<ElementId> out(total);
    std::vector<std::size_t> digit(sizes.size(), 0);
    for (std::size_t r = 0; r < total; ++r) {
      std::size_t rem = r;
      for (std::size_t f = sizes.size(); f-- > 0;) {
        digit[f] = rem % sizes[f];
        rem /= sizes[f];
      }
      std::size_t c = 0, x = 0;
      for (std::size_t f = 0; f < sizes.size(); ++f) {
        if (is_channel[f])
          c = c * sizes[f] + digit[f];
        else
          x = x * sizes[f] + digit[f];
      }
      out[c * n_struct + x] = static_cast<ElementId>(r);
    }
    return out;
  }

  void finish() {
    std::size_t off = 0;
    for (auto& p : plans_) {
      p.param_offset = off;
      off += p.param_count();
      if (p.has_params()) p.groups = slot_groups(p);
    }
    params_.assign(off, 0.0);
  }

  static std::vector<LayerPlan::Group> slot_groups(const LayerPlan& p) {
    std::map<std::vector<std::size_t>, std::size_t> index;
    std::vector<LayerPlan::Group> out;
    for (ElementId y = 0; y < p.sout; ++y) {
      const auto off = p.structural.preimage_offset(y);
      const auto deg = p.structural.preimage(y).size();
      std::vector<std::size_t> seq(p.slots->slot.begin() + static_cast<std::ptrdiff_t>(off),
                                   p.slots->slot.begin() + static_cast<std::ptrdiff_t>(off + deg));
      auto [it, fresh] = index.try_emplace(seq, out.size());
      if (fresh) out.push_back({std::move(seq), {}});
      out[it->second].members.push_back(y);
    }
    return out;
  }

  static constexpr std::size_t kBlockBudget = std::size_t{1} << 20;  // doubles per stacked block

  static std::size_t members_per_block(const LayerPlan& p, const LayerPlan::Group& g, Eigen::Index B) {
    const auto k = std::max<std::size_t>(1, g.slots.size() * p.cin * static_cast<std::size_t>(B));
    return std::max<std::size_t>(1, kBlockBudget / k);
  }

  /// Stacked neighbourhoods of members [m0, m1): row block j is member m0 + j, column block e its e-th in-edge.
  static void stack_inputs(const LayerPlan& p, const LayerPlan::Group& g, std::size_t m0, std::size_t m1,
                           const Eigen::MatrixXd& in, Eigen::MatrixXd& x) {
    const auto B = in.rows();
    const auto ci = static_cast<Eigen::Index>(p.cin);
    x.resize(static_cast<Eigen::Index>(m1 - m0) * B, static_cast<Eigen::Index>(g.slots.size()) * ci);
    for (std::size_t m = m0; m < m1; ++m) {
      auto in_y = p.structural.preimage(g.members[m]);
      for (std::size_t e = 0; e < in_y.size(); ++e)
        x.block(static_cast<Eigen::Index>(m - m0) * B, static_cast<Eigen::Index>(e) * ci, B, ci) =
            in.middleCols(static_cast<Eigen::Index>(in_y[e]) * ci, ci);
    }
  }

  /// Row block e holds W_e^T for the e-th slot of the group.
  Eigen::MatrixXd stacked_weights(const LayerPlan& p, const LayerPlan::Group& g) const {
    const auto ci = static_cast<Eigen::Index>(p.cin);
    Eigen::MatrixXd w(static_cast<Eigen::Index>(g.slots.size()) * ci, static_cast<Eigen::Index>(p.cout));
    for (std::size_t e = 0; e < g.slots.size(); ++e) w.middleRows(static_cast<Eigen::Index>(e) * ci, ci) = weights(p, g.slots[e]).transpose();
    return w;
  }

  static Eigen::MatrixXd gather(const LayerPlan& p, const Eigen::MatrixXd& layer) {
    Eigen::MatrixXd in(layer.rows(), static_cast<Eigen::Index>(p.sin * p.cin));
    for (std::size_t c = 0; c < p.cin; ++c)
      for (std::size_t x = 0; x < p.sin; ++x) in.col(static_cast<Eigen::Index>(x * p.cin + c)) = layer.col(p.in_index[c * p.sin + x]);
    return in;
  }

  using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
  using Mat = Eigen::Map<Eigen::MatrixXd>;

  ConstMat weights(const LayerPlan& p, std::size_t slot) const {
    return {params_.data() + p.param_offset + slot * p.cin * p.cout, static_cast<Eigen::Index>(p.cout),
            static_cast<Eigen::Index>(p.cin)};
  }

  void forward_layer(const LayerPlan& p, const Eigen::MatrixXd& in, Eigen::MatrixXd& pre, std::vector<std::int64_t>& arg) const {
    const auto B = in.rows();
    const auto ci = static_cast<Eigen::Index>(p.cin), co = static_cast<Eigen::Index>(p.cout);
    const auto& S = p.structural;
    if (p.act.semigroup == Semigroup::Sum) {
      if (p.has_params()) {
        Eigen::MatrixXd x, r;
        for (const auto& g : p.groups) {
          const Eigen::MatrixXd w = stacked_weights(p, g);
          const auto step = members_per_block(p, g, B);
          for (std::size_t m0 = 0; m0 < g.members.size(); m0 += step) {
            const auto m1 = std::min(g.members.size(), m0 + step);
            stack_inputs(p, g, m0, m1, in, x);
            r.noalias() = x * w;
            for (std::size_t m = m0; m < m1; ++m)
              pre.middleCols(g.members[m] * co, co) = r.middleRows(static_cast<Eigen::Index>(m - m0) * B, B);
          }
        }
      } else {
        for (ElementId y = 0; y < p.sout; ++y) {
          Eigen::VectorXd acc = Eigen::VectorXd::Zero(B);
          for (auto x : S.preimage(y)) acc += in.middleCols(x * ci, ci).rowwise().sum();
          pre.middleCols(y * co, co).colwise() = acc;
        }
      }
      return;
    }
    // Max semigroup; ties go to the lowest realized id.
    if (!p.has_params()) {
      arg.assign(p.sout * static_cast<std::size_t>(B), -1);
      Eigen::VectorXd best(B);
      std::vector<ElementId> best_id(static_cast<std::size_t>(B));
      for (ElementId y = 0; y < p.sout; ++y) {
        std::int64_t* win = arg.data() + y * static_cast<std::size_t>(B);
        bool first = true;
        for (auto x : S.preimage(y))
          for (std::size_t c = 0; c < p.cin; ++c) {
            const auto col = static_cast<Eigen::Index>(x * p.cin + c);
            const ElementId id = p.in_index[c * p.sin + x];
            const double* v = in.col(col).data();
            for (Eigen::Index b = 0; b < B; ++b) {
              const auto bb = static_cast<std::size_t>(b);
              if (first || v[b] > best[b] || (v[b] == best[b] && id < best_id[bb])) {
                best[b] = v[b];
                best_id[bb] = id;
                win[b] = col;
              }
            }
            first = false;
          }
        pre.middleCols(y * co, co).colwise() = best;
      }
      return;
    }
    arg.assign(p.sout * p.cout * static_cast<std::size_t>(B), -1);
    for (ElementId y = 0; y < p.sout; ++y) {
      auto in_y = S.preimage(y);
      const auto off = S.preimage_offset(y);
      for (std::size_t o = 0; o < p.cout; ++o) {
        std::int64_t* win = arg.data() + (y * p.cout + o) * static_cast<std::size_t>(B);
        auto out = pre.col(static_cast<Eigen::Index>(y * p.cout + o));
        std::vector<ElementId> best_id(static_cast<std::size_t>(B));
        bool first = true;
        for (std::size_t e = 0; e < in_y.size(); ++e) {
          const auto w = weights(p, p.slots->slot[off + e]);
          for (std::size_t c = 0; c < p.cin; ++c) {
            const auto col = static_cast<Eigen::Index>(in_y[e] * p.cin + c);
            const double lam = w(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c));
            const ElementId id = p.in_index[c * p.sin + in_y[e]];
            for (Eigen::Index b = 0; b < B; ++b) {
              const double v = lam * in(b, col);
              const auto bb = static_cast<std::size_t>(b);
              if (first || v > out[b] || (v == out[b] && id < best_id[bb])) {
                out[b] = v;
                best_id[bb] = id;
                win[b] = static_cast<std::int64_t>(e * p.cin + c);
              }
            }
            first = false;
          }
        }
      }
    }
  }

  void backward_layer(const LayerPlan& p, const Eigen::MatrixXd& in, const Eigen::MatrixXd& d_pre,
                      const std::vector<std::int64_t>& arg, std::vector<double>& grad, Eigen::MatrixXd* d_in) const {
    const auto B = in.rows();
    const auto ci = static_cast<Eigen::Index>(p.cin), co = static_cast<Eigen::Index>(p.cout);
    const auto& S = p.structural;
    if (p.act.semigroup == Semigroup::Sum) {
      if (p.has_params()) {
        Eigen::MatrixXd x, dr, gw, dx;
        for (const auto& g : p.groups) {
          const Eigen::MatrixXd w = stacked_weights(p, g);
          gw = Eigen::MatrixXd::Zero(w.rows(), w.cols());
          const auto step = members_per_block(p, g, B);
          for (std::size_t m0 = 0; m0 < g.members.size(); m0 += step) {
            const auto m1 = std::min(g.members.size(), m0 + step);
            stack_inputs(p, g, m0, m1, in, x);
            dr.resize(x.rows(), co);
            for (std::size_t m = m0; m < m1; ++m)
              dr.middleRows(static_cast<Eigen::Index>(m - m0) * B, B) = d_pre.middleCols(g.members[m] * co, co);
            gw.noalias() += x.transpose() * dr;
            if (!d_in) continue;
            dx.noalias() = dr * w.transpose();
            for (std::size_t m = m0; m < m1; ++m) {
              auto in_y = S.preimage(g.members[m]);
              for (std::size_t e = 0; e < in_y.size(); ++e)
                d_in->middleCols(static_cast<Eigen::Index>(in_y[e]) * ci, ci) +=
                    dx.block(static_cast<Eigen::Index>(m - m0) * B, static_cast<Eigen::Index>(e) * ci, B, ci);
            }
          }
          for (std::size_t e = 0; e < g.slots.size(); ++e) {
            Mat dst(grad.data() + p.param_offset + g.slots[e] * p.cin * p.cout, co, ci);
            dst += gw.middleRows(static_cast<Eigen::Index>(e) * ci, ci).transpose();
          }
        }
      } else if (d_in) {
        for (ElementId y = 0; y < p.sout; ++y) {
          const Eigen::VectorXd g = d_pre.middleCols(y * co, co).rowwise().sum();
          for (auto x : S.preimage(y)) d_in->middleCols(x * ci, ci).colwise() += g;
        }
      }
      return;
    }
    if (!p.has_params()) {
      if (!d_in) return;
      for (ElementId y = 0; y < p.sout; ++y) {
        const Eigen::VectorXd g = d_pre.middleCols(y * co, co).rowwise().sum();
        const std::int64_t* win = arg.data() + y * static_cast<std::size_t>(B);
        for (Eigen::Index b = 0; b < B; ++b) (*d_in)(b, win[b]) += g[b];
      }
      return;
    }
    for (ElementId y = 0; y < p.sout; ++y) {
      auto in_y = S.preimage(y);
      const auto off = S.preimage_offset(y);
      for (std::size_t o = 0; o < p.cout; ++o) {
        const std::int64_t* win = arg.data() + (y * p.cout + o) * static_cast<std::size_t>(B);
        for (Eigen::Index b = 0; b < B; ++b) {
          const auto e = static_cast<std::size_t>(win[b]) / p.cin, c = static_cast<std::size_t>(win[b]) % p.cin;
          const double g = d_pre(b, static_cast<Eigen::Index>(y * p.cout + o));
          const std::size_t idx = p.param_offset + (p.slots->slot[off + e] * p.cin + c) * p.cout + o;
          const auto col = static_cast<Eigen::Index>(in_y[e] * p.cin + c);
          grad[idx] += g * in(b, col);
          if (d_in) (*d_in)(b, col) += g * params_[idx];
        }
      }
    }
  }

  std::vector<LayerPlan> plans_;
  std::vector<double> params_;
  LossKind loss_ = LossKind::SoftmaxL2;
  TieMode tie_ = TieMode::Restricted;
  std::optional<Generator> generator_;
};

// ---------------------------------------------------------------------------
// Training and evaluation.

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t iterations = 1000;
  std::uint64_t seed = 1;
  InitScheme init = InitScheme::UniformScaled;
  std::vector<std::size_t> snapshot_at;
  bool initialize = true;  // false keeps the current coefficients
};

struct TrainLog {
  std::vector<double> loss;  // mean minibatch loss per iteration, before the update
};

struct TrainResult {
  TrainLog log;
  std::vector<std::pair<std::size_t, std::vector<double>>> snapshots;
};

using SnapshotSink = std::function<void(std::size_t iteration, std::span<const double> params)>;
using ProgressSink = std::function<void(std::size_t iteration, double loss)>;

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t j = 0; j < rows.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = m.row(static_cast<Eigen::Index>(rows[j]));
  return out;
}

/// Plain SGD at a fixed learning rate over seeded shuffled minibatches.
inline TrainResult sgd_train(Network& net, const Examples& data, const TrainConfig& cfg, const SnapshotSink& sink = {},
                             const ProgressSink& progress = {}) {
  detail::require(data.size() > 0, "sgd_train: empty dataset");
  detail::require(cfg.batch_size >= 1 && cfg.iterations >= 1, "sgd_train: batch size and iterations must be positive");
  detail::require(cfg.learning_rate >= 0.0, "sgd_train: learning rate must be nonnegative");
  if (cfg.initialize) net.initialize(cfg.init, cfg.seed);
  BatchStream stream(data.size(), cfg.batch_size, cfg.seed);
  TrainResult result;
  auto wants_snapshot = [&](std::size_t it) {
    return std::find(cfg.snapshot_at.begin(), cfg.snapshot_at.end(), it) != cfg.snapshot_at.end();
  };
  auto emit = [&](std::size_t it) {
    if (sink) sink(it, net.parameters());
    result.snapshots.emplace_back(it, std::vector<double>(net.parameters().begin(), net.parameters().end()));
  };
  if (wants_snapshot(0)) emit(0);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const auto idx = stream.next();
    const Eigen::MatrixXd x = select_rows(data.inputs, idx);
    const Eigen::MatrixXd y = select_rows(data.targets, idx);
    const ForwardTrace t = net.forward(x);
    const double loss = net.batch_loss(t, y);
    if (!std::isfinite(loss))
      throw RuntimeError("training diverged at iteration " + std::to_string(it) + ": loss is not finite");
    result.log.loss.push_back(loss);
    if (progress) progress(it, loss);
    const auto g = net.backward(t, y);
    auto params = net.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= cfg.learning_rate * g[k];
    if (wants_snapshot(it)) emit(it);
  }
  return result;
}

/// Predicted class per sample: argmax of the output layer, lowest index on ties.
inline std::vector<int> predict(const Network& net, const Eigen::MatrixXd& inputs, std::size_t chunk = 256) {
  std::vector<int> out(static_cast<std::size_t>(inputs.rows()));
  const auto n_chunks = (out.size() + chunk - 1) / chunk;
  parallel_for(n_chunks, [&](std::size_t k) {
    const auto start = static_cast<Eigen::Index>(k * chunk);
    const auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk), inputs.rows() - start);
    const auto t = net.forward(inputs.middleRows(start, n));
    const auto& o = t.layers.back();
    for (Eigen::Index b = 0; b < n; ++b) {
      Eigen::Index best = 0;
      for (Eigen::Index r = 1; r < o.cols(); ++r)
        if (o(b, r) > o(b, best)) best = r;
      out[static_cast<std::size_t>(start + b)] = static_cast<int>(best);
    }
  });
  return out;
}

/// Fraction of samples whose predicted class equals the label.
inline double evaluate(const Network& net, const Examples& data) {
  if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
  const auto pred = predict(net, data.inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace geonet
