// Acceptance checks: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "geonet/convstruct.hpp"
#include "geonet/corr.hpp"
#include "geonet/data.hpp"
#include "geonet/features.hpp"
#include "geonet/mapper.hpp"
#include "geonet/presets.hpp"
#include "geonet/spec_file.hpp"
#include "geonet/tda.hpp"
#include "geonet/weights.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace geonet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string data;
  bool full9 = false;
  std::size_t angular_cap = 600;
};

std::string fmt(const char* f, auto... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

LabeledImageSet mnist_part(const std::string& dir, bool train, std::size_t count) {
  const std::string p = train ? "train" : "t10k";
  return subset(load_mnist(dir + "/" + p + "-images-idx3-ubyte", dir + "/" + p + "-labels-idx1-ubyte"), 0, count);
}

// 1 --------------------------------------------------------------------------

Outcome pooling_floor() {
  const auto fine = Space::interval(-100, 100), coarse = Space::interval(-50, 50);
  const auto p = pooling_corr(0, 1, 2, fine, coarse);
  std::size_t bad = 0;
  for (long x = -100; x <= 100; ++x) {
    const auto img = p.image(fine.at(x, 0));
    const long want = static_cast<long>(std::floor(static_cast<double>(x) / 2.0));
    bad += img.size() != 1 || coarse.coords(img[0]).first != want;
  }
  bad += p.pair_count() != 201;
  return {bad == 0, fmt("%zu pairs, %zu mismatches", p.pair_count(), bad)};
}

// 2 --------------------------------------------------------------------------

Outcome weight_tying() {
  const auto t = Space::torus(28, 28);
  const auto cay = cayley_structure(metric_corr(t, 1.0), torus_translation(t, t));
  const auto cay_slots = structure_slots(cay).count;

  const auto g = make_grid(28, 28);
  const auto& c = grid_translation_tying(g, 1.0).structure;
  const auto slots = structure_slots(c);
  const auto o = oracle::orbit_oracle(28, 28, 1);

  std::vector<std::uint32_t> lib(g.size());
  for (ElementId j = 0; j < g.size(); ++j) lib[j] = c.class_of(j);
  const bool classes_match = oracle::same_partition(lib, o.cls);

  const auto& a = slots.arrow;
  std::vector<std::pair<int, std::pair<long, long>>> keys;
  std::vector<std::uint32_t> ids;
  for (ElementId v = 0; v < a.target().size(); ++v) {
    const long vx = v % 28, vy = v / 28;
    const auto in = a.preimage(v);
    for (std::size_t p = 0; p < in.size(); ++p) {
      keys.push_back({o.cls[v], {static_cast<long>(in[p] % 28) - vx, static_cast<long>(in[p] / 28) - vy}});
      ids.push_back(slots.slot[a.preimage_offset(v) + p]);
    }
  }
  const bool slots_match = oracle::same_partition(ids, keys);
  std::size_t oracle_slots = 0;
  for (const auto& off : o.offsets) oracle_slots += off.size();

  const bool ok = cay.class_count() == 1 && cay_slots == 9 && c.class_count() == 9 && slots.count == 49 &&
                  o.offsets.size() == 9 && oracle_slots == 49 && classes_match && slots_match;
  return {ok, fmt("torus: %zu class, %zu slots; G28: %zu classes, %zu slots; oracle %zu/%zu; partitions %s", cay.class_count(),
                  cay_slots, c.class_count(), slots.count, o.offsets.size(), oracle_slots,
                  classes_match && slots_match ? "agree" : "differ")};
}

// 3 --------------------------------------------------------------------------

Eigen::MatrixXd random_inputs(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

Generator small_image(long side, std::vector<long> channels, int classes) {
  ImageNetSpec s;
  s.side = side;
  s.channels = std::move(channels);
  s.classes = classes;
  return product_generator(image_channel_factor(s), image_structural_factor(s));
}

Outcome forward_backward() {
  const std::vector<long> ch = {1, 3, 3, 2, 2, 3, 1};
  auto net = Network::build(small_image(8, ch, 4), image_activation(), {});
  oracle::ImageOracle o{8, ch, 4, {}, {}};
  const auto load_err = oracle::load_oracle_weights(net, o);
  const auto x = random_inputs(20, 64, 3);
  const auto t = net.forward(x);
  double worst_fwd = 0.0;
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const Eigen::VectorXd row = x.row(b).transpose();
    const auto want = o.forward(std::span<const double>(row.data(), 64));
    for (int k = 0; k < 4; ++k)
      worst_fwd = std::max(worst_fwd, std::abs(t.layers.back()(b, k) - want[static_cast<std::size_t>(k)]) /
                                          std::abs(want[static_cast<std::size_t>(k)]));
  }

  auto small = Network::build(small_image(4, {1, 2, 2, 2, 2, 2, 1}, 3), image_activation(), {});
  small.initialize(InitScheme::UniformScaled, 5);
  const auto xs = random_inputs(5, 16, 9);
  const auto y = oracle::one_hot({0, 2, 1, 1, 0}, 3);
  const auto g = small.backward(small.forward(xs), y);
  const auto fd = oracle::numeric_gradient(small, xs, y, 1e-4);
  double worst_grad = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    worst_grad = std::max(worst_grad, std::abs(g[k] - fd[k]) / std::max(std::abs(fd[k]), 1e-4));

  const bool ok = load_err.empty() && worst_fwd <= 1e-6 && small.parameter_count() <= 200 && worst_grad <= 1e-4;
  return {ok, fmt("forward max rel err %.2e%s; %zu-slot gradient max rel err %.2e", worst_fwd,
                  load_err.empty() ? "" : (" (" + load_err + ")").c_str(), small.parameter_count(), worst_grad)};
}

// 4 --------------------------------------------------------------------------

Outcome mnist_accuracy(const Options& opt) {
  const auto train = mnist_part(opt.data, true, 10000);
  const auto test = mnist_part(opt.data, false, 10000);
  auto net = Network::build(mnist_generator(), image_activation(), {LossKind::SoftmaxL2, TieMode::Restricted});
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 64;
  cfg.iterations = 3000;
  cfg.seed = 1;
  sgd_train(net, image_examples(train), cfg);
  const double acc = evaluate(net, image_examples(test));
  return {acc >= 0.90, fmt("test accuracy %.4f on %zu images after %zu iterations", acc, test.size(), cfg.iterations)};
}

// 5 --------------------------------------------------------------------------

// Iterations until the 25-iteration running mean of the minibatch loss drops to
// the threshold, or 0 when the cap is reached first. Same loop as sgd_train.
std::size_t iterations_to(Network& net, const Examples& data, std::uint64_t seed, double threshold, double lr,
                          std::size_t cap) {
  net.initialize(InitScheme::UniformScaled, seed);
  BatchStream stream(data.size(), 64, seed);
  std::vector<double> window;
  double sum = 0.0;
  for (std::size_t it = 1; it <= cap; ++it) {
    const auto idx = stream.next();
    const Eigen::MatrixXd x = select_rows(data.inputs, idx);
    const Eigen::MatrixXd y = select_rows(data.targets, idx);
    const auto t = net.forward(x);
    const double loss = net.batch_loss(t, y);
    if (!std::isfinite(loss)) return 0;
    window.push_back(loss);
    sum += loss;
    if (window.size() > 25) sum -= window[window.size() - 26];
    if (window.size() >= 25 && sum / 25.0 <= threshold) return it;
    const auto g = net.backward(t, y);
    auto p = net.parameters();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
  }
  return 0;
}

Outcome angular_speedup(const Options& opt) {
  const auto train = mnist_part(opt.data, true, 10000);
  const double threshold = 0.3;
  // At 0.1 the angular net oscillates: its directional channels are several times larger than raw pixels.
  const double lr = 0.05;
  auto base = Network::build(mnist_generator(), image_activation(), {});
  auto ang = Network::build(product_generator(mnist_generator(), angular_factor({AngularKind::Constant, 6, 16, true})),
                            image_activation(), {});
  std::vector<double> nb, na;
  std::string runs;
  {
    const auto plain = image_examples(train);
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto k = iterations_to(base, plain, seed, threshold, lr, opt.angular_cap);
      nb.push_back(k ? static_cast<double>(k) : INFINITY);
    }
  }
  {
    const auto aug = image_examples(train, 16);
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto k = iterations_to(ang, aug, seed, threshold, lr, opt.angular_cap);
      na.push_back(k ? static_cast<double>(k) : INFINITY);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) runs += fmt(" %g/%g", nb[i], na[i]);
  std::sort(nb.begin(), nb.end());
  std::sort(na.begin(), na.end());
  const double ratio = na[1] / nb[1];
  return {std::isfinite(na[1]) && std::isfinite(nb[1]) && ratio <= 0.8,
          fmt("lr %.2f, median iterations to loss %.2f: baseline %g, angular %g, ratio %.3f (per seed base/angular:%s)", lr, threshold,
              nb[1], na[1], ratio, runs.c_str())};
}

// 6 --------------------------------------------------------------------------

Outcome persistence_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(2, 10), dim(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t bad = 0;
  std::string first;
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = size(rng), d = dim(rng);
    PointCloud x(d);
    std::vector<double> p(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : p) v = u(rng);
      x.push_back(p);
    }
    if (const auto m = oracle::rips_mismatch(x)) {
      if (!bad) first = fmt(" (cloud %d: %s)", trial, m->c_str());
      ++bad;
    }
  }
  return {bad == 0, fmt("%zu of 50 clouds disagree%s", bad, first.c_str())};
}

// 7 --------------------------------------------------------------------------

Outcome circle_recovery() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 0.05);
  PointCloud x(2);
  for (int i = 0; i < 200; ++i) {
    const double t = angle(rng);
    const double p[2] = {std::cos(t) + noise(rng), std::sin(t) + noise(rng)};
    x.push_back(p);
  }
  const auto kept = density_filter(x, 10, 70.0);
  const auto bc = vr_persistence(kept);
  auto h1 = bc.of_dim(1);
  std::sort(h1.begin(), h1.end(), [](const Bar& a, const Bar& b) { return a.length() > b.length(); });
  if (h1.empty()) return {false, "no dim-1 bars"};
  const double second = h1.size() > 1 ? h1[1].length() : 0.0;
  const double mid = std::isinf(h1[0].death) ? h1[0].birth : 0.5 * (h1[0].birth + h1[0].death);
  const auto betti = betti_at_scale(bc, mid);
  const bool ok = h1[0].length() >= 3.0 * second && betti == std::pair<std::size_t, std::size_t>{1, 1};
  return {ok, fmt("%zu points kept, %zu dim-1 bars, longest [%.3f, %.3f), second length %.3f, betti at %.3f = (%zu, %zu)",
                  kept.size(), h1.size(), h1[0].birth, h1[0].death, second, mid, betti.first, betti.second)};
}

// 8 --------------------------------------------------------------------------

Outcome mapper_properties() {
  std::mt19937_64 rng(88);
  std::uniform_int_distribution<std::size_t> size(20, 200), dim(1, 4);
  std::uniform_real_distribution<double> len(0.3, 1.5), frac(0.2, 0.9);
  std::normal_distribution<double> g;
  std::size_t bad = 0, nodes = 0;
  std::string first;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = size(rng), d = dim(rng);
    PointCloud x(d);
    std::vector<double> p(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : p) v = g(rng);
      x.push_back(p);
    }
    std::vector<std::size_t> axes = {0};
    if (d > 1 && trial % 2) axes.push_back(1);
    const auto f = coordinate_filters(x, axes);
    CoverSpec c;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const double l = len(rng);
      c.ls.emplace_back(l, l * frac(rng));
    }
    const auto seq = model_sequence(n, cloud_metric(x), f, c, 2);
    std::vector<std::string> v;
    CoverSpec ci = c;
    for (const auto& m : seq) {
      auto e = oracle::mapper_violations(m, f, ci);
      v.insert(v.end(), e.begin(), e.end());
      nodes += m.size();
      ci = double_cover(ci);
    }
    auto e = oracle::correspondence_violations(seq);
    v.insert(v.end(), e.begin(), e.end());
    if (!v.empty()) {
      if (!bad) first = fmt(" (cloud %d: %s)", trial, v.front().c_str());
      ++bad;
    }
  }
  return {bad == 0, fmt("%zu of 100 clouds violate an invariant, %zu nodes checked%s", bad, nodes, first.c_str())};
}

// 9 --------------------------------------------------------------------------

Outcome pipeline_report(const Options& opt) {
  const std::size_t runs = opt.full9 ? 10 : 3, iters = opt.full9 ? 2000 : 600;
  const auto train = image_examples(mnist_part(opt.data, true, 10000));
  std::size_t with_cycle = 0, with_bar = 0, both = 0;
  std::string per;
  for (std::size_t r = 0; r < runs; ++r) {
    auto net = Network::build(mnist_generator(), image_activation(), {});
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.iterations = iters;
    cfg.seed = 100 + r;
    // Eleven snapshots over the second half of training.
    for (std::size_t k = 0; k <= 10; ++k) cfg.snapshot_at.push_back(iters / 2 + k * (iters / 20));
    const auto res = sgd_train(net, train, cfg);
    std::vector<PointCloud> clouds;
    for (const auto& [it, params] : res.snapshots) clouds.push_back(extract_weight_vectors(net, params, 1));
    const auto w = build_weight_cloud(clouds, 15, 30.0);
    const auto m = weight_mapper(w.filtered, 2, 10, 0.5);
    const auto bc = vr_persistence(w.filtered);
    const bool cyc = m.cycle_rank() > 0, bar = !bc.of_dim(1).empty();
    with_cycle += cyc;
    with_bar += bar;
    both += cyc && bar;
    per += fmt(" %zu/%zu", m.cycle_rank(), bc.of_dim(1).size());
  }
  return {2 * both > runs, fmt("%zu runs x %zu iterations: mapper cycle in %zu, dim-1 bar in %zu, both in %zu "
                               "(cycle rank/dim-1 bars per run:%s)",
                               runs, iters, with_cycle, with_bar, both, per.c_str())};
}

// 10 -------------------------------------------------------------------------

std::string artifacts(const Network& net, const TrainResult& r) {
  std::ostringstream out;
  for (double l : r.log.loss) out << std::hexfloat << l << '\n';
  std::vector<PointCloud> clouds;
  for (const auto& [it, params] : r.snapshots) {
    for (double v : params) out << std::hexfloat << v << ' ';
    clouds.push_back(extract_weight_vectors(net, params, 1));
  }
  const auto w = build_weight_cloud(clouds, 3, 100.0);
  write_cloud_csv(out, w.filtered);
  const auto m = weight_mapper(w.filtered, 2, 10, 0.5);
  out << mapper_json(m, mean_patch_per_node(m, w.filtered)).dump() << barcode_json(vr_persistence(w.filtered)).dump();
  return out.str();
}

Outcome determinism(const Options& opt) {
  LabeledImageSet set;
  if (fs::exists(opt.data + "/train-images-idx3-ubyte")) {
    set = mnist_part(opt.data, true, 500);
  } else {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    set.width = set.height = 28;
    for (int i = 0; i < 500; ++i) {
      std::vector<double> im(784);
      for (double& v : im) v = u(rng);
      set.images.push_back(im);
      set.labels.push_back(i % 10);
    }
  }
  const auto data = image_examples(set);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.iterations = 60;
  cfg.seed = 42;
  cfg.snapshot_at = {20, 40, 60};
  std::vector<std::string> got;
  // The second run caps the worker pool at one thread.
  for (const char* threads : {"", "1"}) {
    if (*threads) setenv("GEONET_THREADS", threads, 1);
    auto net = Network::build(mnist_generator(), image_activation(), {});
    got.push_back(artifacts(net, sgd_train(net, data, cfg)));
  }
  unsetenv("GEONET_THREADS");
  return {got[0] == got[1], fmt("two runs, %zu bytes of logs, snapshots and analysis output %s", got[0].size(),
                                got[0] == got[1] ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options opt;
  if (const char* env = std::getenv("GEONET_MNIST_DIR")) opt.data = env;
  if (opt.data.empty()) opt.data = "data/mnist";
  std::vector<int> only;
  app.add_option("--data", opt.data, "MNIST directory (default $GEONET_MNIST_DIR or data/mnist)");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_flag("--full", opt.full9, "Run the qualitative pipeline check at full size (10 runs x 2000 iterations)");
  app.add_option("--angular-cap", opt.angular_cap, "Iteration cap for the angular speedup check")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const bool have_mnist = fs::exists(opt.data + "/train-images-idx3-ubyte") && fs::exists(opt.data + "/t10k-images-idx3-ubyte");
  auto needs_mnist = [&](std::function<Outcome()> f) {
    return [f, have_mnist, &opt]() -> Outcome {
      if (!have_mnist) return {false, "MNIST files not found in " + opt.data};
      return f();
    };
  };
  struct Criterion {
    int id;
    const char* name;
    bool gating;
    double limit;  // seconds, 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "pooling correspondence is floor(x/2)", true, 1, pooling_floor},
      {2, "weight tying slots and classes", true, 10, weight_tying},
      {3, "forward/backward against oracles", true, 60, forward_backward},
      {4, "MNIST test accuracy >= 0.90", true, 1200, needs_mnist([&] { return mnist_accuracy(opt); })},
      {5, "angular factor speeds up training", true, 0, needs_mnist([&] { return angular_speedup(opt); })},
      {6, "Rips persistence matches brute force", true, 60, persistence_oracle},
      {7, "noisy circle gives one dominant loop", true, 60, circle_recovery},
      {8, "Mapper invariants and correspondences", true, 120, mapper_properties},
      {9, "weight cloud pipeline (report only)", false, 0, needs_mnist([&] { return pipeline_report(opt); })},
      {10, "bit-identical reruns", true, 0, [&] { return determinism(opt); }},
  };

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && c.limit > 0 && secs > c.limit) {
      o.pass = false;
      o.detail += fmt("; over the %.0fs budget", c.limit);
    }
    std::printf("criterion %d: %s %s: %s [%.1fs]%s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                c.gating ? "" : " (not gating)");
    std::fflush(stdout);
    failed += !o.pass && c.gating;
  }
  return failed ? 1 : 0;
}
