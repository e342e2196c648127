#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geonet.hpp"

namespace fs = std::filesystem;
using namespace geonet;

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

const char* short_kind(LayerKind k) {
  switch (k) {
    case LayerKind::FullyConnected: return "FC";
    case LayerKind::GridConvolutional: return "Conv";
    case LayerKind::Pooling: return "Pool";
    case LayerKind::Other: return "Other";
  }
  return "?";
}

std::string act_name(const Activator& a) {
  return std::string(a.semigroup == Semigroup::Sum ? "sum" : "max") + "/" +
      (a.domain == CoefficientDomain::AllReals ? "reals" : "one") + "/" +
      (a.cutoff == Cutoff::Identity ? "identity" : a.cutoff == Cutoff::ReLU ? "relu" : "exp");
}

/// "width 3, stride 2" for pooling arrows, read off the structural leaves.
std::string pooling_detail(const Generator& g, int i) {
  for (const auto& f : g.atomic_factors()) {
    std::vector<const CorrInfo*> leaves;
    f.arrow(i).info().flatten_into(leaves);
    for (const auto* p : leaves)
      if (p->kind == CorrKind::GridPooling || p->kind == CorrKind::Pooling)
        return " (window " + std::to_string(p->n - p->m + 1) + ", stride " + std::to_string(p->stride) + ")";
  }
  return "";
}

nlohmann::json read_spec_doc(const std::string& path) {
  const auto text = read_text_file(path);
  auto doc = parse_spec_text(text, path);
  parse_spec(doc, path, text);  // validate with line references before any override
  return doc;
}

int cmd_build(const std::string& spec_path) {
  const auto doc = read_spec_doc(spec_path);
  const auto spec = parse_spec(doc, spec_path);
  const auto& g = spec.generator;
  const auto net = spec.build();
  std::printf("spec %s (hash %s)\n", spec.name.c_str(), hash_hex(spec_hash(doc)).c_str());
  for (const auto& f : g.atomic_factors())
    if (auto t = f.complete_type()) std::printf("type %s  (%s)\n", join_sizes(*t).c_str(), f.name().c_str());
  std::printf("depth %d, vertices %zu, parameters %zu\n", g.depth(), [&] {
    std::size_t v = 0;
    for (int i = 0; i <= g.depth(); ++i) v += g.layer(i).size();
    return v;
  }(), net.parameter_count());
  std::printf("layer 0: %zu vertices\n", g.layer(0).size());
  for (int i = 1; i <= g.depth(); ++i) {
    const auto kind = classify_layer(g, i);
    std::printf("layer %d: %zu vertices, %zu edges, %zu parameters, %s%s, %s\n", i, g.layer(i).size(),
                g.arrow(i).pair_count(), net.layer_parameter_count(i), short_kind(kind),
                kind == LayerKind::Pooling ? pooling_detail(g, i).c_str() : "", act_name(spec.activation[i - 1]).c_str());
  }
  return 0;
}

struct TrainFlags {
  std::string spec, data, out = "runs", cifar_mode = "gray", init = "uniform";
  std::size_t train_count = 10000, test_count = 10000, iterations = 1000, batch = 64;
  double lr = 0.1;
  std::uint64_t seed = 1;
  std::vector<std::size_t> snapshot_at;
  int angular = 0;
};

std::pair<LabeledImageSet, LabeledImageSet> load_data(const NetworkSpec& spec, const TrainFlags& f) {
  const fs::path d = f.data;
  LabeledImageSet train, test;
  if (spec.dataset == "mnist") {
    train = load_mnist((d / "train-images-idx3-ubyte").string(), (d / "train-labels-idx1-ubyte").string());
    if (f.test_count) test = load_mnist((d / "t10k-images-idx3-ubyte").string(), (d / "t10k-labels-idx1-ubyte").string());
  } else {
    std::vector<std::string> batches;
    for (int b = 1; b <= 5; ++b) batches.push_back((d / ("data_batch_" + std::to_string(b) + ".bin")).string());
    train = load_cifar10(batches);
    if (f.test_count) test = load_cifar10({(d / "test_batch.bin").string()});
    auto reduce = [&](const LabeledImageSet& s) -> LabeledImageSet {
      if (f.cifar_mode == "gray") return to_grayscale(s);
      if (f.cifar_mode == "rgb") return s;
      const auto parts = split_channels(s);
      if (f.cifar_mode == "red") return parts[0];
      if (f.cifar_mode == "green") return parts[1];
      return parts[2];
    };
    train = reduce(train);
    if (f.test_count) test = reduce(test);
  }
  if (f.train_count > train.images.size())
    throw ValidationError("--train-count " + std::to_string(f.train_count) + " exceeds the " +
                          std::to_string(train.images.size()) + " available images");
  train = subset(train, 0, f.train_count);
  if (f.test_count) test = subset(test, 0, std::min(f.test_count, test.images.size()));
  return {train, test};
}

int cmd_train(TrainFlags f) {
  auto doc = read_spec_doc(f.spec);
  if (f.angular) doc = with_angular(doc, f.angular);
  const auto spec = parse_spec(doc, f.spec);
  if (spec.dataset == "cifar" && f.cifar_mode != "gray" && f.cifar_mode != "rgb" && f.cifar_mode != "red" &&
      f.cifar_mode != "green" && f.cifar_mode != "blue")
    throw ValidationError("--cifar-mode expects gray, red, green, blue or rgb");
  auto net = spec.build();
  const auto [train_set, test_set] = load_data(spec, f);
  const auto train = image_examples(train_set, spec.angular);
  if (static_cast<std::size_t>(train.inputs.cols()) != net.layer_size(0))
    throw ValidationError("input layer has " + std::to_string(net.layer_size(0)) + " vertices but the data gives " +
                          std::to_string(train.inputs.cols()) + " values per image");

  const auto hash = hash_hex(spec_hash(doc));
  const fs::path dir = fs::path(f.out) / hash / std::to_string(f.seed);
  fs::create_directories(dir / "snapshots");
  fs::create_directories(dir / "logs");

  TrainConfig cfg;
  cfg.learning_rate = f.lr;
  cfg.batch_size = f.batch;
  cfg.iterations = f.iterations;
  cfg.seed = f.seed;
  cfg.init = f.init == "zero" ? InitScheme::Zero : InitScheme::UniformScaled;
  cfg.snapshot_at = f.snapshot_at;
  if (std::find(cfg.snapshot_at.begin(), cfg.snapshot_at.end(), f.iterations) == cfg.snapshot_at.end())
    cfg.snapshot_at.push_back(f.iterations);
  std::sort(cfg.snapshot_at.begin(), cfg.snapshot_at.end());
  for (auto s : cfg.snapshot_at)
    if (s < 1 || s > f.iterations) throw ValidationError("snapshot iteration " + std::to_string(s) + " is outside 1.." + std::to_string(f.iterations));

  RunManifest m;
  m.spec_hash = hash;
  m.seed = f.seed;
  m.spec = doc;
  m.log = "logs/loss.csv";
  m.train = {{"learning_rate", f.lr}, {"batch_size", f.batch}, {"iterations", f.iterations}, {"train_count", f.train_count},
             {"init", f.init},        {"cifar_mode", f.cifar_mode}};
  const auto result = sgd_train(
      net, train, cfg,
      [&](std::size_t it, std::span<const double> params) {
        const auto rel = "snapshots/iter_" + std::to_string(it) + ".bin";
        write_snapshot((dir / rel).string(), params);
        m.snapshots.push_back({it, rel});
      },
      [&](std::size_t it, double loss) {
        if (it % 100 == 0 || it == f.iterations) std::fprintf(stderr, "iteration %zu loss %.6f\n", it, loss);
      });
  m.iterations = result.log.loss.size();
  write_loss_log(dir / m.log, result.log.loss);

  nlohmann::json metrics = {{"final_loss", result.log.loss.back()}};
  if (f.test_count) {
    const double acc = evaluate(net, image_examples(test_set, spec.angular));
    metrics["test_accuracy"] = acc;
    metrics["test_count"] = test_set.images.size();
    std::printf("test accuracy %.4f on %zu images\n", acc, test_set.images.size());
  }
  std::ofstream(dir / "logs/metrics.json") << metrics.dump(2) << '\n';
  write_manifest(m, dir / "manifest.json");
  std::printf("%s\n", (dir / "manifest.json").string().c_str());
  return 0;
}

struct AnalyzeFlags {
  std::vector<std::string> manifests;
  std::string out, classes = "interior", snapshot = "final";
  int layer = 1;
  std::size_t k = 15, components = 2, intervals = 10;
  double rho = 30.0, overlap = 0.5, max_scale = 0.0;
};

int cmd_analyze(const AnalyzeFlags& f) {
  std::vector<RunManifest> runs;
  for (const auto& p : f.manifests) runs.push_back(read_manifest(p));
  for (const auto& r : runs)
    if (r.spec_hash != runs.front().spec_hash)
      throw ValidationError("manifests mix specs " + runs.front().spec_hash + " and " + r.spec_hash);
  const auto spec = parse_spec(runs.front().spec, f.manifests.front());
  const auto net = spec.build();
  ClassSelector sel = f.classes == "all" ? ClassSelector::all() : ClassSelector::interior();
  if (f.classes != "all" && f.classes != "interior") throw ValidationError("--classes expects interior or all");

  std::vector<PointCloud> clouds;
  for (const auto& r : runs)
    for (const auto& s : r.snapshots) {
      const bool take = f.snapshot == "all" || (f.snapshot == "final" && s.iteration == r.iterations) ||
                        f.snapshot == std::to_string(s.iteration);
      if (!take) continue;
      const auto params = read_snapshot(r.resolve(s.file).string());
      clouds.push_back(extract_weight_vectors(net, params, f.layer, sel));
    }
  if (clouds.empty()) throw ValidationError("no snapshot matches --snapshot " + f.snapshot);
  const auto w = build_weight_cloud(clouds, f.k, f.rho);
  if (w.filtered.empty()) throw ValidationError("the density filter left no points");

  const fs::path out = f.out.empty() ? runs.front().dir / "analysis" : fs::path(f.out);
  fs::create_directories(out);
  {
    std::ofstream csv(out / "cloud.csv");
    write_cloud_csv(csv, w.filtered);
  }
  const auto model = weight_mapper(w.filtered, std::min(f.components, w.filtered.dim()), f.intervals, f.overlap);
  const auto means = mean_patch_per_node(model, w.filtered);
  std::ofstream(out / "mapper.json") << mapper_json(model, means).dump(2) << '\n';
  std::ofstream(out / "mapper.dot") << mapper_dot(model, means);
  const auto bars = vr_persistence(w.filtered, f.max_scale > 0 ? std::optional<double>(f.max_scale) : std::nullopt);
  std::ofstream(out / "barcode.json") << barcode_json(bars).dump(2) << '\n';
  std::ofstream(out / "barcode.svg") << barcode_svg(bars);

  std::size_t h1 = bars.of_dim(1).size();
  nlohmann::json summary = {{"snapshots", clouds.size()},       {"points", w.raw.size()},
                            {"dropped_flat", w.dropped},        {"kept", w.filtered.size()},
                            {"mapper_nodes", model.size()},     {"mapper_edges", model.edges.size()},
                            {"mapper_components", model.component_count()},
                            {"mapper_cycle_rank", model.cycle_rank()},
                            {"dim1_bars", h1},                  {"max_scale", bars.max_scale}};
  std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
  std::printf("%s\n", summary.dump().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geonet: generator-built networks and topological analysis of their weights"};
  app.require_subcommand(1);

  std::string build_spec;
  auto* build = app.add_subcommand("build", "Realize a spec and print its layer summary");
  build->add_option("--spec,spec", build_spec, "Generator spec file")->required();

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train a network and write snapshots under runs/<hash>/<seed>/");
  train->add_option("--spec", tf.spec, "Generator spec file")->required();
  train->add_option("--data", tf.data, "Dataset directory (MNIST IDX files or CIFAR-10 binary batches)")->required();
  train->add_option("--out", tf.out, "Artifacts root")->capture_default_str();
  train->add_option("--train-count", tf.train_count, "Training images used (from the start of the set)")->capture_default_str();
  train->add_option("--test-count", tf.test_count, "Test images evaluated (0 skips)")->capture_default_str();
  train->add_option("--iterations", tf.iterations)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--batch", tf.batch)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lr", tf.lr, "Learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tf.seed)->capture_default_str();
  train->add_option("--snapshot-at", tf.snapshot_at, "Iterations to snapshot (the last is always kept)")->delimiter(',');
  train->add_option("--angular", tf.angular, "Add the (mu_n)+ angular factor and augment inputs");
  train->add_option("--cifar-mode", tf.cifar_mode, "gray, red, green, blue or rgb")->capture_default_str();
  train->add_option("--init", tf.init, "uniform or zero")->capture_default_str()->check(CLI::IsMember({"uniform", "zero"}));

  AnalyzeFlags af;
  auto* analyze = app.add_subcommand("analyze", "Weight cloud, Mapper graph and barcode from run manifests");
  analyze->add_option("--manifest,manifest", af.manifests, "Run manifest(s)")->required();
  analyze->add_option("--layer", af.layer)->capture_default_str();
  analyze->add_option("--classes", af.classes, "interior or all")->capture_default_str();
  analyze->add_option("--snapshot", af.snapshot, "final, all, or an iteration")->capture_default_str();
  analyze->add_option("--k", af.k, "Codensity neighbour")->capture_default_str();
  analyze->add_option("--rho", af.rho, "Percent of densest points kept")->capture_default_str();
  analyze->add_option("--components", af.components, "PCA filters for Mapper")->capture_default_str();
  analyze->add_option("--intervals", af.intervals, "Cover intervals per filter")->capture_default_str();
  analyze->add_option("--overlap", af.overlap, "Cover overlap fraction")->capture_default_str();
  analyze->add_option("--max-scale", af.max_scale, "Rips max scale (default: 90th percentile distance)");
  analyze->add_option("--out", af.out, "Output directory (default: <run>/analysis)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (*build) return cmd_build(build_spec);
    if (*train) return cmd_train(tf);
    if (*analyze) return cmd_analyze(af);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
