#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "geonet/presets.hpp"
#include "geonet/snapshot.hpp"
#include "geonet/spec_file.hpp"

using namespace geonet;

namespace {

std::string spec_path(const std::string& name) { return std::string(GEONET_SPEC_DIR) + "/" + name; }

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void expect_same_shape(const Generator& a, const Generator& b) {
  ASSERT_EQ(a.depth(), b.depth());
  for (int i = 0; i <= a.depth(); ++i) EXPECT_EQ(a.layer(i).size(), b.layer(i).size()) << "layer " << i;
  for (int i = 1; i <= a.depth(); ++i) {
    EXPECT_EQ(a.arrow(i).pair_count(), b.arrow(i).pair_count()) << "arrow " << i;
    EXPECT_EQ(a.arrow(i).pairs(), b.arrow(i).pairs()) << "arrow " << i;
  }
}

const char* kSmall = R"({
  "schema": 1,
  "name": "small",
  "factors": [
    {"complete": [1, 2, 1]},
    {
      "layers": [
        {"kind": "grid", "width": 4, "height": 4},
        {"kind": "grid", "width": 4, "height": 4},
        {"kind": "set", "size": 3}
      ],
      "arrows": [
        {"kind": "metric", "radius": 1},
        {"kind": "complete"}
      ]
    }
  ],
  "activation": [
    {"semigroup": "sum", "domain": "reals", "cutoff": "relu"},
    {"semigroup": "sum", "domain": "reals", "cutoff": "exp"}
  ]
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto p = s.find(from);
  EXPECT_NE(p, std::string::npos) << from;
  return s.replace(p, from.size(), to);
}

std::string error_of(const std::string& text) {
  try {
    parse_spec(std::string_view(text), "t.json");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(SpecFile, MnistMatchesPreset) {
  const auto s = load_spec(spec_path("mnist.json"));
  EXPECT_EQ(s.name, "mnist");
  expect_same_shape(s.generator, mnist_generator());
  EXPECT_EQ(s.loss, LossKind::SoftmaxL2);
  EXPECT_EQ(s.tie, TieMode::Restricted);
  EXPECT_EQ(s.dataset, "mnist");
  EXPECT_EQ(s.angular, 0);
  ASSERT_EQ(s.activation.size(), 6u);
  const auto want = image_activation();
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(s.activation[i].semigroup, want[i].semigroup);
    EXPECT_EQ(s.activation[i].domain, want[i].domain);
    EXPECT_EQ(s.activation[i].cutoff, want[i].cutoff);
  }
  EXPECT_EQ(s.build().parameter_count(), 204480u);
}

TEST(SpecFile, CifarAndAngular) {
  const auto c = load_spec(spec_path("cifar.json"));
  expect_same_shape(c.generator, cifar_generator());
  EXPECT_EQ(c.dataset, "cifar");

  const auto a = load_spec(spec_path("mnist_angular.json"));
  EXPECT_EQ(a.angular, 16);
  EXPECT_EQ(a.generator.layer(0).size(), 784u * 17u);
  EXPECT_EQ(a.generator.layer(6).size(), 10u);
  const auto built = parse_spec(with_angular(load_spec(spec_path("mnist.json")).document, 16));
  expect_same_shape(built.generator, a.generator);
  EXPECT_EQ(built.angular, 16);
  EXPECT_THROW(with_angular(c.document, 1), ValidationError);
}

TEST(SpecFile, HashIsFnv1aOfCanonicalDump) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
  const auto doc = nlohmann::json::parse(kSmall);
  EXPECT_EQ(spec_hash(doc), fnv1a(doc.dump()));
  // Key order and whitespace do not matter.
  const auto shuffled = nlohmann::json::parse(R"({"name":"small","schema":1,)" + std::string(kSmall).substr(std::string(kSmall).find("\"factors\"")));
  EXPECT_EQ(spec_hash(shuffled), spec_hash(doc));
  auto other = doc;
  other["name"] = "other";
  EXPECT_NE(spec_hash(other), spec_hash(doc));
  EXPECT_EQ(hash_hex(0xaf63dc4c8601ec8cull), "af63dc4c8601ec8c");
  EXPECT_EQ(hash_hex(1), "0000000000000001");
}

TEST(SpecFile, SmallSpecBuilds) {
  const auto s = parse_spec(std::string_view(kSmall), "small.json");
  EXPECT_EQ(s.generator.layer(0).size(), 16u);
  EXPECT_EQ(s.generator.layer(2).size(), 3u);
  const auto net = s.build();
  EXPECT_EQ(net.layer_parameter_count(1), 49u * 2u);
  EXPECT_EQ(net.layer_parameter_count(2), 2u * 16u * 3u);
}

TEST(SpecFile, ErrorsCarryLineAndPointer) {
  const std::string base = kSmall;
  EXPECT_EQ(error_of(replace(base, R"({"kind": "complete"})", R"({"kind": "convolve"})")).rfind("t.json:14: /factors/1/arrows/1/kind: unknown arrow kind", 0), 0u);
  EXPECT_EQ(error_of(replace(base, R"("width": 4, "height": 4},
        {"kind": "set")", R"("width": 4, "height": 0},
        {"kind": "set")")).rfind("t.json:9: /factors/1/layers/1/height", 0), 0u);
  EXPECT_EQ(error_of(replace(base, R"("schema": 1)", R"("schema": 2)")).rfind("t.json:2: /schema: unsupported schema 2", 0), 0u);
  EXPECT_EQ(error_of(replace(base, R"("cutoff": "exp")", R"("cutoff": "tanh")")).rfind("t.json:20: /activation/1/cutoff", 0), 0u);
  EXPECT_EQ(error_of(replace(base, R"("complete": [1, 2, 1])", R"("complete": [1, 2])")).rfind("t.json:6: /factors/1: factor depth 2 differs from 1", 0), 0u);
  EXPECT_NE(error_of(replace(base, R"("name": "small",)", R"("name": "small")")).find("t.json:4: malformed JSON"), std::string::npos);
  EXPECT_NE(error_of(replace(base, R"("radius": 1)", R"("radius": "wide")")).find("/factors/1/arrows/0/radius"), std::string::npos);
  EXPECT_NE(error_of(replace(base, R"({"kind": "set", "size": 3})", R"({"kind": "set", "size": 3}, {"kind": "set", "size": 1})")).find("/factors/1/arrows"), std::string::npos);
  EXPECT_NE(error_of(replace(base, R"("schema": 1,)", "")).find("missing field 'schema'"), std::string::npos);
  EXPECT_THROW(parse_spec(std::string_view(replace(base, R"({"kind": "complete"})", R"({"kind": "identity"})")), "t.json"), ValidationError);
  EXPECT_THROW(load_spec("/nonexistent/spec.json"), IoError);
}

TEST(Snapshot, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "geonet_snapshot_test";
  std::filesystem::create_directories(dir);
  const std::vector<double> v = {1.0, -2.5, 1e-300, 3.141592653589793};
  write_snapshot((dir / "a.bin").string(), v);
  EXPECT_EQ(read_snapshot((dir / "a.bin").string()), v);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.bin"), 16u + 4u * 8u);
  {
    std::ofstream(dir / "bad.bin") << "NOTASNAPSHOT....";
  }
  EXPECT_THROW(read_snapshot((dir / "bad.bin").string()), IoError);
  std::filesystem::resize_file(dir / "a.bin", 30);
  EXPECT_THROW(read_snapshot((dir / "a.bin").string()), IoError);
  EXPECT_THROW(read_snapshot((dir / "none.bin").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Snapshot, ManifestRoundTripAndChecks) {
  const auto dir = std::filesystem::temp_directory_path() / "geonet_manifest_test";
  std::filesystem::create_directories(dir / "snapshots");
  write_snapshot((dir / "snapshots/iter_5.bin").string(), std::vector<double>{1.0, 2.0});
  const std::vector<double> loss = {0.5, 0.25};
  write_loss_log(dir / "loss.csv", loss);
  RunManifest m;
  m.spec = nlohmann::json::parse(kSmall);
  m.spec_hash = hash_hex(spec_hash(m.spec));
  m.seed = 7;
  m.iterations = 5;
  m.snapshots = {{5, "snapshots/iter_5.bin"}};
  m.log = "loss.csv";
  m.train = {{"lr", 0.1}};
  write_manifest(m, dir / "manifest.json");
  const auto back = read_manifest(dir / "manifest.json");
  EXPECT_EQ(manifest_json(back), manifest_json(m));
  EXPECT_EQ(back.dir, dir);
  EXPECT_EQ(read_snapshot(back.resolve(back.snapshots[0].file).string()), (std::vector<double>{1.0, 2.0}));

  std::ifstream in(dir / "loss.csv");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text, "iteration,loss\n1,0.5\n2,0.25\n");

  auto tampered = m;
  tampered.spec["name"] = "changed";
  write_manifest(tampered, dir / "bad.json");
  EXPECT_THROW(read_manifest(dir / "bad.json"), IoError);
  auto missing = m;
  missing.snapshots.push_back({9, "snapshots/iter_9.bin"});
  write_manifest(missing, dir / "missing.json");
  EXPECT_THROW(read_manifest(dir / "missing.json"), IoError);
  {
    std::ofstream(dir / "broken.json") << "{";
  }
  EXPECT_THROW(read_manifest(dir / "broken.json"), IoError);
  std::filesystem::remove_all(dir);
}
