#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geonet/error.hpp"
#include "geonet/spec_file.hpp"

namespace geonet {

// Snapshot file: 8-byte magic, u64 count, then count little-endian f64 slot values in slot-id order.
inline constexpr char kSnapshotMagic[8] = {'G', 'N', 'S', 'N', 'A', 'P', '0', '1'};

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

inline void write_snapshot(const std::string& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::uint64_t n = values.size();
  out.write(kSnapshotMagic, sizeof kSnapshotMagic);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<double> read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open snapshot " + path);
  char magic[8];
  std::uint64_t n = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kSnapshotMagic, sizeof magic) != 0) throw IoError(path + ": not a snapshot file");
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in) throw IoError(path + ": truncated header");
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::uint64_t>(in.gcount()) != n * sizeof(double)) throw IoError(path + ": truncated data");
  return v;
}

struct SnapshotEntry {
  std::size_t iteration = 0;
  std::string file;  // relative to the manifest's directory
};

struct RunManifest {
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::vector<SnapshotEntry> snapshots;
  std::string log;  // relative to the manifest's directory
  nlohmann::json spec;
  nlohmann::json train;  // training flags
  std::filesystem::path dir;  // where the manifest lives (not serialized)

  std::filesystem::path resolve(const std::string& rel) const { return dir / rel; }
};

inline nlohmann::json manifest_json(const RunManifest& m) {
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& s : m.snapshots) snaps.push_back({{"iteration", s.iteration}, {"file", s.file}});
  return {{"spec_hash", m.spec_hash}, {"seed", m.seed},   {"iterations", m.iterations}, {"snapshots", snaps},
          {"log", m.log},             {"spec", m.spec},   {"train", m.train}};
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_json(m).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

/// Reads a manifest and checks the embedded spec against its hash and that listed files exist.
inline RunManifest read_manifest(const std::filesystem::path& path) {
  const auto text = read_text_file(path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
  RunManifest m;
  try {
    m.spec_hash = j.at("spec_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.iterations = j.at("iterations").get<std::size_t>();
    for (const auto& s : j.at("snapshots")) m.snapshots.push_back({s.at("iteration").get<std::size_t>(), s.at("file").get<std::string>()});
    m.log = j.at("log").get<std::string>();
    m.spec = j.at("spec");
    m.train = j.value("train", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": incomplete manifest: " + e.what());
  }
  m.dir = path.parent_path();
  if (hash_hex(spec_hash(m.spec)) != m.spec_hash) throw IoError(path.string() + ": spec hash does not match embedded spec");
  for (const auto& s : m.snapshots)
    if (!std::filesystem::exists(m.resolve(s.file))) throw IoError(path.string() + ": missing snapshot " + s.file);
  return m;
}

/// Loss log: one "iteration,loss" row per iteration, printed round-trip exact.
inline void write_loss_log(const std::filesystem::path& path, std::span<const double> loss) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, loss[i]);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace geonet
