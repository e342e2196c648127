#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "geonet/error.hpp"

namespace geonet {

/// Images stored pixel-major: value of (x, y, c) at ((y * width + x) * channels + c).
struct LabeledImageSet {
  std::size_t width = 0, height = 0, channels = 1;
  int classes = 10;
  std::vector<std::vector<double>> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  std::size_t pixels() const { return width * height; }
  double at(std::size_t i, std::size_t x, std::size_t y, std::size_t c = 0) const {
    return images[i][(y * width + x) * channels + c];
  }
};

constexpr double kByteScale = 255.0;

class IdxMagicError : public IoError {
 public:
  using IoError::IoError;
};
class TruncatedFileError : public IoError {
 public:
  using IoError::IoError;
};
class CountMismatchError : public IoError {
 public:
  using IoError::IoError;
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

}  // namespace detail

inline LabeledImageSet parse_mnist(const std::vector<unsigned char>& img, const std::vector<unsigned char>& lab,
                                   const std::string& img_name = "images", const std::string& lab_name = "labels") {
  if (img.size() < 16) throw TruncatedFileError(img_name + ": header truncated");
  if (detail::be32(img, 0) != 2051)
    throw IdxMagicError(img_name + ": bad magic " + std::to_string(detail::be32(img, 0)) + " (expected 2051)");
  if (lab.size() < 8) throw TruncatedFileError(lab_name + ": header truncated");
  if (detail::be32(lab, 0) != 2049)
    throw IdxMagicError(lab_name + ": bad magic " + std::to_string(detail::be32(lab, 0)) + " (expected 2049)");
  const std::size_t n = detail::be32(img, 4), rows = detail::be32(img, 8), cols = detail::be32(img, 12);
  if (rows != 28 || cols != 28)
    throw ValidationError(img_name + ": expected 28x28 images, got " + std::to_string(rows) + "x" + std::to_string(cols));
  if (img.size() < 16 + n * rows * cols) throw TruncatedFileError(img_name + ": pixel data truncated");
  const std::size_t nl = detail::be32(lab, 4);
  if (nl != n)
    throw CountMismatchError(lab_name + " holds " + std::to_string(nl) + " labels but " + img_name + " holds " +
                             std::to_string(n) + " images");
  if (lab.size() < 8 + n) throw TruncatedFileError(lab_name + ": label data truncated");
  LabeledImageSet s;
  s.width = cols;
  s.height = rows;
  s.images.resize(n);
  s.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& im = s.images[i];
    im.resize(rows * cols);
    for (std::size_t p = 0; p < rows * cols; ++p) im[p] = img[16 + i * rows * cols + p] / kByteScale;
    s.labels[i] = lab[8 + i];
    if (s.labels[i] > 9) throw ValidationError(lab_name + ": label " + std::to_string(s.labels[i]) + " out of range");
  }
  return s;
}

inline LabeledImageSet load_mnist(const std::string& images_path, const std::string& labels_path) {
  return parse_mnist(detail::read_file(images_path), detail::read_file(labels_path), images_path, labels_path);
}

/// IDX encodings of a set with byte-valued pixels (values are rounded from [0,1]).
inline std::pair<std::vector<unsigned char>, std::vector<unsigned char>> encode_mnist(const LabeledImageSet& s) {
  std::vector<unsigned char> img, lab;
  detail::put_be32(img, 2051);
  detail::put_be32(img, static_cast<std::uint32_t>(s.size()));
  detail::put_be32(img, static_cast<std::uint32_t>(s.height));
  detail::put_be32(img, static_cast<std::uint32_t>(s.width));
  detail::put_be32(lab, 2049);
  detail::put_be32(lab, static_cast<std::uint32_t>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (double v : s.images[i]) img.push_back(static_cast<unsigned char>(std::lround(v * kByteScale)));
    lab.push_back(static_cast<unsigned char>(s.labels[i]));
  }
  return {img, lab};
}

constexpr std::size_t kCifarRecord = 3073;

inline void parse_cifar10_into(const std::vector<unsigned char>& b, LabeledImageSet& s, const std::string& name) {
  if (b.size() % kCifarRecord != 0)
    throw TruncatedFileError(name + ": size " + std::to_string(b.size()) + " is not a multiple of 3073");
  for (std::size_t r = 0; r < b.size() / kCifarRecord; ++r) {
    const unsigned char* rec = b.data() + r * kCifarRecord;
    if (rec[0] > 9) throw ValidationError(name + ": label " + std::to_string(rec[0]) + " out of range");
    std::vector<double> im(32 * 32 * 3);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 1024; ++p) im[p * 3 + c] = rec[1 + c * 1024 + p] / kByteScale;
    s.images.push_back(std::move(im));
    s.labels.push_back(rec[0]);
  }
}

inline LabeledImageSet load_cifar10(const std::vector<std::string>& batch_files) {
  LabeledImageSet s;
  s.width = s.height = 32;
  s.channels = 3;
  for (const auto& f : batch_files) parse_cifar10_into(detail::read_file(f), s, f);
  return s;
}

inline std::vector<unsigned char> encode_cifar10(const LabeledImageSet& s) {
  detail::require(s.width == 32 && s.height == 32 && s.channels == 3, "encode_cifar10: expected 32x32x3 images");
  std::vector<unsigned char> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.push_back(static_cast<unsigned char>(s.labels[i]));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 1024; ++p)
        out.push_back(static_cast<unsigned char>(std::lround(s.images[i][p * 3 + c] * kByteScale)));
  }
  return out;
}

inline LabeledImageSet to_grayscale(const LabeledImageSet& s) {
  if (s.channels != 3) throw ValidationError("to_grayscale needs 3 channels, got " + std::to_string(s.channels));
  LabeledImageSet g = s;
  g.channels = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto& im = g.images[i];
    im.assign(s.pixels(), 0.0);
    for (std::size_t p = 0; p < s.pixels(); ++p) {
      const double* px = &s.images[i][p * 3];
      im[p] = .2989 * px[0] + .5870 * px[1] + .1140 * px[2];
    }
  }
  return g;
}

inline std::vector<LabeledImageSet> split_channels(const LabeledImageSet& s) {
  if (s.channels != 3) throw ValidationError("split_channels needs 3 channels, got " + std::to_string(s.channels));
  std::vector<LabeledImageSet> out(3, s);
  for (std::size_t c = 0; c < 3; ++c) {
    out[c].channels = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto& im = out[c].images[i];
      im.assign(s.pixels(), 0.0);
      for (std::size_t p = 0; p < s.pixels(); ++p) im[p] = s.images[i][p * 3 + c];
    }
  }
  return out;
}

inline LabeledImageSet subset(const LabeledImageSet& s, std::size_t first, std::size_t count) {
  detail::require(first <= s.size(), "subset: start past the end");
  LabeledImageSet out = s;
  const auto end = std::min(s.size(), first + count);
  out.images.assign(s.images.begin() + static_cast<std::ptrdiff_t>(first), s.images.begin() + static_cast<std::ptrdiff_t>(end));
  out.labels.assign(s.labels.begin() + static_cast<std::ptrdiff_t>(first), s.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

/// Endless seeded minibatch stream: each epoch is a fresh permutation, cut into
/// fixed-size batches with the last short batch kept.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), rng_(seed) {
    detail::require(batch >= 1, "batch size must be >= 1");
    detail::require(n >= 1, "cannot batch an empty set");
    order_.resize(n);
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (pos_ >= n_) reshuffle();
    const auto end = std::min(n_, pos_ + batch_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_), order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    // Fisher-Yates with explicit draws so the order does not depend on the standard library.
    for (std::size_t i = n_; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_() % i);
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  std::size_t n_, batch_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// One epoch of batches.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t size, std::uint64_t seed) {
  BatchStream s(n, size, seed);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t seen = 0; seen < n;) {
    out.push_back(s.next());
    seen += out.back().size();
  }
  return out;
}

}  // namespace geonet
