#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "geonet/data.hpp"

using namespace geonet;

namespace {

LabeledImageSet byte_images(std::size_t n, std::size_t w, std::size_t h, std::size_t ch) {
  LabeledImageSet s;
  s.width = w;
  s.height = h;
  s.channels = ch;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> im(w * h * ch);
    for (std::size_t p = 0; p < im.size(); ++p) im[p] = static_cast<double>((i * 31 + p * 7) % 256) / 255.0;
    s.images.push_back(im);
    s.labels.push_back(static_cast<int>(i % 10));
  }
  return s;
}

std::string write_temp(const std::string& name, const std::vector<unsigned char>& bytes) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return p.string();
}

}  // namespace

TEST(Mnist, RoundTrip) {
  const auto s = byte_images(5, 28, 28, 1);
  const auto [img, lab] = encode_mnist(s);
  EXPECT_EQ(img.size(), 16u + 5u * 784u);
  EXPECT_EQ(lab.size(), 8u + 5u);
  const auto back = parse_mnist(img, lab);
  EXPECT_EQ(back.images, s.images);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.width, 28u);
  EXPECT_EQ(back.at(1, 3, 2), s.images[1][2 * 28 + 3]);

  const auto ip = write_temp("geonet_test_img.idx", img), lp = write_temp("geonet_test_lab.idx", lab);
  EXPECT_EQ(load_mnist(ip, lp).images, s.images);
  std::filesystem::remove(ip);
  std::filesystem::remove(lp);
}

TEST(Mnist, PixelScale) {
  auto s = byte_images(1, 28, 28, 1);
  auto [img, lab] = encode_mnist(s);
  img[16] = 255;
  img[17] = 0;
  img[18] = 128;
  const auto back = parse_mnist(img, lab);
  EXPECT_EQ(back.images[0][0], 1.0);
  EXPECT_EQ(back.images[0][1], 0.0);
  EXPECT_NEAR(back.images[0][2], 128.0 / 255.0, 1e-15);
}

TEST(Mnist, Errors) {
  const auto s = byte_images(3, 28, 28, 1);
  const auto [img, lab] = encode_mnist(s);
  auto bad = img;
  bad[3] = 0x04;
  EXPECT_THROW(parse_mnist(bad, lab), IdxMagicError);
  auto bad_lab = lab;
  bad_lab[3] = 0x03;
  EXPECT_THROW(parse_mnist(img, bad_lab), IdxMagicError);
  EXPECT_THROW(parse_mnist(std::vector<unsigned char>(img.begin(), img.end() - 1), lab), TruncatedFileError);
  EXPECT_THROW(parse_mnist(std::vector<unsigned char>(img.begin(), img.begin() + 10), lab), TruncatedFileError);
  EXPECT_THROW(parse_mnist(img, std::vector<unsigned char>(lab.begin(), lab.end() - 1)), TruncatedFileError);
  const auto [img2, lab2] = encode_mnist(byte_images(2, 28, 28, 1));
  EXPECT_THROW(parse_mnist(img, lab2), CountMismatchError);
  const auto [img_small, lab_small] = encode_mnist(byte_images(2, 27, 28, 1));
  EXPECT_THROW(parse_mnist(img_small, lab_small), ValidationError);
  auto high = lab;
  high[8] = 10;
  EXPECT_THROW(parse_mnist(img, high), ValidationError);
  EXPECT_THROW(load_mnist("/nonexistent/images", "/nonexistent/labels"), IoError);
  // The specific errors are also I/O errors.
  EXPECT_THROW(parse_mnist(bad, lab), IoError);
}

TEST(Cifar, RoundTripAndLayout) {
  const auto s = byte_images(4, 32, 32, 3);
  const auto bytes = encode_cifar10(s);
  ASSERT_EQ(bytes.size(), 4u * 3073u);
  // Record layout: label, then the red plane, green plane, blue plane.
  EXPECT_EQ(bytes[3073], 1);
  EXPECT_EQ(bytes[1 + 1024 + 5], static_cast<unsigned char>(std::lround(s.images[0][5 * 3 + 1] * 255.0)));
  const auto f1 = write_temp("geonet_test_c1.bin", std::vector<unsigned char>(bytes.begin(), bytes.begin() + 2 * 3073));
  const auto f2 = write_temp("geonet_test_c2.bin", std::vector<unsigned char>(bytes.begin() + 2 * 3073, bytes.end()));
  const auto back = load_cifar10({f1, f2});
  EXPECT_EQ(back.images, s.images);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.channels, 3u);
  std::filesystem::remove(f1);
  std::filesystem::remove(f2);

  const auto cut = write_temp("geonet_test_c3.bin", std::vector<unsigned char>(bytes.begin(), bytes.begin() + 3000));
  EXPECT_THROW(load_cifar10({cut}), TruncatedFileError);
  std::filesystem::remove(cut);
  EXPECT_THROW(load_cifar10({"/nonexistent/data_batch_1.bin"}), IoError);
}

TEST(Cifar, GrayscaleAndChannels) {
  LabeledImageSet s;
  s.width = s.height = 32;
  s.channels = 3;
  std::vector<double> im(32 * 32 * 3, 0.0);
  im[0] = 1.0;  // pixel 0 pure red
  im[4] = 1.0;  // pixel 1 pure green
  im[8] = 1.0;  // pixel 2 pure blue
  im[9] = im[10] = im[11] = 0.5;
  s.images = {im};
  s.labels = {3};
  const auto g = to_grayscale(s);
  EXPECT_EQ(g.channels, 1u);
  EXPECT_NEAR(g.images[0][0], 0.2989, 1e-15);
  EXPECT_NEAR(g.images[0][1], 0.5870, 1e-15);
  EXPECT_NEAR(g.images[0][2], 0.1140, 1e-15);
  EXPECT_NEAR(g.images[0][3], 0.5 * (0.2989 + 0.5870 + 0.1140), 1e-15);
  const auto parts = split_channels(s);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0].images[0][0], 1.0);
  EXPECT_EQ(parts[1].images[0][1], 1.0);
  EXPECT_EQ(parts[2].images[0][2], 1.0);
  EXPECT_EQ(parts[1].images[0][0], 0.0);
  EXPECT_EQ(parts[2].labels, s.labels);
  EXPECT_THROW(to_grayscale(g), ValidationError);
  EXPECT_THROW(split_channels(g), ValidationError);
}

TEST(Subset, Ranges) {
  const auto s = byte_images(10, 28, 28, 1);
  const auto a = subset(s, 2, 3);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a.labels, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(subset(s, 8, 100).size(), 2u);
  EXPECT_EQ(subset(s, 10, 5).size(), 0u);
  EXPECT_THROW(subset(s, 11, 1), ValidationError);
}

TEST(Batches, EpochIsAPermutation) {
  const auto b = batches(10, 4, 3);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 4u);
  EXPECT_EQ(b[2].size(), 2u);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(batches(10, 4, 3), b);
  EXPECT_NE(batches(10, 4, 4), b);
}

TEST(Batches, StreamReshufflesEachEpoch) {
  BatchStream s(6, 6, 1);
  const auto e1 = s.next(), e2 = s.next();
  EXPECT_EQ(std::set<std::size_t>(e1.begin(), e1.end()).size(), 6u);
  EXPECT_EQ(std::set<std::size_t>(e2.begin(), e2.end()).size(), 6u);
  EXPECT_NE(e1, e2);
  EXPECT_THROW(BatchStream(0, 1, 1), ValidationError);
  EXPECT_THROW(BatchStream(3, 0, 1), ValidationError);
}
