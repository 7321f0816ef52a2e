#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "augmetrics/data.hpp"
#include "augmetrics/rng.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    const auto *info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "augmetrics_";
    if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
    for (char &c : name)
      if (c == '/') c = '_';
    path_ = fs::temp_directory_path() / name;
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const fs::path &path() const { return path_; }
  fs::path operator/(const std::string &s) const { return path_ / s; }

private:
  fs::path path_;
};

inline std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Random image with values on the k/255 grid. Independent of the library RNG.
inline augmetrics::Image random_image(augmetrics::ImageShape shape, std::mt19937_64 &gen) {
  std::uniform_int_distribution<int> level(0, 255);
  augmetrics::Image img(shape);
  for (float &v : img.values) v = static_cast<float>(level(gen) / 255.0);
  return img;
}

inline augmetrics::LabeledDataset random_dataset(augmetrics::ImageShape shape, int classes,
                                                 std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  augmetrics::LabeledDataset ds;
  ds.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.push_back(random_image(shape, gen));
    ds.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
  }
  return ds;
}

} // namespace testutil
