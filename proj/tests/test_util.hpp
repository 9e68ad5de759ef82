#pragma once

#include <cmath>
#include <cstdint>
#include <unistd.h>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stconv/ndarray.hpp"
#include "stconv/trialset.hpp"

namespace stconv::testing {

template <typename T = double>
NdArray<T> random_array(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  NdArray<T> a(std::move(shape));
  for (auto& v : a.data()) v = static_cast<T>(u(rng));
  return a;
}

template <typename T>
double max_abs_diff(const NdArray<T>& a, const NdArray<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
double max_abs(const NdArray<T>& a) {
  double m = 0.0;
  for (T v : a.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("stconv_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

// Trial set with generic channel and class names.
inline TrialSet make_trials(std::size_t n, std::size_t c, std::size_t t, std::vector<float> data,
                            std::vector<int> labels, std::size_t n_classes, double sfreq = 250.0) {
  TrialSet s;
  s.data = NdArray<float>({n, c, t}, std::move(data));
  s.labels = std::move(labels);
  s.sfreq = sfreq;
  for (std::size_t i = 0; i < c; ++i) s.channel_names.push_back("ch" + std::to_string(i));
  for (std::size_t i = 0; i < n_classes; ++i) s.class_names.push_back("class" + std::to_string(i));
  return s;
}

}  // namespace stconv::testing
