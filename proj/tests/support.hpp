#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "setl/mfcc.hpp"
#include "setl/tdnn.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("setl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void dump(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline setl::FeatureMatrix random_features(std::mt19937_64& rng, std::size_t frames, std::size_t dim,
                                           double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  setl::FeatureMatrix f;
  f.utterance_id = "rand";
  f.frames = setl::Matrix(frames, dim);
  for (double& v : f.frames.values()) v = g(rng);
  return f;
}

// A stack of rectifier layers with the given offsets followed by a linear output.
inline setl::NetworkSpec small_spec(int input_dim, int width, const std::vector<std::vector<int>>& offsets,
                                    int output_dim) {
  setl::NetworkSpec spec;
  int in = input_dim;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    spec.layers.push_back({"tdnn" + std::to_string(k + 1), setl::LayerRole::tdnn, in, width, offsets[k],
                           setl::Activation::rectifier});
    in = width;
  }
  spec.layers.push_back({"output", setl::LayerRole::output, in, output_dim, {0}, setl::Activation::identity});
  return spec;
}

inline double max_abs_diff(const setl::Matrix& a, const setl::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace testing
