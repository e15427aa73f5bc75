#ifndef TINYBIRD_TESTS_UNIT_TEST_UTIL_H_
#define TINYBIRD_TESTS_UNIT_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace tinybird::testing {

inline std::vector<std::int16_t> Sine(double hz, double amplitude, std::size_t n,
                                      double sample_rate = 16000.0, double phase = 0.0) {
  std::vector<std::int16_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::int16_t>(
        std::lround(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / sample_rate + phase)));
  }
  return out;
}

inline std::vector<std::int16_t> RandomPcm(std::mt19937& rng, std::size_t n, int lo = -32768,
                                           int hi = 32767) {
  std::uniform_int_distribution<int> dist(lo, hi);
  std::vector<std::int16_t> out(n);
  for (auto& s : out) s = static_cast<std::int16_t>(dist(rng));
  return out;
}

inline std::vector<std::int16_t> GaussianNoise(std::mt19937& rng, std::size_t n, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<std::int16_t> out(n);
  for (auto& s : out) {
    s = static_cast<std::int16_t>(std::clamp<long>(std::lround(dist(rng)), -32768, 32767));
  }
  return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tinybird_" + tag + "_" + std::to_string(rd()));
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

inline std::filesystem::path FixtureModel() {
  return std::filesystem::path(TINYBIRD_FIXTURE_DIR) / "model.tbm";
}

}  // namespace tinybird::testing

#endif  // TINYBIRD_TESTS_UNIT_TEST_UTIL_H_
