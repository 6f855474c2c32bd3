#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "emosphere/geometry.hpp"
#include "emosphere/tensor.hpp"

namespace emosphere::testing {

inline constexpr double kPi = 3.14159265358979323846;

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& x : t.values()) x = u(rng);
  return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("emosphere_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

// Independent region binning: scans every cell and tests interval
// membership directly from the raw annotation, without going through the
// library's spherical transform.
inline int brute_force_region(double v_raw, double a_raw, double d_raw, int n_phi, int n_theta) {
  const double v = (v_raw - 4.0) / 3.0;
  const double a = (a_raw - 4.0) / 3.0;
  const double d = (d_raw - 4.0) / 3.0;
  const double r = std::sqrt(v * v + a * a + d * d);
  double phi = 0.0;
  double theta = 0.0;
  if (r >= 1e-9) {
    phi = std::atan2(a, v) * 180.0 / kPi;
    if (phi < 0.0) phi += 360.0;
    if (phi >= 360.0) phi -= 360.0;
    theta = std::acos(std::clamp(d / r, -1.0, 1.0)) * 180.0 / kPi;
  }
  const double dphi = 360.0 / n_phi;
  const double dtheta = 180.0 / n_theta;
  int found_a = -1;
  int found_e = -1;
  for (int i = 0; i < n_phi; ++i) {
    const double lo = i * dphi;
    const double hi = (i + 1) * dphi;
    if (phi >= lo && (phi < hi || i == n_phi - 1)) {
      found_a = i;
      break;
    }
  }
  for (int j = 0; j < n_theta; ++j) {
    const double lo = j * dtheta;
    const double hi = (j + 1) * dtheta;
    if (theta >= lo && (theta < hi || j == n_theta - 1)) {
      found_e = j;
      break;
    }
  }
  return found_a * n_theta + found_e;
}

// Unweighted cross-entropy for one row, straight from the definition.
inline double plain_cross_entropy(const std::vector<double>& logits, int target) {
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z);
  return -std::log(std::exp(logits[static_cast<std::size_t>(target)]) / denom);
}

}  // namespace emosphere::testing
