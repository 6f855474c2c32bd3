#include "emosphere/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "emosphere/errors.hpp"

namespace emosphere {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

constexpr const char* kDimNames[3] = {"valence", "arousal", "dominance"};

void check_range(const VadPoint& p, double lo, double hi, const char* scale) {
  const double comps[3] = {p.v, p.a, p.d};
  for (int i = 0; i < 3; ++i) {
    if (!(comps[i] >= lo && comps[i] <= hi)) {
      std::ostringstream os;
      os << kDimNames[i] << " = " << comps[i] << " is outside the " << scale
         << " range [" << lo << ", " << hi << "]";
      throw DomainError(os.str());
    }
  }
}

// Angles in (0, 180] whose cells tile both axes with an integer count.
bool divides_exactly(double total, double angle) {
  const double n = total / angle;
  return std::abs(n - std::round(n)) < 1e-9 && std::round(n) >= 1.0;
}

}  // namespace

RegionPartition::RegionPartition(int n_phi, int n_theta)
    : n_phi_(n_phi), n_theta_(n_theta) {
  if (n_phi < 1 || n_theta < 1) {
    throw ConfigError("partition divisions must be positive (got n_phi=" +
                      std::to_string(n_phi) +
                      ", n_theta=" + std::to_string(n_theta) + ")");
  }
}

VadPoint normalize_vad(const VadPoint& raw) {
  check_range(raw, 1.0, 7.0, "raw");
  return {(raw.v - 4.0) / 3.0, (raw.a - 4.0) / 3.0, (raw.d - 4.0) / 3.0,
          VadScale::NormUnit};
}

VadPoint denormalize_vad(const VadPoint& unit) {
  check_range(unit, -1.0, 1.0, "normalized");
  return {3.0 * unit.v + 4.0, 3.0 * unit.a + 4.0, 3.0 * unit.d + 4.0,
          VadScale::Raw17};
}

SphericalPoint to_spherical(const VadPoint& unit) {
  const double r = std::sqrt(unit.v * unit.v + unit.a * unit.a + unit.d * unit.d);
  if (r < kDegenerateRadius) return {r, 0.0, 0.0};

  double azimuth = std::atan2(unit.a, unit.v) * kRadToDeg;
  if (azimuth < 0.0) azimuth += 360.0;
  // atan2 of a tiny negative arousal yields -0 + 360 == 360 after rounding.
  if (azimuth >= 360.0) azimuth = 0.0;

  const double cos_el = std::clamp(unit.d / r, -1.0, 1.0);
  return {r, azimuth, std::acos(cos_el) * kRadToDeg};
}

VadPoint to_cartesian(const SphericalPoint& s) {
  if (s.r < 0.0) {
    throw DomainError("spherical magnitude must be non-negative (got " +
                      std::to_string(s.r) + ")");
  }
  const double az = s.azimuth_deg * kDegToRad;
  const double el = s.elevation_deg * kDegToRad;
  const double sin_el = std::sin(el);
  return {s.r * sin_el * std::cos(az), s.r * sin_el * std::sin(az),
          s.r * std::cos(el), VadScale::NormUnit};
}

RegionPartition make_partition(double angle_deg) {
  if (angle_deg > 0.0 && angle_deg <= 180.0 && divides_exactly(360.0, angle_deg) &&
      divides_exactly(180.0, angle_deg)) {
    return RegionPartition(static_cast<int>(std::lround(360.0 / angle_deg)),
                           static_cast<int>(std::lround(180.0 / angle_deg)));
  }

  // Suggest the closest integer divisors of 180 on either side.
  int below = 0;
  int above = 0;
  for (int cand = 1; cand <= 180; ++cand) {
    if (180 % cand != 0) continue;
    if (cand <= angle_deg) below = cand;
    if (cand >= angle_deg && above == 0) above = cand;
  }
  std::ostringstream os;
  os << "angle " << angle_deg << " does not divide both 360 and 180";
  if (below && above && below != above) {
    os << "; nearest valid angles are " << below << " and " << above;
  } else if (below || above) {
    os << "; nearest valid angle is " << (below ? below : above);
  }
  throw ConfigError(os.str());
}

RegionLabel assign_region(const RegionPartition& part, const SphericalPoint& s) {
  const auto bin = [](double angle, double width, int n) {
    const auto idx = static_cast<long>(std::floor(angle / width));
    return static_cast<int>(std::clamp<long>(idx, 0, n - 1));
  };
  const int a_idx = bin(s.azimuth_deg, part.azimuth_width(), part.n_phi());
  const int e_idx = bin(s.elevation_deg, part.elevation_width(), part.n_theta());
  return {a_idx * part.n_theta() + e_idx};
}

SphericalPoint region_centroid(const RegionPartition& part, RegionLabel label,
                               double r) {
  if (label.index < 0 || label.index >= part.n_regions()) {
    throw IndexError("region label " + std::to_string(label.index) +
                     " out of range [0, " + std::to_string(part.n_regions()) +
                     ")");
  }
  const int a_idx = label.index / part.n_theta();
  const int e_idx = label.index % part.n_theta();
  return {r, (a_idx + 0.5) * part.azimuth_width(),
          (e_idx + 0.5) * part.elevation_width()};
}

RegionLabel region_of_raw(const RegionPartition& part, const VadPoint& raw) {
  return assign_region(part, to_spherical(normalize_vad(raw)));
}

}  // namespace emosphere
