#pragma once

#include <cstddef>
#include <string>

namespace emosphere {

enum class VadScale { Raw17, NormUnit };

/// Valence/arousal/dominance triple. Raw17 annotations live on the 7-point
/// Likert scale [1, 7]; NormUnit points live in [-1, 1]^3.
struct VadPoint {
  double v = 0.0;
  double a = 0.0;
  double d = 0.0;
  VadScale scale = VadScale::NormUnit;

  bool operator==(const VadPoint&) const = default;
};

/// Magnitude plus angles in degrees. Azimuth is measured in the
/// valence-arousal plane from +valence toward +arousal; elevation is the
/// polar angle from the +dominance pole.
struct SphericalPoint {
  double r = 0.0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;

  bool operator==(const SphericalPoint&) const = default;
};

/// Equal-width angular grid over (azimuth, elevation).
class RegionPartition {
 public:
  RegionPartition(int n_phi, int n_theta);

  int n_phi() const noexcept { return n_phi_; }
  int n_theta() const noexcept { return n_theta_; }
  int n_regions() const noexcept { return n_phi_ * n_theta_; }
  double azimuth_width() const noexcept { return 360.0 / n_phi_; }
  double elevation_width() const noexcept { return 180.0 / n_theta_; }

  bool operator==(const RegionPartition&) const = default;

 private:
  int n_phi_;
  int n_theta_;
};

/// Region index laid out as azimuth_index * n_theta + elevation_index.
struct RegionLabel {
  int index = 0;

  bool operator==(const RegionLabel&) const = default;
};

inline constexpr double kDegenerateRadius = 1e-9;

VadPoint normalize_vad(const VadPoint& raw);
VadPoint denormalize_vad(const VadPoint& unit);

SphericalPoint to_spherical(const VadPoint& unit);
VadPoint to_cartesian(const SphericalPoint& s);

/// Builds the partition whose cells span `angle_deg` degrees along both
/// axes. The angle must divide both 180 and 360.
RegionPartition make_partition(double angle_deg);

RegionLabel assign_region(const RegionPartition& part, const SphericalPoint& s);

/// Cell midpoint at magnitude `r`.
SphericalPoint region_centroid(const RegionPartition& part, RegionLabel label,
                               double r);

// Convenience: raw annotation straight to its region.
RegionLabel region_of_raw(const RegionPartition& part, const VadPoint& raw);

}  // namespace emosphere
