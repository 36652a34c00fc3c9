#pragma once

#include <cstdint>
#include <vector>

#include "gmmrf/image.hpp"

namespace gmmrf {

/// One ellipse of an analytic phantom in normalized coordinates: the image
/// spans [-1, 1] on both axes with +y up. `value` is added inside.
struct Ellipse {
  double x0, y0;     // center
  double a, b;       // semi-axes along the rotated x and y directions
  double theta_deg;  // counter-clockwise rotation
  double value;
};

/// The original 10-ellipse Shepp-Logan table (relative attenuation units).
const std::vector<Ellipse>& shepp_logan_ellipses();

/// Rasterizes ellipses by point-sampling pixel centers; the result is
/// 1000 * (sum - 1) HU, so 0 maps to air (-1000), 1 to water (0) and the
/// skull (2.0) to +1000 HU.
Image rasterize_ellipses(const std::vector<Ellipse>& ellipses, int n, double pixel_size = 1.0);

/// Shepp-Logan head phantom in HU: brain 20, ventricles 0, small
/// structures 30, skull 1000, air -1000. Requires n >= 16.
Image shepp_logan(int n, double pixel_size = 1.0);

inline constexpr double kPlexiglasHu = 120.0;
inline constexpr double kWireHu = 3000.0;

/// Layout of the performance-phantom analog, in pixels of a 128 grid; all
/// positions scale with n / 128.
struct GeppLayout {
  std::vector<int> bar_periods = {8, 6, 4};  // bar cycle lengths, pixels at n = 128
  int wire_row = 88, wire_col = 84;
  int flat_row = 88, flat_col = 44;  // center of a flat water region
  int flat_radius = 8;
  int block_row_begin = 20, block_row_end = 52;
  int block_col_begin = 28, block_col_end = 100;
  int bar_row_begin = 26, bar_row_end = 46;
  double disc_radius = 58.0;
};

/// Where the features of gepp_analog(n) landed.
struct GeppFeatures {
  int wire_row, wire_col;
  int flat_row, flat_col, flat_radius;
  std::vector<int> bar_periods;     // pixels
  std::vector<int> bar_col_begin;   // first column of each bar group
  std::vector<int> bar_col_end;
  int bar_row_begin, bar_row_end;
};

/// Water disc (0 HU) in air with a plexiglas block (+120 HU) holding groups
/// of cyclic water bars, and a single-pixel wire (+3000 HU) in water.
/// Requires n >= 128.
Image gepp_analog(int n, double pixel_size = 1.0, const GeppLayout& layout = {}, GeppFeatures* features = nullptr);

/// Piecewise-constant soft-tissue phantom: a body ellipse of fat around
/// muscle-like background with randomly placed inclusions of several
/// tissue classes (fat, soft tissue, blood, dense tissue, bone). Seeded.
Image multi_tissue_phantom(int n, std::uint64_t seed, double pixel_size = 1.0);

}  // namespace gmmrf
