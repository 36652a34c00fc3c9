#pragma once

#include <optional>
#include <vector>

#include "gmmrf/image.hpp"

namespace gmmrf {

/// Disc of pixels whose centers lie within `radius` of (row, col).
struct Roi {
  double row = 0.0;
  double col = 0.0;
  double radius = 1.0;

  /// Throws InvalidInput unless the disc lies fully inside the image.
  void validate(const Image& image) const;
  bool contains(int r, int c) const;
};

/// Root-mean-square difference over the ROI, or the whole image.
double rmse(const Image& a, const Image& b, const std::optional<Roi>& roi = std::nullopt);

struct RoiStats {
  double mean = 0.0;
  double std = 0.0;  // population
  long count = 0;
};

RoiStats roi_stats(const Image& image, const Roi& roi);

struct MtfCurve {
  std::vector<double> frequencies;  // cycles/mm, ascending
  std::vector<double> modulation;   // 1 at zero frequency
  double nyquist = 0.0;             // cycles/mm
};

inline constexpr int kMtfWindow = 32;

/// MTF from an isolated wire: a kMtfWindow-pixel square window with the wire
/// at (kMtfWindow/2, kMtfWindow/2), background (median of the window border)
/// subtracted, 2-D DFT magnitude normalized at DC, averaged over radial bins
/// one frequency sample wide up to Nyquist. Each bin's frequency is the mean
/// radius of its samples. Throws InvalidInput if the window leaves the image
/// or the wire pixel is not the window maximum.
MtfCurve mtf_from_wire(const Image& image, int wire_row, int wire_col, double pixel_size);

/// Lowest frequency where the modulation first drops below 0.1, linearly
/// interpolated between the bracketing samples; Nyquist if it never does.
double mtf10(const MtfCurve& curve);

}  // namespace gmmrf
