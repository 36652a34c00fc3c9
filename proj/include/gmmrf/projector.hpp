#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "gmmrf/image.hpp"

namespace gmmrf {

/// Linear attenuation of water at the simulated effective energy, 1/mm.
inline constexpr double kMuWater = 0.02;
inline constexpr double kAirHu = -1000.0;

/// 2-D parallel-beam scan. The image is n_pixels x n_pixels centered on the
/// rotation axis; views are spread uniformly over [0, pi).
struct ScanGeometry {
  int n_pixels = 64;
  double pixel_size = 1.0;  // mm
  int n_angles = 90;
  int n_detectors = 91;
  double detector_spacing = 1.0;  // mm
  double mu_water = kMuWater;

  std::size_t measurements() const { return static_cast<std::size_t>(n_angles) * static_cast<std::size_t>(n_detectors); }
  std::size_t unknowns() const { return static_cast<std::size_t>(n_pixels) * static_cast<std::size_t>(n_pixels); }
  double angle(int view) const;
  double detector_position(int bin) const;  // signed offset from the axis, mm

  /// Throws InvalidInput unless every count is positive and the detector row
  /// covers the image diagonal.
  void validate() const;

  /// Detector count covering the diagonal at the given spacing (odd).
  static int detectors_for(int n_pixels, double pixel_size, double spacing);

  bool operator==(const ScanGeometry&) const = default;
};

/// Measurements y in HU*mm: the line integral of (x + 1000), i.e. of
/// attenuation relative to vacuum expressed in HU. ell = y * mu_water / 1000.
struct Sinogram {
  ScanGeometry geometry;
  Eigen::VectorXd values;
};

/// Diagonal data weights, proportional to the inverse measurement variance
/// of the stored sinogram values.
struct StatWeights {
  Eigen::VectorXd diag;
};

/// Sparse projection matrix A (M x N) with row and column access.
class SystemMatrix {
 public:
  explicit SystemMatrix(const ScanGeometry& geometry);

  const ScanGeometry& geometry() const { return geometry_; }
  Eigen::Index rows() const { return by_row_.rows(); }
  Eigen::Index cols() const { return by_row_.cols(); }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& by_row() const { return by_row_; }
  const Eigen::SparseMatrix<double, Eigen::ColMajor>& by_col() const { return by_col_; }

  /// A_{*j}: iterate with Eigen::SparseMatrix<double>::InnerIterator(by_col(), j).
  Eigen::SparseVector<double> column(Eigen::Index j) const;

  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd back(const Eigen::Ref<const Eigen::VectorXd>& r) const;

 private:
  ScanGeometry geometry_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> by_row_;
  Eigen::SparseMatrix<double, Eigen::ColMajor> by_col_;
};

/// Siddon-style exact intersection lengths (mm) of one ray with every pixel it crosses.
std::vector<std::pair<int, double>> trace_ray(const ScanGeometry& geometry, int view, int bin);

SystemMatrix build_system_matrix(const ScanGeometry& geometry);

/// A x, for an image in HU*mm-compatible units (no offset applied).
Eigen::VectorXd forward_project(const SystemMatrix& a, const Image& x);
/// A^t r as an image.
Image back_project(const SystemMatrix& a, const Eigen::Ref<const Eigen::VectorXd>& r);

struct SimulationOptions {
  double dose = 1e4;  // incident photons per ray, I0
  std::uint64_t seed = 0;
  bool noiseless = false;
};

struct SimulatedScan {
  Sinogram sinogram;
  StatWeights weights;
  Eigen::VectorXd counts;  // detected photons (expected counts when noiseless)
};

/// Forward-projects x_true (HU), draws Poisson transmission counts per ray
/// from a generator keyed by (seed, ray index), and log-converts. Weights are
/// the counts rescaled to the HU*mm measurement unit, so 1/D approximates the
/// variance of each stored measurement.
SimulatedScan simulate_sinogram(const SystemMatrix& a, const Image& x_true, const SimulationOptions& options);

/// Ramp-filtered back-projection, output in HU.
Image filtered_back_projection(const Sinogram& sinogram);

}  // namespace gmmrf
