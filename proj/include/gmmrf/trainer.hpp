#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gmmrf/image.hpp"
#include "gmmrf/mixture.hpp"
#include "gmmrf/model.hpp"
#include "gmmrf/patch.hpp"

namespace gmmrf {

struct PatchSource {
  int image = 0;
  int row = 0;
  int col = 0;
};

/// Training patches, one per row (N x L), with where each came from.
struct PatchDataset {
  Eigen::MatrixXd patches;
  std::vector<PatchSource> sources;

  Eigen::Index size() const { return patches.rows(); }
  int dim() const { return static_cast<int>(patches.cols()); }
  PatchDataset subset(std::span<const Eigen::Index> rows) const;
  static PatchDataset concat(std::span<const PatchDataset> parts);
};

/// Half-open interval [lo, hi); infinite bounds mean unbounded.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double v) const { return v >= lo && v < hi; }
};

struct GroupSpec {
  int index = 1;
  Interval mean;  // HU
  Interval std;   // HU, population standard deviation over the patch
  std::size_t sample_target = 0;
  int components = 1;
  double mixture_weight = 0.0;
};

/// The six tissue groups used for CT patch training: air, lung, smooth soft
/// tissue, low-contrast edges, high-contrast edges, bone. Group 1's lower
/// mean bound is open so that the groups partition the whole (mean, std) plane.
std::vector<GroupSpec> six_tissue_groups();

/// Throws InvalidInput unless every (mean, std >= 0) pair falls in exactly one group.
void validate_partition(std::span<const GroupSpec> specs);

/// M-step covariances with a smaller reciprocal condition number are rejected
/// and the component keeps its previous covariance.
inline constexpr double kMinCovarianceRcond = 1e-10;

struct EmConfig {
  int max_iters = 200;
  double ll_tolerance = 1e-7;  // relative change of the average log-likelihood
  std::uint64_t seed = 0;
  double covariance_floor = kCovarianceFloor;
  double variance_floor = 0.0;  // HU^2 added to every covariance diagonal after each M-step
};

struct EmResult {
  GaussianMixture mixture;
  std::vector<double> log_likelihood;  // per-patch average, one entry per E-step
  int iterations = 0;                  // M-steps performed
  bool converged = false;
  int reseeded = 0;                    // empty components re-seeded
  int held_covariances = 0;            // singular covariance updates rejected
};

/// All interior patches on a `stride` grid, flattened row-major.
PatchDataset extract_patches(const Image& image, const PatchGeometry& geometry, int stride, int image_id = 0);

/// Per-patch sample mean and population standard deviation.
std::pair<double, double> patch_statistics(const Eigen::Ref<const Eigen::VectorXd>& patch);

/// Splits patches by group; groups larger than their sample_target are
/// subsampled uniformly without replacement. Output order follows `specs`.
std::vector<PatchDataset> partition_patches(const PatchDataset& data, std::span<const GroupSpec> specs, std::uint64_t seed);

/// Full-covariance EM with k-means++ seeding.
EmResult em_fit(const PatchDataset& data, int components, const EmConfig& cfg);

enum class GroupWeighting {
  Configured,  // use GroupSpec::mixture_weight
  Natural,     // proportion of patches falling in each group before subsampling
};

struct GroupReport {
  int index = 0;
  std::size_t available = 0;
  std::size_t used = 0;
  double weight = 0.0;
  std::vector<double> log_likelihood;
};

struct TrainingResult {
  GmMrfModel model;
  std::vector<GroupReport> groups;
};

struct TrainingOptions {
  int stride = 1;
  GroupWeighting weighting = GroupWeighting::Configured;
};

/// extract -> partition -> per-group EM -> merge. The returned model has
/// sigma_x = 1, p = 0 and the default alpha.
TrainingResult train_gmmrf(std::span<const Image> images, const PatchGeometry& geometry, std::span<const GroupSpec> specs,
                           const EmConfig& cfg, const TrainingOptions& options = {});

}  // namespace gmmrf
