#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "gmmrf/image.hpp"
#include "gmmrf/model.hpp"
#include "gmmrf/patch.hpp"
#include "gmmrf/projector.hpp"

namespace gmmrf {

/// MAP problem  min_x  1/2 ||y - A x||^2_D + energy(model, x)  with x in HU.
/// A null system matrix means A = I (denoising). For CT, y is the sinogram
/// with the air offset removed, so that y = A x in the noiseless case.
struct MapProblem {
  GmMrfModel model;
  const SystemMatrix* a = nullptr;
  int rows = 0;
  int cols = 0;
  double pixel_size = 1.0;
  Eigen::VectorXd y;
  StatWeights d;
  std::optional<double> lower_bound;  // per-pixel clamp applied inside each update

  bool identity() const { return a == nullptr; }
  /// Throws InvalidInput if the dimensions of A, y, D and the image disagree.
  void validate() const;
};

/// CT problem from a simulated or loaded scan. The clamp keeps attenuation
/// nonnegative (x >= -1000 HU) unless disabled.
MapProblem ct_problem(const SystemMatrix& a, const Sinogram& sinogram, const StatWeights& weights, GmMrfModel model,
                      bool clamp = true);

/// Denoising problem: A = I, D = I / noise_sigma^2, no clamp.
MapProblem denoising_problem(const Image& noisy, double noise_sigma, GmMrfModel model);

struct StopCriteria {
  int outer_iters = 50;         // surrogate re-anchorings
  int inner_sweeps = 1;         // full ICD passes per anchoring
  double rel_change_tol = 0.1;  // HU; stop once a sweep moves no pixel by more than this

  void validate() const;
};

enum class UpdateOrder { Raster, RandomPermutation };

struct IcdOptions {
  UpdateOrder order = UpdateOrder::Raster;
  std::uint64_t seed = 0;
};

/// Quadratic surrogate of the prior anchored at x'. For each interior patch r
/// it holds the responsibilities w_r and the assembled terms
///   H_r = c * sum_k w_{r,k} P_k,   b_r = c * sum_k w_{r,k} P_k mu_k,
/// where P_k are the scaled precisions and c = 1 / (L sigma_x^2), so that the
/// surrogate gradient of patch r with respect to its pixels is H_r z - b_r.
struct SurrogateCache {
  InteriorRange range{0, 0, 0, 0};
  int patch_rows = 0;
  int patch_cols = 0;
  Eigen::MatrixXd resp;       // K x patches, column r = responsibilities of patch r
  Eigen::MatrixXd hessians;   // (L*L) x patches, column-major L x L blocks
  Eigen::MatrixXd offsets;    // L x patches, b_r
  Eigen::VectorXd curvature;  // per pixel, sum over patches containing it of H_r[a, a]
  double max_entropy = 0.0;   // largest responsibility entropy over patches, nats

  long patch_count() const { return static_cast<long>(resp.cols()); }
  long patch_index(int row, int col) const {
    return static_cast<long>(row - range.row_begin) * (range.col_end - range.col_begin) + (col - range.col_begin);
  }
};

/// Responsibilities of every interior patch of x_anchor under the scaled
/// mixture, with the assembled quadratic terms.
SurrogateCache anchor_surrogate(const GmMrfModel& model, const Image& x_anchor);

struct IcdState {
  Image x;
  Eigen::VectorXd e;       // y - A x, updated incrementally
  Eigen::VectorXd theta2;  // A_j^t D A_j per pixel
  SurrogateCache cache;
  long skipped = 0;        // updates skipped for zero curvature
};

/// Builds the state at x_init and anchors the surrogate there.
IcdState make_icd_state(const MapProblem& problem, const Image& x_init);

/// Re-anchors the surrogate at the current image.
void reanchor(IcdState& state, const MapProblem& problem);

/// Exact minimization of the surrogate objective along pixel j. Returns the
/// absolute change of x_j.
double icd_pixel_update(IcdState& state, long j, const MapProblem& problem);

/// One pass over all pixels; returns the largest absolute pixel change.
/// Checks the error-vector invariant afterwards and throws NumericalError
/// if it has drifted.
double icd_sweep(IcdState& state, const MapProblem& problem, const std::vector<long>& order);

/// Raster order, or a permutation drawn from (seed, sweep).
std::vector<long> update_order(long n, const IcdOptions& options, std::uint64_t sweep);

/// 1/2 ||y - A x||^2_D + energy(model, x).
double map_objective(const MapProblem& problem, const Image& x);

struct MapResult {
  Image x;
  std::vector<double> objective;  // entry 0 at x_init, then one per outer iteration
  int outer_iterations = 0;
  bool converged = false;
  long skipped = 0;
  double max_entropy = 0.0;
};

MapResult map_reconstruct(const MapProblem& problem, const Image& x_init, const StopCriteria& stop,
                          const IcdOptions& options = {});

/// A^t y / A^t 1 per pixel (0 where no ray passes); y itself when A = I.
Image backprojection_init(const MapProblem& problem);

MapResult denoise(const Image& noisy, double noise_sigma, const GmMrfModel& model, const StopCriteria& stop,
                  const IcdOptions& options = {});

}  // namespace gmmrf
