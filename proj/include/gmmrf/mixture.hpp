#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gmmrf/patch.hpp"

namespace gmmrf {

/// Relative jitter added to a covariance whose Cholesky factorization fails.
inline constexpr double kCovarianceFloor = 1e-8;

/// One multivariate Gaussian of a mixture with its Cholesky factor cached.
///
/// The covariance is symmetrized on construction (asymmetry beyond 1e-12
/// relative is rejected). If the factorization fails, eps * lambda * I is
/// added once, where lambda is the mean diagonal entry; if that still fails
/// the matrix is not positive definite and construction throws.
class GaussianComponent {
 public:
  GaussianComponent(double weight, Eigen::VectorXd mean, Eigen::MatrixXd covariance,
                    double floor_eps = kCovarianceFloor);

  double weight() const { return weight_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& chol() const { return chol_; }  // lower triangular
  const Eigen::MatrixXd& precision() const { return precision_; }
  double log_det() const { return log_det_; }
  int dim() const { return static_cast<int>(mean_.size()); }
  bool floored() const { return floored_; }

  /// ||x - mean||^2 in the metric of the inverse covariance (triangular solve).
  double mahalanobis_sq(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// log N(x; mean, covariance), without the mixture weight.
  double log_normal(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  GaussianComponent with_weight(double w) const;

 private:
  double weight_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_;
  Eigen::MatrixXd precision_;
  double log_det_ = 0.0;
  bool floored_ = false;
};

using Responsibilities = Eigen::VectorXd;

class GaussianMixture {
 public:
  /// Validates shared dimension and that weights sum to 1 within 1e-10.
  GaussianMixture(std::vector<GaussianComponent> components, std::optional<PatchGeometry> geometry = std::nullopt);

  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& operator[](std::size_t k) const { return components_[k]; }
  std::size_t size() const { return components_.size(); }  // K
  int dim() const { return dim_; }                          // L
  const std::optional<PatchGeometry>& geometry() const { return geometry_; }

  /// Per-component log(pi_k N(x; mu_k, R_k)) into `out` (length K).
  void component_log_densities(const Eigen::Ref<const Eigen::VectorXd>& x, std::span<double> out) const;

 private:
  std::vector<GaussianComponent> components_;
  int dim_ = 0;
  std::optional<PatchGeometry> geometry_;
};

/// log g(patch), evaluated with log-sum-exp.
double patch_log_density(const GaussianMixture& mix, const Eigen::Ref<const Eigen::VectorXd>& patch);

/// V(patch) = -log g(patch).
double potential(const GaussianMixture& mix, const Eigen::Ref<const Eigen::VectorXd>& patch);

/// Posterior component probabilities of `patch`, normalized in the log domain.
Responsibilities responsibilities(const GaussianMixture& mix, const Eigen::Ref<const Eigen::VectorXd>& patch);

/// |R|^(1/L), the geometric mean of the eigenvalues.
double average_eigenvalue(const GaussianComponent& component);
double average_eigenvalue(const Eigen::MatrixXd& covariance);

/// Rescales component k to R_k / sigma_k^2 with sigma_k = (avg_eig_k / alpha^2)^(p/2).
GaussianMixture apply_covariance_scaling(const GaussianMixture& mix, double p, double alpha);

/// Weighted union of mixtures: component weights become pi_i * pi_ik.
GaussianMixture merge_mixtures(const std::vector<std::pair<double, GaussianMixture>>& parts);

/// -log sum_k w_k exp(-v_k), for nonnegative w with positive sum.
double neg_log_exp_mixture(std::span<const double> weights, std::span<const double> v);

/// Majorizer of -log f at anchor x' for f(x) = sum_k w_k exp(-v_k(x)):
///   q(x; x') = -log f(x') + sum_k pi_k (v_k(x) - v_k(x'))
/// where pi_k are the posterior weights at the anchor.
double exp_mixture_surrogate(std::span<const double> weights, std::span<const double> v_at_x,
                             std::span<const double> v_at_anchor);

}  // namespace gmmrf
