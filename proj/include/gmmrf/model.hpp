#pragma once

#include "gmmrf/image.hpp"
#include "gmmrf/mixture.hpp"

namespace gmmrf {

inline constexpr double kDefaultAlpha = 33.0;  // HU

/// GM-MRF prior: a patch mixture plus the regularization controls
/// (sigma_x, p, alpha). The covariance-scaled mixture is built once on
/// construction and is the one every energy/responsibility evaluation uses;
/// the unscaled mixture is kept for provenance and serialization.
class GmMrfModel {
 public:
  explicit GmMrfModel(GaussianMixture mixture, double sigma_x = 1.0, double p = 0.0, double alpha = kDefaultAlpha);

  const GaussianMixture& mixture() const { return mixture_; }
  const GaussianMixture& scaled_mixture() const { return scaled_; }
  const PatchGeometry& geometry() const { return *mixture_.geometry(); }
  double sigma_x() const { return sigma_x_; }
  double p() const { return p_; }
  double alpha() const { return alpha_; }

  /// 1 / (L sigma_x^2), the factor in front of the sum of potentials.
  double prior_scale() const;

  GmMrfModel with_parameters(double sigma_x, double p, double alpha) const;

 private:
  GaussianMixture mixture_;
  double sigma_x_;
  double p_;
  double alpha_;
  GaussianMixture scaled_;
};

/// u(x) = 1/(L sigma_x^2) * sum over interior centers of V_sigma(P_s x).
double energy(const GmMrfModel& model, const Image& image);

/// u(x; x'), the quadratic majorizer of `energy` anchored at `anchor`,
/// including the constant that makes it equal energy(anchor) at x = anchor.
double surrogate_energy(const GmMrfModel& model, const Image& x, const Image& anchor);

}  // namespace gmmrf
