#include "gmmrf/mixture.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>

#include "gmmrf/errors.hpp"
#include "gmmrf/numeric.hpp"

namespace gmmrf {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

bool try_factor(const Eigen::MatrixXd& m, Eigen::MatrixXd& lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) return false;
  }
  return true;
}

}  // namespace

GaussianComponent::GaussianComponent(double weight, Eigen::VectorXd mean, Eigen::MatrixXd covariance, double floor_eps)
    : weight_(weight), mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const Eigen::Index L = mean_.size();
  if (L < 1) throw InvalidInput("GaussianComponent: empty mean");
  if (covariance_.rows() != L || covariance_.cols() != L)
    throw InvalidInput("GaussianComponent: covariance shape does not match mean");
  if (!(weight_ >= 0.0) || !std::isfinite(weight_)) throw InvalidInput("GaussianComponent: weight must be finite and >= 0");
  if (!mean_.allFinite() || !covariance_.allFinite()) throw InvalidInput("GaussianComponent: non-finite parameters");

  const double scale = covariance_.cwiseAbs().maxCoeff();
  const double asym = (covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) throw InvalidInput("GaussianComponent: covariance is not symmetric");
  covariance_ = 0.5 * (covariance_ + covariance_.transpose());

  if (!try_factor(covariance_, chol_)) {
    double lambda = covariance_.trace() / static_cast<double>(L);
    if (!(lambda > 0.0)) lambda = 1.0;
    covariance_.diagonal().array() += floor_eps * lambda;
    floored_ = true;
    if (!try_factor(covariance_, chol_)) throw ContractViolation("GaussianComponent: covariance is not positive definite");
  }
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  precision_ = Eigen::MatrixXd::Identity(L, L);
  chol_.triangularView<Eigen::Lower>().solveInPlace(precision_);
  chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(precision_);
  precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
}

double GaussianComponent::mahalanobis_sq(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd z = x - mean_;
  chol_.triangularView<Eigen::Lower>().solveInPlace(z);
  return z.squaredNorm();
}

double GaussianComponent::log_normal(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return -0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det_ + mahalanobis_sq(x));
}

GaussianComponent GaussianComponent::with_weight(double w) const {
  GaussianComponent c = *this;
  if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("GaussianComponent: weight must be finite and >= 0");
  c.weight_ = w;
  return c;
}

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components, std::optional<PatchGeometry> geometry)
    : components_(std::move(components)), geometry_(std::move(geometry)) {
  if (components_.empty()) throw InvalidInput("GaussianMixture: no components");
  dim_ = components_.front().dim();
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.dim() != dim_) throw InvalidInput("GaussianMixture: components disagree on dimension");
    total += c.weight();
  }
  if (std::abs(total - 1.0) > 1e-10) throw InvalidInput("GaussianMixture: weights sum to " + std::to_string(total));
  if (geometry_ && geometry_->size() != dim_) throw InvalidInput("GaussianMixture: geometry size does not match dimension");
}

void GaussianMixture::component_log_densities(const Eigen::Ref<const Eigen::VectorXd>& x, std::span<double> out) const {
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    out[k] = c.weight() > 0.0 ? std::log(c.weight()) + c.log_normal(x) : -std::numeric_limits<double>::infinity();
  }
}

namespace {

void check_patch(const GaussianMixture& mix, const Eigen::Ref<const Eigen::VectorXd>& patch) {
  if (patch.size() != mix.dim())
    throw ContractViolation("patch length " + std::to_string(patch.size()) + " != mixture dimension " + std::to_string(mix.dim()));
  if (!patch.allFinite()) throw InvalidInput("patch contains non-finite values");
}

}  // namespace

double patch_log_density(const GaussianMixture& mix, const Eigen::Ref<const Eigen::VectorXd>& patch) {
  check_patch(mix, patch);
  std::vector<double> terms(mix.size());
  mix.component_log_densities(patch, terms);
  return log_sum_exp(terms);
}

double potential(const GaussianMixture& mix, const Eigen::Ref<const Eigen::VectorXd>& patch) {
  return -patch_log_density(mix, patch);
}

Responsibilities responsibilities(const GaussianMixture& mix, const Eigen::Ref<const Eigen::VectorXd>& patch) {
  check_patch(mix, patch);
  std::vector<double> terms(mix.size());
  mix.component_log_densities(patch, terms);
  const double norm = log_sum_exp(terms);
  if (!std::isfinite(norm)) throw NumericalError("responsibilities: patch has zero density under every component");
  Responsibilities w(static_cast<Eigen::Index>(terms.size()));
  for (std::size_t k = 0; k < terms.size(); ++k) w[static_cast<Eigen::Index>(k)] = std::exp(terms[k] - norm);
  return w / w.sum();
}

double average_eigenvalue(const GaussianComponent& component) {
  return std::exp(component.log_det() / static_cast<double>(component.dim()));
}

double average_eigenvalue(const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols() || covariance.rows() < 1) throw ContractViolation("average_eigenvalue: not square");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ContractViolation("average_eigenvalue: matrix is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  return std::exp(log_det / static_cast<double>(covariance.rows()));
}

GaussianMixture apply_covariance_scaling(const GaussianMixture& mix, double p, double alpha) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("covariance scaling: p must lie in [0, 1]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("covariance scaling: alpha must be positive");
  if (p == 0.0) return mix;
  std::vector<GaussianComponent> scaled;
  scaled.reserve(mix.size());
  const double alpha2 = alpha * alpha;
  for (const auto& c : mix.components()) {
    // sigma_k^2 = (avg_eig / alpha^2)^p, evaluated from the log-determinant.
    const double log_avg = c.log_det() / static_cast<double>(c.dim());
    const double sigma2 = std::exp(p * (log_avg - std::log(alpha2)));
    scaled.emplace_back(c.weight(), c.mean(), c.covariance() / sigma2);
  }
  return GaussianMixture(std::move(scaled), mix.geometry());
}

GaussianMixture merge_mixtures(const std::vector<std::pair<double, GaussianMixture>>& parts) {
  if (parts.empty()) throw InvalidInput("merge_mixtures: nothing to merge");
  double total = 0.0;
  for (const auto& [w, g] : parts) {
    if (!(w >= 0.0)) throw InvalidInput("merge_mixtures: negative group weight");
    total += w;
    if (g.dim() != parts.front().second.dim() || g.geometry() != parts.front().second.geometry())
      throw InvalidInput("merge_mixtures: parts disagree on patch geometry");
  }
  if (std::abs(total - 1.0) > 1e-10) throw InvalidInput("merge_mixtures: group weights sum to " + std::to_string(total));

  std::vector<GaussianComponent> merged;
  for (const auto& [w, g] : parts) {
    for (const auto& c : g.components()) merged.push_back(c.with_weight(w * c.weight()));
  }
  // Renormalize against accumulated rounding in the products.
  double sum = 0.0;
  for (const auto& c : merged) sum += c.weight();
  if (sum != 1.0) {
    for (auto& c : merged) c = c.with_weight(c.weight() / sum);
  }
  return GaussianMixture(std::move(merged), parts.front().second.geometry());
}

double neg_log_exp_mixture(std::span<const double> weights, std::span<const double> v) {
  if (weights.size() != v.size() || weights.empty()) throw InvalidInput("exp mixture: size mismatch");
  std::vector<double> terms(weights.size());
  double wsum = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0)) throw InvalidInput("exp mixture: weights must be nonnegative");
    wsum += weights[k];
    terms[k] = weights[k] > 0.0 ? std::log(weights[k]) - v[k] : -std::numeric_limits<double>::infinity();
  }
  if (!(wsum > 0.0)) throw InvalidInput("exp mixture: weights must have positive sum");
  return -log_sum_exp(terms);
}

double exp_mixture_surrogate(std::span<const double> weights, std::span<const double> v_at_x,
                             std::span<const double> v_at_anchor) {
  if (v_at_x.size() != weights.size()) throw InvalidInput("exp mixture: size mismatch");
  const double f_anchor = neg_log_exp_mixture(weights, v_at_anchor);
  double q = f_anchor;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] == 0.0) continue;
    // Posterior weight at the anchor: w_k exp(-v_k(x')) / f(x').
    const double post = std::exp(std::log(weights[k]) - v_at_anchor[k] + f_anchor);
    if (post > 0.0) q += post * (v_at_x[k] - v_at_anchor[k]);
  }
  return q;
}

}  // namespace gmmrf
