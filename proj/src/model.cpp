#include "gmmrf/model.hpp"

#include <cmath>
#include <vector>

#include "gmmrf/errors.hpp"
#include "gmmrf/numeric.hpp"
#include "gmmrf/parallel.hpp"

namespace gmmrf {

namespace {

GaussianMixture checked(GaussianMixture mixture) {
  if (!mixture.geometry()) throw InvalidInput("GmMrfModel: mixture needs a patch geometry");
  if (mixture.geometry()->dims().size() != 2) throw InvalidInput("GmMrfModel: only 2-D patch geometries are supported");
  return mixture;
}

void check_params(double sigma_x, double p, double alpha) {
  if (!(sigma_x > 0.0) || !std::isfinite(sigma_x)) throw InvalidInput("GmMrfModel: sigma_x must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("GmMrfModel: p must lie in [0, 1]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("GmMrfModel: alpha must be positive");
}

InteriorRange checked_interior(const GmMrfModel& model, const Image& image) {
  const InteriorRange range = interior_centers(image, model.geometry());
  if (range.empty()) throw InvalidInput("image is smaller than the patch");
  return range;
}

}  // namespace

GmMrfModel::GmMrfModel(GaussianMixture mixture, double sigma_x, double p, double alpha)
    : mixture_(checked(std::move(mixture))),
      sigma_x_(sigma_x),
      p_(p),
      alpha_(alpha),
      scaled_((check_params(sigma_x, p, alpha), apply_covariance_scaling(mixture_, p, alpha))) {}

double GmMrfModel::prior_scale() const {
  return 1.0 / (static_cast<double>(mixture_.dim()) * sigma_x_ * sigma_x_);
}

GmMrfModel GmMrfModel::with_parameters(double sigma_x, double p, double alpha) const {
  return GmMrfModel(mixture_, sigma_x, p, alpha);
}

double energy(const GmMrfModel& model, const Image& image) {
  const InteriorRange range = checked_interior(model, image);
  const int width = range.col_end - range.col_begin;
  std::vector<double> terms(static_cast<std::size_t>(range.count()));
  const GaussianMixture& mix = model.scaled_mixture();

  parallel_for(range.row_end - range.row_begin, [&](long i) {
    const int r = range.row_begin + static_cast<int>(i);
    Eigen::VectorXd patch(mix.dim());
    for (int c = range.col_begin; c < range.col_end; ++c) {
      extract_patch(image, model.geometry(), r, c, patch);
      terms[static_cast<std::size_t>(i * width + (c - range.col_begin))] = potential(mix, patch);
    }
  });
  return model.prior_scale() * pairwise_sum(terms);
}

double surrogate_energy(const GmMrfModel& model, const Image& x, const Image& anchor) {
  if (!x.same_shape(anchor)) throw InvalidInput("surrogate_energy: image and anchor differ in shape");
  const InteriorRange range = checked_interior(model, x);
  const int width = range.col_end - range.col_begin;
  const GaussianMixture& mix = model.scaled_mixture();
  const std::size_t K = mix.size();
  std::vector<double> terms(static_cast<std::size_t>(range.count()));

  parallel_for(range.row_end - range.row_begin, [&](long i) {
    const int r = range.row_begin + static_cast<int>(i);
    Eigen::VectorXd px(mix.dim()), pa(mix.dim());
    std::vector<double> log_terms(K);
    for (int c = range.col_begin; c < range.col_end; ++c) {
      extract_patch(x, model.geometry(), r, c, px);
      extract_patch(anchor, model.geometry(), r, c, pa);
      mix.component_log_densities(pa, log_terms);
      const double log_g = log_sum_exp(log_terms);
      if (!std::isfinite(log_g)) throw NumericalError("surrogate_energy: anchor patch has zero density");
      // V(P_s x') + sum_k w_k (v_k(P_s x) - v_k(P_s x')), v_k = half the Mahalanobis distance.
      double t = -log_g;
      for (std::size_t k = 0; k < K; ++k) {
        const double w = std::exp(log_terms[k] - log_g);
        if (w == 0.0) continue;
        t += w * 0.5 * (mix[k].mahalanobis_sq(px) - mix[k].mahalanobis_sq(pa));
      }
      terms[static_cast<std::size_t>(i * width + (c - range.col_begin))] = t;
    }
  });
  return model.prior_scale() * pairwise_sum(terms);
}

}  // namespace gmmrf
