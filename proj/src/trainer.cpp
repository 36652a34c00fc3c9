#include "gmmrf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Cholesky>

#include "gmmrf/errors.hpp"
#include "gmmrf/numeric.hpp"
#include "gmmrf/parallel.hpp"

namespace gmmrf {

PatchDataset PatchDataset::subset(std::span<const Eigen::Index> rows) const {
  PatchDataset out;
  out.patches.resize(static_cast<Eigen::Index>(rows.size()), patches.cols());
  out.sources.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.patches.row(static_cast<Eigen::Index>(i)) = patches.row(rows[i]);
    out.sources.push_back(sources[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

PatchDataset PatchDataset::concat(std::span<const PatchDataset> parts) {
  PatchDataset out;
  if (parts.empty()) return out;
  Eigen::Index n = 0;
  for (const auto& p : parts) {
    if (p.dim() != parts.front().dim()) throw InvalidInput("PatchDataset: patch lengths differ");
    n += p.size();
  }
  out.patches.resize(n, parts.front().dim());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.patches.middleRows(at, p.size()) = p.patches;
    out.sources.insert(out.sources.end(), p.sources.begin(), p.sources.end());
    at += p.size();
  }
  return out;
}

std::vector<GroupSpec> six_tissue_groups() {
  const double inf = std::numeric_limits<double>::infinity();
  return {
      {1, {-inf, -850.0}, {}, 5000, 1, 0.05},
      {2, {-850.0, -200.0}, {}, 100000, 15, 0.17},
      {3, {-200.0, 200.0}, {0.0, 25.0}, 50000, 5, 0.40},
      {4, {-200.0, 200.0}, {25.0, 80.0}, 100000, 15, 0.25},
      {5, {-200.0, 200.0}, {80.0, inf}, 100000, 15, 0.04},
      {6, {200.0, inf}, {}, 100000, 15, 0.09},
  };
}

namespace {

std::vector<double> probe_points(std::vector<double> bounds, double floor_value) {
  std::vector<double> finite;
  for (double b : bounds)
    if (std::isfinite(b) && b >= floor_value) finite.push_back(b);
  finite.push_back(floor_value);
  std::sort(finite.begin(), finite.end());
  finite.erase(std::unique(finite.begin(), finite.end()), finite.end());
  std::vector<double> probes = finite;
  for (std::size_t i = 0; i + 1 < finite.size(); ++i) probes.push_back(0.5 * (finite[i] + finite[i + 1]));
  probes.push_back(finite.back() + 1.0);
  probes.push_back(finite.back() * 2.0 + 1e6);
  if (!std::isfinite(floor_value)) probes.push_back(finite.front() - 1.0);
  return probes;
}

}  // namespace

void validate_partition(std::span<const GroupSpec> specs) {
  if (specs.empty()) throw InvalidInput("group specs: empty");
  std::vector<double> mean_bounds, std_bounds;
  std::set<int> indices;
  for (const auto& g : specs) {
    if (!(g.mean.lo < g.mean.hi) || !(g.std.lo < g.std.hi))
      throw InvalidInput("group " + std::to_string(g.index) + ": empty interval");
    if (g.components < 1) throw InvalidInput("group " + std::to_string(g.index) + ": needs at least one component");
    if (g.sample_target < 1) throw InvalidInput("group " + std::to_string(g.index) + ": sample target must be positive");
    if (!indices.insert(g.index).second) throw InvalidInput("group index " + std::to_string(g.index) + " repeated");
    mean_bounds.insert(mean_bounds.end(), {g.mean.lo, g.mean.hi});
    std_bounds.insert(std_bounds.end(), {g.std.lo, g.std.hi});
  }
  const double inf = std::numeric_limits<double>::infinity();
  for (double m : probe_points(mean_bounds, -inf)) {
    if (!std::isfinite(m)) continue;
    for (double s : probe_points(std_bounds, 0.0)) {
      int hits = 0;
      for (const auto& g : specs) hits += (g.mean.contains(m) && g.std.contains(s)) ? 1 : 0;
      if (hits != 1)
        throw InvalidInput("group specs do not partition the plane: (mean " + std::to_string(m) + ", std " +
                           std::to_string(s) + ") matches " + std::to_string(hits) + " groups");
    }
  }
}

PatchDataset extract_patches(const Image& image, const PatchGeometry& geometry, int stride, int image_id) {
  if (stride <= 0) throw InvalidInput("extract_patches: stride must be positive");
  const InteriorRange range = interior_centers(image, geometry);
  if (range.empty()) throw InvalidInput("extract_patches: image smaller than the patch");
  std::vector<int> rows, cols;
  for (int r = range.row_begin; r < range.row_end; r += stride) rows.push_back(r);
  for (int c = range.col_begin; c < range.col_end; c += stride) cols.push_back(c);
  PatchDataset out;
  out.patches.resize(static_cast<Eigen::Index>(rows.size() * cols.size()), geometry.size());
  Eigen::VectorXd patch(geometry.size());
  Eigen::Index n = 0;
  for (int r : rows) {
    for (int c : cols) {
      extract_patch(image, geometry, r, c, patch);
      out.patches.row(n++) = patch.transpose();
      out.sources.push_back({image_id, r, c});
    }
  }
  return out;
}

std::pair<double, double> patch_statistics(const Eigen::Ref<const Eigen::VectorXd>& patch) {
  const double mean = patch.mean();
  const double var = (patch.array() - mean).square().mean();
  return {mean, std::sqrt(var)};
}

std::vector<PatchDataset> partition_patches(const PatchDataset& data, std::span<const GroupSpec> specs, std::uint64_t seed) {
  validate_partition(specs);
  std::vector<std::vector<Eigen::Index>> members(specs.size());
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    const auto [mean, sd] = patch_statistics(data.patches.row(n).transpose());
    std::size_t hit = specs.size();
    for (std::size_t g = 0; g < specs.size(); ++g) {
      if (specs[g].mean.contains(mean) && specs[g].std.contains(sd)) {
        hit = g;
        break;
      }
    }
    if (hit == specs.size())
      throw ContractViolation("partition_patches: patch with mean " + std::to_string(mean) + " and std " +
                              std::to_string(sd) + " matches no group");
    members[hit].push_back(n);
  }

  std::vector<PatchDataset> out;
  out.reserve(specs.size());
  for (std::size_t g = 0; g < specs.size(); ++g) {
    auto& idx = members[g];
    if (idx.size() > specs[g].sample_target) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(specs[g].index)));
      // Partial Fisher-Yates: the first sample_target slots become a uniform sample.
      for (std::size_t i = 0; i < specs[g].sample_target; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      idx.resize(specs[g].sample_target);
      std::sort(idx.begin(), idx.end());
    }
    out.push_back(data.subset(idx));
  }
  return out;
}

namespace {

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
  return 0.5 * (cov + cov.transpose());
}

std::vector<Eigen::Index> kmeans_plus_plus(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> seeds;
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  seeds.push_back(first(rng));
  Eigen::VectorXd d2 = (x.rowwise() - x.row(seeds.back())).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(seeds.size()) < k) {
    const double total = d2.sum();
    Eigen::Index choice = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      choice = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          choice = i;
          break;
        }
      }
    } else {
      choice = first(rng);
    }
    seeds.push_back(choice);
    d2 = d2.cwiseMin((x.rowwise() - x.row(choice)).rowwise().squaredNorm());
  }
  return seeds;
}

bool well_conditioned(const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  return llt.info() == Eigen::Success && llt.rcond() > kMinCovarianceRcond;
}

}  // namespace

EmResult em_fit(const PatchDataset& data, int components, const EmConfig& cfg) {
  if (components < 1) throw InvalidInput("em_fit: need at least one component");
  if (cfg.max_iters < 1 || !(cfg.ll_tolerance > 0.0) || !(cfg.variance_floor >= 0.0))
    throw InvalidInput("em_fit: invalid EM configuration");
  const Eigen::MatrixXd& x = data.patches;
  const Eigen::Index n = x.rows();
  const int dim = static_cast<int>(x.cols());
  if (n < components) throw InvalidInput("em_fit: fewer patches than components");
  if (!x.allFinite()) throw InvalidInput("em_fit: non-finite patch values");

  std::mt19937_64 rng(cfg.seed);
  const Eigen::RowVectorXd global_mean = x.colwise().mean();
  Eigen::MatrixXd global_cov = sample_covariance(x, global_mean);
  global_cov.diagonal().array() += cfg.variance_floor;

  std::vector<GaussianComponent> comps;
  for (Eigen::Index s : kmeans_plus_plus(x, components, rng))
    comps.emplace_back(1.0 / components, x.row(s).transpose(), global_cov, cfg.covariance_floor);

  EmResult result{GaussianMixture(comps), {}, 0, false, 0, 0};
  Eigen::MatrixXd log_resp(n, components);
  Eigen::VectorXd log_norm(n);

  for (int iter = 0;; ++iter) {
    // E-step.
    parallel_for(components, [&](long k) {
      const auto& c = comps[static_cast<std::size_t>(k)];
      const Eigen::MatrixXd centered = (x.rowwise() - c.mean().transpose()).transpose();
      const Eigen::MatrixXd z = c.chol().triangularView<Eigen::Lower>().solve(centered);
      const double base = std::log(c.weight()) - 0.5 * (dim * 1.8378770664093453 + c.log_det());
      log_resp.col(k) = (base - 0.5 * z.colwise().squaredNorm().array()).transpose();
    });
    std::vector<double> row(static_cast<std::size_t>(components));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < components; ++k) row[static_cast<std::size_t>(k)] = log_resp(i, k);
      log_norm[i] = log_sum_exp(row);
      log_resp.row(i).array() -= log_norm[i];
    }
    const double ll = pairwise_sum(std::span<const double>(log_norm.data(), static_cast<std::size_t>(n))) / static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericalError("em_fit: log-likelihood is not finite");
    result.log_likelihood.push_back(ll);
    if (iter > 0) {
      const double prev = result.log_likelihood[result.log_likelihood.size() - 2];
      if (std::abs(ll - prev) <= cfg.ll_tolerance * std::max(1.0, std::abs(prev))) {
        result.converged = true;
        break;
      }
    }
    if (iter == cfg.max_iters) break;

    // M-step.
    const Eigen::MatrixXd resp = log_resp.array().exp().matrix();
    std::vector<GaussianComponent> next;
    next.reserve(comps.size());
    std::vector<double> counts(static_cast<std::size_t>(components));
    for (int k = 0; k < components; ++k) counts[static_cast<std::size_t>(k)] = resp.col(k).sum();
    for (int k = 0; k < components; ++k) {
      const double nk = counts[static_cast<std::size_t>(k)];
      if (nk < 1e-8) {
        // Empty component: re-seed at the patch the current model explains worst.
        Eigen::Index worst = 0;
        log_norm.minCoeff(&worst);
        next.emplace_back(1.0 / static_cast<double>(n), x.row(worst).transpose(), global_cov, cfg.covariance_floor);
        ++result.reseeded;
        continue;
      }
      const Eigen::RowVectorXd mean = (resp.col(k).transpose() * x) / nk;
      const Eigen::MatrixXd centered = x.rowwise() - mean;
      Eigen::MatrixXd cov = centered.transpose() * (centered.array().colwise() * resp.col(k).array()).matrix() / nk;
      cov = 0.5 * (cov + cov.transpose()).eval();
      cov.diagonal().array() += cfg.variance_floor;
      // Numerically singular update: keep the previous covariance.
      if (!well_conditioned(cov)) {
        cov = comps[static_cast<std::size_t>(k)].covariance();
        ++result.held_covariances;
      }
      next.emplace_back(nk / static_cast<double>(n), mean.transpose(), cov, cfg.covariance_floor);
    }
    double total = 0.0;
    for (const auto& c : next) total += c.weight();
    for (auto& c : next) c = c.with_weight(c.weight() / total);
    comps = std::move(next);
    ++result.iterations;
  }

  // Exact unit sum for the mixture invariant.
  double head = 0.0;
  for (std::size_t k = 0; k + 1 < comps.size(); ++k) head += comps[k].weight();
  comps.back() = comps.back().with_weight(std::max(0.0, 1.0 - head));
  result.mixture = GaussianMixture(std::move(comps));
  return result;
}

TrainingResult train_gmmrf(std::span<const Image> images, const PatchGeometry& geometry, std::span<const GroupSpec> specs,
                           const EmConfig& cfg, const TrainingOptions& options) {
  if (images.empty()) throw InvalidInput("train_gmmrf: no training images");
  validate_partition(specs);
  if (options.weighting == GroupWeighting::Configured) {
    double total = 0.0;
    for (const auto& g : specs) total += g.mixture_weight;
    if (std::abs(total - 1.0) > 1e-10) throw InvalidInput("train_gmmrf: group weights sum to " + std::to_string(total));
  }

  std::vector<PatchDataset> per_image;
  for (std::size_t i = 0; i < images.size(); ++i)
    per_image.push_back(extract_patches(images[i], geometry, options.stride, static_cast<int>(i)));
  const PatchDataset all = PatchDataset::concat(per_image);

  // Natural proportions are counted before subsampling.
  std::vector<std::size_t> available(specs.size(), 0);
  for (Eigen::Index n = 0; n < all.size(); ++n) {
    const auto [mean, sd] = patch_statistics(all.patches.row(n).transpose());
    for (std::size_t g = 0; g < specs.size(); ++g) {
      if (specs[g].mean.contains(mean) && specs[g].std.contains(sd)) {
        ++available[g];
        break;
      }
    }
  }
  const auto groups = partition_patches(all, specs, cfg.seed);

  std::vector<std::pair<double, GaussianMixture>> parts;
  std::vector<GroupReport> reports;
  for (std::size_t g = 0; g < specs.size(); ++g) {
    const auto& spec = specs[g];
    const double weight = options.weighting == GroupWeighting::Natural
                              ? static_cast<double>(available[g]) / static_cast<double>(all.size())
                              : spec.mixture_weight;
    if (options.weighting == GroupWeighting::Natural && available[g] == 0) continue;
    if (groups[g].size() < spec.components)
      throw InvalidInput("train_gmmrf: group " + std::to_string(spec.index) + " has " + std::to_string(groups[g].size()) +
                         " patches but needs at least " + std::to_string(spec.components));
    EmConfig group_cfg = cfg;
    group_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(spec.index));
    EmResult fit = em_fit(groups[g], spec.components, group_cfg);
    reports.push_back({spec.index, available[g], static_cast<std::size_t>(groups[g].size()), weight, fit.log_likelihood});
    parts.emplace_back(weight, GaussianMixture(fit.mixture.components(), geometry));
  }
  if (options.weighting == GroupWeighting::Natural) {
    // Rounding in the proportions must not trip merge_mixtures' unit-sum check.
    double total = 0.0;
    for (const auto& p : parts) total += p.first;
    for (auto& p : parts) p.first /= total;
  }
  return {GmMrfModel(merge_mixtures(parts)), std::move(reports)};
}

}  // namespace gmmrf
