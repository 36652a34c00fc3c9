#include "gmmrf/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gmmrf/errors.hpp"
#include "gmmrf/numeric.hpp"
#include "gmmrf/parallel.hpp"

namespace gmmrf {

void MapProblem::validate() const {
  if (rows < 1 || cols < 1) throw InvalidInput("MapProblem: image shape must be positive");
  const long n = static_cast<long>(rows) * cols;
  if (a != nullptr) {
    const ScanGeometry& g = a->geometry();
    if (g.n_pixels != rows || g.n_pixels != cols) throw InvalidInput("MapProblem: image shape does not match the scan geometry");
    if (y.size() != a->rows()) throw InvalidInput("MapProblem: sinogram length does not match the system matrix");
  } else if (y.size() != n) {
    throw InvalidInput("MapProblem: noisy image size does not match the image shape");
  }
  if (d.diag.size() != y.size()) throw InvalidInput("MapProblem: weight vector length does not match the data");
  if (!y.allFinite()) throw InvalidInput("MapProblem: data contain non-finite values");
  if (!d.diag.allFinite() || (d.diag.array() < 0.0).any()) throw InvalidInput("MapProblem: weights must be finite and nonnegative");
  if (rows < model.geometry().rows() || cols < model.geometry().cols())
    throw InvalidInput("MapProblem: image is smaller than the patch");
}

MapProblem ct_problem(const SystemMatrix& a, const Sinogram& sinogram, const StatWeights& weights, GmMrfModel model,
                      bool clamp) {
  if (!(sinogram.geometry == a.geometry())) throw InvalidInput("ct_problem: sinogram geometry differs from the system matrix");
  if (sinogram.values.size() != a.rows()) throw InvalidInput("ct_problem: sinogram length does not match the system matrix");
  const int n = a.geometry().n_pixels;
  const Eigen::VectorXd air = a.forward(Eigen::VectorXd::Constant(a.cols(), -kAirHu));
  MapProblem problem{std::move(model), &a, n, n, a.geometry().pixel_size, sinogram.values - air, weights, std::nullopt};
  if (clamp) problem.lower_bound = kAirHu;
  problem.validate();
  return problem;
}

MapProblem denoising_problem(const Image& noisy, double noise_sigma, GmMrfModel model) {
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) throw InvalidInput("denoise: noise_sigma must be positive");
  const Eigen::VectorXd y = noisy.vec();
  MapProblem problem{std::move(model),
                     nullptr,
                     noisy.rows(),
                     noisy.cols(),
                     noisy.pixel_size(),
                     y,
                     {Eigen::VectorXd::Constant(y.size(), 1.0 / (noise_sigma * noise_sigma))},
                     std::nullopt};
  problem.validate();
  return problem;
}

void StopCriteria::validate() const {
  if (outer_iters < 1 || inner_sweeps < 1) throw InvalidInput("StopCriteria: iteration counts must be positive");
  if (!(rel_change_tol >= 0.0)) throw InvalidInput("StopCriteria: tolerance must be nonnegative");
}

SurrogateCache anchor_surrogate(const GmMrfModel& model, const Image& x_anchor) {
  const PatchGeometry& geom = model.geometry();
  const GaussianMixture& mix = model.scaled_mixture();
  const int L = mix.dim();
  const auto K = static_cast<Eigen::Index>(mix.size());
  const double scale = model.prior_scale();

  SurrogateCache cache;
  cache.range = interior_centers(x_anchor, geom);
  if (cache.range.empty()) throw InvalidInput("anchor_surrogate: image is smaller than the patch");
  cache.patch_rows = geom.rows();
  cache.patch_cols = geom.cols();
  const long patches = cache.range.count();
  const int width = cache.range.col_end - cache.range.col_begin;
  cache.resp.resize(K, patches);
  cache.hessians.resize(static_cast<Eigen::Index>(L) * L, patches);
  cache.offsets.resize(L, patches);

  std::vector<Eigen::VectorXd> weighted_means(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k)
    weighted_means[static_cast<std::size_t>(k)] = mix[static_cast<std::size_t>(k)].precision() * mix[static_cast<std::size_t>(k)].mean();

  std::vector<double> entropy(static_cast<std::size_t>(patches));
  parallel_for(patches, [&](long p) {
    const int r = cache.range.row_begin + static_cast<int>(p / width);
    const int c = cache.range.col_begin + static_cast<int>(p % width);
    Eigen::VectorXd patch(L);
    extract_patch(x_anchor, geom, r, c, patch);
    const Responsibilities w = responsibilities(mix, patch);
    cache.resp.col(p) = w;
    Eigen::Map<Eigen::MatrixXd> h(cache.hessians.col(p).data(), L, L);
    h.setZero();
    auto b = cache.offsets.col(p);
    b.setZero();
    double ent = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (w[k] == 0.0) continue;
      h.noalias() += w[k] * mix[static_cast<std::size_t>(k)].precision();
      b.noalias() += w[k] * weighted_means[static_cast<std::size_t>(k)];
      ent -= w[k] * std::log(w[k]);
    }
    h *= scale;
    b *= scale;
    entropy[static_cast<std::size_t>(p)] = ent;
  });
  cache.max_entropy = entropy.empty() ? 0.0 : *std::max_element(entropy.begin(), entropy.end());

  const int hr = cache.patch_rows / 2, hc = cache.patch_cols / 2;
  cache.curvature.resize(static_cast<Eigen::Index>(x_anchor.size()));
  parallel_for(x_anchor.rows(), [&](long rl) {
    const int r = static_cast<int>(rl);
    for (int c = 0; c < x_anchor.cols(); ++c) {
      double sum = 0.0;
      for (int dr = -hr; dr <= hr; ++dr) {
        const int sr = r - dr;
        if (sr < cache.range.row_begin || sr >= cache.range.row_end) continue;
        for (int dc = -hc; dc <= hc; ++dc) {
          const int sc = c - dc;
          if (sc < cache.range.col_begin || sc >= cache.range.col_end) continue;
          const int a = (dr + hr) * cache.patch_cols + (dc + hc);
          sum += cache.hessians(static_cast<Eigen::Index>(a) * L + a, cache.patch_index(sr, sc));
        }
      }
      cache.curvature[static_cast<Eigen::Index>(x_anchor.index(r, c))] = sum;
    }
  });
  return cache;
}

namespace {

Eigen::VectorXd residual(const MapProblem& problem, const Image& x) {
  if (problem.identity()) return problem.y - x.vec();
  return problem.y - problem.a->forward(x.vec());
}

void check_image(const MapProblem& problem, const Image& x) {
  if (x.rows() != problem.rows || x.cols() != problem.cols) throw InvalidInput("image shape does not match the problem");
  if (!x.vec().allFinite()) throw InvalidInput("image contains non-finite values");
}

}  // namespace

IcdState make_icd_state(const MapProblem& problem, const Image& x_init) {
  problem.validate();
  check_image(problem, x_init);
  IcdState state;
  state.x = x_init;
  state.x.set_pixel_size(problem.pixel_size);
  if (problem.lower_bound) {
    for (double& v : state.x.data()) v = std::max(v, *problem.lower_bound);
  }
  state.e = residual(problem, state.x);
  if (problem.identity()) {
    state.theta2 = problem.d.diag;
  } else {
    const auto& by_col = problem.a->by_col();
    state.theta2.resize(by_col.cols());
    parallel_for(by_col.cols(), [&](long j) {
      double t = 0.0;
      for (Eigen::SparseMatrix<double>::InnerIterator it(by_col, j); it; ++it) t += it.value() * it.value() * problem.d.diag[it.row()];
      state.theta2[j] = t;
    });
  }
  state.cache = anchor_surrogate(problem.model, state.x);
  return state;
}

void reanchor(IcdState& state, const MapProblem& problem) { state.cache = anchor_surrogate(problem.model, state.x); }

double icd_pixel_update(IcdState& state, long j, const MapProblem& problem) {
  if (j < 0 || j >= static_cast<long>(state.x.size())) throw InvalidInput("icd_pixel_update: pixel index out of range");
  const SurrogateCache& cache = state.cache;
  const Eigen::VectorXd& dw = problem.d.diag;

  double theta1 = 0.0;
  if (problem.identity()) {
    theta1 = -dw[j] * state.e[j];
  } else {
    for (Eigen::SparseMatrix<double>::InnerIterator it(problem.a->by_col(), j); it; ++it)
      theta1 -= it.value() * dw[it.row()] * state.e[it.row()];
  }

  const int cols = state.x.cols();
  const int r = static_cast<int>(j / cols), c = static_cast<int>(j % cols);
  const int pr = cache.patch_rows, pc = cache.patch_cols, hr = pr / 2, hc = pc / 2;
  const int L = pr * pc;
  double phi1 = 0.0;
  for (int dr = -hr; dr <= hr; ++dr) {
    const int sr = r - dr;
    if (sr < cache.range.row_begin || sr >= cache.range.row_end) continue;
    for (int dc = -hc; dc <= hc; ++dc) {
      const int sc = c - dc;
      if (sc < cache.range.col_begin || sc >= cache.range.col_end) continue;
      const long p = cache.patch_index(sr, sc);
      const int a = (dr + hr) * pc + (dc + hc);
      const double* h_col = cache.hessians.col(p).data() + static_cast<std::ptrdiff_t>(a) * L;  // symmetric: column a = row a
      double g = -cache.offsets(a, p);
      for (int br = 0; br < pr; ++br) {
        const double* row = &state.x(sr - hr + br, sc - hc);
        for (int bc = 0; bc < pc; ++bc) g += h_col[br * pc + bc] * row[bc];
      }
      phi1 += g;
    }
  }

  const double denom = state.theta2[j] + cache.curvature[j];
  if (!(denom > 0.0)) {
    ++state.skipped;
    return 0.0;
  }
  const double old = state.x[static_cast<std::size_t>(j)];
  double updated = old - (theta1 + phi1) / denom;
  if (problem.lower_bound) updated = std::max(updated, *problem.lower_bound);
  if (!std::isfinite(updated)) throw NumericalError("icd_pixel_update: non-finite update");
  const double delta = updated - old;
  if (delta == 0.0) return 0.0;
  state.x[static_cast<std::size_t>(j)] = updated;
  if (problem.identity()) {
    state.e[j] -= delta;
  } else {
    for (Eigen::SparseMatrix<double>::InnerIterator it(problem.a->by_col(), j); it; ++it) state.e[it.row()] -= it.value() * delta;
  }
  return std::abs(delta);
}

double icd_sweep(IcdState& state, const MapProblem& problem, const std::vector<long>& order) {
  double largest = 0.0;
  for (long j : order) largest = std::max(largest, icd_pixel_update(state, j, problem));
  const double drift = (state.e - residual(problem, state.x)).cwiseAbs().maxCoeff();
  const double y_max = problem.y.size() > 0 ? problem.y.cwiseAbs().maxCoeff() : 0.0;
  if (drift > 1e-8 * (1.0 + y_max)) throw NumericalError("icd_sweep: error vector drifted from y - A x");
  return largest;
}

std::vector<long> update_order(long n, const IcdOptions& options, std::uint64_t sweep) {
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  if (options.order == UpdateOrder::RandomPermutation) {
    std::mt19937_64 rng(derive_seed(options.seed, sweep));
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

double map_objective(const MapProblem& problem, const Image& x) {
  check_image(problem, x);
  const Eigen::VectorXd e = residual(problem, x);
  const Eigen::VectorXd terms = problem.d.diag.cwiseProduct(e.cwiseProduct(e));
  return 0.5 * pairwise_sum(std::span<const double>(terms.data(), static_cast<std::size_t>(terms.size()))) +
         energy(problem.model, x);
}

MapResult map_reconstruct(const MapProblem& problem, const Image& x_init, const StopCriteria& stop,
                          const IcdOptions& options) {
  stop.validate();
  IcdState state = make_icd_state(problem, x_init);
  MapResult result;
  result.objective.push_back(map_objective(problem, state.x));
  const long n = static_cast<long>(state.x.size());
  std::uint64_t sweep = 0;
  for (int it = 0; it < stop.outer_iters; ++it) {
    if (it > 0) reanchor(state, problem);
    result.max_entropy = std::max(result.max_entropy, state.cache.max_entropy);
    double change = 0.0;
    for (int s = 0; s < stop.inner_sweeps; ++s) change = icd_sweep(state, problem, update_order(n, options, sweep++));
    result.objective.push_back(map_objective(problem, state.x));
    result.outer_iterations = it + 1;
    if (change < stop.rel_change_tol) {
      result.converged = true;
      break;
    }
  }
  result.skipped = state.skipped;
  result.x = std::move(state.x);
  return result;
}

Image backprojection_init(const MapProblem& problem) {
  problem.validate();
  if (problem.identity()) return Image::from_vector(problem.rows, problem.cols, problem.y, problem.pixel_size);
  const Eigen::VectorXd num = problem.a->back(problem.y);
  const Eigen::VectorXd den = problem.a->back(Eigen::VectorXd::Ones(problem.a->rows()));
  Eigen::VectorXd x(num.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = den[i] > 0.0 ? num[i] / den[i] : 0.0;
  return Image::from_vector(problem.rows, problem.cols, x, problem.pixel_size);
}

MapResult denoise(const Image& noisy, double noise_sigma, const GmMrfModel& model, const StopCriteria& stop,
                  const IcdOptions& options) {
  return map_reconstruct(denoising_problem(noisy, noise_sigma, model), noisy, stop, options);
}

}  // namespace gmmrf
