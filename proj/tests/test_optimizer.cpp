#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "gmmrf/errors.hpp"
#include "gmmrf/optimizer.hpp"
#include "test_support.hpp"

using namespace gmmrf;
using gmmrf::testing::dense_surrogate_solution;
using gmmrf::testing::naive_responsibilities;
using gmmrf::testing::patch_at;
using gmmrf::testing::random_image;
using gmmrf::testing::random_mixture;

namespace {

GmMrfModel gaussian_model(int side, double mean, double variance, double sigma_x = 1.0) {
  const int L = side * side;
  GaussianMixture mix({GaussianComponent(1.0, Eigen::VectorXd::Constant(L, mean), variance * Eigen::MatrixXd::Identity(L, L))},
                      PatchGeometry::square(side));
  return GmMrfModel(mix, sigma_x);
}

GmMrfModel random_model(std::mt19937_64& rng, int k, int side, double mean_scale, double cov_scale, double sigma_x = 1.0) {
  return GmMrfModel(random_mixture(rng, k, side * side, mean_scale, cov_scale, PatchGeometry::square(side)), sigma_x);
}

/// Runs sweeps with the surrogate frozen at the initial image.
Image frozen_icd(const MapProblem& problem, const Image& x0, int sweeps, const IcdOptions& options = {}) {
  IcdState state = make_icd_state(problem, x0);
  for (int s = 0; s < sweeps; ++s)
    icd_sweep(state, problem, update_order(static_cast<long>(x0.size()), options, static_cast<std::uint64_t>(s)));
  return state.x;
}

double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST_CASE("scalar problem matches the closed-form posterior mean") {
  const GmMrfModel model = gaussian_model(1, 0.0, 1.0);
  const MapProblem problem = denoising_problem(Image(1, 1, 2.0), 1.0, model);
  IcdState state = make_icd_state(problem, Image(1, 1, 0.0));
  CHECK(state.theta2[0] == 1.0);
  CHECK(state.cache.curvature[0] == 1.0);
  CHECK(state.e[0] == 2.0);
  const double change = icd_pixel_update(state, 0, problem);
  CHECK(state.x[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(change == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(state.e[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("prior-only update leaves the prior mean unchanged") {
  const GmMrfModel model = gaussian_model(3, 25.0, 40.0);
  MapProblem problem = denoising_problem(Image(6, 6, 0.0), 1.0, model);
  problem.d.diag.setZero();
  IcdState state = make_icd_state(problem, Image(6, 6, 25.0));
  for (long j = 0; j < 36; ++j) CHECK(icd_pixel_update(state, j, problem) < 1e-12);
  CHECK((state.x.vec().array() - 25.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("anchor_surrogate") {
  std::mt19937_64 rng(3);
  SUBCASE("single Gaussian gives unit weights and zero entropy") {
    const auto cache = anchor_surrogate(gaussian_model(3, 0.0, 4.0), random_image(rng, 7, 9, 0.0, 5.0));
    CHECK(cache.patch_count() == 5 * 7);
    CHECK((cache.resp.array() == 1.0).all());
    CHECK(cache.max_entropy == 0.0);
  }
  SUBCASE("remote components give one-hot weights") {
    std::vector<GaussianComponent> comps;
    comps.emplace_back(0.3, Eigen::VectorXd::Constant(9, 10.0), 1e-2 * Eigen::MatrixXd::Identity(9, 9));
    comps.emplace_back(0.4, Eigen::VectorXd::Constant(9, 500.0), 1e2 * Eigen::MatrixXd::Identity(9, 9));
    comps.emplace_back(0.3, Eigen::VectorXd::Constant(9, -800.0), 1e2 * Eigen::MatrixXd::Identity(9, 9));
    const GmMrfModel model(GaussianMixture(std::move(comps), PatchGeometry::square(3)));
    const auto cache = anchor_surrogate(model, Image(6, 6, 10.0));
    for (long p = 0; p < cache.patch_count(); ++p) {
      CHECK(std::abs(cache.resp(0, p) - 1.0) < 1e-6);
      CHECK(cache.resp(1, p) < 1e-6);
      CHECK(cache.resp(2, p) < 1e-6);
    }
  }
  SUBCASE("columns equal per-patch responsibilities") {
    const GmMrfModel model = random_model(rng, 4, 3, 3.0, 4.0);
    const Image x = random_image(rng, 8, 10, 0.0, 3.0);
    const auto cache = anchor_surrogate(model, x);
    for (int r = 1; r < 7; ++r) {
      for (int c = 1; c < 9; ++c) {
        const Eigen::VectorXd patch = patch_at(x, 3, 3, r, c);
        const long p = cache.patch_index(r, c);
        CHECK(cache.resp.col(p) == responsibilities(model.scaled_mixture(), patch));
        CHECK((cache.resp.col(p) - naive_responsibilities(model.scaled_mixture(), patch)).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
  SUBCASE("too small an image is rejected") {
    CHECK_THROWS_AS(anchor_surrogate(gaussian_model(5, 0.0, 1.0), Image(4, 8)), InvalidInput);
  }
}

TEST_CASE("frozen-weight ICD converges to the dense surrogate solution") {
  std::mt19937_64 rng(11);
  for (int k : {1, 3}) {
    CAPTURE(k);
    const GmMrfModel model = random_model(rng, k, 3, 20.0, 200.0, 0.5);
    const Image clean = random_image(rng, 8, 8, 0.0, 15.0);
    Image noisy = clean;
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += 10.0 * std::normal_distribution<double>(0.0, 1.0)(rng);
    const MapProblem problem = denoising_problem(noisy, 10.0, model);
    const Eigen::VectorXd expected = dense_surrogate_solution(problem, noisy);
    const Image raster = frozen_icd(problem, noisy, 500);
    CHECK(rel_diff(raster.vec(), expected) < 1e-6);
    const Image shuffled = frozen_icd(problem, noisy, 500, {UpdateOrder::RandomPermutation, 9});
    CHECK(rel_diff(shuffled.vec(), expected) < 1e-6);
    CHECK(rel_diff(shuffled.vec(), raster.vec()) < 1e-6);
  }
  SUBCASE("CT data term") {
    const ScanGeometry g{8, 1.0, 12, ScanGeometry::detectors_for(8, 1.0, 1.0), 1.0};
    const SystemMatrix a(g);
    Image phantom(8, 8, 0.0);
    for (int r = 2; r < 6; ++r)
      for (int c = 3; c < 7; ++c) phantom(r, c) = 200.0;
    const auto scan = simulate_sinogram(a, phantom, {1e4, 2, false});
    const MapProblem problem = ct_problem(a, scan.sinogram, scan.weights, random_model(rng, 3, 3, 100.0, 5000.0), false);
    const Image x0 = backprojection_init(problem);
    const Eigen::VectorXd expected = dense_surrogate_solution(problem, x0);
    CHECK(rel_diff(frozen_icd(problem, x0, 3000).vec(), expected) < 1e-6);
  }
}

TEST_CASE("error vector stays consistent with y - A x") {
  const ScanGeometry g{10, 1.0, 15, ScanGeometry::detectors_for(10, 1.0, 1.0), 1.0};
  const SystemMatrix a(g);
  std::mt19937_64 rng(13);
  const Image phantom = random_image(rng, 10, 10, 0.0, 100.0);
  const auto scan = simulate_sinogram(a, phantom, {1e4, 4, false});
  const MapProblem problem = ct_problem(a, scan.sinogram, scan.weights, gaussian_model(3, 0.0, 1e4));
  IcdState state = make_icd_state(problem, backprojection_init(problem));
  const double tol = 1e-8 * (1.0 + problem.y.cwiseAbs().maxCoeff());
  for (long j = 0; j < 100; ++j) {
    icd_pixel_update(state, (j * 37) % 100, problem);
    CHECK((state.e - (problem.y - a.forward(state.x.vec()))).cwiseAbs().maxCoeff() <= tol);
  }
}

TEST_CASE("map_reconstruct") {
  std::mt19937_64 rng(17);
  SUBCASE("single Gaussian prior: converges to the dense MAP solution") {
    const GmMrfModel model = gaussian_model(3, 5.0, 100.0, 0.7);
    const Image noisy = random_image(rng, 9, 9, 0.0, 20.0);
    const MapProblem problem = denoising_problem(noisy, 10.0, model);
    const Eigen::VectorXd expected = dense_surrogate_solution(problem, noisy);
    const MapResult result = map_reconstruct(problem, noisy, {400, 1, 0.0});
    CHECK(rel_diff(result.x.vec(), expected) < 1e-6);
    CHECK(result.max_entropy == 0.0);
  }
  SUBCASE("tolerance stops early") {
    const MapResult result = denoise(random_image(rng, 9, 9, 0.0, 20.0), 10.0, gaussian_model(3, 0.0, 100.0), {400, 1, 1e-3});
    CHECK(result.converged);
    CHECK(result.outer_iterations < 400);
    CHECK(result.objective.size() == static_cast<std::size_t>(result.outer_iterations) + 1);
  }
  SUBCASE("objective trace is non-increasing on random denoising problems") {
    for (int trial = 0; trial < 20; ++trial) {
      const int k = 1 + trial % 4;
      const GmMrfModel model = random_model(rng, k, 3, 30.0, 300.0, 0.3 + 0.1 * (trial % 5));
      const Image noisy = random_image(rng, 10, 10, 0.0, 40.0);
      const MapResult result = denoise(noisy, 5.0 + trial, model, {15, 1 + trial % 2, 0.0});
      for (std::size_t t = 1; t < result.objective.size(); ++t)
        CHECK(result.objective[t] <= result.objective[t - 1] + 1e-8 * std::abs(result.objective[t - 1]));
    }
  }
  SUBCASE("update order does not change the converged result") {
    const GmMrfModel model = gaussian_model(3, 0.0, 200.0);
    const Image noisy = random_image(rng, 8, 8, 0.0, 20.0);
    const MapResult raster = denoise(noisy, 10.0, model, {300, 1, 0.0});
    const MapResult shuffled = denoise(noisy, 10.0, model, {300, 1, 0.0}, {UpdateOrder::RandomPermutation, 5});
    CHECK(rel_diff(shuffled.x.vec(), raster.x.vec()) < 1e-6);
  }
  SUBCASE("limits") {
    const Image noisy = random_image(rng, 8, 8, 50.0, 30.0);
    const MapResult data_bound = denoise(noisy, 1e-4, gaussian_model(3, 0.0, 100.0), {5, 1, 0.0});
    CHECK((data_bound.x.vec() - noisy.vec()).cwiseAbs().maxCoeff() < 1e-3);
    const MapResult prior_bound = denoise(noisy, 10.0, gaussian_model(3, 0.0, 100.0, 1e-4), {20, 1, 0.0});
    CHECK(prior_bound.x.vec().cwiseAbs().maxCoeff() < 1e-3);
  }
  SUBCASE("CT clamp keeps attenuation nonnegative") {
    const ScanGeometry g{12, 1.0, 18, ScanGeometry::detectors_for(12, 1.0, 1.0), 1.0};
    const SystemMatrix a(g);
    const auto scan = simulate_sinogram(a, Image(12, 12, -1000.0), {1e3, 1, false});
    const MapProblem problem = ct_problem(a, scan.sinogram, scan.weights, gaussian_model(3, -1000.0, 1e3));
    const MapResult result = map_reconstruct(problem, backprojection_init(problem), {10, 1, 0.0});
    CHECK(result.x.vec().minCoeff() >= -1000.0);
    for (std::size_t t = 1; t < result.objective.size(); ++t)
      CHECK(result.objective[t] <= result.objective[t - 1] + 1e-8 * std::abs(result.objective[t - 1]));
  }
  SUBCASE("identical runs are bit-identical") {
    const GmMrfModel model = random_model(rng, 3, 3, 30.0, 300.0);
    const Image noisy = random_image(rng, 10, 10, 0.0, 40.0);
    const MapResult a = denoise(noisy, 10.0, model, {5, 1, 0.0}, {UpdateOrder::RandomPermutation, 1});
    const MapResult b = denoise(noisy, 10.0, model, {5, 1, 0.0}, {UpdateOrder::RandomPermutation, 1});
    CHECK(a.x.vec() == b.x.vec());
    CHECK(a.objective == b.objective);
  }
}

TEST_CASE("input validation") {
  const GmMrfModel model = gaussian_model(3, 0.0, 1.0);
  CHECK_THROWS_AS(denoising_problem(Image(5, 5), 0.0, model), InvalidInput);
  CHECK_THROWS_AS(denoising_problem(Image(2, 5), 1.0, model), InvalidInput);
  const MapProblem problem = denoising_problem(Image(5, 5), 1.0, model);
  CHECK_THROWS_AS(map_reconstruct(problem, Image(5, 5), {0, 1, 0.1}), InvalidInput);
  CHECK_THROWS_AS(map_reconstruct(problem, Image(5, 5), {1, 1, -1.0}), InvalidInput);
  CHECK_THROWS_AS(map_reconstruct(problem, Image(6, 5), {}), InvalidInput);
  IcdState state = make_icd_state(problem, Image(5, 5));
  CHECK_THROWS_AS(icd_pixel_update(state, 25, problem), InvalidInput);

  const ScanGeometry g{8, 1.0, 4, ScanGeometry::detectors_for(8, 1.0, 1.0), 1.0};
  const SystemMatrix a(g);
  Sinogram wrong{g, Eigen::VectorXd::Zero(5)};
  CHECK_THROWS_AS(ct_problem(a, wrong, {Eigen::VectorXd::Ones(5)}, model), InvalidInput);
  Sinogram ok{g, Eigen::VectorXd::Zero(a.rows())};
  CHECK_THROWS_AS(ct_problem(a, ok, {-Eigen::VectorXd::Ones(a.rows())}, model), InvalidInput);
}
