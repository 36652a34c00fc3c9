#include "gmmrf/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gmmrf/errors.hpp"
#include "gmmrf/numeric.hpp"
#include "gmmrf/parallel.hpp"

namespace gmmrf {

double ScanGeometry::angle(int view) const { return std::numbers::pi * view / n_angles; }

double ScanGeometry::detector_position(int bin) const { return (bin - 0.5 * (n_detectors - 1)) * detector_spacing; }

void ScanGeometry::validate() const {
  if (n_pixels < 1 || n_angles < 1 || n_detectors < 1) throw InvalidInput("ScanGeometry: counts must be positive");
  if (!(pixel_size > 0.0) || !(detector_spacing > 0.0)) throw InvalidInput("ScanGeometry: sizes must be positive");
  if (!(mu_water > 0.0)) throw InvalidInput("ScanGeometry: mu_water must be positive");
  const double diagonal = n_pixels * pixel_size * std::numbers::sqrt2;
  if (n_detectors * detector_spacing < diagonal * (1.0 - 1e-12))
    throw InvalidInput("ScanGeometry: detector array does not span the image diagonal");
}

int ScanGeometry::detectors_for(int n_pixels, double pixel_size, double spacing) {
  int n = static_cast<int>(std::ceil(n_pixels * pixel_size * std::numbers::sqrt2 / spacing));
  return n % 2 == 0 ? n + 1 : n;
}

std::vector<std::pair<int, double>> trace_ray(const ScanGeometry& g, int view, int bin) {
  double c = std::cos(g.angle(view));
  double s = std::sin(g.angle(view));
  if (std::abs(c) < 1e-12) c = 0.0;
  if (std::abs(s) < 1e-12) s = 0.0;
  const double t = g.detector_position(bin);
  const double px = t * c, py = t * s;  // closest point to the axis
  const double dx = -s, dy = c;         // unit direction
  const double half = 0.5 * g.n_pixels * g.pixel_size;

  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  auto clip = [&](double p, double d) {
    if (d == 0.0) {
      if (p < -half || p >= half) lo = hi = 0.0;
      return;
    }
    const double a = (-half - p) / d, b = (half - p) / d;
    lo = std::max(lo, std::min(a, b));
    hi = std::min(hi, std::max(a, b));
  };
  clip(px, dx);
  clip(py, dy);
  if (!(hi > lo)) return {};

  std::vector<double> knots = {lo, hi};
  for (int k = 0; k <= g.n_pixels; ++k) {
    const double line = -half + k * g.pixel_size;
    if (dx != 0.0) {
      const double l = (line - px) / dx;
      if (l > lo && l < hi) knots.push_back(l);
    }
    if (dy != 0.0) {
      const double l = (line - py) / dy;
      if (l > lo && l < hi) knots.push_back(l);
    }
  }
  std::sort(knots.begin(), knots.end());

  std::vector<std::pair<int, double>> out;
  const double min_len = 1e-12 * g.pixel_size;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double len = knots[i + 1] - knots[i];
    if (len <= min_len) continue;
    const double mid = 0.5 * (knots[i] + knots[i + 1]);
    const double mx = px + mid * dx, my = py + mid * dy;
    const int col = std::clamp(static_cast<int>(std::floor((mx + half) / g.pixel_size)), 0, g.n_pixels - 1);
    const int row = std::clamp(static_cast<int>(std::floor((half - my) / g.pixel_size)), 0, g.n_pixels - 1);
    const int j = row * g.n_pixels + col;
    if (!out.empty() && out.back().first == j) {
      out.back().second += len;
    } else {
      out.emplace_back(j, len);
    }
  }
  return out;
}

SystemMatrix::SystemMatrix(const ScanGeometry& geometry) : geometry_(geometry) {
  geometry_.validate();
  const auto m = static_cast<Eigen::Index>(geometry_.measurements());
  const auto n = static_cast<Eigen::Index>(geometry_.unknowns());
  std::vector<std::vector<std::pair<int, double>>> rays(static_cast<std::size_t>(m));
  parallel_for(m, [&](long i) {
    rays[static_cast<std::size_t>(i)] =
        trace_ray(geometry_, static_cast<int>(i / geometry_.n_detectors), static_cast<int>(i % geometry_.n_detectors));
  });
  std::vector<Eigen::Triplet<double>> triplets;
  std::size_t nnz = 0;
  for (const auto& r : rays) nnz += r.size();
  triplets.reserve(nnz);
  for (Eigen::Index i = 0; i < m; ++i)
    for (const auto& [j, len] : rays[static_cast<std::size_t>(i)]) triplets.emplace_back(static_cast<int>(i), j, len);
  by_row_.resize(m, n);
  by_row_.setFromTriplets(triplets.begin(), triplets.end());
  by_row_.makeCompressed();
  by_col_ = by_row_;
  by_col_.makeCompressed();
}

Eigen::SparseVector<double> SystemMatrix::column(Eigen::Index j) const {
  if (j < 0 || j >= cols()) throw InvalidInput("SystemMatrix::column: index out of range");
  return by_col_.col(j);
}

Eigen::VectorXd SystemMatrix::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != cols()) throw InvalidInput("forward projection: image size does not match the system matrix");
  return by_row_ * x;
}

Eigen::VectorXd SystemMatrix::back(const Eigen::Ref<const Eigen::VectorXd>& r) const {
  if (r.size() != rows()) throw InvalidInput("back projection: sinogram size does not match the system matrix");
  return by_col_.transpose() * r;
}

SystemMatrix build_system_matrix(const ScanGeometry& geometry) { return SystemMatrix(geometry); }

Eigen::VectorXd forward_project(const SystemMatrix& a, const Image& x) {
  if (x.rows() != a.geometry().n_pixels || x.cols() != a.geometry().n_pixels)
    throw InvalidInput("forward_project: image shape does not match the scan geometry");
  return a.forward(x.vec());
}

Image back_project(const SystemMatrix& a, const Eigen::Ref<const Eigen::VectorXd>& r) {
  const int n = a.geometry().n_pixels;
  return Image::from_vector(n, n, a.back(r), a.geometry().pixel_size);
}

SimulatedScan simulate_sinogram(const SystemMatrix& a, const Image& x_true, const SimulationOptions& options) {
  if (!(options.dose > 0.0) || !std::isfinite(options.dose)) throw InvalidInput("simulate_sinogram: dose must be positive");
  const ScanGeometry& g = a.geometry();
  Eigen::VectorXd shifted = x_true.vec();
  shifted.array() -= kAirHu;
  const Eigen::VectorXd clean = forward_project(a, Image::from_vector(x_true.rows(), x_true.cols(), shifted));
  const double to_ell = g.mu_water / 1000.0;  // HU*mm -> unitless line integral

  SimulatedScan out{{g, Eigen::VectorXd(clean.size())}, {Eigen::VectorXd(clean.size())}, Eigen::VectorXd(clean.size())};
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    const double expected = options.dose * std::exp(-to_ell * clean[i]);
    if (options.noiseless) {
      out.sinogram.values[i] = clean[i];
      out.counts[i] = expected;
    } else {
      std::mt19937_64 rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
      std::poisson_distribution<long long> poisson(expected);
      const double counts = static_cast<double>(poisson(rng));
      out.counts[i] = counts;
      out.sinogram.values[i] = -std::log(std::max(counts, 1.0) / options.dose) / to_ell;
    }
    out.weights.diag[i] = out.counts[i] * to_ell * to_ell;
  }
  return out;
}

Image filtered_back_projection(const Sinogram& sinogram) {
  const ScanGeometry& g = sinogram.geometry;
  g.validate();
  if (static_cast<std::size_t>(sinogram.values.size()) != g.measurements())
    throw InvalidInput("filtered_back_projection: sinogram size does not match its geometry");
  const int nd = g.n_detectors;
  const double tau = g.detector_spacing;

  // Discrete ramp (Ram-Lak) kernel sampled at the detector spacing.
  std::vector<double> kernel(static_cast<std::size_t>(2 * nd - 1));
  for (int k = -(nd - 1); k <= nd - 1; ++k) {
    double h = 0.0;
    if (k == 0) {
      h = 1.0 / (4.0 * tau * tau);
    } else if (k % 2 != 0) {
      h = -1.0 / (std::numbers::pi * std::numbers::pi * k * k * tau * tau);
    }
    kernel[static_cast<std::size_t>(k + nd - 1)] = h;
  }

  Eigen::MatrixXd filtered(nd, g.n_angles);
  for (int v = 0; v < g.n_angles; ++v) {
    for (int d = 0; d < nd; ++d) {
      double acc = 0.0;
      for (int m = 0; m < nd; ++m) acc += sinogram.values[v * nd + m] * kernel[static_cast<std::size_t>(d - m + nd - 1)];
      filtered(d, v) = tau * acc;
    }
  }

  const int n = g.n_pixels;
  const double half = 0.5 * n * g.pixel_size;
  Image out(n, n, 0.0, g.pixel_size);
  for (int v = 0; v < g.n_angles; ++v) {
    const double c = std::cos(g.angle(v)), s = std::sin(g.angle(v));
    for (int r = 0; r < n; ++r) {
      const double y = half - (r + 0.5) * g.pixel_size;
      for (int col = 0; col < n; ++col) {
        const double x = -half + (col + 0.5) * g.pixel_size;
        const double u = (x * c + y * s) / tau + 0.5 * (nd - 1);
        const int i0 = static_cast<int>(std::floor(u));
        const double frac = u - i0;
        double val = 0.0;
        if (i0 >= 0 && i0 < nd) val += (1.0 - frac) * filtered(i0, v);
        if (i0 + 1 >= 0 && i0 + 1 < nd) val += frac * filtered(i0 + 1, v);
        out(r, col) += val;
      }
    }
  }
  const double scale = std::numbers::pi / g.n_angles;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * scale + kAirHu;
  return out;
}

}  // namespace gmmrf
