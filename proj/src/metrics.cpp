#include "gmmrf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "gmmrf/errors.hpp"
#include "gmmrf/numeric.hpp"

namespace gmmrf {

void Roi::validate(const Image& image) const {
  if (!(radius >= 0.0) || !std::isfinite(row) || !std::isfinite(col)) throw InvalidInput("Roi: invalid center or radius");
  if (row - radius < -0.5 || col - radius < -0.5 || row + radius > image.rows() - 0.5 || col + radius > image.cols() - 0.5)
    throw InvalidInput("Roi: disc extends outside the image");
}

bool Roi::contains(int r, int c) const {
  const double dr = r - row, dc = c - col;
  return dr * dr + dc * dc <= radius * radius;
}

double rmse(const Image& a, const Image& b, const std::optional<Roi>& roi) {
  if (!a.same_shape(b)) throw InvalidInput("rmse: images differ in shape");
  if (roi) roi->validate(a);
  std::vector<double> sq;
  sq.reserve(a.size());
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) {
      if (roi && !roi->contains(r, c)) continue;
      const double d = a(r, c) - b(r, c);
      sq.push_back(d * d);
    }
  }
  if (sq.empty()) throw InvalidInput("rmse: empty region");
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size()));
}

RoiStats roi_stats(const Image& image, const Roi& roi) {
  roi.validate(image);
  std::vector<double> values;
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c)
      if (roi.contains(r, c)) values.push_back(image(r, c));
  if (values.empty()) throw InvalidInput("roi_stats: empty region");
  RoiStats out;
  out.count = static_cast<long>(values.size());
  out.mean = pairwise_sum(values) / static_cast<double>(values.size());
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - out.mean) * (values[i] - out.mean);
  out.std = std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size()));
  return out;
}

MtfCurve mtf_from_wire(const Image& image, int wire_row, int wire_col, double pixel_size) {
  if (!(pixel_size > 0.0)) throw InvalidInput("mtf_from_wire: pixel_size must be positive");
  const int w = kMtfWindow, half = w / 2;
  const int r0 = wire_row - half, c0 = wire_col - half;
  if (r0 < 0 || c0 < 0 || r0 + w > image.rows() || c0 + w > image.cols())
    throw InvalidInput("mtf_from_wire: window around the wire leaves the image");

  std::vector<double> window(static_cast<std::size_t>(w * w));
  double peak = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < w; ++r) {
    for (int c = 0; c < w; ++c) {
      const double v = image(r0 + r, c0 + c);
      window[static_cast<std::size_t>(r * w + c)] = v;
      if (!(r == half && c == half)) peak = std::max(peak, v);
    }
  }
  if (!(image(wire_row, wire_col) > peak)) throw InvalidInput("mtf_from_wire: wire is not the window maximum");

  std::vector<double> border;
  for (int i = 0; i < w; ++i) {
    border.push_back(window[static_cast<std::size_t>(i)]);
    border.push_back(window[static_cast<std::size_t>((w - 1) * w + i)]);
    if (i > 0 && i < w - 1) {
      border.push_back(window[static_cast<std::size_t>(i * w)]);
      border.push_back(window[static_cast<std::size_t>(i * w + w - 1)]);
    }
  }
  std::sort(border.begin(), border.end());
  const std::size_t m = border.size();
  const double background = m % 2 == 1 ? border[m / 2] : 0.5 * (border[m / 2 - 1] + border[m / 2]);
  for (double& v : window) v -= background;

  // Separable DFT: rows, then columns.
  using cd = std::complex<double>;
  std::vector<cd> twiddle(static_cast<std::size_t>(w));
  for (int k = 0; k < w; ++k) twiddle[static_cast<std::size_t>(k)] = std::polar(1.0, -2.0 * std::numbers::pi * k / w);
  std::vector<cd> rows_ft(static_cast<std::size_t>(w * w)), spectrum(static_cast<std::size_t>(w * w));
  for (int r = 0; r < w; ++r)
    for (int v = 0; v < w; ++v) {
      cd acc = 0.0;
      for (int c = 0; c < w; ++c) acc += window[static_cast<std::size_t>(r * w + c)] * twiddle[static_cast<std::size_t>((v * c) % w)];
      rows_ft[static_cast<std::size_t>(r * w + v)] = acc;
    }
  for (int u = 0; u < w; ++u)
    for (int v = 0; v < w; ++v) {
      cd acc = 0.0;
      for (int r = 0; r < w; ++r) acc += rows_ft[static_cast<std::size_t>(r * w + v)] * twiddle[static_cast<std::size_t>((u * r) % w)];
      spectrum[static_cast<std::size_t>(u * w + v)] = acc;
    }
  const double dc = std::abs(spectrum[0]);
  if (!(dc > 0.0) || !std::isfinite(dc)) throw NumericalError("mtf_from_wire: background-subtracted wire has no DC response");

  std::vector<double> sum_mod(static_cast<std::size_t>(half + 1), 0.0), sum_rad(sum_mod.size(), 0.0);
  std::vector<int> count(sum_mod.size(), 0);
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < w; ++v) {
      const int fu = u <= half ? u : u - w, fv = v <= half ? v : v - w;
      const double rho = std::hypot(fu, fv);
      if (rho > half) continue;
      const auto b = static_cast<std::size_t>(std::lround(rho));
      sum_mod[b] += std::abs(spectrum[static_cast<std::size_t>(u * w + v)]) / dc;
      sum_rad[b] += rho;
      ++count[b];
    }
  }
  MtfCurve curve;
  curve.nyquist = 0.5 / pixel_size;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    curve.frequencies.push_back(sum_rad[b] / count[b] / (w * pixel_size));
    curve.modulation.push_back(b == 0 ? 1.0 : sum_mod[b] / count[b]);
  }
  return curve;
}

double mtf10(const MtfCurve& curve) {
  if (curve.frequencies.size() != curve.modulation.size() || curve.frequencies.empty())
    throw InvalidInput("mtf10: malformed curve");
  for (std::size_t i = 1; i < curve.modulation.size(); ++i) {
    if (curve.modulation[i] < 0.1) {
      const double m0 = curve.modulation[i - 1], m1 = curve.modulation[i];
      const double f0 = curve.frequencies[i - 1], f1 = curve.frequencies[i];
      return f0 + (0.1 - m0) / (m1 - m0) * (f1 - f0);
    }
  }
  return curve.nyquist;
}

}  // namespace gmmrf
