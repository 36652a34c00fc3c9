#include "gmmrf/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gmmrf/errors.hpp"

namespace gmmrf {

namespace {

bool inside(const Ellipse& e, double x, double y) {
  const double t = e.theta_deg * std::numbers::pi / 180.0;
  const double dx = x - e.x0, dy = y - e.y0;
  const double u = dx * std::cos(t) + dy * std::sin(t);
  const double v = -dx * std::sin(t) + dy * std::cos(t);
  return (u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0;
}

double normalized_x(int col, int n) { return -1.0 + (col + 0.5) * 2.0 / n; }
double normalized_y(int row, int n) { return 1.0 - (row + 0.5) * 2.0 / n; }

int scaled(int v, int n) { return static_cast<int>(std::lround(static_cast<double>(v) * n / 128.0)); }

}  // namespace

const std::vector<Ellipse>& shepp_logan_ellipses() {
  static const std::vector<Ellipse> table = {
      {0.0, 0.0, 0.69, 0.92, 0.0, 2.0},          {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98},
      {0.22, 0.0, 0.11, 0.31, -18.0, -0.02},     {-0.22, 0.0, 0.16, 0.41, 18.0, -0.02},
      {0.0, 0.35, 0.21, 0.25, 0.0, 0.01},        {0.0, 0.1, 0.046, 0.046, 0.0, 0.01},
      {0.0, -0.1, 0.046, 0.046, 0.0, 0.01},      {-0.08, -0.605, 0.046, 0.023, 0.0, 0.01},
      {0.0, -0.606, 0.023, 0.023, 0.0, 0.01},    {0.06, -0.605, 0.023, 0.046, 0.0, 0.01},
  };
  return table;
}

Image rasterize_ellipses(const std::vector<Ellipse>& ellipses, int n, double pixel_size) {
  if (n < 1) throw InvalidInput("rasterize_ellipses: n must be positive");
  Image out(n, n, 0.0, pixel_size);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double v = 0.0;
      for (const auto& e : ellipses)
        if (inside(e, normalized_x(c, n), normalized_y(r, n))) v += e.value;
      out(r, c) = 1000.0 * (v - 1.0);
    }
  }
  return out;
}

Image shepp_logan(int n, double pixel_size) {
  if (n < 16) throw InvalidInput("shepp_logan: n must be at least 16");
  return rasterize_ellipses(shepp_logan_ellipses(), n, pixel_size);
}

Image gepp_analog(int n, double pixel_size, const GeppLayout& layout, GeppFeatures* features) {
  if (n < 128) throw InvalidInput("gepp_analog: n must be at least 128");
  if (layout.bar_periods.empty()) throw InvalidInput("gepp_analog: at least one bar period is required");
  Image out(n, n, -1000.0, pixel_size);
  const double centre = 0.5 * (n - 1);
  const double radius = layout.disc_radius * n / 128.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (std::hypot(r - centre, c - centre) <= radius) out(r, c) = 0.0;

  const int block_r0 = scaled(layout.block_row_begin, n), block_r1 = scaled(layout.block_row_end, n);
  const int block_c0 = scaled(layout.block_col_begin, n), block_c1 = scaled(layout.block_col_end, n);
  for (int r = block_r0; r < block_r1; ++r)
    for (int c = block_c0; c < block_c1; ++c) out(r, c) = kPlexiglasHu;

  GeppFeatures f;
  f.bar_row_begin = scaled(layout.bar_row_begin, n);
  f.bar_row_end = scaled(layout.bar_row_end, n);
  const int gap = std::max(2, scaled(4, n));
  int col = block_c0 + gap;
  for (int period128 : layout.bar_periods) {
    const int period = std::max(2, scaled(period128, n));
    const int width = 3 * period;
    if (col + width > block_c1 - gap) throw InvalidInput("gepp_analog: bar groups do not fit in the plexiglas block");
    for (int r = f.bar_row_begin; r < f.bar_row_end; ++r)
      for (int c = col; c < col + width; ++c)
        if ((c - col) % period < period / 2) out(r, c) = 0.0;
    f.bar_periods.push_back(period);
    f.bar_col_begin.push_back(col);
    f.bar_col_end.push_back(col + width);
    col += width + gap;
  }

  f.wire_row = scaled(layout.wire_row, n);
  f.wire_col = scaled(layout.wire_col, n);
  f.flat_row = scaled(layout.flat_row, n);
  f.flat_col = scaled(layout.flat_col, n);
  f.flat_radius = scaled(layout.flat_radius, n);
  out(f.wire_row, f.wire_col) = kWireHu;
  if (features) *features = f;
  return out;
}

Image multi_tissue_phantom(int n, std::uint64_t seed, double pixel_size) {
  if (n < 16) throw InvalidInput("multi_tissue_phantom: n must be at least 16");
  static constexpr double kTissues[] = {-100.0, 0.0, 60.0, 150.0, 400.0};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(-0.7, 0.7);
  std::uniform_real_distribution<double> axis(0.08, 0.3);
  std::uniform_real_distribution<double> angle(0.0, 180.0);
  std::uniform_int_distribution<int> tissue(0, 4);
  std::uniform_int_distribution<int> count(8, 14);

  std::vector<Ellipse> shapes;
  const int m = count(rng);
  for (int i = 0; i < m; ++i) {
    Ellipse e{};
    e.x0 = centre(rng);
    e.y0 = centre(rng);
    e.a = axis(rng);
    e.b = axis(rng);
    e.theta_deg = angle(rng);
    e.value = kTissues[tissue(rng)];
    shapes.push_back(e);
  }

  Image out(n, n, 40.0, pixel_size);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (const auto& e : shapes)
        if (inside(e, normalized_x(c, n), normalized_y(r, n))) out(r, c) = e.value;  // later shapes occlude earlier ones
    }
  }
  return out;
}

}  // namespace gmmrf
