#include "gmmrf/patch.hpp"

#include <string>

namespace gmmrf {

PatchGeometry::PatchGeometry(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw InvalidInput("PatchGeometry: no dimensions");
  size_ = 1;
  for (int d : dims_) {
    if (d < 1 || d % 2 == 0) throw InvalidInput("PatchGeometry: side lengths must be odd and >= 1, got " + std::to_string(d));
    size_ *= d;
  }
  // Row-major flattening of the per-axis centers.
  center_offset_ = 0;
  for (int d : dims_) center_offset_ = center_offset_ * d + d / 2;
}

int PatchGeometry::rows() const {
  if (dims_.size() != 2) throw ContractViolation("PatchGeometry: image operations need 2-D patches");
  return dims_[0];
}

int PatchGeometry::cols() const {
  if (dims_.size() != 2) throw ContractViolation("PatchGeometry: image operations need 2-D patches");
  return dims_[1];
}

InteriorRange interior_centers(const Image& image, const PatchGeometry& geometry) {
  const int hr = geometry.half_rows();
  const int hc = geometry.half_cols();
  return {hr, image.rows() - hr, hc, image.cols() - hc};
}

void extract_patch(const Image& image, const PatchGeometry& geometry, int row, int col, Eigen::Ref<Eigen::VectorXd> out) {
  const int pr = geometry.rows();
  const int pc = geometry.cols();
  const int r0 = row - pr / 2;
  const int c0 = col - pc / 2;
  Eigen::Index i = 0;
  for (int dr = 0; dr < pr; ++dr) {
    const double* src = image.data().data() + image.index(r0 + dr, c0);
    for (int dc = 0; dc < pc; ++dc) out[i++] = src[dc];
  }
}

}  // namespace gmmrf
