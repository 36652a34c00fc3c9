#pragma once

#include <vector>

#include <Eigen/Core>

#include "gmmrf/image.hpp"

namespace gmmrf {

/// Shape of a patch. Dimensions are odd side lengths in row-major order;
/// image operations use the two-dimensional form {rows, cols}.
class PatchGeometry {
 public:
  explicit PatchGeometry(std::vector<int> dims);
  static PatchGeometry square(int side) { return PatchGeometry({side, side}); }

  const std::vector<int>& dims() const { return dims_; }
  int size() const { return size_; }  // L
  int center_offset() const { return center_offset_; }

  int rows() const;  // 2-D accessors; throw unless dims().size() == 2
  int cols() const;
  int half_rows() const { return rows() / 2; }
  int half_cols() const { return cols() / 2; }

  bool operator==(const PatchGeometry&) const = default;

 private:
  std::vector<int> dims_;
  int size_ = 1;
  int center_offset_ = 0;
};

/// Pixel centers whose full patch lies inside the image.
struct InteriorRange {
  int row_begin, row_end;  // [begin, end)
  int col_begin, col_end;
  int count() const { return (row_end - row_begin) * (col_end - col_begin); }
  bool empty() const { return row_end <= row_begin || col_end <= col_begin; }
};

InteriorRange interior_centers(const Image& image, const PatchGeometry& geometry);

/// Copies P_s x for the patch centered at (row, col) into `out` (length L).
void extract_patch(const Image& image, const PatchGeometry& geometry, int row, int col, Eigen::Ref<Eigen::VectorXd> out);

}  // namespace gmmrf
