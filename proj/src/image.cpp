#include "gmmrf/image.hpp"

#include <cmath>

namespace gmmrf {

Image::Image(int rows, int cols, double fill, double pixel_size) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw InvalidInput("Image: negative dimensions");
  set_pixel_size(pixel_size);
  data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

void Image::set_pixel_size(double mm) {
  if (!(mm > 0.0) || !std::isfinite(mm)) throw InvalidInput("Image: pixel size must be positive");
  pixel_size_ = mm;
}

Image Image::from_vector(int rows, int cols, const Eigen::VectorXd& v, double pixel_size) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols) throw InvalidInput("Image: vector length does not match shape");
  Image img(rows, cols, 0.0, pixel_size);
  for (Eigen::Index i = 0; i < v.size(); ++i) img.data_[static_cast<std::size_t>(i)] = v[i];
  return img;
}

}  // namespace gmmrf
