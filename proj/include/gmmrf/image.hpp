#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gmmrf/errors.hpp"

namespace gmmrf {

/// 2-D image in Hounsfield units, row-major, row 0 at the top.
class Image {
 public:
  Image() = default;
  Image(int rows, int cols, double fill = 0.0, double pixel_size = 1.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  double pixel_size() const { return pixel_size_; }
  void set_pixel_size(double mm);

  double& operator()(int r, int c) { return data_[index(r, c)]; }
  double operator()(int r, int c) const { return data_[index(r, c)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Eigen::Map<Eigen::VectorXd> vec() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  bool same_shape(const Image& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  static Image from_vector(int rows, int cols, const Eigen::VectorXd& v, double pixel_size = 1.0);

 private:
  int rows_ = 0;
  int cols_ = 0;
  double pixel_size_ = 1.0;
  std::vector<double> data_;
};

}  // namespace gmmrf
