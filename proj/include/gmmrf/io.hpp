#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmmrf/image.hpp"
#include "gmmrf/model.hpp"
#include "gmmrf/projector.hpp"

namespace gmmrf {

// All binary formats are little-endian. Integers are unsigned 32-bit unless
// stated; reals are IEEE-754 binary64 unless stated.
//
// Model (.gmrf):
//   "GMRF", version, n_dims, n_dims x int32 patch dims, L, K,
//   sigma_x, p, alpha,
//   K x { weight, L x mean, L*L x covariance (row-major, unscaled) }
//
// Image (.gmim):
//   "GMIM", version, width, height, depth (= 1), pixel_size, hu_offset,
//   width*height x float32 samples, row-major; HU = sample - hu_offset
//
// Sinogram (.gmsn):
//   "GMSN", version, n_pixels, n_angles, n_detectors, pixel_size,
//   detector_spacing, mu_water, M (uint64),
//   M x value (HU*mm), M x weight

inline constexpr std::uint32_t kFormatVersion = 1;

void write_model(const std::filesystem::path& path, const GmMrfModel& model);
GmMrfModel read_model(const std::filesystem::path& path);

void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);

void write_sinogram(const std::filesystem::path& path, const Sinogram& sinogram, const StatWeights& weights);
std::pair<Sinogram, StatWeights> read_sinogram(const std::filesystem::path& path);

/// One value per line, shortest round-trip decimal form.
void write_trace(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_trace(const std::filesystem::path& path);

/// 64-bit FNV-1a of a byte string and of a file's contents.
std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace gmmrf
