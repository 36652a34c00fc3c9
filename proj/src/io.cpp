#include "gmmrf/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gmmrf/errors.hpp"

namespace gmmrf {

namespace {

class Writer {
 public:
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  void u32(std::uint32_t v) { little(v); }
  void i32(std::int32_t v) { little(std::bit_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) { little(v); }
  void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { little(std::bit_cast<std::uint32_t>(v)); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("failed writing " + path.string());
  }

 private:
  template <typename U>
  void little(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path_);
    std::ostringstream ss;
    ss << in.rdbuf();
    buf_ = ss.str();
  }

  void magic(const char (&m)[5]) {
    need(4);
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0) throw IoError(path_ + ": not a " + std::string(m, 4) + " file");
    pos_ += 4;
  }
  void version() {
    if (u32() != kFormatVersion) throw IoError(path_ + ": unsupported format version");
  }
  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::int32_t i32() { return std::bit_cast<std::int32_t>(little<std::uint32_t>()); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(little<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(little<std::uint32_t>()); }

  void expect_payload(std::uint64_t bytes) const {
    if (buf_.size() - pos_ != bytes) throw IoError(path_ + ": header does not match payload length");
  }
  void finish() const {
    if (pos_ != buf_.size()) throw IoError(path_ + ": trailing bytes");
  }
  const std::string& path() const { return path_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw IoError(path_ + ": truncated file");
  }
  template <typename U>
  U little() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string path_;
  std::string buf_;
  std::size_t pos_ = 0;
};

template <typename F>
auto translate(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(path + ": invalid contents (" + e.what() + ")");
  }
}

}  // namespace

void write_model(const std::filesystem::path& path, const GmMrfModel& model) {
  const GaussianMixture& mix = model.mixture();
  const auto& dims = model.geometry().dims();
  Writer w;
  w.magic("GMRF");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) w.i32(d);
  w.u32(static_cast<std::uint32_t>(mix.dim()));
  w.u32(static_cast<std::uint32_t>(mix.size()));
  w.f64(model.sigma_x());
  w.f64(model.p());
  w.f64(model.alpha());
  for (const auto& c : mix.components()) {
    w.f64(c.weight());
    for (Eigen::Index i = 0; i < c.mean().size(); ++i) w.f64(c.mean()[i]);
    for (Eigen::Index r = 0; r < c.covariance().rows(); ++r)
      for (Eigen::Index col = 0; col < c.covariance().cols(); ++col) w.f64(c.covariance()(r, col));
  }
  w.save(path);
}

GmMrfModel read_model(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("GMRF");
  r.version();
  const std::uint32_t n_dims = r.u32();
  if (n_dims == 0 || n_dims > 8) throw IoError(r.path() + ": bad patch dimensionality");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < n_dims; ++i) dims.push_back(r.i32());
  const std::uint32_t L = r.u32();
  const std::uint32_t K = r.u32();
  if (L == 0 || K == 0 || L > 4096) throw IoError(r.path() + ": bad component shape");
  const double sigma_x = r.f64(), p = r.f64(), alpha = r.f64();
  r.expect_payload(static_cast<std::uint64_t>(K) * (1 + L + static_cast<std::uint64_t>(L) * L) * 8);
  std::vector<GaussianComponent> comps;
  return translate(r.path(), [&] {
    for (std::uint32_t k = 0; k < K; ++k) {
      const double weight = r.f64();
      Eigen::VectorXd mean(L);
      for (std::uint32_t i = 0; i < L; ++i) mean[i] = r.f64();
      Eigen::MatrixXd cov(L, L);
      for (std::uint32_t i = 0; i < L; ++i)
        for (std::uint32_t j = 0; j < L; ++j) cov(i, j) = r.f64();
      comps.emplace_back(weight, std::move(mean), std::move(cov));
    }
    r.finish();
    return GmMrfModel(GaussianMixture(std::move(comps), PatchGeometry(dims)), sigma_x, p, alpha);
  });
}

void write_image(const std::filesystem::path& path, const Image& image) {
  Writer w;
  w.magic("GMIM");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(image.cols()));
  w.u32(static_cast<std::uint32_t>(image.rows()));
  w.u32(1);
  w.f64(image.pixel_size());
  w.f64(0.0);
  for (double v : image.data()) w.f32(static_cast<float>(v));
  w.save(path);
}

Image read_image(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("GMIM");
  r.version();
  const std::uint32_t width = r.u32(), height = r.u32(), depth = r.u32();
  if (depth != 1) throw IoError(r.path() + ": only 2-D images are supported");
  if (width == 0 || height == 0 || width > 65536 || height > 65536) throw IoError(r.path() + ": bad image dimensions");
  const double pixel_size = r.f64(), offset = r.f64();
  r.expect_payload(static_cast<std::uint64_t>(width) * height * 4);
  return translate(r.path(), [&] {
    Image img(static_cast<int>(height), static_cast<int>(width), 0.0, pixel_size);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(r.f32()) - offset;
    if (!img.vec().allFinite()) throw IoError(r.path() + ": non-finite samples");
    return img;
  });
}

void write_sinogram(const std::filesystem::path& path, const Sinogram& sinogram, const StatWeights& weights) {
  const ScanGeometry& g = sinogram.geometry;
  if (static_cast<std::size_t>(sinogram.values.size()) != g.measurements() || weights.diag.size() != sinogram.values.size())
    throw InvalidInput("write_sinogram: sizes do not match the geometry");
  Writer w;
  w.magic("GMSN");
  w.u32(kFormatVersion);
  w.i32(g.n_pixels);
  w.i32(g.n_angles);
  w.i32(g.n_detectors);
  w.f64(g.pixel_size);
  w.f64(g.detector_spacing);
  w.f64(g.mu_water);
  w.u64(static_cast<std::uint64_t>(sinogram.values.size()));
  for (Eigen::Index i = 0; i < sinogram.values.size(); ++i) w.f64(sinogram.values[i]);
  for (Eigen::Index i = 0; i < weights.diag.size(); ++i) w.f64(weights.diag[i]);
  w.save(path);
}

std::pair<Sinogram, StatWeights> read_sinogram(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("GMSN");
  r.version();
  ScanGeometry g;
  g.n_pixels = r.i32();
  g.n_angles = r.i32();
  g.n_detectors = r.i32();
  g.pixel_size = r.f64();
  g.detector_spacing = r.f64();
  g.mu_water = r.f64();
  const std::uint64_t m = r.u64();
  translate(r.path(), [&] {
    g.validate();
    return 0;
  });
  if (m != g.measurements()) throw IoError(r.path() + ": measurement count does not match the geometry");
  r.expect_payload(m * 16);
  Sinogram s{g, Eigen::VectorXd(static_cast<Eigen::Index>(m))};
  StatWeights w{Eigen::VectorXd(static_cast<Eigen::Index>(m))};
  for (std::uint64_t i = 0; i < m; ++i) s.values[static_cast<Eigen::Index>(i)] = r.f64();
  for (std::uint64_t i = 0; i < m; ++i) w.diag[static_cast<Eigen::Index>(i)] = r.f64();
  if (!s.values.allFinite() || !w.diag.allFinite() || (w.diag.array() < 0.0).any())
    throw IoError(r.path() + ": invalid measurement or weight values");
  return {std::move(s), std::move(w)};
}

void write_trace(const std::filesystem::path& path, const std::vector<double>& values) {
  std::string text;
  std::array<char, 64> buf{};
  for (double v : values) {
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    text.append(buf.data(), res.ptr);
    text.push_back('\n');
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double v = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size()) throw IoError(path.string() + ": malformed trace line");
    values.push_back(v);
  }
  return values;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

}  // namespace gmmrf
