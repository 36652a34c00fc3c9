#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "gmmrf/errors.hpp"
#include "gmmrf/io.hpp"
#include "test_support.hpp"

using namespace gmmrf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("gmmrf_io_" + std::to_string(::getpid()))) { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace

TEST_CASE("model files round-trip exactly") {
  TempDir dir;
  std::mt19937_64 rng(1);
  const GmMrfModel model(gmmrf::testing::random_mixture(rng, 4, 9, 50.0, 300.0, PatchGeometry::square(3)), 0.8, 0.5, 33.0);
  write_model(dir / "m.gmrf", model);
  const GmMrfModel back = read_model(dir / "m.gmrf");
  CHECK(back.geometry() == model.geometry());
  CHECK(back.sigma_x() == 0.8);
  CHECK(back.p() == 0.5);
  CHECK(back.alpha() == 33.0);
  REQUIRE(back.mixture().size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(back.mixture()[k].weight() == model.mixture()[k].weight());
    CHECK(back.mixture()[k].mean() == model.mixture()[k].mean());
    CHECK(back.mixture()[k].covariance() == model.mixture()[k].covariance());
    CHECK(back.scaled_mixture()[k].covariance() == model.scaled_mixture()[k].covariance());
  }

  const std::string bytes = slurp(dir / "m.gmrf");
  CHECK(bytes.substr(0, 4) == "GMRF");
  CHECK(bytes[4] == 1);
  CHECK(bytes.size() == 4 + 4 + 4 + 8 + 4 + 4 + 24 + 4 * (1 + 9 + 81) * 8);
  write_model(dir / "m2.gmrf", back);
  CHECK(slurp(dir / "m2.gmrf") == bytes);

  spit(dir / "short.gmrf", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(read_model(dir / "short.gmrf"), IoError);
  spit(dir / "bad.gmrf", "XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(read_model(dir / "bad.gmrf"), IoError);
  CHECK_THROWS_AS(read_model(dir / "absent.gmrf"), IoError);

  // A non-positive-definite covariance in the file is reported as bad contents.
  std::string broken = bytes;
  const std::size_t first_cov = 4 + 4 + 4 + 8 + 4 + 4 + 24 + 8 + 9 * 8;
  const double negative = -5.0;
  std::memcpy(&broken[first_cov], &negative, 8);
  spit(dir / "neg.gmrf", broken);
  CHECK_THROWS_AS(read_model(dir / "neg.gmrf"), IoError);
}

TEST_CASE("image files store float32 samples") {
  TempDir dir;
  Image img(3, 5, 0.0, 0.75);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = -1000.0 + 137.25 * static_cast<double>(i);
  img[7] = 0.1;
  write_image(dir / "a.gmim", img);
  const Image back = read_image(dir / "a.gmim");
  CHECK(back.rows() == 3);
  CHECK(back.cols() == 5);
  CHECK(back.pixel_size() == 0.75);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(img[i])));

  const std::string bytes = slurp(dir / "a.gmim");
  CHECK(bytes.size() == 4 + 4 * 4 + 16 + 15 * 4);
  CHECK(bytes.substr(0, 4) == "GMIM");
  CHECK(static_cast<unsigned char>(bytes[8]) == 5);   // width
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);  // height
  spit(dir / "b.gmim", bytes + "x");
  CHECK_THROWS_AS(read_image(dir / "b.gmim"), IoError);
  std::string three_d = bytes;
  three_d[16] = 2;
  spit(dir / "c.gmim", three_d);
  CHECK_THROWS_AS(read_image(dir / "c.gmim"), IoError);
}

TEST_CASE("sinogram files round-trip exactly") {
  TempDir dir;
  const ScanGeometry g{8, 1.0, 6, ScanGeometry::detectors_for(8, 1.0, 1.0), 1.0};
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(100.0, 30.0);
  Sinogram s{g, Eigen::VectorXd(static_cast<Eigen::Index>(g.measurements()))};
  StatWeights w{Eigen::VectorXd(s.values.size())};
  for (Eigen::Index i = 0; i < s.values.size(); ++i) {
    s.values[i] = normal(rng);
    w.diag[i] = std::abs(normal(rng)) * 1e-6;
  }
  write_sinogram(dir / "s.gmsn", s, w);
  const auto [s2, w2] = read_sinogram(dir / "s.gmsn");
  CHECK(s2.geometry == g);
  CHECK(s2.values == s.values);
  CHECK(w2.diag == w.diag);
  CHECK_THROWS_AS(write_sinogram(dir / "x.gmsn", s, StatWeights{Eigen::VectorXd::Zero(3)}), InvalidInput);

  std::string bytes = slurp(dir / "s.gmsn");
  spit(dir / "t.gmsn", bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_sinogram(dir / "t.gmsn"), IoError);
}

TEST_CASE("trace files round-trip exactly") {
  TempDir dir;
  const std::vector<double> values = {1.0, 0.1, 123456.789012345678, -3.5e-12, 2.0 / 3.0};
  write_trace(dir / "t.txt", values);
  CHECK(read_trace(dir / "t.txt") == values);
  CHECK(slurp(dir / "t.txt").substr(0, 6) == "1\n0.1\n");
  spit(dir / "bad.txt", "1.0\nabc\n");
  CHECK_THROWS_AS(read_trace(dir / "bad.txt"), IoError);
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}
