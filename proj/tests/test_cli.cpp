#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "gmmrf/cli.hpp"
#include "gmmrf/io.hpp"
#include "gmmrf/metrics.hpp"
#include "gmmrf/phantoms.hpp"

using namespace gmmrf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("gmmrf_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Outcome {
  int code;
  std::string out, err;
};

Outcome gmmrf_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gmmrf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

double report_value(const std::string& report, const std::string& key) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ": ", 0) == 0) return std::stod(line.substr(key.size() + 2));
  FAIL("missing key " << key);
  return 0.0;
}

/// Blocks of six tissue classes, each with texture that places its patches in
/// the matching training group.
Image six_tissue_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double means[] = {-1000.0, -500.0, 40.0, 0.0, 0.0, 700.0};
  const double sds[] = {5.0, 30.0, 5.0, 50.0, 130.0, 40.0};
  Image img(48, 72);
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 72; ++c) {
      const int block = (r / 24) * 3 + c / 24;
      img(r, c) = means[block] + sds[block] * unit(rng);
    }
  return img;
}

}  // namespace

TEST_CASE("argument and config errors exit with code 2") {
  TempDir dir("args");
  CHECK(gmmrf_cli({}).code == cli::kExitConfig);
  CHECK(gmmrf_cli({"frobnicate"}).code == cli::kExitConfig);
  CHECK(gmmrf_cli({"eval", "--help"}).code == cli::kExitOk);
  const Outcome unknown = gmmrf_cli({"eval", "--set", "imgae=x.gmim"});
  CHECK(unknown.code == cli::kExitConfig);
  CHECK(unknown.err.find("unknown key 'imgae'") != std::string::npos);
  CHECK(gmmrf_cli({"eval"}).code == cli::kExitConfig);  // missing required image
  CHECK(gmmrf_cli({"eval", "--set", "image=" + dir / "absent.gmim"}).code == cli::kExitConfig);
  spit(dir / "bad.json", "{ not json");
  CHECK(gmmrf_cli({"eval", "--config", dir / "bad.json"}).code == cli::kExitConfig);
  spit(dir / "nested.json", R"({"em": {"seeed": 1}})");
  CHECK(gmmrf_cli({"train", "--config", dir / "nested.json"}).code == cli::kExitConfig);
  CHECK(gmmrf_cli({"phantom", "--set", "type=cube", "--set", "output=" + dir / "p.gmim"}).code == cli::kExitConfig);
}

TEST_CASE("phantom, simulate, FBP and MAP round trip") {
  TempDir dir("roundtrip");
  REQUIRE(gmmrf_cli({"phantom", "--set", "size=64", "--set", "output=" + dir / "sl.gmim"}).code == 0);
  REQUIRE(gmmrf_cli({"simulate", "--set", "phantom=" + dir / "sl.gmim", "--set", "output=" + dir / "sl.gmsn", "--set",
                     "noiseless=true"})
              .code == 0);
  spit(dir / "train.json", R"({"images": ["sl.gmim"], "output": "k1.gmrf",
      "groups": [{"index": 1, "samples": 100000, "components": 1, "weight": 1.0}]})");
  REQUIRE(gmmrf_cli({"train", "--config", dir / "train.json"}).code == 0);
  CHECK(read_model(dir / "k1.gmrf").mixture().size() == 1);

  // Near-zero prior weight: the reconstruction must reproduce the phantom.
  const Outcome rec = gmmrf_cli({"reconstruct", "--set", "sinogram=" + dir / "sl.gmsn", "--set", "model=" + dir / "k1.gmrf",
                                 "--set", "output=" + dir / "map.gmim", "--set", "sigma_x=1000", "--set", "init=fbp",
                                 "--set", "outer_iters=150", "--set", "tolerance=0"});
  REQUIRE(rec.code == 0);
  const Outcome ev = gmmrf_cli({"eval", "--set", "image=" + dir / "map.gmim", "--set", "reference=" + dir / "sl.gmim"});
  REQUIRE(ev.code == 0);
  CHECK(report_value(ev.out, "rmse") < 2.0);

  const std::vector<double> trace = read_trace(dir / "map.gmim.trace.txt");
  CHECK(trace.size() == 151);
  for (std::size_t t = 1; t < trace.size(); ++t) CHECK(trace[t] <= trace[t - 1] + 1e-8 * std::abs(trace[t - 1]));
  CHECK(fs::exists(dir / "map.gmim.manifest.json"));

  const Outcome same = gmmrf_cli({"eval", "--set", "image=" + dir / "sl.gmim", "--set", "reference=" + dir / "sl.gmim",
                                  "--set", "roi=[32, 32, 10]", "--set", "output=" + dir / "report.txt"});
  REQUIRE(same.code == 0);
  CHECK(report_value(same.out, "rmse") == 0.0);
  CHECK(report_value(slurp(dir / "report.txt"), "roi_std") == doctest::Approx(report_value(same.out, "roi_std")));

  REQUIRE(gmmrf_cli({"reconstruct", "--set", "sinogram=" + dir / "sl.gmsn", "--set", "method=fbp", "--set",
                     "output=" + dir / "fbp.gmim"})
              .code == 0);
  CHECK(read_image(dir / "fbp.gmim").rows() == 64);
}

TEST_CASE("train with the six tissue groups gives 66 components, reproducibly") {
  TempDir dir("train");
  write_image(dir / "a.gmim", six_tissue_image(1));
  write_image(dir / "b.gmim", six_tissue_image(2));
  spit(dir / "train.json", R"({"images": ["a.gmim", "b.gmim"], "output": "m.gmrf", "em": {"max_iters": 30, "seed": 4}})");
  const Outcome first = gmmrf_cli({"train", "--config", dir / "train.json"});
  REQUIRE(first.code == 0);
  CHECK(first.out.find("components: 66") != std::string::npos);
  CHECK(first.out.find("group 6:") != std::string::npos);
  CHECK(read_model(dir / "m.gmrf").mixture().size() == 66);
  const std::string model_bytes = slurp(dir / "m.gmrf");
  const std::string manifest = slurp(dir / "m.gmrf.manifest.json");
  REQUIRE(gmmrf_cli({"train", "--config", dir / "train.json"}).code == 0);
  CHECK(slurp(dir / "m.gmrf") == model_bytes);
  CHECK(slurp(dir / "m.gmrf.manifest.json") == manifest);

  SUBCASE("scale-model") {
    REQUIRE(gmmrf_cli({"scale-model", "--set", "input=" + dir / "m.gmrf", "--set", "output=" + dir / "s.gmrf", "--set",
                       "p=0.5", "--set", "alpha=33"})
                .code == 0);
    const GmMrfModel original = read_model(dir / "m.gmrf");
    const GmMrfModel scaled = read_model(dir / "s.gmrf");
    CHECK(scaled.p() == 0.5);
    for (std::size_t k = 0; k < 66; ++k) CHECK(scaled.mixture()[k].covariance() == original.mixture()[k].covariance());

    REQUIRE(gmmrf_cli({"scale-model", "--set", "input=" + dir / "m.gmrf", "--set", "output=" + dir / "one.gmrf", "--set",
                       "p=1"})
                .code == 0);
    const GmMrfModel equalized = read_model(dir / "one.gmrf");
    for (std::size_t k = 0; k < 66; ++k)
      CHECK(average_eigenvalue(equalized.scaled_mixture()[k]) == doctest::Approx(33.0 * 33.0).epsilon(1e-9));

    const Outcome bad_p = gmmrf_cli({"scale-model", "--set", "input=" + dir / "m.gmrf", "--set", "output=" + dir / "x.gmrf",
                                     "--set", "p=1.5"});
    CHECK(bad_p.code == cli::kExitConfig);
    CHECK(bad_p.err.find("p must lie in [0, 1]") != std::string::npos);
    CHECK(gmmrf_cli({"scale-model", "--set", "input=" + dir / "m.gmrf", "--set", "output=" + dir / "x.gmrf", "--set",
                     "alpha=0"})
              .code == cli::kExitConfig);
  }
  SUBCASE("underfilled group is reported") {
    write_image(dir / "air.gmim", Image(20, 20, -1000.0));
    spit(dir / "air.json", R"({"images": ["air.gmim"], "output": "air.gmrf"})");
    const Outcome r = gmmrf_cli({"train", "--config", dir / "air.json"});
    CHECK(r.code == cli::kExitConfig);
    CHECK(r.err.find("group 2") != std::string::npos);
  }
}

TEST_CASE("denoise, reproducibility and batch") {
  TempDir dir("denoise");
  REQUIRE(gmmrf_cli({"phantom", "--set", "type=multi_tissue", "--set", "size=32", "--set", "seed=3", "--set",
                     "output=" + dir / "clean.gmim"})
              .code == 0);
  Image noisy = read_image(dir / "clean.gmim");
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 40.0);
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += noise(rng);
  write_image(dir / "noisy.gmim", noisy);
  spit(dir / "train.json", R"({"images": ["clean.gmim"], "output": "k1.gmrf",
      "groups": [{"index": 1, "samples": 100000, "components": 1, "weight": 1.0}]})");
  REQUIRE(gmmrf_cli({"train", "--config", dir / "train.json"}).code == 0);

  // Very weak prior: the output stays at the input.
  REQUIRE(gmmrf_cli({"denoise", "--set", "input=" + dir / "noisy.gmim", "--set", "model=" + dir / "k1.gmrf", "--set",
                     "noise_sigma=40", "--set", "sigma_x=1e6", "--set", "output=" + dir / "weak.gmim"})
              .code == 0);
  CHECK(rmse(read_image(dir / "weak.gmim"), read_image(dir / "noisy.gmim")) < 0.01);

  spit(dir / "denoise.json", R"({"input": "noisy.gmim", "model": "k1.gmrf", "noise_sigma": 40, "sigma_x": 0.5,
      "order": "random", "seed": 2, "outer_iters": 5, "output": "d.gmim"})");
  REQUIRE(gmmrf_cli({"denoise", "--config", dir / "denoise.json"}).code == 0);
  const std::string image = slurp(dir / "d.gmim"), trace = slurp(dir / "d.gmim.trace.txt"),
                    manifest = slurp(dir / "d.gmim.manifest.json");
  REQUIRE(gmmrf_cli({"denoise", "--config", dir / "denoise.json"}).code == 0);
  CHECK(slurp(dir / "d.gmim") == image);
  CHECK(slurp(dir / "d.gmim.trace.txt") == trace);
  CHECK(slurp(dir / "d.gmim.manifest.json") == manifest);

  spit(dir / "batch.json", R"({"jobs": [
      {"command": "phantom", "config": {"type": "gepp", "output": "g.gmim"}},
      {"command": "simulate", "config": {"phantom": "g.gmim", "output": "g1.gmsn", "dose": 1000, "seed": 5}},
      {"command": "simulate", "config": {"phantom": "g.gmim", "output": "g2.gmsn", "dose": 1000, "seed": 5}}]})");
  const Outcome batch = gmmrf_cli({"batch", "--config", dir / "batch.json"});
  REQUIRE(batch.code == 0);
  CHECK(batch.out.find("[3/3] simulate") != std::string::npos);
  CHECK(slurp(dir / "g1.gmsn") == slurp(dir / "g2.gmsn"));

  SUBCASE("numerical failure exits with code 3") {
    // A pixel so far from a needle-thin component that its density underflows to zero.
    write_model(dir / "needle.gmrf",
                GmMrfModel(GaussianMixture({GaussianComponent(1.0, Eigen::VectorXd::Zero(9), 1e-300 * Eigen::MatrixXd::Identity(9, 9))},
                                           PatchGeometry::square(3))));
    Image extreme(8, 8, 0.0);
    extreme(4, 4) = 3e38;
    write_image(dir / "extreme.gmim", extreme);
    const Outcome r = gmmrf_cli({"denoise", "--set", "input=" + dir / "extreme.gmim", "--set", "model=" + dir / "needle.gmrf",
                                 "--set", "noise_sigma=1", "--set", "output=" + dir / "e.gmim"});
    CHECK(r.code == cli::kExitNumerical);
  }
}
