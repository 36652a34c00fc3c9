#include "gmmrf/cli.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "gmmrf/errors.hpp"
#include "gmmrf/io.hpp"
#include "gmmrf/metrics.hpp"
#include "gmmrf/optimizer.hpp"
#include "gmmrf/parallel.hpp"
#include "gmmrf/phantoms.hpp"
#include "gmmrf/trainer.hpp"

namespace gmmrf::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"phantom", "train",   "scale-model", "simulate",
                                                 "reconstruct", "denoise", "eval", "batch"};
  return names;
}

json merge(const json& defaults, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw InvalidInput("config: " + (prefix.empty() ? std::string("document") : prefix) + " must be an object");
  json out = defaults;
  for (const auto& [key, value] : user.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw InvalidInput("config: unknown key '" + name + "'");
    if (defaults[key].is_object() && !value.is_null())
      out[key] = merge(defaults[key], value, name);
    else
      out[key] = value;
  }
  return out;
}

const json& required(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (v.is_null()) throw InvalidInput("config: missing required key '" + key + "'");
  return v;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return fs::weakly_canonical(path.is_absolute() ? path : base / path);
}

fs::path input_path(const json& cfg, const std::string& key, const fs::path& base) {
  const fs::path p = resolve(base, required(cfg, key).get<std::string>());
  if (!fs::is_regular_file(p)) throw IoError("input file not found: " + p.string() + " (" + key + ")");
  return p;
}

fs::path output_path(const json& cfg, const std::string& key, const fs::path& base) {
  const fs::path p = resolve(base, required(cfg, key).get<std::string>());
  if (p.has_parent_path() && !fs::is_directory(p.parent_path()))
    throw IoError("output directory does not exist: " + p.parent_path().string());
  return p;
}

std::string number(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Records what a run read and wrote, keyed by config field.
class Manifest {
 public:
  Manifest(std::string command, json config) : command_(std::move(command)), config_(std::move(config)) {}
  void input(const std::string& key, const fs::path& p) { inputs_[key] = {{"path", p.string()}, {"fnv1a", hex(file_hash(p))}}; }
  void output(const std::string& key, const fs::path& p) { outputs_[key] = {{"path", p.string()}, {"fnv1a", hex(file_hash(p))}}; }
  void note(const std::string& key, json v) { notes_[key] = std::move(v); }

  void write(const fs::path& primary_output) const {
    json doc;
    doc["command"] = command_;
    doc["config"] = config_;
    doc["parameter_hash"] = hex(fnv1a(config_.dump()));
    doc["inputs"] = inputs_.is_null() ? json::object() : inputs_;
    doc["outputs"] = outputs_.is_null() ? json::object() : outputs_;
    if (!notes_.is_null()) doc["notes"] = notes_;
    doc["format_version"] = kFormatVersion;
    const fs::path path = primary_output.string() + ".manifest.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
  }

 private:
  std::string command_;
  json config_;
  json inputs_, outputs_, notes_;
};

GmMrfModel load_model(const json& cfg, const fs::path& path) {
  GmMrfModel model = read_model(path);
  const double sx = cfg.at("sigma_x").is_null() ? model.sigma_x() : cfg.at("sigma_x").get<double>();
  const double p = cfg.at("p").is_null() ? model.p() : cfg.at("p").get<double>();
  const double a = cfg.at("alpha").is_null() ? model.alpha() : cfg.at("alpha").get<double>();
  return model.with_parameters(sx, p, a);
}

StopCriteria stop_from(const json& cfg) {
  StopCriteria stop{cfg.at("outer_iters").get<int>(), cfg.at("inner_sweeps").get<int>(), cfg.at("tolerance").get<double>()};
  stop.validate();
  return stop;
}

IcdOptions order_from(const json& cfg) {
  const std::string order = cfg.at("order").get<std::string>();
  IcdOptions opts;
  if (order == "raster")
    opts.order = UpdateOrder::Raster;
  else if (order == "random")
    opts.order = UpdateOrder::RandomPermutation;
  else
    throw InvalidInput("config: order must be 'raster' or 'random'");
  opts.seed = cfg.at("seed").get<std::uint64_t>();
  return opts;
}

Interval interval_from(const json& v, const std::string& name) {
  if (!v.is_array() || v.size() != 2) throw InvalidInput("config: " + name + " must be [lo, hi] (null for unbounded)");
  Interval out;
  if (!v[0].is_null()) out.lo = v[0].get<double>();
  if (!v[1].is_null()) out.hi = v[1].get<double>();
  return out;
}

std::vector<GroupSpec> groups_from(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() != "six_tissue") throw InvalidInput("config: groups must be \"six_tissue\" or a list of group objects");
    return six_tissue_groups();
  }
  if (!v.is_array() || v.empty()) throw InvalidInput("config: groups must be \"six_tissue\" or a non-empty list");
  const json group_defaults = {{"index", nullptr},         {"mean", json::array({nullptr, nullptr})},
                               {"std", json::array({nullptr, nullptr})}, {"samples", nullptr},
                               {"components", nullptr},    {"weight", 0.0}};
  std::vector<GroupSpec> specs;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const json g = merge(group_defaults, v[i], "groups[" + std::to_string(i) + "]");
    GroupSpec s;
    s.index = required(g, "index").get<int>();
    s.mean = interval_from(g.at("mean"), "mean");
    s.std = interval_from(g.at("std"), "std");
    s.sample_target = required(g, "samples").get<std::size_t>();
    s.components = required(g, "components").get<int>();
    s.mixture_weight = g.at("weight").get<double>();
    specs.push_back(s);
  }
  return specs;
}

PatchGeometry patch_from(const json& v) {
  if (v.is_number_integer()) return PatchGeometry::square(v.get<int>());
  if (v.is_array()) return PatchGeometry(v.get<std::vector<int>>());
  throw InvalidInput("config: patch must be an odd side length or [rows, cols]");
}

void cmd_phantom(const json& cfg, const fs::path& base, std::ostream& out) {
  const std::string type = cfg.at("type").get<std::string>();
  const int n = cfg.at("size").get<int>();
  const double ps = cfg.at("pixel_size").get<double>();
  if (!(ps > 0.0)) throw InvalidInput("config: pixel_size must be positive");
  const fs::path output = output_path(cfg, "output", base);
  Manifest manifest("phantom", cfg);
  Image img;
  if (type == "shepp_logan") {
    img = shepp_logan(n, ps);
  } else if (type == "gepp") {
    GeppFeatures f{};
    img = gepp_analog(n, ps, {}, &f);
    manifest.note("wire", {f.wire_row, f.wire_col});
    manifest.note("flat_roi", {f.flat_row, f.flat_col, f.flat_radius});
    manifest.note("bar_periods", f.bar_periods);
    out << "wire: " << f.wire_row << ' ' << f.wire_col << '\n'
        << "flat_roi: " << f.flat_row << ' ' << f.flat_col << ' ' << f.flat_radius << '\n';
  } else if (type == "multi_tissue") {
    img = multi_tissue_phantom(n, cfg.at("seed").get<std::uint64_t>(), ps);
  } else {
    throw InvalidInput("config: type must be shepp_logan, gepp or multi_tissue");
  }
  write_image(output, img);
  manifest.output("output", output);
  manifest.write(output);
}

void cmd_train(const json& cfg, const fs::path& base, std::ostream& out) {
  const json& list = required(cfg, "images");
  if (!list.is_array() || list.empty()) throw InvalidInput("config: images must be a non-empty list of paths");
  std::vector<fs::path> paths;
  for (const auto& p : list) {
    paths.push_back(resolve(base, p.get<std::string>()));
    if (!fs::is_regular_file(paths.back())) throw IoError("input file not found: " + paths.back().string());
  }
  const fs::path output = output_path(cfg, "output", base);
  const PatchGeometry geometry = patch_from(cfg.at("patch"));
  const std::vector<GroupSpec> specs = groups_from(cfg.at("groups"));
  const json& em = cfg.at("em");
  const EmConfig em_cfg{em.at("max_iters").get<int>(), em.at("tolerance").get<double>(), em.at("seed").get<std::uint64_t>(),
                        em.at("covariance_floor").get<double>(), em.at("variance_floor").get<double>()};
  TrainingOptions opts;
  opts.stride = cfg.at("stride").get<int>();
  const std::string weighting = cfg.at("weighting").get<std::string>();
  if (weighting == "configured")
    opts.weighting = GroupWeighting::Configured;
  else if (weighting == "natural")
    opts.weighting = GroupWeighting::Natural;
  else
    throw InvalidInput("config: weighting must be 'configured' or 'natural'");

  Manifest manifest("train", cfg);
  std::vector<Image> images;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    images.push_back(read_image(paths[i]));
    manifest.input("images[" + std::to_string(i) + "]", paths[i]);
  }
  const TrainingResult result = train_gmmrf(images, geometry, specs, em_cfg, opts);
  const GmMrfModel model =
      result.model.with_parameters(cfg.at("sigma_x").get<double>(), cfg.at("p").get<double>(), cfg.at("alpha").get<double>());
  write_model(output, model);

  json groups = json::array();
  for (const auto& g : result.groups) {
    out << "group " << g.index << ": patches " << g.used << "/" << g.available << ", weight " << number(g.weight)
        << ", EM iterations " << (g.log_likelihood.empty() ? 0 : g.log_likelihood.size() - 1) << "\n  log-likelihood:";
    for (double ll : g.log_likelihood) out << ' ' << number(ll);
    out << '\n';
    groups.push_back({{"index", g.index}, {"available", g.available}, {"used", g.used}, {"weight", g.weight},
                      {"log_likelihood", g.log_likelihood}});
  }
  out << "components: " << model.mixture().size() << '\n';
  manifest.note("groups", groups);
  manifest.note("components", model.mixture().size());
  manifest.output("output", output);
  manifest.write(output);
}

void cmd_scale_model(const json& cfg, const fs::path& base, std::ostream& out) {
  const fs::path input = input_path(cfg, "input", base);
  const fs::path output = output_path(cfg, "output", base);
  const GmMrfModel model = load_model(cfg, input);
  write_model(output, model);
  out << "sigma_x: " << number(model.sigma_x()) << "\np: " << number(model.p()) << "\nalpha: " << number(model.alpha())
      << '\n';
  Manifest manifest("scale-model", cfg);
  manifest.input("input", input);
  manifest.output("output", output);
  manifest.write(output);
}

void cmd_simulate(const json& cfg, const fs::path& base, std::ostream& out) {
  const fs::path input = input_path(cfg, "phantom", base);
  const fs::path output = output_path(cfg, "output", base);
  const Image phantom = read_image(input);
  if (phantom.rows() != phantom.cols()) throw InvalidInput("simulate: phantom must be square");
  ScanGeometry g;
  g.n_pixels = phantom.rows();
  g.pixel_size = phantom.pixel_size();
  g.n_angles = cfg.at("n_angles").get<int>();
  const double spacing = cfg.at("detector_spacing").get<double>();
  g.detector_spacing = spacing > 0.0 ? spacing : g.pixel_size;
  const int nd = cfg.at("n_detectors").get<int>();
  g.n_detectors = nd > 0 ? nd : ScanGeometry::detectors_for(g.n_pixels, g.pixel_size, g.detector_spacing);
  g.mu_water = cfg.at("mu_water").get<double>();
  const SystemMatrix a(g);
  const SimulatedScan scan = simulate_sinogram(
      a, phantom, {cfg.at("dose").get<double>(), cfg.at("seed").get<std::uint64_t>(), cfg.at("noiseless").get<bool>()});
  write_sinogram(output, scan.sinogram, scan.weights);
  out << "measurements: " << g.measurements() << "\nn_detectors: " << g.n_detectors << '\n';
  Manifest manifest("simulate", cfg);
  manifest.input("phantom", input);
  manifest.note("geometry", {{"n_pixels", g.n_pixels}, {"pixel_size", g.pixel_size}, {"n_angles", g.n_angles},
                             {"n_detectors", g.n_detectors}, {"detector_spacing", g.detector_spacing}, {"mu_water", g.mu_water}});
  manifest.output("output", output);
  manifest.write(output);
}

fs::path trace_path(const json& cfg, const fs::path& base, const fs::path& output) {
  if (cfg.at("trace").is_null()) return output.string() + ".trace.txt";
  return output_path(cfg, "trace", base);
}

void report_map(const MapResult& r, std::ostream& out) {
  out << "outer_iterations: " << r.outer_iterations << "\nconverged: " << (r.converged ? "true" : "false")
      << "\nobjective: " << number(r.objective.back()) << "\nmax_responsibility_entropy: " << number(r.max_entropy)
      << "\nskipped_updates: " << r.skipped << '\n';
}

json map_notes(const MapResult& r) {
  return {{"outer_iterations", r.outer_iterations}, {"converged", r.converged}, {"skipped_updates", r.skipped},
          {"max_responsibility_entropy", r.max_entropy}, {"final_objective", r.objective.back()}};
}

void cmd_reconstruct(const json& cfg, const fs::path& base, std::ostream& out) {
  const fs::path input = input_path(cfg, "sinogram", base);
  const fs::path output = output_path(cfg, "output", base);
  const std::string method = cfg.at("method").get<std::string>();
  if (method != "gmmrf" && method != "fbp") throw InvalidInput("config: method must be 'gmmrf' or 'fbp'");
  const std::string init = cfg.at("init").get<std::string>();
  if (init != "backprojection" && init != "fbp") throw InvalidInput("config: init must be 'backprojection' or 'fbp'");
  Manifest manifest("reconstruct", cfg);
  manifest.input("sinogram", input);
  const auto [sinogram, weights] = read_sinogram(input);

  if (method == "fbp") {
    write_image(output, filtered_back_projection(sinogram));
    manifest.output("output", output);
    manifest.write(output);
    return;
  }
  const fs::path model_path = input_path(cfg, "model", base);
  const fs::path trace = trace_path(cfg, base, output);
  const StopCriteria stop = stop_from(cfg);
  const IcdOptions opts = order_from(cfg);
  manifest.input("model", model_path);
  const SystemMatrix a(sinogram.geometry);
  const MapProblem problem = ct_problem(a, sinogram, weights, load_model(cfg, model_path), cfg.at("clamp").get<bool>());
  const Image x0 = init == "fbp" ? filtered_back_projection(sinogram) : backprojection_init(problem);
  const MapResult result = map_reconstruct(problem, x0, stop, opts);
  write_image(output, result.x);
  write_trace(trace, result.objective);
  report_map(result, out);
  manifest.note("result", map_notes(result));
  manifest.output("output", output);
  manifest.output("trace", trace);
  manifest.write(output);
}

void cmd_denoise(const json& cfg, const fs::path& base, std::ostream& out) {
  const fs::path input = input_path(cfg, "input", base);
  const fs::path model_path = input_path(cfg, "model", base);
  const fs::path output = output_path(cfg, "output", base);
  const fs::path trace = trace_path(cfg, base, output);
  const double sigma = required(cfg, "noise_sigma").get<double>();
  const StopCriteria stop = stop_from(cfg);
  const IcdOptions opts = order_from(cfg);
  const Image noisy = read_image(input);
  const MapResult result = denoise(noisy, sigma, load_model(cfg, model_path), stop, opts);
  write_image(output, result.x);
  write_trace(trace, result.objective);
  report_map(result, out);
  Manifest manifest("denoise", cfg);
  manifest.input("input", input);
  manifest.input("model", model_path);
  manifest.note("result", map_notes(result));
  manifest.output("output", output);
  manifest.output("trace", trace);
  manifest.write(output);
}

void cmd_eval(const json& cfg, const fs::path& base, std::ostream& out) {
  const fs::path image_path = input_path(cfg, "image", base);
  Manifest manifest("eval", cfg);
  manifest.input("image", image_path);
  const Image img = read_image(image_path);
  std::optional<Roi> roi;
  if (!cfg.at("roi").is_null()) {
    const auto v = cfg.at("roi").get<std::vector<double>>();
    if (v.size() != 3) throw InvalidInput("config: roi must be [row, col, radius]");
    roi = Roi{v[0], v[1], v[2]};
  }
  std::ostringstream report;
  if (!cfg.at("reference").is_null()) {
    const fs::path ref_path = input_path(cfg, "reference", base);
    manifest.input("reference", ref_path);
    const Image ref = read_image(ref_path);
    report << "rmse: " << number(rmse(img, ref)) << '\n';
    if (roi) report << "roi_rmse: " << number(rmse(img, ref, roi)) << '\n';
  }
  if (roi) {
    const RoiStats s = roi_stats(img, *roi);
    report << "roi_mean: " << number(s.mean) << "\nroi_std: " << number(s.std) << "\nroi_pixels: " << s.count << '\n';
  }
  if (!cfg.at("wire").is_null()) {
    const auto w = cfg.at("wire").get<std::vector<int>>();
    if (w.size() != 2) throw InvalidInput("config: wire must be [row, col]");
    const MtfCurve curve = mtf_from_wire(img, w[0], w[1], img.pixel_size());
    report << "mtf10: " << number(mtf10(curve)) << '\n';
    for (std::size_t i = 0; i < curve.frequencies.size(); ++i)
      report << "mtf[" << number(curve.frequencies[i]) << "]: " << number(curve.modulation[i]) << '\n';
  }
  out << report.str();
  if (!cfg.at("output").is_null()) {
    const fs::path output = output_path(cfg, "output", base);
    std::ofstream f(output, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + output.string());
    f << report.str();
    f.close();
    manifest.output("output", output);
    manifest.write(output);
  }
}

void cmd_batch(const json& cfg, const fs::path& base, std::ostream& out) {
  const json& jobs = required(cfg, "jobs");
  if (!jobs.is_array()) throw InvalidInput("config: jobs must be a list");
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const json& job = jobs[i];
    if (!job.is_object() || !job.contains("command")) throw InvalidInput("config: jobs[" + std::to_string(i) + "] needs a command");
    for (const auto& [key, value] : job.items())
      if (key != "command" && key != "config") throw InvalidInput("config: unknown key 'jobs[" + std::to_string(i) + "]." + key + "'");
    const std::string command = job.at("command").get<std::string>();
    if (command == "batch") throw InvalidInput("config: batch jobs cannot nest");
    out << "[" << i + 1 << "/" << jobs.size() << "] " << command << '\n';
    run_command(command, job.value("config", json::object()), base, out);
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

void apply_set(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidInput("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = parse_value(assignment.substr(eq + 1));
      return;
    }
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    node = &child;
    start = dot + 1;
  }
}

}  // namespace

json default_config(const std::string& command) {
  const json stop = {{"outer_iters", 50}, {"inner_sweeps", 1}, {"tolerance", 0.1}, {"order", "raster"}, {"seed", 0}};
  if (command == "phantom") return {{"type", "shepp_logan"}, {"size", 128}, {"pixel_size", 1.0}, {"seed", 0}, {"output", nullptr}};
  if (command == "train")
    return {{"images", nullptr},
            {"output", nullptr},
            {"patch", 3},
            {"stride", 1},
            {"groups", "six_tissue"},
            {"weighting", "configured"},
            {"em",
             {{"max_iters", 200},
              {"tolerance", 1e-7},
              {"seed", 0},
              {"covariance_floor", kCovarianceFloor},
              {"variance_floor", 1.0}}},
            {"sigma_x", 1.0},
            {"p", 0.0},
            {"alpha", kDefaultAlpha}};
  if (command == "scale-model")
    return {{"input", nullptr}, {"output", nullptr}, {"sigma_x", nullptr}, {"p", nullptr}, {"alpha", nullptr}};
  if (command == "simulate")
    return {{"phantom", nullptr},  {"output", nullptr}, {"dose", 1e4},          {"seed", 0},
            {"noiseless", false},  {"n_angles", 90},    {"n_detectors", 0},     {"detector_spacing", 0.0},
            {"mu_water", kMuWater}};
  if (command == "reconstruct") {
    json cfg = {{"sinogram", nullptr}, {"model", nullptr}, {"output", nullptr}, {"trace", nullptr}, {"method", "gmmrf"},
                {"init", "backprojection"}, {"clamp", true}, {"sigma_x", nullptr}, {"p", nullptr}, {"alpha", nullptr}};
    cfg.update(stop);
    return cfg;
  }
  if (command == "denoise") {
    json cfg = {{"input", nullptr}, {"model", nullptr}, {"output", nullptr}, {"trace", nullptr}, {"noise_sigma", nullptr},
                {"sigma_x", nullptr}, {"p", nullptr}, {"alpha", nullptr}};
    cfg.update(stop);
    return cfg;
  }
  if (command == "eval") return {{"image", nullptr}, {"reference", nullptr}, {"roi", nullptr}, {"wire", nullptr}, {"output", nullptr}};
  if (command == "batch") return {{"jobs", nullptr}};
  throw InvalidInput("unknown command '" + command + "'");
}

void run_command(const std::string& command, const json& config, const fs::path& base_dir, std::ostream& out) {
  const json cfg = merge(default_config(command), config, "");
  if (command == "phantom") return cmd_phantom(cfg, base_dir, out);
  if (command == "train") return cmd_train(cfg, base_dir, out);
  if (command == "scale-model") return cmd_scale_model(cfg, base_dir, out);
  if (command == "simulate") return cmd_simulate(cfg, base_dir, out);
  if (command == "reconstruct") return cmd_reconstruct(cfg, base_dir, out);
  if (command == "denoise") return cmd_denoise(cfg, base_dir, out);
  if (command == "eval") return cmd_eval(cfg, base_dir, out);
  if (command == "batch") return cmd_batch(cfg, base_dir, out);
  throw InvalidInput("unknown command '" + command + "'");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GM-MRF patch prior: training, denoising and low-dose CT reconstruction"};
  app.name("gmmrf");
  app.require_subcommand(1);
  std::string config_file;
  std::vector<std::string> sets;
  const std::map<std::string, std::string> help = {
      {"phantom", "Write a synthetic phantom image"},
      {"train", "Train a GM-MRF patch model from images"},
      {"scale-model", "Change sigma_x, p and alpha of a model"},
      {"simulate", "Simulate a noisy parallel-beam sinogram"},
      {"reconstruct", "MAP (or FBP) reconstruction from a sinogram"},
      {"denoise", "MAP denoising of an image with additive Gaussian noise"},
      {"eval", "RMSE, ROI statistics and wire MTF of an image"},
      {"batch", "Run a list of jobs from one file"}};
  for (const auto& name : commands()) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("-c,--config", config_file, "JSON job file; relative paths inside it resolve against its directory");
    sub->add_option("-s,--set", sets, "Override a config key, e.g. --set dose=1000 or --set em.seed=3");
    sub->footer("Config keys and defaults:\n" + default_config(name).dump(2));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    configure_threads_from_env();
    json cfg = json::object();
    fs::path base = fs::current_path();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw IoError("cannot open config file " + config_file);
      cfg = json::parse(in);
      base = fs::absolute(fs::path(config_file)).parent_path();
    }
    for (const auto& s : sets) apply_set(cfg, s);
    run_command(command, cfg, base, out);
    return kExitOk;
  } catch (const json::exception& e) {
    err << "gmmrf " << command << ": config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    err << "gmmrf " << command << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "gmmrf " << command << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "gmmrf " << command << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ContractViolation& e) {
    err << "gmmrf " << command << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "gmmrf " << command << ": " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace gmmrf::cli
