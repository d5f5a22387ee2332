#include "lnadmm/runner.hpp"

#include "lnadmm/diagnostics.hpp"

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#ifndef LNADMM_VERSION
#define LNADMM_VERSION "0.0.0"
#endif

namespace lnadmm::runner {

namespace fs = std::filesystem;

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Quantile: return "quantile";
    case Experiment::Ct: return "ct";
    case Experiment::Custom: return "custom";
  }
  return "?";
}

Experiment parse_experiment(const std::string& s) {
  if (s == "quantile") return Experiment::Quantile;
  if (s == "ct") return Experiment::Ct;
  if (s == "custom") return Experiment::Custom;
  throw ConfigError("run.experiment: expected quantile, ct or custom, got \"" + s + "\"");
}

bool deterministic_mode() {
  const char* v = std::getenv("LNADMM_DETERMINISTIC");
  return v && *v && std::string(v) != "0";
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      throw ConfigError(name_ + ": expected a mapping");
  }

  void allow(std::initializer_list<const char*> keys) {
    if (!node_ || node_.IsNull()) return;
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) throw ConfigError("unknown key " + name_ + "." + key);
    }
  }

  template <typename T>
  void get(const char* key, T& out) const {
    const YAML::Node v = lookup(key);
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key) + ": cannot parse \"" + scalar(v) + "\"");
    }
  }

  void get(const char* key, double& out) const {
    const YAML::Node v = lookup(key);
    if (v) out = to_double(v, field(key));
  }

  void get(const char* key, std::vector<double>& out) const {
    const YAML::Node v = lookup(key);
    if (!v) return;
    out.clear();
    if (v.IsSequence()) {
      for (const auto& e : v) out.push_back(to_double(e, field(key)));
    } else {
      out.push_back(to_double(v, field(key)));
    }
  }

  void get(const char* key, std::vector<std::string>& out) const {
    const YAML::Node v = lookup(key);
    if (!v) return;
    if (!v.IsSequence()) throw ConfigError(field(key) + ": expected a list");
    out.clear();
    for (const auto& e : v) out.push_back(e.as<std::string>());
  }

  static double to_double(const YAML::Node& v, const std::string& field) {
    if (!v.IsScalar()) throw ConfigError(field + ": expected a number");
    std::string s = v.Scalar();
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    if (lower == "inf" || lower == "+inf" || lower == ".inf" || lower == "+.inf" ||
        lower == "infinity")
      return std::numeric_limits<double>::infinity();
    if (lower == "-inf" || lower == "-.inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError(field + ": cannot parse \"" + s + "\"");
    return out;
  }

 private:
  YAML::Node lookup(const char* key) const {
    if (!node_ || node_.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    return node_[key];
  }
  std::string field(const char* key) const { return name_ + "." + key; }
  static std::string scalar(const YAML::Node& v) { return v.IsScalar() ? v.Scalar() : "<node>"; }

  YAML::Node node_;
  std::string name_;
};

template <typename T>
void get_count(const Section& s, const char* key, T& out, const std::string& field) {
  long long v = static_cast<long long>(out);
  s.get(key, v);
  if (v < 0) throw ConfigError(field + ": must be >= 0");
  out = static_cast<T>(v);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  if (!root || root.IsNull()) return cfg;
  if (!root.IsMap()) throw ConfigError("config: expected a mapping at top level");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "run" && key != "quantile" && key != "ct" && key != "custom" && key != "manifest")
      throw ConfigError("unknown section " + key);
  }

  Section run(root["run"], "run");
  run.allow({"experiment", "iters", "seed", "sigma_list", "out", "workers"});
  std::string experiment = to_string(cfg.experiment);
  run.get("experiment", experiment);
  cfg.experiment = parse_experiment(experiment);
  get_count(run, "iters", cfg.iters, "run.iters");
  get_count(run, "seed", cfg.seed, "run.seed");
  run.get("sigma_list", cfg.sigmas);
  run.get("out", cfg.out);
  run.get("workers", cfg.workers);

  Section q(root["quantile"], "quantile");
  q.allow({"d", "n", "s_star", "q", "lambda", "beta", "R", "noise_df", "sigma_list", "iters",
           "seed"});
  auto& qs = cfg.quantile;
  if (cfg.experiment == Experiment::Quantile) {
    get_count(q, "iters", cfg.iters, "quantile.iters");
    get_count(q, "seed", cfg.seed, "quantile.seed");
    q.get("sigma_list", cfg.sigmas);
  }
  get_count(q, "d", qs.d, "quantile.d");
  get_count(q, "n", qs.n, "quantile.n");
  get_count(q, "s_star", qs.s_star, "quantile.s_star");
  q.get("q", qs.q);
  q.get("lambda", qs.lambda);
  q.get("beta", qs.beta);
  q.get("R", qs.R);
  q.get("noise_df", qs.noise_df);

  Section c(root["ct"], "ct");
  c.allow({"nx", "ny", "pixel_size", "n_angles", "n_detectors", "detector_span", "materials",
           "e_min", "e_max", "n_energies", "n_windows", "thresholds", "blur_width", "intensity",
           "attenuation_file", "spectrum_file", "phantom_file", "newton_iters", "alpha"});
  auto& g = cfg.ct.geometry;
  auto& sp = cfg.ct.spectral;
  get_count(c, "nx", g.nx, "ct.nx");
  get_count(c, "ny", g.ny, "ct.ny");
  c.get("pixel_size", g.pixel_size);
  get_count(c, "n_angles", g.n_angles, "ct.n_angles");
  get_count(c, "n_detectors", g.n_detectors, "ct.n_detectors");
  c.get("detector_span", g.detector_span);
  c.get("materials", sp.materials);
  c.get("e_min", sp.e_min);
  c.get("e_max", sp.e_max);
  get_count(c, "n_energies", sp.n_energies, "ct.n_energies");
  get_count(c, "n_windows", sp.n_windows, "ct.n_windows");
  c.get("thresholds", sp.thresholds);
  c.get("blur_width", sp.blur_width);
  c.get("intensity", sp.total_intensity);
  c.get("attenuation_file", sp.attenuation_file);
  c.get("spectrum_file", sp.spectrum_file);
  c.get("phantom_file", cfg.ct.phantom_file);
  c.get("newton_iters", cfg.ct.newton_iters);
  c.get("alpha", cfg.ct.alpha);

  Section u(root["custom"], "custom");
  u.allow({"matrix", "target", "lambda"});
  u.get("matrix", cfg.custom.matrix);
  u.get("target", cfg.custom.target);
  u.get("lambda", cfg.custom.lambda);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void resolve_defaults(ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::Quantile:
      if (cfg.iters == 0) cfg.iters = 500;
      if (cfg.sigmas.empty()) cfg.sigmas = {5e-5, 1e-4, 2e-4, 5e-4};
      break;
    case Experiment::Ct:
      if (cfg.iters == 0) cfg.iters = 1000;
      if (cfg.sigmas.empty()) cfg.sigmas = {1.0, 10.0, 100.0};
      break;
    case Experiment::Custom:
      if (cfg.iters == 0) cfg.iters = 1000;
      if (cfg.sigmas.empty()) cfg.sigmas = {1.0};
      break;
  }
  if (deterministic_mode()) cfg.workers = 1;
  cfg.quantile.seed = cfg.seed;
  cfg.quantile.sigma = cfg.sigmas.front();
  cfg.ct.seed = cfg.seed;
  cfg.ct.sigmas = cfg.sigmas;
  cfg.ct.iters = cfg.iters;
  cfg.ct.workers = cfg.workers;
}

namespace {

SparseMatrix read_sparse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_sparse(f);
}

Vector read_vector_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_vector(f);
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.iters < 1) throw ConfigError("run.iters: must be >= 1");
  if (cfg.workers < 1) throw ConfigError("run.workers: must be >= 1");
  if (cfg.out.empty()) throw ConfigError("run.out: must not be empty");
  if (cfg.sigmas.empty()) throw ConfigError("run.sigma_list: must not be empty");
  for (double s : cfg.sigmas)
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("run.sigma_list: entries must be > 0");
  try {
    switch (cfg.experiment) {
      case Experiment::Quantile:
        cfg.quantile.validate();
        break;
      case Experiment::Ct: {
        cfg.ct.geometry.validate();
        if (cfg.ct.newton_iters < 1) throw ConfigError("ct.newton_iters: must be >= 1");
        const auto model = ct::build_spectral_model(cfg.ct.spectral, cfg.ct.geometry.n_rays());
        if (cfg.ct.phantom_file.empty() && model.n_materials() != 3)
          throw ConfigError("ct.materials: the builtin phantom needs exactly 3 materials");
        if (!cfg.ct.phantom_file.empty()) {
          std::ifstream f(cfg.ct.phantom_file);
          if (!f) throw ConfigError("ct.phantom_file: cannot open " + cfg.ct.phantom_file);
          ct::read_phantom(f, cfg.ct.geometry, model.n_materials());
        }
        break;
      }
      case Experiment::Custom: {
        if (cfg.custom.matrix.empty()) throw ConfigError("custom.matrix: required");
        if (cfg.custom.target.empty()) throw ConfigError("custom.target: required");
        if (!(cfg.custom.lambda >= 0.0) || !std::isfinite(cfg.custom.lambda))
          throw ConfigError("custom.lambda: must be finite and >= 0");
        const auto M = read_sparse_file(cfg.custom.matrix);
        const auto w = read_vector_file(cfg.custom.target);
        if (w.size() != M.rows())
          throw ConfigError("custom.target: length " + std::to_string(w.size()) +
                            " does not match matrix rows " + std::to_string(M.rows()));
        break;
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Emission

namespace {

void emit_double(YAML::Emitter& em, double v) {
  if (std::isinf(v))
    em << (v > 0 ? ".inf" : "-.inf");
  else
    em << v;
}

void emit_doubles(YAML::Emitter& em, const std::vector<double>& vs) {
  em << YAML::Flow << YAML::BeginSeq;
  for (double v : vs) emit_double(em, v);
  em << YAML::EndSeq;
}

void emit_config(YAML::Emitter& em, const ExperimentConfig& cfg) {
  em << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  em << YAML::Key << "experiment" << YAML::Value << to_string(cfg.experiment);
  em << YAML::Key << "iters" << YAML::Value << cfg.iters;
  em << YAML::Key << "seed" << YAML::Value << cfg.seed;
  em << YAML::Key << "sigma_list" << YAML::Value;
  emit_doubles(em, cfg.sigmas);
  em << YAML::Key << "out" << YAML::Value << cfg.out;
  em << YAML::Key << "workers" << YAML::Value << cfg.workers;
  em << YAML::EndMap;

  switch (cfg.experiment) {
    case Experiment::Quantile: {
      const auto& q = cfg.quantile;
      em << YAML::Key << "quantile" << YAML::Value << YAML::BeginMap;
      em << YAML::Key << "d" << YAML::Value << q.d;
      em << YAML::Key << "n" << YAML::Value << q.n;
      em << YAML::Key << "s_star" << YAML::Value << q.s_star;
      em << YAML::Key << "q" << YAML::Value << q.q;
      em << YAML::Key << "lambda" << YAML::Value << q.lambda;
      em << YAML::Key << "beta" << YAML::Value;
      emit_double(em, q.beta);
      em << YAML::Key << "R" << YAML::Value;
      emit_double(em, q.R);
      em << YAML::Key << "noise_df" << YAML::Value;
      emit_double(em, q.noise_df);
      em << YAML::EndMap;
      break;
    }
    case Experiment::Ct: {
      const auto& g = cfg.ct.geometry;
      const auto& sp = cfg.ct.spectral;
      em << YAML::Key << "ct" << YAML::Value << YAML::BeginMap;
      em << YAML::Key << "nx" << YAML::Value << g.nx;
      em << YAML::Key << "ny" << YAML::Value << g.ny;
      em << YAML::Key << "pixel_size" << YAML::Value << g.pixel_size;
      em << YAML::Key << "n_angles" << YAML::Value << g.n_angles;
      em << YAML::Key << "n_detectors" << YAML::Value << g.n_detectors;
      em << YAML::Key << "detector_span" << YAML::Value << g.detector_span;
      em << YAML::Key << "materials" << YAML::Value << YAML::Flow << sp.materials;
      em << YAML::Key << "e_min" << YAML::Value << sp.e_min;
      em << YAML::Key << "e_max" << YAML::Value << sp.e_max;
      em << YAML::Key << "n_energies" << YAML::Value << sp.n_energies;
      em << YAML::Key << "n_windows" << YAML::Value << sp.n_windows;
      em << YAML::Key << "thresholds" << YAML::Value;
      emit_doubles(em, sp.thresholds);
      em << YAML::Key << "blur_width" << YAML::Value << sp.blur_width;
      em << YAML::Key << "intensity" << YAML::Value << sp.total_intensity;
      em << YAML::Key << "attenuation_file" << YAML::Value << sp.attenuation_file;
      em << YAML::Key << "spectrum_file" << YAML::Value << sp.spectrum_file;
      em << YAML::Key << "phantom_file" << YAML::Value << cfg.ct.phantom_file;
      em << YAML::Key << "newton_iters" << YAML::Value << cfg.ct.newton_iters;
      em << YAML::Key << "alpha" << YAML::Value << cfg.ct.alpha;
      em << YAML::EndMap;
      break;
    }
    case Experiment::Custom:
      em << YAML::Key << "custom" << YAML::Value << YAML::BeginMap;
      em << YAML::Key << "matrix" << YAML::Value << cfg.custom.matrix;
      em << YAML::Key << "target" << YAML::Value << cfg.custom.target;
      em << YAML::Key << "lambda" << YAML::Value << cfg.custom.lambda;
      em << YAML::EndMap;
      break;
  }
}

std::string eigen_version() {
  return std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
}

}  // namespace

std::string config_to_yaml(const ExperimentConfig& cfg) {
  YAML::Emitter em;
  em.SetDoublePrecision(std::numeric_limits<double>::max_digits10);
  em << YAML::BeginMap;
  emit_config(em, cfg);
  em << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Execution

namespace {

class OutputDir {
 public:
  explicit OutputDir(const std::string& path) : root_(path) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + path + ": " + ec.message());
  }

  std::ofstream open(const std::string& name, bool binary = false) {
    std::ofstream f(root_ / name, binary ? std::ios::binary : std::ios::out);
    if (!f) throw std::runtime_error("cannot write " + (root_ / name).string());
    files.push_back(name);
    return f;
  }

  void close(std::ofstream& f, const std::string& name) {
    f.close();
    if (!f) throw std::runtime_error("error writing " + (root_ / name).string());
  }

  std::vector<std::string> files;

 private:
  fs::path root_;
};

void write_trace(OutputDir& dir, const std::string& name, const Trace& trace) {
  auto f = dir.open(name);
  f.precision(std::numeric_limits<double>::max_digits10);
  trace.write_csv(f, deterministic_mode());
  dir.close(f, name);
}

void run_quantile(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& log) {
  const auto data = quantile::generate_dataset(cfg.quantile);
  const auto runs = quantile::run_sweep(cfg.quantile, data, cfg.sigmas, cfg.iters, cfg.workers);
  for (const auto& r : runs) {
    const std::string name = quantile::trace_filename(r.sigma);
    write_trace(dir, name, r.result.trace);
    const auto s = summarize_trace(r.result.trace);
    log << "quantile sigma=" << r.sigma << " Loss(x_T)=" << s.last_objective
        << " Loss(xbar_T)=" << r.result.trace.records().back().extras.at(0) << " -> " << name
        << '\n';
  }
}

void run_ct(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& log) {
  const auto res = ct::run_ct_experiment(cfg.ct);
  const auto& materials = cfg.ct.spectral.materials;
  auto dump = [&](const std::string& stem, const RowMatrix& x) {
    for (std::size_t m = 0; m < materials.size(); ++m) {
      const std::string txt = stem + "_" + materials[m] + ".txt";
      auto f = dir.open(txt);
      f.precision(std::numeric_limits<double>::max_digits10);
      ct::write_image(f, cfg.ct.geometry, x, Eigen::Index(m));
      dir.close(f, txt);
      const std::string pgm = stem + "_" + materials[m] + ".pgm";
      auto p = dir.open(pgm, true);
      ct::write_pgm(p, cfg.ct.geometry, x, Eigen::Index(m));
      dir.close(p, pgm);
    }
  };
  dump("ct_phantom", res.phantom);
  for (const auto& r : res.runs) {
    const std::string name = ct::ct_trace_filename(r.sigma);
    write_trace(dir, name, r.result.trace);
    char stem[64];
    std::snprintf(stem, sizeof stem, "ct_sigma%g_image", r.sigma);
    dump(stem, r.result.state.x);
    const auto s = summarize_trace(r.result.trace);
    log << "ct sigma=" << r.sigma << " loss first=" << s.first_objective
        << " last=" << s.last_objective;
    if (s.min_alpha) log << " min alpha_t=" << *s.min_alpha;
    log << " -> " << name << '\n';
  }
  const std::string report = "ct_report.yaml";
  auto f = dir.open(report);
  f.precision(std::numeric_limits<double>::max_digits10);
  f << "fosp_ratio: " << res.fosp_ratio << '\n';
  f << "active_rays: " << res.P.rows() << '\n';
  dir.close(f, report);
  log << "ct fosp ratio |grad g(y*)|/|grad g(0)| = " << res.fosp_ratio << '\n';
}

void run_custom(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& log) {
  const SparseMatrix M = read_sparse_file(cfg.custom.matrix);
  const Vector w = read_vector_file(cfg.custom.target);
  const double norm = spectral_norm(M, 1e-12);
  const double gamma = norm * norm * (1.0 + 1e-6);
  const double lambda = cfg.custom.lambda;
  SparseMatrix B(M.rows(), M.rows());
  B.setIdentity();
  B *= -1.0;
  for (double sigma : cfg.sigmas) {
    AdmmProblem problem(M, B, Vector::Zero(M.rows()), Vector::Constant(M.rows(), sigma),
                        StepSize::linearized(Vector::Constant(M.cols(), sigma * gamma)),
                        StepSize::zero(), l1_objective(lambda), squared_distance_objective(w));
    RunOptions opt;
    opt.iters = cfg.iters;
    opt.objective = [&](const AdmmState& s) {
      return lambda * s.x.lpNorm<1>() + 0.5 * (M * s.x - w).squaredNorm();
    };
    AdmmState init(Vector::Zero(M.cols()), Vector::Zero(M.rows()), Vector::Zero(M.rows()));
    const RunResult r = run(problem, std::move(init), opt);
    char name[64];
    std::snprintf(name, sizeof name, "custom_sigma%g", sigma);
    write_trace(dir, std::string(name) + ".csv", r.trace);
    auto f = dir.open(std::string(name) + "_x.txt");
    write_vector(f, r.x_avg);
    dir.close(f, std::string(name) + "_x.txt");
    log << "custom sigma=" << sigma << " objective=" << *r.trace.records().back().objective
        << '\n';
  }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  OutputDir dir(cfg.out);
  switch (cfg.experiment) {
    case Experiment::Quantile: run_quantile(cfg, dir, log); break;
    case Experiment::Ct: run_ct(cfg, dir, log); break;
    case Experiment::Custom: run_custom(cfg, dir, log); break;
  }

  YAML::Emitter em;
  em.SetDoublePrecision(std::numeric_limits<double>::max_digits10);
  em << YAML::BeginMap;
  emit_config(em, cfg);
  em << YAML::Key << "manifest" << YAML::Value << YAML::BeginMap;
  em << YAML::Key << "seed" << YAML::Value << cfg.seed;
  em << YAML::Key << "deterministic" << YAML::Value << deterministic_mode();
  em << YAML::Key << "versions" << YAML::Value << YAML::BeginMap;
  em << YAML::Key << "lnadmm" << YAML::Value << LNADMM_VERSION;
  em << YAML::Key << "eigen" << YAML::Value << eigen_version();
  em << YAML::Key << "compiler" << YAML::Value << __VERSION__;
  em << YAML::EndMap;
  em << YAML::Key << "outputs" << YAML::Value << dir.files;
  em << YAML::EndMap << YAML::EndMap;

  auto f = dir.open("manifest.yaml");
  f << em.c_str() << '\n';
  dir.close(f, "manifest.yaml");
  return {dir.files};
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct CliOptions {
  std::string experiment;
  std::string config;
  std::vector<double> sigmas;
  long iters = 0;
  long long seed = -1;
  std::string out;
  int workers = 0;
};

void add_run_flags(CLI::App& cmd, CliOptions& o) {
  cmd.add_option("--experiment", o.experiment, "quantile, ct or custom")
      ->check(CLI::IsMember({"quantile", "ct", "custom"}));
  cmd.add_option("--config", o.config, "YAML config file");
  cmd.add_option("--sigma", o.sigmas, "ADMM penalty values (repeatable)")->delimiter(',');
  cmd.add_option("--iters", o.iters, "iterations per run")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", o.seed, "random seed")->check(CLI::NonNegativeNumber);
  cmd.add_option("--out", o.out, "output directory");
  cmd.add_option("--workers", o.workers, "concurrent runs")->check(CLI::PositiveNumber);
}

ExperimentConfig build_config(const CliOptions& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw ConfigError("--config: no such file " + o.config);
    cfg = load_config(o.config);
  } else if (o.experiment.empty()) {
    throw ConfigError("either --config or --experiment is required");
  }
  if (!o.experiment.empty()) cfg.experiment = parse_experiment(o.experiment);
  if (!o.sigmas.empty()) cfg.sigmas = o.sigmas;
  if (o.iters > 0) cfg.iters = o.iters;
  if (o.seed >= 0) cfg.seed = std::uint64_t(o.seed);
  if (!o.out.empty()) cfg.out = o.out;
  if (o.workers > 0) cfg.workers = o.workers;
  resolve_defaults(cfg);
  validate_config(cfg);
  return cfg;
}

int summarize(const std::vector<std::string>& files, const std::string& column,
              const std::string& gnuplot, std::ostream& out) {
  std::vector<Trace> traces;
  for (const auto& path : files) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    traces.push_back(Trace::read_csv(f));
  }
  out << "file\trows\tfirst_objective\tlast_objective\tmin_objective\tmin_alpha\tfinal_residual\n";
  for (std::size_t k = 0; k < files.size(); ++k) {
    const auto s = summarize_trace(traces[k]);
    out << files[k] << '\t' << s.rows << '\t' << s.first_objective << '\t' << s.last_objective
        << '\t' << s.min_objective << '\t';
    if (s.min_alpha)
      out << *s.min_alpha;
    else
      out << '-';
    out << '\t' << s.final_residual << '\n';
  }
  if (gnuplot.empty()) return 0;

  std::ofstream g(gnuplot);
  if (!g) throw std::runtime_error("cannot write " + gnuplot);
  g.precision(std::numeric_limits<double>::max_digits10);
  g << "# iter";
  for (const auto& path : files) g << ' ' << fs::path(path).filename().string();
  g << "\n# column: " << column << '\n';
  std::map<long, std::vector<std::string>> rows;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    for (const auto& r : traces[k].records()) {
      auto& row = rows[r.t];
      row.resize(traces.size(), "NaN");
      const auto v = trace_column(traces[k], column, r.t, r.t);
      if (!v.empty()) {
        std::ostringstream ss;
        ss.precision(std::numeric_limits<double>::max_digits10);
        ss << v.front();
        row[k] = ss.str();
      }
    }
  }
  for (auto& [t, row] : rows) {
    row.resize(traces.size(), "NaN");
    g << t;
    for (const auto& v : row) g << ' ' << v;
    g << '\n';
  }
  if (!g) throw std::runtime_error("error writing " + gnuplot);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linearized ADMM experiments: quantile regression and spectral CT"};
  app.name("lnadmm");
  app.require_subcommand(1);

  CliOptions run_opts, check_opts;
  auto* run_cmd = app.add_subcommand("run", "run an experiment and write traces");
  add_run_flags(*run_cmd, run_opts);
  auto* check_cmd = app.add_subcommand("validate-config", "check a config without running it");
  add_run_flags(*check_cmd, check_opts);

  std::vector<std::string> files;
  std::string column = "objective", gnuplot;
  auto* sum_cmd = app.add_subcommand("summarize", "summarize trace files");
  sum_cmd->add_option("traces", files, "trace CSV files")->required();
  sum_cmd->add_option("--column", column, "column for the gnuplot table");
  sum_cmd->add_option("--gnuplot", gnuplot, "write a gnuplot-ready table to this file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) {
      const auto cfg = build_config(run_opts);
      const auto report = run_experiment(cfg, out);
      out << "wrote " << report.files.size() << " files to " << cfg.out << '\n';
    } else if (check_cmd->parsed()) {
      const auto cfg = build_config(check_opts);
      out << "config ok: " << to_string(cfg.experiment) << ", " << cfg.sigmas.size()
          << " sigma value(s), " << cfg.iters << " iterations\n";
    } else {
      return summarize(files, column, gnuplot, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::domain_error& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace lnadmm::runner
