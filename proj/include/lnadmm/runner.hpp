// Experiment configuration, orchestration and the command-line entry point.
//
// Config files are YAML with the sections `run`, `quantile`, `ct` and
// `custom`; unknown keys are errors. A written manifest is itself a valid
// config (its `manifest` section is informational and ignored on input).
#ifndef LNADMM_RUNNER_HPP
#define LNADMM_RUNNER_HPP

#include "lnadmm/ct_recon.hpp"
#include "lnadmm/quantile.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace lnadmm::runner {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Experiment { Quantile, Ct, Custom };
std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& s);

/// min lambda |x|_1 + 1/2 |M x - w|^2 from a sparse matrix file and a target
/// vector file (formats of write_sparse / write_vector).
struct CustomSpec {
  std::string matrix;
  std::string target;
  double lambda = 0.1;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::Quantile;
  long iters = 0;             // 0: experiment default
  std::uint64_t seed = 1;
  std::vector<double> sigmas;  // empty: experiment default
  std::string out = "results";
  int workers = 1;
  quantile::ProblemSpec quantile;
  ct::CtExperimentConfig ct;
  CustomSpec custom;
};

/// Parses YAML text; throws ConfigError naming the offending key.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::string& path);

/// Fills experiment defaults (iteration count, sigma list) and copies the
/// shared fields into the per-experiment structures.
void resolve_defaults(ExperimentConfig& cfg);

/// Checks everything that can be checked without running: field ranges,
/// material names, data files. Throws ConfigError.
void validate_config(const ExperimentConfig& cfg);

/// Resolved config as YAML (the `run`, `quantile`/`ct`/`custom` sections).
std::string config_to_yaml(const ExperimentConfig& cfg);

/// True when LNADMM_DETERMINISTIC is set to a non-empty value other than
/// "0": runs are sequential and trace files record zero wall time.
bool deterministic_mode();

struct RunReport {
  std::vector<std::string> files;  // relative to cfg.out
};

/// Runs a validated config and writes traces, images and manifest.yaml.
RunReport run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Exit codes: 0 success, 1 I/O failure, 2 invalid config or arguments,
/// 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lnadmm::runner

#endif  // LNADMM_RUNNER_HPP
