// Copyright 2026 The tds authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TDS_CONFIG_HPP
#define TDS_CONFIG_HPP

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tds/oracle.hpp"
#include "tds/schedule.hpp"
#include "tds/score_model.hpp"
#include "tds/smc.hpp"
#include "tds/twisting.hpp"

namespace tds {

// Raised for malformed or inconsistent configuration; the command line maps
// it to exit code 1 (runtime failures exit with 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat `key = value` experiment description. Lines may carry # comments.
// Vectors are comma separated; matrices and mask sets separate rows with
// semicolons. Unknown keys and malformed values are errors that name the
// offending line.
struct ExperimentConfig {
  // Forward process.
  std::string framework = "vp";  // vp | ve | ve_const
  int steps = 100;
  double var_min = 1e-5;  // quadratic vp schedule: step t gets
  double var_max = 1e-1;  // var_min + (t / steps)^2 * var_max
  double sigma2 = 1e-2;   // per-step variance for ve_const
  std::vector<double> step_vars;  // explicit per-step variances (optional)

  // Data distribution.
  std::string target = "gaussian";  // gaussian | gmm
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::vector<double> gmm_weights = {0.3, 0.5, 0.2};
  Eigen::MatrixXd gmm_means;  // one component mean per row
  double gmm_std = 0.2;

  // Observation.
  std::string likelihood = "inpaint";  // smooth_norm | inpaint | inpaint_dof
  Eigen::VectorXd y;
  std::vector<int> mask = {0};
  std::vector<std::vector<int>> mask_set = {{0}, {1}};

  // Twisting.
  double twist_scale = 1.0;
  std::string variance_scheme = "tds_scaling";
  bool variance_scheme_set = false;  // unset falls back to forward_var on ve
  double data_var = 0.0;
  bool data_var_set = false;  // unset resolves to the target variance
  std::string final_step = "exact";  // exact | heuristic

  // Sampler.
  std::string method = "tds";
  int particles = 64;
  std::string resampling = "systematic";  // systematic | multinomial
  double ess_threshold = 1.0;
  std::string proposal_var = "model";  // model | inflated
  double inflate_factor = 1.0;
  int truncate_at = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;  // 0: use TDS_WORKERS, else 1

  std::string output_dir = ".";

  // Benchmark sweep.
  std::vector<std::string> bench_methods = {"tds"};
  std::vector<std::string> bench_tasks = {"smooth_norm", "inpaint",
                                          "inpaint_dof"};
  std::vector<int> bench_particles = {16, 64, 256, 1024, 4096};
  int replicates = 25;

  // Oracle quadrature grid.
  double grid_lo = -6.0;
  double grid_hi = 6.0;
  int grid_points = 1024;

  ExperimentConfig();
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Applies one `key=value` assignment (the --set flag).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// The effective configuration, every key resolved (data variance and the
// ve variance-scheme fallback included), in a form parse_config_text accepts.
// Printing, reparsing, and printing again is byte-stable.
std::string print_config(const ExperimentConfig& cfg);

// Builders. All of them convert invalid settings into ConfigError.
NoiseSchedule build_schedule(const ExperimentConfig& cfg);
AnalyticTarget build_target(const ExperimentConfig& cfg);
Likelihood build_likelihood(const ExperimentConfig& cfg);
TwistConfig build_twist(const ExperimentConfig& cfg,
                        const AnalyticTarget& target);
SamplerConfig build_sampler(const ExperimentConfig& cfg);
GridSpec build_grid(const ExperimentConfig& cfg);
BenchmarkSpec build_benchmark(const ExperimentConfig& cfg);

// Enum parsing; throws ConfigError listing the valid names.
Method parse_method(const std::string& name);
Resampling parse_resampling(const std::string& name);
TwistVarianceScheme parse_variance_scheme(const std::string& name);
FinalStepMode parse_final_step(const std::string& name);
ProposalVarMode parse_proposal_var(const std::string& name);

// Writes content to path via a temporary file and an atomic rename, so
// readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace tds

#endif  // TDS_CONFIG_HPP
