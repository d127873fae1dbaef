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

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tds/config.hpp"
#include "tds/oracle.hpp"
#include "tds/smc.hpp"
#include "tds/so3.hpp"

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

int run_sample(const tds::ExperimentConfig& cfg) {
  const tds::AnalyticTarget target = tds::build_target(cfg);
  const tds::NoiseSchedule schedule = tds::build_schedule(cfg);
  const tds::Likelihood lik = tds::build_likelihood(cfg);
  try {
    lik.validate(target.dim());
  } catch (const std::exception& e) {
    throw tds::ConfigError(e.what());
  }
  const tds::TwistConfig twist = tds::build_twist(cfg, target);
  const tds::SamplerConfig sampler = tds::build_sampler(cfg);
  if ((sampler.method == tds::Method::kReplacement ||
       sampler.method == tds::Method::kSmcDiff) &&
      (lik.kind() != tds::LikelihoodKind::kInpaint)) {
    throw tds::ConfigError("method " + cfg.method +
                           " requires likelihood = inpaint");
  }

  const tds::RunResult res =
      tds::run_sampler(target, schedule, lik, twist, sampler);

  std::ostringstream particles;
  particles << "particle_index,weight";
  for (int j = 0; j < res.states.cols(); ++j) particles << ",x" << j;
  particles << "\n";
  for (int k = 0; k < res.states.rows(); ++k) {
    particles << k << ',' << fmt(res.weights[k]);
    for (int j = 0; j < res.states.cols(); ++j) {
      particles << ',' << fmt(res.states(k, j));
    }
    particles << "\n";
  }
  tds::write_file_atomic(join_path(cfg.output_dir, "particles.csv"),
                         particles.str());

  std::ostringstream diag;
  diag << "t,ess,resampled,max_abs_log_incr_weight\n";
  for (const auto& row : res.trace) {
    diag << row.t << ',' << fmt(row.ess) << ',' << (row.resampled ? 1 : 0)
         << ',' << fmt(row.max_abs_log_incr) << "\n";
  }
  tds::write_file_atomic(join_path(cfg.output_dir, "diagnostics.csv"),
                         diag.str());

  const Eigen::VectorXd mean =
      tds::estimate_conditional_mean(res.states, res.weights);
  std::cout << "method = " << cfg.method << "\n";
  std::cout << "particles = " << res.states.rows() << "\n";
  std::cout << "final_ess = " << fmt(res.final_ess) << "\n";
  std::cout << "resample_count = " << res.resample_count << "\n";
  std::cout << "var_clamp_events = " << res.var_clamp_events << "\n";
  std::cout << "weighted_mean =";
  for (int j = 0; j < mean.size(); ++j) std::cout << ' ' << fmt(mean[j]);
  std::cout << "\n";
  std::cout << "wrote " << join_path(cfg.output_dir, "particles.csv")
            << " and " << join_path(cfg.output_dir, "diagnostics.csv") << "\n";
  return 0;
}

int run_benchmark_cmd(const tds::ExperimentConfig& cfg) {
  const tds::BenchmarkSpec spec = tds::build_benchmark(cfg);
  const tds::BenchmarkResult res = tds::run_benchmark(spec);

  tds::write_file_atomic(join_path(cfg.output_dir, "benchmark.csv"),
                         tds::benchmark_csv(res.rows));
  tds::write_file_atomic(join_path(cfg.output_dir, "benchmark_aggregate.csv"),
                         tds::aggregate_csv(res.aggregates));

  for (const auto& [task, mean] : res.oracle_means) {
    std::cout << "oracle_mean[" << task << "] =";
    for (int j = 0; j < mean.size(); ++j) std::cout << ' ' << fmt(mean[j]);
    std::cout << "\n";
  }
  int failures = 0;
  for (const auto& row : res.rows) {
    if (!row.ok) ++failures;
  }
  std::cout << "rows = " << res.rows.size() << ", failed = " << failures
            << "\n";
  std::cout << tds::aggregate_csv(res.aggregates);
  std::cout << "wrote " << join_path(cfg.output_dir, "benchmark.csv")
            << " and " << join_path(cfg.output_dir, "benchmark_aggregate.csv")
            << "\n";
  return 0;
}

int run_oracle(const tds::ExperimentConfig& cfg) {
  const tds::AnalyticTarget target = tds::build_target(cfg);
  const tds::Likelihood lik = tds::build_likelihood(cfg);
  try {
    lik.validate(target.dim());
  } catch (const std::exception& e) {
    throw tds::ConfigError(e.what());
  }
  const Eigen::VectorXd mean = tds::conditional_mean_oracle(
      target, lik, cfg.twist_scale, tds::build_grid(cfg));
  std::cout << "oracle_mean =";
  for (int j = 0; j < mean.size(); ++j) std::cout << ' ' << fmt(mean[j]);
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Twisted sequential Monte Carlo on analytic diffusion models"};
  app.name("tds");
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string output_dir;
  bool print_cfg = false;

  CLI::App* sample = app.add_subcommand(
      "sample", "Run one sampler and write particles.csv / diagnostics.csv");
  CLI::App* benchmark = app.add_subcommand(
      "benchmark",
      "Sweep methods, tasks, and particle counts against the oracle");
  CLI::App* oracle = app.add_subcommand(
      "oracle", "Print the ground-truth conditional mean");
  CLI::App* riemannian = app.add_subcommand(
      "riemannian-check", "Run the rotation-manifold property suite");

  for (CLI::App* sub : {sample, benchmark, oracle}) {
    sub->add_option("--config", config_path, "Config file (key = value lines)");
    sub->add_option("--set", overrides,
                    "Override one config key, e.g. --set K=256 (repeatable)");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--workers", workers,
                    "Worker threads (0: use TDS_WORKERS, else 1)");
    sub->add_option("--output-dir", output_dir, "Directory for output files");
    sub->add_flag("--print-config", print_cfg,
                  "Print the effective configuration and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR: " << e.what() << "\n";
    return 1;
  }

  try {
    if (riemannian->parsed()) {
      return tds::run_so3_property_checks(std::cout) ? 0 : 2;
    }

    CLI::App* sub = sample->parsed() ? sample
                    : benchmark->parsed() ? benchmark
                                          : oracle;
    tds::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = tds::load_config_file(config_path);
    for (const auto& s : overrides) tds::apply_override(cfg, s);
    if (sub->count("--seed") > 0) {
      cfg.seed = seed;
      cfg.seed_set = true;
    }
    if (sub->count("--workers") > 0) {
      if (workers < 0) throw tds::ConfigError("--workers must be >= 0");
      cfg.workers = workers;
    }
    if (sub->count("--output-dir") > 0) cfg.output_dir = output_dir;

    if (print_cfg) {
      std::cout << tds::print_config(cfg);
      return 0;
    }
    if (sample->parsed()) return run_sample(cfg);
    if (benchmark->parsed()) return run_benchmark_cmd(cfg);
    return run_oracle(cfg);
  } catch (const tds::ConfigError& e) {
    std::cerr << "ERROR: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR: " << e.what() << "\n";
    return 2;
  }
}
