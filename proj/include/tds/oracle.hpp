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

#ifndef TDS_ORACLE_HPP
#define TDS_ORACLE_HPP

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tds/schedule.hpp"
#include "tds/score_model.hpp"
#include "tds/smc.hpp"
#include "tds/twisting.hpp"

namespace tds {

// Quadrature grid for the smooth-norm oracle: a tensor-product trapezoid
// rule on [lo, hi] per dimension.
struct GridSpec {
  double lo = -6.0;
  double hi = 6.0;
  int points_per_dim = 1024;
};

// Ground-truth conditional mean E[x0 | y] under the target and likelihood.
// Delta (inpainting) observations use closed forms and ignore gamma; the
// smooth-norm likelihood is integrated on the grid with the tilt exponent
// gamma applied. Throws when the grid visibly truncates the posterior mass
// (compared against a 1.5x enlarged reference grid).
Eigen::VectorXd conditional_mean_oracle(const AnalyticTarget& target,
                                        const Likelihood& lik, double gamma,
                                        const GridSpec& grid);

// Euclidean distance between an estimate and the oracle mean.
double estimation_error(const Eigen::VectorXd& estimate,
                        const Eigen::VectorXd& oracle_mean);

// Ordinary least squares slope of log(values) against log(ks). Requires at
// least three distinct ks and strictly positive, finite values.
double fit_loglog_slope(const std::vector<double>& ks,
                        const std::vector<double>& values);

// Canonical benchmark tasks, by name:
//   "smooth_norm"  observe |x| ~ 0 through the smooth norm likelihood
//   "inpaint"      observe x[0] = 0
//   "inpaint_dof"  observe 0 at one of x[0], x[1], mask unknown
Likelihood task_likelihood(const std::string& name);

struct BenchmarkSpec {
  AnalyticTarget target;
  NoiseSchedule schedule;
  TwistConfig twist;
  SamplerConfig sampler;  // method, particles, and seed are set per row
  std::vector<Method> methods;
  std::vector<std::string> tasks;
  std::vector<int> particle_counts;
  int replicates = 25;
  std::uint64_t base_seed = 0;
  int workers = 1;
  GridSpec grid;

  BenchmarkSpec(AnalyticTarget t, NoiseSchedule s)
      : target(std::move(t)), schedule(std::move(s)) {}
};

struct BenchmarkRow {
  std::string method;
  std::string task;
  int particles = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  double error = 0.0;
  double mse = 0.0;
  double final_ess = 0.0;
  int resample_count = 0;
  double wall_ms = 0.0;
  bool ok = false;
  std::string message;  // failure reason when !ok
};

struct BenchmarkAggregate {
  std::string method;
  std::string task;
  int particles = 0;
  double mean_error = 0.0;
  double sem2 = 0.0;  // two standard errors of the mean
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkAggregate> aggregates;
  std::map<std::string, Eigen::VectorXd> oracle_means;
};

// Runs every (method, task, particle count, replicate) cell. Each row gets
// the seed base_seed ^ fnv1a64("method|task|K|replicate") so rows are
// reproducible in isolation; rows run in parallel across workers while each
// sampler runs serially. A row failure records the message instead of
// aborting the sweep.
BenchmarkResult run_benchmark(const BenchmarkSpec& spec);

// CSV with header method,task,K,replicate,seed,error,mse,final_ess,
// resample_count,wall_ms. Failed rows print nan for error and mse.
std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

// CSV with header method,task,K,mean_error,sem2.
std::string aggregate_csv(const std::vector<BenchmarkAggregate>& aggregates);

}  // namespace tds

#endif  // TDS_ORACLE_HPP
