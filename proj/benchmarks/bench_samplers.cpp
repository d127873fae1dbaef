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
//
// Times the serial reference loop against the OpenMP path on one twisted
// run and checks that both produce identical bits.

#include <chrono>
#include <iostream>

#include "tds/config.hpp"
#include "tds/parallel.hpp"
#include "tds/smc.hpp"

namespace {

double time_run(const tds::AnalyticTarget& target,
                const tds::NoiseSchedule& schedule, const tds::Likelihood& lik,
                const tds::TwistConfig& twist, tds::SamplerConfig cfg,
                int workers, tds::RunResult& out) {
  cfg.workers = workers;
  const auto start = std::chrono::steady_clock::now();
  out = tds::run_sampler(target, schedule, lik, twist, cfg);
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

int main() {
  tds::ExperimentConfig cfg;
  cfg.particles = 4096;
  cfg.seed = 2026;
  cfg.seed_set = true;

  const tds::AnalyticTarget target = tds::build_target(cfg);
  const tds::NoiseSchedule schedule = tds::build_schedule(cfg);
  const tds::Likelihood lik = tds::build_likelihood(cfg);
  const tds::TwistConfig twist = tds::build_twist(cfg, target);
  const tds::SamplerConfig sampler = tds::build_sampler(cfg);

  const int threads = std::max(2, tds::hardware_threads());

  tds::RunResult serial, parallel;
  // Warm caches once, then time each path.
  tds::RunResult warm;
  time_run(target, schedule, lik, twist, sampler, 1, warm);
  const double serial_ms =
      time_run(target, schedule, lik, twist, sampler, 1, serial);
  const double parallel_ms =
      time_run(target, schedule, lik, twist, sampler, threads, parallel);

  const bool identical =
      serial.states == parallel.states &&
      serial.log_weights == parallel.log_weights &&
      serial.resample_count == parallel.resample_count;

  std::cout << "tds sampler, K = " << cfg.particles << ", "
            << schedule.steps() << " steps\n";
  std::cout << "serial (workers = 1):        " << serial_ms << " ms\n";
  std::cout << "openmp (workers = " << threads << "):       " << parallel_ms
            << " ms\n";
  std::cout << "speedup:                     " << serial_ms / parallel_ms
            << "x\n";
  std::cout << "bit-identical results:       " << (identical ? "yes" : "NO")
            << "\n";
  return identical ? 0 : 1;
}
