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

#include "tds/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace tds {

std::string to_string(Framework f) {
  switch (f) {
    case Framework::kVeConst:
      return "ve_const";
    case Framework::kVeGeneral:
      return "ve_general";
    case Framework::kVp:
      return "vp";
  }
  return "?";
}

NoiseSchedule::NoiseSchedule(Framework f, std::vector<double> step_vars)
    : framework_(f), step_vars_(std::move(step_vars)) {
  const int T = int(step_vars_.size());
  if (T < 1) throw std::invalid_argument("schedule needs at least one step");
  for (int t = 1; t <= T; ++t) {
    const double v = step_vars_[t - 1];
    if (!(v > 0.0))
      throw std::invalid_argument("step variance at t=" + std::to_string(t) +
                                  " must be strictly positive");
    if (framework_ == Framework::kVp && !(v < 1.0))
      throw std::invalid_argument("VP step variance at t=" +
                                  std::to_string(t) + " must be below 1");
  }
  cum_vars_.resize(T + 1);
  cum_alphas_.resize(T + 1);
  rev_factors_.resize(T);
  cum_vars_[0] = 0.0;
  cum_alphas_[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double v = step_vars_[t - 1];
    if (framework_ == Framework::kVp) {
      cum_alphas_[t] = cum_alphas_[t - 1] * (1.0 - v);
      cum_vars_[t] = 1.0 - cum_alphas_[t];
      rev_factors_[t - 1] = 1.0 / std::sqrt(1.0 - v);
    } else {
      cum_alphas_[t] = 1.0;
      cum_vars_[t] = cum_vars_[t - 1] + v;
      rev_factors_[t - 1] = 1.0;
    }
  }
}

NoiseSchedule NoiseSchedule::ve_const(int steps, double step_var) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
  return NoiseSchedule(Framework::kVeConst,
                       std::vector<double>(std::size_t(steps), step_var));
}

NoiseSchedule NoiseSchedule::ve_general(std::vector<double> step_vars) {
  return NoiseSchedule(Framework::kVeGeneral, std::move(step_vars));
}

NoiseSchedule NoiseSchedule::vp(std::vector<double> step_vars) {
  return NoiseSchedule(Framework::kVp, std::move(step_vars));
}

void NoiseSchedule::check_step_index(int t, bool allow_zero) const {
  const int lo = allow_zero ? 0 : 1;
  if (t < lo || t > steps())
    throw std::invalid_argument("step index " + std::to_string(t) +
                                " outside " + std::to_string(lo) + ".." +
                                std::to_string(steps()));
}

double NoiseSchedule::step_var(int t) const {
  check_step_index(t, false);
  return step_vars_[t - 1];
}

double NoiseSchedule::cum_var(int t) const {
  check_step_index(t, true);
  return cum_vars_[t];
}

double NoiseSchedule::cum_alpha(int t) const {
  check_step_index(t, true);
  return cum_alphas_[t];
}

double NoiseSchedule::marginal_scale(int t) const {
  check_step_index(t, true);
  return framework_ == Framework::kVp ? std::sqrt(cum_alphas_[t]) : 1.0;
}

double NoiseSchedule::reverse_mean_factor(int t) const {
  check_step_index(t, false);
  return rev_factors_[t - 1];
}

double NoiseSchedule::prior_var() const {
  return framework_ == Framework::kVp ? 1.0 : cum_vars_[steps()];
}

NoiseSchedule make_quadratic_vp_schedule(int steps, double var_min,
                                         double var_max) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(var_min > 0.0 && var_min < var_max && var_max < 1.0))
    throw std::invalid_argument(
        "quadratic schedule requires 0 < var_min < var_max < 1");
  std::vector<double> vars(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    const double r = double(t) / double(steps);
    vars[t - 1] = var_min + r * r * var_max;
  }
  return NoiseSchedule::vp(std::move(vars));
}

MarginalParams forward_marginal_params(const NoiseSchedule& s, int t) {
  return {s.marginal_scale(t), s.cum_var(t)};
}

ReverseParams reverse_transition_params(const NoiseSchedule& s, int t,
                                        const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& score) {
  if (x.size() != score.size())
    throw std::invalid_argument("x and score dimensions differ");
  const double v = s.step_var(t);
  ReverseParams out;
  out.mean = s.reverse_mean_factor(t) * (x + v * score);
  out.var = v;
  return out;
}

}  // namespace tds
