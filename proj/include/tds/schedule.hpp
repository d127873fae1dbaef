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

#ifndef TDS_SCHEDULE_HPP
#define TDS_SCHEDULE_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

namespace tds {

// Forward noising conventions.
//   VE:  x^t = x^{t-1} + N(0, sigma_t^2), so Var[x^t | x^0] = sum of step vars.
//   VP:  x^t = sqrt(1 - sigma_t^2) x^{t-1} + N(0, sigma_t^2), which keeps unit
//        variance data at unit variance and ends near N(0, I).
// kVeConst is VE with one shared step variance; it exists because several
// closed forms (t * sigma^2) are stated for it and tests pin them.
enum class Framework { kVeConst, kVeGeneral, kVp };

std::string to_string(Framework f);

// Parameters of the forward marginal q(x^t | x^0) = N(scale * x^0, var * I).
struct MarginalParams {
  double scale;
  double var;
};

// Parameters of one reverse transition p(x^{t-1} | x^t) given the score at
// (x^t, t): a normal with isotropic variance.
struct ReverseParams {
  Eigen::VectorXd mean;
  double var;
};

// Noising schedule over steps t = 1..T, with every cumulative quantity
// computed once at construction. States are indexed x^0 (data) .. x^T (prior);
// step_var(t) governs the x^{t-1} -> x^t transition.
class NoiseSchedule {
 public:
  static NoiseSchedule ve_const(int steps, double step_var);
  static NoiseSchedule ve_general(std::vector<double> step_vars);
  static NoiseSchedule vp(std::vector<double> step_vars);

  Framework framework() const { return framework_; }
  int steps() const { return int(step_vars_.size()); }

  // sigma_t^2; t in 1..T.
  double step_var(int t) const;
  // Var[x^t | x^0]; 0 at t = 0. VE: running sum; VP: 1 - cum_alpha(t).
  double cum_var(int t) const;
  // Product of (1 - sigma_s^2) for s <= t; defined as 1 for VE frameworks and
  // at t = 0.
  double cum_alpha(int t) const;
  // Mean scale of q(x^t | x^0): VP sqrt(cum_alpha), VE 1.
  double marginal_scale(int t) const;
  // Scale applied to the ancestral mean x + sigma_t^2 * score when stepping
  // from t to t-1: VP 1/sqrt(alpha_t), VE 1.
  double reverse_mean_factor(int t) const;
  // Variance of the prior p(x^T): VP 1, VE cum_var(T).
  double prior_var() const;

 private:
  NoiseSchedule(Framework f, std::vector<double> step_vars);
  void check_step_index(int t, bool allow_zero) const;

  Framework framework_;
  std::vector<double> step_vars_;    // sigma_t^2, index t-1
  std::vector<double> cum_vars_;     // index t, size T+1
  std::vector<double> cum_alphas_;   // index t, size T+1 (all 1 for VE)
  std::vector<double> rev_factors_;  // index t-1
};

// The schedule used throughout the synthetic experiments:
// sigma_t^2 = var_min + (t/T)^2 * var_max on a VP schedule.
NoiseSchedule make_quadratic_vp_schedule(int steps, double var_min,
                                         double var_max);

MarginalParams forward_marginal_params(const NoiseSchedule& s, int t);

// Distribution of x^{t-1} given x^t and the score evaluated at (x^t, t).
ReverseParams reverse_transition_params(const NoiseSchedule& s, int t,
                                        const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& score);

}  // namespace tds

#endif  // TDS_SCHEDULE_HPP
