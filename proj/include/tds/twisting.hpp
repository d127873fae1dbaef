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

#ifndef TDS_TWISTING_HPP
#define TDS_TWISTING_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

#include "tds/rng.hpp"
#include "tds/schedule.hpp"
#include "tds/score_model.hpp"

namespace tds {

// Observation models p(y | x^0) used for conditional sampling.
//   kSmoothNorm:  Laplace density on the Euclidean norm, exp(-|‖x‖ - y|)/2.
//   kInpaint:     y equals x^0 on a fixed coordinate mask (delta likelihood).
//   kInpaintDof:  as kInpaint, but the mask is one of a finite set, uniformly
//                 a priori ("degrees of freedom" over where the observation
//                 sits). All masks share the observed values y.
enum class LikelihoodKind { kSmoothNorm, kInpaint, kInpaintDof };

class Likelihood {
 public:
  static Likelihood smooth_norm(double y);
  static Likelihood inpaint(std::vector<int> mask, Eigen::VectorXd y);
  static Likelihood inpaint_dof(std::vector<std::vector<int>> masks,
                                Eigen::VectorXd y);

  LikelihoodKind kind() const { return kind_; }
  double y_scalar() const { return y_scalar_; }
  const Eigen::VectorXd& y() const { return y_; }
  // One entry for kInpaint, several for kInpaintDof.
  const std::vector<std::vector<int>>& masks() const { return masks_; }
  bool is_inpainting() const { return kind_ != LikelihoodKind::kSmoothNorm; }

  // Checks mask indices against the state dimension.
  void validate(int dim) const;

 private:
  Likelihood() = default;
  LikelihoodKind kind_ = LikelihoodKind::kSmoothNorm;
  double y_scalar_ = 0.0;
  Eigen::VectorXd y_;
  std::vector<std::vector<int>> masks_;
};

// How the twist variance (the spread given to the denoiser-based observation
// density at intermediate steps) is chosen for inpainting likelihoods.
enum class TwistVarianceScheme { kTdsScaling, kDps, kPigdm, kForwardVar };

// What happens at the final transition for inpainting: kHeuristic keeps the
// ordinary proposal and scores the observation with a narrow normal; kExact
// writes y into the observed coordinates and samples only the rest, with a
// zero weight increment.
enum class FinalStepMode { kHeuristic, kExact };

std::string to_string(TwistVarianceScheme v);
std::string to_string(FinalStepMode m);

struct TwistConfig {
  // Exponent gamma on the twist (and on the likelihood in the target).
  double twist_scale = 1.0;
  TwistVarianceScheme variance_scheme = TwistVarianceScheme::kTdsScaling;
  // tau^2 for kTdsScaling: the population variance of the data.
  double data_var = 0.12;
  FinalStepMode final_step = FinalStepMode::kExact;
};

// Twist variance at step t >= 1 (inpainting only). den is the denoiser output
// at (x, t); only the kDps scheme reads it. Values below 1e-8 are clamped to
// that floor and *clamped is set when provided.
double twist_variance(const TwistConfig& cfg, const NoiseSchedule& s, int t,
                      const DenoiserOutput& den, const Likelihood& lik,
                      bool* clamped = nullptr);

// log twist value at (x, t) given the denoiser output there; t = 0 callers
// pass denoiser_at_zero(x). For inpainting at t = 0 the heuristic variance is
// the final step variance sigma_1^2, making the twist a narrow observation
// density around the clean state.
double twist_log(const Likelihood& lik, const TwistConfig& cfg,
                 const DenoiserOutput& den, const NoiseSchedule& s, int t);

// Gradient of twist_log with respect to x, through the denoiser Jacobian;
// t >= 1. The kDps variance is treated as locally constant (its residual
// factor is a step size, not a density parameter).
Eigen::VectorXd twist_grad(const Likelihood& lik, const TwistConfig& cfg,
                           const AnalyticTarget& target,
                           const NoiseSchedule& s, const Eigen::VectorXd& x,
                           int t);

// marginal_score + twist_grad: the drift used by twisted proposals.
Eigen::VectorXd conditional_score(const AnalyticTarget& target,
                                  const Likelihood& lik,
                                  const TwistConfig& cfg,
                                  const NoiseSchedule& s,
                                  const Eigen::VectorXd& x, int t);

struct FinalProposal {
  Eigen::VectorXd x0;
  double log_weight_increment;  // always 0 for the exact step
};

// Exact final transition for inpainting likelihoods: the observed coordinates
// are set to y (for the degrees-of-freedom case the mask is drawn from the
// model transition's responsibilities) and the rest is sampled from the
// unconditional transition out of x^1.
FinalProposal exact_final_proposal(const Likelihood& lik,
                                   const AnalyticTarget& target,
                                   const NoiseSchedule& s,
                                   const Eigen::VectorXd& x1, RngStream& rng);

namespace detail {

// Shared twist evaluation given a precomputed denoiser output. Computes the
// log twist and, when grad is non-null, its gradient through den.jacobian.
// This is the single authority the free functions and the samplers both use;
// it performs no denoiser evaluations of its own, which is what keeps the
// degrees-of-freedom likelihood at one shared evaluation across masks.
double twist_eval(const Likelihood& lik, const TwistConfig& cfg,
                  const DenoiserOutput& den, const NoiseSchedule& s, int t,
                  Eigen::VectorXd* grad, bool* var_clamped);

}  // namespace detail

}  // namespace tds

#endif  // TDS_TWISTING_HPP
