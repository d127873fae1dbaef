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

#ifndef TDS_SMC_HPP
#define TDS_SMC_HPP

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tds/rng.hpp"
#include "tds/schedule.hpp"
#include "tds/score_model.hpp"
#include "tds/twisting.hpp"

namespace tds {

// The samplers.
//   kTds:         twisted proposals, weighting, conditional resampling.
//   kTdsIs:       kTds with resampling disabled (pure importance sampling).
//   kGuidance:    twisted proposals only; K independent chains, uniform output.
//   kNaiveIs:     unconditional proposals; the only weight is the observation
//                 density at the clean state.
//   kReplacement: unconditional proposals with observed coordinates overwritten
//                 by forward-noised observations; uniform weights.
//   kSmcDiff:     replacement-style proposals with the matching importance
//                 weights and conditional resampling.
enum class Method { kTds, kTdsIs, kGuidance, kNaiveIs, kReplacement, kSmcDiff };

enum class Resampling { kMultinomial, kSystematic };

// Proposal variance: the model step variance, or that variance inflated by a
// constant factor > 1 (diagnostic mode; keeps proposals heavier-tailed than
// the transitions they are weighted against).
enum class ProposalVarMode { kModelVar, kInflated };

std::string to_string(Method m);
std::string to_string(Resampling r);
std::string to_string(ProposalVarMode m);

struct SamplerConfig {
  Method method = Method::kTds;
  int particles = 64;
  Resampling resampling = Resampling::kSystematic;
  // Fraction of K below which resampling fires; 1.0 resamples every step and
  // 0.0 never does.
  double ess_threshold = 1.0;
  ProposalVarMode proposal_var_mode = ProposalVarMode::kModelVar;
  double inflate_factor = 1.0;
  // If > 0, stop the recursion at this step and return the denoised states.
  int truncate_at = 0;
  std::uint64_t seed = 0;
  int workers = 1;
};

// One diagnostics row per transition. ess is the effective sample size of the
// ensemble entering the transition, before the resampling decision it reports.
struct StepTrace {
  int t;  // step the transition produced
  double ess;
  bool resampled;
  double max_abs_log_incr;
};

struct RunResult {
  // K x d final states: x^0, or the denoised states for truncated runs.
  Eigen::MatrixXd states;
  Eigen::VectorXd weights;      // normalized
  Eigen::VectorXd log_weights;  // as accumulated, unnormalized
  std::vector<StepTrace> trace;
  double final_ess = 0.0;
  int resample_count = 0;
  long var_clamp_events = 0;
};

// Effective sample size (sum w)^2 / (sum w^2) of a normalized weight vector.
double ess_from_weights(const Eigen::VectorXd& weights);

// The same quantity computed stably from unnormalized log weights.
// Throws if every weight is zero (or any is non-finite).
double ess_from_log_weights(const Eigen::VectorXd& log_weights);

// exp(lw - logsumexp(lw)); throws on a degenerate ensemble.
Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_weights);

// Systematic resampling at positions (i + u)/K over the cumulative weights;
// ancestor i is the smallest index j whose cumulative weight reaches position
// i (ties give the lower index). Requires u in (0, 1). Ancestor counts are
// floor(K w_j) or ceil(K w_j) and the indices are nondecreasing.
std::vector<int> resample_systematic(const Eigen::VectorXd& weights, int count,
                                     double u);

// count i.i.d. categorical draws by inverse CDF.
std::vector<int> resample_multinomial(const Eigen::VectorXd& weights,
                                      int count, RngStream& rng);

// Everything the particle engine needs from a twisted model: prior draws,
// twist evaluations with the proposal and model drifts, the proposal itself,
// and transition densities. The analytic kernel derives these from the
// closed-form targets; the exact linear-Gaussian kernel substitutes the
// optimal twist and proposal.
class TwistKernel {
 public:
  virtual ~TwistKernel() = default;

  virtual int dim() const = 0;
  virtual int steps() const = 0;

  // Draw x^T from the prior.
  virtual void initial_sample(RngStream& rng, Eigen::VectorXd& out) const = 0;

  // log twist at (x, t) for t >= 1. When non-null, cond_score receives the
  // proposal drift, uncond_score the model drift, and *var_clamped is set if
  // a twist-variance floor clamp fired.
  virtual double evaluate(int t, const Eigen::VectorXd& x,
                          Eigen::VectorXd* cond_score,
                          Eigen::VectorXd* uncond_score,
                          bool* var_clamped) const = 0;

  // log twist at t = 0, evaluated on a clean state.
  virtual double final_twist(const Eigen::VectorXd& x0) const = 0;

  // Sample x^{t-1} given x at step t, with drift_score from evaluate(t, x).
  // Writes the draw and its log proposal density.
  virtual void propose(int t, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& drift_score, RngStream& rng,
                       Eigen::VectorXd& out, double& log_q) const = 0;

  // log p(x_prev | x) for the model transition out of step t, with
  // uncond_score the model drift from evaluate(t, x).
  virtual double transition_logpdf(int t, const Eigen::VectorXd& x_prev,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& uncond_score)
      const = 0;

  // Whether the final transition is an exact constrained draw (observed
  // coordinates written verbatim, zero weight increment).
  virtual bool has_exact_final() const { return false; }
  virtual void exact_final_sample(const Eigen::VectorXd& x1, RngStream& rng,
                                  Eigen::VectorXd& x0) const;

  // E[x^0 | x^t], for truncated runs.
  virtual void denoised(int t, const Eigen::VectorXd& x,
                        Eigen::VectorXd& x_hat) const = 0;
};

// Kernel backed by the analytic targets: scores through the cached denoiser,
// twists from the twisting module, Gaussian reverse-transition proposals.
std::unique_ptr<TwistKernel> make_analytic_twist_kernel(
    AnalyticTarget target, NoiseSchedule schedule, Likelihood lik,
    TwistConfig twist, ProposalVarMode proposal_var_mode =
                           ProposalVarMode::kModelVar,
    double inflate_factor = 1.0);

// Runs kTds / kTdsIs / kGuidance over any kernel. Other methods are rejected
// here; they have no twist to drive.
RunResult run_twisted_sampler(const TwistKernel& kernel,
                              const SamplerConfig& cfg);

// Runs any method on an analytic target. kReplacement and kSmcDiff require a
// single-mask inpainting likelihood.
RunResult run_sampler(const AnalyticTarget& target, const NoiseSchedule& s,
                      const Likelihood& lik, const TwistConfig& twist,
                      const SamplerConfig& cfg);

// sum_k w_k x_k over the rows of states.
Eigen::VectorXd estimate_conditional_mean(const Eigen::MatrixXd& states,
                                          const Eigen::VectorXd& weights);

}  // namespace tds

#endif  // TDS_SMC_HPP
