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

#ifndef TDS_LINEAR_GAUSSIAN_HPP
#define TDS_LINEAR_GAUSSIAN_HPP

#include <Eigen/Core>
#include <vector>

#include "tds/schedule.hpp"
#include "tds/score_model.hpp"
#include "tds/smc.hpp"
#include "tds/twisting.hpp"

namespace tds {

// For a Gaussian target the reverse chain is linear-Gaussian: every reverse
// transition has mean A_t x + b_t and isotropic variance, so the conditional
// of the clean state given any intermediate one is available in closed form,
//
//   x^0 | x^t  ~  Normal(P_t x^t + r_t, C_t),
//
// by composing the transitions. This is the ground truth the exact-twisting
// kernel and several oracle-grade tests are built on.
class LinearGaussianChain {
 public:
  LinearGaussianChain(const AnalyticTarget& target, const NoiseSchedule& s);

  const NoiseSchedule& schedule() const { return schedule_; }
  int dim() const { return dim_; }

  // Reverse transition out of step t: mean A_t x + b_t, variance step_var(t).
  const Eigen::MatrixXd& transition_matrix(int t) const;
  const Eigen::VectorXd& transition_offset(int t) const;

  // The composed conditional x^0 | x^t for t in 0..T.
  const Eigen::MatrixXd& proj(int t) const;
  const Eigen::VectorXd& offset(int t) const;
  const Eigen::MatrixXd& cov0(int t) const;

  // log p(y | x^t) for a single-mask inpainting likelihood: the normal density
  // of y under the masked rows of the composed conditional. t in 1..T.
  double exact_twist_log(const Likelihood& lik, const Eigen::VectorXd& x,
                         int t) const;

  // Mean and covariance of the chain's own clean-state marginal (prior pushed
  // through the composed conditional). The gap to the target quantifies the
  // discretization bias of the T-step chain.
  Eigen::VectorXd model_marginal_mean() const;
  Eigen::MatrixXd model_marginal_cov() const;

  // E[x^0 | observed coords = y] under the chain (not the target), for
  // bias-floor measurements against sampler output.
  Eigen::VectorXd model_conditional_mean(const Likelihood& lik) const;

 private:
  NoiseSchedule schedule_;
  int dim_;
  std::vector<Eigen::MatrixXd> a_;     // index t-1
  std::vector<Eigen::VectorXd> b_;     // index t-1
  std::vector<Eigen::MatrixXd> proj_;  // index t
  std::vector<Eigen::VectorXd> off_;   // index t
  std::vector<Eigen::MatrixXd> cov_;   // index t
};

// Kernel with the optimal twist substituted: the twist is the exact
// p(y | x^t) above and the proposal is the exact posterior transition
// p(x^{t-1} | x^t, y), so every weight increment cancels analytically.
// Single-mask inpainting on a Gaussian target only.
class ExactInpaintKernel final : public TwistKernel {
 public:
  ExactInpaintKernel(const AnalyticTarget& target, const NoiseSchedule& s,
                     const Likelihood& lik);

  int dim() const override { return chain_.dim(); }
  int steps() const override { return chain_.schedule().steps(); }

  void initial_sample(RngStream& rng, Eigen::VectorXd& out) const override;
  double evaluate(int t, const Eigen::VectorXd& x, Eigen::VectorXd* cond_score,
                  Eigen::VectorXd* uncond_score,
                  bool* var_clamped) const override;
  double final_twist(const Eigen::VectorXd& x0) const override;
  void propose(int t, const Eigen::VectorXd& x,
               const Eigen::VectorXd& drift_score, RngStream& rng,
               Eigen::VectorXd& out, double& log_q) const override;
  double transition_logpdf(int t, const Eigen::VectorXd& x_prev,
                           const Eigen::VectorXd& x,
                           const Eigen::VectorXd& uncond_score) const override;
  bool has_exact_final() const override { return true; }
  void exact_final_sample(const Eigen::VectorXd& x1, RngStream& rng,
                          Eigen::VectorXd& x0) const override;
  void denoised(int t, const Eigen::VectorXd& x,
                Eigen::VectorXd& x_hat) const override;

 private:
  // Per-step pieces of the posterior transition out of step t (index t-1):
  // mean = M1 x + v1, covariance cov with Cholesky factor chol and
  // log-normalizer log_norm; precision prec for density evaluation.
  struct PosteriorStep {
    Eigen::MatrixXd m1;
    Eigen::VectorXd v1;
    Eigen::MatrixXd chol;
    Eigen::MatrixXd prec;
    double log_norm;
  };
  // Per-step pieces of the exact twist at step t (index t-1): the masked rows
  // of the composed conditional with the covariance factorized.
  struct TwistStep {
    Eigen::MatrixXd h;
    Eigen::VectorXd c;
    Eigen::MatrixXd prec;
    double log_norm;
  };

  LinearGaussianChain chain_;
  Likelihood lik_;
  Eigen::VectorXd y_;
  std::vector<int> mask_;
  std::vector<PosteriorStep> post_;
  std::vector<TwistStep> twist_;
};

}  // namespace tds

#endif  // TDS_LINEAR_GAUSSIAN_HPP
