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

#ifndef TDS_SCORE_MODEL_HPP
#define TDS_SCORE_MODEL_HPP

#include <Eigen/Core>
#include <atomic>
#include <vector>

#include "tds/schedule.hpp"

namespace tds {

// Data distributions with closed-form noisy scores: a full-covariance Gaussian
// or an isotropic Gaussian mixture. Everything downstream (scores, denoisers,
// oracles) is exact for these, which is what makes convergence measurable.
class AnalyticTarget {
 public:
  enum class Kind { kGaussian, kGmm };

  static AnalyticTarget gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);
  static AnalyticTarget gmm(std::vector<double> weights,
                            std::vector<Eigen::VectorXd> means,
                            double component_var);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& component_means() const {
    return comp_means_;
  }
  double component_var() const { return comp_var_; }

  // log q(x^0).
  double log_density(const Eigen::VectorXd& x0) const;
  Eigen::VectorXd population_mean() const;
  // Per-coordinate variance averaged over coordinates; the data-variance
  // plug-in used by the twist variance scaling.
  double population_var() const;

 private:
  AnalyticTarget() = default;

  Kind kind_ = Kind::kGaussian;
  int dim_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> comp_means_;
  double comp_var_ = 0.0;
};

// Denoiser value E[x^0 | x^t] and its Jacobian with respect to x^t.
struct DenoiserOutput {
  Eigen::VectorXd x_hat;
  Eigen::MatrixXd jacobian;
};

namespace detail {

// Quantities of the noisy marginal q(x^t) for one step, shared between the
// one-shot free functions and the cached ScoreModel so there is a single
// authority for the formulas.
struct NoisyStep {
  double scale = 1.0;  // marginal mean scale
  double var = 0.0;    // marginal added variance
  // Gaussian: S = scale^2 cov + var I; x_hat = g x + h; score = -s_inv (x - scaled_mean)
  Eigen::MatrixXd s_inv;
  Eigen::MatrixXd g;
  Eigen::VectorXd h;
  Eigen::VectorXd scaled_mean;
  double log_norm = 0.0;  // normalizer of the marginal density
  // GMM: isotropic per-component variance after noising and the posterior pull
  double s2 = 0.0;
  double a = 0.0;
  std::vector<Eigen::VectorXd> scaled_comp_means;
  std::vector<double> log_weights;
};

NoisyStep make_noisy_step(const AnalyticTarget& target, const NoiseSchedule& s,
                          int t);
void score_eval(const NoisyStep& p, const AnalyticTarget& target,
                const Eigen::VectorXd& x, Eigen::VectorXd& out);
void denoise_eval(const NoisyStep& p, const AnalyticTarget& target,
                  const Eigen::VectorXd& x, DenoiserOutput& out);
double log_density_eval(const NoisyStep& p, const AnalyticTarget& target,
                        const Eigen::VectorXd& x);

}  // namespace detail

// Score of the noisy marginal q(x^t) at x; t in 1..T.
Eigen::VectorXd marginal_score(const AnalyticTarget& target,
                               const NoiseSchedule& s,
                               const Eigen::VectorXd& x, int t);

// log q(x^t) at x; used by tests and ground-truth integrations.
double marginal_log_density(const AnalyticTarget& target,
                            const NoiseSchedule& s, const Eigen::VectorXd& x,
                            int t);

DenoiserOutput denoiser(const AnalyticTarget& target, const NoiseSchedule& s,
                        const Eigen::VectorXd& x, int t);

// t = 0 limit: the state is already clean, so E[x^0 | x^0] = x^0 with an
// identity Jacobian.
DenoiserOutput denoiser_at_zero(const Eigen::VectorXd& x0);

// Per-step cache for one (target, schedule) pair. The samplers query scores
// and denoisers K*T times per run; this keeps those queries cheap. Results
// are identical to the free functions (same evaluation code).
class ScoreModel {
 public:
  ScoreModel(AnalyticTarget target, NoiseSchedule schedule);

  const AnalyticTarget& target() const { return target_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  int dim() const { return target_.dim(); }

  void score_into(int t, const Eigen::VectorXd& x, Eigen::VectorXd& out) const;
  void denoise_into(int t, const Eigen::VectorXd& x, DenoiserOutput& out) const;

  // Denoiser evaluations since construction. The degrees-of-freedom twist must
  // share one evaluation across all masks; tests pin that via this counter.
  long denoiser_calls() const {
    return denoiser_calls_.load(std::memory_order_relaxed);
  }

 private:
  const detail::NoisyStep& step(int t) const;

  AnalyticTarget target_;
  NoiseSchedule schedule_;
  std::vector<detail::NoisyStep> per_step_;  // index t-1
  mutable std::atomic<long> denoiser_calls_{0};
};

}  // namespace tds

#endif  // TDS_SCORE_MODEL_HPP
