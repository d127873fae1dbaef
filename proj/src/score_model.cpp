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

#include "tds/score_model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

namespace tds {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_sum_exp(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

AnalyticTarget AnalyticTarget::gaussian(Eigen::VectorXd mean,
                                        Eigen::MatrixXd cov) {
  if (mean.size() < 1) throw std::invalid_argument("target mean is empty");
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw std::invalid_argument("covariance shape does not match mean");
  if (!cov.isApprox(cov.transpose(), 1e-12))
    throw std::invalid_argument("covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("covariance must be positive definite");
  AnalyticTarget t;
  t.kind_ = Kind::kGaussian;
  t.dim_ = int(mean.size());
  t.mean_ = std::move(mean);
  t.cov_ = std::move(cov);
  return t;
}

AnalyticTarget AnalyticTarget::gmm(std::vector<double> weights,
                                   std::vector<Eigen::VectorXd> means,
                                   double component_var) {
  if (weights.empty() || weights.size() != means.size())
    throw std::invalid_argument("mixture needs matching weights and means");
  if (!(component_var > 0.0))
    throw std::invalid_argument("component variance must be positive");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0))
      throw std::invalid_argument("mixture weights must be strictly positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("mixture weights must sum to 1");
  const Eigen::Index d = means[0].size();
  if (d < 1) throw std::invalid_argument("component mean is empty");
  for (const auto& m : means)
    if (m.size() != d)
      throw std::invalid_argument("component means have mixed dimensions");
  AnalyticTarget t;
  t.kind_ = Kind::kGmm;
  t.dim_ = int(d);
  t.weights_ = std::move(weights);
  t.comp_means_ = std::move(means);
  t.comp_var_ = component_var;
  return t;
}

double AnalyticTarget::log_density(const Eigen::VectorXd& x0) const {
  if (x0.size() != dim_) throw std::invalid_argument("dimension mismatch");
  if (kind_ == Kind::kGaussian) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    const Eigen::VectorXd z = llt.matrixL().solve(x0 - mean_);
    double log_det = 0.0;
    for (int i = 0; i < dim_; ++i)
      log_det += std::log(llt.matrixL()(i, i));
    return -0.5 * z.squaredNorm() - log_det - 0.5 * dim_ * kLog2Pi;
  }
  std::vector<double> terms(weights_.size());
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const double q = (x0 - comp_means_[j]).squaredNorm();
    terms[j] = std::log(weights_[j]) - 0.5 * q / comp_var_ -
               0.5 * dim_ * (kLog2Pi + std::log(comp_var_));
  }
  return log_sum_exp(terms);
}

Eigen::VectorXd AnalyticTarget::population_mean() const {
  if (kind_ == Kind::kGaussian) return mean_;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim_);
  for (std::size_t j = 0; j < weights_.size(); ++j)
    m += weights_[j] * comp_means_[j];
  return m;
}

double AnalyticTarget::population_var() const {
  if (kind_ == Kind::kGaussian) return cov_.trace() / dim_;
  const Eigen::VectorXd m = population_mean();
  double v = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j)
    v += weights_[j] * (comp_var_ * dim_ + (comp_means_[j] - m).squaredNorm());
  return v / dim_;
}

namespace detail {

NoisyStep make_noisy_step(const AnalyticTarget& target, const NoiseSchedule& s,
                          int t) {
  const auto mp = forward_marginal_params(s, t);
  NoisyStep p;
  p.scale = mp.scale;
  p.var = mp.var;
  const int d = target.dim();
  if (target.kind() == AnalyticTarget::Kind::kGaussian) {
    const Eigen::MatrixXd big =
        p.scale * p.scale * target.cov() +
        p.var * Eigen::MatrixXd::Identity(d, d);
    Eigen::LLT<Eigen::MatrixXd> llt(big);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("noisy covariance not positive definite");
    p.s_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    p.g = p.scale * target.cov() * p.s_inv;
    p.scaled_mean = p.scale * target.mean();
    p.h = target.mean() - p.g * p.scaled_mean;
    double log_det = 0.0;
    for (int i = 0; i < d; ++i) log_det += std::log(llt.matrixL()(i, i));
    p.log_norm = -log_det - 0.5 * d * kLog2Pi;
  } else {
    const double v = target.component_var();
    p.s2 = p.scale * p.scale * v + p.var;
    p.a = p.scale * v / p.s2;
    p.scaled_comp_means.reserve(target.weights().size());
    p.log_weights.reserve(target.weights().size());
    for (std::size_t j = 0; j < target.weights().size(); ++j) {
      p.scaled_comp_means.push_back(p.scale * target.component_means()[j]);
      p.log_weights.push_back(std::log(target.weights()[j]));
    }
  }
  return p;
}

// Mixture responsibilities at x, in place. Returns log q(x^t).
static double responsibilities(const NoisyStep& p, const Eigen::VectorXd& x,
                               std::vector<double>& r) {
  const int d = int(x.size());
  const std::size_t J = p.log_weights.size();
  r.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const double q = (x - p.scaled_comp_means[j]).squaredNorm();
    r[j] = p.log_weights[j] - 0.5 * q / p.s2 -
           0.5 * d * (kLog2Pi + std::log(p.s2));
  }
  double m = r[0];
  for (double v : r) m = std::max(m, v);
  double sum = 0.0;
  for (double v : r) sum += std::exp(v - m);
  const double log_q = m + std::log(sum);
  for (double& v : r) v = std::exp(v - log_q);
  return log_q;
}

void score_eval(const NoisyStep& p, const AnalyticTarget& target,
                const Eigen::VectorXd& x, Eigen::VectorXd& out) {
  if (target.kind() == AnalyticTarget::Kind::kGaussian) {
    out.noalias() = -(p.s_inv * (x - p.scaled_mean));
    return;
  }
  thread_local std::vector<double> r;
  responsibilities(p, x, r);
  out.setZero(x.size());
  for (std::size_t j = 0; j < r.size(); ++j)
    out += r[j] * (p.scaled_comp_means[j] - x);
  out /= p.s2;
}

void denoise_eval(const NoisyStep& p, const AnalyticTarget& target,
                  const Eigen::VectorXd& x, DenoiserOutput& out) {
  const int d = int(x.size());
  if (target.kind() == AnalyticTarget::Kind::kGaussian) {
    out.x_hat.noalias() = p.g * x;
    out.x_hat += p.h;
    out.jacobian = p.g;
    return;
  }
  thread_local std::vector<double> r;
  responsibilities(p, x, r);
  out.x_hat.setZero(d);
  out.jacobian.setZero(d, d);
  Eigen::VectorXd g_bar = Eigen::VectorXd::Zero(d);
  thread_local std::vector<Eigen::VectorXd> cs, gs;
  cs.resize(r.size());
  gs.resize(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    gs[j] = (p.scaled_comp_means[j] - x) / p.s2;
    cs[j] = target.component_means()[j] + p.a * (x - p.scaled_comp_means[j]);
    out.x_hat += r[j] * cs[j];
    g_bar += r[j] * gs[j];
  }
  for (std::size_t j = 0; j < r.size(); ++j)
    out.jacobian.noalias() += r[j] * cs[j] * (gs[j] - g_bar).transpose();
  out.jacobian.diagonal().array() += p.a;
}

double log_density_eval(const NoisyStep& p, const AnalyticTarget& target,
                        const Eigen::VectorXd& x) {
  if (target.kind() == AnalyticTarget::Kind::kGaussian) {
    const Eigen::VectorXd c = x - p.scaled_mean;
    return -0.5 * c.dot(p.s_inv * c) + p.log_norm;
  }
  thread_local std::vector<double> r;
  return responsibilities(p, x, r);
}

}  // namespace detail

Eigen::VectorXd marginal_score(const AnalyticTarget& target,
                               const NoiseSchedule& s,
                               const Eigen::VectorXd& x, int t) {
  if (x.size() != target.dim())
    throw std::invalid_argument("dimension mismatch");
  const auto p = detail::make_noisy_step(target, s, t);
  Eigen::VectorXd out(x.size());
  detail::score_eval(p, target, x, out);
  return out;
}

double marginal_log_density(const AnalyticTarget& target,
                            const NoiseSchedule& s, const Eigen::VectorXd& x,
                            int t) {
  if (x.size() != target.dim())
    throw std::invalid_argument("dimension mismatch");
  const auto p = detail::make_noisy_step(target, s, t);
  return detail::log_density_eval(p, target, x);
}

DenoiserOutput denoiser(const AnalyticTarget& target, const NoiseSchedule& s,
                        const Eigen::VectorXd& x, int t) {
  if (x.size() != target.dim())
    throw std::invalid_argument("dimension mismatch");
  const auto p = detail::make_noisy_step(target, s, t);
  DenoiserOutput out;
  detail::denoise_eval(p, target, x, out);
  return out;
}

DenoiserOutput denoiser_at_zero(const Eigen::VectorXd& x0) {
  DenoiserOutput out;
  out.x_hat = x0;
  out.jacobian = Eigen::MatrixXd::Identity(x0.size(), x0.size());
  return out;
}

ScoreModel::ScoreModel(AnalyticTarget target, NoiseSchedule schedule)
    : target_(std::move(target)), schedule_(std::move(schedule)) {
  per_step_.reserve(std::size_t(schedule_.steps()));
  for (int t = 1; t <= schedule_.steps(); ++t)
    per_step_.push_back(detail::make_noisy_step(target_, schedule_, t));
}

const detail::NoisyStep& ScoreModel::step(int t) const {
  if (t < 1 || t > schedule_.steps())
    throw std::invalid_argument("step index outside 1..T");
  return per_step_[std::size_t(t - 1)];
}

void ScoreModel::score_into(int t, const Eigen::VectorXd& x,
                            Eigen::VectorXd& out) const {
  detail::score_eval(step(t), target_, x, out);
}

void ScoreModel::denoise_into(int t, const Eigen::VectorXd& x,
                              DenoiserOutput& out) const {
  denoiser_calls_.fetch_add(1, std::memory_order_relaxed);
  detail::denoise_eval(step(t), target_, x, out);
}

}  // namespace tds
