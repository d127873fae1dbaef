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

#include "tds/linear_gaussian.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tds {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Eigen::MatrixXd pick_rows(const Eigen::MatrixXd& m,
                          const std::vector<int>& rows) {
  Eigen::MatrixXd out(Eigen::Index(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd pick(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(Eigen::Index(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[Eigen::Index(i)] = v[idx[i]];
  return out;
}

Eigen::MatrixXd pick_block(const Eigen::MatrixXd& m,
                           const std::vector<int>& rows,
                           const std::vector<int>& cols) {
  Eigen::MatrixXd out(Eigen::Index(rows.size()), Eigen::Index(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(Eigen::Index(i), Eigen::Index(j)) = m(rows[i], cols[j]);
  return out;
}

double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  double ld = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) ld += 2.0 * std::log(l(i, i));
  return ld;
}

}  // namespace

LinearGaussianChain::LinearGaussianChain(const AnalyticTarget& target,
                                         const NoiseSchedule& s)
    : schedule_(s), dim_(target.dim()) {
  if (target.kind() != AnalyticTarget::Kind::kGaussian)
    throw std::invalid_argument(
        "the linear-Gaussian chain requires a Gaussian target");
  const int T = s.steps();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim_, dim_);

  a_.resize(std::size_t(T));
  b_.resize(std::size_t(T));
  proj_.resize(std::size_t(T) + 1);
  off_.resize(std::size_t(T) + 1);
  cov_.resize(std::size_t(T) + 1);
  proj_[0] = eye;
  off_[0] = Eigen::VectorXd::Zero(dim_);
  cov_[0] = Eigen::MatrixXd::Zero(dim_, dim_);

  for (int t = 1; t <= T; ++t) {
    const double v = s.step_var(t);
    const double f = s.reverse_mean_factor(t);
    const double sc = s.marginal_scale(t);
    // Marginal covariance of x^t and the score it induces: the reverse
    // transition mean f (x + v score) is then the affine map A x + b.
    const Eigen::MatrixXd big = sc * sc * target.cov() + s.cum_var(t) * eye;
    const Eigen::MatrixXd s_inv = Eigen::LLT<Eigen::MatrixXd>(big).solve(eye);
    a_[std::size_t(t - 1)] = f * (eye - v * s_inv);
    b_[std::size_t(t - 1)] = f * v * (s_inv * (sc * target.mean()));

    const Eigen::MatrixXd& p_prev = proj_[std::size_t(t - 1)];
    proj_[std::size_t(t)] = p_prev * a_[std::size_t(t - 1)];
    off_[std::size_t(t)] =
        p_prev * b_[std::size_t(t - 1)] + off_[std::size_t(t - 1)];
    cov_[std::size_t(t)] =
        cov_[std::size_t(t - 1)] + v * (p_prev * p_prev.transpose());
  }
}

const Eigen::MatrixXd& LinearGaussianChain::transition_matrix(int t) const {
  if (t < 1 || t > schedule_.steps())
    throw std::invalid_argument("transition index outside 1..T");
  return a_[std::size_t(t - 1)];
}

const Eigen::VectorXd& LinearGaussianChain::transition_offset(int t) const {
  if (t < 1 || t > schedule_.steps())
    throw std::invalid_argument("transition index outside 1..T");
  return b_[std::size_t(t - 1)];
}

const Eigen::MatrixXd& LinearGaussianChain::proj(int t) const {
  if (t < 0 || t > schedule_.steps())
    throw std::invalid_argument("step index outside 0..T");
  return proj_[std::size_t(t)];
}

const Eigen::VectorXd& LinearGaussianChain::offset(int t) const {
  if (t < 0 || t > schedule_.steps())
    throw std::invalid_argument("step index outside 0..T");
  return off_[std::size_t(t)];
}

const Eigen::MatrixXd& LinearGaussianChain::cov0(int t) const {
  if (t < 0 || t > schedule_.steps())
    throw std::invalid_argument("step index outside 0..T");
  return cov_[std::size_t(t)];
}

double LinearGaussianChain::exact_twist_log(const Likelihood& lik,
                                            const Eigen::VectorXd& x,
                                            int t) const {
  if (lik.kind() != LikelihoodKind::kInpaint)
    throw std::invalid_argument(
        "the exact twist supports single-mask inpainting only");
  if (t < 1 || t > schedule_.steps())
    throw std::invalid_argument("step index outside 1..T");
  const std::vector<int>& mask = lik.masks()[0];
  const Eigen::VectorXd mean = pick(proj(t) * x + offset(t), mask);
  const Eigen::MatrixXd cov = pick_block(cov0(t), mask, mask);
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd r = lik.y() - mean;
  const Eigen::VectorXd sol = llt.solve(r);
  return -0.5 * (double(mask.size()) * kLog2Pi + logdet_from_llt(llt) +
                 r.dot(sol));
}

Eigen::VectorXd LinearGaussianChain::model_marginal_mean() const {
  return off_[std::size_t(schedule_.steps())];
}

Eigen::MatrixXd LinearGaussianChain::model_marginal_cov() const {
  const Eigen::MatrixXd& p = proj_[std::size_t(schedule_.steps())];
  Eigen::MatrixXd v = cov_[std::size_t(schedule_.steps())] +
                      schedule_.prior_var() * (p * p.transpose());
  return 0.5 * (v + v.transpose());
}

Eigen::VectorXd LinearGaussianChain::model_conditional_mean(
    const Likelihood& lik) const {
  if (!lik.is_inpainting())
    throw std::invalid_argument(
        "closed-form conditioning needs an inpainting likelihood");
  lik.validate(dim_);
  const Eigen::VectorXd m = model_marginal_mean();
  const Eigen::MatrixXd v = model_marginal_cov();

  auto slice_mean = [&](const std::vector<int>& mask) {
    const Eigen::MatrixXd vmm = pick_block(v, mask, mask);
    const Eigen::VectorXd gap =
        Eigen::LLT<Eigen::MatrixXd>(vmm).solve(lik.y() - pick(m, mask));
    Eigen::VectorXd out = m;
    for (int i = 0; i < dim_; ++i) {
      double adj = 0.0;
      for (std::size_t j = 0; j < mask.size(); ++j)
        adj += v(i, mask[j]) * gap[Eigen::Index(j)];
      out[i] += adj;
    }
    for (std::size_t j = 0; j < mask.size(); ++j)
      out[mask[j]] = lik.y()[Eigen::Index(j)];
    return out;
  };
  auto slice_logdens = [&](const std::vector<int>& mask) {
    const Eigen::MatrixXd vmm = pick_block(v, mask, mask);
    const Eigen::LLT<Eigen::MatrixXd> llt(vmm);
    const Eigen::VectorXd r = lik.y() - pick(m, mask);
    return -0.5 * (double(mask.size()) * kLog2Pi + logdet_from_llt(llt) +
                   r.dot(llt.solve(r)));
  };

  if (lik.kind() == LikelihoodKind::kInpaint) return slice_mean(lik.masks()[0]);

  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> ld(lik.masks().size());
  for (std::size_t i = 0; i < lik.masks().size(); ++i) {
    ld[i] = slice_logdens(lik.masks()[i]);
    mx = std::max(mx, ld[i]);
  }
  double norm = 0.0;
  for (double l : ld) norm += std::exp(l - mx);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
  for (std::size_t i = 0; i < lik.masks().size(); ++i)
    out += (std::exp(ld[i] - mx) / norm) * slice_mean(lik.masks()[i]);
  return out;
}

ExactInpaintKernel::ExactInpaintKernel(const AnalyticTarget& target,
                                       const NoiseSchedule& s,
                                       const Likelihood& lik)
    : chain_(target, s), lik_(lik) {
  if (lik.kind() != LikelihoodKind::kInpaint)
    throw std::invalid_argument(
        "the exact kernel supports single-mask inpainting only");
  lik.validate(target.dim());
  mask_ = lik.masks()[0];
  y_ = lik.y();
  const int T = s.steps();
  const int d = target.dim();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  twist_.resize(std::size_t(T));
  for (int t = 1; t <= T; ++t) {
    TwistStep& ts = twist_[std::size_t(t - 1)];
    ts.h = pick_rows(chain_.proj(t), mask_);
    ts.c = pick(chain_.offset(t), mask_);
    const Eigen::MatrixXd cov = pick_block(chain_.cov0(t), mask_, mask_);
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    ts.prec = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.rows()));
    ts.log_norm =
        -0.5 * (double(mask_.size()) * kLog2Pi + logdet_from_llt(llt));
  }

  // Posterior transitions out of steps 2..T; the final transition is the
  // exact constrained draw instead.
  post_.resize(std::size_t(T));
  for (int t = 2; t <= T; ++t) {
    PosteriorStep& ps = post_[std::size_t(t - 1)];
    const double v = s.step_var(t);
    const TwistStep& obs = twist_[std::size_t(t - 2)];  // twist at t-1
    const Eigen::MatrixXd lam =
        eye / v + obs.h.transpose() * obs.prec * obs.h;
    const Eigen::LLT<Eigen::MatrixXd> llt_lam(lam);
    const Eigen::MatrixXd cov = llt_lam.solve(eye);
    ps.prec = lam;
    ps.m1 = cov * chain_.transition_matrix(t) / v;
    ps.v1 = cov * (chain_.transition_offset(t) / v +
                   obs.h.transpose() * (obs.prec * (y_ - obs.c)));
    const Eigen::LLT<Eigen::MatrixXd> llt_cov(0.5 * (cov + cov.transpose()));
    ps.chol = llt_cov.matrixL();
    ps.log_norm = -0.5 * (double(d) * kLog2Pi - logdet_from_llt(llt_lam));
  }
}

void ExactInpaintKernel::initial_sample(RngStream& rng,
                                        Eigen::VectorXd& out) const {
  out.resize(dim());
  const double sd = std::sqrt(chain_.schedule().prior_var());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = sd * rng.normal();
}

double ExactInpaintKernel::evaluate(int t, const Eigen::VectorXd& x,
                                    Eigen::VectorXd* cond_score,
                                    Eigen::VectorXd* uncond_score,
                                    bool* var_clamped) const {
  (void)var_clamped;
  // The engine never uses these drifts with this kernel: propose and
  // transition_logpdf work from the chain matrices directly.
  if (cond_score) cond_score->setZero(dim());
  if (uncond_score) uncond_score->setZero(dim());
  const TwistStep& ts = twist_[std::size_t(t - 1)];
  const Eigen::VectorXd r = y_ - (ts.h * x + ts.c);
  return ts.log_norm - 0.5 * r.dot(ts.prec * r);
}

double ExactInpaintKernel::final_twist(const Eigen::VectorXd&) const {
  throw std::logic_error("the exact kernel ends with the constrained draw");
}

void ExactInpaintKernel::propose(int t, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& drift_score,
                                 RngStream& rng, Eigen::VectorXd& out,
                                 double& log_q) const {
  (void)drift_score;
  if (t < 2)
    throw std::logic_error("the exact kernel ends with the constrained draw");
  const PosteriorStep& ps = post_[std::size_t(t - 1)];
  const Eigen::VectorXd mean = ps.m1 * x + ps.v1;
  Eigen::VectorXd z(dim());
  rng.fill_normal(z);
  out = mean + ps.chol * z;
  const Eigen::VectorXd r = out - mean;
  log_q = ps.log_norm - 0.5 * r.dot(ps.prec * r);
}

double ExactInpaintKernel::transition_logpdf(
    int t, const Eigen::VectorXd& x_prev, const Eigen::VectorXd& x,
    const Eigen::VectorXd& uncond_score) const {
  (void)uncond_score;
  const double v = chain_.schedule().step_var(t);
  const Eigen::VectorXd mean =
      chain_.transition_matrix(t) * x + chain_.transition_offset(t);
  const Eigen::VectorXd r = x_prev - mean;
  return -0.5 * (double(dim()) * (kLog2Pi + std::log(v)) + r.squaredNorm() / v);
}

void ExactInpaintKernel::exact_final_sample(const Eigen::VectorXd& x1,
                                            RngStream& rng,
                                            Eigen::VectorXd& x0) const {
  const Eigen::VectorXd mean =
      chain_.transition_matrix(1) * x1 + chain_.transition_offset(1);
  const double sd = std::sqrt(chain_.schedule().step_var(1));
  x0.resize(dim());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const auto it = std::find(mask_.begin(), mask_.end(), int(i));
    if (it != mask_.end())
      x0[i] = y_[Eigen::Index(it - mask_.begin())];
    else
      x0[i] = mean[i] + sd * rng.normal();
  }
}

void ExactInpaintKernel::denoised(int t, const Eigen::VectorXd& x,
                                  Eigen::VectorXd& x_hat) const {
  x_hat = chain_.proj(t) * x + chain_.offset(t);
}

}  // namespace tds
