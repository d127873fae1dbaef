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

#include "tds/twisting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tds {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kVarFloor = 1e-8;

double log_normal1(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * r * r / var;
}

void require_vp(const NoiseSchedule& s, TwistVarianceScheme v) {
  if (s.framework() != Framework::kVp)
    throw std::invalid_argument("twist variance scheme " + to_string(v) +
                                " requires a VP schedule");
}

}  // namespace

std::string to_string(TwistVarianceScheme v) {
  switch (v) {
    case TwistVarianceScheme::kTdsScaling:
      return "tds_scaling";
    case TwistVarianceScheme::kDps:
      return "dps";
    case TwistVarianceScheme::kPigdm:
      return "pigdm";
    case TwistVarianceScheme::kForwardVar:
      return "forward_var";
  }
  return "?";
}

std::string to_string(FinalStepMode m) {
  return m == FinalStepMode::kHeuristic ? "heuristic" : "exact";
}

Likelihood Likelihood::smooth_norm(double y) {
  Likelihood l;
  l.kind_ = LikelihoodKind::kSmoothNorm;
  l.y_scalar_ = y;
  return l;
}

Likelihood Likelihood::inpaint(std::vector<int> mask, Eigen::VectorXd y) {
  if (mask.empty()) throw std::invalid_argument("inpainting mask is empty");
  if (Eigen::Index(mask.size()) != y.size())
    throw std::invalid_argument("observation size does not match mask size");
  Likelihood l;
  l.kind_ = LikelihoodKind::kInpaint;
  l.masks_.push_back(std::move(mask));
  l.y_ = std::move(y);
  return l;
}

Likelihood Likelihood::inpaint_dof(std::vector<std::vector<int>> masks,
                                   Eigen::VectorXd y) {
  if (masks.empty()) throw std::invalid_argument("mask set is empty");
  for (const auto& m : masks) {
    if (m.empty()) throw std::invalid_argument("inpainting mask is empty");
    if (m.size() != masks[0].size())
      throw std::invalid_argument("masks in a set must share a size");
  }
  if (Eigen::Index(masks[0].size()) != y.size())
    throw std::invalid_argument("observation size does not match mask size");
  Likelihood l;
  l.kind_ = LikelihoodKind::kInpaintDof;
  l.masks_ = std::move(masks);
  l.y_ = std::move(y);
  return l;
}

void Likelihood::validate(int dim) const {
  for (const auto& mask : masks_) {
    std::vector<int> seen;
    for (int i : mask) {
      if (i < 0 || i >= dim)
        throw std::invalid_argument("mask index " + std::to_string(i) +
                                    " outside state dimension " +
                                    std::to_string(dim));
      if (std::find(seen.begin(), seen.end(), i) != seen.end())
        throw std::invalid_argument("mask index " + std::to_string(i) +
                                    " repeated");
      seen.push_back(i);
    }
  }
}

double twist_variance(const TwistConfig& cfg, const NoiseSchedule& s, int t,
                      const DenoiserOutput& den, const Likelihood& lik,
                      bool* clamped) {
  if (t < 1) throw std::invalid_argument("twist variance is defined for t >= 1");
  double v = 0.0;
  switch (cfg.variance_scheme) {
    case TwistVarianceScheme::kTdsScaling: {
      require_vp(s, cfg.variance_scheme);
      if (!(cfg.data_var > 0.0))
        throw std::invalid_argument("data_var must be positive");
      const double ab = s.cum_alpha(t);
      const double st2 = (1.0 - ab) / ab;
      v = st2 * cfg.data_var / (st2 + cfg.data_var);
      break;
    }
    case TwistVarianceScheme::kDps: {
      require_vp(s, cfg.variance_scheme);
      // Residual of the best-matching mask; the schemes are single-mask in
      // origin and the dominant mask is what the guidance follows.
      double best = std::numeric_limits<double>::infinity();
      for (const auto& mask : lik.masks()) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < mask.size(); ++i) {
          const double r = den.x_hat[mask[i]] - lik.y()[Eigen::Index(i)];
          r2 += r * r;
        }
        best = std::min(best, r2);
      }
      v = 2.0 * s.step_var(t) * std::sqrt(best);
      break;
    }
    case TwistVarianceScheme::kPigdm: {
      require_vp(s, cfg.variance_scheme);
      v = s.step_var(t) / std::sqrt(s.cum_alpha(t));
      break;
    }
    case TwistVarianceScheme::kForwardVar:
      v = s.cum_var(t);
      break;
  }
  if (v < kVarFloor) {
    v = kVarFloor;
    if (clamped) *clamped = true;
  }
  return v;
}

namespace detail {

double twist_eval(const Likelihood& lik, const TwistConfig& cfg,
                  const DenoiserOutput& den, const NoiseSchedule& s, int t,
                  Eigen::VectorXd* grad, bool* var_clamped) {
  if (!den.x_hat.allFinite())
    throw std::runtime_error("non-finite denoiser output at step " +
                             std::to_string(t));
  const double gamma = cfg.twist_scale;

  if (lik.kind() == LikelihoodKind::kSmoothNorm) {
    const double n = den.x_hat.norm();
    const double r = n - lik.y_scalar();
    if (grad) {
      if (n > 0.0) {
        const double sign = r >= 0.0 ? 1.0 : -1.0;
        grad->noalias() =
            den.jacobian.transpose() * ((-gamma * sign / n) * den.x_hat);
      } else {
        grad->setZero(den.x_hat.size());
      }
    }
    return gamma * (-std::abs(r) - std::log(2.0));
  }

  // Inpainting variants. At t = 0 the state is clean and the observation
  // density collapses onto it; the next transition's variance stands in for
  // the spread so the value stays finite.
  const double var = t == 0
                         ? s.step_var(1)
                         : twist_variance(cfg, s, t, den, lik, var_clamped);
  const auto& masks = lik.masks();
  const std::size_t n_masks = masks.size();
  thread_local std::vector<double> mask_log;
  mask_log.resize(n_masks);
  for (std::size_t m = 0; m < n_masks; ++m) {
    double ll = 0.0;
    for (std::size_t i = 0; i < masks[m].size(); ++i)
      ll += log_normal1(lik.y()[Eigen::Index(i)], den.x_hat[masks[m][i]], var);
    mask_log[m] = ll;
  }

  double value;
  if (lik.kind() == LikelihoodKind::kInpaint) {
    value = mask_log[0];
  } else {
    double mx = mask_log[0];
    for (double v : mask_log) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : mask_log) sum += std::exp(v - mx);
    value = mx + std::log(sum) - std::log(double(n_masks));
  }

  if (grad) {
    Eigen::VectorXd pull = Eigen::VectorXd::Zero(den.x_hat.size());
    if (lik.kind() == LikelihoodKind::kInpaint) {
      const auto& mask = masks[0];
      for (std::size_t i = 0; i < mask.size(); ++i)
        pull[mask[i]] +=
            (lik.y()[Eigen::Index(i)] - den.x_hat[mask[i]]) / var;
    } else {
      // Mask responsibilities weight each mask's pull.
      double mx = mask_log[0];
      for (double v : mask_log) mx = std::max(mx, v);
      double sum = 0.0;
      for (double v : mask_log) sum += std::exp(v - mx);
      for (std::size_t m = 0; m < n_masks; ++m) {
        const double resp = std::exp(mask_log[m] - mx) / sum;
        for (std::size_t i = 0; i < masks[m].size(); ++i)
          pull[masks[m][i]] +=
              resp * (lik.y()[Eigen::Index(i)] - den.x_hat[masks[m][i]]) / var;
      }
    }
    grad->noalias() = den.jacobian.transpose() * (gamma * pull);
  }
  return gamma * value;
}

}  // namespace detail

double twist_log(const Likelihood& lik, const TwistConfig& cfg,
                 const DenoiserOutput& den, const NoiseSchedule& s, int t) {
  return detail::twist_eval(lik, cfg, den, s, t, nullptr, nullptr);
}

Eigen::VectorXd twist_grad(const Likelihood& lik, const TwistConfig& cfg,
                           const AnalyticTarget& target,
                           const NoiseSchedule& s, const Eigen::VectorXd& x,
                           int t) {
  if (t < 1) throw std::invalid_argument("twist gradient is defined for t >= 1");
  lik.validate(target.dim());
  const DenoiserOutput den = denoiser(target, s, x, t);
  Eigen::VectorXd g(x.size());
  detail::twist_eval(lik, cfg, den, s, t, &g, nullptr);
  return g;
}

Eigen::VectorXd conditional_score(const AnalyticTarget& target,
                                  const Likelihood& lik,
                                  const TwistConfig& cfg,
                                  const NoiseSchedule& s,
                                  const Eigen::VectorXd& x, int t) {
  return marginal_score(target, s, x, t) +
         twist_grad(lik, cfg, target, s, x, t);
}

FinalProposal exact_final_proposal(const Likelihood& lik,
                                   const AnalyticTarget& target,
                                   const NoiseSchedule& s,
                                   const Eigen::VectorXd& x1, RngStream& rng) {
  if (!lik.is_inpainting())
    throw std::invalid_argument(
        "exact final step applies to inpainting likelihoods only");
  lik.validate(target.dim());
  const Eigen::VectorXd score = marginal_score(target, s, x1, 1);
  const ReverseParams rev = reverse_transition_params(s, 1, x1, score);

  std::size_t pick = 0;
  const auto& masks = lik.masks();
  if (masks.size() > 1) {
    // Mask responsibilities under the model transition restricted to the
    // observed coordinates.
    std::vector<double> ll(masks.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < masks.size(); ++m) {
      double v = 0.0;
      for (std::size_t i = 0; i < masks[m].size(); ++i) {
        const double r = lik.y()[Eigen::Index(i)] - rev.mean[masks[m][i]];
        v += -0.5 * (kLog2Pi + std::log(rev.var)) - 0.5 * r * r / rev.var;
      }
      ll[m] = v;
      mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (double v : ll) sum += std::exp(v - mx);
    const double u = rng.uniform() * sum;
    double acc = 0.0;
    for (std::size_t m = 0; m < masks.size(); ++m) {
      acc += std::exp(ll[m] - mx);
      if (u < acc || m + 1 == masks.size()) {
        pick = m;
        break;
      }
    }
  }

  const auto& mask = masks[pick];
  FinalProposal out;
  out.x0 = Eigen::VectorXd(x1.size());
  const double sd = std::sqrt(rev.var);
  for (Eigen::Index i = 0; i < x1.size(); ++i) {
    const auto it = std::find(mask.begin(), mask.end(), int(i));
    if (it != mask.end())
      out.x0[i] = lik.y()[Eigen::Index(it - mask.begin())];
    else
      out.x0[i] = rev.mean[i] + sd * rng.normal();
  }
  out.log_weight_increment = 0.0;
  return out;
}

}  // namespace tds
