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

#include "tds/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tds/parallel.hpp"

namespace tds {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_normal1(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * r * r / var;
}

void validate_sampler_config(const SamplerConfig& cfg, int steps) {
  if (cfg.particles < 1)
    throw std::invalid_argument("particle count must be at least 1");
  if (!(cfg.ess_threshold >= 0.0 && cfg.ess_threshold <= 1.0))
    throw std::invalid_argument("ess_threshold must lie in [0, 1]");
  if (cfg.truncate_at < 0 || cfg.truncate_at >= steps)
    throw std::invalid_argument("truncate_at must lie in [0, steps)");
  if (cfg.workers < 1)
    throw std::invalid_argument("workers must be at least 1");
  if (cfg.proposal_var_mode == ProposalVarMode::kInflated &&
      !(cfg.inflate_factor > 1.0))
    throw std::invalid_argument("inflate_factor must exceed 1");
}

void gather(std::vector<Eigen::VectorXd>& v, const std::vector<int>& anc,
            std::vector<Eigen::VectorXd>& scratch) {
  const int n = int(anc.size());
  scratch.resize(n);
  for (int k = 0; k < n; ++k) scratch[k] = v[anc[k]];
  v.swap(scratch);
}

void gather(Eigen::VectorXd& v, const std::vector<int>& anc) {
  Eigen::VectorXd tmp(Eigen::Index(anc.size()));
  for (int k = 0; k < int(anc.size()); ++k) tmp[k] = v[anc[k]];
  v.swap(tmp);
}

bool resample_fires(const SamplerConfig& cfg, double ess) {
  return cfg.ess_threshold >= 1.0 ||
         ess < cfg.ess_threshold * double(cfg.particles);
}

std::vector<int> draw_ancestors(const SamplerConfig& cfg,
                                const Eigen::VectorXd& weights, int step) {
  RngStream r(cfg.seed, stream::kResample, std::uint32_t(step), 0);
  if (cfg.resampling == Resampling::kSystematic) {
    double u = r.uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    return resample_systematic(weights, cfg.particles, u);
  }
  return resample_multinomial(weights, cfg.particles, r);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kTds:
      return "tds";
    case Method::kTdsIs:
      return "tds_is";
    case Method::kGuidance:
      return "guidance";
    case Method::kNaiveIs:
      return "naive_is";
    case Method::kReplacement:
      return "replacement";
    case Method::kSmcDiff:
      return "smc_diff";
  }
  return "?";
}

std::string to_string(Resampling r) {
  return r == Resampling::kMultinomial ? "multinomial" : "systematic";
}

std::string to_string(ProposalVarMode m) {
  return m == ProposalVarMode::kInflated ? "inflated" : "model";
}

double ess_from_weights(const Eigen::VectorXd& weights) {
  if (weights.size() == 0) throw std::invalid_argument("empty weight vector");
  if (!weights.allFinite())
    throw std::runtime_error("non-finite weight in ensemble");
  const double s1 = weights.sum();
  const double s2 = weights.squaredNorm();
  if (!(s1 > 0.0) || !(s2 > 0.0))
    throw std::runtime_error("degenerate ensemble: all weights are zero");
  return s1 * s1 / s2;
}

double ess_from_log_weights(const Eigen::VectorXd& log_weights) {
  const Eigen::Index n = log_weights.size();
  if (n == 0) throw std::invalid_argument("empty weight vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lw = log_weights[k];
    if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity())
      throw std::runtime_error("non-finite log weight in ensemble");
    mx = std::max(mx, lw);
  }
  if (mx == -std::numeric_limits<double>::infinity())
    throw std::runtime_error("degenerate ensemble: all weights are zero");
  double s1 = 0.0, s2 = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double e = std::exp(log_weights[k] - mx);
    s1 += e;
    s2 += e * e;
  }
  return s1 * s1 / s2;
}

Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_weights) {
  const Eigen::Index n = log_weights.size();
  if (n == 0) throw std::invalid_argument("empty weight vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lw = log_weights[k];
    if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity())
      throw std::runtime_error("non-finite log weight in ensemble");
    mx = std::max(mx, lw);
  }
  if (mx == -std::numeric_limits<double>::infinity())
    throw std::runtime_error("degenerate ensemble: all weights are zero");
  Eigen::VectorXd w(n);
  double sum = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    w[k] = std::exp(log_weights[k] - mx);
    sum += w[k];
  }
  w /= sum;
  return w;
}

std::vector<int> resample_systematic(const Eigen::VectorXd& weights, int count,
                                     double u) {
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("systematic resampling draw must lie in (0,1)");
  const Eigen::Index n = weights.size();
  if (n == 0) throw std::invalid_argument("empty weight vector");
  if (count < 1) throw std::invalid_argument("resample count must be positive");
  if (!weights.allFinite() || weights.minCoeff() < 0.0)
    throw std::invalid_argument("weights must be finite and nonnegative");
  const double total = weights.sum();
  if (!(total > 0.0))
    throw std::runtime_error("degenerate ensemble: all weights are zero");

  std::vector<int> anc(count);
  Eigen::Index j = 0;
  double cum = weights[0];
  for (int i = 0; i < count; ++i) {
    const double pos = (double(i) + u) * total / double(count);
    while (cum < pos && j + 1 < n) {
      ++j;
      cum += weights[j];
    }
    anc[i] = int(j);
  }
  return anc;
}

std::vector<int> resample_multinomial(const Eigen::VectorXd& weights,
                                      int count, RngStream& rng) {
  const Eigen::Index n = weights.size();
  if (n == 0) throw std::invalid_argument("empty weight vector");
  if (count < 1) throw std::invalid_argument("resample count must be positive");
  if (!weights.allFinite() || weights.minCoeff() < 0.0)
    throw std::invalid_argument("weights must be finite and nonnegative");
  std::vector<double> cum(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    acc += weights[k];
    cum[std::size_t(k)] = acc;
  }
  if (!(acc > 0.0))
    throw std::runtime_error("degenerate ensemble: all weights are zero");

  std::vector<int> anc(count);
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    anc[i] = int(std::min<std::ptrdiff_t>(it - cum.begin(), n - 1));
  }
  return anc;
}

void TwistKernel::exact_final_sample(const Eigen::VectorXd&, RngStream&,
                                     Eigen::VectorXd&) const {
  throw std::logic_error("kernel has no exact final step");
}

namespace {

// Kernel over the analytic targets. One cached denoiser evaluation per
// (x, t) feeds the score (through the posterior-mean identity), the twist,
// and its gradient.
class AnalyticTwistKernel final : public TwistKernel {
 public:
  AnalyticTwistKernel(AnalyticTarget target, NoiseSchedule schedule,
                      Likelihood lik, TwistConfig twist, ProposalVarMode mode,
                      double inflate)
      : model_(std::move(target), std::move(schedule)),
        lik_(std::move(lik)),
        twist_(twist) {
    lik_.validate(model_.dim());
    if (mode == ProposalVarMode::kInflated && !(inflate > 1.0))
      throw std::invalid_argument("inflate_factor must exceed 1");
    const NoiseSchedule& s = model_.schedule();
    const double f = mode == ProposalVarMode::kInflated ? inflate : 1.0;
    pvar_.resize(std::size_t(s.steps()));
    for (int t = 1; t <= s.steps(); ++t)
      pvar_[std::size_t(t - 1)] = f * s.step_var(t);
  }

  int dim() const override { return model_.dim(); }
  int steps() const override { return model_.schedule().steps(); }

  void initial_sample(RngStream& rng, Eigen::VectorXd& out) const override {
    out.resize(dim());
    const double sd = std::sqrt(model_.schedule().prior_var());
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = sd * rng.normal();
  }

  double evaluate(int t, const Eigen::VectorXd& x, Eigen::VectorXd* cond,
                  Eigen::VectorXd* uncond, bool* var_clamped) const override {
    thread_local DenoiserOutput den;
    model_.denoise_into(t, x, den);
    const NoiseSchedule& s = model_.schedule();
    thread_local Eigen::VectorXd score;
    score = (s.marginal_scale(t) * den.x_hat - x) / s.cum_var(t);
    if (uncond) *uncond = score;
    thread_local Eigen::VectorXd grad;
    Eigen::VectorXd* gptr = nullptr;
    if (cond) {
      grad.resize(x.size());
      gptr = &grad;
    }
    const double tw = detail::twist_eval(lik_, twist_, den, s, t, gptr,
                                         var_clamped);
    if (cond) *cond = score + grad;
    return tw;
  }

  double final_twist(const Eigen::VectorXd& x0) const override {
    return twist_log(lik_, twist_, denoiser_at_zero(x0), model_.schedule(), 0);
  }

  void propose(int t, const Eigen::VectorXd& x,
               const Eigen::VectorXd& drift_score, RngStream& rng,
               Eigen::VectorXd& out, double& log_q) const override {
    const NoiseSchedule& s = model_.schedule();
    const double v = s.step_var(t);
    const double f = s.reverse_mean_factor(t);
    const double pv = pvar_[std::size_t(t - 1)];
    const double sd = std::sqrt(pv);
    out.resize(x.size());
    // The density is evaluated at the realized point rather than through the
    // drawn standard normals, so a proposal that coincides with the model
    // transition cancels against transition_logpdf exactly.
    double lq = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double mean = f * (x[i] + v * drift_score[i]);
      out[i] = mean + sd * rng.normal();
      lq += log_normal1(out[i], mean, pv);
    }
    log_q = lq;
  }

  double transition_logpdf(int t, const Eigen::VectorXd& x_prev,
                           const Eigen::VectorXd& x,
                           const Eigen::VectorXd& uncond_score) const override {
    const NoiseSchedule& s = model_.schedule();
    const double v = s.step_var(t);
    const double f = s.reverse_mean_factor(t);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      lp += log_normal1(x_prev[i], f * (x[i] + v * uncond_score[i]), v);
    return lp;
  }

  bool has_exact_final() const override {
    return lik_.is_inpainting() &&
           twist_.final_step == FinalStepMode::kExact;
  }

  void exact_final_sample(const Eigen::VectorXd& x1, RngStream& rng,
                          Eigen::VectorXd& x0) const override {
    x0 = exact_final_proposal(lik_, model_.target(), model_.schedule(), x1,
                              rng)
             .x0;
  }

  void denoised(int t, const Eigen::VectorXd& x,
                Eigen::VectorXd& x_hat) const override {
    thread_local DenoiserOutput den;
    model_.denoise_into(t, x, den);
    x_hat = den.x_hat;
  }

 private:
  ScoreModel model_;
  Likelihood lik_;
  TwistConfig twist_;
  std::vector<double> pvar_;  // proposal variance, index t-1
};

}  // namespace

std::unique_ptr<TwistKernel> make_analytic_twist_kernel(
    AnalyticTarget target, NoiseSchedule schedule, Likelihood lik,
    TwistConfig twist, ProposalVarMode proposal_var_mode,
    double inflate_factor) {
  return std::make_unique<AnalyticTwistKernel>(
      std::move(target), std::move(schedule), std::move(lik), twist,
      proposal_var_mode, inflate_factor);
}

RunResult run_twisted_sampler(const TwistKernel& kernel,
                              const SamplerConfig& cfg) {
  if (cfg.method != Method::kTds && cfg.method != Method::kTdsIs &&
      cfg.method != Method::kGuidance)
    throw std::invalid_argument(
        "run_twisted_sampler drives tds, tds_is, or guidance only");
  const int T = kernel.steps();
  validate_sampler_config(cfg, T);
  const int d = kernel.dim();
  const int K = cfg.particles;
  const bool resample_enabled = cfg.method == Method::kTds;
  const bool accumulate = cfg.method != Method::kGuidance;

  std::vector<Eigen::VectorXd> x(K), x_new(K), cond(K), cond_new(K),
      uncond(K), uncond_new(K), scratch;
  Eigen::VectorXd tw(K), tw_new(K), incr(K);
  Eigen::VectorXd lw = Eigen::VectorXd::Zero(K);
  std::vector<std::uint8_t> clamp(std::size_t(K), 0);
  long clamp_events = 0;

  parallel_for(0, K, cfg.workers, [&](int k) {
    RngStream r(cfg.seed, stream::kInit, std::uint32_t(T), std::uint32_t(k));
    kernel.initial_sample(r, x[k]);
    bool cl = false;
    tw[k] = kernel.evaluate(T, x[k], &cond[k], &uncond[k], &cl);
    clamp[std::size_t(k)] = cl ? 1 : 0;
  });
  for (int k = 0; k < K; ++k) clamp_events += clamp[std::size_t(k)];
  if (accumulate) {
    for (int k = 0; k < K; ++k) {
      if (!std::isfinite(tw[k]))
        throw std::runtime_error("non-finite initial weight for particle " +
                                 std::to_string(k));
    }
    lw = tw;
  }

  RunResult res;
  res.trace.reserve(std::size_t(T));

  for (int th = T; th > cfg.truncate_at; --th) {
    const int t = th - 1;
    const double step_ess = ess_from_log_weights(lw);
    bool fired = false;
    if (resample_enabled && resample_fires(cfg, step_ess)) {
      fired = true;
      const std::vector<int> anc =
          draw_ancestors(cfg, normalize_log_weights(lw), th);
      gather(x, anc, scratch);
      gather(cond, anc, scratch);
      gather(uncond, anc, scratch);
      gather(tw, anc);
      lw.setZero();
      ++res.resample_count;
    }

    // Guidance runs the guided chain to the end: the constrained final draw
    // belongs to the weighted methods, whose weights account for it.
    const bool exact_final = t == 0 && accumulate && kernel.has_exact_final();
    if (exact_final) {
      parallel_for(0, K, cfg.workers, [&](int k) {
        RngStream r(cfg.seed, stream::kProposal, 0, std::uint32_t(k));
        kernel.exact_final_sample(x[k], r, x_new[k]);
        incr[k] = 0.0;
        clamp[std::size_t(k)] = 0;
      });
    } else {
      parallel_for(0, K, cfg.workers, [&](int k) {
        RngStream r(cfg.seed, stream::kProposal, std::uint32_t(t),
                    std::uint32_t(k));
        double log_q = 0.0;
        kernel.propose(th, x[k], cond[k], r, x_new[k], log_q);
        bool cl = false;
        if (!accumulate) {
          // Guidance: no weights, but the next proposal still needs its drift.
          if (t >= 1)
            (void)kernel.evaluate(t, x_new[k], &cond_new[k], nullptr, &cl);
          incr[k] = 0.0;
        } else {
          const double trans =
              kernel.transition_logpdf(th, x_new[k], x[k], uncond[k]);
          const double tw_t =
              t == 0 ? kernel.final_twist(x_new[k])
                     : kernel.evaluate(t, x_new[k], &cond_new[k],
                                       &uncond_new[k], &cl);
          tw_new[k] = tw_t;
          incr[k] = trans + tw_t - log_q - tw[k];
        }
        clamp[std::size_t(k)] = cl ? 1 : 0;
      });
    }

    double max_abs = 0.0;
    if (accumulate && !exact_final) {
      for (int k = 0; k < K; ++k) {
        if (!std::isfinite(incr[k]))
          throw std::runtime_error("non-finite incremental weight for particle " +
                                   std::to_string(k) + " at step " +
                                   std::to_string(t));
        max_abs = std::max(max_abs, std::abs(incr[k]));
      }
      lw += incr;
    }
    for (int k = 0; k < K; ++k) clamp_events += clamp[std::size_t(k)];
    res.trace.push_back({t, step_ess, fired, max_abs});
    x.swap(x_new);
    cond.swap(cond_new);
    uncond.swap(uncond_new);
    tw.swap(tw_new);
  }

  res.states.resize(K, d);
  if (cfg.truncate_at > 0) {
    parallel_for(0, K, cfg.workers, [&](int k) {
      thread_local Eigen::VectorXd xh;
      kernel.denoised(cfg.truncate_at, x[k], xh);
      res.states.row(k) = xh.transpose();
    });
  } else {
    for (int k = 0; k < K; ++k) res.states.row(k) = x[k].transpose();
  }
  res.log_weights = lw;
  res.weights = normalize_log_weights(lw);
  res.final_ess = ess_from_weights(res.weights);
  res.var_clamp_events = clamp_events;
  return res;
}

namespace {

// naive importance sampling, replacement, and the weighted replacement
// sampler: unconditional proposals with the method's own weighting.
RunResult run_baseline(const AnalyticTarget& target, const NoiseSchedule& s,
                       const Likelihood& lik, const TwistConfig& twist,
                       const SamplerConfig& cfg) {
  const int T = s.steps();
  validate_sampler_config(cfg, T);
  const int d = target.dim();
  const int K = cfg.particles;
  const bool is_naive = cfg.method == Method::kNaiveIs;
  const bool is_smcdiff = cfg.method == Method::kSmcDiff;
  const bool overwrites = cfg.method == Method::kReplacement || is_smcdiff;
  lik.validate(d);
  if (overwrites && lik.kind() != LikelihoodKind::kInpaint)
    throw std::invalid_argument(to_string(cfg.method) +
                                " requires a single-mask inpainting likelihood");
  std::vector<int> mask;
  Eigen::VectorXd y;
  if (overwrites) {
    mask = lik.masks()[0];
    y = lik.y();
  }

  // SMC_DIFF conditions every particle on one forward noising of the
  // observation, drawn once per run as a trajectory of the forward chain.
  // Each state of the path keeps the marginal law q(x^t_M | x^0_M = y) that
  // the weight denominators evaluate, but consecutive states stay coherent,
  // so the per-step weight spread comes from the particles rather than from
  // fresh observation noise. Redrawing the observation independently at each
  // step is also unbiased, yet its weight variance grows like
  // cum_var/step_var per step and the filter stops improving with K at
  // practical particle counts.
  std::vector<Eigen::VectorXd> obs_path;
  if (is_smcdiff) {
    RngStream r(cfg.seed, stream::kObservationPath, 0, 0);
    obs_path.resize(std::size_t(T) + 1);
    obs_path[0] = y;
    for (int th = 1; th <= T; ++th) {
      const double ratio = s.marginal_scale(th) / s.marginal_scale(th - 1);
      const double sd = std::sqrt(s.step_var(th));
      auto& state = obs_path[std::size_t(th)];
      state.resize(y.size());
      for (Eigen::Index i = 0; i < y.size(); ++i)
        state[i] = ratio * obs_path[std::size_t(th) - 1][i] + sd * r.normal();
    }
  }

  ScoreModel model(target, s);
  std::vector<Eigen::VectorXd> x(K), x_new(K), scratch;
  Eigen::VectorXd incr(K);
  Eigen::VectorXd lw = Eigen::VectorXd::Zero(K);

  const double prior_sd = std::sqrt(s.prior_var());
  parallel_for(0, K, cfg.workers, [&](int k) {
    RngStream r(cfg.seed, stream::kInit, std::uint32_t(T), std::uint32_t(k));
    x[k].resize(d);
    for (int i = 0; i < d; ++i) x[k][i] = prior_sd * r.normal();
    if (is_smcdiff) {
      for (std::size_t i = 0; i < mask.size(); ++i)
        x[k][mask[i]] = obs_path[std::size_t(T)][Eigen::Index(i)];
    } else if (overwrites) {
      const double sc = s.marginal_scale(T);
      const double sd = std::sqrt(s.cum_var(T));
      for (std::size_t i = 0; i < mask.size(); ++i)
        x[k][mask[i]] = sc * y[Eigen::Index(i)] + sd * r.normal();
    }
  });
  if (is_smcdiff) {
    // Initial weight p(x^T_M) / q(x^T_M | y). Shared by all particles, so it
    // cancels in normalization; kept so the accumulated weights follow the
    // stated formula.
    const double sc = s.marginal_scale(T);
    double w0 = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double xi = obs_path[std::size_t(T)][Eigen::Index(i)];
      w0 += log_normal1(xi, 0.0, s.prior_var()) -
            log_normal1(xi, sc * y[Eigen::Index(i)], s.cum_var(T));
    }
    lw.setConstant(w0);
  }

  RunResult res;
  res.trace.reserve(std::size_t(T));

  for (int th = T; th > cfg.truncate_at; --th) {
    const int t = th - 1;
    const double step_ess = ess_from_log_weights(lw);
    bool fired = false;
    if (is_smcdiff && resample_fires(cfg, step_ess)) {
      fired = true;
      const std::vector<int> anc =
          draw_ancestors(cfg, normalize_log_weights(lw), th);
      gather(x, anc, scratch);
      lw.setZero();
      ++res.resample_count;
    }

    const double v = s.step_var(th);
    const double f = s.reverse_mean_factor(th);
    const double sd = std::sqrt(v);
    parallel_for(0, K, cfg.workers, [&](int k) {
      RngStream r(cfg.seed, stream::kProposal, std::uint32_t(t),
                  std::uint32_t(k));
      thread_local Eigen::VectorXd score, mean;
      model.score_into(th, x[k], score);
      mean = f * (x[k] + v * score);
      x_new[k].resize(d);
      for (int i = 0; i < d; ++i) x_new[k][i] = mean[i] + sd * r.normal();
      double inc = 0.0;
      if (overwrites) {
        if (t > 0) {
          const double sc = s.marginal_scale(t);
          const double cv = s.cum_var(t);
          const double csd = std::sqrt(cv);
          for (std::size_t i = 0; i < mask.size(); ++i) {
            const double yi = y[Eigen::Index(i)];
            if (is_smcdiff) {
              const double xi = obs_path[std::size_t(t)][Eigen::Index(i)];
              x_new[k][mask[i]] = xi;
              inc += log_normal1(xi, mean[mask[i]], v) -
                     log_normal1(xi, sc * yi, cv);
            } else {
              x_new[k][mask[i]] = sc * yi + csd * r.normal();
            }
          }
        } else {
          for (std::size_t i = 0; i < mask.size(); ++i) {
            const double yi = y[Eigen::Index(i)];
            x_new[k][mask[i]] = yi;
            if (is_smcdiff) inc += log_normal1(yi, mean[mask[i]], v);
          }
        }
      } else if (is_naive && t == 0) {
        inc = twist_log(lik, twist, denoiser_at_zero(x_new[k]), s, 0);
      }
      incr[k] = inc;
    });

    double max_abs = 0.0;
    for (int k = 0; k < K; ++k) {
      if (!std::isfinite(incr[k]))
        throw std::runtime_error("non-finite incremental weight for particle " +
                                 std::to_string(k) + " at step " +
                                 std::to_string(t));
      max_abs = std::max(max_abs, std::abs(incr[k]));
    }
    lw += incr;
    res.trace.push_back({t, step_ess, fired, max_abs});
    x.swap(x_new);
  }

  res.states.resize(K, d);
  if (cfg.truncate_at > 0) {
    parallel_for(0, K, cfg.workers, [&](int k) {
      thread_local DenoiserOutput den;
      model.denoise_into(cfg.truncate_at, x[k], den);
      res.states.row(k) = den.x_hat.transpose();
    });
  } else {
    for (int k = 0; k < K; ++k) res.states.row(k) = x[k].transpose();
  }
  res.log_weights = lw;
  res.weights = normalize_log_weights(lw);
  res.final_ess = ess_from_weights(res.weights);
  return res;
}

}  // namespace

RunResult run_sampler(const AnalyticTarget& target, const NoiseSchedule& s,
                      const Likelihood& lik, const TwistConfig& twist,
                      const SamplerConfig& cfg) {
  switch (cfg.method) {
    case Method::kTds:
    case Method::kTdsIs:
    case Method::kGuidance: {
      const auto kernel = make_analytic_twist_kernel(
          target, s, lik, twist, cfg.proposal_var_mode, cfg.inflate_factor);
      return run_twisted_sampler(*kernel, cfg);
    }
    case Method::kNaiveIs:
    case Method::kReplacement:
    case Method::kSmcDiff:
      return run_baseline(target, s, lik, twist, cfg);
  }
  throw std::invalid_argument("unknown sampling method");
}

Eigen::VectorXd estimate_conditional_mean(const Eigen::MatrixXd& states,
                                          const Eigen::VectorXd& weights) {
  if (states.rows() != weights.size())
    throw std::invalid_argument("states and weights disagree on K");
  return states.transpose() * weights;
}

}  // namespace tds
