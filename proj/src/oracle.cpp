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

#include "tds/oracle.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "tds/parallel.hpp"
#include "tds/rng.hpp"

namespace tds {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double log_normal1(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - r * r / (2.0 * var);
}

struct Slice {
  double log_marginal = 0.0;     // log density of the observed coordinates
  Eigen::VectorXd cond_mean;     // full-dimensional conditional mean
};

Slice gaussian_slice(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                     const std::vector<int>& mask, const Eigen::VectorXd& y) {
  const int m = static_cast<int>(mask.size());
  Eigen::MatrixXd smm(m, m);
  Eigen::VectorXd r(m);
  for (int a = 0; a < m; ++a) {
    r[a] = y[a] - mean[mask[a]];
    for (int b = 0; b < m; ++b) smm(a, b) = cov(mask[a], mask[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(smm);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("observed-coordinate covariance is not positive definite");
  }
  double logdet = 0.0;
  for (int a = 0; a < m; ++a) logdet += 2.0 * std::log(llt.matrixLLT()(a, a));
  const Eigen::VectorXd w = llt.solve(r);

  Slice out;
  out.log_marginal = -0.5 * (m * kLog2Pi + logdet + r.dot(w));
  out.cond_mean = mean;
  for (int j = 0; j < mean.size(); ++j) {
    for (int a = 0; a < m; ++a) out.cond_mean[j] += cov(j, mask[a]) * w[a];
  }
  for (int a = 0; a < m; ++a) out.cond_mean[mask[a]] = y[a];
  return out;
}

Slice gmm_slice(const AnalyticTarget& target, const std::vector<int>& mask,
                const Eigen::VectorXd& y) {
  const auto& weights = target.weights();
  const auto& means = target.component_means();
  const double var = target.component_var();
  const int n = static_cast<int>(weights.size());

  std::vector<double> ll(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    double s = std::log(weights[j]);
    for (std::size_t a = 0; a < mask.size(); ++a) {
      s += log_normal1(y[static_cast<int>(a)], means[j][mask[a]], var);
    }
    ll[j] = s;
    mx = std::max(mx, s);
  }
  double total = 0.0;
  for (int j = 0; j < n; ++j) total += std::exp(ll[j] - mx);

  Slice out;
  out.log_marginal = mx + std::log(total);
  out.cond_mean = Eigen::VectorXd::Zero(target.dim());
  for (int j = 0; j < n; ++j) {
    // Components are isotropic, so conditioning leaves the unobserved
    // coordinates at the component mean.
    out.cond_mean += (std::exp(ll[j] - mx) / total) * means[j];
  }
  for (std::size_t a = 0; a < mask.size(); ++a) {
    out.cond_mean[mask[a]] = y[static_cast<int>(a)];
  }
  return out;
}

Slice target_slice(const AnalyticTarget& target, const std::vector<int>& mask,
                   const Eigen::VectorXd& y) {
  if (target.kind() == AnalyticTarget::Kind::kGaussian) {
    return gaussian_slice(target.mean(), target.cov(), mask, y);
  }
  return gmm_slice(target, mask, y);
}

// Mean and total mass of x * q(x) * exp(gamma * loglik(x)) on a trapezoid
// grid; used twice so the domain check can compare against an enlarged grid.
struct GridIntegral {
  double mass = 0.0;
  Eigen::Vector2d moment = Eigen::Vector2d::Zero();
};

GridIntegral integrate_smooth(const AnalyticTarget& target, double y,
                              double gamma, double lo, double hi, int n) {
  const double h = (hi - lo) / (n - 1);
  GridIntegral out;
  Eigen::VectorXd p(2);
  for (int i = 0; i < n; ++i) {
    const double wi = (i == 0 || i == n - 1) ? 0.5 * h : h;
    p[0] = lo + i * h;
    for (int j = 0; j < n; ++j) {
      const double wj = (j == 0 || j == n - 1) ? 0.5 * h : h;
      p[1] = lo + j * h;
      const double loglik = -std::abs(p.norm() - y) - std::log(2.0);
      const double f = std::exp(target.log_density(p) + gamma * loglik);
      const double w = wi * wj * f;
      out.mass += w;
      out.moment += w * p;
    }
  }
  return out;
}

Eigen::VectorXd smooth_norm_oracle(const AnalyticTarget& target, double y,
                                   double gamma, const GridSpec& grid) {
  if (target.dim() != 2) {
    throw std::invalid_argument("the smooth-norm oracle integrates 2-d targets only");
  }
  if (grid.points_per_dim < 8) {
    throw std::invalid_argument("oracle grid needs at least 8 points per dimension");
  }
  if (!(grid.hi > grid.lo)) {
    throw std::invalid_argument("oracle grid bounds must satisfy lo < hi");
  }
  const GridIntegral main =
      integrate_smooth(target, y, gamma, grid.lo, grid.hi, grid.points_per_dim);

  // Redo the integral on a grid enlarged 1.5x about the same center; if the
  // requested window misses visible mass the result cannot be trusted.
  const double c = 0.5 * (grid.lo + grid.hi);
  const double half = 0.5 * (grid.hi - grid.lo) * 1.5;
  const GridIntegral ref = integrate_smooth(target, y, gamma, c - half,
                                            c + half, grid.points_per_dim);
  if (!(main.mass > 0.0) ||
      main.mass < (1.0 - 1e-6) * ref.mass) {
    std::ostringstream msg;
    msg << "oracle grid too small: it captures " << main.mass << " of "
        << ref.mass << " reference mass; widen [lo, hi]";
    throw std::runtime_error(msg.str());
  }
  return main.moment / main.mass;
}

}  // namespace

Eigen::VectorXd conditional_mean_oracle(const AnalyticTarget& target,
                                        const Likelihood& lik, double gamma,
                                        const GridSpec& grid) {
  lik.validate(target.dim());
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("oracle tilt exponent must be finite and >= 0");
  }
  switch (lik.kind()) {
    case LikelihoodKind::kSmoothNorm:
      return smooth_norm_oracle(target, lik.y_scalar(), gamma, grid);
    case LikelihoodKind::kInpaint:
      // Delta observations: the tilt exponent does not move the posterior.
      return target_slice(target, lik.masks()[0], lik.y()).cond_mean;
    case LikelihoodKind::kInpaintDof: {
      const auto& masks = lik.masks();
      std::vector<Slice> slices;
      slices.reserve(masks.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (const auto& mask : masks) {
        slices.push_back(target_slice(target, mask, lik.y()));
        mx = std::max(mx, slices.back().log_marginal);
      }
      double total = 0.0;
      for (const auto& s : slices) total += std::exp(s.log_marginal - mx);
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(target.dim());
      for (const auto& s : slices) {
        mean += (std::exp(s.log_marginal - mx) / total) * s.cond_mean;
      }
      return mean;
    }
  }
  throw std::logic_error("unreachable likelihood kind");
}

double estimation_error(const Eigen::VectorXd& estimate,
                        const Eigen::VectorXd& oracle_mean) {
  if (estimate.size() != oracle_mean.size()) {
    throw std::invalid_argument("estimate and oracle mean dimensions differ");
  }
  return (estimate - oracle_mean).norm();
}

double fit_loglog_slope(const std::vector<double>& ks,
                        const std::vector<double>& values) {
  if (ks.size() != values.size()) {
    throw std::invalid_argument("slope fit needs one value per particle count");
  }
  std::set<double> distinct(ks.begin(), ks.end());
  if (distinct.size() < 3) {
    throw std::invalid_argument("slope fit needs at least three distinct particle counts");
  }
  const std::size_t n = ks.size();
  double sx = 0.0, sy = 0.0;
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ks[i] > 0.0)) {
      throw std::invalid_argument("slope fit particle counts must be positive");
    }
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
      throw std::invalid_argument("slope fit values must be finite and positive");
    }
    lx[i] = std::log(ks[i]);
    ly[i] = std::log(values[i]);
    sx += lx[i];
    sy += ly[i];
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  return sxy / sxx;
}

Likelihood task_likelihood(const std::string& name) {
  if (name == "smooth_norm") {
    return Likelihood::smooth_norm(0.0);
  }
  if (name == "inpaint") {
    Eigen::VectorXd y(1);
    y[0] = 0.0;
    return Likelihood::inpaint({0}, y);
  }
  if (name == "inpaint_dof") {
    Eigen::VectorXd y(1);
    y[0] = 0.0;
    return Likelihood::inpaint_dof({{0}, {1}}, y);
  }
  throw std::invalid_argument("unknown benchmark task: " + name);
}

BenchmarkResult run_benchmark(const BenchmarkSpec& spec) {
  if (spec.methods.empty() || spec.tasks.empty() ||
      spec.particle_counts.empty()) {
    throw std::invalid_argument("benchmark needs methods, tasks, and particle counts");
  }
  if (spec.replicates < 1) {
    throw std::invalid_argument("benchmark needs replicates >= 1");
  }
  for (int k : spec.particle_counts) {
    if (k < 1) throw std::invalid_argument("benchmark particle counts must be >= 1");
  }

  BenchmarkResult result;
  for (const auto& task : spec.tasks) {
    if (result.oracle_means.count(task)) continue;
    result.oracle_means[task] = conditional_mean_oracle(
        spec.target, task_likelihood(task), spec.twist.twist_scale, spec.grid);
  }

  struct Cell {
    Method method;
    std::string task;
    int particles;
    int replicate;
  };
  std::vector<Cell> cells;
  for (Method m : spec.methods) {
    for (const auto& task : spec.tasks) {
      for (int k : spec.particle_counts) {
        for (int rep = 0; rep < spec.replicates; ++rep) {
          cells.push_back({m, task, k, rep});
        }
      }
    }
  }

  result.rows.resize(cells.size());
  parallel_for(0, static_cast<int>(cells.size()), spec.workers, [&](int i) {
    const Cell& cell = cells[i];
    BenchmarkRow& row = result.rows[i];
    row.method = to_string(cell.method);
    row.task = cell.task;
    row.particles = cell.particles;
    row.replicate = cell.replicate;
    const std::string tag = row.method + "|" + row.task + "|" +
                            std::to_string(cell.particles) + "|" +
                            std::to_string(cell.replicate);
    row.seed = spec.base_seed ^ fnv1a64(tag.data(), tag.size());

    const auto start = std::chrono::steady_clock::now();
    try {
      SamplerConfig cfg = spec.sampler;
      cfg.method = cell.method;
      cfg.particles = cell.particles;
      cfg.seed = row.seed;
      cfg.workers = 1;  // parallelism lives across rows
      const Likelihood lik = task_likelihood(cell.task);
      const RunResult run =
          run_sampler(spec.target, spec.schedule, lik, spec.twist, cfg);
      const Eigen::VectorXd estimate =
          estimate_conditional_mean(run.states, run.weights);
      row.error = estimation_error(estimate, result.oracle_means.at(cell.task));
      row.mse = row.error * row.error;
      row.final_ess = run.final_ess;
      row.resample_count = run.resample_count;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = kNan;
      row.mse = kNan;
      row.final_ess = kNan;
      row.resample_count = 0;
      row.ok = false;
      row.message = e.what();
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  });

  for (Method m : spec.methods) {
    for (const auto& task : spec.tasks) {
      for (int k : spec.particle_counts) {
        BenchmarkAggregate agg;
        agg.method = to_string(m);
        agg.task = task;
        agg.particles = k;
        std::vector<double> errors;
        for (const auto& row : result.rows) {
          if (row.ok && row.method == agg.method && row.task == task &&
              row.particles == k) {
            errors.push_back(row.error);
          }
        }
        if (errors.empty()) {
          agg.mean_error = kNan;
          agg.sem2 = kNan;
        } else {
          double sum = 0.0;
          for (double e : errors) sum += e;
          agg.mean_error = sum / static_cast<double>(errors.size());
          double ss = 0.0;
          for (double e : errors) {
            ss += (e - agg.mean_error) * (e - agg.mean_error);
          }
          agg.sem2 = errors.size() > 1
                         ? 2.0 * std::sqrt(ss / ((errors.size() - 1.0) *
                                                 errors.size()))
                         : 0.0;
        }
        result.aggregates.push_back(agg);
      }
    }
  }
  return result;
}

namespace {

void append_double(std::ostringstream& out, double v) {
  out << std::setprecision(17) << v;
}

}  // namespace

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream out;
  out << "method,task,K,replicate,seed,error,mse,final_ess,resample_count,"
         "wall_ms\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.task << ',' << r.particles << ','
        << r.replicate << ',' << r.seed << ',';
    append_double(out, r.error);
    out << ',';
    append_double(out, r.mse);
    out << ',';
    append_double(out, r.final_ess);
    out << ',' << r.resample_count << ',';
    append_double(out, r.wall_ms);
    out << '\n';
  }
  return out.str();
}

std::string aggregate_csv(const std::vector<BenchmarkAggregate>& aggregates) {
  std::ostringstream out;
  out << "method,task,K,mean_error,sem2\n";
  for (const auto& a : aggregates) {
    out << a.method << ',' << a.task << ',' << a.particles << ',';
    append_double(out, a.mean_error);
    out << ',';
    append_double(out, a.sem2);
    out << '\n';
  }
  return out.str();
}

}  // namespace tds
