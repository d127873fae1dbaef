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

#include "tds/so3.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>

namespace tds {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLog2Pi = 1.8378770664093453;
// Haar volume of SO(3) under the axis-angle chart convention used here,
// i.e. integral of det J_l over the radius-pi ball.
constexpr double kSo3Volume = 8.0 * kPi * kPi;

Eigen::Matrix3d hat(const TangentVector& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0;
  return m;
}

double log_normal3(const TangentVector& v, const TangentVector& mean,
                   double var) {
  if (!(var > 0.0)) {
    throw std::invalid_argument("tangent normal variance must be positive");
  }
  return -1.5 * (kLog2Pi + std::log(var)) -
         (v - mean).squaredNorm() / (2.0 * var);
}

double orthonormality_residual(const Rotation& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity())
      .cwiseAbs()
      .maxCoeff();
}

Rotation quaternion_rotation(double w, double x, double y, double z) {
  Rotation r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),
      2.0 * (x * z + w * y), 2.0 * (x * y + w * z),
      1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x),
      1.0 - 2.0 * (x * x + y * y);
  return r;
}

}  // namespace

Rotation rodrigues(const TangentVector& v) {
  const double theta2 = v.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a;  // sin(theta) / theta
  double b;  // (1 - cos(theta)) / theta^2
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Eigen::Matrix3d k = hat(v);
  return Eigen::Matrix3d::Identity() + a * k + b * (k * k);
}

Rotation exp_so3(const Rotation& base, const TangentVector& v) {
  Rotation r = base * rodrigues(v);
  if (orthonormality_residual(r) > 1e-12) {
    r = project_to_rotation(r);
  }
  return r;
}

TangentVector log_so3(const Rotation& base, const Rotation& target) {
  const Rotation rel = base.transpose() * target;
  // vee(rel - rel^T) / 2 has norm sin(theta), and (trace - 1)/2 is
  // cos(theta); atan2 of the pair is well conditioned everywhere except
  // near the antipode, which is rejected.
  TangentVector a;
  a << (rel(2, 1) - rel(1, 2)) / 2.0, (rel(0, 2) - rel(2, 0)) / 2.0,
      (rel(1, 0) - rel(0, 1)) / 2.0;
  const double sin_theta = a.norm();
  const double cos_theta = (rel.trace() - 1.0) / 2.0;
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta >= kPi - 1e-6) {
    throw std::domain_error(
        "log map rejected: rotations are within 1e-6 of antipodal");
  }
  if (theta < 1e-8) {
    return a;
  }
  return a * (theta / sin_theta);
}

double geodesic_distance(const Rotation& a, const Rotation& b) {
  const Rotation rel = a.transpose() * b;
  TangentVector w;
  w << (rel(2, 1) - rel(1, 2)) / 2.0, (rel(0, 2) - rel(2, 0)) / 2.0,
      (rel(1, 0) - rel(0, 1)) / 2.0;
  return std::atan2(w.norm(), (rel.trace() - 1.0) / 2.0);
}

double left_jacobian_logdet(const TangentVector& v) {
  const double theta2 = v.squaredNorm();
  if (theta2 < 1e-16) {
    return -theta2 / 12.0;
  }
  const double theta = std::sqrt(theta2);
  // 2 (1 - cos t) / t^2 written as 4 sin^2(t/2) / t^2 to avoid cancellation.
  const double half_sin = std::sin(theta / 2.0);
  return std::log(4.0 * half_sin * half_sin / theta2);
}

bool is_rotation(const Rotation& r, double tol) {
  return orthonormality_residual(r) <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

Rotation project_to_rotation(const Rotation& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Rotation r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

double tangent_normal_logpdf(const Rotation& center, const Rotation& point,
                             const TangentVector& mu, double var) {
  const TangentVector v = log_so3(center, point);
  return log_normal3(v, mu, var) - left_jacobian_logdet(v);
}

Rotation geodesic_walk_step(const Rotation& x_next, const TangentVector& score,
                            double step_var, RngStream& rng) {
  if (!(step_var >= 0.0)) {
    throw std::invalid_argument("geodesic walk step variance must be >= 0");
  }
  TangentVector xi;
  xi << rng.normal(), rng.normal(), rng.normal();
  const TangentVector step = step_var * score + std::sqrt(step_var) * xi;
  return exp_so3(x_next, step);
}

double riemannian_weight(const Rotation& x_t, const Rotation& x_next,
                         const TangentVector& uncond_score,
                         const TangentVector& cond_score, double step_var,
                         double proposal_var, double twist_log_t,
                         double twist_log_next) {
  // Transition and proposal densities are evaluated at the same tangent
  // coordinates, so the log-map volume correction cancels and only the
  // flat normal densities remain.
  const TangentVector v = log_so3(x_next, x_t);
  const double trans = log_normal3(v, step_var * uncond_score, step_var);
  const double prop = log_normal3(v, proposal_var * cond_score, proposal_var);
  // Difference the densities first: a proposal that coincides with the
  // transition cancels exactly instead of leaving reassociation residue.
  return (trans - prop) + (twist_log_t - twist_log_next);
}

double frobenius_twist_logpdf(const Rotation& a, const Rotation& b,
                              double var) {
  if (!(var > 0.0)) {
    throw std::invalid_argument("twist variance must be positive");
  }
  return -(a - b).squaredNorm() / (4.0 * var) - 1.5 * (kLog2Pi + std::log(var));
}

Rotation random_rotation(RngStream& rng) {
  double w, x, y, z, norm2;
  do {
    w = rng.normal();
    x = rng.normal();
    y = rng.normal();
    z = rng.normal();
    norm2 = w * w + x * x + y * y + z * z;
  } while (norm2 < 1e-12);
  const double inv = 1.0 / std::sqrt(norm2);
  return quaternion_rotation(w * inv, x * inv, y * inv, z * inv);
}

namespace {

bool report(std::ostream& out, const char* name, bool ok, double value,
            double tol) {
  out << (ok ? "PASS " : "FAIL ") << name << ": " << value << " (tolerance "
      << tol << ")\n";
  return ok;
}

bool check_round_trip(std::ostream& out) {
  RngStream rng(0x503u, stream::kTest, 0, 0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    TangentVector axis;
    axis << rng.normal(), rng.normal(), rng.normal();
    if (axis.norm() < 1e-12) continue;
    axis.normalize();
    // Mix bulk angles with tiny ones that exercise the series branches.
    const double radius = (i % 10 == 0) ? 1e-9 : (kPi - 0.1);
    const TangentVector v = axis * (rng.uniform() * radius);
    TangentVector base_v;
    base_v << rng.normal(), rng.normal(), rng.normal();
    const Rotation base = rodrigues(base_v);
    const TangentVector back = log_so3(base, exp_so3(base, v));
    worst = std::max(worst, (back - v).norm());
  }
  return report(out, "exp/log round trip, max tangent error", worst <= 1e-9,
                worst, 1e-9);
}

bool check_walk_on_manifold(std::ostream& out) {
  RngStream rng(0x503u, stream::kTest, 1, 0);
  Rotation x = Rotation::Identity();
  TangentVector score;
  score << 0.3, -0.1, 0.2;
  for (int i = 0; i < 10000; ++i) {
    x = geodesic_walk_step(x, score, 0.01, rng);
  }
  const double residual = orthonormality_residual(x);
  const bool ok = residual <= 1e-9 && std::abs(x.determinant() - 1.0) <= 1e-9;
  return report(out, "orthonormality residual after 10000 walk steps", ok,
                residual, 1e-9);
}

bool check_normalization(std::ostream& out) {
  RngStream rng(0x503u, stream::kTest, 2, 0);
  TangentVector center_v;
  center_v << 0.4, -1.1, 0.7;
  const Rotation center = rodrigues(center_v);
  const double var = 0.1;
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Rotation y = random_rotation(rng);
    if (geodesic_distance(center, y) >= kPi - 1e-6) {
      continue;  // rejected by the log map; the density there is ~0 anyway
    }
    sum += std::exp(tangent_normal_logpdf(center, y, TangentVector::Zero(),
                                          var));
  }
  const double integral = kSo3Volume * sum / static_cast<double>(n);
  return report(out, "Monte Carlo density normalization, |integral - 1|",
                std::abs(integral - 1.0) <= 0.02, std::abs(integral - 1.0),
                0.02);
}

bool check_jacobian_cancellation(std::ostream& out) {
  RngStream rng(0x503u, stream::kTest, 3, 0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Rotation x_next = random_rotation(rng);
    TangentVector step;
    step << 0.5 * rng.normal(), 0.5 * rng.normal(), 0.5 * rng.normal();
    const Rotation x_t = exp_so3(x_next, step);
    TangentVector u, c;
    u << rng.normal(), rng.normal(), rng.normal();
    c << rng.normal(), rng.normal(), rng.normal();
    const double sv = 0.05 + 0.2 * rng.uniform();
    const double pv = 0.05 + 0.2 * rng.uniform();
    const double tw_t = rng.normal();
    const double tw_n = rng.normal();
    const double direct =
        riemannian_weight(x_t, x_next, u, c, sv, pv, tw_t, tw_n);
    const double explicit_form =
        (tangent_normal_logpdf(x_next, x_t, sv * u, sv) + tw_t) -
        (tangent_normal_logpdf(x_next, x_t, pv * c, pv) + tw_n);
    worst = std::max(worst, std::abs(direct - explicit_form));
  }
  return report(out, "Jacobian cancellation in step weights, max |diff|",
                worst <= 1e-10, worst, 1e-10);
}

bool check_frobenius_limit(std::ostream& out) {
  RngStream rng(0x503u, stream::kTest, 4, 0);
  const double var = 1e-4;
  const Rotation center = random_rotation(rng);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    TangentVector v;
    v << rng.normal(), rng.normal(), rng.normal();
    v *= std::sqrt(var);
    // Keep probes inside the bulk: the log density changes sign around
    // 2.2 standard deviations at this variance, where a ratio test
    // degenerates.
    const double norm_cap = 2.0 * std::sqrt(3.0 * var);
    if (v.norm() > norm_cap) v *= norm_cap / v.norm();
    const Rotation point = exp_so3(center, v);
    const double exact =
        tangent_normal_logpdf(center, point, TangentVector::Zero(), var);
    const double approx = frobenius_twist_logpdf(center, point, var);
    worst = std::max(worst, std::abs(approx / exact - 1.0));
  }
  return report(out,
                "Frobenius twist vs tangent normal at var=1e-4, max |ratio-1|",
                worst <= 1e-3, worst, 1e-3);
}

bool check_flat_limit(std::ostream& out) {
  RngStream rng(0x503u, stream::kTest, 5, 0);
  const double var = 1e-3;
  const Rotation center = random_rotation(rng);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    TangentVector v;
    v << rng.normal(), rng.normal(), rng.normal();
    v *= std::sqrt(var);
    const double norm_cap = 3.0 * std::sqrt(var);
    if (v.norm() > norm_cap) v *= norm_cap / v.norm();
    const Rotation point = exp_so3(center, v);
    const double curved =
        tangent_normal_logpdf(center, point, TangentVector::Zero(), var);
    const double flat = log_normal3(v, TangentVector::Zero(), var);
    worst = std::max(worst, std::abs(curved - flat));
  }
  return report(out, "small-variance agreement with flat Gaussian, max |diff|",
                worst <= 1e-3, worst, 1e-3);
}

bool check_center_value(std::ostream& out) {
  RngStream rng(0x503u, stream::kTest, 6, 0);
  const Rotation c = random_rotation(rng);
  const double var = 0.07;
  const double got = tangent_normal_logpdf(c, c, TangentVector::Zero(), var);
  const double want = -1.5 * (kLog2Pi + std::log(var));
  const double diff = std::abs(got - want);
  return report(out, "log density at the center, |diff| from closed form",
                diff <= 1e-12, diff, 1e-12);
}

bool check_antipodal_rejection(std::ostream& out) {
  TangentVector v;
  v << kPi - 1e-8, 0.0, 0.0;
  bool threw = false;
  try {
    log_so3(Rotation::Identity(), rodrigues(v));
  } catch (const std::domain_error&) {
    threw = true;
  }
  bool near_ok = true;
  try {
    v << kPi - 1e-3, 0.0, 0.0;
    log_so3(Rotation::Identity(), rodrigues(v));
  } catch (const std::domain_error&) {
    near_ok = false;
  }
  const bool ok = threw && near_ok;
  out << (ok ? "PASS " : "FAIL ")
      << "antipodal log map rejected, interior accepted\n";
  return ok;
}

}  // namespace

bool run_so3_property_checks(std::ostream& out) {
  bool ok = true;
  ok &= check_round_trip(out);
  ok &= check_walk_on_manifold(out);
  ok &= check_normalization(out);
  ok &= check_jacobian_cancellation(out);
  ok &= check_frobenius_limit(out);
  ok &= check_flat_limit(out);
  ok &= check_center_value(out);
  ok &= check_antipodal_rejection(out);
  return ok;
}

}  // namespace tds
