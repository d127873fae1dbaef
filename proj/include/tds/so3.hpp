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

#ifndef TDS_SO3_HPP
#define TDS_SO3_HPP

#include <Eigen/Core>
#include <iosfwd>

#include "tds/rng.hpp"

namespace tds {

// Rotations are plain 3x3 matrices; tangent vectors are axis-angle
// coordinates in the tangent space at a base rotation, with the rotation
// angle as their norm.
using Rotation = Eigen::Matrix3d;
using TangentVector = Eigen::Vector3d;

// Rodrigues' formula: the exponential map at the identity. Angles below 1e-8
// switch to series coefficients.
Rotation rodrigues(const TangentVector& v);

// exp at base: base * rodrigues(v). Re-orthonormalizes (polar projection)
// when the orthonormality residual exceeds 1e-12, so long chains do not
// drift off the manifold.
Rotation exp_so3(const Rotation& base, const TangentVector& v);

// Inverse of exp_so3. Throws std::domain_error when base and target are
// within 1e-6 of antipodal (rotation angle >= pi - 1e-6), where the log map
// is ill-conditioned.
TangentVector log_so3(const Rotation& base, const Rotation& target);

// Rotation angle of a^T b, i.e. the geodesic distance.
double geodesic_distance(const Rotation& a, const Rotation& b);

// log det of the left Jacobian of the exponential map at v:
// log(2 (1 - cos theta) / theta^2), which is the density correction between
// tangent coordinates and the manifold volume.
double left_jacobian_logdet(const TangentVector& v);

// RtR and determinant residuals within tol.
bool is_rotation(const Rotation& r, double tol = 1e-9);

// Nearest rotation in Frobenius norm (SVD polar projection).
Rotation project_to_rotation(const Rotation& m);

// log density at `point` of the tangent normal at `center` with tangent mean
// mu and isotropic variance var, with respect to the manifold volume:
// log Normal3(log_so3(center, point); mu, var I) - left Jacobian log det.
double tangent_normal_logpdf(const Rotation& center, const Rotation& point,
                             const TangentVector& mu, double var);

// One reverse step of a geodesic random walk:
// exp at x_next of (step_var * score + sqrt(step_var) * xi).
Rotation geodesic_walk_step(const Rotation& x_next, const TangentVector& score,
                            double step_var, RngStream& rng);

// Incremental log weight of a twisted geodesic-walk step. Both transition
// terms share the same log-map Jacobian, which cancels and is never
// computed: only the tangent-space normal densities and the twist values
// enter. Scores are tangent vectors at x_next.
double riemannian_weight(const Rotation& x_t, const Rotation& x_next,
                         const TangentVector& uncond_score,
                         const TangentVector& cond_score, double step_var,
                         double proposal_var, double twist_log_t,
                         double twist_log_next);

// Squared-Frobenius approximation of the tangent normal log density between
// two rotations; exact in the small-variance limit.
double frobenius_twist_logpdf(const Rotation& a, const Rotation& b,
                              double var);

// Haar-uniform rotation (quaternion method; four normals).
Rotation random_rotation(RngStream& rng);

// Runs the full property suite, one PASS/FAIL line per invariant on out.
// Returns true when everything passes.
bool run_so3_property_checks(std::ostream& out);

}  // namespace tds

#endif  // TDS_SO3_HPP
