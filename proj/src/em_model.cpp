#include "emguide/em_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace emguide::em {

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument(std::string("EmParams: ") + name +
                                " must be finite and > 0");
  }
}

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::domain_error("alpha must lie in [0, 1]");
  }
}

// psi(q) = f0(d)/d with q = d², and its derivative w.r.t. q.
double offset_gain(double q, double h) {
  const double x2 = q / (h * h);
  return (4.0 - x2) / (h * std::pow(1.0 + x2, 3.5));
}

double offset_gain_dq(double q, double h) {
  const double h2 = h * h;
  const double x2 = q / h2;
  const double s = 1.0 + x2;
  // d/dx2 [(4 − x2) s^(-7/2)] = −s^(-7/2) − 3.5 (4 − x2) s^(-9/2)
  const double d_dx2 = -std::pow(s, -3.5) - 3.5 * (4.0 - x2) * std::pow(s, -4.5);
  return d_dx2 / (h * h2);
}

}  // namespace

void EmParams::validate() const {
  require_positive(mu0, "mu0");
  require_positive(br, "br");
  require_positive(volume, "volume");
  require_positive(m_p, "m_p");
  require_positive(m_m, "m_m");
  require_positive(h_p, "h_p");
  require_positive(h_m, "h_m");
  require_positive(h, "h");
  if (std::abs(h - (h_p + h_m)) > 1e-9 + 1e-6 * h) {
    throw std::invalid_argument("EmParams: h must equal h_p + h_m");
  }
  const double derived = derived_pen_moment();
  if (std::abs(derived - m_p) > 1e-3 * m_p) {
    throw std::invalid_argument(
        "EmParams: m_p inconsistent with br*volume/mu0 (derived " +
        std::to_string(derived) + ")");
  }
}

double force_constant(const EmParams& params) {
  if (!(params.h > 0.0)) {
    throw std::domain_error("force_constant: h must be positive");
  }
  const double h2 = params.h * params.h;
  return 3.0 * params.mu0 * params.m_p * params.m_m / (4.0 * kPi * h2 * h2);
}

double actuation_profile(double d, double h) {
  const double x = d / h;
  const double x2 = x * x;
  return x * (4.0 - x2) / std::pow(1.0 + x2, 3.5);
}

double actuation_profile_derivative(double d, double h) {
  const double x = d / h;
  const double x2 = x * x;
  const double s = 1.0 + x2;
  // d/dx [x(4 − x²) s^(-7/2)] = (4 − 3x²) s^(-7/2) − 7x²(4 − x²) s^(-9/2)
  const double d_dx =
      (4.0 - 3.0 * x2) / std::pow(s, 3.5) - 7.0 * x2 * (4.0 - x2) / std::pow(s, 4.5);
  return d_dx / h;
}

double tilt_profile(double d, double h, double h_p) {
  const double a = h_p / h;
  const double x2 = (d / h) * (d / h);
  const double s = 1.0 + x2;
  const double num = 7.0 * a * x2 * (x2 - 4.0) +
                     s * (5.0 * x2 - 2.0 * a * x2 + 5.0 * a - (1.0 + a) * s);
  return num / std::pow(s, 4.5);
}

double actuation_magnitude(double d, double alpha, const EmParams& params) {
  require_alpha(alpha);
  if (!(d >= 0.0)) throw std::domain_error("actuation_magnitude: d must be >= 0");
  return alpha * force_constant(params) * actuation_profile(d, params.h);
}

Vec2 actuation_force(double d, double alpha, const Vec2& dir,
                     const EmParams& params) {
  const double magnitude = actuation_magnitude(d, alpha, params);
  if (magnitude == 0.0) return Vec2::Zero();
  return magnitude * dir;
}

Vec2 actuation_force_offset(const Vec2& delta, double alpha,
                            const EmParams& params) {
  return alpha * force_constant(params) * offset_gain(delta.squaredNorm(), params.h) *
         delta;
}

Eigen::Matrix2d actuation_force_offset_jacobian(const Vec2& delta, double alpha,
                                                const EmParams& params) {
  const double q = delta.squaredNorm();
  const double scale = alpha * force_constant(params);
  return scale * (offset_gain(q, params.h) * Eigen::Matrix2d::Identity() +
                  2.0 * offset_gain_dq(q, params.h) * delta * delta.transpose());
}

Vec3 dipole_dipole_force(const DipoleState& pen, const DipoleState& em) {
  const Vec3 r = pen.position - em.position;
  const double r2 = r.squaredNorm();
  if (!(r2 > 0.0)) {
    throw std::domain_error("dipole_dipole_force: coincident dipoles");
  }
  const double rn = std::sqrt(r2);
  const double mp_r = pen.moment.dot(r);
  const double me_r = em.moment.dot(r);
  const double mp_me = pen.moment.dot(em.moment);
  const double pre = 3.0 * kMu0 / (4.0 * kPi * r2 * r2 * rn);
  return pre * (mp_r * em.moment + me_r * pen.moment + mp_me * r -
                5.0 * mp_r * me_r / r2 * r);
}

PlanarForce planar_force(const Vec2& pen, const Vec2& magnet, double alpha,
                         const EmParams& params) {
  require_alpha(alpha);
  PlanarForce out;
  DipoleState pen_dipole{Vec3(0, 0, params.m_p), Vec3(pen.x(), pen.y(), params.h)};
  DipoleState em_dipole{Vec3(0, 0, alpha * params.m_m),
                        Vec3(magnet.x(), magnet.y(), 0.0)};
  Vec3 r = pen_dipole.position - em_dipole.position;
  if (r.norm() < kMinSeparation) {
    out.clamped = true;
    r = r.norm() > 0.0 ? Vec3(r.normalized() * kMinSeparation)
                       : Vec3(0, 0, kMinSeparation);
    pen_dipole.position = em_dipole.position + r;
  }
  const Vec3 f = dipole_dipole_force(pen_dipole, em_dipole);
  out.in_plane = f.head<2>();
  out.vertical = f.z();
  return out;
}

double angle_aware_force(double d, double tilt_theta, double tilt_phi,
                         double alpha, const EmParams& params) {
  require_alpha(alpha);
  if (std::abs(tilt_theta) > kPi / 6.0 + 1e-12) {
    throw std::domain_error("angle_aware_force: |tilt_theta| must be <= pi/6");
  }
  return alpha * force_constant(params) *
         (actuation_profile(d, params.h) +
          tilt_theta * std::cos(tilt_phi) * tilt_profile(d, params.h, params.h_p));
}

double tilted_pen_force_exact(double d, double tilt_theta, double tilt_phi,
                              double alpha, const EmParams& params) {
  require_alpha(alpha);
  // Frame: e_d = x (pen toward magnet), e_z = z, e_t = e_d × e_z = −y.
  const Vec3 e_d(1, 0, 0), e_t(0, -1, 0), e_z(0, 0, 1);
  const double st = std::sin(tilt_theta), ct = std::cos(tilt_theta);
  const double sp = std::sin(tilt_phi), cp = std::cos(tilt_phi);
  const Vec3 m_pen = params.m_p * (-st * cp * e_d + st * sp * e_t + ct * e_z);
  const Vec3 r = -(d + params.h_p * st * cp) * e_d + params.h_p * st * sp * e_t +
                 (params.h - (1.0 - ct) * params.h_p) * e_z;
  const DipoleState em_dipole{alpha * params.m_m * e_z, Vec3::Zero()};
  const DipoleState pen_dipole{m_pen, r};
  return dipole_dipole_force(pen_dipole, em_dipole).dot(e_d);
}

Vec2 desired_force(const Vec2& r_theta, double stiffness_c,
                   const EmParams& params) {
  return stiffness_c * force_constant(params) * r_theta;
}

}  // namespace emguide::em
