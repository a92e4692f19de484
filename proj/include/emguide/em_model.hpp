#pragma once

// Analytic force models for a vertical electromagnet acting on the permanent
// magnet embedded in a pen. All quantities are SI (m, N, A·m², T).

#include "emguide/types.hpp"

namespace emguide::em {

inline constexpr double kMu0 = 4.0 * kPi * 1e-7;  // H/m

/// Below this dipole separation the point-dipole model is clamped.
inline constexpr double kMinSeparation = 1e-3;

/// Physical constants of the pen magnet / electromagnet pair.
struct EmParams {
  double mu0 = kMu0;
  double br = 1.3;        // residual magnetization of the pen magnet (T)
  double volume = 0.66e-6;  // pen magnet volume (m³)
  double m_p = 0.683;     // pen dipole moment (A·m²)
  double m_m = 1.286;     // electromagnet dipole at alpha = 1 (A·m²)
  double h_p = 0.0140;    // pen tip to pen magnet center (m)
  double h_m = 0.0131;    // drawing plane to electromagnet dipole (m)
  double h = 0.0271;      // total vertical dipole separation (m)

  /// Prototype values of the hardware table.
  static EmParams prototype() { return {}; }

  /// Pen dipole implied by br·volume/mu0.
  double derived_pen_moment() const { return br * volume / mu0; }

  /// Throws std::invalid_argument when an invariant does not hold
  /// (positivity, h = h_p + h_m, m_p = br·V/mu0 within 1e-3 relative).
  void validate() const;
};

struct DipoleState {
  Vec3 moment = Vec3::Zero();    // A·m²
  Vec3 position = Vec3::Zero();  // m
};

/// F_p = in_plane (e_x, e_y) + vertical e_z.
struct PlanarForce {
  Vec2 in_plane = Vec2::Zero();
  double vertical = 0.0;
  bool clamped = false;  // separation was below kMinSeparation
};

/// F0 = 3·mu0·m_p·m_m / (4π·h⁴). Throws std::domain_error for h <= 0.
double force_constant(const EmParams& params);

/// Dimensionless in-plane profile f0(d) = (d/h)(4 − d²/h²)/(1 + d²/h²)^(7/2).
double actuation_profile(double d, double h);

/// d f0 / d d.
double actuation_profile_derivative(double d, double h);

/// First-order tilt coefficient f1(d): the in-plane force of a pen tilted by
/// a small angle t toward azimuth phi is alpha·F0·(f0(d) + t·cos(phi)·f1(d)).
double tilt_profile(double d, double h, double h_p);

/// In-plane magnitude alpha·F0·f0(d). Throws std::domain_error when alpha is
/// outside [0, 1] or d < 0.
double actuation_magnitude(double d, double alpha, const EmParams& params);

/// Actuation force vector alpha·F0·f0(d)·dir; dir is the unit vector from the
/// pen toward the magnet projection.
Vec2 actuation_force(double d, double alpha, const Vec2& dir,
                     const EmParams& params);

/// Actuation force written in terms of the in-plane offset
/// delta = magnet − pen: alpha·F0·(f0(d)/d)·delta. Smooth at delta = 0.
Vec2 actuation_force_offset(const Vec2& delta, double alpha,
                            const EmParams& params);

/// Jacobian of actuation_force_offset with respect to delta (alpha fixed).
Eigen::Matrix2d actuation_force_offset_jacobian(const Vec2& delta, double alpha,
                                                const EmParams& params);

/// Full point-dipole force on `pen` due to `em`. Throws std::domain_error for
/// coincident positions.
Vec3 dipole_dipole_force(const DipoleState& pen, const DipoleState& em);

/// Pen force from a vertical electromagnet at in-plane position `magnet`
/// (alpha-scaled) for an upright pen at `pen`, decomposed into in-plane and
/// vertical parts. Separations below kMinSeparation are clamped and flagged.
PlanarForce planar_force(const Vec2& pen, const Vec2& magnet, double alpha,
                         const EmParams& params);

/// In-plane force magnitude for a tilted pen, first order in tilt_theta.
/// Throws std::domain_error if |tilt_theta| > π/6 or alpha outside [0, 1].
double angle_aware_force(double d, double tilt_theta, double tilt_phi,
                         double alpha, const EmParams& params);

/// Exact in-plane (e_d) force of the full dipole formula for a pen tilted by
/// tilt_theta toward azimuth tilt_phi, pen tip at in-plane distance d.
double tilted_pen_force_exact(double d, double tilt_theta, double tilt_phi,
                              double alpha, const EmParams& params);

/// Default spring stiffness c = 5/h (1/m).
inline double default_stiffness(const EmParams& params) { return 5.0 / params.h; }

/// Desired spring force c·F0·|r|·e_r = c·F0·r_theta.
Vec2 desired_force(const Vec2& r_theta, double stiffness_c,
                   const EmParams& params);

}  // namespace emguide::em
