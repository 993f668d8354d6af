#pragma once

// Per-segment aerodynamics and the rigid-body equations of motion about the
// composite centre of gravity, integrated with fixed-step RK4.
//
// Inertial frame: north-east-down, z down. Body frame: pelvis frame (see
// biomech.hpp). The state's position and velocity are those of the CoG.

#include <array>

#include "skyktm/biomech.hpp"
#include "skyktm/core.hpp"

namespace skyktm {

struct SkyState {
  Vec3 position = Vec3::Zero();      // m, inertial NED
  Vec3 velocity = Vec3::Zero();      // m/s, inertial
  Quat orientation = Quat::Identity();  // body -> inertial
  Vec3 angular_rate = Vec3::Zero();  // rad/s, body frame
  double time = 0.0;                 // s

  bool finite() const {
    return position.allFinite() && velocity.allFinite() && orientation.coeffs().allFinite() &&
           angular_rate.allFinite() && std::isfinite(time);
  }
  Vec3 horizontal_velocity() const { return {velocity.x(), velocity.y(), 0.0}; }
  double horizontal_speed() const { return std::hypot(velocity.x(), velocity.y()); }
  /// Heading of the body x axis projected on the horizontal plane.
  double body_yaw() const {
    const Vec3 fwd = orientation * Vec3::UnitX();
    return std::atan2(fwd.y(), fwd.x());
  }
  /// Rotation rate about the inertial down axis (positive = right turn).
  double yaw_rate() const { return (orientation * angular_rate).z(); }
  /// Horizontal velocity component along the body heading.
  double forward_speed() const {
    const double psi = body_yaw();
    return velocity.x() * std::cos(psi) + velocity.y() * std::sin(psi);
  }
};

struct AeroCoefficients {
  double c_lift_max = 0.0;
  double c_drag_max = 0.0;
  double c_moment_max = 0.0;
  double c_roll_damp = 0.0;
  double c_pitch_damp = 0.0;
  double c_yaw_damp = 0.0;

  void validate() const {
    for (double c : {c_lift_max, c_drag_max, c_moment_max, c_roll_damp, c_pitch_damp, c_yaw_damp})
      if (!(c >= 0.0) || !std::isfinite(c))
        throw Error(ErrorCode::InvalidArgument, "aero coefficients must be finite and >= 0");
  }
};

struct Wrench {
  Vec3 force = Vec3::Zero();   // N, body frame
  Vec3 moment = Vec3::Zero();  // N m, body frame, about the CoG
};

struct FlowAngles {
  double alpha = 0.0;     // atan2(w_z, w_x) in the segment aero frame
  double beta = 0.0;      // asin(w_y / |w|)
  double roll_rel = 0.0;  // atan2(w_y, w_z): angular position of the crossflow
};

inline constexpr double kMinAirspeed = 1e-6;
inline constexpr double kDivergenceSpeed = 200.0;
inline constexpr double kMaxStep = 0.05;

/// Segment aero frame: x along the long axis, z along the broad-face normal.
inline Mat3 aero_frame(const SegmentModel& s) {
  Mat3 F;
  const Vec3 x = s.long_axis;
  const Vec3 z = s.normal;
  F.col(0) = x;
  F.col(1) = z.cross(x);
  F.col(2) = z;
  return F;
}

/// Flow angles of a segment moving with `velocity_body` (segment velocity
/// through the air, body frame). Below kMinAirspeed all angles are zero.
inline FlowAngles flow_angles(const SegmentModel& seg, const Quat& segment_orientation,
                              const Vec3& velocity_body) {
  const Vec3 w = aero_frame(seg).transpose() * (segment_orientation.conjugate() * velocity_body);
  const double speed = w.norm();
  if (speed < kMinAirspeed) return {};
  return {std::atan2(w.z(), w.x()), std::asin(std::clamp(w.y() / speed, -1.0, 1.0)),
          std::atan2(w.y(), w.z())};
}

/// Area seen along unit direction `dir_segment` (segment frame).
inline double projected_area(const SegmentModel& s, const Vec3& dir_segment) {
  if (s.shape == Shape::Ellipsoid) {
    const Vec3& a = s.semi_axes;
    const double px = a.y() * a.z() * dir_segment.x();
    const double py = a.x() * a.z() * dir_segment.y();
    const double pz = a.x() * a.y() * dir_segment.z();
    return kPi * std::sqrt(px * px + py * py + pz * pz);
  }
  const double c = std::clamp(dir_segment.dot(s.long_axis), -1.0, 1.0);
  const double sn = std::sqrt(std::max(0.0, 1.0 - c * c));
  return s.length * s.diameter * sn + 0.25 * kPi * s.diameter * s.diameter * std::abs(c);
}

/// Planform area used for lift and moment.
inline double reference_area(const SegmentModel& s) {
  if (s.shape == Shape::Ellipsoid) return kPi * s.semi_axes.x() * s.semi_axes.y();
  return s.length * s.diameter;
}

struct SegmentLoad {
  Vec3 force = Vec3::Zero();   // body frame, applied at the segment CoG
  Vec3 moment = Vec3::Zero();  // pure couple, body frame
};

/// Aerodynamic load on one segment. `velocity_body` is the segment CoG
/// velocity through still air, `orientation` the segment frame in the body.
///
///   q     = rho |v|^2 / 2
///   drag  = -q c_D A_proj(v) v_hat
///   lift  = sigma q c_L A_ref 2 c (a - c v_hat),     c = v_hat . a
///   couple= sigma q c_M A_ref L 2 c (v_hat x a)
///
/// Limbs use a = long axis, sigma = +1 (crossflow on a slender body); trunk
/// and head use a = face normal, sigma = -1 (normal force on a plate). The
/// lift term has magnitude q c_L A_ref |sin 2 theta| for theta = angle(v, a).
inline SegmentLoad segment_load(const SegmentModel& seg, const Quat& orientation,
                                const Vec3& velocity_body, const AeroCoefficients& k,
                                double rho) {
  SegmentLoad out;
  const double speed = velocity_body.norm();
  if (speed < kMinAirspeed) return out;
  const Vec3 vhat = velocity_body / speed;
  const double q = 0.5 * rho * speed * speed;
  const Vec3 dir_seg = orientation.conjugate() * vhat;

  const double a_proj = projected_area(seg, dir_seg) * seg.aero_scale;
  out.force = -q * k.c_drag_max * a_proj * vhat;

  const bool slender = seg.shape == Shape::Cylinder;
  const Vec3 axis = orientation * (slender ? seg.long_axis : seg.normal);
  const double sigma = slender ? 1.0 : -1.0;
  const double c = vhat.dot(axis);
  const double a_ref = reference_area(seg) * seg.aero_scale;
  out.force += sigma * q * k.c_lift_max * a_ref * 2.0 * c * (axis - c * vhat);
  out.moment = sigma * q * k.c_moment_max * a_ref * seg.length * 2.0 * c * vhat.cross(axis);
  return out;
}

inline double reference_span(const BodyModel& body) { return body.stature; }
inline double reference_surface(const BodyModel& body) { return 0.25 * body.stature * body.stature; }

/// Total aerodynamic wrench about the CoG in body axes.
///
/// Rotational damping per body axis k (roll x, pitch y, yaw z):
///   M_k = -rho/4 S L^2 c_k (|v_cg| + L |omega|) omega_k
/// with S = stature^2 / 4 and L = stature.
inline Wrench aero_wrench(const BodyModel& body, const SegmentMotion& motion, const MassState& ms,
                          const SkyState& state, const AeroCoefficients& k, double rho) {
  Wrench w;
  const Vec3 v_body = state.orientation.conjugate() * state.velocity;
  const Vec3& omega = state.angular_rate;
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const Vec3 r = motion.cog[i] - ms.cog;
    const Vec3 v_seg = v_body + omega.cross(r) + (motion.cog_rate[i] - ms.cog_rate);
    const SegmentLoad load = segment_load(body.segments[i], motion.poses[i].orientation, v_seg, k, rho);
    w.force += load.force;
    w.moment += r.cross(load.force) + load.moment;
  }
  const double L = reference_span(body);
  const double S = reference_surface(body);
  const double scale = 0.25 * rho * S * L * L * (v_body.norm() + L * omega.norm());
  w.moment -= scale * Vec3(k.c_roll_damp * omega.x(), k.c_pitch_damp * omega.y(),
                           k.c_yaw_damp * omega.z());
  return w;
}

inline Wrench aero_wrench(const BodyModel& body, const Posture& posture, const SkyState& state,
                          const AeroCoefficients& k, double rho) {
  const Posture zero;
  const SegmentMotion motion = segment_motion(body, posture, zero);
  return aero_wrench(body, motion, mass_state(body, motion), state, k, rho);
}

/// Per-segment flow angles for a whole body.
inline std::array<FlowAngles, kSegmentCount> flow_angles(const BodyModel& body,
                                                         const Posture& posture,
                                                         const SkyState& state) {
  const Posture zero;
  const SegmentMotion motion = segment_motion(body, posture, zero);
  const MassState ms = mass_state(body, motion);
  const Vec3 v_body = state.orientation.conjugate() * state.velocity;
  std::array<FlowAngles, kSegmentCount> out;
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const Vec3 v_seg = v_body + state.angular_rate.cross(motion.cog[i] - ms.cog);
    out[i] = flow_angles(body.segments[i], motion.poses[i].orientation, v_seg);
  }
  return out;
}

struct Environment {
  double air_density = 1.0;  // kg/m^3
  double gravity = kGravity;
};

namespace detail {

struct Derivative {
  Vec3 dpos, dvel;
  Eigen::Vector4d dquat;  // (x, y, z, w)
  Vec3 domega;
};

struct FlightModel {
  const BodyModel& body;
  const SegmentMotion& motion;
  const MassState& ms;
  const Mat3 inertia_inv;
  const AeroCoefficients& k;
  const Environment& env;

  Derivative operator()(const SkyState& s) const {
    const Wrench w = aero_wrench(body, motion, ms, s, k, env.air_density);
    Derivative d;
    d.dpos = s.velocity;
    d.dvel = s.orientation * w.force / body.total_mass + Vec3(0.0, 0.0, env.gravity);
    const Quat omega_q(0.0, s.angular_rate.x(), s.angular_rate.y(), s.angular_rate.z());
    d.dquat = 0.5 * (s.orientation * omega_q).coeffs();
    const Vec3& om = s.angular_rate;
    const Vec3 h = ms.inertia * om;
    d.domega = inertia_inv * (w.moment - ms.inertia_rate * om - om.cross(h));
    return d;
  }
};

inline SkyState advance(const SkyState& s, const Derivative& d, double h) {
  SkyState out = s;
  out.position += h * d.dpos;
  out.velocity += h * d.dvel;
  out.orientation.coeffs() += h * d.dquat;
  out.angular_rate += h * d.domega;
  out.time += h;
  return out;
}

}  // namespace detail

/// One RK4 step with the posture held over the step. `posture_rate` feeds the
/// inertia derivative and the segment velocities.
inline SkyState step(const BodyModel& body, const Posture& posture, const Posture& posture_rate,
                     const SkyState& state, const AeroCoefficients& coeffs, double dt,
                     const Environment& env = {}) {
  if (!(dt > 0.0 && dt <= kMaxStep))
    throw Error(ErrorCode::InvalidArgument, "dt must lie in (0, 0.05] s");
  if (!state.finite() || !posture.finite() || !posture_rate.finite())
    throw Error(ErrorCode::NonFiniteState, "non-finite state or posture entering step");

  const SegmentMotion motion = segment_motion(body, posture, posture_rate);
  const MassState ms = mass_state(body, motion);
  const detail::FlightModel f{body, motion, ms, ms.inertia.inverse(), coeffs, env};

  const detail::Derivative k1 = f(state);
  const detail::Derivative k2 = f(detail::advance(state, k1, 0.5 * dt));
  const detail::Derivative k3 = f(detail::advance(state, k2, 0.5 * dt));
  const detail::Derivative k4 = f(detail::advance(state, k3, dt));

  SkyState out = state;
  out.position += dt / 6.0 * (k1.dpos + 2.0 * k2.dpos + 2.0 * k3.dpos + k4.dpos);
  out.velocity += dt / 6.0 * (k1.dvel + 2.0 * k2.dvel + 2.0 * k3.dvel + k4.dvel);
  out.orientation.coeffs() += dt / 6.0 * (k1.dquat + 2.0 * k2.dquat + 2.0 * k3.dquat + k4.dquat);
  out.orientation.normalize();
  out.angular_rate += dt / 6.0 * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega);
  out.time = state.time + dt;

  if (!out.finite()) throw Error(ErrorCode::NonFiniteState, "integration produced non-finite state");
  if (out.velocity.norm() > kDivergenceSpeed)
    throw Error(ErrorCode::Divergence, "speed exceeded 200 m/s");
  return out;
}

/// Net external force (aero + gravity) in the inertial frame.
inline Vec3 net_force(const BodyModel& body, const Posture& posture, const SkyState& state,
                      const AeroCoefficients& k, const Environment& env = {}) {
  const Wrench w = aero_wrench(body, posture, state, k, env.air_density);
  return state.orientation * w.force + Vec3(0.0, 0.0, body.total_mass * env.gravity);
}

struct CalibrationResult {
  AeroCoefficients coeffs;
  double terminal_speed = 0.0;
  SkyState trim;  // settled state at the end of the last run
  int iterations = 0;
};

/// Falls from rest with a held posture for `duration` seconds.
inline SkyState settle(const BodyModel& body, const Posture& posture, const AeroCoefficients& k,
                       double duration, double dt = 1.0 / kDefaultRateHz,
                       const Environment& env = {}, SkyState s = {}) {
  const Posture zero;
  const auto n = static_cast<long>(std::llround(duration / dt));
  for (long i = 0; i < n; ++i) s = step(body, posture, zero, s, k, dt, env);
  return s;
}

/// Scales c_drag_max until a fall from rest in `posture` settles at
/// `target_speed`.
inline CalibrationResult calibrate(const BodyModel& body, const Posture& posture,
                                   AeroCoefficients k, double target_speed,
                                   const Environment& env = {}, double settle_time = 60.0,
                                   double tolerance = 1e-4, int max_iterations = 30) {
  if (!(target_speed > 0.0)) throw Error(ErrorCode::InvalidArgument, "target speed must be positive");
  if (!(k.c_drag_max > 0.0)) throw Error(ErrorCode::InvalidArgument, "c_drag_max must be positive");
  CalibrationResult r;
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    r.trim = settle(body, posture, k, settle_time, 1.0 / kDefaultRateHz, env);
    r.terminal_speed = r.trim.velocity.norm();
    const double ratio = r.terminal_speed / target_speed;
    if (std::abs(ratio - 1.0) < tolerance) break;
    k.c_drag_max *= ratio * ratio;
  }
  r.coeffs = k;
  return r;
}

}  // namespace skyktm
