#pragma once

// The trainee-facing cues: rate-limited Desired Posture, Forward Model
// arrows, corridor lines; plus the imitation waveform and posture scoring.

#include <span>
#include <vector>

#include "skyktm/core.hpp"
#include "skyktm/dynamics.hpp"
#include "skyktm/guidance.hpp"
#include "skyktm/patterns.hpp"

namespace skyktm {

struct Arrow {
  Vec3 origin = Vec3::Zero();  // m, inertial
  double heading = 0.0;        // rad, wrapped
  Vec3 tip = Vec3::Zero();     // end of the constant-turn arc, m
};

struct ArrowPair {
  Arrow predicted;
  Arrow desired;
};

/// sin(x)/x with its series near zero.
inline double sinc(double x) {
  if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

/// Horizontal displacement after t seconds at constant speed v and turn rate
/// omega starting from heading psi: chord 2 (v/omega) sin(omega t / 2) along
/// psi + omega t / 2.
inline Vec2 constant_turn_displacement(double v, double omega, double psi, double t) {
  const double chord = v * t * sinc(0.5 * omega * t);
  const double dir = psi + 0.5 * omega * t;
  return {chord * std::cos(dir), chord * std::sin(dir)};
}

/// Both arrows start from the predicted position; the predicted arrow uses
/// the measured turn rate, the desired arrow the commanded one. Speed and
/// heading come from the current horizontal velocity (body yaw when slow).
inline ArrowPair forward_arrows(const SkyState& state, double omega_meas, double omega_com,
                                double t_predict) {
  if (!(t_predict > 0.0)) throw Error(ErrorCode::InvalidArgument, "t_predict must be positive");
  const double v = state.horizontal_speed();
  const double psi = v < kMinHeadingSpeed ? state.body_yaw() : std::atan2(state.velocity.y(), state.velocity.x());
  const double z = state.position.z() + state.velocity.z() * t_predict;
  auto tip = [&](double omega) {
    const Vec2 d = constant_turn_displacement(v, omega, psi, t_predict);
    return Vec3(state.position.x() + d.x(), state.position.y() + d.y(), z);
  };
  ArrowPair out;
  out.predicted.tip = tip(omega_meas);
  out.desired.tip = tip(omega_com);
  out.predicted.origin = out.predicted.tip;
  out.desired.origin = out.predicted.tip;
  out.predicted.heading = wrap_angle(psi + omega_meas * t_predict);
  out.desired.heading = wrap_angle(psi + omega_com * t_predict);
  return out;
}

/// compose_posture followed by the range/rate clamp against the previous cue.
inline Posture desired_posture_cue(const PatternSet& set, std::span<const double> u,
                                   const Posture& previous_cue, double dt) {
  return clamp(set, compose_posture(set, u), previous_cue, dt);
}

struct ImitationSpec {
  double amplitude = deg2rad(10.0);  // rad
  double frequency = 0.25;           // Hz
  PatternBasis pattern = patterns::turning();
  double hold_threshold = deg2rad(3.0);  // rad rms
  double hold_duration = 3.0;            // s

  void validate() const {
    if (!(amplitude > 0.0) || !(frequency > 0.0))
      throw Error(ErrorCode::InvalidArgument, "imitation amplitude and frequency must be positive");
    if (!(hold_threshold >= 0.0) || !(hold_duration >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "hold threshold and duration must be >= 0");
  }
};

/// sin(2 pi phase) evaluated through quadrant symmetry, so quarter-period
/// phases give exactly 0 and +-1.
inline double unit_sine(double cycles) {
  double p = cycles - std::floor(cycles);
  double sign = 1.0;
  if (p >= 0.5) {
    p -= 0.5;
    sign = -1.0;
  }
  if (p > 0.25) p = 0.5 - p;
  return sign * std::sin(2.0 * kPi * p);
}

inline double imitation_angle(const ImitationSpec& spec, double t) {
  return spec.amplitude * unit_sine(spec.frequency * t);
}

inline Posture imitation_target(const ImitationSpec& spec, const Posture& neutral, double t) {
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidArgument, "imitation time must be >= 0");
  const double u = imitation_angle(spec, t);
  if (u == 0.0) return neutral;
  return neutral + spec.pattern.weights() * u;
}

struct PostureError {
  Posture per_dof;  // rad, actual - desired
  double rms = 0.0;
  double within_threshold_for = 0.0;  // s
};

/// RMS posture error over the 45 DOFs with a hold timer that resets whenever
/// the rms exceeds the threshold.
class PostureErrorTracker {
 public:
  explicit PostureErrorTracker(double threshold = deg2rad(3.0), double hold_duration = 3.0)
      : threshold_(threshold), hold_(hold_duration) {}

  PostureError update(const Posture& desired, const Posture& actual, double dt) {
    PostureError e = evaluate(desired, actual);
    timer_ = e.rms <= threshold_ ? timer_ + dt : 0.0;
    e.within_threshold_for = timer_;
    return e;
  }

  static PostureError evaluate(const Posture& desired, const Posture& actual) {
    PostureError e;
    e.per_dof = actual - desired;
    double s = 0.0;
    for (std::size_t i = 0; i < kDofCount; ++i) s += e.per_dof[i] * e.per_dof[i];
    e.rms = std::sqrt(s / static_cast<double>(kDofCount));
    return e;
  }

  bool held() const { return timer_ >= hold_; }
  double timer() const { return timer_; }
  double threshold() const { return threshold_; }
  void reset() { timer_ = 0.0; }

 private:
  double threshold_;
  double hold_;
  double timer_ = 0.0;
};

struct CorridorLines {
  std::vector<Vec2> left;
  std::vector<Vec2> right;
};

/// The two boundary lines, offset +-half-width from each path segment.
inline CorridorLines corridor_lines(const PlannedPath& path) {
  CorridorLines out;
  const auto& w = path.waypoints();
  const double h = path.corridor_half_width();
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const Vec2 t = (w[i + 1] - w[i]).normalized();
    const Vec2 r(-t.y(), t.x());
    for (const Vec2& p : {w[i], w[i + 1]}) {
      out.left.push_back(p - h * r);
      out.right.push_back(p + h * r);
    }
  }
  return out;
}

struct CueFrame {
  Posture desired_posture;
  Posture feedback_posture;
  Arrow predicted_arrow;
  Arrow desired_arrow;
  double t_predict = 2.0;
};

}  // namespace skyktm
