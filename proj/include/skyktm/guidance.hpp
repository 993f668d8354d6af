#pragma once

// Offline path and speed planning, the look-ahead steering law and corridor
// geometry. Horizontal plane only: x north, y east.

#include <vector>

#include "skyktm/core.hpp"
#include "skyktm/dynamics.hpp"

namespace skyktm {

using Vec2 = Eigen::Vector2d;

struct SpeedProfile {
  double cruise = 2.5;         // m/s
  double acceleration = 0.25;  // m/s^2, both ramps
  double start_speed = 0.5;    // m/s
  double end_speed = 1.0;      // m/s, approach speed at the target

  void validate() const {
    if (!(cruise > 0.0) || !(acceleration > 0.0) || !(start_speed > 0.0) || !(end_speed > 0.0))
      throw Error(ErrorCode::InvalidArgument, "speed profile values must be positive");
  }
};

struct ClosestPoint {
  double arc = 0.0;      // m
  Vec2 point;            // m
  double distance = 0.0; // m
  std::size_t segment = 0;
};

class PlannedPath {
 public:
  PlannedPath(std::vector<Vec2> waypoints, SpeedProfile profile, double corridor_half_width)
      : waypoints_(std::move(waypoints)), profile_(profile), half_width_(corridor_half_width) {
    profile_.validate();
    if (waypoints_.size() < 2) throw Error(ErrorCode::DegeneratePath, "path needs at least two waypoints");
    if (!(half_width_ >= 0.0)) throw Error(ErrorCode::InvalidArgument, "corridor half-width must be >= 0");
    arc_.assign(1, 0.0);
    for (std::size_t i = 1; i < waypoints_.size(); ++i) {
      const double len = (waypoints_[i] - waypoints_[i - 1]).norm();
      if (!(len > 0.0)) throw Error(ErrorCode::DegeneratePath, "repeated waypoint");
      arc_.push_back(arc_.back() + len);
    }
  }

  const std::vector<Vec2>& waypoints() const { return waypoints_; }
  const std::vector<double>& arc_lengths() const { return arc_; }
  const SpeedProfile& profile() const { return profile_; }
  double corridor_half_width() const { return half_width_; }
  double length() const { return arc_.back(); }
  const Vec2& start() const { return waypoints_.front(); }
  const Vec2& target() const { return waypoints_.back(); }

  std::size_t segment_at(double s) const {
    const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    const std::size_t i = it == arc_.begin() ? 0 : static_cast<std::size_t>(it - arc_.begin()) - 1;
    return std::min(i, waypoints_.size() - 2);
  }

  Vec2 point_at(double s) const {
    s = std::clamp(s, 0.0, length());
    if (s >= length()) return target();
    const std::size_t i = segment_at(s);
    const double t = (s - arc_[i]) / (arc_[i + 1] - arc_[i]);
    return waypoints_[i] + t * (waypoints_[i + 1] - waypoints_[i]);
  }

  Vec2 tangent_at(double s) const {
    const std::size_t i = segment_at(std::clamp(s, 0.0, length()));
    return (waypoints_[i + 1] - waypoints_[i]).normalized();
  }

  /// min(cruise, sqrt(v0^2 + 2 a s), sqrt(ve^2 + 2 a (L - s)))
  double speed_at(double s) const {
    s = std::clamp(s, 0.0, length());
    const double a = profile_.acceleration;
    const double up = std::sqrt(profile_.start_speed * profile_.start_speed + 2.0 * a * s);
    const double down = std::sqrt(profile_.end_speed * profile_.end_speed + 2.0 * a * (length() - s));
    return std::min({profile_.cruise, up, down});
  }

  /// Closest point on the polyline; ties go to the smallest arc length.
  ClosestPoint closest(const Vec2& p) const {
    ClosestPoint best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < waypoints_.size(); ++i) {
      const Vec2 a = waypoints_[i];
      const Vec2 d = waypoints_[i + 1] - a;
      const double len = arc_[i + 1] - arc_[i];
      const double t = std::clamp((p - a).dot(d) / (len * len), 0.0, 1.0);
      const Vec2 q = a + t * d;
      const double dist = (p - q).norm();
      if (dist < best.distance) best = {arc_[i] + t * len, q, dist, i};
    }
    return best;
  }

 private:
  std::vector<Vec2> waypoints_;
  std::vector<double> arc_;
  SpeedProfile profile_;
  double half_width_;
};

inline constexpr double kMinPlanLength = 1.0;

/// Straight-line plan from start to target.
inline PlannedPath plan_path(const Vec2& start, const Vec2& target, double cruise_speed,
                             SpeedProfile profile = {}, double corridor_half_width = 10.0) {
  if (!start.allFinite() || !target.allFinite())
    throw Error(ErrorCode::InvalidArgument, "non-finite start or target");
  if ((target - start).norm() < kMinPlanLength)
    throw Error(ErrorCode::DegeneratePath, "start and target closer than 1 m");
  profile.cruise = cruise_speed;
  return PlannedPath({start, target}, profile, corridor_half_width);
}

struct GuidanceCommand {
  double omega_com = 0.0;  // rad/s
  double v_com = 0.0;      // m/s
  double psi_error = 0.0;  // rad
  Vec2 lookahead_point = Vec2::Zero();
  double lookahead_arc = 0.0;  // m
  double heading = 0.0;        // rad, heading used for the error
  bool heading_from_body = false;
};

inline constexpr double kMinHeadingSpeed = 0.1;

/// psi_error = wrap(bearing to the look-ahead point - velocity heading),
/// omega_com = 2 psi_error / t_LA, v_com = profile speed at the look-ahead
/// point. Below 0.1 m/s horizontal speed the body yaw stands in for the
/// velocity heading.
inline GuidanceCommand guidance_step(const PlannedPath& path, const SkyState& state, double t_la) {
  if (!(t_la > 0.0)) throw Error(ErrorCode::InvalidArgument, "t_LA must be positive");
  if (!state.finite()) throw Error(ErrorCode::NonFiniteState, "non-finite state");
  const Vec2 pos(state.position.x(), state.position.y());
  const double speed = state.horizontal_speed();

  GuidanceCommand cmd;
  const ClosestPoint cp = path.closest(pos);
  cmd.lookahead_arc = std::min(cp.arc + t_la * speed, path.length());
  cmd.lookahead_point = path.point_at(cmd.lookahead_arc);

  cmd.heading_from_body = speed < kMinHeadingSpeed;
  cmd.heading = cmd.heading_from_body ? state.body_yaw() : std::atan2(state.velocity.y(), state.velocity.x());

  const Vec2 d = cmd.lookahead_point - pos;
  double bearing;
  if (d.norm() > 1e-9) {
    bearing = std::atan2(d.y(), d.x());
  } else {
    const Vec2 t = path.tangent_at(cmd.lookahead_arc);
    bearing = std::atan2(t.y(), t.x());
  }
  cmd.psi_error = wrap_angle(bearing - cmd.heading);
  cmd.omega_com = 2.0 * cmd.psi_error / t_la;
  cmd.v_com = path.speed_at(cmd.lookahead_arc);
  return cmd;
}

struct CorridorStatus {
  double cross_track = 0.0;  // m, positive right of the path direction
  bool inside = true;
  double progress = 0.0;     // arc length of the closest point, m
};

inline CorridorStatus corridor_status(const PlannedPath& path, const Vec2& position) {
  const ClosestPoint cp = path.closest(position);
  const Vec2 t = path.tangent_at(cp.arc);
  const Vec2 right(-t.y(), t.x());
  const double side = (position - cp.point).dot(right);
  CorridorStatus st;
  st.cross_track = side < 0.0 ? -cp.distance : cp.distance;
  st.inside = cp.distance <= path.corridor_half_width();
  st.progress = cp.arc;
  return st;
}

}  // namespace skyktm
