#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace skyktm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kGravity = 9.80665;
inline constexpr double kDefaultRateHz = 240.0;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

enum class ErrorCode {
  InvalidAnthropometrics,
  InvalidArgument,
  NonFiniteState,
  Divergence,
  DegeneratePath,
  DelayOutOfRange,
  EmptyLog,
  CorruptRecord,
  StreamLost,
  Config,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidAnthropometrics: return "invalid-anthropometrics";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::NonFiniteState: return "non-finite-state";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::DegeneratePath: return "degenerate-path";
    case ErrorCode::DelayOutOfRange: return "delay-out-of-range";
    case ErrorCode::EmptyLog: return "empty-log";
    case ErrorCode::CorruptRecord: return "corrupt-record";
    case ErrorCode::StreamLost: return "stream-lost";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace skyktm
