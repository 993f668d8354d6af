#pragma once

// Movement-pattern algebra: P = P_neutral + sum_i u_i * MP_i, the inverse
// projection, and the ergonomic range/rate clamp.

#include <span>
#include <string>
#include <vector>

#include "skyktm/core.hpp"
#include "skyktm/posture.hpp"

namespace skyktm {

/// Unit-norm weight vector over the 45 DOFs.
///
/// Normalize rescales the input to norm 1. Verbatim keeps the given weights
/// as written when their norm is 1 up to rounding of the listed digits
/// (the forward-backward weights 0.582/0.402 have norm 1.000328).
class PatternBasis {
 public:
  enum class Mode { Normalize, Verbatim };
  static constexpr double kVerbatimTolerance = 1e-3;

  PatternBasis(std::string name, const Posture& weights, Mode mode = Mode::Normalize)
      : name_(std::move(name)) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < kDofCount; ++i) n2 += weights[i] * weights[i];
    const double n = std::sqrt(n2);
    if (!(n > 0.0) || !std::isfinite(n))
      throw Error(ErrorCode::InvalidArgument, "pattern '" + name_ + "' has zero or non-finite weights");
    if (mode == Mode::Verbatim) {
      if (std::abs(n - 1.0) > kVerbatimTolerance)
        throw Error(ErrorCode::InvalidArgument, "verbatim pattern '" + name_ + "' is not unit norm");
      weights_ = weights;
    } else {
      weights_ = weights * (1.0 / n);
    }
  }

  double norm() const { return std::sqrt(dot(weights_)); }

  const std::string& name() const { return name_; }
  const Posture& weights() const { return weights_; }
  double operator[](std::size_t i) const { return weights_[i]; }

  double dot(const Posture& p) const {
    double s = 0.0;
    for (std::size_t i = 0; i < kDofCount; ++i) s += weights_[i] * p[i];
    return s;
  }

 private:
  std::string name_;
  Posture weights_;
};

struct DofLimit {
  double min = -kPi;
  double max = kPi;
  double max_rate = deg2rad(60.0);  // rad/s
};

using DofLimits = std::array<DofLimit, kDofCount>;

struct PatternSet {
  Posture neutral;
  std::vector<PatternBasis> patterns;
  DofLimits limits{};

  std::size_t size() const { return patterns.size(); }

  void validate() const {
    if (patterns.empty()) throw Error(ErrorCode::InvalidArgument, "pattern set needs at least one pattern");
    for (std::size_t i = 0; i < kDofCount; ++i) {
      if (!(limits[i].min <= limits[i].max) || !(limits[i].max_rate > 0.0))
        throw Error(ErrorCode::InvalidArgument, "bad limits for " + dof_name(i));
      if (neutral[i] < limits[i].min || neutral[i] > limits[i].max)
        throw Error(ErrorCode::InvalidArgument, "neutral outside limits at " + dof_name(i));
    }
  }

  /// Largest |w_i . w_j| over distinct pairs.
  double max_overlap() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < patterns.size(); ++i)
      for (std::size_t j = i + 1; j < patterns.size(); ++j)
        worst = std::max(worst, std::abs(patterns[i].dot(patterns[j].weights())));
    return worst;
  }
  bool orthogonal(double tol = 1e-12) const { return max_overlap() <= tol; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < patterns.size(); ++i)
      if (patterns[i].name() == name) return i;
    throw Error(ErrorCode::InvalidArgument, "unknown pattern '" + std::string(name) + "'");
  }
};

/// P_neutral + sum u_i MP_i. No limits are applied here.
inline Posture compose_posture(const PatternSet& set, std::span<const double> u) {
  if (u.size() != set.size())
    throw Error(ErrorCode::InvalidArgument, "pattern angle count does not match pattern set");
  Posture p = set.neutral;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (u[k] == 0.0) continue;
    p += set.patterns[k].weights() * u[k];
  }
  return p;
}

struct Projection {
  std::vector<double> u;
  bool least_squares = false;  // true when the set was not orthogonal
};

/// Pattern angles that best reproduce `posture` (exact inverse of
/// compose_posture on the span of an orthogonal set).
inline Projection project(const PatternSet& set, const Posture& posture) {
  const Posture d = posture - set.neutral;
  const std::size_t n = set.size();
  Projection out;
  out.u.resize(n);
  if (set.orthogonal()) {
    for (std::size_t k = 0; k < n; ++k) out.u[k] = set.patterns[k].dot(d);
    return out;
  }
  Eigen::MatrixXd W(kDofCount, n);
  Eigen::VectorXd b(kDofCount);
  for (std::size_t i = 0; i < kDofCount; ++i) {
    b(i) = d[i];
    for (std::size_t k = 0; k < n; ++k) W(i, k) = set.patterns[k][i];
  }
  const Eigen::VectorXd x = W.colPivHouseholderQr().solve(b);
  for (std::size_t k = 0; k < n; ++k) out.u[k] = x(k);
  out.least_squares = true;
  return out;
}

/// Rate limit against `previous`, then range limit.
inline Posture clamp(const PatternSet& set, const Posture& commanded, const Posture& previous,
                     double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "clamp requires dt > 0");
  Posture out;
  for (std::size_t i = 0; i < kDofCount; ++i) {
    const DofLimit& lim = set.limits[i];
    const double step = lim.max_rate * dt;
    double v = std::clamp(commanded[i], previous[i] - step, previous[i] + step);
    out[i] = std::clamp(v, lim.min, lim.max);
  }
  return out;
}

namespace patterns {

inline constexpr double kArmsWeight = 0.5;
inline constexpr double kKneeWeight = 0.582;
inline constexpr double kHipWeight = 0.402;

inline constexpr std::array<std::size_t, 4> kArmsDofs = {
    dof_index(Joint::RightShoulder, Axis::Flexion), dof_index(Joint::RightShoulder, Axis::Rotation),
    dof_index(Joint::LeftShoulder, Axis::Flexion), dof_index(Joint::LeftShoulder, Axis::Rotation)};
inline constexpr std::array<std::size_t, 2> kKneeDofs = {dof_index(Joint::LeftKnee, Axis::Flexion),
                                                         dof_index(Joint::RightKnee, Axis::Flexion)};
inline constexpr std::array<std::size_t, 2> kHipDofs = {dof_index(Joint::LeftHip, Axis::Flexion),
                                                        dof_index(Joint::RightHip, Axis::Flexion)};

/// 'turning': right shoulder flexion + lateral rotation, left shoulder
/// extension + medial rotation, 0.5 each.
inline PatternBasis turning() {
  Posture w;
  for (std::size_t i : kArmsDofs) w[i] = kArmsWeight;
  return PatternBasis("turning", w, PatternBasis::Mode::Verbatim);
}

/// 'forward-backward': knees 0.582, hips 0.402.
inline PatternBasis forward_backward() {
  Posture w;
  for (std::size_t i : kKneeDofs) w[i] = kKneeWeight;
  for (std::size_t i : kHipDofs) w[i] = kHipWeight;
  return PatternBasis("forward-backward", w, PatternBasis::Mode::Verbatim);
}

}  // namespace patterns

}  // namespace skyktm
