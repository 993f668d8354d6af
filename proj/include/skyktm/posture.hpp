#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

namespace skyktm {

inline constexpr std::size_t kSegmentCount = 16;
inline constexpr std::size_t kJointCount = 15;
inline constexpr std::size_t kDofCount = 45;

// Segment order is fixed; joint j drives segment j + 1.
enum class Segment : std::size_t {
  Pelvis, Abdomen, Thorax, Head,
  LeftUpperArm, LeftForearm, LeftHand,
  RightUpperArm, RightForearm, RightHand,
  LeftThigh, LeftShank, LeftFoot,
  RightThigh, RightShank, RightFoot,
};

// Pelvis-outward: spine, head, left arm, right arm, left leg, right leg.
enum class Joint : std::size_t {
  Lumbar, Thoracic, Neck,
  LeftShoulder, LeftElbow, LeftWrist,
  RightShoulder, RightElbow, RightWrist,
  LeftHip, LeftKnee, LeftAnkle,
  RightHip, RightKnee, RightAnkle,
};

// Per-joint triplet slot. Signs of each slot are fixed by the joint axis table
// in biomech.hpp (see README, "Posture convention").
enum class Axis : std::size_t { Flexion = 0, Abduction = 1, Rotation = 2 };

constexpr std::size_t idx(Segment s) { return static_cast<std::size_t>(s); }
constexpr std::size_t idx(Joint j) { return static_cast<std::size_t>(j); }
constexpr std::size_t dof_index(Joint j, Axis a) {
  return 3 * static_cast<std::size_t>(j) + static_cast<std::size_t>(a);
}

inline constexpr std::array<std::string_view, kSegmentCount> kSegmentNames = {
    "pelvis",      "abdomen",      "thorax",   "head",
    "l_upper_arm", "l_forearm",    "l_hand",   "r_upper_arm",
    "r_forearm",   "r_hand",       "l_thigh",  "l_shank",
    "l_foot",      "r_thigh",      "r_shank",  "r_foot"};

inline constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "lumbar",     "thoracic",   "neck",    "l_shoulder", "l_elbow",
    "l_wrist",    "r_shoulder", "r_elbow", "r_wrist",    "l_hip",
    "l_knee",     "l_ankle",    "r_hip",   "r_knee",     "r_ankle"};

inline std::string dof_name(std::size_t i) {
  static constexpr std::array<std::string_view, 3> suffix = {"flex", "abd", "rot"};
  return std::string(kJointNames[i / 3]) + "." + std::string(suffix[i % 3]);
}

/// Body configuration: three intrinsic rotation angles (rad) per joint.
class Posture {
 public:
  using Storage = std::array<double, kDofCount>;

  Posture() { dof_.fill(0.0); }
  explicit Posture(const Storage& dof) : dof_(dof) {}

  double& operator[](std::size_t i) { return dof_[i]; }
  double operator[](std::size_t i) const { return dof_[i]; }
  double& at(Joint j, Axis a) { return dof_[dof_index(j, a)]; }
  double at(Joint j, Axis a) const { return dof_[dof_index(j, a)]; }

  const Storage& values() const { return dof_; }
  static constexpr std::size_t size() { return kDofCount; }

  double norm() const {
    double s = 0.0;
    for (double v : dof_) s += v * v;
    return std::sqrt(s);
  }

  bool finite() const {
    for (double v : dof_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Posture& operator+=(const Posture& o) {
    for (std::size_t i = 0; i < kDofCount; ++i) dof_[i] += o.dof_[i];
    return *this;
  }
  Posture& operator-=(const Posture& o) {
    for (std::size_t i = 0; i < kDofCount; ++i) dof_[i] -= o.dof_[i];
    return *this;
  }
  Posture& operator*=(double k) {
    for (double& v : dof_) v *= k;
    return *this;
  }

  friend Posture operator+(Posture a, const Posture& b) { return a += b; }
  friend Posture operator-(Posture a, const Posture& b) { return a -= b; }
  friend Posture operator*(Posture a, double k) { return a *= k; }
  friend Posture operator*(double k, Posture a) { return a *= k; }
  friend bool operator==(const Posture&, const Posture&) = default;

 private:
  Storage dof_;
};

}  // namespace skyktm
