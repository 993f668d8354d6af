#pragma once

// Segmented body model: 16 rigid segments joined by 15 three-axis joints.
//
// Frames. Every segment frame coincides with the pelvis (body) frame when all
// joint angles are zero. Body axes: x toward the head, y to the right, z out of
// the belly. In the belly-to-earth reference pose z points down, so the body
// frame lines up with the north-east-down inertial frame at zero attitude.
//
// Reference pose (all DOFs zero): lying flat, arms straight out sideways,
// legs straight back, toes pointed. Each segment frame origin sits on its
// proximal joint; the pelvis origin sits on the lumbar joint.

#include <array>
#include <optional>
#include <vector>

#include "skyktm/core.hpp"
#include "skyktm/posture.hpp"

namespace skyktm {

enum class Shape { Cylinder, Ellipsoid };

/// Anatomical table entry. Lengths, widths and depths are fractions of stature.
struct SegmentParams {
  double mass_fraction;
  double length_fraction;
  double width_fraction;  // cylinder diameter, or ellipsoid full width (y)
  double depth_fraction;  // ellipsoid full depth (z); unused for cylinders
  Shape shape;
};

using FractionTable = std::array<SegmentParams, kSegmentCount>;

// Mass fractions follow the de Leva (1996) adjustment of Zatsiorsky's data.
// Length fractions are de Leva segment lengths over a 1.741 m reference
// stature. Widths/depths are rounded anthropometric averages.
inline FractionTable default_fraction_table() {
  const auto E = Shape::Ellipsoid;
  const auto C = Shape::Cylinder;
  return {{
      {0.1117, 0.084, 0.190, 0.120, E},  // pelvis
      {0.1633, 0.124, 0.170, 0.110, E},  // abdomen
      {0.1596, 0.098, 0.200, 0.120, E},  // thorax
      {0.0694, 0.140, 0.088, 0.110, E},  // head
      {0.0271, 0.162, 0.055, 0.0, C},    // l_upper_arm
      {0.0162, 0.154, 0.045, 0.0, C},    // l_forearm
      {0.0061, 0.050, 0.050, 0.0, C},    // l_hand
      {0.0271, 0.162, 0.055, 0.0, C},    // r_upper_arm
      {0.0162, 0.154, 0.045, 0.0, C},    // r_forearm
      {0.0061, 0.050, 0.050, 0.0, C},    // r_hand
      {0.1416, 0.243, 0.090, 0.0, C},    // l_thigh
      {0.0433, 0.249, 0.060, 0.0, C},    // l_shank
      {0.0137, 0.148, 0.050, 0.0, C},    // l_foot
      {0.1416, 0.243, 0.090, 0.0, C},    // r_thigh
      {0.0433, 0.249, 0.060, 0.0, C},    // r_shank
      {0.0137, 0.148, 0.050, 0.0, C},    // r_foot
  }};
}

struct SegmentOverride {
  std::optional<double> length;         // m
  std::optional<double> mass_fraction;  // before renormalization
};

struct Equipment {
  double jumpsuit_drag_scale = 1.0;  // multiplies every segment's aero area
  bool helmet = false;               // enlarges the head's aero outline by 10%
  double weight_belt_kg = 0.0;       // carried on the pelvis, part of total_mass
};

struct Anthropometrics {
  double total_mass = 80.0;  // kg, exit weight including equipment
  double stature = 1.80;     // m
  std::array<SegmentOverride, kSegmentCount> overrides{};
  Equipment equipment{};
  FractionTable table = default_fraction_table();
};

struct SegmentModel {
  std::string_view name;
  double mass = 0.0;
  Vec3 principal_inertia = Vec3::Zero();  // about the segment CoG, segment axes
  Vec3 cog_offset = Vec3::Zero();         // from the proximal joint, segment frame
  Shape shape = Shape::Cylinder;
  double length = 0.0;
  Vec3 semi_axes = Vec3::Zero();  // ellipsoid semi-axes along x, y, z
  double diameter = 0.0;          // cylinder
  Vec3 long_axis = Vec3::UnitX(); // distal direction
  Vec3 normal = Vec3::UnitZ();    // broad-face normal
  double aero_scale = 1.0;        // jumpsuit/helmet area multiplier
};

struct JointModel {
  Segment parent;
  Segment child;
  Vec3 position;            // in the parent frame
  std::array<Vec3, 3> axes; // flexion, abduction, rotation; applied intrinsically
};

struct BodyModel {
  std::array<SegmentModel, kSegmentCount> segments;
  std::array<JointModel, kJointCount> joints;
  double total_mass = 0.0;
  double stature = 0.0;

  const SegmentModel& segment(Segment s) const { return segments[idx(s)]; }
  const JointModel& joint(Joint j) const { return joints[idx(j)]; }
};

namespace detail {

inline Vec3 inertia_for(const SegmentModel& s) {
  const double m = s.mass;
  if (s.shape == Shape::Ellipsoid) {
    const Vec3& a = s.semi_axes;
    return {m * (a.y() * a.y() + a.z() * a.z()) / 5.0,
            m * (a.x() * a.x() + a.z() * a.z()) / 5.0,
            m * (a.x() * a.x() + a.y() * a.y()) / 5.0};
  }
  const double r = 0.5 * s.diameter;
  const double axial = 0.5 * m * r * r;
  const double transverse = m * (3.0 * r * r + s.length * s.length) / 12.0;
  Vec3 out;
  for (int k = 0; k < 3; ++k)
    out[k] = std::abs(s.long_axis[k]) > 0.5 ? axial : transverse;
  return out;
}

struct JointLayout {
  Segment parent;
  std::array<Vec3, 3> axes;
};

// Axis table. The spine's first slot arches the back (distal segment moves
// dorsally); the first slot of hips, knees and ankles moves the distal segment
// toward the belly side (hip flexion, knee extension), so a bent knee has a
// negative angle. The shoulders' first slot pushes the right arm headward and
// the left arm footward; their rotation slot turns about the distal long axis.
// See README, "Posture convention".
inline std::array<JointLayout, kJointCount> joint_layout() {
  const Vec3 X = Vec3::UnitX(), Y = Vec3::UnitY(), Z = Vec3::UnitZ();
  return {{
      {Segment::Pelvis, {Y, Z, X}},            // lumbar
      {Segment::Abdomen, {Y, Z, X}},           // thoracic
      {Segment::Thorax, {Y, Z, X}},            // neck
      {Segment::Thorax, {-Z, X, -Y}},          // l_shoulder
      {Segment::LeftUpperArm, {Z, X, -Y}},     // l_elbow
      {Segment::LeftForearm, {Z, X, -Y}},      // l_wrist
      {Segment::Thorax, {-Z, -X, Y}},          // r_shoulder
      {Segment::RightUpperArm, {-Z, -X, Y}},   // r_elbow
      {Segment::RightForearm, {-Z, -X, Y}},    // r_wrist
      {Segment::Pelvis, {Y, Z, X}},            // l_hip
      {Segment::LeftThigh, {Y, Z, X}},         // l_knee
      {Segment::LeftShank, {Y, Z, X}},         // l_ankle
      {Segment::Pelvis, {Y, -Z, -X}},          // r_hip
      {Segment::RightThigh, {Y, -Z, -X}},      // r_knee
      {Segment::RightShank, {Y, -Z, -X}},      // r_ankle
  }};
}

}  // namespace detail

inline void validate(const Anthropometrics& a) {
  if (!(a.total_mass > 0.0) || !std::isfinite(a.total_mass))
    throw Error(ErrorCode::InvalidAnthropometrics, "total_mass must be positive");
  if (!(a.stature > 0.0) || !std::isfinite(a.stature))
    throw Error(ErrorCode::InvalidAnthropometrics, "stature must be positive");
  if (a.equipment.weight_belt_kg < 0.0 || a.equipment.weight_belt_kg >= a.total_mass)
    throw Error(ErrorCode::InvalidAnthropometrics, "weight belt outside [0, total_mass)");
  if (!(a.equipment.jumpsuit_drag_scale > 0.0))
    throw Error(ErrorCode::InvalidAnthropometrics, "jumpsuit_drag_scale must be positive");
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const auto& o = a.overrides[i];
    if (o.length && !(*o.length > 0.0))
      throw Error(ErrorCode::InvalidAnthropometrics, "override length must be positive");
    if (o.mass_fraction && !(*o.mass_fraction > 0.0))
      throw Error(ErrorCode::InvalidAnthropometrics, "override mass fraction must be positive");
    if (!(a.table[i].mass_fraction > 0.0) || !(a.table[i].length_fraction > 0.0) ||
        !(a.table[i].width_fraction > 0.0))
      throw Error(ErrorCode::InvalidAnthropometrics, "fraction table entries must be positive");
  }
}

/// Builds the 16-segment model. Segment masses sum to total_mass.
inline BodyModel build_body(const Anthropometrics& anthro) {
  validate(anthro);
  BodyModel body;
  body.total_mass = anthro.total_mass;
  body.stature = anthro.stature;
  const double S = anthro.stature;

  std::array<double, kSegmentCount> fraction{};
  double fsum = 0.0;
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    fraction[i] = anthro.overrides[i].mass_fraction.value_or(anthro.table[i].mass_fraction);
    fsum += fraction[i];
  }
  const double belt = anthro.equipment.weight_belt_kg;
  const double distributed = anthro.total_mass - belt;

  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const SegmentParams& p = anthro.table[i];
    SegmentModel& s = body.segments[i];
    s.name = kSegmentNames[i];
    s.mass = distributed * fraction[i] / fsum;
    s.shape = p.shape;
    s.length = anthro.overrides[i].length.value_or(p.length_fraction * S);
    s.aero_scale = anthro.equipment.jumpsuit_drag_scale;
  }
  body.segments[idx(Segment::Pelvis)].mass += belt;

  // Mass conservation is exact up to rounding; push the residue onto the pelvis.
  double msum = 0.0;
  for (const auto& s : body.segments) msum += s.mass;
  body.segments[idx(Segment::Pelvis)].mass += anthro.total_mass - msum;

  auto seg = [&](Segment s) -> SegmentModel& { return body.segments[idx(s)]; };
  auto width = [&](Segment s) { return anthro.table[idx(s)].width_fraction * S; };
  auto depth = [&](Segment s) { return anthro.table[idx(s)].depth_fraction * S; };

  // Trunk and head: ellipsoids stacked along x.
  for (Segment s : {Segment::Pelvis, Segment::Abdomen, Segment::Thorax, Segment::Head}) {
    SegmentModel& m = seg(s);
    m.semi_axes = {0.5 * m.length, 0.5 * width(s), 0.5 * depth(s)};
    const double dir = (s == Segment::Pelvis) ? -1.0 : 1.0;
    m.long_axis = dir * Vec3::UnitX();
    m.normal = Vec3::UnitZ();
    m.cog_offset = m.long_axis * (0.5 * m.length);
  }
  if (anthro.equipment.helmet) seg(Segment::Head).aero_scale *= 1.1;

  // Limbs: cylinders along their distal direction.
  const std::array<std::pair<Segment, Vec3>, 12> limbs = {{
      {Segment::LeftUpperArm, -Vec3::UnitY()}, {Segment::LeftForearm, -Vec3::UnitY()},
      {Segment::LeftHand, -Vec3::UnitY()},     {Segment::RightUpperArm, Vec3::UnitY()},
      {Segment::RightForearm, Vec3::UnitY()},  {Segment::RightHand, Vec3::UnitY()},
      {Segment::LeftThigh, -Vec3::UnitX()},    {Segment::LeftShank, -Vec3::UnitX()},
      {Segment::LeftFoot, -Vec3::UnitX()},     {Segment::RightThigh, -Vec3::UnitX()},
      {Segment::RightShank, -Vec3::UnitX()},   {Segment::RightFoot, -Vec3::UnitX()},
  }};
  for (const auto& [s, dir] : limbs) {
    SegmentModel& m = seg(s);
    m.diameter = width(s);
    m.long_axis = dir;
    m.normal = Vec3::UnitZ();
    m.cog_offset = dir * (0.5 * m.length);
  }

  for (auto& m : body.segments) m.principal_inertia = detail::inertia_for(m);

  const auto layout = detail::joint_layout();
  const double shoulder_y = 0.5 * width(Segment::Thorax) + 0.5 * seg(Segment::RightUpperArm).diameter;
  const double hip_y = 0.25 * width(Segment::Pelvis);
  const double Lp = seg(Segment::Pelvis).length;
  const double La = seg(Segment::Abdomen).length;
  const double Lt = seg(Segment::Thorax).length;
  auto tip = [&](Segment s) { return seg(s).long_axis * seg(s).length; };

  const std::array<Vec3, kJointCount> positions = {
      Vec3::Zero(),                         // lumbar
      Vec3(La, 0.0, 0.0),                   // thoracic
      Vec3(Lt, 0.0, 0.0),                   // neck
      Vec3(0.85 * Lt, -shoulder_y, 0.0),    // l_shoulder
      tip(Segment::LeftUpperArm),           // l_elbow
      tip(Segment::LeftForearm),            // l_wrist
      Vec3(0.85 * Lt, shoulder_y, 0.0),     // r_shoulder
      tip(Segment::RightUpperArm),          // r_elbow
      tip(Segment::RightForearm),           // r_wrist
      Vec3(-0.8 * Lp, -hip_y, 0.0),         // l_hip
      tip(Segment::LeftThigh),              // l_knee
      tip(Segment::LeftShank),              // l_ankle
      Vec3(-0.8 * Lp, hip_y, 0.0),          // r_hip
      tip(Segment::RightThigh),             // r_knee
      tip(Segment::RightShank),             // r_ankle
  };
  for (std::size_t j = 0; j < kJointCount; ++j) {
    body.joints[j] = JointModel{layout[j].parent, static_cast<Segment>(j + 1), positions[j],
                                layout[j].axes};
  }
  return body;
}

struct SegmentPose {
  Vec3 position = Vec3::Zero();  // proximal joint / frame origin, body frame
  Quat orientation = Quat::Identity();
};

using BodyPoses = std::array<SegmentPose, kSegmentCount>;

namespace detail {

inline Quat joint_rotation(const JointModel& j, const Posture& p, std::size_t joint) {
  Quat q = Quat::Identity();
  for (std::size_t k = 0; k < 3; ++k)
    q = q * Quat(Eigen::AngleAxisd(p[3 * joint + k], j.axes[k]));
  return q;
}

}  // namespace detail

/// Segment frame poses in the body (pelvis) frame.
inline BodyPoses forward_kinematics(const BodyModel& body, const Posture& posture) {
  BodyPoses poses;
  poses[0] = SegmentPose{};
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const JointModel& jm = body.joints[j];
    const SegmentPose& parent = poses[idx(jm.parent)];
    SegmentPose& child = poses[idx(jm.child)];
    child.position = parent.position + parent.orientation * jm.position;
    child.orientation = (parent.orientation * detail::joint_rotation(jm, posture, j)).normalized();
  }
  return poses;
}

/// Poses plus per-segment velocities relative to the pelvis frame.
struct SegmentMotion {
  BodyPoses poses;
  std::array<Vec3, kSegmentCount> cog;        // segment CoG, body frame
  std::array<Vec3, kSegmentCount> cog_rate;   // d/dt of cog from posture rates
  std::array<Vec3, kSegmentCount> omega;      // segment angular rate relative to pelvis
};

inline SegmentMotion segment_motion(const BodyModel& body, const Posture& posture,
                                    const Posture& rate) {
  SegmentMotion out;
  out.poses[0] = SegmentPose{};
  std::array<Vec3, kSegmentCount> origin_rate;
  origin_rate.fill(Vec3::Zero());
  out.omega.fill(Vec3::Zero());

  for (std::size_t j = 0; j < kJointCount; ++j) {
    const JointModel& jm = body.joints[j];
    const std::size_t p = idx(jm.parent);
    const std::size_t c = idx(jm.child);
    const SegmentPose& parent = out.poses[p];

    // Joint angular velocity in the parent frame for the intrinsic triplet.
    Quat partial = Quat::Identity();
    Vec3 w_joint = Vec3::Zero();
    for (std::size_t k = 0; k < 3; ++k) {
      w_joint += (partial * jm.axes[k]) * rate[3 * j + k];
      partial = partial * Quat(Eigen::AngleAxisd(posture[3 * j + k], jm.axes[k]));
    }

    const Vec3 lever = parent.orientation * jm.position;
    out.poses[c].position = parent.position + lever;
    out.poses[c].orientation = (parent.orientation * partial).normalized();
    out.omega[c] = out.omega[p] + parent.orientation * w_joint;
    origin_rate[c] = origin_rate[p] + out.omega[p].cross(lever);
  }
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const Vec3 r = out.poses[i].orientation * body.segments[i].cog_offset;
    out.cog[i] = out.poses[i].position + r;
    out.cog_rate[i] = origin_rate[i] + out.omega[i].cross(r);
  }
  return out;
}

struct MassState {
  Vec3 cog = Vec3::Zero();            // body frame
  Mat3 inertia = Mat3::Zero();        // about cog, body axes
  Vec3 cog_rate = Vec3::Zero();
  Mat3 inertia_rate = Mat3::Zero();
};

inline MassState mass_state(const BodyModel& body, const SegmentMotion& motion) {
  MassState ms;
  const double M = body.total_mass;
  Mat3 I_origin = Mat3::Zero();
  Mat3 I_origin_rate = Mat3::Zero();
  const Mat3 E = Mat3::Identity();
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const SegmentModel& s = body.segments[i];
    const Mat3 R = motion.poses[i].orientation.toRotationMatrix();
    const Mat3 Iw = R * s.principal_inertia.asDiagonal() * R.transpose();
    const Vec3& c = motion.cog[i];
    const Vec3& cd = motion.cog_rate[i];
    const Mat3 W = skew(motion.omega[i]);

    ms.cog += s.mass * c;
    ms.cog_rate += s.mass * cd;
    I_origin += Iw + s.mass * (c.squaredNorm() * E - c * c.transpose());
    I_origin_rate += W * Iw - Iw * W +
                     s.mass * (2.0 * c.dot(cd) * E - cd * c.transpose() - c * cd.transpose());
  }
  ms.cog /= M;
  ms.cog_rate /= M;
  const Vec3& c = ms.cog;
  const Vec3& cd = ms.cog_rate;
  ms.inertia = I_origin - M * (c.squaredNorm() * E - c * c.transpose());
  ms.inertia_rate =
      I_origin_rate - M * (2.0 * c.dot(cd) * E - cd * c.transpose() - c * cd.transpose());
  // Symmetrize against rounding.
  ms.inertia = 0.5 * (ms.inertia + ms.inertia.transpose()).eval();
  ms.inertia_rate = 0.5 * (ms.inertia_rate + ms.inertia_rate.transpose()).eval();
  return ms;
}

inline MassState mass_state(const BodyModel& body, const Posture& posture,
                            const Posture& posture_rate) {
  return mass_state(body, segment_motion(body, posture, posture_rate));
}

/// Inertia about an arbitrary body-frame point.
inline Mat3 inertia_about(const BodyModel& body, const MassState& ms, const Vec3& point) {
  const Vec3 d = ms.cog - point;
  return ms.inertia + body.total_mass * (d.squaredNorm() * Mat3::Identity() - d * d.transpose());
}

/// Left/right partner of a joint (identity for spine joints).
inline Joint mirror_joint(Joint j) {
  switch (j) {
    case Joint::LeftShoulder: return Joint::RightShoulder;
    case Joint::LeftElbow: return Joint::RightElbow;
    case Joint::LeftWrist: return Joint::RightWrist;
    case Joint::RightShoulder: return Joint::LeftShoulder;
    case Joint::RightElbow: return Joint::LeftElbow;
    case Joint::RightWrist: return Joint::LeftWrist;
    case Joint::LeftHip: return Joint::RightHip;
    case Joint::LeftKnee: return Joint::RightKnee;
    case Joint::LeftAnkle: return Joint::RightAnkle;
    case Joint::RightHip: return Joint::LeftHip;
    case Joint::RightKnee: return Joint::LeftKnee;
    case Joint::RightAnkle: return Joint::LeftAnkle;
    default: return j;
  }
}

inline Segment mirror_segment(Segment s) {
  if (s <= Segment::Head) return s;
  return static_cast<Segment>(idx(mirror_joint(static_cast<Joint>(idx(s) - 1))) + 1);
}

/// Reflects a posture through the sagittal plane. A rotation about axis a by q
/// reflects to a rotation about -M a by q (M = diag(1,-1,1)); the partner
/// joint's matching axis is +/-(-M a), which fixes the sign per slot.
inline Posture mirror_posture(const BodyModel& body, const Posture& p) {
  const Vec3 m(1.0, -1.0, 1.0);
  Posture out;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const std::size_t partner = idx(mirror_joint(static_cast<Joint>(j)));
    for (std::size_t k = 0; k < 3; ++k) {
      const Vec3 reflected = -(m.asDiagonal() * body.joints[j].axes[k]);
      const double sign = reflected.dot(body.joints[partner].axes[k]) > 0.0 ? 1.0 : -1.0;
      out[3 * partner + k] = sign * p[3 * j + k];
    }
  }
  return out;
}

}  // namespace skyktm
