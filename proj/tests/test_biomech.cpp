#include <random>

#include <gtest/gtest.h>

#include "skyktm/biomech.hpp"

using namespace skyktm;

namespace {

Posture random_posture(std::mt19937_64& rng, double span = 0.6) {
  std::uniform_real_distribution<double> d(-span, span);
  Posture p;
  for (std::size_t i = 0; i < kDofCount; ++i) p[i] = d(rng);
  return p;
}

double rel_diff(const Mat3& a, const Mat3& b) { return (a - b).norm() / std::max(1e-12, b.norm()); }

}  // namespace

TEST(Body, SegmentMassesSumToTotal) {
  for (double m : {50.0, 80.0, 123.4}) {
    Anthropometrics a;
    a.total_mass = m;
    const BodyModel b = build_body(a);
    double sum = 0.0;
    for (const SegmentModel& s : b.segments) sum += s.mass;
    EXPECT_NEAR(sum, m, 1e-12 * m);
  }
}

TEST(Body, SixteenSegmentsFifteenJoints) {
  const BodyModel b = build_body({});
  EXPECT_EQ(b.segments.size(), 16u);
  EXPECT_EQ(b.joints.size(), 15u);
  EXPECT_EQ(kDofCount, 45u);
}

TEST(Body, HeadMassFromFractionTable) {
  const BodyModel b = build_body({});
  // 0.0694 of 80 kg, after renormalizing the table (sum of fractions).
  double total = 0.0;
  for (const SegmentParams& p : default_fraction_table()) total += p.mass_fraction;
  EXPECT_NEAR(b.segment(Segment::Head).mass, 80.0 * 0.0694 / total, 1e-12);
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(Body, LeftRightPairsMatch) {
  const BodyModel b = build_body({});
  for (std::size_t i = idx(Segment::LeftUpperArm); i < kSegmentCount; ++i) {
    const Segment s = static_cast<Segment>(i);
    const SegmentModel& l = b.segment(s);
    const SegmentModel& r = b.segment(mirror_segment(s));
    EXPECT_DOUBLE_EQ(l.mass, r.mass);
    EXPECT_TRUE(l.principal_inertia.isApprox(r.principal_inertia, 1e-14));
  }
}

TEST(Body, InertiaPositiveDefinite) {
  const BodyModel b = build_body({});
  for (const SegmentModel& s : b.segments)
    for (int k = 0; k < 3; ++k) EXPECT_GT(s.principal_inertia[k], 0.0) << s.name;
}

TEST(Body, RejectsBadAnthropometrics) {
  Anthropometrics a;
  a.total_mass = 0.0;
  EXPECT_THROW(build_body(a), Error);
  a = {};
  a.stature = -1.0;
  EXPECT_THROW(build_body(a), Error);
}

TEST(Body, OverridesRenormalizeMass) {
  Anthropometrics a;
  a.overrides[idx(Segment::Head)].mass_fraction = 0.2;
  a.overrides[idx(Segment::LeftThigh)].length = 0.5;
  const BodyModel b = build_body(a);
  double sum = 0.0;
  for (const SegmentModel& s : b.segments) sum += s.mass;
  EXPECT_NEAR(sum, 80.0, 1e-10);
  EXPECT_GT(b.segment(Segment::Head).mass, build_body({}).segment(Segment::Head).mass);
  EXPECT_DOUBLE_EQ(b.segment(Segment::LeftThigh).length, 0.5);
}

TEST(Kinematics, ZeroPostureIsReferenceLayout) {
  const BodyModel b = build_body({});
  const BodyPoses p = forward_kinematics(b, Posture{});
  EXPECT_TRUE(p[0].position.isZero());
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const JointModel& jm = b.joints[j];
    EXPECT_TRUE(p[idx(jm.child)].orientation.isApprox(Quat::Identity(), 1e-15));
    EXPECT_TRUE(p[idx(jm.child)].position.isApprox(p[idx(jm.parent)].position + jm.position, 1e-15));
  }
}

TEST(Kinematics, KneeMovesOnlyItsSubtree) {
  const BodyModel b = build_body({});
  Posture q;
  q.at(Joint::LeftKnee, Axis::Flexion) = 0.3;
  const BodyPoses a = forward_kinematics(b, Posture{});
  const BodyPoses c = forward_kinematics(b, q);
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const bool moved = !a[i].orientation.isApprox(c[i].orientation, 1e-15);
    const bool expected = i == idx(Segment::LeftShank) || i == idx(Segment::LeftFoot);
    EXPECT_EQ(moved, expected) << kSegmentNames[i];
  }
}

TEST(Kinematics, MirroredPostureGivesMirroredPoses) {
  const BodyModel b = build_body({});
  std::mt19937_64 rng(7);
  const Eigen::DiagonalMatrix<double, 3> M(1.0, -1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Posture p = random_posture(rng);
    const BodyPoses a = forward_kinematics(b, p);
    const BodyPoses m = forward_kinematics(b, mirror_posture(b, p));
    for (std::size_t i = 0; i < kSegmentCount; ++i) {
      const std::size_t k = idx(mirror_segment(static_cast<Segment>(i)));
      EXPECT_TRUE((M * a[i].position).isApprox(m[k].position, 1e-12) || a[i].position.norm() < 1e-12);
      // Reflected frame: R' = M R M.
      const Mat3 r = M * a[i].orientation.toRotationMatrix() * M;
      EXPECT_LT((r - m[k].orientation.toRotationMatrix()).norm(), 1e-12);
    }
  }
}

TEST(MassGeometry, SymmetricPostureCogOnSagittalPlane) {
  const BodyModel b = build_body({});
  Posture p;
  p.at(Joint::LeftHip, Axis::Flexion) = p.at(Joint::RightHip, Axis::Flexion) = -0.3;
  p.at(Joint::LeftKnee, Axis::Flexion) = p.at(Joint::RightKnee, Axis::Flexion) = -1.0;
  const MassState ms = mass_state(b, p, Posture{});
  EXPECT_NEAR(ms.cog.y(), 0.0, 1e-12);
}

TEST(MassGeometry, StaticPostureHasZeroRates) {
  const BodyModel b = build_body({});
  std::mt19937_64 rng(3);
  const MassState ms = mass_state(b, random_posture(rng), Posture{});
  EXPECT_TRUE(ms.cog_rate.isZero(0.0));
  EXPECT_LT(ms.inertia_rate.norm(), 1e-15);
}

TEST(MassGeometry, InertiaRateMatchesFiniteDifference) {
  const BodyModel b = build_body({});
  std::mt19937_64 rng(11);
  const double eps = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Posture p = random_posture(rng);
    const Posture rate = random_posture(rng, 1.0);
    const MassState ms = mass_state(b, p, rate);
    const MassState a = mass_state(b, p, Posture{});
    const MassState c = mass_state(b, p + rate * eps, Posture{});
    const Mat3 fd = (c.inertia - a.inertia) / eps;
    const Vec3 fd_cog = (c.cog - a.cog) / eps;
    EXPECT_LT(rel_diff(ms.inertia_rate, fd), 1e-4) << trial;
    EXPECT_LT((ms.cog_rate - fd_cog).norm(), 1e-4 * std::max(1.0, fd_cog.norm())) << trial;
  }
}

TEST(MassGeometry, InertiaSymmetricPositiveDefinite) {
  const BodyModel b = build_body({});
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const MassState ms = mass_state(b, random_posture(rng, 1.5), Posture{});
    EXPECT_LT((ms.inertia - ms.inertia.transpose()).norm(), 1e-14);
    Eigen::SelfAdjointEigenSolver<Mat3> es(ms.inertia);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(MassGeometry, CogMinimizesInertiaTrace) {
  const BodyModel b = build_body({});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const MassState ms = mass_state(b, random_posture(rng), Posture{});
    const Vec3 pt(d(rng), d(rng), d(rng));
    EXPECT_LE(ms.inertia.trace(), inertia_about(b, ms, pt).trace() + 1e-12);
  }
}

TEST(MassGeometry, Deterministic) {
  const BodyModel b = build_body({});
  std::mt19937_64 rng(1);
  const Posture p = random_posture(rng), r = random_posture(rng);
  const MassState a = mass_state(b, p, r), c = mass_state(b, p, r);
  EXPECT_EQ(a.inertia, c.inertia);
  EXPECT_EQ(a.inertia_rate, c.inertia_rate);
  EXPECT_EQ(a.cog, c.cog);
}
