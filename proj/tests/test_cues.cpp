#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "skyktm/config.hpp"
#include "skyktm/cues.hpp"

using namespace skyktm;

namespace {

SkyState flying(double heading, double speed, const Vec3& pos = Vec3::Zero()) {
  SkyState s;
  s.position = pos;
  s.velocity = {speed * std::cos(heading), speed * std::sin(heading), 61.0};
  s.orientation = Quat(Eigen::AngleAxisd(heading, Vec3::UnitZ()));
  return s;
}

// Euler integration of constant-turn kinematics with a fine step.
Vec2 integrate_turn(double v, double omega, double psi, double t) {
  const int n = 200000;
  const double h = t / n;
  Vec2 p = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    const double a = psi + omega * (i + 0.5) * h;
    p += h * v * Vec2(std::cos(a), std::sin(a));
  }
  return p;
}

bool coincide(const ArrowPair& a) {
  return (a.predicted.tip - a.desired.tip).norm() <= 1e-9 &&
         std::abs(wrap_angle(a.predicted.heading - a.desired.heading)) <= 1e-9 &&
         (a.predicted.origin - a.desired.origin).norm() <= 1e-9;
}

}  // namespace

TEST(Arrows, StraightAhead) {
  const ArrowPair a = forward_arrows(flying(0.0, 10.0), 0.0, 0.0, 2.0);
  EXPECT_NEAR(a.predicted.tip.x(), 20.0, 1e-12);
  EXPECT_NEAR(a.predicted.tip.y(), 0.0, 1e-12);
  EXPECT_NEAR(a.predicted.tip.z(), 122.0, 1e-12);
  EXPECT_EQ(a.predicted.heading, 0.0);
}

TEST(Arrows, ChordOracle) {
  const double v = 10.0, om = 0.5, t = 2.0;
  const Vec2 d = constant_turn_displacement(v, om, 0.0, t);
  EXPECT_NEAR(d.norm(), 2.0 * (v / om) * std::sin(om * t / 2.0), 1e-12);
  EXPECT_NEAR(d.norm(), 19.18, 0.005);
  EXPECT_NEAR(std::atan2(d.y(), d.x()), 0.5, 1e-12);
  const ArrowPair a = forward_arrows(flying(0.0, v), om, om, t);
  EXPECT_NEAR(a.predicted.heading, 1.0, 1e-12);
  EXPECT_LT((constant_turn_displacement(v, om, 0.3, t) - integrate_turn(v, om, 0.3, t)).norm(), 1e-6);
}

TEST(Arrows, ContinuousThroughZeroRate) {
  const double v = 8.0, t = 2.0;
  const Vec2 z = constant_turn_displacement(v, 0.0, 0.2, t);
  for (double om : {1e-3, 1e-4, 1e-5, 1e-6, 1e-8, -1e-6, -1e-3}) {
    const Vec2 d = constant_turn_displacement(v, om, 0.2, t);
    EXPECT_LT((d - z).norm(), 2.0 * v * t * std::abs(om) * t);
    EXPECT_LT((d - integrate_turn(v, om, 0.2, t)).norm(), 1e-7);
  }
}

TEST(Arrows, CoincideIffRatesEqual) {
  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> rate(-2.5, 2.5), head(-kPi, kPi), spd(0.2, 20.0), pos(-100, 100);
  for (int trial = 0; trial < 20000; ++trial) {
    const SkyState s = flying(head(rng), spd(rng), Vec3(pos(rng), pos(rng), pos(rng)));
    const double om = rate(rng);
    const bool same = trial % 3 == 0;
    const double oc = same ? om : rate(rng);
    const ArrowPair a = forward_arrows(s, om, oc, 2.0);
    EXPECT_EQ(coincide(a), om == oc) << trial;
  }
  const ArrowPair tiny = forward_arrows(flying(0.3, 5.0), 0.1, 0.1 + 1e-6, 2.0);
  EXPECT_FALSE(coincide(tiny));
}

TEST(Arrows, SharedOrigin) {
  const ArrowPair a = forward_arrows(flying(1.0, 4.0), 0.2, -0.4, 2.0);
  EXPECT_EQ(a.predicted.origin, a.desired.origin);
  EXPECT_EQ(a.predicted.origin, a.predicted.tip);
  EXPECT_THROW(forward_arrows(flying(0, 1), 0, 0, 0.0), Error);
}

TEST(Arrows, HeadingsWrapped) {
  const ArrowPair a = forward_arrows(flying(3.0, 5.0), 2.0, -2.0, 2.0);
  EXPECT_LE(std::abs(a.predicted.heading), kPi);
  EXPECT_LE(std::abs(a.desired.heading), kPi);
  EXPECT_NEAR(a.predicted.heading, wrap_angle(7.0), 1e-12);
}

TEST(DesiredCue, ZeroIsNeutral) {
  const PatternSet s = default_sim_config().patterns;
  const std::vector<double> u{0.0, 0.0};
  EXPECT_EQ(desired_posture_cue(s, u, s.neutral, 1.0 / 240), s.neutral);
}

TEST(DesiredCue, StepSlewsAtRateLimit) {
  const PatternSet s = default_sim_config().patterns;
  const std::vector<double> u{deg2rad(20.0), 0.0};
  Posture prev = s.neutral;
  const double dt = 1.0 / 240;
  for (int k = 1; k <= 24; ++k) {
    const Posture out = desired_posture_cue(s, u, prev, dt);
    for (std::size_t i : patterns::kArmsDofs) EXPECT_NEAR(out[i] - s.neutral[i], k * deg2rad(60.0) * dt, 1e-12);
    prev = out;
  }
}

TEST(DesiredCue, SafetyOverRandomStreams) {
  const PatternSet s = default_sim_config().patterns;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-deg2rad(60), deg2rad(60));
  const double dt = 1.0 / 240;
  for (int stream = 0; stream < 10000; ++stream) {
    Posture prev = s.neutral;
    for (int k = 0; k < 30; ++k) {
      const std::vector<double> uv{u(rng), u(rng)};
      const Posture out = desired_posture_cue(s, uv, prev, dt);
      for (std::size_t i = 0; i < kDofCount; ++i) {
        ASSERT_GE(out[i], s.limits[i].min);
        ASSERT_LE(out[i], s.limits[i].max);
        ASSERT_LE(std::abs(out[i] - prev[i]), s.limits[i].max_rate * dt * (1 + 1e-12));
      }
      prev = out;
    }
  }
}

TEST(Imitation, QuarterPeriodsExact) {
  ImitationSpec spec;
  const Posture n = default_neutral();
  EXPECT_EQ(imitation_angle(spec, 0.0), 0.0);
  EXPECT_EQ(imitation_angle(spec, 1.0), deg2rad(10.0));
  EXPECT_EQ(imitation_angle(spec, 2.0), 0.0);
  EXPECT_EQ(imitation_angle(spec, 3.0), -deg2rad(10.0));
  EXPECT_EQ(imitation_angle(spec, 4.0), 0.0);
  EXPECT_EQ(imitation_target(spec, n, 0.0), n);
  EXPECT_EQ(imitation_target(spec, n, 2.0), n);
  const Posture p = imitation_target(spec, n, 1.0);
  for (std::size_t i : patterns::kArmsDofs) EXPECT_NEAR(p[i] - n[i], 0.5 * deg2rad(10.0), 1e-15);
  for (int q = 0; q < 400; ++q) {
    const double t = q * 1.0;
    const double expect = q % 2 == 0 ? 0.0 : (q % 4 == 1 ? 1.0 : -1.0) * deg2rad(10.0);
    EXPECT_EQ(imitation_angle(spec, t), expect) << t;
  }
}

TEST(Imitation, MatchesSine) {
  ImitationSpec spec;
  for (double t = 0; t < 20; t += 0.0137)
    EXPECT_NEAR(imitation_angle(spec, t), deg2rad(10.0) * std::sin(2 * kPi * 0.25 * t), 1e-14);
}

TEST(Imitation, Periodic) {
  ImitationSpec spec;
  const Posture n = default_neutral();
  for (int k = 0; k < 640; ++k) {
    const double t = k / 64.0;
    EXPECT_EQ(imitation_target(spec, n, t), imitation_target(spec, n, t + 4.0)) << t;
  }
  EXPECT_THROW(imitation_target(spec, n, -1.0), Error);
}

TEST(PostureErrorTest, IdenticalAccumulates) {
  PostureErrorTracker tr(deg2rad(3.0), 3.0);
  const Posture p = default_neutral();
  for (int k = 0; k < 240 * 3; ++k) {
    const PostureError e = tr.update(p, p, 1.0 / 240);
    EXPECT_EQ(e.rms, 0.0);
  }
  EXPECT_NEAR(tr.timer(), 3.0, 1e-9);
  EXPECT_TRUE(tr.held() || tr.timer() > 3.0 - 1e-9);
}

TEST(PostureErrorTest, SingleDofRms) {
  Posture a, b;
  const double delta = 0.123;
  b[17] = delta;
  const PostureError e = PostureErrorTracker::evaluate(a, b);
  EXPECT_NEAR(e.rms, delta / std::sqrt(45.0), 1e-15);
  EXPECT_EQ(e.per_dof[17], delta);
}

TEST(PostureErrorTest, TimerResetsAtBursts) {
  const double dt = 0.01;
  PostureErrorTracker tr(deg2rad(3.0), 3.0);
  const Posture want = default_neutral();
  Posture quiet = want, burst = want;
  for (std::size_t i = 0; i < kDofCount; ++i) {
    quiet[i] += deg2rad(1.0);
    burst[i] += deg2rad(5.0);
  }
  const std::set<int> bursts{50, 51, 180, 400};
  double expect = 0.0;
  for (int k = 0; k < 720; ++k) {
    const bool b = bursts.count(k) > 0;
    const PostureError e = tr.update(want, b ? burst : quiet, dt);
    expect = b ? 0.0 : expect + dt;
    ASSERT_EQ(e.within_threshold_for, expect) << k;
    if (b) ASSERT_EQ(tr.timer(), 0.0);
  }
  EXPECT_TRUE(tr.held());
}

TEST(Corridor, LinesOffsetByHalfWidth) {
  const PlannedPath path({{0, 0}, {100, 0}, {100, 50}}, SpeedProfile{}, 10.0);
  const CorridorLines c = corridor_lines(path);
  ASSERT_EQ(c.left.size(), 4u);
  EXPECT_EQ(c.left[0], Vec2(0, -10));
  EXPECT_EQ(c.right[0], Vec2(0, 10));
  EXPECT_EQ(c.left[2], Vec2(110, 0));
  EXPECT_EQ(c.right[3], Vec2(90, 50));
  EXPECT_NEAR(corridor_status(path, c.left[0]).cross_track, -10.0, 1e-12);
  EXPECT_NEAR(corridor_status(path, c.right[3]).cross_track, 10.0, 1e-12);
}
