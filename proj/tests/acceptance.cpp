#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <fmt/core.h>

#include "skyktm/config.hpp"
#include "skyktm/cues.hpp"
#include "skyktm/logio.hpp"
#include "skyktm/session.hpp"

using namespace skyktm;
using cd = std::complex<double>;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.detail = std::string("exception: ") + e.what();
  }
  const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (c.ok && took > budget_s) {
    c.ok = false;
    c.detail = fmt::format("runtime {:.1f} s over {:.0f} s budget", took, budget_s);
  }
  if (!c.ok) ++failures;
  fmt::print("{} {} ({:.2f} s){}{}\n", c.ok ? "PASS" : "FAIL", name, took, c.detail.empty() ? "" : ": ", c.detail);
  std::fflush(stdout);
}

double state_distance(const SkyState& a, const SkyState& b) {
  double q = (a.orientation.coeffs() - b.orientation.coeffs()).norm();
  q = std::min(q, (a.orientation.coeffs() + b.orientation.coeffs()).norm());
  return (a.position - b.position).norm() + (a.velocity - b.velocity).norm() + q +
         (a.angular_rate - b.angular_rate).norm();
}

cd lead(cd s, double w) { return 1.0 + s / w; }

void physics(Check& c) {
  const BodyModel b = build_body({});
  const Posture p = default_neutral();
  const double dt = 1.0 / 240.0;

  SkyState s;
  for (int i = 0; i < 2400; ++i) s = step(b, p, Posture{}, s, AeroCoefficients{}, dt);
  const double t = 2400 * dt;
  c.require(std::abs(s.velocity.z() / (kGravity * t) - 1.0) <= 1e-6, "vacuum velocity off g t");
  c.require(std::abs(s.position.z() / (0.5 * kGravity * t * t) - 1.0) <= 1e-6, "vacuum distance off g t^2 / 2");

  const double v = settle(b, p, kDefaultAero, 40.0).velocity.norm();
  c.require(std::abs(v / 61.0 - 1.0) <= 0.15, fmt::format("terminal speed {:.2f} m/s", v));

  SkyState s0;
  s0.velocity = {8.0, -3.0, 45.0};
  s0.angular_rate = {0.4, -0.6, 0.9};
  s0.orientation = Quat(Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()));
  auto run = [&](int n) {
    SkyState x = s0;
    for (int i = 0; i < n; ++i) x = step(b, p, Posture{}, x, kDefaultAero, 0.4 / n);
    return x;
  };
  const SkyState ref = run(512);
  const double e8 = state_distance(run(8), ref), e16 = state_distance(run(16), ref), e32 = state_distance(run(32), ref);
  const double order = std::min(std::log2(e8 / e16), std::log2(e16 / e32));
  c.require(order >= 3.5, fmt::format("observed order {:.2f}", order));
  if (c.ok) c.detail = fmt::format("terminal {:.2f} m/s, order {:.2f}", v, order);
}

void controller_fidelity(Check& c) {
  using Response = std::function<cd(cd)>;
  const std::vector<std::pair<const char*, Response>> refs{
      {"G11", [](cd s) { return 0.25 * lead(s, 3.5) * lead(s, 0.7) / (s * lead(s, 10) * lead(s, 100)); }},
      {"F11", [](cd s) { return lead(s, 0.6) / (lead(s, 7) * lead(s, 8) * lead(s, 1)); }},
      {"G22", [](cd s) { return 0.1 * lead(s, 1.5) * lead(s, 0.2) * lead(s, 1) / (s * lead(s, 0.6) * lead(s, 10)); }},
      {"G21", [](cd s) { return -0.035 * lead(s, 3) * lead(s, 1) * lead(s, 0.5) / (s * s * lead(s, 5)); }},
      {"F22", [](cd s) { return 1.0 / (lead(s, 1) * lead(s, 2)); }}};
  const ControllerBank bank(qft_design(), 240.0);
  const std::vector<const DiscreteLTI*> blocks{&bank.g11(), &bank.f11(), &bank.g22(), &bank.g21(), &bank.f22()};
  double worst = 0.0;
  for (std::size_t k = 0; k < refs.size(); ++k)
    for (int i = 0; i < 400; ++i) {
      const double w = 0.01 * std::pow(1000.0, i / 399.0);
      const double err = std::abs(std::abs(blocks[k]->freq(w)) / std::abs(refs[k].second(cd(0.0, w))) - 1.0);
      worst = std::max(worst, err);
      c.require(err <= 0.01, fmt::format("{} off by {:.3g} at {:.4g} rad/s", refs[k].first, err, w));
    }
  if (c.ok) c.detail = fmt::format("worst magnitude error {:.2e}", worst);
}

void ideal_closed_loop(Check& c) {
  const EpisodeLog log = run_episode(default_sim_config(), Scenario{});
  const Metrics m = compute_metrics(log);
  c.require(m.completion_time && *m.completion_time <= 120.0, std::string("outcome ") + to_string(m.outcome));
  c.require(m.corridor_violation_time == 0.0, fmt::format("corridor violation {:.2f} s", m.corridor_violation_time));
  c.require(m.max_abs_u_arms <= deg2rad(10.0), fmt::format("max |u_arms| {:.2f} deg", rad2deg(m.max_abs_u_arms)));
  if (c.ok)
    c.detail = fmt::format("completed in {:.2f} s, max |u_arms| {:.2f} deg", *m.completion_time,
                           rad2deg(m.max_abs_u_arms));
}

void delay_study(Check& c) {
  const SimConfig cfg = default_sim_config();
  Scenario sc;
  sc.trainee.kind = "pure_delay";
  sc.trainee.delay = 0.0;
  const Metrics m0 = compute_metrics(run_episode(cfg, sc));
  c.require(!sustained_oscillation(m0), fmt::format("delay 0: {} changes/20 s", m0.yaw_error_crossings_20s));
  c.require(m0.outcome == Outcome::Completed, "delay 0 did not complete");
  std::string summary = fmt::format("0 s: {} changes", m0.yaw_error_crossings_20s);
  for (int i = 0; i <= 7; ++i) {
    const double d = 0.70 + 0.05 * i;
    sc.trainee.delay = d;
    const Metrics m = compute_metrics(run_episode(cfg, sc));
    c.require(sustained_oscillation(m), fmt::format("delay {:.2f}: no sustained oscillation", d));
    c.require(m.completion_time && *m.completion_time <= 240.0,
              fmt::format("delay {:.2f}: {}", d, to_string(m.outcome)));
    summary += fmt::format("; {:.2f} s: {} changes, {}", d, m.yaw_error_crossings_20s,
                           m.completion_time ? fmt::format("{:.0f} s", *m.completion_time) : "-");
  }
  if (c.ok) c.detail = summary;
}

void frozen_baseline(Check& c) {
  Scenario sc;
  sc.trainee = frozen_trainee_spec();
  const Metrics m = compute_metrics(run_episode(default_sim_config(), sc));
  c.require(m.outcome == Outcome::Timeout, std::string("outcome ") + to_string(m.outcome));
  c.require(m.progress_fraction < 0.5, fmt::format("progress {:.2f}", m.progress_fraction));
  if (c.ok) c.detail = fmt::format("timeout, progress {:.2f}", m.progress_fraction);
}

SkyState flying(double heading, double speed, const Vec2& pos) {
  SkyState s;
  s.position = {pos.x(), pos.y(), 0.0};
  s.velocity = {speed * std::cos(heading), speed * std::sin(heading), 60.0};
  s.orientation = Quat(Eigen::AngleAxisd(heading, Vec3::UnitZ()));
  return s;
}

void property_suites(Check& c) {
  // Steering law over a heading/bearing grid with wrap cases.
  for (int hd = -180; hd <= 180; hd += 5)
    for (int bd = -180; bd <= 180; bd += 5) {
      const double h = deg2rad(hd), b = deg2rad(bd);
      const Vec2 dir(std::cos(b), std::sin(b));
      const PlannedPath path({10.0 * dir, 110.0 * dir}, SpeedProfile{}, 10.0);
      const GuidanceCommand g = guidance_step(path, flying(h, 0.5, Vec2::Zero()), 2.0);
      int diff = ((bd - hd) % 360 + 540) % 360 - 180;
      if (diff == -180) {
        c.require(std::abs(std::abs(g.psi_error) - kPi) <= 1e-9, "antipodal heading error");
        continue;
      }
      c.require(std::abs(g.psi_error - deg2rad(diff)) <= 1e-9, fmt::format("psi at h={} b={}", hd, bd));
      c.require(std::abs(g.omega_com - deg2rad(diff)) <= 1e-9, fmt::format("omega at h={} b={}", hd, bd));
    }
  {
    const double b = deg2rad(-179.0);
    const Vec2 dir(std::cos(b), std::sin(b));
    const PlannedPath path({10.0 * dir, 110.0 * dir}, SpeedProfile{}, 10.0);
    const GuidanceCommand g = guidance_step(path, flying(deg2rad(179.0), 0.5, Vec2::Zero()), 2.0);
    c.require(std::abs(g.psi_error - deg2rad(2.0)) <= 1e-9, "179/-179 wrap");
  }

  // Arrows coincide iff the rates are equal.
  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> rate(-2.5, 2.5), head(-kPi, kPi), spd(0.2, 20.0), pos(-100, 100);
  for (int trial = 0; trial < 20000; ++trial) {
    const SkyState s = flying(head(rng), spd(rng), Vec2(pos(rng), pos(rng)));
    const double om = rate(rng);
    const double oc = trial % 3 == 0 ? om : rate(rng);
    const ArrowPair a = forward_arrows(s, om, oc, 2.0);
    const bool same = (a.predicted.tip - a.desired.tip).norm() <= 1e-9 &&
                      std::abs(wrap_angle(a.predicted.heading - a.desired.heading)) <= 1e-9;
    c.require(same == (om == oc), "arrow coincidence");
  }

  // Chord formula against Euler integration of the turn.
  const double v = 10.0, om = 0.5, t = 2.0;
  const Vec2 d = constant_turn_displacement(v, om, 0.3, t);
  Vec2 p = Vec2::Zero();
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double a = 0.3 + om * (i + 0.5) * t / n;
    p += (t / n) * v * Vec2(std::cos(a), std::sin(a));
  }
  c.require((d - p).norm() <= 1e-6, "chord vs integration");
  c.require(std::abs(d.norm() - 2.0 * v / om * std::sin(om * t / 2.0)) <= 1e-12, "chord length");
  c.require(std::abs(d.norm() - 19.18) <= 0.005, "chord 19.18 m");

  // Clamp safety over random streams.
  const PatternSet set = default_sim_config().patterns;
  std::normal_distribution<double> jump(0.0, 0.3);
  std::uniform_real_distribution<double> dt_d(1.0 / 1000, 1.0 / 30);
  for (int stream = 0; stream < 10000; ++stream) {
    Posture prev = set.neutral;
    for (int k = 0; k < 25; ++k) {
      const double dt = dt_d(rng);
      Posture cmd = prev;
      for (std::size_t i = 0; i < kDofCount; ++i) cmd[i] += jump(rng);
      const Posture out = clamp(set, cmd, prev, dt);
      for (std::size_t i = 0; i < kDofCount; ++i) {
        const bool in_range = out[i] >= set.limits[i].min && out[i] <= set.limits[i].max;
        const bool in_rate = std::abs(out[i] - prev[i]) <= set.limits[i].max_rate * dt * (1 + 1e-12);
        if (!in_range || !in_rate) {
          c.require(false, fmt::format("clamp violated on stream {}", stream));
          return;
        }
      }
      prev = out;
    }
  }

  // Reference pattern vectors, exact.
  const PatternBasis tr = patterns::turning(), fb = patterns::forward_backward();
  for (std::size_t i = 0; i < kDofCount; ++i) {
    const bool arm = i == 9 || i == 11 || i == 18 || i == 20;
    const double leg = (i == 30 || i == 39) ? 0.582 : ((i == 27 || i == 36) ? 0.402 : 0.0);
    c.require(tr[i] == (arm ? 0.5 : 0.0), "turning pattern value at " + dof_name(i));
    c.require(fb[i] == leg, "forward/backward pattern value at " + dof_name(i));
  }

  // Imitation waveform at quarter periods.
  const ImitationSpec spec;
  for (int q = 0; q < 400; ++q) {
    const double expect = q % 2 == 0 ? 0.0 : (q % 4 == 1 ? 1.0 : -1.0) * deg2rad(10.0);
    c.require(imitation_angle(spec, q * 1.0) == expect, fmt::format("imitation at {} s", q));
  }
}

std::string log_bytes(const Scenario& sc) {
  const SimConfig cfg = default_sim_config();
  Session s(cfg, sc);
  s.set_config_hash(config_hash(cfg));
  while (!s.finished()) s.tick();
  std::ostringstream os;
  write_log(os, s.take_log(), {to_json(sc), to_json(cfg)});
  return os.str();
}

void determinism(Check& c) {
  Scenario sc;
  sc.trainee.kind = "noisy";
  sc.seed = 7;
  const std::string a = log_bytes(sc), b = log_bytes(sc);
  c.require(a == b, "noisy run logs differ");
  Scenario ideal;
  c.require(log_bytes(ideal) == log_bytes(ideal), "ideal run logs differ");
  sc.seed = 8;
  c.require(log_bytes(sc) != a, "seed has no effect");
  if (c.ok) c.detail = fmt::format("{} bytes identical", a.size());
}

}  // namespace

int main() {
  criterion("physics sanity", 10.0, physics);
  criterion("controller fidelity", 5.0, controller_fidelity);
  criterion("closed loop, ideal trainee", 30.0, ideal_closed_loop);
  criterion("closed-loop delay study", 60.0, delay_study);
  criterion("no-control baseline", 60.0, frozen_baseline);
  criterion("guidance and cue properties", 10.0, property_suites);
  criterion("determinism", 60.0, determinism);
  return failures == 0 ? 0 : 1;
}
