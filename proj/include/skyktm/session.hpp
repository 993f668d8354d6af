#pragma once

// Episode orchestration. Per tick: guidance -> controllers -> Desired Posture
// cue -> input source -> dynamics -> record.

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "skyktm/biomech.hpp"
#include "skyktm/control.hpp"
#include "skyktm/cues.hpp"
#include "skyktm/dynamics.hpp"
#include "skyktm/guidance.hpp"
#include "skyktm/patterns.hpp"
#include "skyktm/trainee.hpp"

namespace skyktm {

struct SimConfig {
  Anthropometrics anthropometrics;
  AeroCoefficients aero;
  Environment environment;
  PatternSet patterns;
  double cue_max_rate = deg2rad(60.0);  // rad/s, displayed Desired Posture
  ControllerDesign controller = qft_design();
  double output_limit = deg2rad(30.0);  // rad
  double rate_hz = kDefaultRateHz;
  double trim_settle_time = 30.0;       // s, fall from rest before the episode
  ImitationSpec imitation;

  double dt() const { return 1.0 / rate_hz; }
  PatternSet cue_set() const {
    PatternSet s = patterns;
    for (DofLimit& l : s.limits) l.max_rate = std::min(l.max_rate, cue_max_rate);
    return s;
  }
  void validate() const {
    aero.validate();
    patterns.validate();
    validate_anthro();
    if (patterns.size() != 2) throw Error(ErrorCode::Config, "the controller drives exactly two patterns");
    if (!(rate_hz > 1.0 / kMaxStep)) throw Error(ErrorCode::Config, "rate must exceed 20 Hz");
    if (!(cue_max_rate > 0.0)) throw Error(ErrorCode::Config, "cue rate limit must be positive");
    if (!(output_limit > 0.0)) throw Error(ErrorCode::Config, "output limit must be positive");
  }

 private:
  void validate_anthro() const { skyktm::validate(anthropometrics); }
};

struct DelayCompensation {
  bool enabled = false;
  double t_delay = 0.0;    // s
  double max_delay = kMaxCompensatedDelay;
};

struct TrimSettings {
  bool enabled = false;
  TrimGains arms{0.0, 0.1};
  TrimGains legs{0.0, 0.01};
};

struct Scenario {
  std::string name = "default";
  Vec2 start{0.0, 0.0};
  Vec2 target{150.0, 0.0};
  std::vector<Vec2> via;            // optional intermediate waypoints
  double initial_heading = deg2rad(10.0);  // body yaw at t = 0, rad
  SpeedProfile speed;
  double corridor_half_width = 10.0;
  double t_la = 2.25;
  double t_predict = 2.0;
  double timeout = 240.0;
  double capture_radius = 2.0;
  TraineeSpec trainee;
  bool external_input = false;
  double stream_timeout = 1.0;      // s without external input before abort
  std::uint64_t seed = 1;
  DelayCompensation delay_compensation;
  TrimSettings adaptive_trim;

  void validate() const {
    if (!(timeout > 0.0)) throw Error(ErrorCode::Config, "timeout must be positive");
    if (!(capture_radius > 0.0)) throw Error(ErrorCode::Config, "capture radius must be positive");
    if (!(t_la > 0.0) || !(t_predict > 0.0)) throw Error(ErrorCode::Config, "t_LA and t_predict must be positive");
    if (!(stream_timeout > 0.0)) throw Error(ErrorCode::Config, "stream timeout must be positive");
    if (delay_compensation.enabled &&
        (delay_compensation.t_delay < 0.0 || delay_compensation.t_delay > delay_compensation.max_delay))
      throw Error(ErrorCode::DelayOutOfRange, "compensated delay outside [0, max_delay]");
    speed.validate();
  }

  PlannedPath plan() const {
    if (via.empty()) return plan_path(start, target, speed.cruise, speed, corridor_half_width);
    std::vector<Vec2> w{start};
    w.insert(w.end(), via.begin(), via.end());
    w.push_back(target);
    return PlannedPath(std::move(w), speed, corridor_half_width);
  }
};

enum class Outcome { Running, Completed, Timeout, Diverged, StreamLost };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Running: return "running";
    case Outcome::Completed: return "completed";
    case Outcome::Timeout: return "timeout";
    case Outcome::Diverged: return "diverged";
    case Outcome::StreamLost: return "stream-lost";
  }
  return "unknown";
}

inline Outcome outcome_from_string(std::string_view s) {
  for (Outcome o : {Outcome::Running, Outcome::Completed, Outcome::Timeout, Outcome::Diverged,
                    Outcome::StreamLost})
    if (s == to_string(o)) return o;
  throw Error(ErrorCode::CorruptRecord, "unknown outcome '" + std::string(s) + "'");
}

struct TickRecord {
  long tick = 0;
  double time = 0.0;  // s, after the step
  SkyState state;     // after the step
  double omega_com = 0.0, v_com = 0.0, psi_error = 0.0;
  double omega_meas = 0.0, v_meas = 0.0;  // before the step, as fed to the controller
  double u_arms = 0.0, u_legs = 0.0;      // commanded pattern angles
  double trim_arms = 0.0, trim_legs = 0.0;
  double cue_arms = 0.0, cue_legs = 0.0;    // displayed Desired Posture, projected
  double exec_arms = 0.0, exec_legs = 0.0;  // executed posture, projected
  Vec2 lookahead = Vec2::Zero();
  Arrow predicted_arrow, desired_arrow;
  CorridorStatus corridor;  // after the step
  Posture executed;         // held during the step
};

struct EpisodeLog {
  std::string scenario_name;
  std::uint64_t seed = 0;
  std::string config_hash;
  double rate_hz = kDefaultRateHz;
  double path_length = 0.0;
  Vec2 target = Vec2::Zero();
  SkyState initial_state;
  Posture initial_posture;
  std::vector<TickRecord> ticks;
  Outcome outcome = Outcome::Running;
  std::string outcome_detail;
};

struct ExternalInput {
  double u_arms = 0.0;  // rad
  double u_legs = 0.0;  // rad
  double client_timestamp_ms = 0.0;
};

/// Single-producer, latest-value-wins mailbox read once per tick.
class ExternalChannel {
 public:
  void push(const ExternalInput& in) {
    std::lock_guard lock(mu_);
    latest_ = in;
    fresh_ = true;
  }
  /// The newest input if one arrived since the previous take().
  std::optional<ExternalInput> take() {
    std::lock_guard lock(mu_);
    if (!fresh_) return std::nullopt;
    fresh_ = false;
    return latest_;
  }

 private:
  std::mutex mu_;
  ExternalInput latest_;
  bool fresh_ = false;
};

/// Twin simulation flying the same commands with an ideal actuator.
struct IdealTwin {
  SkyState state;
  ControllerBank bank;
  Posture cue;
};

class Session {
 public:
  Session(const SimConfig& config, const Scenario& scenario, ExternalChannel* external = nullptr)
      : config_(config), scenario_(scenario), body_(build_body(config.anthropometrics)),
        path_(scenario.plan()), bank_(config.controller, config.rate_hz, config.output_limit),
        cue_set_(config.cue_set()), external_(external),
        trim_(scenario.adaptive_trim.arms, scenario.adaptive_trim.legs) {
    config_.validate();
    scenario_.validate();
    if (scenario_.external_input && !external_)
      throw Error(ErrorCode::Config, "external input requested without a channel");
    if (!scenario_.external_input) {
      trainee_ = make_trainee(scenario_.trainee, scenario_.seed);
      trainee_->reset(config_.patterns.neutral);
    }
    dt_ = config_.dt();
    state_ = initial_state(body_, config_, scenario_);
    executed_ = config_.patterns.neutral;
    cue_ = config_.patterns.neutral;
    if (scenario_.adaptive_trim.enabled)
      twin_.emplace(IdealTwin{state_, ControllerBank(config.controller, config.rate_hz, config.output_limit),
                              config_.patterns.neutral});

    log_.scenario_name = scenario_.name;
    log_.seed = scenario_.seed;
    log_.rate_hz = config_.rate_hz;
    log_.path_length = path_.length();
    log_.target = path_.target();
    log_.initial_state = state_;
    log_.initial_posture = executed_;
  }

  /// Trimmed neutral fall, placed at the start point and yawed to the
  /// scenario heading.
  static SkyState initial_state(const BodyModel& body, const SimConfig& c, const Scenario& sc) {
    SkyState trim = settle(body, c.patterns.neutral, c.aero, c.trim_settle_time, c.dt(), c.environment);
    const Quat yaw(Eigen::AngleAxisd(sc.initial_heading - trim.body_yaw(), Vec3::UnitZ()));
    SkyState s;
    s.position = Vec3(sc.start.x(), sc.start.y(), 0.0);
    s.velocity = yaw * trim.velocity;
    s.orientation = (yaw * trim.orientation).normalized();
    s.angular_rate = trim.angular_rate;
    return s;
  }

  void set_config_hash(std::string h) { log_.config_hash = std::move(h); }
  void set_record(bool keep) { keep_ticks_ = keep; }

  bool finished() const { return log_.outcome != Outcome::Running; }
  Outcome outcome() const { return log_.outcome; }
  const EpisodeLog& log() const { return log_; }
  EpisodeLog take_log() { return std::move(log_); }
  const SkyState& state() const { return state_; }
  const PlannedPath& path() const { return path_; }
  const BodyModel& body() const { return body_; }
  const SimConfig& config() const { return config_; }
  const Scenario& scenario() const { return scenario_; }
  const TickRecord& last() const { return last_; }
  long ticks() const { return tick_; }

  CueFrame cue_frame() const {
    return {cue_, executed_, last_.predicted_arrow, last_.desired_arrow, scenario_.t_predict};
  }

  const TickRecord& tick() {
    if (finished()) throw Error(ErrorCode::InvalidArgument, "episode already finished");
    TickRecord r;
    r.tick = tick_;

    const GuidanceCommand g = guidance_step(path_, state_, scenario_.t_la);
    r.omega_com = g.omega_com;
    r.v_com = g.v_com;
    r.psi_error = g.psi_error;
    r.lookahead = g.lookahead_point;
    r.omega_meas = state_.yaw_rate();
    r.v_meas = state_.forward_speed();

    double om = r.omega_meas, vm = r.v_meas;
    const DelayCompensation& dc = scenario_.delay_compensation;
    if (dc.enabled && dc.t_delay > 0.0) {
      const PredictedMeasurement p = predict_measurements(body_, executed_, state_, config_.aero, dc.t_delay,
                                                          dt_, config_.environment, dc.max_delay);
      om = p.omega;
      vm = p.v;
    }
    const ControlOutput c = bank_.step(r.omega_com, r.v_com, om, vm);
    r.u_arms = c.u_arms;
    r.u_legs = c.u_legs;

    if (twin_) {
      const auto [ta, tl] = trim_.step(twin_->state.yaw_rate(), twin_->state.forward_speed(), r.omega_meas,
                                       r.v_meas, dt_);
      r.trim_arms = ta;
      r.trim_legs = tl;
      const double lim = config_.output_limit;
      r.u_arms = std::clamp(r.u_arms + ta, -lim, lim);
      r.u_legs = std::clamp(r.u_legs + tl, -lim, lim);
      advance_twin(g);
    }

    const std::array<double, 2> u{r.u_arms, r.u_legs};
    cue_ = desired_posture_cue(cue_set_, u, cue_, dt_);
    const Projection pc = project(config_.patterns, cue_);
    r.cue_arms = pc.u[0];
    r.cue_legs = pc.u[1];

    const double now = state_.time;
    Posture next;
    if (scenario_.external_input) {
      if (auto in = external_->take()) {
        external_u_ = {in->u_arms, in->u_legs};
        last_input_time_ = now;
      }
      const std::array<double, 2> ue{external_u_[0], external_u_[1]};
      next = compose_posture(config_.patterns, ue);
    } else {
      next = trainee_->step(cue_, dt_);
    }
    const Posture rate = (next - executed_) * (1.0 / dt_);
    executed_ = next;
    r.executed = executed_;
    const Projection pe = project(config_.patterns, executed_);
    r.exec_arms = pe.u[0];
    r.exec_legs = pe.u[1];

    const ArrowPair arrows = forward_arrows(state_, r.omega_meas, r.omega_com, scenario_.t_predict);
    r.predicted_arrow = arrows.predicted;
    r.desired_arrow = arrows.desired;

    try {
      state_ = step(body_, executed_, rate, state_, config_.aero, dt_, config_.environment);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Divergence && e.code() != ErrorCode::NonFiniteState) throw;
      r.state = state_;
      r.time = (tick_ + 1) * dt_;
      r.corridor = corridor_status(path_, {state_.position.x(), state_.position.y()});
      finish(r, Outcome::Diverged, e.what());
      return last_;
    }
    // Keep the clock on the tick grid.
    state_.time = static_cast<double>(tick_ + 1) * dt_;
    r.time = state_.time;
    r.state = state_;
    const Vec2 pos(state_.position.x(), state_.position.y());
    r.corridor = corridor_status(path_, pos);

    if ((pos - path_.target()).norm() <= scenario_.capture_radius) {
      finish(r, Outcome::Completed, "");
    } else if (r.time >= scenario_.timeout - 1e-9) {
      finish(r, Outcome::Timeout, "");
    } else if (scenario_.external_input && r.time - last_input_time_ > scenario_.stream_timeout) {
      finish(r, Outcome::StreamLost, "no input for more than " + std::to_string(scenario_.stream_timeout) + " s");
    } else {
      push(r);
    }
    return last_;
  }

 private:
  void advance_twin(const GuidanceCommand& g) {
    IdealTwin& t = *twin_;
    const ControlOutput c = t.bank.step(g.omega_com, g.v_com, t.state.yaw_rate(), t.state.forward_speed());
    const std::array<double, 2> u{c.u_arms, c.u_legs};
    const Posture prev = t.cue;
    t.cue = desired_posture_cue(cue_set_, u, t.cue, dt_);
    t.state = step(body_, t.cue, (t.cue - prev) * (1.0 / dt_), t.state, config_.aero, dt_, config_.environment);
  }

  void push(const TickRecord& r) {
    last_ = r;
    if (keep_ticks_) log_.ticks.push_back(r);
    ++tick_;
  }

  void finish(const TickRecord& r, Outcome o, std::string detail) {
    push(r);
    log_.outcome = o;
    log_.outcome_detail = std::move(detail);
  }

  SimConfig config_;
  Scenario scenario_;
  BodyModel body_;
  PlannedPath path_;
  ControllerBank bank_;
  PatternSet cue_set_;
  ExternalChannel* external_;
  std::unique_ptr<TraineeModel> trainee_;
  AdaptiveTrim trim_;
  std::optional<IdealTwin> twin_;
  double dt_ = 1.0 / kDefaultRateHz;
  SkyState state_;
  Posture executed_;
  Posture cue_;
  std::array<double, 2> external_u_{0.0, 0.0};
  double last_input_time_ = 0.0;
  long tick_ = 0;
  bool keep_ticks_ = true;
  TickRecord last_;
  EpisodeLog log_;
};

/// Runs a headless episode to its outcome.
inline EpisodeLog run_episode(const SimConfig& config, const Scenario& scenario,
                              ExternalChannel* external = nullptr) {
  Session s(config, scenario, external);
  while (!s.finished()) s.tick();
  return s.take_log();
}

struct Metrics {
  std::optional<double> completion_time;  // s
  double max_abs_u_arms = 0.0;            // rad
  double max_abs_u_legs = 0.0;            // rad
  double max_abs_omega_com = 0.0;         // rad/s
  double yaw_rate_rms = 0.0;              // rad/s, omega_com - omega_meas
  double corridor_violation_time = 0.0;   // s
  double progress_fraction = 0.0;
  double max_abs_cross_track = 0.0;       // m
  double final_distance = 0.0;            // m to the target
  int yaw_error_crossings_20s = 0;        // most sign changes in any 20 s window
  long ticks = 0;
  Outcome outcome = Outcome::Running;
};

inline constexpr double kOscillationHysteresis = 0.2;  // rad/s
inline constexpr double kOscillationWindow = 20.0;              // s

/// Sign changes of `x` with a dead band of +-hysteresis: a change is counted
/// when the signal leaves the band on the side opposite to the last exit.
/// Returns the times of the counted changes.
inline std::vector<double> sign_changes(const std::vector<double>& t, const std::vector<double>& x,
                                        double hysteresis) {
  std::vector<double> out;
  int side = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int s = x[i] > hysteresis ? 1 : (x[i] < -hysteresis ? -1 : 0);
    if (s == 0) continue;
    if (side != 0 && s != side) out.push_back(t[i]);
    side = s;
  }
  return out;
}

/// Largest number of counted sign changes inside any window of `window` s.
inline int max_changes_in_window(const std::vector<double>& change_times, double window) {
  int best = 0;
  std::size_t lo = 0;
  for (std::size_t hi = 0; hi < change_times.size(); ++hi) {
    while (change_times[hi] - change_times[lo] > window) ++lo;
    best = std::max(best, static_cast<int>(hi - lo + 1));
  }
  return best;
}

/// At least three sign changes of the yaw-rate tracking error in some 20 s
/// window.
inline bool sustained_oscillation(const Metrics& m) { return m.yaw_error_crossings_20s >= 3; }

inline Metrics compute_metrics(const EpisodeLog& log) {
  if (log.ticks.empty()) throw Error(ErrorCode::EmptyLog, "log has no ticks");
  Metrics m;
  const double dt = 1.0 / log.rate_hz;
  double sq = 0.0;
  std::vector<double> t, e;
  t.reserve(log.ticks.size());
  e.reserve(log.ticks.size());
  for (const TickRecord& r : log.ticks) {
    m.max_abs_u_arms = std::max(m.max_abs_u_arms, std::abs(r.u_arms));
    m.max_abs_u_legs = std::max(m.max_abs_u_legs, std::abs(r.u_legs));
    m.max_abs_omega_com = std::max(m.max_abs_omega_com, std::abs(r.omega_com));
    m.max_abs_cross_track = std::max(m.max_abs_cross_track, std::abs(r.corridor.cross_track));
    const double err = r.omega_com - r.omega_meas;
    sq += err * err;
    if (!r.corridor.inside) m.corridor_violation_time += dt;
    t.push_back(r.time);
    e.push_back(err);
  }
  const TickRecord& last = log.ticks.back();
  m.ticks = static_cast<long>(log.ticks.size());
  m.yaw_rate_rms = std::sqrt(sq / static_cast<double>(log.ticks.size()));
  m.progress_fraction = log.path_length > 0.0 ? std::clamp(last.corridor.progress / log.path_length, 0.0, 1.0) : 0.0;
  m.yaw_error_crossings_20s = max_changes_in_window(sign_changes(t, e, kOscillationHysteresis), kOscillationWindow);
  m.final_distance = (Vec2(last.state.position.x(), last.state.position.y()) - log.target).norm();
  m.outcome = log.outcome;
  if (log.outcome == Outcome::Completed) m.completion_time = last.time;
  return m;
}

/// Re-integrates the dynamics from the logged executed postures.
inline std::vector<SkyState> resimulate(const EpisodeLog& log, const SimConfig& config) {
  const BodyModel body = build_body(config.anthropometrics);
  const double dt = 1.0 / log.rate_hz;
  std::vector<SkyState> out;
  out.reserve(log.ticks.size());
  SkyState s = log.initial_state;
  Posture prev = log.initial_posture;
  for (const TickRecord& r : log.ticks) {
    s = step(body, r.executed, (r.executed - prev) * (1.0 / dt), s, config.aero, dt, config.environment);
    s.time = r.time;
    prev = r.executed;
    out.push_back(s);
  }
  return out;
}

}  // namespace skyktm
