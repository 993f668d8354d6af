#pragma once

// Episode logs as JSON lines: a header object, one record per tick, and an
// outcome trailer. Doubles are written with round-trip precision.

#include <chrono>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include <fmt/format.h>

#include "skyktm/config.hpp"

namespace skyktm {

inline constexpr const char* kLogFormat = "skyktm-log";
inline constexpr int kLogVersion = 1;

/// A corrupt or truncated log; `record()` is the 0-based line index.
class CorruptLog : public Error {
 public:
  CorruptLog(std::size_t record, const std::string& what)
      : Error(ErrorCode::CorruptRecord, "record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

namespace detail {

inline Json v3(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }
inline Vec3 to_v3(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::CorruptRecord, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json posture_json(const Posture& p) {
  Json a = Json::array();
  for (std::size_t i = 0; i < kDofCount; ++i) a.push_back(p[i]);
  return a;
}
inline Posture to_posture(const Json& j) {
  if (!j.is_array() || j.size() != kDofCount) throw Error(ErrorCode::CorruptRecord, "posture needs 45 values");
  Posture p;
  for (std::size_t i = 0; i < kDofCount; ++i) p[i] = j[i].get<double>();
  return p;
}

inline Json arrow_json(const Arrow& a) {
  return {{"origin", v3(a.origin)}, {"heading", a.heading}, {"tip", v3(a.tip)}};
}
inline Arrow to_arrow(const Json& j) { return {to_v3(j.at("origin")), j.at("heading").get<double>(), to_v3(j.at("tip"))}; }

}  // namespace detail

inline Json to_json(const SkyState& s) {
  const Quat& q = s.orientation;
  return {{"t", s.time},
          {"pos", detail::v3(s.position)},
          {"vel", detail::v3(s.velocity)},
          {"quat", Json::array({q.w(), q.x(), q.y(), q.z()})},
          {"rate", detail::v3(s.angular_rate)}};
}

inline SkyState sky_state_from_json(const Json& j) {
  SkyState s;
  s.time = j.at("t").get<double>();
  s.position = detail::to_v3(j.at("pos"));
  s.velocity = detail::to_v3(j.at("vel"));
  const Json& q = j.at("quat");
  if (!q.is_array() || q.size() != 4) throw Error(ErrorCode::CorruptRecord, "quat needs 4 values");
  s.orientation = Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
  s.angular_rate = detail::to_v3(j.at("rate"));
  return s;
}

inline Json to_json(const TickRecord& r) {
  return {{"type", "tick"},
          {"tick", r.tick},
          {"time", r.time},
          {"state", to_json(r.state)},
          {"omega_com", r.omega_com},
          {"v_com", r.v_com},
          {"psi_error", r.psi_error},
          {"omega_meas", r.omega_meas},
          {"v_meas", r.v_meas},
          {"u_arms", r.u_arms},
          {"u_legs", r.u_legs},
          {"trim_arms", r.trim_arms},
          {"trim_legs", r.trim_legs},
          {"cue_arms", r.cue_arms},
          {"cue_legs", r.cue_legs},
          {"exec_arms", r.exec_arms},
          {"exec_legs", r.exec_legs},
          {"lookahead", detail::vec2(r.lookahead)},
          {"predicted_arrow", detail::arrow_json(r.predicted_arrow)},
          {"desired_arrow", detail::arrow_json(r.desired_arrow)},
          {"corridor",
           {{"cross_track", r.corridor.cross_track}, {"inside", r.corridor.inside}, {"progress", r.corridor.progress}}},
          {"executed", detail::posture_json(r.executed)}};
}

inline TickRecord tick_record_from_json(const Json& j) {
  if (j.value("type", "") != "tick") throw Error(ErrorCode::CorruptRecord, "not a tick record");
  TickRecord r;
  r.tick = j.at("tick").get<long>();
  r.time = j.at("time").get<double>();
  r.state = sky_state_from_json(j.at("state"));
  r.omega_com = j.at("omega_com").get<double>();
  r.v_com = j.at("v_com").get<double>();
  r.psi_error = j.at("psi_error").get<double>();
  r.omega_meas = j.at("omega_meas").get<double>();
  r.v_meas = j.at("v_meas").get<double>();
  r.u_arms = j.at("u_arms").get<double>();
  r.u_legs = j.at("u_legs").get<double>();
  r.trim_arms = j.at("trim_arms").get<double>();
  r.trim_legs = j.at("trim_legs").get<double>();
  r.cue_arms = j.at("cue_arms").get<double>();
  r.cue_legs = j.at("cue_legs").get<double>();
  r.exec_arms = j.at("exec_arms").get<double>();
  r.exec_legs = j.at("exec_legs").get<double>();
  r.lookahead = detail::to_vec2(j.at("lookahead"));
  r.predicted_arrow = detail::to_arrow(j.at("predicted_arrow"));
  r.desired_arrow = detail::to_arrow(j.at("desired_arrow"));
  const Json& c = j.at("corridor");
  r.corridor = {c.at("cross_track").get<double>(), c.at("inside").get<bool>(), c.at("progress").get<double>()};
  r.executed = detail::to_posture(j.at("executed"));
  return r;
}

/// Header fields beyond what EpisodeLog carries.
struct LogContext {
  Json scenario = Json::object();
  Json config = Json::object();
};

struct LoadedLog {
  EpisodeLog log;
  LogContext context;
};

inline Json log_header(const EpisodeLog& log, const LogContext& ctx) {
  return {{"type", "header"},
          {"format", kLogFormat},
          {"version", kLogVersion},
          {"scenario_name", log.scenario_name},
          {"seed", log.seed},
          {"config_hash", log.config_hash},
          {"rate_hz", log.rate_hz},
          {"path_length", log.path_length},
          {"target", detail::vec2(log.target)},
          {"initial_state", to_json(log.initial_state)},
          {"initial_posture", detail::posture_json(log.initial_posture)},
          {"scenario", ctx.scenario},
          {"config", ctx.config}};
}

inline Json log_trailer(const EpisodeLog& log) {
  return {{"type", "outcome"},
          {"outcome", to_string(log.outcome)},
          {"detail", log.outcome_detail},
          {"ticks", log.ticks.size()}};
}

inline void write_log(std::ostream& os, const EpisodeLog& log, const LogContext& ctx = {}) {
  os << log_header(log, ctx).dump() << '\n';
  for (const TickRecord& r : log.ticks) os << to_json(r).dump() << '\n';
  os << log_trailer(log).dump() << '\n';
}

/// Streams a log record by record. `on_header` sees the header before any
/// tick; `on_tick` returns false to stop early. Throws CorruptLog with the
/// offending line index.
inline void scan_log(std::istream& is, const std::function<void(EpisodeLog&, LogContext&)>& on_header,
                     const std::function<bool(const TickRecord&)>& on_tick, EpisodeLog& log, LogContext& ctx) {
  std::string line;
  std::size_t index = 0;
  bool header = false, trailer = false;
  long expected_tick = 0;
  for (; std::getline(is, line); ++index) {
    if (trailer) throw CorruptLog(index, "data after outcome trailer");
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw CorruptLog(index, std::string("unparseable: ") + e.what());
    }
    try {
      const std::string type = j.value("type", "");
      if (!header) {
        if (type != "header" || j.value("format", "") != kLogFormat) throw Error(ErrorCode::CorruptRecord, "missing header");
        if (j.at("version").get<int>() != kLogVersion) throw Error(ErrorCode::CorruptRecord, "unsupported log version");
        log.scenario_name = j.at("scenario_name").get<std::string>();
        log.seed = j.at("seed").get<std::uint64_t>();
        log.config_hash = j.at("config_hash").get<std::string>();
        log.rate_hz = j.at("rate_hz").get<double>();
        log.path_length = j.at("path_length").get<double>();
        log.target = detail::to_vec2(j.at("target"));
        log.initial_state = sky_state_from_json(j.at("initial_state"));
        log.initial_posture = detail::to_posture(j.at("initial_posture"));
        ctx.scenario = j.value("scenario", Json::object());
        ctx.config = j.value("config", Json::object());
        header = true;
        if (on_header) on_header(log, ctx);
      } else if (type == "tick") {
        const TickRecord r = tick_record_from_json(j);
        if (r.tick != expected_tick) throw Error(ErrorCode::CorruptRecord, "tick out of sequence");
        ++expected_tick;
        if (on_tick && !on_tick(r)) return;
      } else if (type == "outcome") {
        log.outcome = outcome_from_string(j.at("outcome").get<std::string>());
        log.outcome_detail = j.value("detail", "");
        if (j.at("ticks").get<long>() != expected_tick) throw Error(ErrorCode::CorruptRecord, "tick count mismatch");
        trailer = true;
      } else {
        throw Error(ErrorCode::CorruptRecord, "unknown record type '" + type + "'");
      }
    } catch (const CorruptLog&) {
      throw;
    } catch (const Error& e) {
      throw CorruptLog(index, e.what());
    } catch (const Json::exception& e) {
      throw CorruptLog(index, e.what());
    }
  }
  if (!header) throw CorruptLog(index, "empty log");
  if (!trailer) throw CorruptLog(index, "truncated: no outcome trailer");
}

inline LoadedLog read_log(std::istream& is) {
  LoadedLog out;
  scan_log(is, nullptr,
           [&](const TickRecord& r) {
             out.log.ticks.push_back(r);
             return true;
           },
           out.log, out.context);
  return out;
}

inline LoadedLog read_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open " + path);
  return read_log(in);
}

inline void write_log_file(const std::string& path, const EpisodeLog& log, const LogContext& ctx = {}) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Config, "cannot write " + path);
  write_log(out, log, ctx);
}

struct ReplayResult {
  std::size_t frames = 0;
  double wall_seconds = 0.0;
  Outcome outcome = Outcome::Running;
};

/// Emits each recorded tick as a frame, paced at `speed` times real time
/// (speed <= 0 means as fast as possible). Corrupt records stop the replay
/// with a CorruptLog after the frames before them have been emitted.
inline ReplayResult replay(std::istream& is, double speed, const std::function<void(const TickRecord&)>& frame) {
  using Clock = std::chrono::steady_clock;
  ReplayResult res;
  EpisodeLog log;
  LogContext ctx;
  const auto start = Clock::now();
  double t0 = 0.0;
  scan_log(
      is, [&](EpisodeLog& l, LogContext&) { t0 = l.initial_state.time; },
      [&](const TickRecord& r) {
        if (speed > 0.0) {
          const auto due = start + std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<double>((r.time - t0) / speed));
          std::this_thread::sleep_until(due);
        }
        if (frame) frame(r);
        ++res.frames;
        return true;
      },
      log, ctx);
  res.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  res.outcome = log.outcome;
  return res;
}

inline Json to_json(const Metrics& m) {
  Json j{{"outcome", to_string(m.outcome)},
         {"completion_time", m.completion_time ? Json(*m.completion_time) : Json(nullptr)},
         {"max_abs_u_arms", m.max_abs_u_arms},
         {"max_abs_u_legs", m.max_abs_u_legs},
         {"max_abs_omega_com", m.max_abs_omega_com},
         {"yaw_rate_rms", m.yaw_rate_rms},
         {"corridor_violation_time", m.corridor_violation_time},
         {"progress_fraction", m.progress_fraction},
         {"max_abs_cross_track", m.max_abs_cross_track},
         {"final_distance", m.final_distance},
         {"yaw_error_crossings_20s", m.yaw_error_crossings_20s},
         {"sustained_oscillation", sustained_oscillation(m)},
         {"ticks", m.ticks}};
  return j;
}

inline constexpr const char* kCsvHeader =
    "time,x,y,z,vx,vy,vz,qw,qx,qy,qz,p,q,r,omega_com,omega_meas,v_com,v_meas,psi_error,"
    "u_arms,u_legs,trim_arms,trim_legs,cue_arms,cue_legs,exec_arms,exec_legs,cross_track,inside,progress";

inline std::string csv_row(const TickRecord& r) {
  const SkyState& s = r.state;
  const Quat& q = s.orientation;
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}", r.time,
                     s.position.x(), s.position.y(), s.position.z(), s.velocity.x(), s.velocity.y(), s.velocity.z(),
                     q.w(), q.x(), q.y(), q.z(), s.angular_rate.x(), s.angular_rate.y(), s.angular_rate.z(),
                     r.omega_com, r.omega_meas, r.v_com, r.v_meas, r.psi_error, r.u_arms, r.u_legs, r.trim_arms,
                     r.trim_legs, r.cue_arms, r.cue_legs, r.exec_arms, r.exec_legs, r.corridor.cross_track,
                     r.corridor.inside ? 1 : 0, r.corridor.progress);
}

/// Every `stride`-th tick as CSV; the decimated view is derived on export.
inline void write_csv(std::ostream& os, const EpisodeLog& log, std::size_t stride = 1) {
  if (stride == 0) throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
  os << kCsvHeader << '\n';
  for (std::size_t i = 0; i < log.ticks.size(); i += stride) os << csv_row(log.ticks[i]) << '\n';
}

}  // namespace skyktm
