#pragma once

// Wire protocol between the real-time host and its clients. One JSON object
// per text frame:
//   {"v": 1, "kind": "...", "tick": n, "ts": ms, "payload": {...}}
// See docs/protocol.md.

#include <optional>
#include <string>
#include <vector>

#include "skyktm/logio.hpp"

namespace skyktm::wire {

inline constexpr int kProtocolVersion = 1;
inline const std::vector<int> kSupportedVersions{kProtocolVersion};

enum class Kind { Hello, Scenario, State, Cues, Input, Event, Metrics };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::Hello: return "hello";
    case Kind::Scenario: return "scenario";
    case Kind::State: return "state";
    case Kind::Cues: return "cues";
    case Kind::Input: return "input";
    case Kind::Event: return "event";
    case Kind::Metrics: return "metrics";
  }
  return "unknown";
}

inline std::optional<Kind> kind_from_string(std::string_view s) {
  for (Kind k : {Kind::Hello, Kind::Scenario, Kind::State, Kind::Cues, Kind::Input, Kind::Event, Kind::Metrics})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct Message {
  int version = kProtocolVersion;
  Kind kind = Kind::Event;
  long tick = 0;
  double timestamp_ms = 0.0;
  Json payload = Json::object();

  bool operator==(const Message&) const = default;
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ErrorCode::InvalidArgument, what) {}
};

inline std::string encode(const Message& m) {
  return Json{{"v", m.version}, {"kind", to_string(m.kind)}, {"tick", m.tick}, {"ts", m.timestamp_ms},
              {"payload", m.payload}}
      .dump();
}

/// Parses and checks the envelope. The version is returned as sent; callers
/// decide whether to accept it.
inline Message decode(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be an object");
  for (const char* key : {"v", "kind", "tick", "ts", "payload"})
    if (!j.contains(key)) throw ProtocolError(std::string("message lacks '") + key + "'");
  Message m;
  try {
    m.version = j["v"].get<int>();
    const auto k = kind_from_string(j["kind"].get<std::string>());
    if (!k) throw ProtocolError("unknown kind '" + j["kind"].get<std::string>() + "'");
    m.kind = *k;
    m.tick = j["tick"].get<long>();
    m.timestamp_ms = j["ts"].get<double>();
  } catch (const Json::exception& e) {
    throw ProtocolError(std::string("bad envelope: ") + e.what());
  }
  m.payload = j["payload"];
  if (!m.payload.is_object()) throw ProtocolError("payload must be an object");
  if (m.kind == Kind::Input && !m.payload.contains("client_ts")) throw ProtocolError("input lacks client_ts");
  return m;
}

// ---- builders --------------------------------------------------------------------

enum class Role { Pilot, Observer };

inline const char* to_string(Role r) { return r == Role::Pilot ? "pilot" : "observer"; }

inline Message hello_request(Role role, double ts_ms, int version = kProtocolVersion) {
  return {version, Kind::Hello, 0, ts_ms, {{"role", to_string(role)}}};
}

/// Server answer to a hello. Rejections list the supported versions.
inline Message hello_reply(bool accepted, Role granted, long tick, double ts_ms, const std::string& reason = "") {
  Json p{{"accepted", accepted}, {"role", to_string(granted)}, {"versions", kSupportedVersions}};
  if (!reason.empty()) p["reason"] = reason;
  return {kProtocolVersion, Kind::Hello, tick, ts_ms, p};
}

inline Message scenario_message(const Scenario& s, const PlannedPath& path, long tick, double ts_ms) {
  const CorridorLines lines = corridor_lines(path);
  Json left = Json::array(), right = Json::array(), wps = Json::array();
  for (const Vec2& p : lines.left) left.push_back(detail::vec2(p));
  for (const Vec2& p : lines.right) right.push_back(detail::vec2(p));
  for (const Vec2& p : path.waypoints()) wps.push_back(detail::vec2(p));
  return {kProtocolVersion, Kind::Scenario, tick, ts_ms,
          {{"scenario", to_json(s)}, {"waypoints", wps}, {"corridor", {{"left", left}, {"right", right}}}}};
}

inline Message state_message(const TickRecord& r, double ts_ms) {
  return {kProtocolVersion, Kind::State, r.tick, ts_ms,
          {{"time", r.time},
           {"state", to_json(r.state)},
           {"omega_com", r.omega_com},
           {"omega_meas", r.omega_meas},
           {"v_com", r.v_com},
           {"v_meas", r.v_meas},
           {"psi_error", r.psi_error},
           {"corridor",
            {{"cross_track", r.corridor.cross_track},
             {"inside", r.corridor.inside},
             {"progress", r.corridor.progress}}}}};
}

inline Message cues_message(const TickRecord& r, const CueFrame& c, double ts_ms) {
  return {kProtocolVersion, Kind::Cues, r.tick, ts_ms,
          {{"desired_posture", detail::posture_json(c.desired_posture)},
           {"feedback_posture", detail::posture_json(c.feedback_posture)},
           {"predicted_arrow", detail::arrow_json(c.predicted_arrow)},
           {"desired_arrow", detail::arrow_json(c.desired_arrow)},
           {"t_predict", c.t_predict},
           {"u_arms", r.u_arms},
           {"u_legs", r.u_legs},
           {"cue_arms", r.cue_arms},
           {"cue_legs", r.cue_legs},
           {"exec_arms", r.exec_arms},
           {"exec_legs", r.exec_legs}}};
}

inline Message input_message(const ExternalInput& in, double ts_ms) {
  return {kProtocolVersion, Kind::Input, 0, ts_ms,
          {{"u_arms", in.u_arms}, {"u_legs", in.u_legs}, {"client_ts", in.client_timestamp_ms}}};
}

inline ExternalInput parse_input(const Message& m) {
  if (m.kind != Kind::Input) throw ProtocolError("not an input message");
  try {
    ExternalInput in;
    in.u_arms = m.payload.at("u_arms").get<double>();
    in.u_legs = m.payload.at("u_legs").get<double>();
    in.client_timestamp_ms = m.payload.at("client_ts").get<double>();
    if (!std::isfinite(in.u_arms) || !std::isfinite(in.u_legs)) throw ProtocolError("non-finite input");
    return in;
  } catch (const Json::exception& e) {
    throw ProtocolError(std::string("bad input payload: ") + e.what());
  }
}

inline Message event_message(const std::string& type, const std::string& text, long tick, double ts_ms) {
  return {kProtocolVersion, Kind::Event, tick, ts_ms, {{"type", type}, {"message", text}}};
}

inline Message metrics_message(const Metrics& m, long tick, double ts_ms) {
  return {kProtocolVersion, Kind::Metrics, tick, ts_ms, to_json(m)};
}

}  // namespace skyktm::wire
