#pragma once

// JSON config and scenario files. Angles are stored in degrees, everything
// else in SI units. Unknown keys are rejected so typos do not pass silently.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "skyktm/session.hpp"

namespace skyktm {

using Json = nlohmann::json;

inline constexpr AeroCoefficients kDefaultAero{0.5, 0.80200, 0.02, 0.2, 0.5, 2.0};
inline constexpr double kNeutralKneeDeg = -57.7285;

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::Config, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || k == a;
    if (!ok) throw Error(ErrorCode::Config, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const Json& j, std::string_view key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, "bad value for '" + std::string(key) + "': " + e.what());
  }
}

inline void read_deg(const Json& j, std::string_view key, double& out_rad) {
  if (!j.contains(key)) return;
  double d = 0.0;
  read(j, key, d);
  out_rad = deg2rad(d);
}

inline std::size_t dof_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kDofCount; ++i)
    if (dof_name(i) == name) return i;
  throw Error(ErrorCode::Config, "unknown DOF '" + std::string(name) + "'");
}

inline std::size_t joint_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kJointCount; ++i)
    if (kJointNames[i] == name) return i;
  throw Error(ErrorCode::Config, "unknown joint '" + std::string(name) + "'");
}

inline std::size_t segment_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kSegmentCount; ++i)
    if (kSegmentNames[i] == name) return i;
  throw Error(ErrorCode::Config, "unknown segment '" + std::string(name) + "'");
}

/// Degrees rounded to 1e-9 so load/save cycles are stable.
inline double deg_out(double rad) { return std::round(rad2deg(rad) * 1e9) / 1e9; }

inline Json vec2(const Vec2& v) { return Json::array({v.x(), v.y()}); }

inline Vec2 to_vec2(const Json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ErrorCode::Config, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<double> to_doubles(const Json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::Config, where + " must be an array");
  std::vector<double> out;
  for (const Json& v : j) {
    if (!v.is_number()) throw Error(ErrorCode::Config, where + " must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

// ---- anthropometrics --------------------------------------------------------

inline Json to_json(const Anthropometrics& a) {
  Json j{{"total_mass", a.total_mass},
         {"stature", a.stature},
         {"equipment",
          {{"jumpsuit_drag_scale", a.equipment.jumpsuit_drag_scale},
           {"helmet", a.equipment.helmet},
           {"weight_belt_kg", a.equipment.weight_belt_kg}}}};
  Json ov = Json::object();
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const SegmentOverride& o = a.overrides[i];
    if (!o.length && !o.mass_fraction) continue;
    Json e = Json::object();
    if (o.length) e["length"] = *o.length;
    if (o.mass_fraction) e["mass_fraction"] = *o.mass_fraction;
    ov[std::string(kSegmentNames[i])] = e;
  }
  if (!ov.empty()) j["segment_overrides"] = ov;
  const FractionTable def = default_fraction_table();
  Json ft = Json::object();
  for (std::size_t i = 0; i < kSegmentCount; ++i) {
    const SegmentParams& p = a.table[i];
    const SegmentParams& d = def[i];
    if (p.mass_fraction == d.mass_fraction && p.length_fraction == d.length_fraction &&
        p.width_fraction == d.width_fraction && p.depth_fraction == d.depth_fraction)
      continue;
    ft[std::string(kSegmentNames[i])] = {{"mass_fraction", p.mass_fraction},
                                         {"length_fraction", p.length_fraction},
                                         {"width_fraction", p.width_fraction},
                                         {"depth_fraction", p.depth_fraction}};
  }
  if (!ft.empty()) j["fraction_table"] = ft;
  return j;
}

inline Anthropometrics anthropometrics_from_json(const Json& j) {
  detail::check_keys(j, {"total_mass", "stature", "equipment", "segment_overrides", "fraction_table"},
                     "anthropometrics");
  Anthropometrics a;
  detail::read(j, "total_mass", a.total_mass);
  detail::read(j, "stature", a.stature);
  if (auto it = j.find("equipment"); it != j.end()) {
    detail::check_keys(*it, {"jumpsuit_drag_scale", "helmet", "weight_belt_kg"}, "equipment");
    detail::read(*it, "jumpsuit_drag_scale", a.equipment.jumpsuit_drag_scale);
    detail::read(*it, "helmet", a.equipment.helmet);
    detail::read(*it, "weight_belt_kg", a.equipment.weight_belt_kg);
  }
  if (auto it = j.find("segment_overrides"); it != j.end()) {
    if (!it->is_object()) throw Error(ErrorCode::Config, "segment_overrides must be an object");
    for (const auto& [name, e] : it->items()) {
      SegmentOverride& o = a.overrides[detail::segment_from_name(name)];
      detail::check_keys(e, {"length", "mass_fraction"}, "segment_overrides." + name);
      if (e.contains("length")) o.length = e["length"].get<double>();
      if (e.contains("mass_fraction")) o.mass_fraction = e["mass_fraction"].get<double>();
    }
  }
  if (auto it = j.find("fraction_table"); it != j.end()) {
    if (!it->is_object()) throw Error(ErrorCode::Config, "fraction_table must be an object");
    for (const auto& [name, e] : it->items()) {
      SegmentParams& p = a.table[detail::segment_from_name(name)];
      detail::check_keys(e, {"mass_fraction", "length_fraction", "width_fraction", "depth_fraction"},
                         "fraction_table." + name);
      detail::read(e, "mass_fraction", p.mass_fraction);
      detail::read(e, "length_fraction", p.length_fraction);
      detail::read(e, "width_fraction", p.width_fraction);
      detail::read(e, "depth_fraction", p.depth_fraction);
    }
  }
  return a;
}

// ---- aero, environment --------------------------------------------------------

inline Json to_json(const AeroCoefficients& k) {
  return {{"c_lift_max", k.c_lift_max},     {"c_drag_max", k.c_drag_max},
          {"c_moment_max", k.c_moment_max}, {"c_roll_damp", k.c_roll_damp},
          {"c_pitch_damp", k.c_pitch_damp}, {"c_yaw_damp", k.c_yaw_damp}};
}

inline AeroCoefficients aero_from_json(const Json& j) {
  detail::check_keys(j, {"c_lift_max", "c_drag_max", "c_moment_max", "c_roll_damp", "c_pitch_damp", "c_yaw_damp"},
                     "aero");
  AeroCoefficients k = kDefaultAero;
  detail::read(j, "c_lift_max", k.c_lift_max);
  detail::read(j, "c_drag_max", k.c_drag_max);
  detail::read(j, "c_moment_max", k.c_moment_max);
  detail::read(j, "c_roll_damp", k.c_roll_damp);
  detail::read(j, "c_pitch_damp", k.c_pitch_damp);
  detail::read(j, "c_yaw_damp", k.c_yaw_damp);
  return k;
}

inline Json to_json(const Environment& e) { return {{"air_density", e.air_density}, {"gravity", e.gravity}}; }

inline Environment environment_from_json(const Json& j) {
  detail::check_keys(j, {"air_density", "gravity"}, "environment");
  Environment e;
  detail::read(j, "air_density", e.air_density);
  detail::read(j, "gravity", e.gravity);
  return e;
}

// ---- patterns -----------------------------------------------------------------

/// Neutral posture as {joint: [flex, abd, rot]} in degrees; zero joints are
/// omitted.
inline Json neutral_to_json(const Posture& p) {
  Json j = Json::object();
  for (std::size_t k = 0; k < kJointCount; ++k) {
    const double f = p[3 * k], a = p[3 * k + 1], r = p[3 * k + 2];
    if (f == 0.0 && a == 0.0 && r == 0.0) continue;
    j[std::string(kJointNames[k])] = {detail::deg_out(f), detail::deg_out(a), detail::deg_out(r)};
  }
  return j;
}

inline Posture neutral_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "neutral must be an object");
  Posture p;
  for (const auto& [name, v] : j.items()) {
    const std::size_t k = detail::joint_from_name(name);
    const std::vector<double> d = detail::to_doubles(v, "neutral." + name);
    if (d.size() != 3) throw Error(ErrorCode::Config, "neutral." + name + " needs three angles");
    for (std::size_t a = 0; a < 3; ++a) p[3 * k + a] = deg2rad(d[a]);
  }
  return p;
}

inline Json to_json(const PatternBasis& b) {
  Json w = Json::array();
  for (std::size_t i = 0; i < kDofCount; ++i) w.push_back(b[i]);
  return {{"name", b.name()}, {"weights", w}};
}

/// Weights whose norm is 1 up to 3-digit rounding are kept verbatim;
/// anything else is normalized.
inline PatternBasis pattern_from_json(const Json& j) {
  detail::check_keys(j, {"name", "weights"}, "pattern");
  if (!j.contains("name") || !j.contains("weights")) throw Error(ErrorCode::Config, "pattern needs name and weights");
  const std::string name = j["name"].get<std::string>();
  Posture w;
  const Json& jw = j["weights"];
  if (jw.is_array()) {
    const std::vector<double> d = detail::to_doubles(jw, "pattern " + name);
    if (d.size() != kDofCount) throw Error(ErrorCode::Config, "pattern " + name + " needs 45 weights");
    for (std::size_t i = 0; i < kDofCount; ++i) w[i] = d[i];
  } else if (jw.is_object()) {
    for (const auto& [dof, v] : jw.items()) w[detail::dof_from_name(dof)] = v.get<double>();
  } else {
    throw Error(ErrorCode::Config, "pattern " + name + " weights must be an array or object");
  }
  double n2 = 0.0;
  for (std::size_t i = 0; i < kDofCount; ++i) n2 += w[i] * w[i];
  const bool verbatim = std::abs(std::sqrt(n2) - 1.0) <= PatternBasis::kVerbatimTolerance;
  return PatternBasis(name, w, verbatim ? PatternBasis::Mode::Verbatim : PatternBasis::Mode::Normalize);
}

/// Limits are written per DOF as offsets from neutral plus a rate.
/// The first DOF's range, if symmetric, becomes the default; only DOFs that
/// differ from it are listed.
inline Json limits_to_json(const PatternSet& s) {
  const double lo0 = detail::deg_out(s.limits[0].min - s.neutral[0]);
  const double hi0 = detail::deg_out(s.limits[0].max - s.neutral[0]);
  const double rate0 = detail::deg_out(s.limits[0].max_rate);
  const bool has_default = lo0 == -hi0;
  Json j = Json::object();
  if (has_default) j["default"] = {{"range_deg", hi0}, {"rate_deg_s", rate0}};
  for (std::size_t i = 0; i < kDofCount; ++i) {
    const DofLimit& l = s.limits[i];
    const double lo = detail::deg_out(l.min - s.neutral[i]);
    const double hi = detail::deg_out(l.max - s.neutral[i]);
    const double rate = detail::deg_out(l.max_rate);
    if (has_default && lo == lo0 && hi == hi0 && rate == rate0) continue;
    j[dof_name(i)] = {{"min_deg", lo}, {"max_deg", hi}, {"rate_deg_s", rate}};
  }
  return j;
}

/// {"default": {"range_deg": r, "rate_deg_s": v}, "<dof>": {min_deg, max_deg, rate_deg_s}}
inline DofLimits limits_from_json(const Json& j, const Posture& neutral) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "limits must be an object");
  double range = deg2rad(180.0), rate = deg2rad(60.0);
  if (auto it = j.find("default"); it != j.end()) {
    detail::check_keys(*it, {"range_deg", "rate_deg_s"}, "limits.default");
    detail::read_deg(*it, "range_deg", range);
    detail::read_deg(*it, "rate_deg_s", rate);
  }
  DofLimits out;
  for (std::size_t i = 0; i < kDofCount; ++i) out[i] = {neutral[i] - range, neutral[i] + range, rate};
  for (const auto& [name, e] : j.items()) {
    if (name == "default") continue;
    const std::size_t i = detail::dof_from_name(name);
    detail::check_keys(e, {"min_deg", "max_deg", "rate_deg_s"}, "limits." + name);
    double lo = out[i].min - neutral[i], hi = out[i].max - neutral[i];
    detail::read_deg(e, "min_deg", lo);
    detail::read_deg(e, "max_deg", hi);
    detail::read_deg(e, "rate_deg_s", out[i].max_rate);
    out[i].min = neutral[i] + lo;
    out[i].max = neutral[i] + hi;
  }
  return out;
}

inline Json to_json(const PatternSet& s) {
  Json pats = Json::array();
  for (const PatternBasis& b : s.patterns) pats.push_back(to_json(b));
  return {{"neutral_deg", neutral_to_json(s.neutral)}, {"patterns", pats}, {"limits", limits_to_json(s)}};
}

inline PatternSet pattern_set_from_json(const Json& j) {
  detail::check_keys(j, {"neutral_deg", "patterns", "limits"}, "pattern_set");
  PatternSet s;
  if (auto it = j.find("neutral_deg"); it != j.end()) s.neutral = neutral_from_json(*it);
  if (auto it = j.find("patterns"); it != j.end()) {
    if (!it->is_array()) throw Error(ErrorCode::Config, "patterns must be an array");
    for (const Json& p : *it) s.patterns.push_back(pattern_from_json(p));
  } else {
    s.patterns = {patterns::turning(), patterns::forward_backward()};
  }
  if (auto it = j.find("limits"); it != j.end()) {
    s.limits = limits_from_json(*it, s.neutral);
  } else {
    s.limits = limits_from_json(Json::object(), s.neutral);
  }
  return s;
}

// ---- controllers -------------------------------------------------------------

inline Json to_json(const RationalTF& tf) { return {{"num", tf.num}, {"den", tf.den}, {"gain", tf.gain}}; }

inline RationalTF tf_from_json(const Json& j, const std::string& where) {
  detail::check_keys(j, {"num", "den", "gain"}, where);
  RationalTF tf;
  if (j.contains("num")) tf.num = detail::to_doubles(j["num"], where + ".num");
  if (j.contains("den")) tf.den = detail::to_doubles(j["den"], where + ".den");
  detail::read(j, "gain", tf.gain);
  try {
    tf.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, where + ": " + e.what());
  }
  return tf;
}

/// The built-in design is written by name only; custom designs carry all
/// five transfer functions (coefficients in descending powers of s).
inline Json to_json(const ControllerDesign& d) {
  if (d.name == "qft-default") return {{"profile", "qft-default"}};
  return {{"profile", d.name}, {"g11", to_json(d.g11)}, {"f11", to_json(d.f11)}, {"g22", to_json(d.g22)},
          {"g21", to_json(d.g21)}, {"f22", to_json(d.f22)}};
}

inline ControllerDesign controller_from_json(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "qft-default") return qft_design();
    throw Error(ErrorCode::Config, "unknown controller profile '" + j.get<std::string>() + "'");
  }
  detail::check_keys(j, {"profile", "g11", "f11", "g22", "g21", "f22"}, "controller");
  std::string profile = "qft-default";
  detail::read(j, "profile", profile);
  ControllerDesign d = qft_design();
  const bool custom = j.contains("g11") || j.contains("f11") || j.contains("g22") || j.contains("g21") ||
                      j.contains("f22");
  if (!custom) {
    if (profile != "qft-default") throw Error(ErrorCode::Config, "unknown controller profile '" + profile + "'");
    return d;
  }
  if (profile == "qft-default") throw Error(ErrorCode::Config, "custom transfer functions need their own profile name");
  d.name = profile;
  if (j.contains("g11")) d.g11 = tf_from_json(j["g11"], "g11");
  if (j.contains("f11")) d.f11 = tf_from_json(j["f11"], "f11");
  if (j.contains("g22")) d.g22 = tf_from_json(j["g22"], "g22");
  if (j.contains("g21")) d.g21 = tf_from_json(j["g21"], "g21");
  if (j.contains("f22")) d.f22 = tf_from_json(j["f22"], "f22");
  return d;
}

// ---- imitation ---------------------------------------------------------------

inline Json to_json(const ImitationSpec& s) {
  return {{"amplitude_deg", detail::deg_out(s.amplitude)},
          {"frequency_hz", s.frequency},
          {"pattern", s.pattern.name()},
          {"hold_threshold_deg", detail::deg_out(s.hold_threshold)},
          {"hold_duration", s.hold_duration}};
}

inline ImitationSpec imitation_from_json(const Json& j, const PatternSet& set) {
  detail::check_keys(j, {"amplitude_deg", "frequency_hz", "pattern", "hold_threshold_deg", "hold_duration"},
                     "imitation");
  ImitationSpec s;
  detail::read_deg(j, "amplitude_deg", s.amplitude);
  detail::read(j, "frequency_hz", s.frequency);
  detail::read_deg(j, "hold_threshold_deg", s.hold_threshold);
  detail::read(j, "hold_duration", s.hold_duration);
  std::string name = s.pattern.name();
  detail::read(j, "pattern", name);
  s.pattern = set.patterns.at(set.index_of(name));
  s.validate();
  return s;
}

// ---- SimConfig -----------------------------------------------------------------

inline Json to_json(const SimConfig& c) {
  return {{"anthropometrics", to_json(c.anthropometrics)},
          {"aero", to_json(c.aero)},
          {"environment", to_json(c.environment)},
          {"pattern_set", to_json(c.patterns)},
          {"controller", to_json(c.controller)},
          {"cues", {{"max_rate_deg_s", detail::deg_out(c.cue_max_rate)}}},
          {"imitation", to_json(c.imitation)},
          {"output_limit_deg", detail::deg_out(c.output_limit)},
          {"rate_hz", c.rate_hz},
          {"trim_settle_time", c.trim_settle_time}};
}

/// Missing sections take the defaults of `base`.
inline SimConfig sim_config_from_json(const Json& j, SimConfig base) {
  detail::check_keys(j, {"anthropometrics", "aero", "environment", "pattern_set", "controller", "cues", "imitation",
                         "output_limit_deg", "rate_hz", "trim_settle_time"},
                     "config");
  SimConfig c = std::move(base);
  if (j.contains("anthropometrics")) c.anthropometrics = anthropometrics_from_json(j["anthropometrics"]);
  if (j.contains("aero")) c.aero = aero_from_json(j["aero"]);
  if (j.contains("environment")) c.environment = environment_from_json(j["environment"]);
  if (j.contains("pattern_set")) c.patterns = pattern_set_from_json(j["pattern_set"]);
  if (j.contains("controller")) c.controller = controller_from_json(j["controller"]);
  if (auto it = j.find("cues"); it != j.end()) {
    detail::check_keys(*it, {"max_rate_deg_s"}, "cues");
    detail::read_deg(*it, "max_rate_deg_s", c.cue_max_rate);
  }
  if (j.contains("imitation")) {
    c.imitation = imitation_from_json(j["imitation"], c.patterns);
  } else if (!c.patterns.patterns.empty()) {
    c.imitation.pattern = c.patterns.patterns.front();
  }
  detail::read_deg(j, "output_limit_deg", c.output_limit);
  detail::read(j, "rate_hz", c.rate_hz);
  detail::read(j, "trim_settle_time", c.trim_settle_time);
  c.validate();
  return c;
}

// ---- Scenario --------------------------------------------------------------------

inline Json to_json(const TraineeSpec& t) {
  Json j{{"kind", t.kind}};
  if (t.kind == "lag") j["tau"] = t.tau;
  if (t.kind == "pure_delay") j["delay"] = t.delay;
  if (t.kind == "noisy") {
    j["sigma_deg"] = detail::deg_out(t.sigma);
    j["cutoff_hz"] = t.cutoff_hz;
  }
  if (t.kind == "range_restricted") {
    Json caps = Json::object();
    for (const auto& [i, c] : t.caps) caps[dof_name(i)] = {detail::deg_out(c.min), detail::deg_out(c.max)};
    j["caps_deg"] = caps;
  }
  if (t.kind == "composite") {
    Json st = Json::array();
    for (const TraineeSpec& s : t.stages) st.push_back(to_json(s));
    j["stages"] = st;
  }
  return j;
}

inline TraineeSpec trainee_from_json(const Json& j) {
  detail::check_keys(j, {"kind", "tau", "delay", "sigma_deg", "cutoff_hz", "caps_deg", "stages"}, "trainee");
  TraineeSpec t;
  detail::read(j, "kind", t.kind);
  detail::read(j, "tau", t.tau);
  detail::read(j, "delay", t.delay);
  detail::read_deg(j, "sigma_deg", t.sigma);
  detail::read(j, "cutoff_hz", t.cutoff_hz);
  if (auto it = j.find("caps_deg"); it != j.end()) {
    if (!it->is_object()) throw Error(ErrorCode::Config, "caps_deg must be an object");
    for (const auto& [name, v] : it->items()) {
      const std::vector<double> d = detail::to_doubles(v, "caps_deg." + name);
      if (d.size() != 2) throw Error(ErrorCode::Config, "caps_deg." + name + " needs [min, max]");
      t.caps.push_back({detail::dof_from_name(name), OffsetCap{deg2rad(d[0]), deg2rad(d[1])}});
    }
  }
  if (auto it = j.find("stages"); it != j.end()) {
    if (!it->is_array()) throw Error(ErrorCode::Config, "stages must be an array");
    for (const Json& s : *it) t.stages.push_back(trainee_from_json(s));
  }
  make_trainee(t, 0);  // validates kind and parameters
  return t;
}

inline Json to_json(const Scenario& s) {
  Json via = Json::array();
  for (const Vec2& v : s.via) via.push_back(detail::vec2(v));
  return {{"name", s.name},
          {"start", detail::vec2(s.start)},
          {"target", detail::vec2(s.target)},
          {"via", via},
          {"initial_heading_deg", detail::deg_out(s.initial_heading)},
          {"speed_profile",
           {{"cruise", s.speed.cruise},
            {"acceleration", s.speed.acceleration},
            {"start_speed", s.speed.start_speed},
            {"end_speed", s.speed.end_speed}}},
          {"corridor_half_width", s.corridor_half_width},
          {"t_la", s.t_la},
          {"t_predict", s.t_predict},
          {"timeout", s.timeout},
          {"capture_radius", s.capture_radius},
          {"trainee", to_json(s.trainee)},
          {"external_input", s.external_input},
          {"stream_timeout", s.stream_timeout},
          {"seed", s.seed},
          {"delay_compensation",
           {{"enabled", s.delay_compensation.enabled},
            {"t_delay", s.delay_compensation.t_delay},
            {"max_delay", s.delay_compensation.max_delay}}},
          {"adaptive_trim",
           {{"enabled", s.adaptive_trim.enabled},
            {"arms", {{"kp", s.adaptive_trim.arms.kp}, {"ki", s.adaptive_trim.arms.ki}}},
            {"legs", {{"kp", s.adaptive_trim.legs.kp}, {"ki", s.adaptive_trim.legs.ki}}}}}};
}

inline Scenario scenario_from_json(const Json& j) {
  detail::check_keys(j, {"name", "start", "target", "via", "initial_heading_deg", "speed_profile",
                         "corridor_half_width", "t_la", "t_predict", "timeout", "capture_radius", "trainee",
                         "external_input", "stream_timeout", "seed", "delay_compensation", "adaptive_trim"},
                     "scenario");
  Scenario s;
  detail::read(j, "name", s.name);
  if (j.contains("start")) s.start = detail::to_vec2(j["start"]);
  if (j.contains("target")) s.target = detail::to_vec2(j["target"]);
  if (auto it = j.find("via"); it != j.end()) {
    if (!it->is_array()) throw Error(ErrorCode::Config, "via must be an array");
    for (const Json& v : *it) s.via.push_back(detail::to_vec2(v));
  }
  detail::read_deg(j, "initial_heading_deg", s.initial_heading);
  if (auto it = j.find("speed_profile"); it != j.end()) {
    detail::check_keys(*it, {"cruise", "acceleration", "start_speed", "end_speed"}, "speed_profile");
    detail::read(*it, "cruise", s.speed.cruise);
    detail::read(*it, "acceleration", s.speed.acceleration);
    detail::read(*it, "start_speed", s.speed.start_speed);
    detail::read(*it, "end_speed", s.speed.end_speed);
  }
  detail::read(j, "corridor_half_width", s.corridor_half_width);
  detail::read(j, "t_la", s.t_la);
  detail::read(j, "t_predict", s.t_predict);
  detail::read(j, "timeout", s.timeout);
  detail::read(j, "capture_radius", s.capture_radius);
  if (j.contains("trainee")) s.trainee = trainee_from_json(j["trainee"]);
  detail::read(j, "external_input", s.external_input);
  detail::read(j, "stream_timeout", s.stream_timeout);
  detail::read(j, "seed", s.seed);
  if (auto it = j.find("delay_compensation"); it != j.end()) {
    detail::check_keys(*it, {"enabled", "t_delay", "max_delay"}, "delay_compensation");
    detail::read(*it, "enabled", s.delay_compensation.enabled);
    detail::read(*it, "t_delay", s.delay_compensation.t_delay);
    detail::read(*it, "max_delay", s.delay_compensation.max_delay);
  }
  if (auto it = j.find("adaptive_trim"); it != j.end()) {
    detail::check_keys(*it, {"enabled", "arms", "legs"}, "adaptive_trim");
    detail::read(*it, "enabled", s.adaptive_trim.enabled);
    for (auto [key, gains] : {std::pair{"arms", &s.adaptive_trim.arms}, std::pair{"legs", &s.adaptive_trim.legs}}) {
      if (auto g = it->find(key); g != it->end()) {
        detail::check_keys(*g, {"kp", "ki"}, std::string("adaptive_trim.") + key);
        detail::read(*g, "kp", gains->kp);
        detail::read(*g, "ki", gains->ki);
      }
    }
  }
  s.validate();
  s.plan();
  return s;
}

// ---- defaults, files, hashing ----------------------------------------------------

inline constexpr double kNeutralRange = deg2rad(25.0);  // rad, each side of neutral
inline constexpr double kDofRateLimit = deg2rad(60.0);  // rad/s

/// Arched belly-to-earth neutral, trimmed for zero forward drift.
inline Posture default_neutral() {
  Posture p;
  auto set = [&](Joint j, double f, double a, double r) {
    p.at(j, Axis::Flexion) = deg2rad(f);
    p.at(j, Axis::Abduction) = deg2rad(a);
    p.at(j, Axis::Rotation) = deg2rad(r);
  };
  set(Joint::Lumbar, 10.0, 0.0, 0.0);
  set(Joint::Thoracic, 5.0, 0.0, 0.0);
  set(Joint::Neck, 25.0, 0.0, 0.0);
  set(Joint::LeftShoulder, -40.0, 15.0, 0.0);
  set(Joint::RightShoulder, 40.0, 15.0, 0.0);
  set(Joint::LeftElbow, 90.0, 0.0, 0.0);
  set(Joint::RightElbow, 90.0, 0.0, 0.0);
  set(Joint::LeftHip, -15.0, 20.0, 0.0);
  set(Joint::RightHip, -15.0, 20.0, 0.0);
  set(Joint::LeftKnee, kNeutralKneeDeg, 0.0, 0.0);
  set(Joint::RightKnee, kNeutralKneeDeg, 0.0, 0.0);
  return p;
}

inline SimConfig default_sim_config() {
  SimConfig c;
  c.aero = kDefaultAero;
  c.patterns.neutral = default_neutral();
  c.patterns.patterns = {patterns::turning(), patterns::forward_backward()};
  for (std::size_t i = 0; i < kDofCount; ++i)
    c.patterns.limits[i] = {c.patterns.neutral[i] - kNeutralRange, c.patterns.neutral[i] + kNeutralRange,
                            kDofRateLimit};
  c.imitation.pattern = c.patterns.patterns.front();
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::Config, path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Config, "cannot write " + path);
  out << j.dump(2) << '\n';
}

inline SimConfig load_sim_config(const std::string& path) {
  return sim_config_from_json(read_json_file(path), default_sim_config());
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical (sorted-key, compact) serialization, 16 hex digits.
inline std::string config_hash(const SimConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace skyktm
