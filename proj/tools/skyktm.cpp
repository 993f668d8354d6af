#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "skyktm/imitation.hpp"
#include "skyktm/server.hpp"

using namespace skyktm;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> rate;
};

struct TraineeFlags {
  std::string kind;
  double delay = 0.0;
  double tau = 0.0;
  double sigma_deg = 1.0;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

SimConfig load_config(const Globals& g) {
  SimConfig c = g.config_path.empty() ? default_sim_config() : load_sim_config(g.config_path);
  if (g.rate) {
    c.rate_hz = *g.rate;
    c.validate();
  }
  return c;
}

Scenario load_scen(const Globals& g) {
  Scenario s;
  if (!g.scenario_path.empty()) s = load_scenario(g.scenario_path);
  if (g.seed) s.seed = *g.seed;
  return s;
}

void apply_trainee(Scenario& s, const TraineeFlags& t) {
  if (t.kind.empty()) return;
  if (t.kind == "frozen") {
    s.trainee = frozen_trainee_spec();
    return;
  }
  s.trainee = TraineeSpec{};
  s.trainee.kind = t.kind;
  s.trainee.delay = t.delay;
  s.trainee.tau = t.tau;
  s.trainee.sigma = deg2rad(t.sigma_deg);
  make_trainee(s.trainee, 0);
}

void add_trainee_flags(CLI::App* app, TraineeFlags& t) {
  app->add_option("--trainee", t.kind, "ideal | lag | pure_delay | noisy | frozen")
      ->check(CLI::IsMember({"ideal", "lag", "pure_delay", "noisy", "frozen"}));
  app->add_option("--delay", t.delay, "pure_delay seconds");
  app->add_option("--tau", t.tau, "lag time constant, s");
  app->add_option("--sigma-deg", t.sigma_deg, "noise standard deviation, deg");
}

LogContext context(const SimConfig& c, const Scenario& s) { return {to_json(s), to_json(c)}; }

void print_metrics(const Metrics& m) {
  fmt::print("outcome {}  time {}  max|u_arms| {:.2f} deg  max|u_legs| {:.2f} deg  corridor violation {:.2f} s  "
             "oscillation {} ({} changes/20 s)\n",
             to_string(m.outcome), m.completion_time ? fmt::format("{:.2f} s", *m.completion_time) : "-",
             rad2deg(m.max_abs_u_arms), rad2deg(m.max_abs_u_legs), m.corridor_violation_time,
             sustained_oscillation(m) ? "yes" : "no", m.yaw_error_crossings_20s);
}

void write_outputs(const fs::path& dir, const std::string& stem, const EpisodeLog& log, const LogContext& ctx) {
  fs::create_directories(dir);
  write_log_file((dir / (stem + ".jsonl")).string(), log, ctx);
  write_json_file((dir / (stem + ".metrics.json")).string(), to_json(compute_metrics(log)));
  fmt::print("wrote {} and {}\n", (dir / (stem + ".jsonl")).string(), (dir / (stem + ".metrics.json")).string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skyktm: free-fall simulator with kinesthetic posture cues"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "config file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--scenario", g.scenario_path, "scenario file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--rate", g.rate, "simulation rate, Hz");

  const std::string data_dir = env_or("SKYKTM_DATA_DIR", ".");

  auto* run = app.add_subcommand("run", "headless episode");
  TraineeFlags run_t;
  std::string out_dir = data_dir, stem = "episode";
  add_trainee_flags(run, run_t);
  run->add_option("--out-dir", out_dir, "output directory (env SKYKTM_DATA_DIR)");
  run->add_option("--name", stem, "output file stem");

  auto* serve = app.add_subcommand("serve", "live session over WebSocket");
  TraineeFlags serve_t;
  std::string bind = env_or("SKYKTM_BIND", "127.0.0.1:8765");
  bool external = false;
  double stream_hz = 60.0;
  add_trainee_flags(serve, serve_t);
  serve->add_option("--bind", bind, "host:port (env SKYKTM_BIND)");
  serve->add_flag("--external", external, "take pattern angles from the pilot client");
  serve->add_option("--stream-hz", stream_hz, "client update rate");
  serve->add_option("--out-dir", out_dir, "output directory (env SKYKTM_DATA_DIR)");

  auto* rep = app.add_subcommand("replay", "replay a log");
  std::string log_path;
  double speed = 0.0;
  bool quiet = false;
  rep->add_option("log", log_path, "episode log (.jsonl)")->required();
  rep->add_option("--speed", speed, "speed factor (0 = as fast as possible)");
  rep->add_flag("--quiet", quiet, "no per-second frame lines");

  auto* cal = app.add_subcommand("calibrate", "scale c_drag_max for a terminal speed");
  double target_speed = 61.0;
  std::string patch_path;
  cal->add_option("--target-speed", target_speed, "m/s");
  cal->add_option("--out", patch_path, "write the config patch here");

  auto* imi = app.add_subcommand("imitate", "imitation exercise");
  TraineeFlags imi_t;
  double duration = 30.0;
  add_trainee_flags(imi, imi_t);
  imi->add_option("--duration", duration, "s");

  auto* exp = app.add_subcommand("export", "log to CSV");
  std::string csv_path;
  std::size_t stride = 1;
  exp->add_option("log", log_path, "episode log (.jsonl)")->required();
  exp->add_option("-o,--out", csv_path, "CSV path (default: stdout)");
  exp->add_option("--stride", stride, "keep every n-th tick")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const SimConfig c = load_config(g);
      Scenario s = load_scen(g);
      apply_trainee(s, run_t);
      Session session(c, s);
      session.set_config_hash(config_hash(c));
      while (!session.finished()) session.tick();
      const EpisodeLog log = session.take_log();
      print_metrics(compute_metrics(log));
      write_outputs(out_dir, stem, log, context(c, s));
      return 0;
    }
    if (*serve) {
      const SimConfig c = load_config(g);
      Scenario s = load_scen(g);
      apply_trainee(s, serve_t);
      s.external_input = external;
      ServeOptions opt;
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorCode::Config, "bind must be host:port");
      opt.address = bind.substr(0, colon);
      opt.port = static_cast<unsigned short>(std::stoi(bind.substr(colon + 1)));
      opt.stream_hz = stream_hz;
      Server server(c, s, opt);
      server.start();
      const EpisodeLog log = server.run();
      server.stop();
      print_metrics(compute_metrics(log));
      write_outputs(out_dir, "live", log, context(c, s));
      return 0;
    }
    if (*rep) {
      std::ifstream in(log_path);
      if (!in) throw Error(ErrorCode::Config, "cannot open " + log_path);
      const long per_second = 240;
      try {
        const ReplayResult r = replay(in, speed, [&](const TickRecord& t) {
          if (!quiet && t.tick % per_second == 0)
            fmt::print("t {:7.2f}  x {:8.2f}  y {:7.2f}  u_arms {:6.2f}  u_legs {:6.2f}\n", t.time,
                       t.state.position.x(), t.state.position.y(), rad2deg(t.u_arms), rad2deg(t.u_legs));
        });
        fmt::print("replayed {} frames in {:.2f} s, outcome {}\n", r.frames, r.wall_seconds, to_string(r.outcome));
      } catch (const CorruptLog& e) {
        std::cerr << "replay stopped at record " << e.record() << ": " << e.what() << '\n';
        return 3;
      }
      return 0;
    }
    if (*cal) {
      const SimConfig c = load_config(g);
      const BodyModel body = build_body(c.anthropometrics);
      const CalibrationResult r = calibrate(body, c.patterns.neutral, c.aero, target_speed, c.environment);
      const double check = settle(body, c.patterns.neutral, r.coeffs, 60.0, c.dt(), c.environment).velocity.norm();
      const Json patch{{"aero", {{"c_drag_max", r.coeffs.c_drag_max}}}};
      fmt::print("c_drag_max {:.6f} -> {:.6f}  terminal speed {:.3f} m/s (verify {:.3f}, {} iterations)\n",
                 c.aero.c_drag_max, r.coeffs.c_drag_max, r.terminal_speed, check, r.iterations);
      if (patch_path.empty()) {
        std::cout << patch.dump(2) << '\n';
      } else {
        write_json_file(patch_path, patch);
      }
      return std::abs(check / target_speed - 1.0) <= 0.02 ? 0 : 1;
    }
    if (*imi) {
      const SimConfig c = load_config(g);
      Scenario s = load_scen(g);
      apply_trainee(s, imi_t);
      const ImitationResult r = run_imitation(c, s.trainee, s.seed, duration);
      fmt::print("imitation {} over {:.1f} s: mean rms {:.3f} deg, max {:.3f} deg, hold {}\n",
                 c.imitation.pattern.name(), duration, rad2deg(r.mean_rms), rad2deg(r.max_rms),
                 r.hold_time ? fmt::format("reached at {:.2f} s", *r.hold_time) : "not reached");
      return 0;
    }
    if (*exp) {
      LoadedLog l;
      try {
        l = read_log_file(log_path);
      } catch (const CorruptLog& e) {
        std::cerr << "export stopped at record " << e.record() << ": " << e.what() << '\n';
        return 3;
      }
      if (csv_path.empty()) {
        write_csv(std::cout, l.log, stride);
      } else {
        std::ofstream out(csv_path);
        if (!out) throw Error(ErrorCode::Config, "cannot write " + csv_path);
        write_csv(out, l.log, stride);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
