#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include <gtest/gtest.h>

#include "skyktm/config.hpp"
#include "skyktm/logio.hpp"
#include "skyktm/server.hpp"

using namespace skyktm;
namespace fs = std::filesystem;

namespace {

double wall_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

ServeOptions local() {
  ServeOptions o;
  o.port = 0;
  o.linger_s = 0.1;
  return o;
}

Scenario short_scenario() {
  Scenario s;
  s.target = {5.0, 0.0};
  s.initial_heading = 0.0;
  s.timeout = 20.0;
  return s;
}

Scenario external_scenario(double timeout) {
  Scenario s;
  s.external_input = true;
  s.timeout = timeout;
  return s;
}

wire::Message hello(Client& c, wire::Role role, int version = wire::kProtocolVersion) {
  c.send(wire::hello_request(role, wall_ms(), version));
  return c.receive(wire::Kind::Hello);
}

struct Cli {
  int code;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(SKYKTM_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("skyktm_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Serve, HeadlessRunsToCompletion) {
  Server server(default_sim_config(), short_scenario(), local());
  server.start();
  const auto t0 = std::chrono::steady_clock::now();
  const EpisodeLog log = server.run();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  server.stop();
  EXPECT_EQ(log.outcome, Outcome::Completed);
  const double sim = log.ticks.back().time;
  EXPECT_NEAR(wall, sim + 0.1, 0.5);
  EXPECT_EQ(server.timing().ticks, static_cast<long>(log.ticks.size()));
  // Bit-identical to the offline loop.
  const EpisodeLog offline = run_episode(default_sim_config(), short_scenario());
  ASSERT_EQ(offline.ticks.size(), log.ticks.size());
  EXPECT_EQ(offline.ticks.back().state.position, log.ticks.back().state.position);
}

TEST(Serve, LoopbackInputAppliesNextTick) {
  ServeOptions opt = local();
  opt.stream_hz = 240.0;
  Server server(default_sim_config(), external_scenario(1.5), opt);
  server.start();
  auto run = std::async(std::launch::async, [&] { return server.run(); });

  Client pilot;
  pilot.connect("127.0.0.1", server.port());
  const wire::Message h = hello(pilot, wire::Role::Pilot);
  ASSERT_TRUE(h.payload["accepted"].get<bool>());
  EXPECT_EQ(h.payload["role"], "pilot");

  // Let some neutral ticks through, then send the input.
  long seen = -1;
  while (seen < 24) seen = pilot.receive(wire::Kind::Cues).tick;
  pilot.send(wire::input_message({0.1, 0.0, wall_ms()}, wall_ms()));

  double prev = 0.0;
  bool applied = false;
  for (int i = 0; i < 200 && !applied; ++i) {
    const wire::Message m = pilot.receive(wire::Kind::Cues);
    ASSERT_EQ(m.tick, seen + 1);
    seen = m.tick;
    const double exec = m.payload["exec_arms"].get<double>();
    if (exec != 0.0) {
      EXPECT_EQ(prev, 0.0);
      EXPECT_NEAR(exec, 0.1, 1e-12);
      applied = true;
    }
    prev = exec;
  }
  EXPECT_TRUE(applied);
  const EpisodeLog log = run.get();
  pilot.close();
  server.stop();
  EXPECT_NEAR(log.ticks.back().exec_arms, 0.1, 1e-12);
}

TEST(Serve, PilotAndObserver) {
  ServeOptions opt = local();
  opt.stream_hz = 60.0;
  Server server(default_sim_config(), external_scenario(1.0), opt);
  server.start();

  Client pilot, observer;
  pilot.connect("127.0.0.1", server.port());
  observer.connect("127.0.0.1", server.port());
  EXPECT_EQ(hello(observer, wire::Role::Observer).payload["role"], "observer");
  EXPECT_EQ(hello(pilot, wire::Role::Pilot).payload["role"], "pilot");
  Client late;
  late.connect("127.0.0.1", server.port());
  EXPECT_EQ(hello(late, wire::Role::Pilot).payload["role"], "observer");
  late.close();

  auto run = std::async(std::launch::async, [&] { return server.run(); });
  observer.send(wire::input_message({0.3, 0.0, wall_ms()}, wall_ms()));
  const wire::Message ev = observer.receive(wire::Kind::Event);
  EXPECT_EQ(ev.payload["type"], "input-ignored");
  pilot.send(wire::input_message({0.05, 0.0, wall_ms()}, wall_ms()));

  auto collect = [](Client& c) {
    std::vector<wire::Message> states;
    for (;;) {
      wire::Message m = c.receive();
      if (m.kind == wire::Kind::State) states.push_back(m);
      if (m.kind == wire::Kind::Event && m.payload["type"] == "episode-end") return states;
    }
  };
  auto obs = std::async(std::launch::async, [&] { return collect(observer); });
  const std::vector<wire::Message> a = collect(pilot);
  const std::vector<wire::Message> b = obs.get();
  const EpisodeLog log = run.get();
  pilot.close();
  observer.close();
  server.stop();

  ASSERT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tick, b[i].tick);
    EXPECT_EQ(a[i].payload, b[i].payload);
  }
  double max_exec = 0.0;
  for (const TickRecord& r : log.ticks) max_exec = std::max(max_exec, r.exec_arms);
  EXPECT_NEAR(max_exec, 0.05, 1e-12);
}

TEST(Serve, VersionMismatchRejected) {
  Server server(default_sim_config(), short_scenario(), local());
  server.start();
  Client c;
  c.connect("127.0.0.1", server.port());
  const wire::Message r = hello(c, wire::Role::Pilot, 99);
  EXPECT_FALSE(r.payload["accepted"].get<bool>());
  EXPECT_EQ(r.payload["versions"], Json::array({wire::kProtocolVersion}));
  EXPECT_NE(r.payload["reason"].get<std::string>().find("99"), std::string::npos);
  c.close();
  server.stop();
}

TEST(Serve, BusyPortFailsAtStartup) {
  Server a(default_sim_config(), short_scenario(), local());
  a.start();
  ServeOptions opt = local();
  opt.port = a.port();
  Server b(default_sim_config(), short_scenario(), opt);
  try {
    b.start();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
  a.stop();
  EXPECT_THROW(Server(default_sim_config(), short_scenario(), [] {
                 ServeOptions o;
                 o.stream_hz = 1000.0;
                 return o;
               }()),
               Error);
}

TEST(Serve, StaleInputDiscarded) {
  ServeOptions opt = local();
  Server server(default_sim_config(), external_scenario(1.0), opt);
  server.start();
  Client pilot;
  pilot.connect("127.0.0.1", server.port());
  hello(pilot, wire::Role::Pilot);
  auto run = std::async(std::launch::async, [&] { return server.run(); });
  const double now = wall_ms();
  pilot.send(wire::input_message({0.02, 0.0, now}, now));
  pilot.send(wire::input_message({0.2, 0.0, now - 2000.0}, now));
  const wire::Message ev = pilot.receive(wire::Kind::Event);
  EXPECT_EQ(ev.payload["type"], "stale-input");
  const EpisodeLog log = run.get();
  pilot.close();
  server.stop();
  for (const TickRecord& r : log.ticks) ASSERT_LT(r.exec_arms, 0.1);
}

TEST(Serve, ProtocolErrorsReported) {
  Server server(default_sim_config(), short_scenario(), local());
  server.start();
  Client c;
  c.connect("127.0.0.1", server.port());
  c.send(wire::input_message({0.1, 0.0, 0.0}, 0.0));
  EXPECT_EQ(c.receive(wire::Kind::Event).payload["type"], "protocol-error");
  c.close();
  server.stop();
}

TEST(Cli, RunWritesLogAndMetrics) {
  const fs::path d = temp_dir("run");
  const Cli r = cli("run --out-dir " + d.string() + " --name ideal");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(d / "ideal.jsonl"));
  EXPECT_TRUE(fs::exists(d / "ideal.metrics.json"));
  const Json m = read_json_file((d / "ideal.metrics.json").string());
  EXPECT_EQ(m["outcome"], "completed");
  EXPECT_LE(m["completion_time"].get<double>(), 120.0);
  EXPECT_NE(r.out.find("outcome completed"), std::string::npos);
}

TEST(Cli, ReplayTruncatedLogFails) {
  const fs::path d = temp_dir("replay");
  const std::string scen = std::string(SKYKTM_DATA) + "/scenarios/default.json";
  ASSERT_EQ(cli("--scenario " + scen + " run --trainee frozen --out-dir " + d.string() + " --name f").code, 0);
  const Cli ok = cli("replay --speed 0 --quiet " + (d / "f.jsonl").string());
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("replayed 57600 frames"), std::string::npos) << ok.out;

  std::ifstream in(d / "f.jsonl");
  std::ofstream out(d / "cut.jsonl");
  std::string line;
  for (int i = 0; i < 300 && std::getline(in, line); ++i) out << line << '\n';
  std::getline(in, line);
  out << line.substr(0, line.size() / 3);
  out.close();
  const Cli bad = cli("replay --speed 0 --quiet " + (d / "cut.jsonl").string());
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.out.find("record 300"), std::string::npos) << bad.out;
  const Cli exp = cli("export " + (d / "cut.jsonl").string());
  EXPECT_NE(exp.code, 0);
}

TEST(Cli, ExportCsv) {
  const fs::path d = temp_dir("export");
  ASSERT_EQ(cli("run --trainee frozen --out-dir " + d.string() + " --name f").code, 0);
  const Cli r = cli("export --stride 240 -o " + (d / "f.csv").string() + " " + (d / "f.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(d / "f.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, kCsvHeader);
  int rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  EXPECT_EQ(rows, 240);
}

TEST(Cli, CalibrateHitsTarget) {
  const Cli r = cli("calibrate --target-speed 61");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("c_drag_max"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_NE(cli("").code, 0);
  EXPECT_NE(cli("run --bogus").code, 0);
  EXPECT_NE(cli("--config /nonexistent.json run").code, 0);
  EXPECT_NE(cli("replay /nonexistent.jsonl").code, 0);
}
