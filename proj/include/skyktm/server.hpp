#pragma once

// Real-time host: one simulation thread paced by absolute deadlines, one I/O
// thread serving WebSocket clients. The two meet only through posted
// handlers and the ExternalChannel mailbox.

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "skyktm/protocol.hpp"

namespace skyktm {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = net::ip::tcp;

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double stream_hz = 60.0;
  bool wait_for_pilot = true;  // external-input scenarios start when a pilot joins
  double stale_input_ms = 1000.0;
  double linger_s = 0.5;       // keep serving after the episode ends
};

struct TimingStats {
  long ticks = 0;
  long within_2ms = 0;
  double max_abs_late_ms = 0.0;
  double sum_late_ms = 0.0;

  void add(double late_ms) {
    ++ticks;
    if (std::abs(late_ms) <= 2.0) ++within_2ms;
    max_abs_late_ms = std::max(max_abs_late_ms, std::abs(late_ms));
    sum_late_ms += late_ms;
  }
  double on_time_fraction() const { return ticks ? static_cast<double>(within_2ms) / ticks : 1.0; }
  double mean_late_ms() const { return ticks ? sum_late_ms / ticks : 0.0; }
};

class Server {
 public:
  Server(SimConfig config, Scenario scenario, ServeOptions options = {})
      : config_(std::move(config)), scenario_(std::move(scenario)), opt_(options), acceptor_(ioc_) {
    if (!(opt_.stream_hz > 0.0) || opt_.stream_hz > config_.rate_hz)
      throw Error(ErrorCode::Config, "stream rate must be in (0, simulation rate]");
  }

  ~Server() { stop(); }

  /// Binds and starts the I/O thread. Throws when the port is busy.
  void start() {
    const tcp::endpoint ep(net::ip::make_address(opt_.address), opt_.port);
    beast::error_code ec;
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw Error(ErrorCode::Config, "cannot listen on " + opt_.address + ":" + std::to_string(opt_.port) +
                                               ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    spdlog::info("listening on ws://{}:{}", opt_.address, port_);
  }

  unsigned short port() const { return port_; }

  /// Runs the episode against the wall clock and returns its log.
  EpisodeLog run() {
    using Clock = std::chrono::steady_clock;
    Session session(config_, scenario_, scenario_.external_input ? &channel_ : nullptr);
    session.set_config_hash(config_hash(config_));
    {
      std::lock_guard lock(mu_);
      scenario_msg_ = wire::encode(wire::scenario_message(scenario_, session.path(), 0, now_ms()));
    }
    broadcast(scenario_msg_);

    if (scenario_.external_input && opt_.wait_for_pilot) {
      spdlog::info("waiting for a pilot");
      while (!pilot_joined_.load() && !stopping_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }

    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / config_.rate_hz));
    const long decimation = std::max(1L, std::lround(config_.rate_hz / opt_.stream_hz));
    auto next = Clock::now();
    while (!session.finished() && !stopping_.load()) {
      std::this_thread::sleep_until(next);
      timing_.add(std::chrono::duration<double, std::milli>(Clock::now() - next).count());
      const TickRecord& r = session.tick();
      current_tick_.store(r.tick);
      if (r.tick % decimation == 0 || session.finished()) {
        const double ts = now_ms();
        broadcast(wire::encode(wire::state_message(r, ts)));
        broadcast(wire::encode(wire::cues_message(r, session.cue_frame(), ts)));
      }
      next += period;
    }

    EpisodeLog log = session.take_log();
    if (!log.ticks.empty()) {
      const long tick = log.ticks.back().tick;
      broadcast(wire::encode(wire::metrics_message(compute_metrics(log), tick, now_ms())));
      broadcast(wire::encode(wire::event_message("episode-end", to_string(log.outcome), tick, now_ms())));
    }
    spdlog::info("episode {}: {} ticks, {:.2f}% on schedule (+-2 ms), max |late| {:.2f} ms", to_string(log.outcome),
                 timing_.ticks, 100.0 * timing_.on_time_fraction(), timing_.max_abs_late_ms);
    std::this_thread::sleep_for(std::chrono::duration<double>(opt_.linger_s));
    return log;
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      for (const auto& c : clients_) c->close();
    });
    if (io_thread_.joinable()) {
      // Give the close handshakes a moment, then stop the loop.
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      ioc_.stop();
      io_thread_.join();
    }
  }

  const TimingStats& timing() const { return timing_; }
  ExternalChannel& channel() { return channel_; }

 private:
  class Client : public std::enable_shared_from_this<Client> {
   public:
    Client(tcp::socket socket, Server& server) : ws_(std::move(socket)), server_(server) {}

    void start() {
      ws_.set_option(ws::stream_base::timeout::suggested(beast::role_type::server));
      ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->server_.clients_.insert(self);
        self->read();
      });
    }

    void send(std::shared_ptr<const std::string> text) {
      queue_.push_back(std::move(text));
      if (queue_.size() == 1) write();
    }

    void close() {
      if (closed_) return;
      closed_ = true;
      ws_.async_close(ws::close_code::normal, [self = shared_from_this()](beast::error_code) {});
    }

    wire::Role role = wire::Role::Observer;
    bool greeted = false;
    std::optional<double> clock_offset;  // min(server receive - client_ts), ms

   private:
    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->server_.drop(self);
          return;
        }
        const std::string text = beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->server_.on_message(self, text);
        if (!self->closed_) self->read();
      });
    }

    void write() {
      ws_.text(true);
      ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->server_.drop(self);
          return;
        }
        self->queue_.pop_front();
        if (!self->queue_.empty()) self->write();
      });
    }

    ws::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    Server& server_;
    bool closed_ = false;
  };

  static double now_ms() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
  }

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Client>(std::move(socket), *this)->start();
      do_accept();
    });
  }

  // I/O thread only.
  void drop(const std::shared_ptr<Client>& c) {
    clients_.erase(c);
    if (c.get() == pilot_) {
      pilot_ = nullptr;
      spdlog::warn("pilot disconnected");
    }
  }

  void send_to(const std::shared_ptr<Client>& c, const wire::Message& m) {
    c->send(std::make_shared<const std::string>(wire::encode(m)));
  }

  // I/O thread only.
  void on_message(const std::shared_ptr<Client>& c, const std::string& text) {
    const double recv = now_ms();
    const long tick = current_tick_.load();
    wire::Message m;
    try {
      m = wire::decode(text);
    } catch (const Error& e) {
      send_to(c, wire::event_message("protocol-error", e.what(), tick, recv));
      return;
    }
    if (m.kind == wire::Kind::Hello) {
      if (m.version != wire::kProtocolVersion) {
        send_to(c, wire::hello_reply(false, wire::Role::Observer, tick, recv,
                                     "unsupported protocol version " + std::to_string(m.version)));
        c->close();
        return;
      }
      const bool wants_pilot = m.payload.value("role", "observer") == "pilot";
      if (wants_pilot && pilot_ == nullptr && !pilot_taken_) {
        pilot_ = c.get();
        pilot_taken_ = true;
        c->role = wire::Role::Pilot;
        pilot_joined_.store(true);
      }
      c->greeted = true;
      send_to(c, wire::hello_reply(true, c->role, tick, recv));
      std::lock_guard lock(mu_);
      if (!scenario_msg_.empty()) c->send(std::make_shared<const std::string>(scenario_msg_));
      return;
    }
    if (!c->greeted) {
      send_to(c, wire::event_message("protocol-error", "hello required first", tick, recv));
      return;
    }
    if (m.kind != wire::Kind::Input) {
      send_to(c, wire::event_message("protocol-error", std::string("unexpected ") + wire::to_string(m.kind), tick, recv));
      return;
    }
    if (c->role != wire::Role::Pilot) {
      send_to(c, wire::event_message("input-ignored", "only the pilot's inputs apply", tick, recv));
      return;
    }
    ExternalInput in;
    try {
      in = wire::parse_input(m);
    } catch (const Error& e) {
      send_to(c, wire::event_message("protocol-error", e.what(), tick, recv));
      return;
    }
    const double offset = recv - in.client_timestamp_ms;
    if (!c->clock_offset || offset < *c->clock_offset) c->clock_offset = offset;
    const double age = offset - *c->clock_offset;
    if (age > opt_.stale_input_ms) {
      send_to(c, wire::event_message("stale-input", "input older than " + std::to_string(opt_.stale_input_ms) +
                                                        " ms discarded",
                                     tick, recv));
      return;
    }
    channel_.push(in);
  }

  // Any thread.
  void broadcast(const std::string& text) {
    auto shared = std::make_shared<const std::string>(text);
    net::post(ioc_, [this, shared] {
      for (const auto& c : clients_)
        if (c->greeted) c->send(shared);
    });
  }

  SimConfig config_;
  Scenario scenario_;
  ServeOptions opt_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::thread io_thread_;
  unsigned short port_ = 0;
  std::set<std::shared_ptr<Client>> clients_;  // I/O thread only
  Client* pilot_ = nullptr;                    // I/O thread only
  bool pilot_taken_ = false;                   // I/O thread only
  std::atomic<bool> pilot_joined_{false};
  std::atomic<bool> stopping_{false};
  std::atomic<long> current_tick_{0};
  ExternalChannel channel_;
  std::mutex mu_;
  std::string scenario_msg_;
  TimingStats timing_;
};

/// Minimal blocking client, used by the scripted pilot and the tests.
class Client {
 public:
  Client() : ws_(ioc_) {}

  void connect(const std::string& host, unsigned short port) {
    tcp::resolver resolver(ioc_);
    const auto results = resolver.resolve(host, std::to_string(port));
    net::connect(ws_.next_layer(), results);
    ws_.handshake(host + ":" + std::to_string(port), "/");
    ws_.text(true);
  }

  void send(const wire::Message& m) { ws_.write(net::buffer(wire::encode(m))); }

  wire::Message receive() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return wire::decode(beast::buffers_to_string(buf.data()));
  }

  /// Reads until a message of `kind` arrives.
  wire::Message receive(wire::Kind kind) {
    for (;;) {
      wire::Message m = receive();
      if (m.kind == kind) return m;
    }
  }

  void close() {
    beast::error_code ec;
    ws_.close(ws::close_code::normal, ec);
  }

 private:
  net::io_context ioc_;
  ws::stream<tcp::socket> ws_;
};

}  // namespace skyktm
