#pragma once

// Synthetic trainees: map the displayed Desired Posture to an executed
// posture with configurable imperfections.

#include <deque>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "skyktm/core.hpp"
#include "skyktm/posture.hpp"

namespace skyktm {

class TraineeModel {
 public:
  virtual ~TraineeModel() = default;
  virtual void reset(const Posture& neutral) = 0;
  virtual Posture step(const Posture& desired, double dt) = 0;
  virtual std::string kind() const = 0;
};

class IdealTrainee final : public TraineeModel {
 public:
  void reset(const Posture&) override {}
  Posture step(const Posture& desired, double) override { return desired; }
  std::string kind() const override { return "ideal"; }
};

/// Per-DOF first-order lag with time constant tau.
class LagTrainee final : public TraineeModel {
 public:
  explicit LagTrainee(double tau) : tau_(tau) {
    if (!(tau >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lag tau must be >= 0");
  }
  void reset(const Posture& neutral) override { y_ = neutral; }
  Posture step(const Posture& desired, double dt) override {
    if (tau_ == 0.0) return y_ = desired;
    const double a = 1.0 - std::exp(-dt / tau_);
    y_ += (desired - y_) * a;
    return y_;
  }
  std::string kind() const override { return "lag"; }
  double tau() const { return tau_; }

 private:
  double tau_;
  Posture y_;
};

/// Executes the desired posture from t_delay ago. History starts at neutral.
class DelayTrainee final : public TraineeModel {
 public:
  explicit DelayTrainee(double t_delay) : delay_(t_delay) {
    if (!(t_delay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "delay must be >= 0");
  }
  void reset(const Posture& neutral) override {
    neutral_ = neutral;
    history_.clear();
  }
  Posture step(const Posture& desired, double dt) override {
    const auto n = static_cast<std::size_t>(std::llround(delay_ / dt));
    if (history_.empty()) history_.assign(n, neutral_);
    history_.push_back(desired);
    while (history_.size() > n + 1) history_.pop_front();
    return history_.front();
  }
  std::string kind() const override { return "pure_delay"; }
  double delay() const { return delay_; }
  std::size_t buffer_size() const { return history_.size(); }

 private:
  double delay_;
  Posture neutral_;
  std::deque<Posture> history_;
};

/// Adds independent per-DOF Gaussian noise, low-pass filtered (first order)
/// at `cutoff_hz` and scaled to a stationary standard deviation `sigma`.
class NoisyTrainee final : public TraineeModel {
 public:
  NoisyTrainee(double sigma, std::uint64_t seed, double cutoff_hz = 2.0)
      : sigma_(sigma), cutoff_(cutoff_hz), seed_(seed), rng_(seed) {
    if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
    if (!(cutoff_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise cutoff must be positive");
  }
  void reset(const Posture&) override {
    rng_.seed(seed_);
    state_ = Posture();
  }
  Posture step(const Posture& desired, double dt) override {
    if (sigma_ == 0.0) return desired;
    const double a = std::exp(-2.0 * kPi * cutoff_ * dt);
    const double drive = sigma_ * std::sqrt((1.0 + a) / (1.0 - a));
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < kDofCount; ++i) state_[i] = a * state_[i] + (1.0 - a) * drive * n(rng_);
    return desired + state_;
  }
  std::string kind() const override { return "noisy"; }

 private:
  double sigma_;
  double cutoff_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  Posture state_;
};

/// Per-DOF offset bounds relative to the neutral posture.
struct OffsetCap {
  double min = -kPi;
  double max = kPi;
};

class RangeRestrictedTrainee final : public TraineeModel {
 public:
  explicit RangeRestrictedTrainee(std::array<OffsetCap, kDofCount> caps) : caps_(caps) {
    for (const OffsetCap& c : caps_)
      if (!(c.min <= c.max)) throw Error(ErrorCode::InvalidArgument, "cap min exceeds max");
  }
  /// Symmetric cap on the given DOFs, unrestricted elsewhere.
  static RangeRestrictedTrainee symmetric(std::span<const std::size_t> dofs, double cap) {
    std::array<OffsetCap, kDofCount> caps{};
    for (std::size_t i : dofs) caps[i] = {-cap, cap};
    return RangeRestrictedTrainee(caps);
  }
  void reset(const Posture& neutral) override { neutral_ = neutral; }
  Posture step(const Posture& desired, double) override {
    Posture out;
    for (std::size_t i = 0; i < kDofCount; ++i)
      out[i] = neutral_[i] + std::clamp(desired[i] - neutral_[i], caps_[i].min, caps_[i].max);
    return out;
  }
  std::string kind() const override { return "range_restricted"; }

 private:
  std::array<OffsetCap, kDofCount> caps_;
  Posture neutral_;
};

/// Stages applied in declared order.
class CompositeTrainee final : public TraineeModel {
 public:
  explicit CompositeTrainee(std::vector<std::unique_ptr<TraineeModel>> stages)
      : stages_(std::move(stages)) {}
  void reset(const Posture& neutral) override {
    for (auto& s : stages_) s->reset(neutral);
  }
  Posture step(const Posture& desired, double dt) override {
    Posture p = desired;
    for (auto& s : stages_) p = s->step(p, dt);
    return p;
  }
  std::string kind() const override { return "composite"; }
  std::size_t size() const { return stages_.size(); }

 private:
  std::vector<std::unique_ptr<TraineeModel>> stages_;
};

/// Declarative description, as read from scenario files and CLI flags.
struct TraineeSpec {
  std::string kind = "ideal";  // ideal | lag | pure_delay | noisy | range_restricted | composite
  double tau = 0.0;            // s
  double delay = 0.0;          // s
  double sigma = deg2rad(1.0); // rad
  double cutoff_hz = 2.0;
  std::vector<std::pair<std::size_t, OffsetCap>> caps;
  std::vector<TraineeSpec> stages;
};

/// Every DOF pinned at neutral: the no-actuation baseline.
inline TraineeSpec frozen_trainee_spec() {
  TraineeSpec t;
  t.kind = "range_restricted";
  for (std::size_t i = 0; i < kDofCount; ++i) t.caps.push_back({i, OffsetCap{0.0, 0.0}});
  return t;
}

inline std::unique_ptr<TraineeModel> make_trainee(const TraineeSpec& spec, std::uint64_t seed) {
  if (spec.kind == "ideal") return std::make_unique<IdealTrainee>();
  if (spec.kind == "lag") return std::make_unique<LagTrainee>(spec.tau);
  if (spec.kind == "pure_delay") return std::make_unique<DelayTrainee>(spec.delay);
  if (spec.kind == "noisy") return std::make_unique<NoisyTrainee>(spec.sigma, seed, spec.cutoff_hz);
  if (spec.kind == "range_restricted") {
    std::array<OffsetCap, kDofCount> caps{};
    for (const auto& [i, c] : spec.caps) {
      if (i >= kDofCount) throw Error(ErrorCode::InvalidArgument, "cap DOF index out of range");
      caps[i] = c;
    }
    return std::make_unique<RangeRestrictedTrainee>(caps);
  }
  if (spec.kind == "composite") {
    std::vector<std::unique_ptr<TraineeModel>> stages;
    std::uint64_t k = 0;
    for (const TraineeSpec& s : spec.stages) stages.push_back(make_trainee(s, seed + 0x9e3779b97f4a7c15ULL * ++k));
    return std::make_unique<CompositeTrainee>(std::move(stages));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown trainee kind '" + spec.kind + "'");
}

}  // namespace skyktm
