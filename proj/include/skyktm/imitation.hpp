#pragma once

// Imitation exercise: the Desired Posture cue follows a sinusoidal pattern
// angle and the trainee tries to hold the rms posture error under a threshold.

#include <optional>
#include <vector>

#include "skyktm/session.hpp"

namespace skyktm {

struct ImitationResult {
  std::optional<double> hold_time;  // s, first time the hold completed
  double mean_rms = 0.0;            // rad
  double max_rms = 0.0;             // rad
  double final_rms = 0.0;           // rad
  long ticks = 0;
  std::vector<double> rms;          // per tick
};

inline ImitationResult run_imitation(const SimConfig& config, const TraineeSpec& trainee, std::uint64_t seed,
                                     double duration) {
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  config.validate();
  config.imitation.validate();
  const double dt = config.dt();
  const PatternSet cue_set = config.cue_set();
  const Posture& neutral = config.patterns.neutral;
  auto model = make_trainee(trainee, seed);
  model->reset(neutral);
  PostureErrorTracker tracker(config.imitation.hold_threshold, config.imitation.hold_duration);

  ImitationResult res;
  Posture cue = neutral;
  const auto n = static_cast<long>(std::llround(duration / dt));
  double sum = 0.0;
  for (long k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    cue = clamp(cue_set, imitation_target(config.imitation, neutral, t), cue, dt);
    const Posture executed = model->step(cue, dt);
    const PostureError e = tracker.update(cue, executed, dt);
    res.rms.push_back(e.rms);
    sum += e.rms;
    res.max_rms = std::max(res.max_rms, e.rms);
    res.final_rms = e.rms;
    if (!res.hold_time && tracker.held()) res.hold_time = t + dt;
  }
  res.ticks = n;
  res.mean_rms = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return res;
}

}  // namespace skyktm
