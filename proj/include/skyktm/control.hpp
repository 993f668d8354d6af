#pragma once

// Rational transfer functions, their bilinear discretization, the two-loop
// controller bank, measurement prediction for delay compensation and the
// adaptive PI trim.

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "skyktm/core.hpp"
#include "skyktm/dynamics.hpp"

namespace skyktm {

using Poly = std::vector<double>;  // descending powers

inline Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline std::complex<double> poly_eval(const Poly& p, std::complex<double> x) {
  std::complex<double> acc = 0.0;
  for (double c : p) acc = acc * x + c;
  return acc;
}

struct RationalTF {
  Poly num{1.0};
  Poly den{1.0};
  double gain = 1.0;

  std::size_t order() const { return den.size() - 1; }

  void validate() const {
    if (num.empty() || den.empty()) throw Error(ErrorCode::InvalidArgument, "empty polynomial");
    for (double c : num)
      if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "non-finite numerator");
    for (double c : den)
      if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "non-finite denominator");
    if (!std::isfinite(gain)) throw Error(ErrorCode::InvalidArgument, "non-finite gain");
    if (den.front() == 0.0) throw Error(ErrorCode::InvalidArgument, "leading denominator coefficient is zero");
    if (den.size() < num.size()) throw Error(ErrorCode::InvalidArgument, "improper transfer function");
  }

  std::complex<double> eval(std::complex<double> s) const {
    return gain * poly_eval(num, s) / poly_eval(den, s);
  }
  std::complex<double> freq(double omega) const { return eval({0.0, omega}); }

  /// gain * prod(1 + s/z) / (s^integrators * prod(1 + s/p)), break
  /// frequencies in rad/s.
  static RationalTF from_breaks(double gain, const std::vector<double>& zeros,
                                const std::vector<double>& poles, int integrators = 0) {
    RationalTF tf;
    tf.gain = gain;
    for (double z : zeros) tf.num = poly_mul(tf.num, {1.0 / z, 1.0});
    for (double p : poles) tf.den = poly_mul(tf.den, {1.0 / p, 1.0});
    for (int i = 0; i < integrators; ++i) tf.den = poly_mul(tf.den, {1.0, 0.0});
    tf.validate();
    return tf;
  }

  /// Magnitudes of the finite nonzero roots of num and den (rad/s).
  std::vector<double> break_frequencies() const {
    std::vector<double> out;
    for (const Poly* p : {&num, &den}) {
      Poly q = *p;
      while (q.size() > 1 && q.back() == 0.0) q.pop_back();
      while (q.size() > 1 && q.front() == 0.0) q.erase(q.begin());
      const std::size_t n = q.size() - 1;
      if (n == 0) continue;
      Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
      for (std::size_t i = 0; i < n; ++i) comp(0, i) = -q[i + 1] / q[0];
      for (std::size_t i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
      const Eigen::VectorXcd r = comp.eigenvalues();
      for (Eigen::Index i = 0; i < r.size(); ++i) out.push_back(std::abs(r(i)));
    }
    return out;
  }
};

/// The five controller blocks.
struct ControllerDesign {
  std::string name = "qft-default";
  RationalTF g11, f11, g22, g21, f22;
};

inline ControllerDesign qft_design() {
  ControllerDesign d;
  d.g11 = RationalTF::from_breaks(0.25, {3.5, 0.7}, {10.0, 100.0}, 1);
  d.f11 = RationalTF::from_breaks(1.0, {0.6}, {7.0, 8.0, 1.0});
  d.g22 = RationalTF::from_breaks(0.1, {1.5, 0.2, 1.0}, {0.6, 10.0}, 1);
  d.g21 = RationalTF::from_breaks(-0.035, {3.0, 1.0, 0.5}, {5.0}, 2);
  d.f22 = RationalTF::from_breaks(1.0, {}, {1.0, 2.0});
  return d;
}

/// Single-input single-output discrete block in delta form,
///   x[k+1] = x[k] + Ad x[k] + Bd u[k],   y[k] = C x[k] + D u[k],
/// so A = I + Ad. Poles near z = 1 keep full relative precision.
class DiscreteLTI {
 public:
  DiscreteLTI() = default;
  DiscreteLTI(Eigen::MatrixXd ad, Eigen::VectorXd bd, Eigen::RowVectorXd c, double d, double rate_hz)
      : Ad_(std::move(ad)), Bd_(std::move(bd)), C_(std::move(c)), D_(d), rate_(rate_hz),
        x_(Eigen::VectorXd::Zero(Ad_.rows())) {}

  const Eigen::MatrixXd& Ad() const { return Ad_; }
  Eigen::MatrixXd A() const { return Eigen::MatrixXd::Identity(order(), order()) + Ad_; }
  const Eigen::VectorXd& B() const { return Bd_; }
  const Eigen::RowVectorXd& C() const { return C_; }
  double D() const { return D_; }
  double rate() const { return rate_; }
  std::size_t order() const { return static_cast<std::size_t>(Ad_.rows()); }

  const Eigen::VectorXd& state() const { return x_; }
  void set_state(const Eigen::VectorXd& x) { x_ = x; }
  void reset() { x_.setZero(); }

  double output(double u) const { return (order() ? (C_ * x_)(0) : 0.0) + D_ * u; }
  Eigen::VectorXd next_state(double u) const { return x_ + (Ad_ * x_ + Bd_ * u); }

  double step(double u) {
    const double y = output(u);
    if (order()) x_ = next_state(u);
    return y;
  }

  std::complex<double> freq(double omega) const {
    const std::size_t n = order();
    if (n == 0) return D_;
    const double h = omega / rate_;
    const double sh = std::sin(0.5 * h);
    const std::complex<double> delta(-2.0 * sh * sh, std::sin(h));  // e^{jh} - 1
    Eigen::MatrixXcd m = delta * Eigen::MatrixXcd::Identity(n, n) - Ad_.cast<std::complex<double>>();
    const Eigen::VectorXcd x = m.partialPivLu().solve(Bd_.cast<std::complex<double>>());
    return (C_.cast<std::complex<double>>() * x)(0) + D_;
  }

  /// H(z = 1), or nullopt when there is a pole at z = 1.
  std::optional<double> dc_gain() const {
    const std::size_t n = order();
    if (n == 0) return D_;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(-Ad_);
    if (!lu.isInvertible()) return std::nullopt;
    return (C_ * lu.solve(Bd_))(0) + D_;
  }

  Eigen::VectorXcd poles() const {
    if (order() == 0) return {};
    return Ad_.eigenvalues().array() + 1.0;
  }

  bool warning = false;  // sample rate below twice the fastest break frequency

 private:
  Eigen::MatrixXd Ad_;
  Eigen::VectorXd Bd_;
  Eigen::RowVectorXd C_;
  double D_ = 0.0;
  double rate_ = kDefaultRateHz;
  Eigen::VectorXd x_;
};

/// Tustin mapping s = 2 rate (z - 1)/(z + 1) without prewarping. With
/// delta = z - 1 this is s = 2 rate delta / (delta + 2); the result is realized
/// in observer (transposed direct form II) canonical form over delta.
inline DiscreteLTI discretize(const RationalTF& tf, double rate_hz) {
  tf.validate();
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  const std::size_t n = tf.order();
  const long double k = 2.0L * rate_hz;

  // p(s) (delta + 2)^n as ascending powers of delta
  auto map = [&](const Poly& p) {
    std::vector<long double> out(n + 1, 0.0L);
    const std::size_t deg = p.size() - 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::size_t power = deg - i;  // s^power
      if (p[i] == 0.0) continue;
      // (k delta)^power (delta + 2)^(n - power)
      std::vector<long double> term(n + 1, 0.0L);
      long double binom = 1.0L;
      const std::size_t m = n - power;
      for (std::size_t r = 0; r <= m; ++r) {
        term[power + r] = binom * std::pow(2.0L, static_cast<long double>(m - r));
        binom = binom * static_cast<long double>(m - r) / static_cast<long double>(r + 1);
      }
      const long double scale = static_cast<long double>(p[i]) * std::pow(k, static_cast<long double>(power));
      for (std::size_t j = 0; j <= n; ++j) out[j] += scale * term[j];
    }
    return out;
  };
  std::vector<long double> b = map(tf.num);
  std::vector<long double> a = map(tf.den);
  const long double lead = a[n];
  for (long double& v : b) v *= static_cast<long double>(tf.gain) / lead;
  for (long double& v : a) v /= lead;

  const long double d = b[n];
  Eigen::MatrixXd Ad = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd Bd(n);
  Eigen::RowVectorXd C = Eigen::RowVectorXd::Zero(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = n - 1 - i;  // descending coefficient index
    Ad(i, 0) = static_cast<double>(-a[j]);
    if (i + 1 < n) Ad(i, i + 1) = 1.0;
    Bd(i) = static_cast<double>(b[j] - a[j] * d);
  }
  if (n) C(0) = 1.0;
  DiscreteLTI out(Ad, Bd, C, static_cast<double>(d), rate_hz);
  for (double w : tf.break_frequencies())
    if (rate_hz < 2.0 * w / (2.0 * kPi)) out.warning = true;
  return out;
}

struct ControlOutput {
  double u_arms = 0.0;  // rad
  double u_legs = 0.0;  // rad
  double omega_error = 0.0;  // F11 * omega_com - omega_meas, rad/s
  double v_error = 0.0;      // F22 * v_com - v_meas, m/s
  bool arms_saturated = false;
  bool legs_saturated = false;
};

/// u_arms = G11 (F11 Om_com - Om_meas)
/// u_legs = G22 (F22 V_com - V_meas) + G21 (F11 Om_com - Om_meas)
///
/// Outputs are clamped to +-limit. A loop block's state is held while its
/// output is clamped and its own error drives the output further into the
/// clamp (conditional integration).
class ControllerBank {
 public:
  ControllerBank() : ControllerBank(qft_design()) {}
  explicit ControllerBank(const ControllerDesign& design, double rate_hz = kDefaultRateHz,
                          double limit = deg2rad(30.0))
      : design_(design), rate_(rate_hz), limit_(limit),
        g11_(discretize(design.g11, rate_hz)), f11_(discretize(design.f11, rate_hz)),
        g22_(discretize(design.g22, rate_hz)), g21_(discretize(design.g21, rate_hz)),
        f22_(discretize(design.f22, rate_hz)) {
    if (!(limit > 0.0)) throw Error(ErrorCode::InvalidArgument, "output limit must be positive");
  }

  const ControllerDesign& design() const { return design_; }
  double rate() const { return rate_; }
  double limit() const { return limit_; }
  const DiscreteLTI& g11() const { return g11_; }
  const DiscreteLTI& f11() const { return f11_; }
  const DiscreteLTI& g22() const { return g22_; }
  const DiscreteLTI& g21() const { return g21_; }
  const DiscreteLTI& f22() const { return f22_; }

  void reset() {
    for (DiscreteLTI* b : {&g11_, &f11_, &g22_, &g21_, &f22_}) b->reset();
  }

  /// Unclamped outputs for the given errors, without advancing any state.
  std::pair<double, double> raw_outputs(double omega_error, double v_error) const {
    return {g11_.output(omega_error), g22_.output(v_error) + g21_.output(omega_error)};
  }

  ControlOutput step(double omega_com, double v_com, double omega_meas, double v_meas) {
    for (double v : {omega_com, v_com, omega_meas, v_meas})
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteState, "non-finite controller input");

    ControlOutput out;
    out.omega_error = f11_.output(omega_com) - omega_meas;
    out.v_error = f22_.output(v_com) - v_meas;

    const double arms = g11_.output(out.omega_error);
    const double y21 = g21_.output(out.omega_error);
    const double y22 = g22_.output(out.v_error);
    const double legs = y22 + y21;

    out.u_arms = std::clamp(arms, -limit_, limit_);
    out.u_legs = std::clamp(legs, -limit_, limit_);
    out.arms_saturated = out.u_arms != arms;
    out.legs_saturated = out.u_legs != legs;

    f11_.step(omega_com);
    f22_.step(v_com);
    advance(g11_, out.omega_error, arms, out.arms_saturated, design_.g11.gain);
    advance(g21_, out.omega_error, legs, out.legs_saturated, design_.g21.gain);
    advance(g22_, out.v_error, legs, out.legs_saturated, design_.g22.gain);
    return out;
  }

 private:
  static void advance(DiscreteLTI& block, double error, double raw, bool saturated, double gain) {
    const double push = (gain < 0.0 ? -error : error);
    if (saturated && push * raw > 0.0) return;
    block.step(error);
  }

  ControllerDesign design_;
  double rate_;
  double limit_;
  DiscreteLTI g11_, f11_, g22_, g21_, f22_;
};

struct LoopErrors {
  double omega = 0.0;  // rad/s
  double v = 0.0;      // m/s
};

/// Command minus the measurement predicted t_delay ahead.
inline LoopErrors delay_compensated_errors(double omega_com, double v_com, double omega_pred,
                                           double v_pred) {
  return {omega_com - omega_pred, v_com - v_pred};
}

struct PredictedMeasurement {
  double omega = 0.0;  // yaw rate, rad/s
  double v = 0.0;      // forward speed, m/s
  SkyState state;
};

inline constexpr double kMaxCompensatedDelay = 2.0;

/// Advances the dynamics `t_delay` seconds with the posture held and reads
/// the measurements off the final state.
inline PredictedMeasurement predict_measurements(const BodyModel& body, const Posture& posture,
                                                 const SkyState& state, const AeroCoefficients& k,
                                                 double t_delay, double dt = 1.0 / kDefaultRateHz,
                                                 const Environment& env = {},
                                                 double max_delay = kMaxCompensatedDelay) {
  if (!(t_delay >= 0.0) || t_delay > max_delay)
    throw Error(ErrorCode::DelayOutOfRange, "t_delay must lie in [0, " + std::to_string(max_delay) + "] s");
  SkyState s = state;
  const Posture zero;
  const auto n = static_cast<long>(std::llround(t_delay / dt));
  for (long i = 0; i < n; ++i) s = step(body, posture, zero, s, k, dt, env);
  return {s.yaw_rate(), s.forward_speed(), s};
}

struct TrimGains {
  double kp = 0.0;
  double ki = 0.0;
};

/// PI corrections on the disparity between an ideal-actuator twin simulation
/// and the measured velocities.
class AdaptiveTrim {
 public:
  AdaptiveTrim() = default;
  AdaptiveTrim(TrimGains arms, TrimGains legs) : arms_(arms), legs_(legs) {}

  void reset() { int_omega_ = int_v_ = 0.0; }

  /// Returns {du_arms, du_legs}.
  std::pair<double, double> step(double omega_ideal, double v_ideal, double omega_meas,
                                 double v_meas, double dt) {
    const double d_omega = omega_ideal - omega_meas;
    const double d_v = v_ideal - v_meas;
    int_omega_ += d_omega * dt;
    int_v_ += d_v * dt;
    return {arms_.kp * d_omega + arms_.ki * int_omega_, legs_.kp * d_v + legs_.ki * int_v_};
  }

  double integral_omega() const { return int_omega_; }
  double integral_v() const { return int_v_; }

 private:
  TrimGains arms_, legs_;
  double int_omega_ = 0.0;
  double int_v_ = 0.0;
};

}  // namespace skyktm
