#include "dcpr/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcpr/error.hpp"

namespace dcpr {

namespace {

void check_step(int t, int lo, const NoiseSchedule& s, const char* what) {
  if (t < lo || t > s.max_step) {
    throw InvalidArgument(std::string(what) + ": step " + std::to_string(t) +
                          " outside [" + std::to_string(lo) + ", " +
                          std::to_string(s.max_step) + "]");
  }
}

}  // namespace

NoiseSchedule build_schedule(int max_step, double w) {
  if (max_step < 2) throw InvalidArgument("build_schedule: T must be >= 2");
  if (!(w > 0.0 && w < 1.0)) throw InvalidArgument("build_schedule: w must lie in (0, 1)");

  NoiseSchedule s;
  s.max_step = max_step;
  s.w = w;
  const auto n = static_cast<std::size_t>(max_step) + 1;
  s.alpha_bar.resize(n);
  for (int t = 0; t <= max_step; ++t) {
    const double raw = 1.0 - std::sqrt(static_cast<double>(t) / max_step + w);
    s.alpha_bar[t] = std::clamp(raw, kAlphaBarFloor, kAlphaBarCeil);
  }
  // Clamping can flatten the tail; lift it just enough to stay strictly
  // decreasing.
  for (int t = max_step - 1; t >= 0; --t) {
    if (s.alpha_bar[t] <= s.alpha_bar[t + 1]) s.alpha_bar[t] = s.alpha_bar[t + 1] + 1e-12;
  }

  s.alpha.resize(n);
  s.beta.resize(n);
  s.alpha[0] = s.alpha_bar[0];
  s.beta[0] = 1.0 - s.alpha[0];
  for (int t = 1; t <= max_step; ++t) {
    s.alpha[t] = s.alpha_bar[t] / s.alpha_bar[t - 1];
    s.beta[t] = 1.0 - s.alpha[t];
  }
  return s;
}

Matrix diffuse_with(const Matrix& x0, int t, const NoiseSchedule& s, const Matrix& eps) {
  check_step(t, 1, s, "forward_diffuse");
  if (!x0.same_shape(eps)) throw ShapeError("forward_diffuse: " + x0.shape() + " vs " + eps.shape());
  const double a = std::sqrt(s.alpha_bar[t]);
  const double b = std::sqrt(1.0 - s.alpha_bar[t]);
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Noised forward_diffuse(const Matrix& x0, int t, const NoiseSchedule& s, Rng& rng) {
  check_step(t, 1, s, "forward_diffuse");
  Matrix eps = sample_gaussian(rng, x0.rows(), x0.cols());
  Matrix x_t = diffuse_with(x0, t, s, eps);
  return {std::move(x_t), std::move(eps)};
}

int sample_step(Rng& rng, int max_step) {
  if (max_step < 1) throw InvalidArgument("sample_step: T must be >= 1");
  return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_step)));
}

Matrix reverse_step_with(const Matrix& x_t, int t, const Matrix& x0_hat, const NoiseSchedule& s,
                         const Matrix& eps) {
  check_step(t, 1, s, "reverse_step");
  if (!x_t.same_shape(x0_hat) || !x_t.same_shape(eps)) {
    throw ShapeError("reverse_step: " + x_t.shape() + ", " + x0_hat.shape() + ", " + eps.shape());
  }
  const double alpha = s.alpha[t];
  const double ab = s.alpha_bar[t];
  const double ab_prev = s.alpha_bar[t - 1];
  const double c_xt = std::sqrt(alpha) * (1.0 - ab_prev);
  const double c_x0 = std::sqrt(ab_prev) * (1.0 - alpha);
  const double c_eps = (1.0 - alpha) * (1.0 - ab_prev);
  const double denom = 1.0 - ab;
  Matrix out(x_t.rows(), x_t.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (c_xt * x_t[i] + c_x0 * x0_hat[i] + c_eps * eps[i]) / denom;
  }
  return out;
}

Matrix reverse_step(const Matrix& x_t, int t, const Matrix& x0_hat, const NoiseSchedule& s,
                    Rng& rng) {
  Matrix eps = sample_gaussian(rng, x_t.rows(), x_t.cols());
  return reverse_step_with(x_t, t, x0_hat, s, eps);
}

ReverseSubsequence build_subsequence(int max_step, int transitions) {
  if (max_step < 1) throw InvalidArgument("build_subsequence: T must be >= 1");
  if (transitions < 1 || transitions > max_step) {
    throw InvalidArgument("build_subsequence: T_R = " + std::to_string(transitions) +
                          " must lie in [1, " + std::to_string(max_step) + "]");
  }
  ReverseSubsequence seq;
  seq.steps.reserve(static_cast<std::size_t>(transitions) + 1);
  const double stride = static_cast<double>(max_step) / transitions;
  for (int i = 0; i <= transitions; ++i) {
    int step = static_cast<int>(std::lround(max_step - i * stride));
    if (i == 0) step = max_step;
    if (i == transitions) step = 0;
    if (!seq.steps.empty() && step >= seq.steps.back()) continue;
    seq.steps.push_back(step);
  }
  return seq;
}

Matrix accelerated_reverse_step(const Matrix& x_ts, int t_s, int t_prev, const Matrix& x0_hat,
                                const NoiseSchedule& s) {
  if (t_prev >= t_s) {
    throw InvalidArgument("accelerated_reverse_step: t_prev " + std::to_string(t_prev) +
                          " must be below t_s " + std::to_string(t_s));
  }
  check_step(t_s, 1, s, "accelerated_reverse_step");
  check_step(t_prev, 0, s, "accelerated_reverse_step");
  if (!x_ts.same_shape(x0_hat)) {
    throw ShapeError("accelerated_reverse_step: " + x_ts.shape() + " vs " + x0_hat.shape());
  }
  const double ab_s = s.alpha_bar[t_s];
  const double ab_p = s.alpha_bar[t_prev];
  const double sa_s = std::sqrt(ab_s);
  const double sn_s = std::sqrt(1.0 - ab_s);
  const double sa_p = std::sqrt(ab_p);
  const double sn_p = std::sqrt(1.0 - ab_p);
  Matrix out(x_ts.rows(), x_ts.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double eps_hat = (x_ts[i] - sa_s * x0_hat[i]) / sn_s;
    out[i] = sa_p * x0_hat[i] + sn_p * eps_hat;
  }
  return out;
}

}  // namespace dcpr
