#pragma once

// Square-root noise schedule, forward noising, ancestral reverse steps and the
// deterministic skip-step sampler.

#include <vector>

#include "dcpr/numerics.hpp"

namespace dcpr {

inline constexpr double kAlphaBarFloor = 1e-5;
inline constexpr double kAlphaBarCeil = 1.0 - 1e-5;

// Tables are indexed by step t in [0, T]. alpha[0] = alpha_bar[0] is the
// starting signal level 1 - sqrt(w); for t >= 1, alpha[t] = 1 - beta[t] and
// alpha_bar[t] = alpha_bar[t-1] * alpha[t].
struct NoiseSchedule {
  int max_step = 0;
  double w = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

NoiseSchedule build_schedule(int max_step, double w);

struct Noised {
  Matrix x_t;
  Matrix eps;
};

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, eps ~ N(0, I).
Noised forward_diffuse(const Matrix& x0, int t, const NoiseSchedule& s, Rng& rng);
// Same, with caller-supplied noise.
Matrix diffuse_with(const Matrix& x0, int t, const NoiseSchedule& s, const Matrix& eps);

// Uniform training step in [1, T].
int sample_step(Rng& rng, int max_step);

// One ancestral step x_t -> x_{t-1} guided by the denoiser estimate x0_hat.
Matrix reverse_step(const Matrix& x_t, int t, const Matrix& x0_hat, const NoiseSchedule& s,
                    Rng& rng);
Matrix reverse_step_with(const Matrix& x_t, int t, const Matrix& x0_hat,
                         const NoiseSchedule& s, const Matrix& eps);

// Arithmetic decreasing step list [T, ..., 0] with `transitions` jumps.
struct ReverseSubsequence {
  std::vector<int> steps;
  int transitions() const { return static_cast<int>(steps.size()) - 1; }
};

ReverseSubsequence build_subsequence(int max_step, int transitions);

// Deterministic implicit update from step t_s to t_prev < t_s.
Matrix accelerated_reverse_step(const Matrix& x_ts, int t_s, int t_prev, const Matrix& x0_hat,
                                const NoiseSchedule& s);

}  // namespace dcpr
