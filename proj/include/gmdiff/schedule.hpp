#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmdiff {

struct TimeSchedule {
  std::vector<double> times;   // t_0 = 0 < ... < t_N = T - delta
  double terminal_T = 0.0;
  double delta = 0.0;
  double kappa = 0.0;

  int steps() const { return static_cast<int>(times.size()) - 1; }
  double gamma(int l) const {
    return times[static_cast<std::size_t>(l) + 1] -
           times[static_cast<std::size_t>(l)];
  }
};

// Two-phase schedule: N/2 equal steps across [0, T-1], then N/2 geometric
// steps whose remaining gap T - t decays log-uniformly from 1 to delta, so
// the last point lands on T - delta exactly instead of overshooting it. Both
// phases keep gamma_l <= kappa * min(1, T - t_l) with
// kappa = max((T-1)/(N/2), delta^{-2/N} - 1). A caller-specified kappa is
// validated against the same invariant.
inline TimeSchedule build_schedule(double terminal_T, double delta, int n_steps,
                                   double kappa = 0.0) {
  if (n_steps < 4 || n_steps % 2 != 0)
    throw std::invalid_argument("schedule needs an even step count >= 4");
  if (!(delta > 0.0 && delta < 1.0 && terminal_T > 1.0))
    throw std::invalid_argument("schedule needs 0 < delta < 1 < T");
  int half = n_steps / 2;
  double kappa1 = (terminal_T - 1.0) / static_cast<double>(half);
  double kappa2 = std::pow(delta, -2.0 / static_cast<double>(n_steps)) - 1.0;
  double kappa_auto = std::max(kappa1, kappa2);
  TimeSchedule s;
  s.terminal_T = terminal_T;
  s.delta = delta;
  s.kappa = kappa > 0.0 ? kappa : kappa_auto;
  if (s.kappa < kappa_auto - 1e-12)
    throw std::invalid_argument(
        "requested kappa " + std::to_string(kappa) +
        " is below the feasible minimum " + std::to_string(kappa_auto));

  s.times.resize(static_cast<std::size_t>(n_steps) + 1);
  for (int l = 0; l <= half; ++l)
    s.times[static_cast<std::size_t>(l)] = static_cast<double>(l) * kappa1;
  s.times[static_cast<std::size_t>(half)] = terminal_T - 1.0;
  for (int l = 1; l <= half; ++l)
    s.times[static_cast<std::size_t>(half + l)] =
        terminal_T -
        std::pow(delta, static_cast<double>(l) / static_cast<double>(half));
  s.times[static_cast<std::size_t>(n_steps)] = terminal_T - delta;

  for (int l = 0; l < n_steps; ++l) {
    double g = s.gamma(l);
    if (!(g > 0.0))
      throw std::runtime_error("schedule construction produced a non-positive step");
    double lim =
        s.kappa * std::min(1.0, terminal_T - s.times[static_cast<std::size_t>(l)]);
    if (g > lim + 1e-12)
      throw std::runtime_error(
          "schedule step " + std::to_string(l) + " of size " +
          std::to_string(g) + " exceeds its bound " + std::to_string(lim));
  }
  return s;
}

}  // namespace gmdiff
