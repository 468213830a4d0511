#pragma once

#include <vector>

#include "framediff/common.hpp"

namespace framediff {

// Diffusion variance schedule and the quantities derived from it. Steps are
// indexed 1..num_steps; step 0 denotes the clean signal, so alpha_bar(0) == 1.
// All arrays are precomputed in double precision and immutable afterwards,
// making concurrent reads safe.
class NoiseSchedule {
  public:
    NoiseSchedule(int num_steps, std::vector<double> betas);

    int num_steps() const { return num_steps_; }
    double beta(int s) const { check_step(s); return betas_[static_cast<std::size_t>(s) - 1]; }
    double alpha(int s) const { check_step(s); return alphas_[static_cast<std::size_t>(s) - 1]; }
    double alpha_bar(int s) const;  // s in 0..num_steps, alpha_bar(0) == 1
    double sigma(int s) const { check_step(s); return sigmas_[static_cast<std::size_t>(s) - 1]; }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }
    const std::vector<double>& sigmas() const { return sigmas_; }

  private:
    void check_step(int s) const;

    int num_steps_;
    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
    std::vector<double> sigmas_;
};

// Linear beta spacing between the endpoints, inclusive.
NoiseSchedule build_linear_schedule(int num_steps, double beta_min, double beta_max);

// The three hyperparameters a linear schedule is rebuilt from; this is what
// checkpoints record.
struct ScheduleSpec {
    int steps = 200;
    double beta_min = 1e-4;
    double beta_max = 0.02;

    NoiseSchedule build() const { return build_linear_schedule(steps, beta_min, beta_max); }
};

// Closed-form noising: sqrt(abar_s) * x0 + sqrt(1 - abar_s) * eps.
std::vector<double> q_sample(Span x0, int step, Span eps, const NoiseSchedule& sched);

// Reverse-transition noise scale sqrt(((1 - abar_{s-1}) / (1 - abar_s)) * beta_s).
double posterior_sigma(int step, const NoiseSchedule& sched);

}  // namespace framediff
