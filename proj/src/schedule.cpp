#include "framediff/schedule.hpp"

#include <cmath>
#include <string>

namespace framediff {

NoiseSchedule::NoiseSchedule(int num_steps, std::vector<double> betas) : num_steps_(num_steps), betas_(std::move(betas)) {
    if (num_steps_ < 1) throw InputError("NoiseSchedule: num_steps must be >= 1");
    if (betas_.size() != static_cast<std::size_t>(num_steps_))
        throw InputError("NoiseSchedule: beta array size does not match num_steps");
    alphas_.resize(betas_.size());
    alpha_bars_.resize(betas_.size());
    sigmas_.resize(betas_.size());
    double running = 1.0;
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        double b = betas_[i];
        if (!(b > 0.0 && b < 1.0))
            throw InputError("NoiseSchedule: beta[" + std::to_string(i + 1) + "] outside (0,1)");
        alphas_[i] = 1.0 - b;
        double prev_bar = running;
        running *= alphas_[i];
        alpha_bars_[i] = running;
        sigmas_[i] = std::sqrt((1.0 - prev_bar) / (1.0 - running) * b);
    }
}

double NoiseSchedule::alpha_bar(int s) const {
    if (s == 0) return 1.0;
    check_step(s);
    return alpha_bars_[static_cast<std::size_t>(s) - 1];
}

void NoiseSchedule::check_step(int s) const {
    if (s < 1 || s > num_steps_)
        throw InputError("NoiseSchedule: step " + std::to_string(s) + " outside 1.." + std::to_string(num_steps_));
}

NoiseSchedule build_linear_schedule(int num_steps, double beta_min, double beta_max) {
    if (num_steps < 1) throw InputError("build_linear_schedule: num_steps must be >= 1");
    if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max))
        throw InputError("build_linear_schedule: beta bounds must satisfy 0 < beta_min <= beta_max < 1");
    std::vector<double> betas(static_cast<std::size_t>(num_steps));
    if (num_steps == 1) {
        betas[0] = beta_min;
    } else {
        double step = (beta_max - beta_min) / (num_steps - 1);
        for (int i = 0; i < num_steps; ++i) betas[static_cast<std::size_t>(i)] = beta_min + step * i;
        betas.back() = beta_max;
    }
    return NoiseSchedule(num_steps, std::move(betas));
}

std::vector<double> q_sample(Span x0, int step, Span eps, const NoiseSchedule& sched) {
    if (x0.size() != eps.size()) throw InputError("q_sample: x0 and eps length mismatch");
    double abar = sched.alpha_bar(step);
    if (step < 1) throw InputError("q_sample: step must be >= 1");
    double a = std::sqrt(abar);
    double b = std::sqrt(1.0 - abar);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

double posterior_sigma(int step, const NoiseSchedule& sched) { return sched.sigma(step); }

}  // namespace framediff
