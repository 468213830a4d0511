#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace framediff {

// Deterministic random stream. Gaussian draws use an explicit Box-Muller
// transform on raw 64-bit words so results are identical across standard
// libraries; std::normal_distribution is implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian();

    // inclusive bounds
    int uniform_int(int lo, int hi);

    std::string save_state() const;
    void load_state(const std::string& s);

  private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace framediff
