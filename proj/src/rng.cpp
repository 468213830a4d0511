#include "framediff/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "framediff/common.hpp"

namespace framediff {

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw InputError("Rng::uniform_int: empty range");
    std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

std::string Rng::save_state() const {
    std::ostringstream os;
    os << gen_;
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(spare_));
    std::memcpy(&bits, &spare_, sizeof(bits));
    os << "|" << (has_spare_ ? 1 : 0) << "|" << bits;
    return os.str();
}

void Rng::load_state(const std::string& s) {
    auto p1 = s.rfind('|');
    auto p0 = s.rfind('|', p1 == std::string::npos ? p1 : p1 - 1);
    if (p0 == std::string::npos || p1 == std::string::npos || p1 <= p0)
        throw InputError("Rng::load_state: malformed state string");
    std::istringstream is(s.substr(0, p0));
    is >> gen_;
    if (!is) throw InputError("Rng::load_state: bad engine state");
    has_spare_ = s.substr(p0 + 1, p1 - p0 - 1) == "1";
    std::uint64_t bits = std::stoull(s.substr(p1 + 1));
    std::memcpy(&spare_, &bits, sizeof(bits));
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace framediff
