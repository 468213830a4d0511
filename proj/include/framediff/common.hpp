#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace framediff {

// Malformed or inconsistent input (files, arguments, shape mismatches).
// Maps to CLI exit code 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failure mid-computation (non-finite values). Maps to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Resource problem (files unwritable, allocation limits). Maps to exit code 4.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Span = std::span<const double>;
using MutSpan = std::span<double>;

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v);

}  // namespace framediff
