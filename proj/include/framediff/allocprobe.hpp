#pragma once

#include <atomic>
#include <cstdint>

namespace framediff {

namespace detail {
// Updated by the global allocation override when that object file is linked
// into the binary; otherwise they stay zero.
extern std::atomic<std::uint64_t> g_alloc_current;
extern std::atomic<std::uint64_t> g_alloc_peak;
extern std::atomic<bool> g_alloc_enabled;
}  // namespace detail

struct AllocStats {
    std::uint64_t current = 0;
    std::uint64_t peak = 0;
};

// True only in binaries that link the probe override.
bool alloc_probe_enabled();
AllocStats alloc_probe_read();
// Restarts the peak watermark from the current live size.
void alloc_probe_reset_peak();

}  // namespace framediff
