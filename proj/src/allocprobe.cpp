#include "framediff/allocprobe.hpp"

namespace framediff {

namespace detail {
std::atomic<std::uint64_t> g_alloc_current{0};
std::atomic<std::uint64_t> g_alloc_peak{0};
std::atomic<bool> g_alloc_enabled{false};
}  // namespace detail

bool alloc_probe_enabled() { return detail::g_alloc_enabled.load(std::memory_order_relaxed); }

AllocStats alloc_probe_read() {
    return {detail::g_alloc_current.load(std::memory_order_relaxed),
            detail::g_alloc_peak.load(std::memory_order_relaxed)};
}

void alloc_probe_reset_peak() {
    detail::g_alloc_peak.store(detail::g_alloc_current.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

}  // namespace framediff
