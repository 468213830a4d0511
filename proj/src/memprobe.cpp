// Global allocation override. Linking this object into a binary makes the
// alloc probe live: every new/delete is counted with its size stashed in a
// small header ahead of the returned block. Kept out of the core library so
// ordinary binaries run with the stock allocator.

#include <cstdlib>
#include <new>

#include "framediff/allocprobe.hpp"

namespace {

// Keeps 16-byte alignment on top of malloc's own guarantee.
constexpr std::size_t kHeader = 16;

struct EnableProbe {
    EnableProbe() { framediff::detail::g_alloc_enabled.store(true, std::memory_order_relaxed); }
} const g_enable_probe;

void* track_alloc(std::size_t n) noexcept {
    void* raw = std::malloc(n + kHeader);
    if (!raw) return nullptr;
    *static_cast<std::uint64_t*>(raw) = static_cast<std::uint64_t>(n);
    auto cur = framediff::detail::g_alloc_current.fetch_add(n, std::memory_order_relaxed) + n;
    auto peak = framediff::detail::g_alloc_peak.load(std::memory_order_relaxed);
    while (cur > peak &&
           !framediff::detail::g_alloc_peak.compare_exchange_weak(peak, cur, std::memory_order_relaxed)) {
    }
    return static_cast<char*>(raw) + kHeader;
}

void track_free(void* p) noexcept {
    if (!p) return;
    char* raw = static_cast<char*>(p) - kHeader;
    auto n = *reinterpret_cast<std::uint64_t*>(raw);
    framediff::detail::g_alloc_current.fetch_sub(n, std::memory_order_relaxed);
    std::free(raw);
}

}  // namespace

void* operator new(std::size_t n) {
    void* p = track_alloc(n == 0 ? 1 : n);
    if (!p) throw std::bad_alloc();
    return p;
}

void* operator new[](std::size_t n) {
    void* p = track_alloc(n == 0 ? 1 : n);
    if (!p) throw std::bad_alloc();
    return p;
}

void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return track_alloc(n == 0 ? 1 : n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return track_alloc(n == 0 ? 1 : n); }

void operator delete(void* p) noexcept { track_free(p); }
void operator delete[](void* p) noexcept { track_free(p); }
void operator delete(void* p, std::size_t) noexcept { track_free(p); }
void operator delete[](void* p, std::size_t) noexcept { track_free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { track_free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { track_free(p); }
