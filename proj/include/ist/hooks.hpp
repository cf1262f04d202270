#ifndef IST_HOOKS_HPP
#define IST_HOOKS_HPP

#include <cstdint>

#ifdef IST_DEBUG_HOOKS
#include <atomic>
#include <cstdlib>
#include <functional>
#include <random>
#include <thread>
#endif

namespace ist::hooks {

/// Stall-injection points. Tests install callbacks here to park a thread at a
/// precise protocol step; release builds compile the calls away.
enum class Point : int {
    AfterRebuildInstall = 0, // rebuild descriptor just spliced into the parent slot
    AfterMarkClaim = 1,      // child index claimed via the marking cursor
    AfterBuildClaim = 2,     // child index claimed during collaborative building
    kCount = 3,
};

#ifdef IST_DEBUG_HOOKS

namespace detail {
inline std::function<void()> stall_fns[static_cast<int>(Point::kCount)];
inline std::atomic<bool> stalls_armed{false};
// Recorder for every committed slot write: (slot address, status word observed
// at the decision point). Used to check that frozen nodes are never written.
inline std::function<void(const void*, std::uint64_t)> write_recorder;
inline std::atomic<bool> recorder_armed{false};
inline std::atomic<bool> random_stalls{false};
inline std::atomic<std::uint64_t> random_seed{1};

inline void maybe_random_stall() {
    if (!random_stalls.load(std::memory_order_relaxed)) return;
    thread_local std::mt19937_64 rng(
        random_seed.fetch_add(0x9e3779b97f4a7c15ull, std::memory_order_relaxed) ^
        std::hash<std::thread::id>{}(std::this_thread::get_id()));
    if ((rng() & 7) == 0) std::this_thread::yield();
}
} // namespace detail

inline void set_stall(Point p, std::function<void()> fn) {
    detail::stall_fns[static_cast<int>(p)] = std::move(fn);
    detail::stalls_armed.store(true, std::memory_order_seq_cst);
}

inline void set_write_recorder(std::function<void(const void*, std::uint64_t)> fn) {
    detail::write_recorder = std::move(fn);
    detail::recorder_armed.store(static_cast<bool>(detail::write_recorder),
                                 std::memory_order_seq_cst);
}

inline void enable_random_stalls(std::uint64_t seed) {
    detail::random_seed.store(seed | 1, std::memory_order_relaxed);
    detail::random_stalls.store(true, std::memory_order_seq_cst);
}

inline void clear() {
    detail::stalls_armed.store(false, std::memory_order_seq_cst);
    detail::random_stalls.store(false, std::memory_order_seq_cst);
    detail::recorder_armed.store(false, std::memory_order_seq_cst);
    for (auto& fn : detail::stall_fns) fn = nullptr;
    detail::write_recorder = nullptr;
}

/// Reads IST_DEBUG_HOOKS=1 from the environment and arms random stalls.
inline void arm_from_env() {
    const char* v = std::getenv("IST_DEBUG_HOOKS");
    if (v && v[0] == '1') enable_random_stalls(0x5bd1e995u);
}

inline void stall(Point p) {
    detail::maybe_random_stall();
    if (!detail::stalls_armed.load(std::memory_order_relaxed)) return;
    auto& fn = detail::stall_fns[static_cast<int>(p)];
    if (fn) fn();
}

inline void record_write(const void* slot, std::uint64_t status_at_decision) {
    if (!detail::recorder_armed.load(std::memory_order_relaxed)) return;
    if (detail::write_recorder) detail::write_recorder(slot, status_at_decision);
}

#else // !IST_DEBUG_HOOKS

inline void arm_from_env() {}
inline void stall(Point) {}
inline void record_write(const void*, std::uint64_t) {}

#endif

} // namespace ist::hooks

#endif
