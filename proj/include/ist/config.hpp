#ifndef IST_CONFIG_HPP
#define IST_CONFIG_HPP

#include <cstdint>
#include <thread>

namespace ist {

using Key = std::uint64_t;
using Value = std::uint64_t;

/// Tuning knobs for a tree instance. Defaults follow the usual settings:
/// a subtree is rebuilt once a quarter of its initial size has been updated,
/// and marking/building switch to the collaborative protocol at fan-out 48.
struct TreeConfig {
    double rebuild_threshold = 0.25;
    std::uint32_t collaboration_threshold = 48;
    // 0 = auto: min(2 * hardware threads, 128), rounded up to a power of two.
    std::uint32_t multicounter_stripes = 0;
    // Start collaborative child claims at a per-thread pseudorandom offset.
    bool scatter_offset = true;
    // Use the collaborative marking/building protocol for rebuilds.
    bool collaborative = true;

    std::uint32_t resolved_stripes() const {
        if (multicounter_stripes != 0) return multicounter_stripes;
        std::uint32_t hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        std::uint32_t want = hw * 2;
        if (want > 128) want = 128;
        std::uint32_t p = 1;
        while (p < want) p <<= 1;
        return p;
    }
};

} // namespace ist

#endif
