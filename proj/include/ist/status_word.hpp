#ifndef IST_STATUS_WORD_HPP
#define IST_STATUS_WORD_HPP

#include <cstdint>

namespace ist {

/// Packed rebuild-coordination word: [key count : 62 | finished : 1 | started : 1].
/// The only legal transition chain is
///   initial() -> marking() -> counted(n)
/// and a node whose status left initial() never has a child slot change again.
struct StatusWord {
    static constexpr std::uint64_t kStartedBit = 1;
    static constexpr std::uint64_t kFinishedBit = 2;

    std::uint64_t raw = 0;

    static constexpr StatusWord initial() { return StatusWord{0}; }
    static constexpr StatusWord marking() { return StatusWord{kStartedBit}; }
    static constexpr StatusWord counted(std::uint64_t key_count) {
        return StatusWord{(key_count << 2) | kFinishedBit | kStartedBit};
    }

    bool is_initial() const { return raw == 0; }
    bool started() const { return raw & kStartedBit; }
    bool finished() const { return raw & kFinishedBit; }
    std::uint64_t key_count() const { return raw >> 2; }

    friend bool operator==(StatusWord a, StatusWord b) { return a.raw == b.raw; }
};

} // namespace ist

#endif
