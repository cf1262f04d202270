#ifndef IST_DCSS_HPP
#define IST_DCSS_HPP

#include <atomic>
#include <cassert>
#include <cstdint>

#include "ist/hooks.hpp"
#include "ist/reclaim.hpp"

namespace ist {

/// Double-compare-single-swap over tagged slot words, built from single-word
/// CAS via descriptors in the style of Harris.
///
/// A slot holds either a plain word or a pointer to an installed descriptor,
/// distinguished by a reserved tag. While a descriptor sits in the slot, the
/// slot's logical value is `expected_main` until the descriptor's outcome is
/// decided, and `new_main` afterwards iff it succeeded. Readers go through
/// dcss_read(), which helps any encountered descriptor to completion in a
/// bounded number of steps and never returns a descriptor word.

using SlotWord = std::uintptr_t;
using AtomicSlot = std::atomic<SlotWord>;

inline constexpr SlotWord kSlotTagMask = 7;
inline constexpr SlotWord kDcssTag = 4;

inline bool is_dcss_marked(SlotWord w) { return (w & kSlotTagMask) == kDcssTag; }

enum class DcssResult : int {
    Success = 0,
    FailedMainAddress = 1,
    FailedAuxAddress = 2,
};

struct DcssDescriptor {
    enum Outcome : std::uint8_t { kUndecided = 0, kSucceeded = 1, kFailedAux = 2 };

    AtomicSlot* main_addr;
    SlotWord expected_main;
    SlotWord new_main;
    std::atomic<std::uint64_t>* aux_addr;
    std::uint64_t expected_aux;
    std::atomic<std::uint8_t> outcome{kUndecided};

    DcssDescriptor(AtomicSlot* main, SlotWord expected, SlotWord desired,
                   std::atomic<std::uint64_t>* aux, std::uint64_t aux_expected)
        : main_addr(main), expected_main(expected), new_main(desired), aux_addr(aux),
          expected_aux(aux_expected) {}
};

namespace detail {

inline SlotWord dcss_word(DcssDescriptor* d) {
    auto raw = reinterpret_cast<SlotWord>(d);
    assert((raw & kSlotTagMask) == 0);
    return raw | kDcssTag;
}

inline DcssDescriptor* dcss_ptr(SlotWord w) {
    return reinterpret_cast<DcssDescriptor*>(w & ~kSlotTagMask);
}

/// Drives an installed descriptor to its terminal state and clears it from
/// the slot. Safe to call from any number of helpers.
inline void dcss_complete(DcssDescriptor* d) {
    if (d->outcome.load(std::memory_order_acquire) == DcssDescriptor::kUndecided) {
        std::uint64_t aux = d->aux_addr->load(std::memory_order_seq_cst);
        std::uint8_t desired = (aux == d->expected_aux) ? DcssDescriptor::kSucceeded
                                                        : DcssDescriptor::kFailedAux;
        std::uint8_t expected = DcssDescriptor::kUndecided;
        if (d->outcome.compare_exchange_strong(expected, desired, std::memory_order_acq_rel) &&
            desired == DcssDescriptor::kSucceeded) {
            hooks::record_write(d->main_addr, aux);
        }
    }
    SlotWord resolved = d->outcome.load(std::memory_order_acquire) == DcssDescriptor::kSucceeded
                            ? d->new_main
                            : d->expected_main;
    SlotWord installed = dcss_word(d);
    d->main_addr->compare_exchange_strong(installed, resolved, std::memory_order_acq_rel,
                                          std::memory_order_relaxed);
}

} // namespace detail

/// Atomically swings *main from expected_main to new_main provided *aux holds
/// expected_aux at the decision point. The descriptor is retired through the
/// caller's reclamation domain; the caller must hold a Guard.
inline DcssResult dcss(Domain& domain, AtomicSlot* main, SlotWord expected_main,
                       SlotWord new_main, std::atomic<std::uint64_t>* aux,
                       std::uint64_t expected_aux) {
    assert(!is_dcss_marked(expected_main) && !is_dcss_marked(new_main));
    auto* d = new DcssDescriptor(main, expected_main, new_main, aux, expected_aux);
    SlotWord word = detail::dcss_word(d);
    for (;;) {
        SlotWord cur = expected_main;
        if (main->compare_exchange_strong(cur, word, std::memory_order_acq_rel,
                                          std::memory_order_acquire)) {
            break;
        }
        if (is_dcss_marked(cur)) {
            detail::dcss_complete(detail::dcss_ptr(cur));
            continue;
        }
        delete d; // never published
        return DcssResult::FailedMainAddress;
    }
    detail::dcss_complete(d);
    auto outcome = d->outcome.load(std::memory_order_acquire);
    domain.retire(d, [](void* p) { delete static_cast<DcssDescriptor*>(p); });
    return outcome == DcssDescriptor::kSucceeded ? DcssResult::Success
                                                 : DcssResult::FailedAuxAddress;
}

/// Wait-free descriptor-transparent read of a slot: helps out any installed
/// descriptor and returns the post-decision logical value.
inline SlotWord dcss_read(const AtomicSlot* slot) {
    for (;;) {
        SlotWord w = slot->load(std::memory_order_acquire);
        if (!is_dcss_marked(w)) return w;
        detail::dcss_complete(detail::dcss_ptr(w));
    }
}

} // namespace ist

#endif
