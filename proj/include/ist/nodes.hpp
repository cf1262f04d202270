#ifndef IST_NODES_HPP
#define IST_NODES_HPP

#include <atomic>
#include <cassert>
#include <cstdint>
#include <cstdlib>
#include <new>
#include <span>

#include "ist/config.hpp"
#include "ist/dcss.hpp"
#include "ist/multicounter.hpp"
#include "ist/status_word.hpp"

namespace ist {

/// Node kinds live in the low bits of a slot word, so leaves stay compact and
/// a traversal can dispatch without dereferencing. Tag 4 is reserved by the
/// DCSS layer for in-flight descriptors and never escapes dcss_read().
enum class NodeTag : SlotWord {
    Inner = 0,
    Single = 1,
    Empty = 2,
    Rebuild = 3,
};

inline constexpr SlotWord kNullWord = 0; // unbuilt child slot
inline constexpr SlotWord kEmptyWord = static_cast<SlotWord>(NodeTag::Empty);

inline NodeTag tag_of(SlotWord w) { return static_cast<NodeTag>(w & kSlotTagMask); }

template <class T>
inline T* ptr_of(SlotWord w) {
    return reinterpret_cast<T*>(w & ~kSlotTagMask);
}

inline SlotWord make_word(const void* p, NodeTag t) {
    auto raw = reinterpret_cast<SlotWord>(p);
    assert((raw & kSlotTagMask) == 0);
    return raw | static_cast<SlotWord>(t);
}

/// Leaf holding one key/value pair. Immutable after creation.
struct Single {
    Key key;
    Value val;
};

struct Inner;

/// Rebuild announcement: spliced between `parent` and `target`, it renders the
/// target subtree immutable and coordinates helpers through the
/// mark/count/build/replace phases. `new_target` and `build_ticket` are used
/// only by the collaborative building protocol.
struct RebuildDescriptor {
    Inner* target;
    Inner* parent;
    std::uint32_t index;
    std::atomic<SlotWord> new_target{kNullWord}; // Inner word once published
    std::atomic<std::uint32_t> build_ticket{0};

    RebuildDescriptor(Inner* t, Inner* p, std::uint32_t i) : target(t), parent(p), index(i) {}
};

/// Inner node. The separator keys and child-slot array trail the header in a
/// single allocation. Everything except `status`, `count` and `next_mark` is
/// immutable once the node is reachable.
struct Inner {
    std::uint32_t degree;                 // number of child slots
    std::atomic<std::uint32_t> next_mark; // collaborative marking cursor
    std::uint64_t init_size;              // keys below this node at creation
    std::atomic<std::uint64_t> status;    // packed StatusWord
    std::atomic<std::uint64_t> count;     // updates since creation (non-root)
    MultiCounter* root_counter;           // non-null only for the logical root

    Key* keys() { return reinterpret_cast<Key*>(this + 1); }
    const Key* keys() const { return reinterpret_cast<const Key*>(this + 1); }

    AtomicSlot* children() {
        return reinterpret_cast<AtomicSlot*>(const_cast<Key*>(keys() + (degree - 1)));
    }
    const AtomicSlot* children() const {
        return reinterpret_cast<const AtomicSlot*>(keys() + (degree - 1));
    }

    AtomicSlot& child(std::uint32_t i) {
        assert(i < degree);
        return children()[i];
    }

    std::span<const Key> key_span() const { return {keys(), degree - 1u}; }

    StatusWord status_word() const {
        return StatusWord{status.load(std::memory_order_acquire)};
    }

    void bump_count() {
        if (root_counter)
            root_counter->increment();
        else
            count.fetch_add(1, std::memory_order_relaxed);
    }

    std::uint64_t read_count() const {
        return root_counter ? root_counter->read() : count.load(std::memory_order_relaxed);
    }

    std::size_t footprint_bytes() const {
        std::size_t n = alloc_size(degree);
        if (root_counter) n += root_counter->footprint_bytes();
        return n;
    }

    static std::size_t alloc_size(std::uint32_t degree) {
        return sizeof(Inner) + sizeof(Key) * (degree - 1) + sizeof(AtomicSlot) * degree;
    }
};

static_assert(sizeof(Inner) == 40);
static_assert(alignof(Inner) == 8);

/// Per-tree allocation ledger. `released` is bumped when an object is either
/// destroyed directly or handed to deferred reclamation (which guarantees the
/// physical free by domain shutdown), so after a tree is destroyed
/// allocated == released iff nothing leaked.
struct AllocStats {
    std::atomic<std::uint64_t> allocated{0};
    std::atomic<std::uint64_t> released{0};

    std::uint64_t live() const {
        return allocated.load(std::memory_order_relaxed) -
               released.load(std::memory_order_relaxed);
    }
};

inline Single* alloc_single(AllocStats& stats, Key k, Value v) {
    stats.allocated.fetch_add(1, std::memory_order_relaxed);
    return new Single{k, v};
}

inline Inner* alloc_inner(AllocStats& stats, std::uint32_t degree, std::uint64_t init_size,
                          MultiCounter* root_counter, SlotWord initial_child) {
    assert(degree >= 1);
    stats.allocated.fetch_add(1, std::memory_order_relaxed);
    void* mem = std::malloc(Inner::alloc_size(degree));
    auto* n = new (mem) Inner{degree, {}, init_size, {}, {}, root_counter};
    Key* ks = n->keys();
    for (std::uint32_t i = 0; i + 1 < degree; ++i) ks[i] = 0;
    AtomicSlot* cs = n->children();
    for (std::uint32_t i = 0; i < degree; ++i) new (&cs[i]) AtomicSlot(initial_child);
    return n;
}

inline RebuildDescriptor* alloc_rebuild(AllocStats& stats, Inner* target, Inner* parent,
                                        std::uint32_t index) {
    stats.allocated.fetch_add(1, std::memory_order_relaxed);
    return new RebuildDescriptor(target, parent, index);
}

// Physical destruction; the stats ledger is settled by the caller.
inline void destroy_single(void* p) { delete static_cast<Single*>(p); }

inline void destroy_inner(void* p) {
    auto* n = static_cast<Inner*>(p);
    delete n->root_counter;
    n->~Inner();
    std::free(n);
}

inline void destroy_rebuild(void* p) { delete static_cast<RebuildDescriptor*>(p); }

} // namespace ist

#endif
