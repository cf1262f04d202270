#ifndef IST_TREE_HPP
#define IST_TREE_HPP

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "ist/config.hpp"
#include "ist/dcss.hpp"
#include "ist/hooks.hpp"
#include "ist/multicounter.hpp"
#include "ist/nodes.hpp"
#include "ist/reclaim.hpp"
#include "ist/status_word.hpp"

namespace ist {

struct DepthStats {
    double avg_leaf_depth = 0.0;
    std::uint64_t max_leaf_depth = 0;
    std::uint64_t node_count = 0;
    std::uint64_t empty_count = 0;
};

struct KeyValue {
    Key key;
    Value val;
};

/// Returned by create_ideal when an installed replacement made further
/// building pointless. Tag 7 is never produced for a real node.
inline constexpr SlotWord kAbortedWord = kSlotTagMask;

/// Concurrent interpolation search tree: an external search tree whose inner
/// nodes fan out by roughly the square root of their subtree size and are
/// periodically rebuilt into ideal shape once a quarter of their initial keys
/// have been updated.
///
/// Lookups are wait-free; inserts and erases are lock-free. A degree-1
/// sentinel inner node ("anchor") sits above the logical root so whole-tree
/// rebuilds follow the same parent/slot/status discipline as subtree rebuilds.
class Tree {
  public:
    explicit Tree(TreeConfig cfg = {})
        : cfg_(cfg), stats_(std::make_shared<AllocStats>()) {
        assert(cfg_.rebuild_threshold > 0.0 && cfg_.rebuild_threshold < 1.0);
        assert(cfg_.collaboration_threshold >= 2);
        anchor_ = alloc_inner(*stats_, 1, 1, nullptr, kEmptyWord);
    }

    ~Tree() {
        free_unpublished(anchor_->child(0).load(std::memory_order_acquire));
        stats_->released.fetch_add(1, std::memory_order_relaxed);
        destroy_inner(anchor_);
    }

    Tree(const Tree&) = delete;
    Tree& operator=(const Tree&) = delete;

    /// Child index covering `key` per the half-open cover intervals: the
    /// smallest i with key < keys[i], or degree-1 when key >= the last
    /// separator. Linear interpolation between the first and last separator
    /// estimates the slot, then a linear scan settles it.
    static std::uint32_t interpolation_search(Key key, const Inner& node) {
        const Key* keys = node.keys();
        const std::uint32_t nkeys = node.degree - 1;
        assert(nkeys >= 1);
        const Key lo = keys[0], hi = keys[nkeys - 1];
        if (key < lo) return 0;
        if (key >= hi) return node.degree - 1;
        // lo <= key < hi, so nkeys >= 2 and hi > lo.
        std::uint32_t est = static_cast<std::uint32_t>(
            static_cast<unsigned __int128>(key - lo) * (nkeys - 1) / (hi - lo));
        if (est > nkeys - 1) est = nkeys - 1;
        while (keys[est] <= key) ++est;
        while (est > 0 && keys[est - 1] > key) --est;
        return est;
    }

    std::optional<Value> lookup(Key key) const {
        Guard g(domain_);
        const Inner* n = anchor_;
        for (;;) {
            std::uint32_t idx = n->degree == 1 ? 0 : interpolation_search(key, *n);
            SlotWord w = dcss_read(&n->children()[idx]);
            switch (tag_of(w)) {
            case NodeTag::Inner:
                n = ptr_of<Inner>(w);
                break;
            case NodeTag::Single: {
                const Single* s = ptr_of<Single>(w);
                if (s->key == key) return s->val;
                return std::nullopt;
            }
            case NodeTag::Empty:
                return std::nullopt;
            case NodeTag::Rebuild:
                // Lookups ignore in-flight rebuilds and read the frozen subtree.
                n = ptr_of<RebuildDescriptor>(w)->target;
                break;
            }
        }
    }

    /// Upsert. Returns the displaced value if the key was already present.
    std::optional<Value> insert(Key key, Value val) { return update<true>(key, val); }

    /// Returns the removed value, or nullopt (and changes nothing) if absent.
    std::optional<Value> erase(Key key) { return update<false>(key, 0); }

    /// Exact structure statistics. Caller must guarantee quiescence.
    DepthStats depth_stats() const {
        DepthStats st;
        std::uint64_t leaves = 0, depth_sum = 0;
        stats_walk(anchor_->child(0).load(std::memory_order_acquire), 0, st, leaves,
                   depth_sum);
        st.avg_leaf_depth = leaves ? static_cast<double>(depth_sum) / leaves : 0.0;
        return st;
    }

    /// Total bytes of live nodes (anchor included), by traversal. Quiescent.
    std::size_t footprint_bytes() const {
        return anchor_->footprint_bytes() +
               footprint_walk(anchor_->child(0).load(std::memory_order_acquire));
    }

    const TreeConfig& config() const { return cfg_; }
    Domain& domain() const { return domain_; }
    AllocStats& alloc_stats() { return *stats_; }
    std::shared_ptr<AllocStats> alloc_stats_ptr() { return stats_; }
    std::uint64_t root_rebuilds() const {
        return root_rebuilds_.load(std::memory_order_relaxed);
    }

    Inner* anchor() { return anchor_; }
    const Inner* anchor() const { return anchor_; }
    SlotWord logical_root() const {
        return dcss_read(&anchor_->children()[0]);
    }

    // --- rebuild protocol (defined in rebuild.hpp) ---

    /// Installs a rebuild descriptor over `node` in parent.children[index]
    /// and drives it to completion; a failed installation is a no-op.
    void announce(Inner* node, Inner* parent, std::uint32_t index);
    void help_rebuild(RebuildDescriptor* op);
    std::uint64_t mark_and_count(SlotWord w);
    std::uint64_t mark_and_count_collaborative(SlotWord w);
    /// Builds a fresh ideal subtree over the keys of rank
    /// [from_rank, from_rank + key_count) of a fully frozen subtree.
    SlotWord create_ideal(SlotWord frozen_root, std::uint64_t from_rank,
                          std::uint64_t key_count) {
        return create_ideal(frozen_root, from_rank, key_count, false, nullptr);
    }
    SlotWord create_ideal_collaborative(RebuildDescriptor* op, std::uint64_t key_count);
    bool rebuild_and_set_child(RebuildDescriptor* op, std::uint64_t key_count,
                               std::uint32_t index);
    /// Key of the given rank in a frozen subtree (the "skipped"-pruned DFS).
    Key key_at_rank(SlotWord frozen_root, std::uint64_t rank) const;
    /// Deterministic ideal-tree constructor over sorted distinct pairs; the
    /// building half of create_ideal, exposed for bulk loading and tests.
    SlotWord build_ideal_from_sorted(std::span<const KeyValue> pairs) {
        return build_from_sorted(pairs, false);
    }

    /// Destroys a subtree that was never visible to other threads (e.g. a
    /// discarded bulk build). Null child slots are skipped.
    void free_unpublished(SlotWord w) {
        switch (tag_of(w)) {
        case NodeTag::Empty:
            return;
        case NodeTag::Single:
            stats_->released.fetch_add(1, std::memory_order_relaxed);
            destroy_single(ptr_of<Single>(w));
            return;
        case NodeTag::Inner: {
            if (w == kNullWord) return;
            Inner* n = ptr_of<Inner>(w);
            for (std::uint32_t i = 0; i < n->degree; ++i)
                free_unpublished(n->child(i).load(std::memory_order_relaxed));
            stats_->released.fetch_add(1, std::memory_order_relaxed);
            destroy_inner(n);
            return;
        }
        case NodeTag::Rebuild:
            assert(false && "descriptor in an unpublished subtree");
            return;
        }
    }

    /// Small subtrees become one flat inner over singles; larger ones fan out
    /// by floor(sqrt(n)). Keeps leaf-level indirection (and thus depth) down.
    static constexpr std::uint64_t kMaxFlatFanout = 7;

    static std::uint64_t ideal_degree(std::uint64_t n) {
        assert(n >= 2);
        return n <= kMaxFlatFanout ? n : isqrt(n);
    }

    /// Key-rank interval handed to child `index` of a collaboratively built
    /// replacement over `key_count` keys: the first (key_count mod d) children
    /// take one extra key.
    struct ChildRange {
        std::uint64_t from;
        std::uint64_t count;
    };
    static ChildRange child_range(std::uint64_t key_count, std::uint32_t index) {
        const std::uint64_t d = isqrt(key_count);
        const std::uint64_t child_size = key_count / d, remainder = key_count % d;
        return {child_size * index + std::min<std::uint64_t>(index, remainder),
                child_size + (index < remainder ? 1 : 0)};
    }

    static std::uint64_t isqrt(std::uint64_t n) {
        auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
        while (r > 0 && r * r > n) --r;
        while ((r + 1) * (r + 1) <= n) ++r;
        return r;
    }

  private:
    struct PathEntry {
        Inner* node;
        std::uint32_t index;
    };

    template <bool IsInsert>
    std::optional<Value> update(Key key, Value val) {
        Guard g(domain_);
        thread_local std::vector<PathEntry> path;
        for (;;) { // restart from the root
            path.clear();
            Inner* n = anchor_;
            bool restart = false;
            while (!restart) {
                std::uint32_t idx = n->degree == 1 ? 0 : interpolation_search(key, *n);
                SlotWord w = dcss_read(&n->child(idx));
                NodeTag t = tag_of(w);
                if (t == NodeTag::Inner) {
                    Inner* c = ptr_of<Inner>(w);
                    path.push_back({c, idx});
                    n = c;
                    continue;
                }
                if (t == NodeTag::Rebuild) {
                    help_rebuild(ptr_of<RebuildDescriptor>(w));
                    restart = true;
                    break;
                }
                // Leaf position reached (Empty or Single).
                std::optional<Value> prev;
                SlotWord repl;
                Single* fresh = nullptr;
                Inner* fresh_inner = nullptr;
                if constexpr (IsInsert) {
                    if (t == NodeTag::Empty) {
                        fresh = alloc_single(*stats_, key, val);
                        repl = make_word(fresh, NodeTag::Single);
                    } else {
                        Single* s = ptr_of<Single>(w);
                        if (s->key == key) {
                            prev = s->val;
                            fresh = alloc_single(*stats_, key, val);
                            repl = make_word(fresh, NodeTag::Single);
                        } else {
                            // Split the leaf: a degree-2 inner whose separator is
                            // the larger key, reusing the displaced single.
                            fresh = alloc_single(*stats_, key, val);
                            MultiCounter* mc =
                                n == anchor_ ? new MultiCounter(cfg_.resolved_stripes())
                                             : nullptr;
                            fresh_inner = alloc_inner(*stats_, 2, 2, mc, kNullWord);
                            fresh_inner->keys()[0] = std::max(key, s->key);
                            Single* lo = key < s->key ? fresh : s;
                            Single* hi = key < s->key ? s : fresh;
                            fresh_inner->child(0).store(make_word(lo, NodeTag::Single),
                                                        std::memory_order_relaxed);
                            fresh_inner->child(1).store(make_word(hi, NodeTag::Single),
                                                        std::memory_order_relaxed);
                            repl = make_word(fresh_inner, NodeTag::Inner);
                        }
                    }
                } else {
                    if (t == NodeTag::Empty) return std::nullopt;
                    Single* s = ptr_of<Single>(w);
                    if (s->key != key) return std::nullopt;
                    prev = s->val;
                    repl = kEmptyWord;
                }
                DcssResult r = dcss(domain_, &n->child(idx), w, repl, &n->status,
                                    StatusWord::initial().raw);
                if (r == DcssResult::Success) {
                    if (t == NodeTag::Single && fresh_inner == nullptr)
                        retire_single(ptr_of<Single>(w));
                    after_update(path);
                    return prev;
                }
                if (fresh) {
                    stats_->released.fetch_add(1, std::memory_order_relaxed);
                    destroy_single(fresh);
                }
                if (fresh_inner) {
                    stats_->released.fetch_add(1, std::memory_order_relaxed);
                    destroy_inner(fresh_inner);
                }
                if (r == DcssResult::FailedMainAddress) continue; // retry this node
                restart = true; // aux mismatch: a rebuild owns this node
            }
        }
    }

    /// Post-success bookkeeping: bump every path node's counter root-to-leaf,
    /// then trigger a rebuild at the highest node over threshold.
    void after_update(const std::vector<PathEntry>& path) {
        for (const auto& e : path) e.node->bump_count();
        Inner* parent = anchor_;
        for (const auto& e : path) {
            std::uint64_t c = e.node->read_count();
            if (static_cast<double>(c) >=
                cfg_.rebuild_threshold * static_cast<double>(e.node->init_size)) {
                announce(e.node, parent, e.index);
                break;
            }
            parent = e.node;
        }
    }

    void stats_walk(SlotWord w, std::uint64_t depth, DepthStats& st, std::uint64_t& leaves,
                    std::uint64_t& depth_sum) const {
        switch (tag_of(w)) {
        case NodeTag::Empty:
            ++st.node_count;
            ++st.empty_count;
            return;
        case NodeTag::Single:
            ++st.node_count;
            ++leaves;
            depth_sum += depth;
            st.max_leaf_depth = std::max(st.max_leaf_depth, depth);
            return;
        case NodeTag::Rebuild: // descriptors contribute zero hops
            stats_walk(make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner),
                       depth, st, leaves, depth_sum);
            return;
        case NodeTag::Inner: {
            ++st.node_count;
            const Inner* n = ptr_of<Inner>(w);
            for (std::uint32_t i = 0; i < n->degree; ++i)
                stats_walk(dcss_read(&n->children()[i]), depth + 1, st, leaves, depth_sum);
            return;
        }
        }
    }

    std::size_t footprint_walk(SlotWord w) const {
        switch (tag_of(w)) {
        case NodeTag::Empty:
            return 0;
        case NodeTag::Single:
            return sizeof(Single);
        case NodeTag::Rebuild:
            return footprint_walk(
                make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner));
        case NodeTag::Inner: {
            const Inner* n = ptr_of<Inner>(w);
            std::size_t total = n->footprint_bytes();
            for (std::uint32_t i = 0; i < n->degree; ++i)
                total += footprint_walk(dcss_read(&n->children()[i]));
            return total;
        }
        }
        return 0;
    }

    // --- reclamation helpers ---

    void retire_single(Single* s) {
        stats_->released.fetch_add(1, std::memory_order_relaxed);
        domain_.retire(s, destroy_single);
    }
    void retire_inner(Inner* n) {
        stats_->released.fetch_add(1, std::memory_order_relaxed);
        domain_.retire(n, destroy_inner);
    }
    void retire_rebuild(RebuildDescriptor* op) {
        stats_->released.fetch_add(1, std::memory_order_relaxed);
        domain_.retire(op, destroy_rebuild);
    }

    /// Retires an unlinked subtree, following stuck rebuild descriptors into
    /// both their frozen target and any never-published replacement.
    void retire_subtree(SlotWord w) {
        switch (tag_of(w)) {
        case NodeTag::Empty:
            return;
        case NodeTag::Single:
            retire_single(ptr_of<Single>(w));
            return;
        case NodeTag::Inner: {
            Inner* n = ptr_of<Inner>(w);
            if (w == kNullWord) return; // unbuilt slot of a partial replacement
            for (std::uint32_t i = 0; i < n->degree; ++i)
                retire_subtree(dcss_read(&n->child(i)));
            retire_inner(n);
            return;
        }
        case NodeTag::Rebuild: {
            auto* op = ptr_of<RebuildDescriptor>(w);
            retire_subtree(make_word(op->target, NodeTag::Inner));
            SlotWord nt = op->new_target.load(std::memory_order_acquire);
            if (nt != kNullWord) retire_subtree(nt);
            retire_rebuild(op);
            return;
        }
        }
    }

    bool threshold_reached(std::uint64_t count, std::uint64_t init_size) const {
        return static_cast<double>(count) >=
               cfg_.rebuild_threshold * static_cast<double>(init_size);
    }

    struct ExtractCursor;
    bool extract_range(SlotWord w, std::uint64_t from, std::uint64_t to,
                       ExtractCursor& cur) const;
    static std::uint64_t frozen_count(SlotWord w);
    SlotWord create_ideal(SlotWord frozen_root, std::uint64_t from_rank,
                          std::uint64_t key_count, bool as_root, RebuildDescriptor* op);
    SlotWord build_from_sorted(std::span<const KeyValue> pairs, bool as_root);
    std::uint64_t mark_children(Inner* n, bool collaborative);

    static std::uint32_t scatter_offset_seed() {
        thread_local std::uint32_t s = [] {
            auto h = std::hash<std::thread::id>{}(std::this_thread::get_id());
            return static_cast<std::uint32_t>(h ^ (h >> 16)) | 1u;
        }();
        s = s * 1664525u + 1013904223u;
        return s;
    }

    TreeConfig cfg_;
    mutable Domain domain_;
    std::shared_ptr<AllocStats> stats_;
    Inner* anchor_;
    std::atomic<std::uint64_t> root_rebuilds_{0};
};

} // namespace ist

#include "ist/rebuild.hpp"

#endif
