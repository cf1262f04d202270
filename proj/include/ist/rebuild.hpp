#ifndef IST_REBUILD_HPP
#define IST_REBUILD_HPP

// Rebuild protocol: announce, freeze-and-count, ideal reconstruction and
// splice, in non-collaborative and collaborative variants. Included at the
// bottom of tree.hpp; do not include directly.

#include "ist/tree.hpp"

namespace ist {

inline void Tree::announce(Inner* node, Inner* parent, std::uint32_t index) {
    Guard g(domain_);
    RebuildDescriptor* op = alloc_rebuild(*stats_, node, parent, index);
    DcssResult r = dcss(domain_, &parent->child(index), make_word(node, NodeTag::Inner),
                        make_word(op, NodeTag::Rebuild), &parent->status,
                        StatusWord::initial().raw);
    if (r == DcssResult::Success) {
        hooks::stall(hooks::Point::AfterRebuildInstall);
        help_rebuild(op);
    } else {
        // Another rebuild already owns this slot or an ancestor; back off.
        stats_->released.fetch_add(1, std::memory_order_relaxed);
        destroy_rebuild(op);
    }
}

inline void Tree::help_rebuild(RebuildDescriptor* op) {
    Guard g(domain_);
    SlotWord target_word = make_word(op->target, NodeTag::Inner);
    SlotWord op_word = make_word(op, NodeTag::Rebuild);
    bool collaborative = cfg_.collaborative;
    std::uint64_t key_count = collaborative ? mark_and_count_collaborative(target_word)
                                            : mark_and_count(target_word);
    SlotWord ideal;
    if (collaborative) {
        ideal = create_ideal_collaborative(op, key_count);
        if (ideal == kAbortedWord) return; // replacement already spliced
    } else {
        ideal = create_ideal(target_word, 0, key_count, op->parent == anchor_, op);
        if (ideal == kAbortedWord) return;
    }
    DcssResult r = dcss(domain_, &op->parent->child(op->index), op_word, ideal,
                        &op->parent->status, StatusWord::initial().raw);
    if (r == DcssResult::Success) {
        if (op->parent == anchor_)
            root_rebuilds_.fetch_add(1, std::memory_order_relaxed);
        retire_subtree(target_word);
        retire_rebuild(op);
    } else if (!collaborative) {
        // Our private replacement lost the race (or the parent froze);
        // nobody else ever saw it.
        free_unpublished(ideal);
    }
    // Collaborative replacements are shared through op->new_target: if the
    // splice failed on the aux address, the descriptor stays reachable and an
    // enclosing rebuild retires it together with the unpublished replacement.
}

inline std::uint64_t Tree::frozen_count(SlotWord w) {
    switch (tag_of(w)) {
    case NodeTag::Empty:
        return 0;
    case NodeTag::Single:
        return 1;
    case NodeTag::Rebuild:
        return frozen_count(make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner));
    case NodeTag::Inner: {
        StatusWord st = ptr_of<Inner>(w)->status_word();
        assert(st.finished() && "count read from an unfrozen node");
        return st.key_count();
    }
    }
    return 0;
}

inline std::uint64_t Tree::mark_children(Inner* n, bool collaborative) {
    std::uint64_t key_count = 0;
    for (std::uint32_t i = 0; i < n->degree; ++i) {
        SlotWord c = dcss_read(&n->child(i));
        switch (tag_of(c)) {
        case NodeTag::Empty:
            break;
        case NodeTag::Single:
            key_count += 1;
            break;
        case NodeTag::Inner: {
            StatusWord st = ptr_of<Inner>(c)->status_word();
            if (st.finished())
                key_count += st.key_count();
            else
                key_count += collaborative ? mark_and_count_collaborative(c)
                                           : mark_and_count(c);
            break;
        }
        case NodeTag::Rebuild:
            // A nested rebuild stuck under this freeze; count through it.
            key_count += collaborative ? mark_and_count_collaborative(c)
                                       : mark_and_count(c);
            break;
        }
    }
    return key_count;
}

inline std::uint64_t Tree::mark_and_count(SlotWord w) {
    switch (tag_of(w)) {
    case NodeTag::Empty:
        return 0;
    case NodeTag::Single:
        return 1;
    case NodeTag::Rebuild:
        return mark_and_count(
            make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner));
    case NodeTag::Inner:
        break;
    }
    Inner* n = ptr_of<Inner>(w);
    StatusWord st = n->status_word();
    if (st.finished()) return st.key_count();
    std::uint64_t expected = StatusWord::initial().raw;
    n->status.compare_exchange_strong(expected, StatusWord::marking().raw,
                                      std::memory_order_acq_rel);
    std::uint64_t key_count = mark_children(n, false);
    expected = StatusWord::marking().raw;
    n->status.compare_exchange_strong(expected, StatusWord::counted(key_count).raw,
                                      std::memory_order_acq_rel);
    return key_count;
}

inline std::uint64_t Tree::mark_and_count_collaborative(SlotWord w) {
    switch (tag_of(w)) {
    case NodeTag::Empty:
        return 0;
    case NodeTag::Single:
        return 1;
    case NodeTag::Rebuild:
        return mark_and_count_collaborative(
            make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner));
    case NodeTag::Inner:
        break;
    }
    Inner* n = ptr_of<Inner>(w);
    StatusWord st = n->status_word();
    if (st.finished()) return st.key_count();
    std::uint64_t expected = StatusWord::initial().raw;
    n->status.compare_exchange_strong(expected, StatusWord::marking().raw,
                                      std::memory_order_acq_rel);
    if (n->degree > cfg_.collaboration_threshold) {
        // Scatter phase: helpers claim disjoint children so they mark
        // different parts of the subtree in parallel.
        for (;;) {
            std::uint32_t i = n->next_mark.fetch_add(1, std::memory_order_acq_rel);
            if (i >= n->degree) break;
            hooks::stall(hooks::Point::AfterMarkClaim);
            mark_and_count_collaborative(dcss_read(&n->child(i)));
        }
    }
    // Full left-to-right pass; guarantees completion even if claimants stall.
    std::uint64_t key_count = mark_children(n, true);
    expected = StatusWord::marking().raw;
    n->status.compare_exchange_strong(expected, StatusWord::counted(key_count).raw,
                                      std::memory_order_acq_rel);
    return key_count;
}

/// DFS cursor for rank-range extraction over a frozen subtree. `pos` counts
/// keys to the left of the scan point, pruned subtrees included, so a whole
/// subtree can be skipped once its key count is known.
struct Tree::ExtractCursor {
    std::uint64_t pos = 0;
    std::vector<KeyValue>* out = nullptr;
    RebuildDescriptor* op = nullptr; // abort probe, may be null
    SlotWord op_word = 0;
    std::uint32_t tick = 0;
    bool aborted = false;

    bool probe() {
        if (op == nullptr) return true;
        if (++tick < 1024) return true;
        tick = 0;
        if (op->parent->child(op->index).load(std::memory_order_acquire) != op_word) {
            aborted = true;
            return false;
        }
        return true;
    }
};

inline bool Tree::extract_range(SlotWord w, std::uint64_t from, std::uint64_t to,
                                ExtractCursor& cur) const {
    if (cur.pos >= to) return true;
    switch (tag_of(w)) {
    case NodeTag::Empty:
        return true;
    case NodeTag::Single: {
        const Single* s = ptr_of<Single>(w);
        if (cur.pos >= from && cur.out) cur.out->push_back({s->key, s->val});
        ++cur.pos;
        return cur.probe();
    }
    case NodeTag::Rebuild:
        return extract_range(
            make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner), from, to, cur);
    case NodeTag::Inner: {
        const Inner* n = ptr_of<Inner>(w);
        std::uint64_t cnt = frozen_count(w);
        if (cur.pos + cnt <= from) { // everything here lies left of the range
            cur.pos += cnt;
            return cur.probe();
        }
        for (std::uint32_t i = 0; i < n->degree; ++i) {
            if (cur.pos >= to) return true;
            if (!extract_range(dcss_read(&n->children()[i]), from, to, cur)) return false;
        }
        return true;
    }
    }
    return true;
}

inline Key Tree::key_at_rank(SlotWord frozen_root, std::uint64_t rank) const {
    std::vector<KeyValue> out;
    out.reserve(1);
    ExtractCursor cur;
    cur.out = &out;
    extract_range(frozen_root, rank, rank + 1, cur);
    assert(out.size() == 1 && "rank out of range");
    return out[0].key;
}

inline SlotWord Tree::build_from_sorted(std::span<const KeyValue> pairs, bool as_root) {
    const std::uint64_t n = pairs.size();
    if (n == 0) return kEmptyWord;
    if (n == 1)
        return make_word(alloc_single(*stats_, pairs[0].key, pairs[0].val), NodeTag::Single);
    const std::uint64_t d = ideal_degree(n);
    MultiCounter* mc = as_root ? new MultiCounter(cfg_.resolved_stripes()) : nullptr;
    Inner* inner = alloc_inner(*stats_, static_cast<std::uint32_t>(d), n, mc, kNullWord);
    const std::uint64_t child_size = n / d, remainder = n % d;
    std::uint64_t off = 0;
    for (std::uint64_t i = 0; i < d; ++i) {
        std::uint64_t sz = child_size + (i < remainder ? 1 : 0);
        if (i > 0) inner->keys()[i - 1] = pairs[off].key;
        inner->child(static_cast<std::uint32_t>(i))
            .store(build_from_sorted(pairs.subspan(off, sz), false),
                   std::memory_order_relaxed);
        off += sz;
    }
    assert(off == n);
    return make_word(inner, NodeTag::Inner);
}

inline SlotWord Tree::create_ideal(SlotWord frozen_root, std::uint64_t from_rank,
                                   std::uint64_t key_count, bool as_root,
                                   RebuildDescriptor* op) {
    if (key_count == 0) return kEmptyWord;
    std::vector<KeyValue> pairs;
    pairs.reserve(key_count);
    ExtractCursor cur;
    cur.out = &pairs;
    cur.op = op;
    if (op) cur.op_word = make_word(op, NodeTag::Rebuild);
    if (!extract_range(frozen_root, from_rank, from_rank + key_count, cur))
        return kAbortedWord;
    assert(pairs.size() == key_count && "frozen counts disagree with extraction");
    return build_from_sorted(pairs, as_root);
}

inline SlotWord Tree::create_ideal_collaborative(RebuildDescriptor* op,
                                                 std::uint64_t key_count) {
    Guard g(domain_);
    SlotWord target_word = make_word(op->target, NodeTag::Inner);
    SlotWord op_word = make_word(op, NodeTag::Rebuild);
    bool as_root = op->parent == anchor_;
    // Small subtrees (or ones that would not split collaboratively anyway)
    // are built wholesale and published through the descriptor.
    if (key_count < cfg_.collaboration_threshold || key_count <= kMaxFlatFanout) {
        SlotWord mine = create_ideal(target_word, 0, key_count, as_root, op);
        if (mine == kAbortedWord) {
            SlotWord nt = op->new_target.load(std::memory_order_acquire);
            return nt != kNullWord ? nt : kAbortedWord;
        }
        SlotWord expected = kNullWord;
        if (op->new_target.compare_exchange_strong(expected, mine,
                                                   std::memory_order_acq_rel)) {
            return mine;
        }
        free_unpublished(mine); // another helper published first
        return op->new_target.load(std::memory_order_acquire);
    }

    const auto d = static_cast<std::uint32_t>(isqrt(key_count));
    MultiCounter* mc = as_root ? new MultiCounter(cfg_.resolved_stripes()) : nullptr;
    Inner* candidate = alloc_inner(*stats_, d, key_count, mc, kNullWord);
    SlotWord candidate_word = make_word(candidate, NodeTag::Inner);
    SlotWord expected = kNullWord;
    if (!op->new_target.compare_exchange_strong(expected, candidate_word,
                                                std::memory_order_acq_rel)) {
        stats_->released.fetch_add(1, std::memory_order_relaxed);
        destroy_inner(candidate); // lost the publication race; slots still null
        candidate_word = op->new_target.load(std::memory_order_acquire);
    }
    Inner* shared = ptr_of<Inner>(candidate_word);
    const std::uint32_t len = shared->degree;

    // Claim phase: each null slot is a subtask. Either scan from a scattered
    // per-thread offset, or hand out indices through the descriptor's ticket.
    // Slot checks go through dcss_read: a raw load could mistake an
    // in-flight (still undecided) install for a built child and let the
    // replacement be spliced in with a hole.
    if (cfg_.scatter_offset) {
        std::uint32_t start = scatter_offset_seed() % len;
        for (std::uint32_t j = 0; j < len; ++j) {
            std::uint32_t i = (start + j) % len;
            if (dcss_read(&shared->child(i)) == kNullWord) {
                hooks::stall(hooks::Point::AfterBuildClaim);
                if (!rebuild_and_set_child(op, key_count, i)) return candidate_word;
            }
        }
    } else {
        for (;;) {
            std::uint32_t t = op->build_ticket.load(std::memory_order_acquire);
            if (t >= len) break;
            if (op->build_ticket.compare_exchange_weak(t, t + 1,
                                                       std::memory_order_acq_rel)) {
                hooks::stall(hooks::Point::AfterBuildClaim);
                if (!rebuild_and_set_child(op, key_count, t)) return candidate_word;
            }
        }
    }
    // Helping pass: finish any subtask whose claimant has stalled.
    for (std::uint32_t i = 0; i < len; ++i) {
        if (dcss_read(&shared->child(i)) == kNullWord) {
            if (!rebuild_and_set_child(op, key_count, i)) return candidate_word;
        }
    }
    return candidate_word;
}

inline bool Tree::rebuild_and_set_child(RebuildDescriptor* op, std::uint64_t key_count,
                                        std::uint32_t index) {
    Guard g(domain_);
    SlotWord op_word = make_word(op, NodeTag::Rebuild);
    // If the replacement is already spliced in, there is nothing left to do.
    if (op->parent->child(op->index).load(std::memory_order_acquire) != op_word)
        return true;
    Inner* shared = ptr_of<Inner>(op->new_target.load(std::memory_order_acquire));
    const std::uint64_t d = shared->degree;
    const ChildRange range = child_range(key_count, index);
    SlotWord target_word = make_word(op->target, NodeTag::Inner);
    SlotWord child = create_ideal(target_word, range.from, range.count, false, op);
    if (child == kAbortedWord) return true;
    if (index + 1 < d) {
        // Separator = smallest key of the next child; every helper computes
        // and writes the same value.
        Key sep = key_at_rank(target_word, child_range(key_count, index + 1).from);
        std::atomic_ref<Key>(shared->keys()[index]).store(sep, std::memory_order_relaxed);
    }
    DcssResult r = dcss(domain_, &shared->child(index), kNullWord, child, &shared->status,
                        StatusWord::initial().raw);
    if (r == DcssResult::Success) return true;
    free_unpublished(child); // a helper beat us to this slot, or the build aborted
    return r != DcssResult::FailedAuxAddress;
}

} // namespace ist

#endif
