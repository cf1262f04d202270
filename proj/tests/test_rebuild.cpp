#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "ist/audit.hpp"
#include "ist/hooks.hpp"
#include "ist/tree.hpp"

using namespace ist;

namespace {

// Test-side oracle: count keys by plain traversal (independent of status
// words and of the implementation's counting).
std::uint64_t count_keys(SlotWord w) {
    switch (tag_of(w)) {
    case NodeTag::Empty: return 0;
    case NodeTag::Single: return 1;
    case NodeTag::Rebuild:
        return count_keys(make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner));
    case NodeTag::Inner: {
        const Inner* n = ptr_of<Inner>(w);
        std::uint64_t total = 0;
        for (std::uint32_t i = 0; i < n->degree; ++i)
            total += count_keys(dcss_read(&n->children()[i]));
        return total;
    }
    }
    return 0;
}

void collect_keys(SlotWord w, std::vector<Key>& out) {
    switch (tag_of(w)) {
    case NodeTag::Empty: return;
    case NodeTag::Single: out.push_back(ptr_of<Single>(w)->key); return;
    case NodeTag::Rebuild:
        collect_keys(make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner), out);
        return;
    case NodeTag::Inner: {
        const Inner* n = ptr_of<Inner>(w);
        for (std::uint32_t i = 0; i < n->degree; ++i)
            collect_keys(dcss_read(&n->children()[i]), out);
        return;
    }
    }
}

// Every inner in a frozen subtree must have left the initial status.
bool fully_frozen(SlotWord w) {
    switch (tag_of(w)) {
    case NodeTag::Empty:
    case NodeTag::Single:
        return true;
    case NodeTag::Rebuild:
        return fully_frozen(
            make_word(ptr_of<RebuildDescriptor>(w)->target, NodeTag::Inner));
    case NodeTag::Inner: {
        const Inner* n = ptr_of<Inner>(w);
        if (n->status_word().is_initial()) return false;
        for (std::uint32_t i = 0; i < n->degree; ++i)
            if (!fully_frozen(dcss_read(&n->children()[i]))) return false;
        return true;
    }
    }
    return true;
}

// Shape oracle for ideal trees, evaluated independently of the builder:
// subtrees of up to seven keys are a flat inner over singles, larger nodes
// have degree floor(sqrt(n)); child sizes floor/ceil with the first
// (n mod d) children larger; separators equal the right child's least key.
struct ShapeCheck {
    bool ok = true;

    // Returns (key count, max leaf depth).
    std::pair<std::uint64_t, std::uint64_t> walk(SlotWord w) {
        switch (tag_of(w)) {
        case NodeTag::Empty: return {0, 0};
        case NodeTag::Single: return {1, 0};
        case NodeTag::Rebuild: ok = false; return {0, 0};
        case NodeTag::Inner: break;
        }
        const Inner* n = ptr_of<Inner>(w);
        std::uint64_t total = 0, max_depth = 0;
        std::vector<std::uint64_t> sizes;
        std::vector<Key> mins;
        for (std::uint32_t i = 0; i < n->degree; ++i) {
            SlotWord c = n->children()[i].load();
            std::vector<Key> child_keys;
            collect_keys(c, child_keys);
            auto [cnt, depth] = walk(c);
            if (cnt != child_keys.size()) ok = false;
            sizes.push_back(cnt);
            mins.push_back(child_keys.empty() ? 0 : child_keys.front());
            total += cnt;
            max_depth = std::max(max_depth, depth + 1);
        }
        std::uint64_t expected_degree =
            total <= 7 ? total
                       : static_cast<std::uint64_t>(
                             std::floor(std::sqrt(static_cast<double>(total))));
        if (n->degree != expected_degree) ok = false;
        if (n->init_size != total) ok = false;
        std::uint64_t base = total / n->degree, rem = total % n->degree;
        for (std::uint32_t i = 0; i < n->degree; ++i) {
            std::uint64_t want = base + (i < rem ? 1 : 0);
            if (sizes[i] != want) ok = false;
        }
        for (std::uint32_t i = 0; i + 1 < n->degree; ++i) {
            if (n->keys()[i] != mins[i + 1]) ok = false;
        }
        if (!n->status_word().is_initial()) ok = false;
        if (n->read_count() != 0) ok = false;
        if (n->next_mark.load() != 0) ok = false;
        return {total, max_depth};
    }
};

std::vector<KeyValue> make_pairs(std::uint64_t n, std::uint64_t stride = 3) {
    std::vector<KeyValue> pairs;
    pairs.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) pairs.push_back({1 + i * stride, i});
    return pairs;
}

// Builds a frozen, counted fixture from sorted pairs (marked via the real
// protocol, which is safe on a detached subtree).
SlotWord frozen_fixture(Tree& t, const std::vector<KeyValue>& pairs) {
    SlotWord w = t.build_ideal_from_sorted(pairs);
    if (tag_of(w) == NodeTag::Inner) t.mark_and_count(w);
    return w;
}

} // namespace

TEST_CASE("mark_and_count: empty, single, and mixed-leaf examples") {
    Tree t;
    CHECK(t.mark_and_count(kEmptyWord) == 0);

    Single* s = alloc_single(t.alloc_stats(), 5, 50);
    CHECK(t.mark_and_count(make_word(s, NodeTag::Single)) == 1);
    t.alloc_stats().released.fetch_add(1);
    destroy_single(s);

    // Inner with children [Single, Empty, Single] -> 2, status [2, T, T].
    Inner* n = alloc_inner(t.alloc_stats(), 3, 2, nullptr, kEmptyWord);
    n->keys()[0] = 10;
    n->keys()[1] = 20;
    Single* a = alloc_single(t.alloc_stats(), 5, 1);
    Single* b = alloc_single(t.alloc_stats(), 25, 2);
    n->child(0).store(make_word(a, NodeTag::Single));
    n->child(2).store(make_word(b, NodeTag::Single));
    CHECK(t.mark_and_count(make_word(n, NodeTag::Inner)) == 2);
    StatusWord st = n->status_word();
    CHECK(st.started());
    CHECK(st.finished());
    CHECK(st.key_count() == 2);
    t.free_unpublished(make_word(n, NodeTag::Inner));
}

TEST_CASE("mark_and_count freezes every inner and repeated calls agree") {
    Tree t;
    auto pairs = make_pairs(500);
    SlotWord w = t.build_ideal_from_sorted(pairs);
    std::uint64_t expect = count_keys(w);
    CHECK(t.mark_and_count(w) == expect);
    CHECK(fully_frozen(w));
    CHECK(t.mark_and_count(w) == expect); // idempotent
    t.free_unpublished(w);
}

TEST_CASE("mark_and_count recurses through a nested rebuild descriptor") {
    Tree t;
    auto inner_pairs = make_pairs(20);
    SlotWord nested_target = t.build_ideal_from_sorted(inner_pairs);
    REQUIRE(tag_of(nested_target) == NodeTag::Inner);

    // Parent whose child 0 is a stuck descriptor over the nested target.
    Inner* parent = alloc_inner(t.alloc_stats(), 2, 20, nullptr, kEmptyWord);
    parent->keys()[0] = ~0ull;
    RebuildDescriptor* op = alloc_rebuild(t.alloc_stats(), ptr_of<Inner>(nested_target),
                                          parent, 0);
    parent->child(0).store(make_word(op, NodeTag::Rebuild));

    CHECK(t.mark_and_count(make_word(parent, NodeTag::Inner)) == 20);
    CHECK(fully_frozen(make_word(parent, NodeTag::Inner)));

    parent->child(0).store(nested_target); // unhook for balanced teardown
    t.free_unpublished(make_word(parent, NodeTag::Inner));
    t.alloc_stats().released.fetch_add(1);
    destroy_rebuild(op);
}

TEST_CASE("create_ideal base cases and the nine-key example") {
    Tree t;
    auto pairs = make_pairs(9);
    SlotWord src = frozen_fixture(t, pairs);

    CHECK(t.create_ideal(src, 0, 0) == kEmptyWord);

    SlotWord one = t.create_ideal(src, 4, 1);
    REQUIRE(tag_of(one) == NodeTag::Single);
    CHECK(ptr_of<Single>(one)->key == pairs[4].key);
    t.free_unpublished(one);

    SlotWord nine = t.create_ideal(src, 0, 9);
    REQUIRE(tag_of(nine) == NodeTag::Inner);
    const Inner* root = ptr_of<Inner>(nine);
    CHECK(root->degree == 3); // 9 keys: degree-3 root over three 3-key children
    for (std::uint32_t i = 0; i < 3; ++i)
        CHECK(count_keys(root->children()[i].load()) == 3);
    ShapeCheck sc;
    sc.walk(nine);
    CHECK(sc.ok);
    t.free_unpublished(nine);
    t.free_unpublished(src);
}

TEST_CASE("create_ideal: ten keys split (4,3,3)") {
    Tree t;
    auto pairs = make_pairs(10);
    SlotWord src = frozen_fixture(t, pairs);
    SlotWord ten = t.create_ideal(src, 0, 10);
    REQUIRE(tag_of(ten) == NodeTag::Inner);
    const Inner* root = ptr_of<Inner>(ten);
    CHECK(root->degree == 3);
    CHECK(count_keys(root->children()[0].load()) == 4);
    CHECK(count_keys(root->children()[1].load()) == 3);
    CHECK(count_keys(root->children()[2].load()) == 3);
    t.free_unpublished(ten);
    t.free_unpublished(src);
}

TEST_CASE("create_ideal rank windows extract the right keys") {
    Tree t;
    auto pairs = make_pairs(137);
    SlotWord src = frozen_fixture(t, pairs);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        std::uint64_t from = rng() % 137;
        std::uint64_t cnt = 1 + rng() % (137 - from);
        SlotWord sub = t.create_ideal(src, from, cnt);
        std::vector<Key> got;
        collect_keys(sub, got);
        REQUIRE(got.size() == cnt);
        for (std::uint64_t i = 0; i < cnt; ++i) CHECK(got[i] == pairs[from + i].key);
        t.free_unpublished(sub);
    }
    // key_at_rank agrees with the pair list.
    for (std::uint64_t r : {0ull, 1ull, 68ull, 135ull, 136ull})
        CHECK(t.key_at_rank(src, r) == pairs[r].key);
    t.free_unpublished(src);
}

TEST_CASE("ideal shape properties and determinism across sizes") {
    Tree t;
    for (std::uint64_t n : {2ull, 3ull, 4ull, 7ull, 8ull, 9ull, 16ull, 48ull, 100ull,
                            1000ull, 4096ull, 20011ull}) {
        auto pairs = make_pairs(n);
        SlotWord a = t.build_ideal_from_sorted(pairs);
        ShapeCheck sc;
        auto [cnt, depth] = sc.walk(a);
        CHECK(sc.ok);
        CHECK(cnt == n);
        if (n >= 4) {
            double bound = std::ceil(std::log2(std::log2(static_cast<double>(n)))) + 2;
            CHECK(static_cast<double>(depth) <= bound);
        }
        SlotWord b = t.build_ideal_from_sorted(pairs);
        std::string sa, sb;
        audit::serialize_structure(a, sa);
        audit::serialize_structure(b, sb);
        CHECK(sa == sb);
        t.free_unpublished(a);
        t.free_unpublished(b);
    }
}

TEST_CASE("child_range formulas: pinned examples") {
    // keyCount=10: childSize=3, remainder=1.
    CHECK(Tree::child_range(10, 0).from == 0);
    CHECK(Tree::child_range(10, 0).count == 4);
    CHECK(Tree::child_range(10, 1).from == 4);
    CHECK(Tree::child_range(10, 1).count == 3);
    CHECK(Tree::child_range(10, 2).from == 7);
    CHECK(Tree::child_range(10, 2).count == 3);
    // keyCount=9: remainder=0.
    CHECK(Tree::child_range(9, 2).from == 6);
    CHECK(Tree::child_range(9, 2).count == 3);
    // Ranges tile [0, keyCount) for assorted sizes.
    for (std::uint64_t kc : {48ull, 100ull, 1000ull, 12345ull}) {
        std::uint64_t d = Tree::isqrt(kc), pos = 0;
        for (std::uint32_t i = 0; i < d; ++i) {
            auto r = Tree::child_range(kc, i);
            CHECK(r.from == pos);
            pos += r.count;
        }
        CHECK(pos == kc);
    }
}

TEST_CASE("announce: uncontended rebuild replaces the subtree, keys preserved") {
    Tree t;
    std::mt19937_64 rng(17);
    std::set<Key> keys;
    while (keys.size() < 300) {
        Key k = rng() % 100000;
        if (keys.insert(k).second) t.insert(k, k);
    }
    SlotWord root = t.logical_root();
    REQUIRE(tag_of(root) == NodeTag::Inner);
    std::vector<Key> before;
    collect_keys(root, before);

    {
        Guard g(t.domain());
        t.announce(ptr_of<Inner>(root), t.anchor(), 0);
        // The old root must now be fully frozen (freezing lemma).
        CHECK(fully_frozen(root));
    }
    SlotWord fresh = t.logical_root();
    CHECK(fresh != root);
    std::vector<Key> after;
    collect_keys(fresh, after);
    CHECK(before == after);
    ShapeCheck sc;
    sc.walk(fresh);
    CHECK(sc.ok);
    auto rep = audit::check_structure(t);
    CHECK(rep.ok);
}

TEST_CASE("announce against a frozen parent fails without installing") {
    Tree t;
    auto pairs = make_pairs(30);
    SlotWord child = t.build_ideal_from_sorted(pairs);
    Inner* parent = alloc_inner(t.alloc_stats(), 2, 30, nullptr, kEmptyWord);
    parent->keys()[0] = ~0ull;
    parent->child(0).store(child);
    parent->status.store(StatusWord::marking().raw); // freeze the parent

    t.announce(ptr_of<Inner>(child), parent, 0);
    CHECK(parent->child(0).load() == child); // no installation, no change
    CHECK(ptr_of<Inner>(child)->status_word().is_initial());

    parent->status.store(StatusWord::initial().raw);
    t.free_unpublished(make_word(parent, NodeTag::Inner));
}

TEST_CASE("two concurrent announces install exactly one descriptor") {
    for (int round = 0; round < 25; ++round) {
        Tree t;
        for (Key k = 0; k < 200; ++k) t.insert(k * 7 + 1, k);
        SlotWord root = t.logical_root();
        REQUIRE(tag_of(root) == NodeTag::Inner);
        Inner* target = ptr_of<Inner>(root);

        std::atomic<int> installs{0};
        hooks::set_stall(hooks::Point::AfterRebuildInstall, [&] { installs.fetch_add(1); });
        std::thread a([&] { t.announce(target, t.anchor(), 0); });
        std::thread b([&] { t.announce(target, t.anchor(), 0); });
        a.join();
        b.join();
        hooks::clear();
        CHECK(installs.load() == 1);
        auto rep = audit::check_structure(t);
        CHECK(rep.ok);
        CHECK(rep.keys.size() == 200);
    }
}

TEST_CASE("help_rebuild is idempotent after completion") {
    Tree t;
    for (Key k = 1; k <= 120; ++k) t.insert(k, k);
    SlotWord root = t.logical_root();
    REQUIRE(tag_of(root) == NodeTag::Inner);

    Guard g(t.domain()); // keeps the retired descriptor dereferenceable
    RebuildDescriptor* op =
        alloc_rebuild(t.alloc_stats(), ptr_of<Inner>(root), t.anchor(), 0);
    t.anchor()->child(0).store(make_word(op, NodeTag::Rebuild));
    t.help_rebuild(op);
    CHECK(tag_of(t.logical_root()) == NodeTag::Inner);

    std::string before = audit::serialize_structure(t);
    std::uint64_t live_before = t.alloc_stats().live();
    t.help_rebuild(op); // late helper: no visible change
    CHECK(audit::serialize_structure(t) == before);
    CHECK(t.alloc_stats().live() == live_before);
}

TEST_CASE("helper splice fails inside an enclosing frozen subtree") {
    Tree t;
    auto pairs = make_pairs(60);
    SlotWord target = t.build_ideal_from_sorted(pairs);
    REQUIRE(tag_of(target) == NodeTag::Inner);

    Inner* parent = alloc_inner(t.alloc_stats(), 2, 60, nullptr, kEmptyWord);
    parent->keys()[0] = ~0ull;
    RebuildDescriptor* op =
        alloc_rebuild(t.alloc_stats(), ptr_of<Inner>(target), parent, 0);
    parent->child(0).store(make_word(op, NodeTag::Rebuild));
    // Enclosing rebuild froze the parent before this helper's final splice.
    parent->status.store(StatusWord::counted(60).raw);

    t.help_rebuild(op);
    CHECK(parent->child(0).load() == make_word(op, NodeTag::Rebuild)); // untouched
    std::vector<Key> still;
    collect_keys(make_word(parent, NodeTag::Inner), still);
    CHECK(still.size() == 60);

    // Teardown: free the never-published replacement and the fixture.
    SlotWord nt = op->new_target.load();
    if (nt != kNullWord) t.free_unpublished(nt);
    parent->child(0).store(target);
    t.free_unpublished(make_word(parent, NodeTag::Inner));
    t.alloc_stats().released.fetch_add(1);
    destroy_rebuild(op);
}

TEST_CASE("collaborative mark: below threshold behaves like the plain variant") {
    Tree plain_tree, collab_tree;
    auto pairs = make_pairs(40); // degree stays below the default threshold
    SlotWord a = plain_tree.build_ideal_from_sorted(pairs);
    SlotWord b = collab_tree.build_ideal_from_sorted(pairs);
    CHECK(plain_tree.mark_and_count(a) == collab_tree.mark_and_count_collaborative(b));
    std::string sa, sb;
    audit::serialize_structure(a, sa);
    audit::serialize_structure(b, sb);
    CHECK(sa == sb); // marking does not change structure
    CHECK(fully_frozen(a));
    CHECK(fully_frozen(b));
    plain_tree.free_unpublished(a);
    collab_tree.free_unpublished(b);
}

TEST_CASE("collaborative mark: two helpers on a degree-100 node agree") {
    Tree t;
    auto pairs = make_pairs(10000); // root degree 100 > collaboration threshold
    SlotWord w = t.build_ideal_from_sorted(pairs);
    REQUIRE(ptr_of<Inner>(w)->degree == 100);

    std::uint64_t r1 = 0, r2 = 0;
    std::thread h1([&] { r1 = t.mark_and_count_collaborative(w); });
    std::thread h2([&] { r2 = t.mark_and_count_collaborative(w); });
    h1.join();
    h2.join();
    CHECK(r1 == 10000);
    CHECK(r2 == 10000);
    CHECK(fully_frozen(w));
    t.free_unpublished(w);
}

TEST_CASE("collaborative mark: a stalled claimant does not block completion") {
    Tree t;
    auto pairs = make_pairs(10000);
    SlotWord w = t.build_ideal_from_sorted(pairs);

    std::atomic<bool> release{false};
    std::atomic<int> stalls{0};
    hooks::set_stall(hooks::Point::AfterMarkClaim, [&] {
        if (stalls.fetch_add(1) == 0) {
            while (!release.load()) std::this_thread::yield();
        }
    });

    std::uint64_t r_victim = 0, r_worker = 0;
    std::thread victim([&] { r_victim = t.mark_and_count_collaborative(w); });
    while (stalls.load() == 0) std::this_thread::yield();
    std::thread worker([&] { r_worker = t.mark_and_count_collaborative(w); });
    worker.join();
    // The unstalled helper finished alone: the whole subtree is frozen.
    CHECK(r_worker == 10000);
    CHECK(fully_frozen(w));
    release.store(true);
    victim.join();
    hooks::clear();
    CHECK(r_victim == 10000);
    t.free_unpublished(w);
}

TEST_CASE("create_ideal_collaborative: below threshold delegates wholesale") {
    Tree t;
    auto pairs = make_pairs(30);
    SlotWord src = frozen_fixture(t, pairs);
    SlotWord reference = t.create_ideal(src, 0, 30);

    Inner* parent = alloc_inner(t.alloc_stats(), 2, 30, nullptr, kEmptyWord);
    parent->keys()[0] = ~0ull;
    RebuildDescriptor* op = alloc_rebuild(t.alloc_stats(), ptr_of<Inner>(src), parent, 0);
    parent->child(0).store(make_word(op, NodeTag::Rebuild));

    SlotWord got = t.create_ideal_collaborative(op, 30);
    CHECK(got == op->new_target.load());
    std::string sa, sb;
    audit::serialize_structure(reference, sa);
    audit::serialize_structure(got, sb);
    CHECK(sa == sb);

    t.free_unpublished(reference);
    t.free_unpublished(got);
    parent->child(0).store(src);
    t.free_unpublished(make_word(parent, NodeTag::Inner));
    t.alloc_stats().released.fetch_add(1);
    destroy_rebuild(op);
}

TEST_CASE("create_ideal_collaborative: two helpers agree on one root") {
    for (bool scatter : {false, true}) {
        TreeConfig cfg;
        cfg.scatter_offset = scatter;
        Tree t(cfg);
        auto pairs = make_pairs(100);
        SlotWord src = frozen_fixture(t, pairs);

        Inner* parent = alloc_inner(t.alloc_stats(), 2, 100, nullptr, kEmptyWord);
        parent->keys()[0] = ~0ull;
        RebuildDescriptor* op =
            alloc_rebuild(t.alloc_stats(), ptr_of<Inner>(src), parent, 0);
        parent->child(0).store(make_word(op, NodeTag::Rebuild));

        SlotWord g1 = 0, g2 = 0;
        std::thread h1([&] { g1 = t.create_ideal_collaborative(op, 100); });
        std::thread h2([&] { g2 = t.create_ideal_collaborative(op, 100); });
        h1.join();
        h2.join();
        CHECK(g1 == g2);
        Inner* root = ptr_of<Inner>(g1);
        CHECK(root->degree == 10);
        for (std::uint32_t i = 0; i < 10; ++i)
            CHECK(root->children()[i].load() != kNullWord);
        std::vector<Key> got;
        collect_keys(g1, got);
        std::vector<Key> want;
        for (auto& p : pairs) want.push_back(p.key);
        CHECK(got == want);
        ShapeCheck sc;
        sc.walk(g1);
        CHECK(sc.ok);

        t.free_unpublished(g1);
        parent->child(0).store(src);
        t.free_unpublished(make_word(parent, NodeTag::Inner));
        t.alloc_stats().released.fetch_add(1);
        destroy_rebuild(op);
    }
}

TEST_CASE("create_ideal_collaborative: helping pass finishes a stalled claim") {
    TreeConfig cfg;
    cfg.scatter_offset = false; // deterministic ticket claims
    Tree t(cfg);
    auto pairs = make_pairs(100);
    SlotWord src = frozen_fixture(t, pairs);

    Inner* parent = alloc_inner(t.alloc_stats(), 2, 100, nullptr, kEmptyWord);
    parent->keys()[0] = ~0ull;
    RebuildDescriptor* op = alloc_rebuild(t.alloc_stats(), ptr_of<Inner>(src), parent, 0);
    parent->child(0).store(make_word(op, NodeTag::Rebuild));

    std::atomic<bool> release{false};
    std::atomic<int> stalls{0};
    hooks::set_stall(hooks::Point::AfterBuildClaim, [&] {
        if (stalls.fetch_add(1) == 0) {
            while (!release.load()) std::this_thread::yield();
        }
    });

    SlotWord g1 = 0, g2 = 0;
    std::thread victim([&] { g1 = t.create_ideal_collaborative(op, 100); });
    while (stalls.load() == 0) std::this_thread::yield();
    std::thread worker([&] { g2 = t.create_ideal_collaborative(op, 100); });
    worker.join();
    // The worker finished every slot, including the victim's claim.
    Inner* root = ptr_of<Inner>(g2);
    for (std::uint32_t i = 0; i < root->degree; ++i)
        CHECK(root->children()[i].load() != kNullWord);
    release.store(true);
    victim.join();
    hooks::clear();
    CHECK(g1 == g2);
    std::vector<Key> got;
    collect_keys(g2, got);
    CHECK(got.size() == 100);

    t.free_unpublished(g2);
    parent->child(0).store(src);
    t.free_unpublished(make_word(parent, NodeTag::Inner));
    t.alloc_stats().released.fetch_add(1);
    destroy_rebuild(op);
}

TEST_CASE("set preservation on large random rebuilds") {
    Tree t;
    std::mt19937_64 rng(23);
    std::set<Key> keys;
    while (keys.size() < 100000) {
        Key k = rng();
        if (keys.insert(k).second) t.insert(k, k);
    }
    SlotWord root = t.logical_root();
    REQUIRE(tag_of(root) == NodeTag::Inner);
    t.announce(ptr_of<Inner>(root), t.anchor(), 0);
    auto rep = audit::check_structure(t);
    CHECK(rep.ok);
    CHECK(rep.keys.size() == keys.size());
    CHECK(std::equal(rep.keys.begin(), rep.keys.end(), keys.begin()));
}

TEST_CASE("frozen nodes never take writes (hook-recorded)") {
    std::atomic<std::uint64_t> frozen_writes{0};
    hooks::set_write_recorder([&](const void*, std::uint64_t status_at_decision) {
        if (!StatusWord{status_at_decision}.is_initial()) frozen_writes.fetch_add(1);
    });
    {
        Tree t;
        std::mt19937_64 rng(29);
        for (int i = 0; i < 40000; ++i) {
            Key k = rng() % 2048;
            if (rng() % 2)
                t.insert(k, k);
            else
                t.erase(k);
        }
        auto rep = audit::check_structure(t);
        CHECK(rep.ok);
    }
    hooks::clear();
    CHECK(frozen_writes.load() == 0);
}
