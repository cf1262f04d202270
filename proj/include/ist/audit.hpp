#ifndef IST_AUDIT_HPP
#define IST_AUDIT_HPP

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ist/tree.hpp"

namespace ist::audit {

/// Result of a full structural audit. All checks run at quiescence.
struct Report {
    bool ok = true;
    std::string error;
    std::vector<Key> keys; // in traversal (sorted) order

    void fail(const std::string& msg) {
        if (ok) {
            ok = false;
            error = msg;
        }
    }
};

namespace detail {

struct Walker {
    Report* rep;
    std::unordered_set<const void*> visited;

    // lo/hi are the cover interval bounds; unset means unbounded.
    void walk(SlotWord w, std::optional<Key> lo, std::optional<Key> hi) {
        if (!rep->ok) return;
        switch (tag_of(w)) {
        case NodeTag::Empty:
            return;
        case NodeTag::Single: {
            const auto* s = ptr_of<Single>(w);
            if (!visited.insert(s).second) {
                rep->fail("acyclicity violated: single visited twice");
                return;
            }
            if ((lo && s->key < *lo) || (hi && s->key >= *hi)) {
                std::ostringstream os;
                os << "search-tree violated: key " << s->key << " outside cover";
                rep->fail(os.str());
                return;
            }
            rep->keys.push_back(s->key);
            return;
        }
        case NodeTag::Rebuild:
            rep->fail("rebuild descriptor reachable at quiescence");
            return;
        case NodeTag::Inner: {
            const auto* n = ptr_of<Inner>(w);
            if (w == kNullWord) {
                rep->fail("null child slot reachable");
                return;
            }
            if (!visited.insert(n).second) {
                rep->fail("acyclicity violated: inner visited twice");
                return;
            }
            if (n->degree < 2) {
                rep->fail("inner of degree < 2 reachable");
                return;
            }
            const Key* keys = n->keys();
            for (std::uint32_t i = 0; i + 1 < n->degree; ++i) {
                if (i > 0 && keys[i - 1] >= keys[i]) {
                    rep->fail("separators not strictly increasing");
                    return;
                }
                if ((lo && keys[i] < *lo) || (hi && keys[i] >= *hi)) {
                    rep->fail("separator outside parent cover");
                    return;
                }
            }
            for (std::uint32_t i = 0; i < n->degree; ++i) {
                std::optional<Key> clo = i == 0 ? lo : std::optional<Key>(keys[i - 1]);
                std::optional<Key> chi = i + 1 == n->degree ? hi : std::optional<Key>(keys[i]);
                walk(dcss_read(&n->children()[i]), clo, chi);
                if (!rep->ok) return;
            }
            return;
        }
        }
    }
};

} // namespace detail

/// Full traversal checking the search-tree, key-presence and acyclicity
/// invariants; collects the key sequence for set comparisons.
inline Report check_structure(const Tree& tree) {
    Report rep;
    detail::Walker w{&rep, {}};
    w.walk(tree.logical_root(), std::nullopt, std::nullopt);
    if (rep.ok) {
        for (std::size_t i = 1; i < rep.keys.size(); ++i) {
            if (rep.keys[i - 1] >= rep.keys[i]) {
                rep.fail("key presence violated: duplicate or out-of-order key");
                break;
            }
        }
    }
    return rep;
}

/// Canonical byte dump of the structure; equal dumps mean structurally
/// identical trees (same shapes, keys, values and separators).
inline void serialize_structure(SlotWord w, std::string& out) {
    switch (tag_of(w)) {
    case NodeTag::Empty:
        out += 'E';
        return;
    case NodeTag::Single: {
        const auto* s = ptr_of<Single>(w);
        out += 'S';
        out.append(reinterpret_cast<const char*>(&s->key), sizeof(Key));
        out.append(reinterpret_cast<const char*>(&s->val), sizeof(Value));
        return;
    }
    case NodeTag::Rebuild:
        out += '!';
        return;
    case NodeTag::Inner: {
        const auto* n = ptr_of<Inner>(w);
        out += 'I';
        auto d = n->degree;
        out.append(reinterpret_cast<const char*>(&d), sizeof(d));
        out.append(reinterpret_cast<const char*>(n->keys()), sizeof(Key) * (n->degree - 1));
        for (std::uint32_t i = 0; i < n->degree; ++i)
            serialize_structure(dcss_read(&n->children()[i]), out);
        return;
    }
    }
}

inline std::string serialize_structure(const Tree& tree) {
    std::string out;
    serialize_structure(tree.logical_root(), out);
    return out;
}

} // namespace ist::audit

#endif
