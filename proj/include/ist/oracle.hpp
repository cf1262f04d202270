#ifndef IST_ORACLE_HPP
#define IST_ORACLE_HPP

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "ist/config.hpp"

namespace ist::oracle {

/// Sequential reference: exact abstract-set semantics over a balanced map.
class OracleSet {
  public:
    std::optional<Value> lookup(Key k) const {
        auto it = map_.find(k);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<Value> insert(Key k, Value v) {
        auto it = map_.find(k);
        if (it == map_.end()) {
            map_.emplace(k, v);
            return std::nullopt;
        }
        Value prev = it->second;
        it->second = v;
        return prev;
    }

    std::optional<Value> erase(Key k) {
        auto it = map_.find(k);
        if (it == map_.end()) return std::nullopt;
        Value v = it->second;
        map_.erase(it);
        return v;
    }

    std::size_t size() const { return map_.size(); }
    const std::map<Key, Value>& contents() const { return map_; }

  private:
    std::map<Key, Value> map_;
};

enum class OpKind : int { Insert = 0, Erase = 1, Lookup = 2 };

inline const char* op_name(OpKind k) {
    switch (k) {
    case OpKind::Insert: return "insert";
    case OpKind::Erase: return "delete";
    case OpKind::Lookup: return "lookup";
    }
    return "?";
}

/// One completed operation in a recorded history. `invoke` and `response`
/// are global sequence numbers drawn at invocation and return.
struct Event {
    int tid = 0;
    OpKind op = OpKind::Lookup;
    Key key = 0;
    Value arg = 0;
    std::optional<Value> result;
    std::uint64_t invoke = 0;
    std::uint64_t response = 0;
};

using History = std::vector<Event>;

/// Global ticket for invoke/response sequence numbers.
class SequenceClock {
  public:
    std::uint64_t tick() { return next_.fetch_add(1, std::memory_order_acq_rel); }

  private:
    std::atomic<std::uint64_t> next_{0};
};

/// Runs one operation against any map-like target, stamping it into an Event.
template <class Target>
Event record_op(SequenceClock& clock, Target& target, int tid, OpKind op, Key key,
                Value arg) {
    Event e;
    e.tid = tid;
    e.op = op;
    e.key = key;
    e.arg = arg;
    e.invoke = clock.tick();
    switch (op) {
    case OpKind::Insert: e.result = target.insert(key, arg); break;
    case OpKind::Erase: e.result = target.erase(key); break;
    case OpKind::Lookup: e.result = target.lookup(key); break;
    }
    e.response = clock.tick();
    return e;
}

namespace detail {

inline void validate_history(const History& h) {
    std::map<int, std::uint64_t> last_response;
    std::unordered_set<std::uint64_t> seen;
    for (const auto& e : h) {
        if (e.invoke >= e.response)
            throw std::invalid_argument("history: invoke must precede response");
        if (!seen.insert(e.invoke).second || !seen.insert(e.response).second)
            throw std::invalid_argument("history: duplicate sequence number");
        auto it = last_response.find(e.tid);
        if (it != last_response.end() && e.invoke < it->second)
            throw std::invalid_argument("history: thread ops overlap");
        if (it == last_response.end() || e.response > it->second)
            last_response[e.tid] = e.response;
    }
}

inline std::string encode_state(const std::map<Key, Value>& m) {
    std::string s;
    s.reserve(m.size() * 16);
    for (const auto& [k, v] : m) {
        s.append(reinterpret_cast<const char*>(&k), sizeof(k));
        s.append(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    return s;
}

struct WgSearch {
    const History& h;
    std::unordered_set<std::string> failed; // memo: (mask, state) pairs with no extension

    bool search(std::uint32_t mask, std::map<Key, Value>& state) {
        const auto n = static_cast<std::uint32_t>(h.size());
        if (mask == (1u << n) - 1) return true;
        std::string memo_key;
        memo_key.append(reinterpret_cast<const char*>(&mask), sizeof(mask));
        memo_key += encode_state(state);
        if (failed.count(memo_key)) return false;

        // Earliest response among pending ops bounds which may linearize next.
        std::uint64_t min_response = ~0ull;
        for (std::uint32_t i = 0; i < n; ++i)
            if (!(mask & (1u << i)))
                min_response = std::min(min_response, h[i].response);

        for (std::uint32_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) continue;
            const Event& e = h[i];
            if (e.invoke > min_response) continue; // a pending op strictly precedes it
            // Every op returns the key's current binding (or absent), so the
            // recorded result must equal the state's view at this point.
            auto it = state.find(e.key);
            std::optional<Value> expected =
                it == state.end() ? std::nullopt : std::optional<Value>(it->second);
            if (e.result != expected) continue;
            std::optional<Value> saved;
            if (e.op == OpKind::Insert) {
                if (it != state.end()) {
                    saved = it->second;
                    it->second = e.arg;
                } else {
                    state.emplace(e.key, e.arg);
                }
            } else if (e.op == OpKind::Erase && it != state.end()) {
                saved = it->second;
                state.erase(it);
            }
            if (search(mask | (1u << i), state)) return true;
            // Undo.
            if (e.op == OpKind::Insert) {
                if (saved)
                    state[e.key] = *saved;
                else
                    state.erase(e.key);
            } else if (e.op == OpKind::Erase && saved) {
                state.emplace(e.key, *saved);
            }
        }
        failed.insert(std::move(memo_key));
        return false;
    }
};

} // namespace detail

/// Wing-Gong style exhaustive linearizability check: searches the linear
/// extensions of the real-time order for one whose sequential execution on
/// OracleSet reproduces every recorded result. Histories are limited to 24
/// events (12 operations). Malformed histories are rejected.
inline bool check_linearizable(const History& h) {
    if (h.size() > 12)
        throw std::invalid_argument("history: more than 24 events");
    detail::validate_history(h);
    std::map<Key, Value> state;
    detail::WgSearch wg{h, {}};
    return wg.search(0, state);
}

// --- differential testing ---

struct DiffOp {
    OpKind op;
    Key key;
    Value arg;
    std::optional<Value> tree_result;
    std::optional<Value> oracle_result;
};

struct DiffResult {
    bool pass = true;
    std::vector<DiffOp> failing_prefix; // minimal prefix ending at the divergence
    std::string message;
};

namespace detail {

inline DiffOp draw_op(std::mt19937_64& rng, Key key_range) {
    DiffOp op;
    std::uint64_t r = rng();
    std::uint64_t kind = r % 10;
    op.op = kind < 4 ? OpKind::Insert : (kind < 7 ? OpKind::Erase : OpKind::Lookup);
    op.key = rng() % key_range;
    op.arg = rng();
    return op;
}

template <class Sut>
inline bool replay_diverges(Sut& sut, std::vector<DiffOp>& ops) {
    OracleSet oracle;
    for (auto& op : ops) {
        switch (op.op) {
        case OpKind::Insert:
            op.tree_result = sut.insert(op.key, op.arg);
            op.oracle_result = oracle.insert(op.key, op.arg);
            break;
        case OpKind::Erase:
            op.tree_result = sut.erase(op.key);
            op.oracle_result = oracle.erase(op.key);
            break;
        case OpKind::Lookup:
            op.tree_result = sut.lookup(op.key);
            op.oracle_result = oracle.lookup(op.key);
            break;
        }
        if (op.tree_result != op.oracle_result) return true;
    }
    return false;
}

} // namespace detail

/// Single-threaded differential run of `op_count` seeded random operations
/// against the sequential oracle. On divergence the returned trace holds the
/// minimal failing prefix, confirmed minimal by replaying the next-shorter
/// prefix.
template <class MakeSut>
DiffResult differential_run(std::uint64_t seed, std::uint64_t op_count, Key key_range,
                            MakeSut make_sut) {
    DiffResult res;
    std::mt19937_64 rng(seed);
    auto sut = make_sut();
    OracleSet oracle;
    std::vector<DiffOp> trace;
    trace.reserve(std::min<std::uint64_t>(op_count, 1 << 20));
    for (std::uint64_t i = 0; i < op_count; ++i) {
        DiffOp op = detail::draw_op(rng, key_range);
        switch (op.op) {
        case OpKind::Insert:
            op.tree_result = sut.insert(op.key, op.arg);
            op.oracle_result = oracle.insert(op.key, op.arg);
            break;
        case OpKind::Erase:
            op.tree_result = sut.erase(op.key);
            op.oracle_result = oracle.erase(op.key);
            break;
        case OpKind::Lookup:
            op.tree_result = sut.lookup(op.key);
            op.oracle_result = oracle.lookup(op.key);
            break;
        }
        trace.push_back(op);
        if (op.tree_result != op.oracle_result) {
            res.pass = false;
            std::ostringstream os;
            os << "divergence at op " << i << ": " << op_name(op.op) << "(" << op.key
               << ")";
            res.message = os.str();
            // The run is deterministic, so the trace so far is the minimal
            // failing prefix; confirm by replaying it without the last op.
            if (trace.size() > 1) {
                std::vector<DiffOp> shorter(trace.begin(), trace.end() - 1);
                auto fresh = make_sut();
                if (detail::replay_diverges(fresh, shorter))
                    res.message += " (warning: divergence not stable under replay)";
            }
            res.failing_prefix = std::move(trace);
            return res;
        }
    }
    return res;
}

} // namespace ist::oracle

#endif
