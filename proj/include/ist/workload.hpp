#ifndef IST_WORKLOAD_HPP
#define IST_WORKLOAD_HPP

#include <atomic>
#include <barrier>
#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

#include "ist/audit.hpp"
#include "ist/tree.hpp"
#include "ist/zipf.hpp"

namespace ist::bench {

enum class Dist { Uniform, Zipf };

/// Benchmark configuration mirroring the microbenchmark methodology:
/// prefill the tree to `size`, then run `threads` workers for `duration_sec`,
/// each drawing an op type from `update_ratio` (updates split evenly between
/// inserts and deletes) and a key from `dist`.
struct WorkloadSpec {
    std::uint64_t size = 1'000'000;
    std::uint32_t threads = 1;
    double update_ratio = 0.0;
    double duration_sec = 3.0;
    std::uint64_t ops = 0; // per-thread op count; 0 means run for duration_sec
    Dist dist = Dist::Uniform;
    double theta = 0.5;
    std::uint64_t key_range = 2'000'000;
    std::uint64_t seed = 1;
    std::uint32_t trials = 1;
    bool collaborative = true;
    double warmup_sec = 0.0;
    bool pin = false;

    void validate() const {
        if (threads < 1) throw std::invalid_argument("threads must be >= 1");
        if (size > key_range) throw std::invalid_argument("size must be <= key-range");
        if (key_range < 1) throw std::invalid_argument("key-range must be >= 1");
        if (update_ratio < 0.0 || update_ratio > 1.0)
            throw std::invalid_argument("update-ratio must be in [0, 1]");
        if (dist == Dist::Zipf && (theta <= 0.0 || theta >= 1.0))
            throw std::invalid_argument("theta must be in (0, 1)");
        if (duration_sec <= 0.0 && ops == 0)
            throw std::invalid_argument("duration must be > 0");
        if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    }
};

struct TrialReport {
    double throughput_ops_per_us = 0.0;
    std::uint64_t lookups = 0;
    std::uint64_t inserts = 0;
    std::uint64_t deletes = 0;
    std::uint64_t insert_hits = 0; // inserts that added a new key
    std::uint64_t delete_hits = 0; // deletes that removed a key
    double avg_leaf_depth = 0.0;
    std::uint64_t max_leaf_depth = 0;
    std::uint64_t node_count = 0;
    std::uint64_t empty_count = 0;
    std::uint64_t footprint_bytes = 0;
    double overhead_ratio = 0.0; // footprint / (16 bytes * keys)
    std::uint64_t root_rebuilds = 0;
    double wall_sec = 0.0;
    std::uint64_t final_keys = 0;
    std::uint64_t final_keys_hash = 0; // order-sensitive hash of the final key set
    bool audit_ok = false;
    std::string audit_error;
};

namespace detail {

inline void pin_to_cpu(std::uint32_t index) {
#ifdef __linux__
    unsigned ncpu = std::thread::hardware_concurrency();
    if (ncpu == 0) return;
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(index % ncpu, &set);
    pthread_setaffinity_np(pthread_self(), sizeof(set), &set); // best effort
#else
    (void)index;
#endif
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t tid) {
    std::uint64_t x = seed ^ (trial * 0x9e3779b97f4a7c15ull) ^ (tid * 0xbf58476d1ce4e5b9ull);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

struct KeySource {
    Dist dist;
    std::uint64_t key_range;
    std::shared_ptr<ZipfGenerator> zipf; // shared precomputed constants
    std::mt19937_64 rng;

    Key next() {
        if (dist == Dist::Zipf) return zipf->next(rng);
        return 1 + rng() % key_range;
    }
};

// Per-key net set transitions: +1 per insert that added the key, -1 per
// delete that removed it. Interleaving-independent, so merged per-thread
// journals yield the exact final key set.
using Journal = std::unordered_map<Key, std::int64_t>;

} // namespace detail

inline std::vector<TrialReport> run_benchmark(const WorkloadSpec& spec) {
    spec.validate();
    std::vector<TrialReport> reports;
    reports.reserve(spec.trials);

    for (std::uint32_t trial = 0; trial < spec.trials; ++trial) {
        TreeConfig cfg;
        cfg.collaborative = spec.collaborative;
        Tree tree(cfg);

        std::shared_ptr<ZipfGenerator> zipf;
        if (spec.dist == Dist::Zipf)
            zipf = std::make_shared<ZipfGenerator>(spec.key_range, spec.theta);

        // Prefill: draw keys from the workload distribution and insert until
        // the tree holds `size` distinct keys.
        std::atomic<std::uint64_t> prefilled{0};
        std::vector<detail::Journal> journals(spec.threads);
        {
            std::vector<std::thread> workers;
            workers.reserve(spec.threads);
            for (std::uint32_t t = 0; t < spec.threads; ++t) {
                workers.emplace_back([&, t] {
                    if (spec.pin) detail::pin_to_cpu(t);
                    detail::KeySource src{spec.dist, spec.key_range, zipf,
                                          std::mt19937_64(detail::mix_seed(
                                              spec.seed, trial, 0x10000 + t))};
                    auto& journal = journals[t];
                    while (prefilled.load(std::memory_order_relaxed) < spec.size) {
                        Key k = src.next();
                        if (!tree.insert(k, k).has_value()) {
                            ++journal[k];
                            prefilled.fetch_add(1, std::memory_order_relaxed);
                        }
                    }
                });
            }
            for (auto& w : workers) w.join();
        }

        // Measured phase.
        std::atomic<bool> stop{false};
        std::barrier start_barrier(static_cast<std::ptrdiff_t>(spec.threads) + 1);
        struct alignas(64) Counters {
            std::uint64_t lookups = 0, inserts = 0, deletes = 0;
            std::uint64_t insert_hits = 0, delete_hits = 0;
        };
        std::vector<Counters> counters(spec.threads);
        std::vector<std::thread> workers;
        workers.reserve(spec.threads);
        for (std::uint32_t t = 0; t < spec.threads; ++t) {
            workers.emplace_back([&, t] {
                if (spec.pin) detail::pin_to_cpu(t);
                detail::KeySource src{spec.dist, spec.key_range, zipf,
                                      std::mt19937_64(
                                          detail::mix_seed(spec.seed, trial, t))};
                std::mt19937_64 op_rng(detail::mix_seed(spec.seed, trial, 0x20000 + t));
                auto& ctr = counters[t];
                auto& journal = journals[t];
                start_barrier.arrive_and_wait();
                if (spec.warmup_sec > 0.0) {
                    auto warm_end = std::chrono::steady_clock::now() +
                                    std::chrono::duration<double>(spec.warmup_sec);
                    while (std::chrono::steady_clock::now() < warm_end) {
                        Key k = src.next();
                        double r = static_cast<double>(op_rng() >> 11) * 0x1.0p-53;
                        if (r < spec.update_ratio / 2) {
                            if (!tree.insert(k, k).has_value()) ++journal[k];
                        } else if (r < spec.update_ratio) {
                            if (tree.erase(k).has_value()) --journal[k];
                        } else {
                            tree.lookup(k);
                        }
                    }
                }
                auto deadline = std::chrono::steady_clock::now() +
                                std::chrono::duration<double>(spec.duration_sec);
                std::uint32_t check = 0;
                std::uint64_t done = 0;
                for (;;) {
                    if (spec.ops > 0) {
                        if (done++ >= spec.ops) break;
                    } else if ((++check & 0x3ff) == 0) {
                        if (stop.load(std::memory_order_relaxed) ||
                            std::chrono::steady_clock::now() >= deadline)
                            break;
                    }
                    Key k = src.next();
                    double r = static_cast<double>(op_rng() >> 11) * 0x1.0p-53;
                    if (r < spec.update_ratio / 2) {
                        ++ctr.inserts;
                        if (!tree.insert(k, k).has_value()) {
                            ++ctr.insert_hits;
                            ++journal[k];
                        }
                    } else if (r < spec.update_ratio) {
                        ++ctr.deletes;
                        if (tree.erase(k).has_value()) {
                            ++ctr.delete_hits;
                            --journal[k];
                        }
                    } else {
                        ++ctr.lookups;
                        tree.lookup(k);
                    }
                }
                stop.store(true, std::memory_order_relaxed);
            });
        }
        auto t0 = std::chrono::steady_clock::now();
        start_barrier.arrive_and_wait();
        for (auto& w : workers) w.join();
        auto t1 = std::chrono::steady_clock::now();

        TrialReport rep;
        rep.wall_sec = std::chrono::duration<double>(t1 - t0).count() - spec.warmup_sec;
        for (const auto& c : counters) {
            rep.lookups += c.lookups;
            rep.inserts += c.inserts;
            rep.deletes += c.deletes;
            rep.insert_hits += c.insert_hits;
            rep.delete_hits += c.delete_hits;
        }
        double total_ops =
            static_cast<double>(rep.lookups + rep.inserts + rep.deletes);
        rep.throughput_ops_per_us = total_ops / (rep.wall_sec * 1e6);

        DepthStats ds = tree.depth_stats();
        rep.avg_leaf_depth = ds.avg_leaf_depth;
        rep.max_leaf_depth = ds.max_leaf_depth;
        rep.node_count = ds.node_count;
        rep.empty_count = ds.empty_count;
        rep.footprint_bytes = tree.footprint_bytes();
        rep.root_rebuilds = tree.root_rebuilds();

        // Post-run audit: structural invariants plus exact set conservation
        // from the merged per-thread journals.
        auto audit = audit::check_structure(tree);
        rep.final_keys = audit.keys.size();
        std::uint64_t h = 1469598103934665603ull;
        for (Key k : audit.keys) {
            h ^= k;
            h *= 1099511628211ull;
        }
        rep.final_keys_hash = h;
        rep.overhead_ratio =
            rep.final_keys
                ? static_cast<double>(rep.footprint_bytes) / (16.0 * rep.final_keys)
                : 0.0;
        rep.audit_ok = audit.ok;
        rep.audit_error = audit.error;
        if (rep.audit_ok) {
            detail::Journal merged;
            for (const auto& j : journals)
                for (const auto& [k, d] : j) merged[k] += d;
            std::uint64_t expected = 0;
            for (const auto& [k, d] : merged) {
                if (d != 0 && d != 1) {
                    rep.audit_ok = false;
                    rep.audit_error = "conservation: impossible net transition";
                    break;
                }
                expected += static_cast<std::uint64_t>(d);
            }
            if (rep.audit_ok && expected != rep.final_keys) {
                rep.audit_ok = false;
                rep.audit_error = "conservation: final key set does not match journals";
            }
            if (rep.audit_ok) {
                for (Key k : audit.keys) {
                    auto it = merged.find(k);
                    if (it == merged.end() || it->second != 1) {
                        rep.audit_ok = false;
                        rep.audit_error = "conservation: unexpected key in final tree";
                        break;
                    }
                }
            }
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

} // namespace ist::bench

#endif
