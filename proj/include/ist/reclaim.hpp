#ifndef IST_RECLAIM_HPP
#define IST_RECLAIM_HPP

#include <atomic>
#include <cassert>
#include <cstdint>
#include <cstdlib>
#include <unordered_map>
#include <vector>

#ifdef IST_RECLAIM_CHECKS
#include <mutex>
#include <stdexcept>
#include <unordered_set>
#endif

namespace ist {

/// Epoch-based deferred reclamation.
///
/// Threads bracket every traversal with a Guard. Retired objects are kept on
/// the retiring thread's limbo list, tagged with the epoch at retirement, and
/// freed once the global epoch has advanced twice past it. The epoch advances
/// only when every pinned thread has caught up, so no object is freed while a
/// guard taken before its retirement is still live.
class Domain {
  public:
    Domain() : serial_(next_serial_.fetch_add(1, std::memory_order_relaxed)) {
        if (const char* v = std::getenv("IST_EPOCH_EAGER"); v && v[0] == '1')
            eager_advance_ = true;
    }

    ~Domain() {
        Record* r = records_.load(std::memory_order_acquire);
        while (r) {
            assert(r->pin_depth == 0 && "domain destroyed with a live guard");
            for (std::size_t i = r->limbo_head; i < r->limbo.size(); ++i) {
                r->limbo[i].deleter(r->limbo[i].object);
                freed_.fetch_add(1, std::memory_order_relaxed);
            }
            Record* next = r->next;
            delete r;
            r = next;
        }
    }

    Domain(const Domain&) = delete;
    Domain& operator=(const Domain&) = delete;

    void retire(void* object, void (*deleter)(void*)) {
        Record* rec = record();
        assert(rec->pin_depth > 0 && "retire outside of a guard");
#ifdef IST_RECLAIM_CHECKS
        {
            std::lock_guard<std::mutex> lk(check_mu_);
            if (!pending_.insert(object).second)
                throw std::logic_error("double retire");
        }
#endif
        rec->limbo.push_back({object, deleter, epoch_.load(std::memory_order_seq_cst)});
        retired_.fetch_add(1, std::memory_order_relaxed);
        if (eager_advance_ || ++rec->retire_tick >= kAdvancePeriod) {
            rec->retire_tick = 0;
            try_advance();
            drain(rec);
        }
    }

    /// Attempts one epoch advance and frees whatever became safe on the
    /// calling thread's limbo list. Exposed for tests and shutdown paths.
    void flush() {
        Record* rec = record();
        try_advance();
        drain(rec);
    }

    std::uint64_t epoch() const { return epoch_.load(std::memory_order_acquire); }
    std::uint64_t retired_count() const { return retired_.load(std::memory_order_relaxed); }
    std::uint64_t freed_count() const { return freed_.load(std::memory_order_relaxed); }
    std::uint64_t limbo_size() const {
        std::uint64_t n = 0;
        for (Record* r = records_.load(std::memory_order_acquire); r; r = r->next)
            n += r->limbo.size() - r->limbo_head;
        return n;
    }

  private:
    friend class Guard;

    static constexpr std::uint64_t kQuiescent = ~0ull;
    static constexpr int kAdvancePeriod = 256;

    struct Entry {
        void* object;
        void (*deleter)(void*);
        std::uint64_t epoch;
    };

    struct alignas(64) Record {
        std::atomic<std::uint64_t> reservation{kQuiescent};
        Record* next = nullptr;
        std::uint32_t pin_depth = 0;
        std::uint32_t retire_tick = 0;
        // Entries carry non-decreasing epochs, so the freeable ones form a
        // prefix; limbo_head marks how far draining has advanced.
        std::vector<Entry> limbo;
        std::size_t limbo_head = 0;
    };

    Record* record() {
        struct Cache {
            std::uint64_t serial = 0;
            Record* rec = nullptr;
            std::unordered_map<std::uint64_t, Record*> cold;
        };
        thread_local Cache cache;
        if (cache.serial == serial_) return cache.rec;
        auto it = cache.cold.find(serial_);
        Record* rec;
        if (it != cache.cold.end()) {
            rec = it->second;
        } else {
            rec = new Record();
            Record* head = records_.load(std::memory_order_relaxed);
            do {
                rec->next = head;
            } while (!records_.compare_exchange_weak(head, rec, std::memory_order_release,
                                                     std::memory_order_relaxed));
            cache.cold.emplace(serial_, rec);
        }
        cache.serial = serial_;
        cache.rec = rec;
        return rec;
    }

    void try_advance() {
        std::uint64_t e = epoch_.load(std::memory_order_seq_cst);
        for (Record* r = records_.load(std::memory_order_acquire); r; r = r->next) {
            std::uint64_t res = r->reservation.load(std::memory_order_seq_cst);
            if (res != kQuiescent && res != e) return; // a pinned thread lags behind
        }
        epoch_.compare_exchange_strong(e, e + 1, std::memory_order_seq_cst);
    }

    void drain(Record* rec) {
        std::uint64_t e = epoch_.load(std::memory_order_acquire);
        if (e < 2) return;
        std::uint64_t safe_before = e - 2;
        auto& limbo = rec->limbo;
        std::size_t& head = rec->limbo_head;
        while (head < limbo.size() && limbo[head].epoch <= safe_before) {
#ifdef IST_RECLAIM_CHECKS
            {
                std::lock_guard<std::mutex> lk(check_mu_);
                pending_.erase(limbo[head].object);
            }
#endif
            limbo[head].deleter(limbo[head].object);
            freed_.fetch_add(1, std::memory_order_relaxed);
            ++head;
        }
        if (head == limbo.size()) {
            limbo.clear();
            head = 0;
        } else if (head > 4096 && head > limbo.size() / 2) {
            limbo.erase(limbo.begin(), limbo.begin() + static_cast<std::ptrdiff_t>(head));
            head = 0;
        }
    }

    std::atomic<std::uint64_t> epoch_{0};
    std::atomic<Record*> records_{nullptr};
    std::atomic<std::uint64_t> retired_{0};
    std::atomic<std::uint64_t> freed_{0};
    bool eager_advance_ = false;
    std::uint64_t serial_;
    static inline std::atomic<std::uint64_t> next_serial_{1};

#ifdef IST_RECLAIM_CHECKS
    std::mutex check_mu_;
    std::unordered_set<void*> pending_;
#endif
};

/// RAII epoch pin. Nestable within a thread; only the outermost pin touches
/// the reservation word.
class Guard {
  public:
    explicit Guard(Domain& d) : domain_(d), rec_(d.record()) {
        if (rec_->pin_depth++ == 0) {
            std::uint64_t e = domain_.epoch_.load(std::memory_order_seq_cst);
            rec_->reservation.store(e, std::memory_order_seq_cst);
        }
    }

    ~Guard() {
        assert(rec_->pin_depth > 0 && "unpin without pin");
        if (--rec_->pin_depth == 0)
            rec_->reservation.store(Domain::kQuiescent, std::memory_order_release);
    }

    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

  private:
    Domain& domain_;
    Domain::Record* rec_;
};

} // namespace ist

#endif
