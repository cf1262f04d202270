#ifndef IST_MULTICOUNTER_HPP
#define IST_MULTICOUNTER_HPP

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <new>
#include <thread>

namespace ist {

/// Striped counter; quiescently consistent. Increments land on a per-thread
/// stripe, reads sum one momentary load per stripe, so the result is exact
/// whenever no increment is in flight.
class MultiCounter {
  public:
    explicit MultiCounter(std::uint32_t stripes) : stripe_count_(round_pow2(stripes)) {
        stripes_ = static_cast<Stripe*>(
            ::operator new[](sizeof(Stripe) * stripe_count_, std::align_val_t{64}));
        for (std::uint32_t i = 0; i < stripe_count_; ++i) new (&stripes_[i]) Stripe();
    }

    ~MultiCounter() {
        ::operator delete[](stripes_, std::align_val_t{64});
    }

    MultiCounter(const MultiCounter&) = delete;
    MultiCounter& operator=(const MultiCounter&) = delete;

    void increment() {
        stripes_[thread_stripe()].value.fetch_add(1, std::memory_order_relaxed);
    }

    std::uint64_t read() const {
        std::uint64_t sum = 0;
        for (std::uint32_t i = 0; i < stripe_count_; ++i)
            sum += stripes_[i].value.load(std::memory_order_relaxed);
        return sum;
    }

    std::uint32_t stripes() const { return stripe_count_; }
    std::size_t footprint_bytes() const {
        return sizeof(*this) + sizeof(Stripe) * stripe_count_;
    }

  private:
    struct alignas(64) Stripe {
        std::atomic<std::uint64_t> value{0};
    };

    std::uint32_t thread_stripe() const {
        static std::atomic<std::uint32_t> next{0};
        thread_local std::uint32_t id = next.fetch_add(1, std::memory_order_relaxed);
        // Avalanche so consecutive registration ids spread over stripes.
        std::uint32_t h = id * 0x9e3779b9u;
        h ^= h >> 16;
        return h & (stripe_count_ - 1);
    }

    static std::uint32_t round_pow2(std::uint32_t v) {
        if (v < 1) v = 1;
        std::uint32_t p = 1;
        while (p < v) p <<= 1;
        return p;
    }

    std::uint32_t stripe_count_;
    Stripe* stripes_;
};

} // namespace ist

#endif
