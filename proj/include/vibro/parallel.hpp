#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vibro {

// Worker count: VIBRO_THREADS caps it, otherwise machine parallelism.
inline unsigned thread_count() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("VIBRO_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return hw;
}

namespace detail {

inline thread_local unsigned tl_worker_index = 0;
inline thread_local bool tl_in_parallel = false;

// Persistent pool: worker 0 is the calling thread, workers 1..N-1 live here.
// Keeping threads alive avoids per-call stack setup and allocator churn,
// which dominates on sandboxed kernels.
class ThreadPool {
  public:
    static ThreadPool& instance() {
        static ThreadPool pool(thread_count());
        return pool;
    }

    unsigned width() const { return width_; }

    // fn(worker_id) runs on every worker including the caller (id 0) until it
    // returns; fn must internally pull work from a shared queue.
    void run(const std::function<void(unsigned)>& fn) {
        {
            std::unique_lock lock(mu_);
            job_ = &fn;
            pending_ = static_cast<int>(threads_.size());
            ++generation_;
        }
        cv_.notify_all();
        tl_in_parallel = true;
        tl_worker_index = 0;
        fn(0);
        tl_in_parallel = false;
        std::unique_lock lock(mu_);
        done_cv_.wait(lock, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

  private:
    explicit ThreadPool(unsigned n) : width_(n == 0 ? 1 : n) {
        for (unsigned w = 1; w < width_; ++w) {
            threads_.emplace_back([this, w] {
                std::uint64_t seen = 0;
                for (;;) {
                    const std::function<void(unsigned)>* job = nullptr;
                    {
                        std::unique_lock lock(mu_);
                        cv_.wait(lock, [&] { return generation_ != seen; });
                        seen = generation_;
                        job = job_;
                    }
                    if (!job) continue;
                    tl_in_parallel = true;
                    tl_worker_index = w;
                    (*job)(w);
                    tl_in_parallel = false;
                    {
                        std::unique_lock lock(mu_);
                        if (--pending_ == 0) done_cv_.notify_all();
                    }
                }
            });
            threads_.back().detach();
        }
    }

    unsigned width_;
    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(unsigned)>* job_ = nullptr;
    std::uint64_t generation_ = 0;
    int pending_ = 0;
};

} // namespace detail

// Index of the current worker inside a parallel region (0 outside).
inline unsigned worker_index() { return detail::tl_worker_index; }

inline unsigned max_workers() { return detail::ThreadPool::instance().width(); }

// Runs fn(block_index, begin, end) over fixed-size blocks of [0, n).
// Block boundaries depend only on (n, block_size), never on the worker count,
// so callers that reduce per-block results in block order get identical bytes
// at any VIBRO_THREADS setting. Blocks are pulled from an atomic counter by a
// persistent pool; nested calls degrade to serial execution.
inline void parallel_for_blocks(std::size_t n, std::size_t block_size,
                                const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (block_size == 0) block_size = 1;
    const std::size_t n_blocks = (n + block_size - 1) / block_size;
    auto& pool = detail::ThreadPool::instance();
    if (pool.width() <= 1 || n_blocks <= 1 || detail::tl_in_parallel) {
        for (std::size_t b = 0; b < n_blocks; ++b)
            fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        return;
    }
    std::atomic<std::size_t> next{0};
    pool.run([&](unsigned) {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        }
    });
}

// Element-wise convenience; results must be written to disjoint slots.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t block = std::max<std::size_t>(1, n / (4 * std::max(1u, thread_count())));
    parallel_for_blocks(n, block, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
}

} // namespace vibro
