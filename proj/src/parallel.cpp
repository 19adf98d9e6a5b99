#include "eg/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

namespace eg {

namespace {

std::atomic<int> g_max_threads{1};

// Long-lived worker pool. One task (a set of contiguous chunks over [0, n))
// is active at a time; the submitting thread works alongside the pool.
// Chunk claims happen under the mutex, so a worker that wakes late for an
// already-finished generation simply finds nothing to claim.
class Pool {
public:
    static Pool& instance() {
        static Pool* pool = new Pool();  // leaked: workers live until process exit
        return *pool;
    }

    void run_chunks(std::size_t n, std::size_t chunks,
                    const std::function<void(std::size_t, std::size_t)>& fn) {
        std::uint64_t gen;
        {
            std::lock_guard<std::mutex> lock(mu_);
            while (workers_ < chunks - 1) {
                std::thread([this] { worker_loop(); }).detach();
                ++workers_;
            }
            task_ = &fn;
            task_n_ = n;
            task_chunks_ = chunks;
            next_chunk_ = 0;
            pending_ = chunks;
            gen = ++generation_;
        }
        cv_.notify_all();

        work_for_generation(gen);

        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [&] { return pending_ == 0; });
        task_ = nullptr;
    }

private:
    Pool() = default;

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [&] { return generation_ != seen; });
                seen = generation_;
            }
            work_for_generation(seen);
        }
    }

    void work_for_generation(std::uint64_t gen) {
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* fn;
            std::size_t begin, end;
            {
                std::lock_guard<std::mutex> lock(mu_);
                if (generation_ != gen || task_ == nullptr || next_chunk_ >= task_chunks_) return;
                std::size_t c = next_chunk_++;
                begin = c * task_n_ / task_chunks_;
                end = (c + 1) * task_n_ / task_chunks_;
                fn = task_;
            }
            if (begin < end) (*fn)(begin, end);
            {
                std::lock_guard<std::mutex> lock(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::size_t workers_ = 0;
    const std::function<void(std::size_t, std::size_t)>* task_ = nullptr;
    std::size_t task_n_ = 0, task_chunks_ = 0, pending_ = 0, next_chunk_ = 0;
    std::uint64_t generation_ = 0;
};

}  // namespace

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }

int max_threads() { return g_max_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t k = static_cast<std::size_t>(g_max_threads.load());
    if (k > n) k = n;
    if (k <= 1) {
        fn(0, n);
        return;
    }
    Pool::instance().run_chunks(n, k, fn);
}

}  // namespace eg
