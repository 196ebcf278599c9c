#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cvrace {

// Fixed-width pool for index-parallel loops. parallel_for blocks until every
// index has run; the caller's thread takes part in the work. Results must be
// written to per-index slots so that output never depends on scheduling.
class ThreadPool {
public:
    // 0 selects std::thread::hardware_concurrency().
    explicit ThreadPool(std::size_t threads = 0);
    ~ThreadPool();

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    [[nodiscard]] std::size_t size() const noexcept { return workers_.size() + 1; }

    // If tasks throw, the exception from the lowest failing index is rethrown.
    void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task);

private:
    void worker_loop();
    void drain();

    std::vector<std::jthread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    std::mutex run_mutex_;

    const std::function<void(std::size_t)>* task_ = nullptr;
    std::size_t count_ = 0;
    std::size_t next_ = 0;
    std::size_t finished_ = 0;
    std::size_t generation_ = 0;
    bool stopping_ = false;
    std::size_t error_index_ = 0;
    std::exception_ptr error_;
};

} // namespace cvrace
