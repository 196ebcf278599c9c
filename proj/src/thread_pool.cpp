#include "cvrace/thread_pool.hpp"

namespace cvrace {

ThreadPool::ThreadPool(std::size_t threads)
{
    if (threads == 0) {
        threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    }
    workers_.reserve(threads - 1);
    for (std::size_t i = 1; i < threads; ++i) {
        workers_.emplace_back([this] { worker_loop(); });
    }
}

ThreadPool::~ThreadPool()
{
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    wake_.notify_all();
}

void ThreadPool::drain()
{
    for (;;) {
        std::size_t index = 0;
        const std::function<void(std::size_t)>* task = nullptr;
        {
            std::lock_guard lock(mutex_);
            if (task_ == nullptr || next_ >= count_) {
                return;
            }
            index = next_++;
            task = task_;
        }
        std::exception_ptr failure;
        try {
            (*task)(index);
        } catch (...) {
            failure = std::current_exception();
        }
        std::lock_guard lock(mutex_);
        if (failure && (!error_ || index < error_index_)) {
            error_ = failure;
            error_index_ = index;
        }
        if (++finished_ == count_) {
            done_.notify_all();
        }
    }
}

void ThreadPool::worker_loop()
{
    std::size_t seen = 0;
    for (;;) {
        {
            std::unique_lock lock(mutex_);
            wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
            if (stopping_) {
                return;
            }
            seen = generation_;
        }
        drain();
    }
}

void ThreadPool::parallel_for(std::size_t count, const std::function<void(std::size_t)>& task)
{
    if (count == 0) {
        return;
    }
    if (workers_.empty() || count == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            task(i);
        }
        return;
    }
    std::lock_guard run_lock(run_mutex_);
    {
        std::lock_guard lock(mutex_);
        task_ = &task;
        count_ = count;
        next_ = 0;
        finished_ = 0;
        error_ = nullptr;
        ++generation_;
    }
    wake_.notify_all();
    drain();
    std::exception_ptr error;
    {
        std::unique_lock lock(mutex_);
        done_.wait(lock, [&] { return finished_ == count_; });
        task_ = nullptr;
        error = error_;
        error_ = nullptr;
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace cvrace
