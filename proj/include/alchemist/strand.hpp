#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <thread>
#include <type_traits>

namespace alchemist {

/// Single-threaded job queue. Everything posted to one strand runs in order
/// on its own thread, so state owned by the strand needs no further locking.
class Strand {
public:
    Strand() : thread_([this](std::stop_token st) { loop(st); }) {}
    Strand(const Strand&) = delete;
    Strand& operator=(const Strand&) = delete;
    ~Strand() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        cv_.notify_all();
    }

    template <class F>
    auto submit(F&& fn) -> std::future<std::invoke_result_t<F>> {
        using R = std::invoke_result_t<F>;
        auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
        auto result = task->get_future();
        {
            std::lock_guard lock(mutex_);
            jobs_.emplace_back([task] { (*task)(); });
        }
        cv_.notify_one();
        return result;
    }

    /// Runs fn on the strand and waits; exceptions propagate to the caller.
    template <class F>
    auto call(F&& fn) -> std::invoke_result_t<F> {
        return submit(std::forward<F>(fn)).get();
    }

private:
    void loop(std::stop_token) {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
                if (jobs_.empty()) return;
                job = std::move(jobs_.front());
                jobs_.pop_front();
            }
            job();
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> jobs_;
    bool stopping_ = false;
    std::jthread thread_;
};

}  // namespace alchemist
