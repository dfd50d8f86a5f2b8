#pragma once

#include <condition_variable>
#include <cstdio>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <thread>
#include <type_traits>

#include "mlwb/tensor/errors.hpp"

namespace mlwb {

/// Runs submitted commands one at a time, in submission order, on a dedicated
/// thread. Never call `call` from inside a command: it would wait on itself.
class CommandQueue {
public:
    CommandQueue() : worker_([this](std::stop_token) { run(); }) {}
    ~CommandQueue() { stop(); }

    CommandQueue(const CommandQueue&) = delete;
    CommandQueue& operator=(const CommandQueue&) = delete;

    /// Fire and forget; returns false once the queue is stopped.
    bool post(std::function<void()> command) {
        {
            std::lock_guard lock(mutex_);
            if (stopping_) {
                return false;
            }
            commands_.push_back(std::move(command));
        }
        cv_.notify_one();
        return true;
    }

    /// Runs `f` on the queue thread and returns its result (or rethrows).
    template <typename F>
    std::invoke_result_t<F&> call(F f) {
        using R = std::invoke_result_t<F&>;
        auto task = std::make_shared<std::packaged_task<R()>>(std::move(f));
        auto result = task->get_future();
        if (!post([task] { (*task)(); })) {
            throw Error("session is shutting down");
        }
        return result.get();
    }

    bool on_queue_thread() const { return std::this_thread::get_id() == worker_.get_id(); }

    /// Runs what is already queued, then joins. Idempotent.
    void stop() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        cv_.notify_one();
        if (worker_.joinable() && !on_queue_thread()) {
            worker_.join();
        }
    }

private:
    void run() {
        for (;;) {
            std::function<void()> command;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return stopping_ || !commands_.empty(); });
                if (commands_.empty()) {
                    return;
                }
                command = std::move(commands_.front());
                commands_.pop_front();
            }
            try {
                command();
            } catch (const std::exception& e) {
                std::fprintf(stderr, "command failed: %s\n", e.what());
            }
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> commands_;
    bool stopping_ = false;
    std::jthread worker_;
};

}  // namespace mlwb
