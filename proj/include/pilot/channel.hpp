/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#pragma once

#include "pilot/error.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

namespace pilot {

/// Wakes a consumer that waits on several channels at once. Every channel
/// sharing the doorbell rings it on send and close.
class Doorbell {
public:
    void ring()
    {
        {
            std::lock_guard lock(mutex_);
            ++generation_;
        }
        cv_.notify_all();
    }

    std::uint64_t generation() const
    {
        std::lock_guard lock(mutex_);
        return generation_;
    }

    /// Blocks until the generation differs from `seen` or the timeout passes.
    template <class Rep, class Period>
    void wait_for(std::uint64_t seen, std::chrono::duration<Rep, Period> timeout)
    {
        std::unique_lock lock(mutex_);
        cv_.wait_for(lock, timeout, [&] { return generation_ != seen; });
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::uint64_t generation_ = 0;
};

/// Ordered, lossless, bounded multi-producer multi-consumer FIFO. A full
/// channel blocks the sender; nothing is ever dropped. Sending after close()
/// throws ChannelClosed; receivers drain what is left and then see nullopt.
template <class T>
class Channel {
public:
    explicit Channel(std::string name, std::size_t capacity,
                     std::shared_ptr<Doorbell> doorbell = nullptr)
        : name_(std::move(name)), capacity_(capacity == 0 ? 1 : capacity),
          doorbell_(std::move(doorbell))
    {
    }

    Channel(const Channel&) = delete;
    Channel& operator=(const Channel&) = delete;

    void send(T value)
    {
        {
            std::unique_lock lock(mutex_);
            not_full_.wait(lock, [&] { return closed_ || queue_.size() < capacity_; });
            if (closed_)
                throw ChannelClosed("send on closed channel '" + name_ + "'");
            queue_.push_back(std::move(value));
        }
        not_empty_.notify_one();
        if (doorbell_)
            doorbell_->ring();
    }

    /// Blocks until a value arrives or the channel is closed and empty.
    std::optional<T> receive()
    {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return closed_ || !queue_.empty(); });
        return pop_locked(lock);
    }

    template <class Rep, class Period>
    std::optional<T> receive_for(std::chrono::duration<Rep, Period> timeout)
    {
        std::unique_lock lock(mutex_);
        not_empty_.wait_for(lock, timeout, [&] { return closed_ || !queue_.empty(); });
        return pop_locked(lock);
    }

    std::optional<T> try_receive()
    {
        std::unique_lock lock(mutex_);
        return pop_locked(lock);
    }

    void close()
    {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        not_empty_.notify_all();
        not_full_.notify_all();
        if (doorbell_)
            doorbell_->ring();
    }

    bool closed() const
    {
        std::lock_guard lock(mutex_);
        return closed_;
    }

    /// Closed and nothing left to receive.
    bool drained() const
    {
        std::lock_guard lock(mutex_);
        return closed_ && queue_.empty();
    }

    std::size_t size() const
    {
        std::lock_guard lock(mutex_);
        return queue_.size();
    }

    std::size_t capacity() const noexcept { return capacity_; }
    const std::string& name() const noexcept { return name_; }

private:
    std::optional<T> pop_locked(std::unique_lock<std::mutex>& lock)
    {
        if (queue_.empty())
            return std::nullopt;
        T value = std::move(queue_.front());
        queue_.pop_front();
        lock.unlock();
        not_full_.notify_one();
        return value;
    }

    std::string name_;
    std::size_t capacity_;
    std::shared_ptr<Doorbell> doorbell_;
    mutable std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<T> queue_;
    bool closed_ = false;
};

/// Convenience constructor mirroring the agent's named bridges.
template <class T>
std::shared_ptr<Channel<T>> channel(std::string name, std::size_t capacity,
                                    std::shared_ptr<Doorbell> doorbell = nullptr)
{
    return std::make_shared<Channel<T>>(std::move(name), capacity, std::move(doorbell));
}

} // namespace pilot
