#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mlwb {

/// One item of a session's event stream. `seq` starts at 1 and increases by one
/// per published event; a subscriber sees gaps only where batch_end events
/// were coalesced.
struct ServiceEvent {
    std::uint64_t seq = 0;
    /// "train", "field_flag", "model_changed", "dataset_changed", "mode_changed".
    std::string type;
    nlohmann::json data;

    bool is_batch_end() const;
};

nlohmann::json to_json(const ServiceEvent& e);

/// Server-sent event framing: id, event and data lines, blank-line terminated.
std::string to_sse(const ServiceEvent& e);

class EventSubscription {
public:
    explicit EventSubscription(std::size_t batch_capacity) : capacity_(batch_capacity) {}

    /// Waits up to `timeout`; nullopt on timeout or once closed and drained.
    std::optional<ServiceEvent> next(std::chrono::milliseconds timeout);
    bool closed() const;
    /// batch_end events discarded so far because the subscriber fell behind.
    std::size_t coalesced() const;

private:
    friend class EventHub;
    void push(const ServiceEvent& e);
    void close();

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<ServiceEvent> queue_;
    std::size_t batch_events_ = 0;
    std::size_t capacity_;
    std::size_t coalesced_ = 0;
    bool closed_ = false;
};

/// Ordered fan-out to any number of subscribers. Each subscriber buffers at most
/// `batch_capacity` batch_end events; beyond that the oldest buffered batch_end
/// is dropped. Other events are never dropped.
class EventHub {
public:
    explicit EventHub(std::size_t batch_capacity = 256) : capacity_(batch_capacity) {}

    std::shared_ptr<EventSubscription> subscribe();
    /// Returns the assigned sequence number.
    std::uint64_t publish(std::string type, nlohmann::json data);
    /// Ends every subscription; later publishes are ignored.
    void close();
    std::uint64_t last_seq() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::weak_ptr<EventSubscription>> subscribers_;
    std::uint64_t seq_ = 0;
    std::size_t capacity_;
    bool closed_ = false;
};

}  // namespace mlwb
