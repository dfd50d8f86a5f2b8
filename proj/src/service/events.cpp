#include "mlwb/service/events.hpp"

#include <algorithm>

namespace mlwb {

bool ServiceEvent::is_batch_end() const {
    return type == "train" && data.value("kind", std::string{}) == "batch_end";
}

nlohmann::json to_json(const ServiceEvent& e) {
    return {{"format_version", 1}, {"seq", e.seq}, {"type", e.type}, {"data", e.data}};
}

std::string to_sse(const ServiceEvent& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + to_json(e).dump() + "\n\n";
}

std::optional<ServiceEvent> EventSubscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) {
        return std::nullopt;
    }
    ServiceEvent e = std::move(queue_.front());
    queue_.pop_front();
    if (e.is_batch_end()) {
        --batch_events_;
    }
    return e;
}

bool EventSubscription::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::size_t EventSubscription::coalesced() const {
    std::lock_guard lock(mutex_);
    return coalesced_;
}

void EventSubscription::push(const ServiceEvent& e) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return;
        }
        if (e.is_batch_end()) {
            if (batch_events_ >= capacity_) {
                auto oldest = std::find_if(queue_.begin(), queue_.end(), [](const auto& q) { return q.is_batch_end(); });
                queue_.erase(oldest);
                --batch_events_;
                ++coalesced_;
            }
            ++batch_events_;
        }
        queue_.push_back(e);
    }
    cv_.notify_all();
}

void EventSubscription::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

std::shared_ptr<EventSubscription> EventHub::subscribe() {
    auto sub = std::make_shared<EventSubscription>(capacity_);
    std::lock_guard lock(mutex_);
    if (closed_) {
        sub->close();
    } else {
        subscribers_.push_back(sub);
    }
    return sub;
}

std::uint64_t EventHub::publish(std::string type, nlohmann::json data) {
    // Holding the hub lock while pushing keeps the order identical for every subscriber.
    std::lock_guard lock(mutex_);
    if (closed_) {
        return seq_;
    }
    const ServiceEvent e{++seq_, std::move(type), std::move(data)};
    std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
    for (const auto& w : subscribers_) {
        if (auto s = w.lock()) {
            s->push(e);
        }
    }
    return e.seq;
}

void EventHub::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    for (const auto& w : subscribers_) {
        if (auto s = w.lock()) {
            s->close();
        }
    }
    subscribers_.clear();
}

std::uint64_t EventHub::last_seq() const {
    std::lock_guard lock(mutex_);
    return seq_;
}

}  // namespace mlwb
