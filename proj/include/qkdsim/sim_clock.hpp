#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace qkdsim {

// Simulated time in integer milliseconds. Nothing in the simulator reads the
// wall clock; time advances only through explicit waits and modeled delays.
class SimClock {
public:
    uint64_t now_ms() const { return now_; }
    void advance(uint64_t ms) { now_ += ms; }

private:
    uint64_t now_ = 0;
};

// Pending simulated-time callbacks (producer refills, deferred script steps).
// Blocking waits drain events that fall due before their deadline.
class EventQueue {
public:
    void schedule(uint64_t at_ms, std::function<void()> fn) {
        queue_.emplace(at_ms, std::move(fn));
    }

    bool empty() const { return queue_.empty(); }

    // Earliest pending event time, or UINT64_MAX when none.
    uint64_t next_time() const {
        return queue_.empty() ? UINT64_MAX : queue_.begin()->first;
    }

    // Runs every event due at or before `clock.now_ms()`.
    void run_due(SimClock& clock) {
        while (!queue_.empty() && queue_.begin()->first <= clock.now_ms()) {
            auto it = queue_.begin();
            auto fn = std::move(it->second);
            queue_.erase(it);
            fn();
        }
    }

    // Advances the clock to the next event (if it falls before `deadline_ms`)
    // and runs it. Returns false when no event fires before the deadline.
    bool advance_to_next(SimClock& clock, uint64_t deadline_ms) {
        if (queue_.empty() || queue_.begin()->first > deadline_ms) return false;
        uint64_t t = queue_.begin()->first;
        if (t > clock.now_ms()) clock.advance(t - clock.now_ms());
        run_due(clock);
        return true;
    }

private:
    std::multimap<uint64_t, std::function<void()>> queue_;
};

// Append-only run log. Modules record operational events (key-source
// switches, downgrades, burned relay bits, fault detections); the scenario
// report and the stderr logger both read from here.
class EventLog {
public:
    struct Entry {
        uint64_t time_ms;
        std::string category;
        std::string message;
    };

    void record(uint64_t time_ms, const std::string& category, const std::string& message) {
        entries_.push_back({time_ms, category, message});
    }

    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

}  // namespace qkdsim
