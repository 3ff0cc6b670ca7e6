#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctem/ctem.hpp"

namespace ctem::service {

struct ServiceOptions {
    std::string config_path;     // empty = built-in defaults
    std::string data_dir = "var/sessions";
    bool debug = false;          // allows ?debug=1 and the advance endpoint
    // Wall milliseconds per engine tick. 0 pins the simulated clock to the
    // wall clock (one tick per tick_minutes).
    int tick_ms = 0;
    std::chrono::seconds idle_timeout{600};
    std::chrono::milliseconds heartbeat{30000};
};

/// Problem raised to the HTTP layer.
struct ApiError {
    int status = 500;
    std::string code;
    std::string message;
    std::string field;
};

ApiError from_failure(const api::Failure& f);

/// One live agent. All engine calls except post_message/post_reaction go
/// through `mutex`; a dedicated actor thread drives respond()/step().
class Session {
public:
    Session(std::string id, std::string persona, api::Engine engine, std::int64_t created_at);
    ~Session();

    const std::string& id() const noexcept { return id_; }
    const std::string& persona_name() const noexcept { return persona_; }
    std::int64_t created_at() const noexcept { return created_at_; }

    void start(const ServiceOptions& opts);
    void stop();

    std::int64_t post_message(const std::string& text, std::optional<double> hint);
    void post_reaction(const std::string& post_id, const std::string& kind, const std::string& text);

    nlohmann::json state(bool debug);
    nlohmann::json timeline();
    nlohmann::json persona();
    /// Throws ApiError 409 while a reply is being generated.
    nlohmann::json replace_persona(const nlohmann::json& patch);
    void advance(int ticks);

    /// Events with seq > cursor, in emission order.
    std::vector<nlohmann::json> events_since(std::uint64_t cursor) const;
    std::uint64_t last_seq() const;

    /// Called (from the actor thread) whenever new events are appended.
    std::uint64_t subscribe(std::function<void()> notify);
    void unsubscribe(std::uint64_t token);

    void touch();
    std::chrono::steady_clock::time_point last_active() const;

    void save(const std::string& dir);
    void restore_events(std::vector<nlohmann::json> events);

private:
    void run(ServiceOptions opts);
    void pump_locked();
    void notify_subscribers();

    std::string id_;
    std::string persona_;
    std::int64_t created_at_;

    mutable std::mutex mutex_; // guards engine_ and events_
    api::Engine engine_;
    std::vector<nlohmann::json> events_;

    std::atomic<bool> generating_{false};
    std::atomic<bool> stopping_{false};
    std::mutex wake_mutex_;
    std::condition_variable wake_;
    bool wake_flag_ = false;
    std::thread actor_;

    mutable std::mutex subs_mutex_;
    std::map<std::uint64_t, std::function<void()>> subscribers_;
    std::uint64_t next_sub_ = 1;

    mutable std::mutex active_mutex_;
    std::chrono::steady_clock::time_point last_active_;
};

class SessionManager {
public:
    explicit SessionManager(ServiceOptions opts);
    ~SessionManager();

    const ServiceOptions& options() const noexcept { return opts_; }

    std::shared_ptr<Session> create(const std::string& persona);
    /// Live session, or one revived from its snapshot; nullptr if unknown.
    std::shared_ptr<Session> find(const std::string& id);

    /// Snapshots and evicts sessions idle longer than the timeout.
    std::size_t persist_idle();
    void persist_all();

private:
    std::shared_ptr<Session> revive(const std::string& id);
    std::string persona_path(const std::string& name) const;
    std::string overrides_for(const std::string& persona, std::int64_t start) const;

    ServiceOptions opts_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::thread reaper_;
    std::atomic<bool> stopping_{false};
    std::mutex reaper_mutex_;
    std::condition_variable reaper_wake_;
};

} // namespace ctem::service
