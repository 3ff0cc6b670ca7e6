#include "sessions.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace ctem::service {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kKeptEvents = 1000;

std::int64_t wall_seconds()
{
    using namespace std::chrono;
    return duration_cast<seconds>(system_clock::now().time_since_epoch()).count();
}

std::string random_id()
{
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    std::ostringstream ss;
    ss << std::hex << rng() << rng();
    auto s = ss.str();
    s.resize(std::min<std::size_t>(s.size(), 24));
    return s;
}

bool valid_name(const std::string& s)
{
    if (s.empty() || s.size() > 64)
        return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
            return false;
    return true;
}

std::chrono::milliseconds tick_period(const ServiceOptions& opts)
{
    if (opts.tick_ms > 0)
        return std::chrono::milliseconds(opts.tick_ms);
    int minutes = 15;
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_object() && j.contains("tick_minutes") && j["tick_minutes"].is_number_integer())
            minutes = j["tick_minutes"].get<int>();
    }
    return std::chrono::minutes(minutes);
}

void write_file(const std::string& path, const std::string& text)
{
    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out)
            throw std::runtime_error("cannot write " + path);
    }
    fs::rename(tmp, path);
}

} // namespace

ApiError from_failure(const api::Failure& f)
{
    switch (f.status()) {
    case CTEM_ERR_VALIDATION:
    case CTEM_ERR_PARSE:
    case CTEM_ERR_INVALID_ARGUMENT: return {422, "validation-error", f.what(), f.where()};
    case CTEM_ERR_NOT_FOUND: return {404, "not-found", f.what(), f.where()};
    case CTEM_ERR_CONFLICT: return {409, "conflict", f.what(), f.where()};
    default: return {500, ctem_status_name(f.status()), f.what(), f.where()};
    }
}

// ---- Session ------------------------------------------------------------

Session::Session(std::string id, std::string persona, api::Engine engine, std::int64_t created_at)
    : id_(std::move(id)),
      persona_(std::move(persona)),
      created_at_(created_at),
      engine_(std::move(engine)),
      last_active_(std::chrono::steady_clock::now())
{
}

Session::~Session()
{
    stop();
}

void Session::start(const ServiceOptions& opts)
{
    actor_ = std::thread([this, opts] { run(opts); });
}

void Session::stop()
{
    if (stopping_.exchange(true))
        return;
    {
        std::lock_guard lock(wake_mutex_);
        wake_flag_ = true;
    }
    wake_.notify_all();
    if (actor_.joinable())
        actor_.join();
}

void Session::run(ServiceOptions opts)
{
    const auto period = tick_period(opts);
    auto next_tick = std::chrono::steady_clock::now() + period;
    while (!stopping_) {
        {
            std::unique_lock lock(wake_mutex_);
            wake_.wait_until(lock, next_tick, [&] { return wake_flag_; });
            wake_flag_ = false;
        }
        if (stopping_)
            break;
        const bool tick_due = std::chrono::steady_clock::now() >= next_tick;
        try {
            std::lock_guard lock(mutex_);
            if (engine_.pending_inbound() > 0) {
                generating_ = true;
                engine_.respond();
                generating_ = false;
            }
            if (tick_due) {
                generating_ = true;
                engine_.step();
                generating_ = false;
                next_tick += period;
            }
            pump_locked();
        } catch (...) {
            generating_ = false;
            if (tick_due)
                next_tick += period;
        }
        notify_subscribers();
    }
}

void Session::pump_locked()
{
    auto batch = nlohmann::json::parse(engine_.drain_events());
    for (auto& e : batch)
        events_.push_back(std::move(e));
    if (events_.size() > 4 * kKeptEvents)
        events_.erase(events_.begin(), events_.end() - static_cast<std::ptrdiff_t>(kKeptEvents));
}

void Session::notify_subscribers()
{
    std::vector<std::function<void()>> fns;
    {
        std::lock_guard lock(subs_mutex_);
        for (auto& [_, f] : subscribers_)
            fns.push_back(f);
    }
    for (auto& f : fns)
        f();
}

std::uint64_t Session::subscribe(std::function<void()> notify)
{
    std::lock_guard lock(subs_mutex_);
    subscribers_.emplace(next_sub_, std::move(notify));
    return next_sub_++;
}

void Session::unsubscribe(std::uint64_t token)
{
    std::lock_guard lock(subs_mutex_);
    subscribers_.erase(token);
}

std::int64_t Session::post_message(const std::string& text, std::optional<double> hint)
{
    touch();
    std::int64_t id = 0;
    try {
        id = engine_.post_message(text, hint);
    } catch (const api::Failure& f) {
        throw from_failure(f);
    }
    {
        std::lock_guard lock(wake_mutex_);
        wake_flag_ = true;
    }
    wake_.notify_all();
    return id;
}

void Session::post_reaction(const std::string& post_id, const std::string& kind, const std::string& text)
{
    touch();
    try {
        engine_.post_reaction(post_id, kind, text);
    } catch (const api::Failure& f) {
        throw from_failure(f);
    }
    {
        std::lock_guard lock(wake_mutex_);
        wake_flag_ = true;
    }
    wake_.notify_all();
}

nlohmann::json Session::state(bool debug)
{
    touch();
    std::lock_guard lock(mutex_);
    auto j = nlohmann::json::parse(engine_.state_json(debug));
    j["session_id"] = id_;
    return j;
}

nlohmann::json Session::timeline()
{
    touch();
    std::lock_guard lock(mutex_);
    return nlohmann::json::parse(engine_.timeline_json());
}

nlohmann::json Session::persona()
{
    touch();
    std::lock_guard lock(mutex_);
    return nlohmann::json::parse(engine_.persona_json());
}

nlohmann::json Session::replace_persona(const nlohmann::json& patch)
{
    touch();
    if (!patch.is_object())
        throw ApiError{422, "validation-error", "expected a JSON object", "<body>"};
    for (auto it = patch.begin(); it != patch.end(); ++it)
        if (it.key() != "character_notes" && it.key() != "baseline_motivation" && it.key() != "name")
            throw ApiError{422, "validation-error", "only character_notes and baseline_motivation can be replaced",
                           it.key()};
    if (generating_)
        throw ApiError{409, "conflict", "a reply is being generated; retry shortly", ""};
    std::unique_lock lock(mutex_);
    if (generating_)
        throw ApiError{409, "conflict", "a reply is being generated; retry shortly", ""};
    auto current = nlohmann::json::parse(engine_.persona_json());
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it.key() == "baseline_motivation" && it.value().is_object() && current[it.key()].is_object())
            for (auto m = it.value().begin(); m != it.value().end(); ++m)
                current[it.key()][m.key()] = m.value();
        else
            current[it.key()] = it.value();
    }
    try {
        engine_.set_persona_json(current.dump());
    } catch (const api::Failure& f) {
        throw from_failure(f);
    }
    return nlohmann::json::parse(engine_.persona_json());
}

void Session::advance(int ticks)
{
    touch();
    {
        std::lock_guard lock(mutex_);
        generating_ = true;
        try {
            for (int i = 0; i < ticks; ++i)
                engine_.step();
        } catch (...) {
            generating_ = false;
            throw;
        }
        generating_ = false;
        pump_locked();
    }
    notify_subscribers();
}

std::vector<nlohmann::json> Session::events_since(std::uint64_t cursor) const
{
    std::lock_guard lock(mutex_);
    std::vector<nlohmann::json> out;
    for (const auto& e : events_)
        if (e["seq"].get<std::uint64_t>() > cursor)
            out.push_back(e);
    return out;
}

std::uint64_t Session::last_seq() const
{
    std::lock_guard lock(mutex_);
    return events_.empty() ? 0 : events_.back()["seq"].get<std::uint64_t>();
}

void Session::touch()
{
    std::lock_guard lock(active_mutex_);
    last_active_ = std::chrono::steady_clock::now();
}

std::chrono::steady_clock::time_point Session::last_active() const
{
    std::lock_guard lock(active_mutex_);
    return last_active_;
}

void Session::save(const std::string& dir)
{
    fs::create_directories(dir);
    std::lock_guard lock(mutex_);
    pump_locked();
    engine_.save_snapshot((fs::path(dir) / (id_ + ".snapshot.json")).string());
    nlohmann::json meta{{"id", id_}, {"persona", persona_}, {"created_at", created_at_}};
    const auto first = events_.size() > kKeptEvents ? events_.end() - kKeptEvents : events_.begin();
    meta["events"] = std::vector<nlohmann::json>(first, events_.end());
    write_file((fs::path(dir) / (id_ + ".meta.json")).string(), meta.dump());
}

void Session::restore_events(std::vector<nlohmann::json> events)
{
    std::lock_guard lock(mutex_);
    events_ = std::move(events);
}

// ---- SessionManager -----------------------------------------------------

SessionManager::SessionManager(ServiceOptions opts) : opts_(std::move(opts))
{
    reaper_ = std::thread([this] {
        std::unique_lock lock(reaper_mutex_);
        while (!stopping_) {
            reaper_wake_.wait_for(lock, std::chrono::seconds(1), [&] { return stopping_.load(); });
            if (stopping_)
                break;
            lock.unlock();
            try {
                persist_idle();
            } catch (...) {
            }
            lock.lock();
        }
    });
}

SessionManager::~SessionManager()
{
    stopping_ = true;
    reaper_wake_.notify_all();
    if (reaper_.joinable())
        reaper_.join();
    try {
        persist_all();
    } catch (...) {
    }
}

std::string SessionManager::persona_path(const std::string& name) const
{
    return (fs::path(ctem_default_data_root()) / "personas" / (name + ".json")).string();
}

std::string SessionManager::overrides_for(const std::string& persona, std::int64_t start) const
{
    nlohmann::json o{{"paths", {{"persona", persona_path(persona)}}}, {"start_time", start - start % 60}};
    return o.dump();
}

std::shared_ptr<Session> SessionManager::create(const std::string& persona)
{
    if (!valid_name(persona) || !fs::is_regular_file(persona_path(persona)))
        throw ApiError{422, "validation-error", "unknown persona '" + persona + "'", "persona"};
    const auto now = wall_seconds();
    std::shared_ptr<Session> s;
    try {
        s = std::make_shared<Session>(random_id(), persona, api::Engine(opts_.config_path, overrides_for(persona, now)),
                                      now);
    } catch (const api::Failure& f) {
        throw from_failure(f);
    }
    s->start(opts_);
    std::lock_guard lock(mutex_);
    sessions_[s->id()] = s;
    return s;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id)
{
    {
        std::lock_guard lock(mutex_);
        if (auto it = sessions_.find(id); it != sessions_.end())
            return it->second;
    }
    if (!valid_name(id))
        return nullptr;
    return revive(id);
}

std::shared_ptr<Session> SessionManager::revive(const std::string& id)
{
    const auto meta_path = fs::path(opts_.data_dir) / (id + ".meta.json");
    const auto snap_path = fs::path(opts_.data_dir) / (id + ".snapshot.json");
    if (!fs::is_regular_file(meta_path) || !fs::is_regular_file(snap_path))
        return nullptr;
    std::ifstream in(meta_path);
    const auto meta = nlohmann::json::parse(in, nullptr, false);
    if (!meta.is_object())
        return nullptr;
    const auto persona = meta.value("persona", std::string("default"));
    try {
        api::Engine engine(opts_.config_path, overrides_for(persona, meta.value("created_at", wall_seconds())));
        engine.load_snapshot(snap_path.string());
        auto s = std::make_shared<Session>(id, persona, std::move(engine), meta.value("created_at", 0LL));
        s->restore_events(meta.value("events", std::vector<nlohmann::json>{}));
        std::lock_guard lock(mutex_);
        if (auto it = sessions_.find(id); it != sessions_.end())
            return it->second;
        s->start(opts_);
        sessions_[id] = s;
        return s;
    } catch (const api::Failure&) {
        return nullptr;
    }
}

std::size_t SessionManager::persist_idle()
{
    const auto cutoff = std::chrono::steady_clock::now() - opts_.idle_timeout;
    std::vector<std::shared_ptr<Session>> idle;
    {
        std::lock_guard lock(mutex_);
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (it->second->last_active() < cutoff) {
                idle.push_back(it->second);
                it = sessions_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& s : idle) {
        s->stop();
        s->save(opts_.data_dir);
    }
    return idle.size();
}

void SessionManager::persist_all()
{
    std::map<std::string, std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mutex_);
        all.swap(sessions_);
    }
    for (auto& [_, s] : all) {
        s->stop();
        s->save(opts_.data_dir);
    }
}

} // namespace ctem::service
