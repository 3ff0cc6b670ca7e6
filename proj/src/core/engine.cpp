#include "ctem/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "ctem/dynamics.hpp"
#include "ctem/error.hpp"
#include "json_util.hpp"

namespace ctem {

std::string_view to_string(EventKind e) noexcept
{
    switch (e) {
    case EventKind::plan: return "plan";
    case EventKind::execute: return "execute";
    case EventKind::replan: return "replan";
    case EventKind::rest: return "rest";
    case EventKind::message_in: return "message_in";
    case EventKind::message_out: return "message_out";
    case EventKind::safety: return "safety";
    case EventKind::summary: return "summary";
    case EventKind::tick: return "tick";
    }
    return "tick";
}

std::string to_jsonl(const TrajectoryRecord& r)
{
    ordered_json j;
    j["tick"] = r.tick;
    j["sim_time"] = r.sim_time;
    j["physio"] = ordered_json{{"energy", r.physio.energy}, {"valence", r.physio.valence}, {"arousal", r.physio.arousal}};
    j["familiarity"] = r.familiarity;
    j["present_behavior_id"] = r.present_behavior_id ? ordered_json(*r.present_behavior_id) : ordered_json(nullptr);
    j["event"] = std::string(to_string(r.event));
    j["payload"] = r.payload;
    return j.dump();
}

// ---- user scripts -------------------------------------------------------

UserScript load_user_script(std::string_view document)
{
    constexpr auto code = ErrorCode::validation_error;
    const auto j = detail::parse_json(document);
    detail::require_object(j, "", code);
    detail::reject_unknown(j, {"events", "description"}, "", code);
    if (!j.contains("events") || !j["events"].is_array())
        throw Error(code, "expected an array", "events");

    UserScript script;
    SimTime previous = 0;
    for (std::size_t i = 0; i < j["events"].size(); ++i) {
        const auto& e = j["events"][i];
        const std::string path = "events[" + std::to_string(i) + "]";
        detail::require_object(e, path, code);
        detail::reject_unknown(e, {"at", "action", "text", "sentiment_hint", "kind", "post_id"}, path, code);
        ScriptEvent ev;
        if (!e.contains("at") || !e["at"].is_number_integer() || e["at"].get<long long>() < 0)
            throw Error(code, "expected a non-negative integer offset in seconds", path + ".at");
        ev.at = e["at"].get<SimTime>();
        if (ev.at < previous)
            throw Error(code, "events must be ordered by time", path + ".at");
        previous = ev.at;

        const std::string action = e.contains("action") ? detail::string_at(e["action"], path + ".action", code)
                                                        : std::string("message");
        if (action == "message")
            ev.action = ScriptEvent::Action::message;
        else if (action == "reaction")
            ev.action = ScriptEvent::Action::reaction;
        else if (action == "silence")
            ev.action = ScriptEvent::Action::silence;
        else
            throw Error(code, "unknown action '" + action + "'", path + ".action");

        if (e.contains("text"))
            ev.text = detail::string_at(e["text"], path + ".text", code);
        if (e.contains("sentiment_hint"))
            ev.sentiment_hint = detail::number_in(e["sentiment_hint"], path + ".sentiment_hint", -1.0, 1.0, code);
        if (e.contains("kind")) {
            ev.reaction_kind = detail::string_at(e["kind"], path + ".kind", code);
            if (ev.reaction_kind != "like" && ev.reaction_kind != "comment")
                throw Error(code, "reaction kind must be like or comment", path + ".kind");
        }
        if (e.contains("post_id"))
            ev.post_id = detail::string_at(e["post_id"], path + ".post_id", code);
        if (ev.action == ScriptEvent::Action::message && ev.text.empty())
            throw Error(code, "message events need text", path + ".text");
        script.events.push_back(std::move(ev));
    }
    return script;
}

UserScript load_user_script_file(const std::string& path)
{
    return detail::load_from_file(path, ErrorCode::io_error, [](const std::string& t) { return load_user_script(t); });
}

nlohmann::json to_json(const TimelinePost& p)
{
    nlohmann::json reactions = nlohmann::json::array();
    for (const auto& r : p.reactions) {
        nlohmann::json x{{"kind", r.kind}, {"at", r.at}};
        if (!r.text.empty())
            x["text"] = r.text;
        reactions.push_back(std::move(x));
    }
    return {{"id", p.id}, {"sim_time", p.sim_time}, {"text", p.text}, {"behavior_id", p.behavior_id},
            {"reactions", std::move(reactions)}};
}

// ---- stats --------------------------------------------------------------

namespace {

const char* kDims[3] = {"energy", "valence", "arousal"};

double dim(const PhysioState& h, int i)
{
    return i == 0 ? h.energy : i == 1 ? h.valence : h.arousal;
}

ordered_json stats_state(const RunStats& s)
{
    ordered_json j;
    j["ticks"] = s.ticks;
    for (int i = 0; i < 3; ++i)
        j[kDims[i]] = {s.physio[i].sum, s.physio[i].min, s.physio[i].max};
    j["executed"] = s.executed;
    j["replans"] = s.replans;
    j["proactive_messages"] = s.proactive_messages;
    return j;
}

RunStats stats_from_json(const nlohmann::json& j)
{
    RunStats s;
    s.ticks = j.at("ticks").get<std::uint64_t>();
    for (int i = 0; i < 3; ++i) {
        const auto& a = j.at(kDims[i]);
        s.physio[i] = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
    }
    s.executed = j.at("executed").get<std::array<std::uint64_t, kCategoryCount>>();
    s.replans = j.at("replans").get<std::uint64_t>();
    s.proactive_messages = j.at("proactive_messages").get<std::uint64_t>();
    return s;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ordered_json scored_json(const ScoredBehavior& b)
{
    return {{"id", b.behavior.id},
            {"score", b.score},
            {"delta", {b.expected_delta.energy, b.expected_delta.valence, b.expected_delta.arousal}}};
}

ScoredBehavior scored_from_json(const nlohmann::json& j, const BehaviorPool& pool)
{
    const auto id = j.at("id").get<std::string>();
    const auto* spec = pool.find(id);
    if (!spec)
        throw Error(ErrorCode::corrupt_file, "snapshot references behavior missing from the pool", id);
    ScoredBehavior b;
    b.behavior = *spec;
    b.score = j.at("score").get<double>();
    const auto& d = j.at("delta");
    b.expected_delta = {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
    return b;
}

} // namespace

ordered_json RunStats::to_json(double final_familiarity) const
{
    ordered_json j;
    j["ticks"] = ticks;
    ordered_json physio_block;
    for (int i = 0; i < 3; ++i) {
        const double mean = ticks ? physio[i].sum / static_cast<double>(ticks) : 0.0;
        physio_block[kDims[i]] = ordered_json{{"mean", mean}, {"min", physio[i].min}, {"max", physio[i].max}};
    }
    j["physio"] = physio_block;
    ordered_json cats;
    for (std::size_t c = 0; c < kCategoryCount; ++c)
        cats[std::string(ctem::to_string(static_cast<Category>(c)))] = executed[c];
    j["executed"] = cats;
    j["replans"] = replans;
    j["proactive_messages"] = proactive_messages;
    j["final_familiarity"] = final_familiarity;
    return j;
}

// ---- components ---------------------------------------------------------

EngineComponents EngineComponents::from_config(const EngineConfig& cfg)
{
    check_paths(cfg);
    EngineComponents c;
    c.pool = load_pool_file(cfg.paths.pool);
    c.persona = load_persona_file(cfg.paths.persona);
    c.lexicon = load_lexicon_file(cfg.paths.lexicon);
    c.calendar = load_calendar_file(cfg.paths.calendar);
    if (cfg.generator.kind == "remote") {
        auto opts = RemoteGenerator::options_from_env();
        opts.model = cfg.generator.model;
        opts.timeout = std::chrono::milliseconds(cfg.generator.timeout_ms);
        c.generator = std::make_shared<RemoteGenerator>(std::move(opts));
    } else {
        c.generator = std::make_shared<ScriptedGenerator>(cfg.generator.seed,
                                                          std::chrono::milliseconds(cfg.generator.latency_ms));
    }
    c.classifiers = RuleClassifier::default_ensemble();
    c.sentiment = std::make_unique<LexiconSentiment>();
    return c;
}

// ---- engine -------------------------------------------------------------

Engine::Engine(EngineConfig cfg) : Engine(cfg, EngineComponents::from_config(cfg)) {}

Engine::Engine(EngineConfig cfg, EngineComponents components)
    : cfg_(std::move(cfg)),
      parts_(std::move(components)),
      config_hash_(config_hash(cfg_)),
      selection_rng_(cfg_.rng_seed, "selection"),
      proactive_rng_(cfg_.rng_seed, "proactive"),
      timeline_rng_(cfg_.rng_seed, "timeline")
{
    if (cfg_.planning_horizon != kPlanningHorizon)
        throw Error(ErrorCode::config_error, "planning horizon is fixed at 3", "planning_horizon");
    if (parts_.pool.behaviors.empty())
        throw Error(ErrorCode::empty_pool, "behavior pool is empty", cfg_.paths.pool);
    if (!parts_.generator)
        parts_.generator = std::make_shared<ScriptedGenerator>(cfg_.generator.seed);
    if (!parts_.sentiment)
        parts_.sentiment = std::make_unique<LexiconSentiment>();
    validate(cfg_.rest);
    state_ = init_state(parts_.persona, cfg_.start_time);
    last_exchange_at_ = cfg_.start_time;
    last_tones_ = tone_labels(state_.physio, cfg_.tone);
}

PlanningParams Engine::planning_params() const
{
    PlanningParams p;
    p.scoring = cfg_.scoring;
    p.window = {cfg_.redundancy_window_seconds, cfg_.utc_offset_seconds};
    p.horizon = cfg_.planning_horizon;
    return p;
}

TrajectoryRecord Engine::record(EventKind e, ordered_json payload) const
{
    TrajectoryRecord r;
    r.tick = tick_;
    r.sim_time = state_.sim_time;
    r.physio = state_.physio;
    r.familiarity = state_.familiarity;
    if (inventory_.present)
        r.present_behavior_id = inventory_.present->behavior.id;
    r.event = e;
    r.payload = std::move(payload);
    return r;
}

void Engine::emit(std::vector<TrajectoryRecord>& out, EventKind e, ordered_json payload)
{
    out.push_back(record(e, std::move(payload)));
}

void Engine::publish(ordered_json body)
{
    ordered_json e;
    e["seq"] = next_event_seq_;
    for (auto it = body.begin(); it != body.end(); ++it)
        e[it.key()] = it.value();
    outbound_.push_back({next_event_seq_, std::move(e)});
    ++next_event_seq_;
}

std::vector<OutboundEvent> Engine::drain_events()
{
    return std::exchange(outbound_, {});
}

std::vector<TrajectoryRecord> Engine::step()
{
    std::vector<TrajectoryRecord> out;
    if (tick_ > 0) {
        const DayIndex previous = day_of(state_.sim_time - tick_seconds(), cfg_.utc_offset_seconds);
        if (previous != day_of(state_.sim_time, cfg_.utc_offset_seconds))
            roll_day(previous, out);
    }
    sense(out);
    plan_and_select(out);
    execute_present(out);
    interact(out);
    finish_tick(out);
    ++tick_;
    state_.sim_time += tick_seconds();
    return out;
}

std::vector<TrajectoryRecord> Engine::respond()
{
    std::vector<TrajectoryRecord> out;
    drain_inbox(out);
    if (!unanswered_.empty())
        answer_pending(out);
    note_tone_change();
    return out;
}

void Engine::run(SimTime until, std::ostream* log)
{
    while (state_.sim_time < until) {
        const auto records = step();
        if (log) {
            for (const auto& r : records)
                *log << to_jsonl(r) << '\n';
            if (!*log)
                throw Error(ErrorCode::io_error, "failed writing trajectory log");
        }
    }
    if (log) {
        log->flush();
        if (!*log)
            throw Error(ErrorCode::io_error, "failed writing trajectory log");
    }
}

void Engine::roll_day(DayIndex finished_day, std::vector<TrajectoryRecord>& out)
{
    const SimTime offset = cfg_.utc_offset_seconds;
    SummaryInput input;
    input.day = finished_day;
    input.utc_offset_seconds = offset;
    std::vector<DialogTurn> turns;
    bool active = false;
    for (const auto& t : memory_.turns) {
        if (day_of(t.at, offset) != finished_day)
            continue;
        turns.push_back(t);
        active = active || t.speaker == Speaker::user;
    }
    input.clusters = cluster_dialogs(std::move(turns), cfg_.clustering);
    for (const auto& p : inventory_.past)
        if (p.completed && day_of(p.executed_at, offset) == finished_day)
            input.executed_behaviors.push_back(p.entry.behavior.label);

    const bool already = std::any_of(memory_.summaries.begin(), memory_.summaries.end(),
                                     [&](const EpisodicSummary& s) { return s.day == finished_day; });
    if (!already) {
        auto result = summarize_day(input, *parts_.generator);
        ordered_json payload{{"day", format_date(finished_day)},
                             {"clusters", result.summary.clusters_covered},
                             {"generator_calls", result.generator_calls},
                             {"fallback", result.used_fallback},
                             {"facts", result.summary.salient_facts}};
        update_memory(memory_, std::move(result.summary), state_.sim_time);
        emit(out, EventKind::summary, std::move(payload));
    }

    state_ = nightly_rest(state_, cfg_.rest);
    state_ = update_familiarity(state_, active, cfg_.familiarity_eta);
    emit(out, EventKind::rest, {{"day", format_date(finished_day)}, {"active", active}});
}

void Engine::sense(std::vector<TrajectoryRecord>& out)
{
    while (script_cursor_ < script_.events.size() &&
           cfg_.start_time + script_.events[script_cursor_].at <= state_.sim_time) {
        const auto& ev = script_.events[script_cursor_++];
        switch (ev.action) {
        case ScriptEvent::Action::message:
            post_message(ev.text, ev.sentiment_hint);
            break;
        case ScriptEvent::Action::reaction:
            try {
                post_reaction(ev.post_id, ev.reaction_kind, ev.text);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::not_found)
                    throw;
            }
            break;
        case ScriptEvent::Action::silence:
            break;
        }
    }
    drain_inbox(out);
}

void Engine::drain_inbox(std::vector<TrajectoryRecord>& out)
{
    std::deque<Inbound> items;
    {
        std::lock_guard lock(inbox_mutex_);
        items.swap(inbox_);
    }
    for (auto& item : items)
        absorb(std::move(item), out);
}

void Engine::absorb(Inbound item, std::vector<TrajectoryRecord>& out)
{
    ordered_json payload;
    payload["turn_id"] = item.turn_id;
    if (item.kind == Inbound::Kind::reaction) {
        auto post = std::find_if(timeline_.begin(), timeline_.end(),
                                 [&](const TimelinePost& p) { return p.id == item.post_id; });
        if (post != timeline_.end())
            post->reactions.push_back({item.reaction_kind, item.text, state_.sim_time});
        payload["reaction"] = item.reaction_kind;
        payload["post_id"] = item.post_id;
        if (item.reaction_kind == "like") {
            DialogTurn turn;
            turn.at = state_.sim_time;
            FeedbackContext ctx;
            ctx.reaction_like = true;
            last_feedback_ = extract_feedback(turn, *parts_.sentiment, ctx);
            pending_like_ = true;
            payload["turn_id"] = nullptr;
            emit(out, EventKind::message_in, std::move(payload));
            return;
        }
        if (item.text.empty()) {
            emit(out, EventKind::message_in, std::move(payload));
            return;
        }
    }

    DialogTurn turn;
    turn.id = item.turn_id;
    turn.at = state_.sim_time;
    turn.speaker = Speaker::user;
    turn.text = item.text;
    memory_.turns.push_back(turn);
    payload["text"] = item.text;
    emit(out, EventKind::message_in, std::move(payload));
    unanswered_.push_back(std::move(item));
}

std::vector<ScoredBehavior> Engine::candidates_from_future()
{
    for (auto& f : inventory_.future)
        f = score_behavior(f.behavior, state_, cfg_.scoring);
    std::vector<ScoredBehavior> eligible;
    for (const auto& f : inventory_.future)
        if (f.score > kIneligibleScore && f.score >= cfg_.replanning_threshold)
            eligible.push_back(f);
    return filter_redundant(std::move(eligible), inventory_.past, state_.sim_time, planning_params().window);
}

bool Engine::refill_future(std::vector<TrajectoryRecord>& out, EventKind kind, const char* reason)
{
    try {
        inventory_ = plan_future(parts_.pool, state_, inventory_, planning_params());
    } catch (const Error& e) {
        if (e.code() != ErrorCode::empty_pool)
            throw;
        inventory_.future.clear();
        return false;
    }
    ordered_json ids = ordered_json::array();
    ordered_json scores = ordered_json::array();
    for (const auto& f : inventory_.future) {
        ids.push_back(f.behavior.id);
        scores.push_back(f.score);
    }
    emit(out, kind, {{"reason", reason}, {"planned", std::move(ids)}, {"scores", std::move(scores)}});
    return true;
}

void Engine::plan_and_select(std::vector<TrajectoryRecord>& out)
{
    bool replanned = false;
    // A fallback behavior only has to stay affordable; its score is expected to be low.
    const double threshold = present_is_fallback_ ? -1.0 : cfg_.replanning_threshold;
    if (inventory_.present && !present_valid(*inventory_.present, state_, threshold, cfg_.scoring)) {
        const auto abandoned = *inventory_.present;
        const double score = score_behavior(abandoned.behavior, state_, cfg_.scoring).score;
        inventory_.past.push_back({abandoned, state_.sim_time, 0.0, false});
        inventory_.present.reset();
        inventory_.future.clear();
        ++stats_.replans;
        replanned = true;
        emit(out, EventKind::replan, {{"reason", "present_invalid"}, {"abandoned", abandoned.behavior.id},
                                      {"score", score}});
    }
    if (inventory_.present)
        return;

    bool refilled = false;
    if (inventory_.future.empty())
        refilled = refill_future(out, EventKind::plan, replanned ? "replan" : "future_empty");
    auto candidates = candidates_from_future();
    if (candidates.empty() && !refilled) {
        if (!replanned) {
            ++stats_.replans;
            emit(out, EventKind::replan, {{"reason", "future_stale"}, {"abandoned", nullptr}, {"score", nullptr}});
        }
        inventory_.future.clear();
        refill_future(out, EventKind::plan, "replan");
        candidates = candidates_from_future();
    }

    if (candidates.empty()) {
        // Nothing plannable: fall back to the cheapest restorative behavior.
        const BehaviorSpec* best = nullptr;
        for (const auto& b : parts_.pool.behaviors)
            if (b.restorative && b.bio_require <= state_.physio.energy &&
                (!best || b.bio_require < best->bio_require))
                best = &b;
        if (!best)
            return;
        inventory_.present = score_behavior(*best, state_, cfg_.scoring);
        present_started_at_ = state_.sim_time;
        present_is_fallback_ = true;
        emit(out, EventKind::plan, {{"reason", "fallback"}, {"planned", ordered_json::array({best->id})},
                                    {"scores", ordered_json::array({inventory_.present->score})}});
        return;
    }

    const ScoredBehavior chosen = select_present(candidates, selection_rng_, cfg_.softmax_temperature);
    std::erase_if(inventory_.future, [&](const ScoredBehavior& f) { return f.behavior.id == chosen.behavior.id; });
    inventory_.present = chosen;
    present_started_at_ = state_.sim_time;
    present_is_fallback_ = false;
}

void Engine::execute_present(std::vector<TrajectoryRecord>& out)
{
    if (!inventory_.present)
        return;
    const auto& present = *inventory_.present;
    const int duration = present.behavior.duration_ticks > 0 ? present.behavior.duration_ticks
                                                             : cfg_.default_duration_ticks;
    const SimTime elapsed_ticks = (state_.sim_time - present_started_at_) / tick_seconds() + 1;
    if (elapsed_ticks < duration)
        return;

    double quality = cfg_.default_outcome_quality;
    if (last_feedback_ && last_user_turn_at_ && *last_user_turn_at_ >= present_started_at_)
        quality = std::clamp((last_feedback_->sentiment_valence + 1.0) / 2.0, 0.0, 1.0);

    const ScoredBehavior done = present;
    const PhysioState before = state_.physio;
    state_ = apply_behavior_effects(state_, done, quality);
    inventory_.past.push_back({done, state_.sim_time, quality, true});
    inventory_.present.reset();
    ++stats_.executed[static_cast<std::size_t>(done.behavior.category)];

    ordered_json payload;
    payload["behavior_id"] = done.behavior.id;
    payload["category"] = std::string(to_string(done.behavior.category));
    payload["quality"] = quality;
    payload["delta"] = {state_.physio.energy - before.energy, state_.physio.valence - before.valence,
                        state_.physio.arousal - before.arousal};
    maybe_post_timeline(done, payload);
    emit(out, EventKind::execute, std::move(payload));
}

void Engine::maybe_post_timeline(const ScoredBehavior& executed, ordered_json& payload)
{
    const auto cat = executed.behavior.category;
    if (cat != Category::leisure && cat != Category::social)
        return;
    if (timeline_rng_.next_uniform() >= cfg_.timeline_post_probability)
        return;

    const auto tones = tone_labels(state_.physio, cfg_.tone);
    std::string draft = "Took some time to " + executed.behavior.label + " today.";
    switch (tones.valence) {
    case ValenceTone::positive: draft += " That was lovely."; break;
    case ValenceTone::neutral: draft += " A quiet little moment."; break;
    case ValenceTone::low: draft += " Needed that today."; break;
    }
    const std::string prompt = "[TIMELINE POST]\n" + section_delimiter(Section::character) + "\n" +
                               build_character_prompt(state_.personality, cfg_.nickname, state_.familiarity,
                                                      cfg_.familiarity_bands) +
                               "\nWrite one short life update about the activity you just finished.\n" +
                               wrap_draft(draft);
    std::string text;
    try {
        text = parts_.generator->generate(prompt, 280);
    } catch (const Error&) {
        text = draft;
    }
    if (text.empty())
        text = draft;

    TimelinePost post;
    post.id = "p" + std::to_string(next_post_++);
    post.sim_time = state_.sim_time;
    post.text = std::move(text);
    post.behavior_id = executed.behavior.id;
    {
        std::lock_guard lock(inbox_mutex_);
        known_posts_.push_back(post.id);
    }
    payload["timeline_post"] = post.id;
    publish({{"type", "timeline_post"}, {"post", to_json(post)}});
    timeline_.push_back(std::move(post));
}

void Engine::interact(std::vector<TrajectoryRecord>& out)
{
    if (!unanswered_.empty()) {
        answer_pending(out);
        return;
    }
    const SimTime idle = state_.sim_time - last_exchange_at_;
    IntentParams params = cfg_.intent;
    params.tone = cfg_.tone;
    const auto intent = decide_intent(state_, idle, false, last_feedback_, proactive_rng_, params);
    if (intent.mode != InteractionMode::proactive)
        return;
    ++stats_.proactive_messages;
    emit_message(intent, SafetyAssessment{}, out);
}

void Engine::answer_pending(std::vector<TrajectoryRecord>& out)
{
    SafetyAssessment worst;
    AssessParams ap;
    ap.classifier_timeout = std::chrono::milliseconds(cfg_.classifier_timeout_ms);
    for (const auto& item : unanswered_) {
        auto safety = assess(item.text, parts_.classifiers, parts_.lexicon, ap);
        auto payload = ordered_json(to_json(safety));
        payload["turn_id"] = item.turn_id;
        emit(out, EventKind::safety, std::move(payload));

        auto turn = std::find_if(memory_.turns.rbegin(), memory_.turns.rend(),
                                 [&](const DialogTurn& t) { return t.id == item.turn_id; });
        FeedbackContext ctx;
        ctx.previous_turn_at = last_user_turn_at_;
        ctx.reaction_like = std::exchange(pending_like_, false);
        ctx.sentiment_override = item.sentiment_hint;
        ctx.risk = safety.level;
        const DialogTurn& source = turn != memory_.turns.rend() ? *turn : DialogTurn{};
        auto features = extract_feedback(source, *parts_.sentiment, ctx);
        if (turn != memory_.turns.rend())
            turn->feedback = to_json(features);
        last_user_turn_at_ = state_.sim_time;
        state_.physio.valence += features.sentiment_valence * cfg_.feedback_valence_gain;
        state_.physio = clamp_physio(state_.physio);
        last_feedback_ = std::move(features);

        if (safety.level >= worst.level)
            worst = std::move(safety);
    }
    unanswered_.clear();
    last_safety_ = worst;

    IntentParams params = cfg_.intent;
    params.tone = cfg_.tone;
    const auto intent =
        decide_intent(state_, state_.sim_time - last_exchange_at_, true, last_feedback_, proactive_rng_, params);
    emit_message(intent, worst, out);
}

void Engine::emit_message(InteractionIntent intent, const SafetyAssessment& safety,
                          std::vector<TrajectoryRecord>& out)
{
    PromptSections sections;
    sections.character =
        build_character_prompt(state_.personality, cfg_.nickname, state_.familiarity, cfg_.familiarity_bands);
    std::optional<std::string_view> activity;
    if (inventory_.present)
        activity = inventory_.present->behavior.label;
    sections.state = build_state_prompt(state_, intent.strategy, activity, cfg_.tone);
    sections.memory_context = retrieve_context(memory_, state_.sim_time, cfg_.memory_budget);
    sections.real_world_context = real_world_context(state_.sim_time, cfg_.utc_offset_seconds, parts_.calendar);
    sections.safety_constraints = safety.constraints_prompt;
    sections.dialog_rules = std::string(dialog_rules());
    const std::size_t tail = std::min(cfg_.conversation_tail, memory_.turns.size());
    for (auto it = memory_.turns.end() - static_cast<std::ptrdiff_t>(tail); it != memory_.turns.end(); ++it)
        sections.conversation_tail.push_back((it->speaker == Speaker::user ? "User: " : "You: ") + it->text);
    if (intent.mode == InteractionMode::proactive)
        sections.conversation_tail.push_back("[PROACTIVE] Nobody has written for a while. Open a topic yourself.");

    const auto bundle = compose_prompt(std::move(sections), cfg_.prompt_max_chars);
    ResponseParams rp;
    rp.max_length = cfg_.response_max_length;
    rp.output_lexicon = &parts_.lexicon;
    rp.emoji = cfg_.emoji;
    const auto msg = generate_response(bundle, *parts_.generator, safety, tone_labels(state_.physio, cfg_.tone), rp);
    last_prompt_ = bundle.rendered;

    std::int64_t id;
    {
        std::lock_guard lock(inbox_mutex_);
        id = next_turn_id_++;
    }
    DialogTurn turn;
    turn.id = id;
    turn.at = state_.sim_time;
    turn.speaker = Speaker::agent;
    turn.text = msg.text;
    memory_.turns.push_back(std::move(turn));
    last_exchange_at_ = state_.sim_time;

    ordered_json payload;
    payload["turn_id"] = id;
    payload["mode"] = std::string(to_string(intent.mode));
    payload["strategy"] = std::string(to_string(intent.strategy));
    payload["risk"] = std::string(to_string(safety.level));
    payload["emoji_tag"] = msg.emoji ? ordered_json(std::string(to_string(*msg.emoji))) : ordered_json(nullptr);
    payload["regenerated"] = msg.regenerated;
    payload["stock_reply"] = msg.stock_reply;
    payload["generator_failed"] = msg.generator_failed;
    payload["text"] = msg.text;
    emit(out, EventKind::message_out, payload);

    ordered_json event{{"type", "agent_message"}, {"message_id", id}, {"text", msg.text}};
    if (msg.emoji)
        event["emoji_tag"] = std::string(to_string(*msg.emoji));
    event["mode"] = std::string(to_string(intent.mode));
    publish(std::move(event));
}

void Engine::note_tone_change()
{
    const auto tones = tone_labels(state_.physio, cfg_.tone);
    if (tones == last_tones_)
        return;
    last_tones_ = tones;
    publish({{"type", "state_change"}, {"tone_labels", to_json(tones)}});
}

void Engine::finish_tick(std::vector<TrajectoryRecord>& out)
{
    const auto& h = state_.physio;
    for (int i = 0; i < 3; ++i) {
        auto& r = stats_.physio[i];
        const double v = dim(h, i);
        if (stats_.ticks == 0) {
            r.min = v;
            r.max = v;
        }
        r.sum += v;
        r.min = std::min(r.min, v);
        r.max = std::max(r.max, v);
    }
    ++stats_.ticks;
    note_tone_change();
    emit(out, EventKind::tick, {{"clock", format_clock(state_.sim_time, cfg_.utc_offset_seconds)}});
}

// ---- inbound ------------------------------------------------------------

std::int64_t Engine::post_message(std::string text, std::optional<double> sentiment_hint)
{
    if (text.empty())
        throw Error(ErrorCode::validation_error, "message text is empty", "text");
    if (sentiment_hint && !(*sentiment_hint >= -1.0 && *sentiment_hint <= 1.0))
        throw Error(ErrorCode::validation_error, "sentiment hint outside [-1, 1]", "sentiment_hint");
    std::lock_guard lock(inbox_mutex_);
    Inbound item;
    item.turn_id = next_turn_id_++;
    item.text = std::move(text);
    item.sentiment_hint = sentiment_hint;
    inbox_.push_back(std::move(item));
    return inbox_.back().turn_id;
}

std::optional<std::string> Engine::resolve_post_locked(const std::string& post_id) const
{
    if (post_id == "latest") {
        if (known_posts_.empty())
            return std::nullopt;
        return known_posts_.back();
    }
    if (std::find(known_posts_.begin(), known_posts_.end(), post_id) == known_posts_.end())
        return std::nullopt;
    return post_id;
}

void Engine::post_reaction(const std::string& post_id, const std::string& kind, std::string text)
{
    if (kind != "like" && kind != "comment")
        throw Error(ErrorCode::validation_error, "reaction kind must be like or comment", "kind");
    if (kind == "comment" && text.empty())
        throw Error(ErrorCode::validation_error, "comments need text", "text");
    std::lock_guard lock(inbox_mutex_);
    const auto resolved = resolve_post_locked(post_id);
    if (!resolved)
        throw Error(ErrorCode::not_found, "unknown timeline post", post_id);
    Inbound item;
    item.kind = Inbound::Kind::reaction;
    item.post_id = *resolved;
    item.reaction_kind = kind;
    item.text = std::move(text);
    if (kind == "comment")
        item.turn_id = next_turn_id_++;
    inbox_.push_back(std::move(item));
}

std::size_t Engine::pending_inbound() const
{
    std::lock_guard lock(inbox_mutex_);
    return inbox_.size();
}

void Engine::set_script(UserScript script)
{
    script_ = std::move(script);
    script_cursor_ = 0;
    while (script_cursor_ < script_.events.size() &&
           cfg_.start_time + script_.events[script_cursor_].at < state_.sim_time)
        ++script_cursor_;
}

void Engine::set_persona(PersonalityProfile persona)
{
    validate_profile(persona);
    state_.personality.character_notes = std::move(persona.character_notes);
    state_.personality.baseline_motivation = persona.baseline_motivation;
    state_.personality.name = std::move(persona.name);
    state_.motivation = persona.baseline_motivation;
}

// ---- views --------------------------------------------------------------

nlohmann::json Engine::state_view(bool debug) const
{
    const auto tones = tone_labels(state_.physio, cfg_.tone);
    nlohmann::json j{
        {"persona", state_.personality.name},
        {"tone_labels", to_json(tones)},
        {"familiarity_band", familiarity_band(state_.familiarity, cfg_.familiarity_bands)},
        {"current_behavior", inventory_.present ? nlohmann::json(inventory_.present->behavior.label) : nlohmann::json(nullptr)},
        {"sim_time", state_.sim_time},
        {"local_time", format_date(day_of(state_.sim_time, cfg_.utc_offset_seconds)) + " " +
                           format_clock(state_.sim_time, cfg_.utc_offset_seconds)},
        {"tick", tick_},
        {"turns", memory_.turns.size()},
    };
    if (!debug)
        return j;
    nlohmann::json future = nlohmann::json::array();
    for (const auto& f : inventory_.future)
        future.push_back(f.behavior.id);
    j["debug"] = {
        {"physio", to_json(state_.physio)},
        {"motivation", to_json(state_.motivation)},
        {"familiarity", state_.familiarity},
        {"present", inventory_.present ? nlohmann::json(inventory_.present->behavior.id) : nlohmann::json(nullptr)},
        {"future", std::move(future)},
        {"past_count", inventory_.past.size()},
        {"user_turns", std::count_if(memory_.turns.begin(), memory_.turns.end(),
                                     [](const DialogTurn& t) { return t.speaker == Speaker::user; })},
        {"last_feedback", last_feedback_ ? to_json(*last_feedback_) : nlohmann::json(nullptr)},
        {"last_safety", last_safety_ ? to_json(*last_safety_) : nlohmann::json(nullptr)},
        {"facts", nlohmann::json::array()},
    };
    for (const auto& f : memory_.facts)
        j["debug"]["facts"].push_back({{"key", f.key}, {"value", f.value}});
    return j;
}

nlohmann::json Engine::timeline_view() const
{
    nlohmann::json j = nlohmann::json::array();
    for (auto it = timeline_.rbegin(); it != timeline_.rend(); ++it)
        j.push_back(to_json(*it));
    return j;
}

// ---- snapshots ----------------------------------------------------------

ordered_json Engine::snapshot() const
{
    ordered_json j;
    j["schema_version"] = kSnapshotSchemaVersion;
    j["config_hash"] = config_hash_;
    j["tick"] = tick_;
    j["state"] = ordered_json{{"physio", to_json(state_.physio)},
                              {"motivation", to_json(state_.motivation)},
                              {"personality", to_json(state_.personality)},
                              {"familiarity", state_.familiarity},
                              {"sim_time", state_.sim_time}};

    ordered_json past = ordered_json::array();
    for (const auto& p : inventory_.past)
        past.push_back({{"entry", scored_json(p.entry)},
                        {"executed_at", p.executed_at},
                        {"quality", p.outcome_quality},
                        {"completed", p.completed}});
    ordered_json future = ordered_json::array();
    for (const auto& f : inventory_.future)
        future.push_back(scored_json(f));
    j["inventory"] = ordered_json{{"past", std::move(past)},
                                  {"present", inventory_.present ? scored_json(*inventory_.present) : ordered_json(nullptr)},
                                  {"present_started_at", present_started_at_},
                                  {"present_is_fallback", present_is_fallback_},
                                  {"future", std::move(future)}};
    j["memory"] = to_json(memory_);
    j["rng"] = ordered_json{{"selection", selection_rng_.cursor()},
                            {"proactive", proactive_rng_.cursor()},
                            {"timeline", timeline_rng_.cursor()}};
    ordered_json posts = ordered_json::array();
    for (const auto& p : timeline_)
        posts.push_back(ordered_json(to_json(p)));
    j["timeline"] = std::move(posts);

    ordered_json pending = ordered_json::array();
    {
        std::lock_guard lock(inbox_mutex_);
        auto add = [&](const Inbound& i, bool absorbed) {
            pending.push_back({{"absorbed", absorbed},
                               {"kind", i.kind == Inbound::Kind::message ? "message" : "reaction"},
                               {"turn_id", i.turn_id},
                               {"text", i.text},
                               {"sentiment_hint", i.sentiment_hint ? ordered_json(*i.sentiment_hint) : ordered_json(nullptr)},
                               {"post_id", i.post_id},
                               {"reaction_kind", i.reaction_kind}});
        };
        for (const auto& i : unanswered_)
            add(i, true);
        for (const auto& i : inbox_)
            add(i, false);
        j["ids"] = ordered_json{{"next_turn", next_turn_id_}, {"next_post", next_post_}, {"next_event", next_event_seq_}};
    }
    j["pending"] = std::move(pending);
    j["interaction"] = ordered_json{
        {"last_user_turn_at", last_user_turn_at_ ? ordered_json(*last_user_turn_at_) : ordered_json(nullptr)},
        {"last_exchange_at", last_exchange_at_},
        {"pending_like", pending_like_},
        {"last_feedback", last_feedback_ ? ordered_json(to_json(*last_feedback_)) : ordered_json(nullptr)},
        {"last_tones", to_json(last_tones_)}};
    j["script_cursor"] = script_cursor_;
    j["stats"] = stats_state(stats_);
    j["checksum"] = hex64(fnv1a64(j.dump()));
    return j;
}

void Engine::restore(const nlohmann::json& snap)
{
    // Checksum and version are checked by load_snapshot; this assumes a
    // well-formed document and reports missing members as corrupt.
    try {
        const auto& s = snap.at("state");
        EmotionalState st;
        st.physio = physio_from_json(s.at("physio"), "state.physio");
        st.motivation = motivation_from_json(s.at("motivation"), "state.motivation");
        st.personality = persona_from_json(s.at("personality"));
        st.familiarity = s.at("familiarity").get<double>();
        st.sim_time = s.at("sim_time").get<SimTime>();

        BehaviorInventory inv;
        const auto& i = snap.at("inventory");
        for (const auto& p : i.at("past"))
            inv.past.push_back({scored_from_json(p.at("entry"), parts_.pool), p.at("executed_at").get<SimTime>(),
                                p.at("quality").get<double>(), p.at("completed").get<bool>()});
        if (!i.at("present").is_null())
            inv.present = scored_from_json(i.at("present"), parts_.pool);
        for (const auto& f : i.at("future"))
            inv.future.push_back(scored_from_json(f, parts_.pool));

        std::vector<TimelinePost> posts;
        std::vector<std::string> post_ids;
        if (snap.contains("timeline")) {
            for (const auto& p : snap.at("timeline")) {
                TimelinePost post;
                post.id = p.at("id").get<std::string>();
                post.sim_time = p.at("sim_time").get<SimTime>();
                post.text = p.at("text").get<std::string>();
                post.behavior_id = p.at("behavior_id").get<std::string>();
                for (const auto& r : p.at("reactions"))
                    post.reactions.push_back({r.at("kind").get<std::string>(), r.value("text", std::string()),
                                              r.at("at").get<SimTime>()});
                post_ids.push_back(post.id);
                posts.push_back(std::move(post));
            }
        }

        std::vector<Inbound> unanswered;
        std::deque<Inbound> inbox;
        for (const auto& p : snap.at("pending")) {
            Inbound in;
            in.kind = p.at("kind").get<std::string>() == "message" ? Inbound::Kind::message : Inbound::Kind::reaction;
            in.turn_id = p.at("turn_id").get<std::int64_t>();
            in.text = p.at("text").get<std::string>();
            if (!p.at("sentiment_hint").is_null())
                in.sentiment_hint = p.at("sentiment_hint").get<double>();
            in.post_id = p.at("post_id").get<std::string>();
            in.reaction_kind = p.at("reaction_kind").get<std::string>();
            if (p.at("absorbed").get<bool>())
                unanswered.push_back(std::move(in));
            else
                inbox.push_back(std::move(in));
        }

        const auto& ia = snap.at("interaction");
        const auto& tones = ia.at("last_tones");
        const auto tone_of = [&](const char* key) { return tones.at(key).get<std::string>(); };
        ToneLabels last_tones = tone_labels(st.physio, cfg_.tone);
        for (int e = 0; e < 3; ++e)
            if (to_string(static_cast<EnergyTone>(e)) == tone_of("energy"))
                last_tones.energy = static_cast<EnergyTone>(e);
        for (int v = 0; v < 3; ++v)
            if (to_string(static_cast<ValenceTone>(v)) == tone_of("valence"))
                last_tones.valence = static_cast<ValenceTone>(v);
        for (int a = 0; a < 3; ++a)
            if (to_string(static_cast<ArousalTone>(a)) == tone_of("arousal"))
                last_tones.arousal = static_cast<ArousalTone>(a);

        auto memory = memory_from_json(snap.at("memory"));
        auto stats = stats_from_json(snap.at("stats"));
        const auto& rng = snap.at("rng");
        const auto& ids = snap.at("ids");

        state_ = std::move(st);
        inventory_ = std::move(inv);
        present_started_at_ = i.at("present_started_at").get<SimTime>();
        present_is_fallback_ = i.at("present_is_fallback").get<bool>();
        memory_ = std::move(memory);
        timeline_ = std::move(posts);
        unanswered_ = std::move(unanswered);
        last_user_turn_at_ = ia.at("last_user_turn_at").is_null()
                                 ? std::nullopt
                                 : std::optional<SimTime>(ia.at("last_user_turn_at").get<SimTime>());
        last_exchange_at_ = ia.at("last_exchange_at").get<SimTime>();
        pending_like_ = ia.at("pending_like").get<bool>();
        last_feedback_ = ia.at("last_feedback").is_null()
                             ? std::nullopt
                             : std::optional<FeedbackFeatures>(feedback_from_json(ia.at("last_feedback")));
        last_tones_ = last_tones;
        last_safety_.reset();
        last_prompt_.reset();
        tick_ = snap.at("tick").get<std::uint64_t>();
        stats_ = stats;
        selection_rng_.set_cursor(rng.at("selection").get<std::uint64_t>());
        proactive_rng_.set_cursor(rng.at("proactive").get<std::uint64_t>());
        timeline_rng_.set_cursor(rng.at("timeline").get<std::uint64_t>());
        script_cursor_ = snap.at("script_cursor").get<std::size_t>();
        next_post_ = ids.at("next_post").get<std::int64_t>();
        next_event_seq_ = ids.at("next_event").get<std::uint64_t>();
        outbound_.clear();
        std::lock_guard lock(inbox_mutex_);
        inbox_ = std::move(inbox);
        next_turn_id_ = ids.at("next_turn").get<std::int64_t>();
        known_posts_ = std::move(post_ids);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::corrupt_file, std::string("malformed snapshot: ") + e.what());
    }
}

void Engine::save_snapshot(const std::string& path) const
{
    const auto text = snapshot().dump(1);
    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::io_error, "cannot write snapshot", path);
        out << text << '\n';
        out.flush();
        if (!out)
            throw Error(ErrorCode::io_error, "failed writing snapshot", path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw Error(ErrorCode::io_error, "cannot move snapshot into place: " + ec.message(), path);
}

std::vector<std::string> Engine::load_snapshot(const std::string& path)
{
    const auto text = detail::read_file(path);
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::corrupt_file, e.what(), path);
    }
    if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer())
        throw Error(ErrorCode::corrupt_file, "missing schema_version", path);
    const int version = j["schema_version"].get<int>();
    if (version < 1 || version > kSnapshotSchemaVersion)
        throw Error(ErrorCode::version_mismatch,
                    "unsupported snapshot schema " + std::to_string(version) + " (this build reads 1.." +
                        std::to_string(kSnapshotSchemaVersion) + ")",
                    path);
    if (!j.contains("checksum") || !j["checksum"].is_string())
        throw Error(ErrorCode::corrupt_file, "missing checksum", path);
    const auto stored = j["checksum"].get<std::string>();
    j.erase("checksum");
    if (hex64(fnv1a64(j.dump())) != stored)
        throw Error(ErrorCode::corrupt_file, "checksum mismatch", path);

    std::vector<std::string> notes;
    if (version == 1) {
        // Schema 1 predates timeline posts.
        j["timeline"] = ordered_json::array();
        notes.push_back("migrated snapshot schema 1 -> 2: timeline initialised empty");
    }
    if (j.value("config_hash", std::string()) != config_hash_)
        notes.push_back("snapshot was written under a different config");
    const nlohmann::json plain = nlohmann::json::parse(j.dump());
    try {
        restore(plain);
    } catch (const Error& e) {
        throw Error(e.code(), e.message(), path);
    }
    return notes;
}

} // namespace ctem
