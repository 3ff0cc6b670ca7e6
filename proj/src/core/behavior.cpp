#include "ctem/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctem/error.hpp"
#include "ctem/memory.hpp"
#include "json_util.hpp"

namespace ctem {

namespace {

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "physiological", "work", "leisure", "social", "emotional"};

} // namespace

std::string_view to_string(Category c) noexcept
{
    return kCategoryNames[static_cast<std::size_t>(c)];
}

std::optional<Category> category_from_name(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kCategoryCount; ++i)
        if (kCategoryNames[i] == name)
            return static_cast<Category>(i);
    return std::nullopt;
}

const BehaviorSpec* BehaviorPool::find(std::string_view id) const
{
    for (const auto& b : behaviors)
        if (b.id == id)
            return &b;
    return nullptr;
}

double modulation_weight(double energy, const ScoringParams& params) noexcept
{
    const double logistic = 1.0 / (1.0 + std::exp(-params.steepness * (energy - params.center)));
    return 1.0 - logistic;
}

ScoredBehavior score_behavior(const BehaviorSpec& b, const EmotionalState& state, const ScoringParams& params)
{
    ScoredBehavior out;
    out.behavior = b;
    out.expected_delta = {b.bio_consumption, b.valence_effect, b.arousal_effect};

    if (state.physio.energy < b.bio_require) {
        out.score = kIneligibleScore;
        return out;
    }

    const auto& v = state.motivation.values;
    const auto& phi = b.embedding.values;

    // Mean of products keeps each term in [0, 1].
    double bio = 0.0;
    for (std::size_t i = 0; i < kBioDrives; ++i)
        bio += v[i] * phi[i];
    bio /= static_cast<double>(kBioDrives);

    double psycho_social = 0.0;
    for (std::size_t i = kBioDrives; i < kDriveCount; ++i)
        psycho_social += v[i] * phi[i];
    psycho_social /= static_cast<double>(kDriveCount - kBioDrives);

    const double w = modulation_weight(state.physio.energy, params);
    out.score = w * bio + (1.0 - w) * psycho_social;
    return out;
}

std::vector<ScoredBehavior> filter_redundant(std::vector<ScoredBehavior> candidates,
                                             std::span<const PastEntry> past, SimTime now,
                                             const RedundancyWindow& window)
{
    if (past.empty())
        return candidates;

    std::set<std::string, std::less<>> recent;
    const DayIndex today = day_of(now, window.utc_offset_seconds);
    for (const auto& p : past) {
        const bool inside = window.trailing_seconds
                                ? now - p.executed_at < *window.trailing_seconds
                                : day_of(p.executed_at, window.utc_offset_seconds) == today;
        if (inside)
            recent.insert(p.entry.behavior.id);
    }

    std::erase_if(candidates, [&](const ScoredBehavior& c) { return recent.contains(c.behavior.id); });
    return candidates;
}

BehaviorInventory plan_future(const BehaviorPool& pool, const EmotionalState& state,
                              BehaviorInventory inventory, const PlanningParams& params)
{
    std::vector<ScoredBehavior> scored;
    scored.reserve(pool.behaviors.size());
    for (const auto& b : pool.behaviors) {
        auto s = score_behavior(b, state, params.scoring);
        if (s.score < 0.0)
            continue;
        if (inventory.present && inventory.present->behavior.id == b.id)
            continue;
        scored.push_back(std::move(s));
    }

    scored = filter_redundant(std::move(scored), inventory.past, state.sim_time, params.window);
    if (scored.empty())
        throw Error(ErrorCode::empty_pool, "no eligible behavior in pool");

    std::sort(scored.begin(), scored.end(), [](const ScoredBehavior& a, const ScoredBehavior& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.behavior.id < b.behavior.id;
    });
    if (scored.size() > params.horizon)
        scored.resize(params.horizon);

    inventory.future = std::move(scored);
    return inventory;
}

std::vector<double> softmax_probabilities(std::span<const ScoredBehavior> candidates, double tau)
{
    std::vector<double> p(candidates.size());
    if (candidates.empty())
        return p;
    double peak = candidates.front().score;
    for (const auto& c : candidates)
        peak = std::max(peak, c.score);
    double z = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        p[i] = std::exp((candidates[i].score - peak) / tau);
        z += p[i];
    }
    for (auto& x : p)
        x /= z;
    return p;
}

const ScoredBehavior& select_present(std::span<const ScoredBehavior> candidates, RandomStream& stream,
                                     double tau)
{
    if (candidates.empty())
        throw Error(ErrorCode::no_candidates, "select_present called with no candidates");

    const auto p = softmax_probabilities(candidates, tau);
    const double u = stream.next_uniform();
    double cumulative = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cumulative += p[i];
        if (u < cumulative)
            return candidates[i];
    }
    return candidates.back();
}

bool present_valid(const ScoredBehavior& present, const EmotionalState& state, double threshold,
                   const ScoringParams& params)
{
    if (state.physio.energy < present.behavior.bio_require)
        return false;
    return score_behavior(present.behavior, state, params).score >= threshold;
}

nlohmann::json to_json(const BehaviorSpec& b)
{
    return {{"id", b.id},
            {"label", b.label},
            {"category", to_string(b.category)},
            {"bio_require", b.bio_require},
            {"bio_consumption", b.bio_consumption},
            {"valence_effect", b.valence_effect},
            {"arousal_effect", b.arousal_effect},
            {"restorative", b.restorative},
            {"embedding", to_json(b.embedding)}};
}

static nlohmann::json to_json_with_duration(const BehaviorSpec& b)
{
    auto j = to_json(b);
    if (b.duration_ticks > 0)
        j["duration_ticks"] = b.duration_ticks;
    return j;
}

nlohmann::json to_json(const BehaviorPool& pool)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : pool.behaviors)
        arr.push_back(to_json_with_duration(b));
    return {{"behaviors", arr}};
}

namespace {

BehaviorSpec behavior_from_json(const nlohmann::json& j, const std::string& path)
{
    using namespace detail;
    constexpr auto code = ErrorCode::validation_error;
    require_object(j, path, code);
    reject_unknown(j,
                   {"id", "label", "category", "bio_require", "bio_consumption", "valence_effect",
                    "arousal_effect", "restorative", "embedding", "duration_ticks"},
                   path, code);

    for (auto key : {"id", "label", "category", "embedding"})
        if (!j.contains(key))
            throw Error(code, "missing required key", join_path(path, key));

    BehaviorSpec b;
    b.id = string_at(j["id"], join_path(path, "id"), code);
    if (b.id.empty())
        throw Error(code, "empty id", join_path(path, "id"));
    b.label = string_at(j["label"], join_path(path, "label"), code);
    const auto cat = category_from_name(string_at(j["category"], join_path(path, "category"), code));
    if (!cat)
        throw Error(code, "unknown category " + j["category"].dump(), join_path(path, "category"));
    b.category = *cat;
    if (j.contains("bio_require"))
        b.bio_require = number_in(j["bio_require"], join_path(path, "bio_require"), 0.0, 1.0, code);
    if (j.contains("bio_consumption"))
        b.bio_consumption = number_in(j["bio_consumption"], join_path(path, "bio_consumption"), -1.0, 1.0, code);
    if (j.contains("valence_effect"))
        b.valence_effect = number_in(j["valence_effect"], join_path(path, "valence_effect"), -1.0, 1.0, code);
    if (j.contains("arousal_effect"))
        b.arousal_effect = number_in(j["arousal_effect"], join_path(path, "arousal_effect"), -1.0, 1.0, code);
    if (j.contains("restorative")) {
        if (!j["restorative"].is_boolean())
            throw Error(code, "expected a boolean", join_path(path, "restorative"));
        b.restorative = j["restorative"].get<bool>();
    }
    if (j.contains("duration_ticks")) {
        const auto& d = j["duration_ticks"];
        if (!d.is_number_integer() || d.get<int>() < 1 || d.get<int>() > 96)
            throw Error(code, "expected an integer in [1, 96]", join_path(path, "duration_ticks"));
        b.duration_ticks = d.get<int>();
    }

    const std::string epath = join_path(path, "embedding");
    const auto& e = j["embedding"];
    require_object(e, epath, code);
    for (auto it = e.begin(); it != e.end(); ++it) {
        const auto drive = drive_from_name(it.key());
        if (!drive)
            throw Error(code, "unknown motivation dimension", join_path(epath, it.key()));
        b.embedding[*drive] = number_in(it.value(), join_path(epath, it.key()), 0.0, 1.0, code);
    }
    if (e.size() != kDriveCount)
        throw Error(code, "embedding needs all 12 dimensions", epath);
    return b;
}

} // namespace

BehaviorPool load_pool(std::string_view document)
{
    using namespace detail;
    constexpr auto code = ErrorCode::validation_error;
    const auto j = parse_json(document);
    require_object(j, "", code);
    reject_unknown(j, {"behaviors"}, "", code);
    if (!j.contains("behaviors") || !j["behaviors"].is_array())
        throw Error(code, "expected an array", "behaviors");

    BehaviorPool pool;
    std::set<std::string, std::less<>> ids;
    const auto& arr = j["behaviors"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        auto b = behavior_from_json(arr[i], "behaviors[" + std::to_string(i) + "]");
        if (!ids.insert(b.id).second)
            throw Error(code, "duplicate behavior id '" + b.id + "'", "behaviors[" + std::to_string(i) + "].id");
        pool.behaviors.push_back(std::move(b));
    }
    return pool;
}

BehaviorPool load_pool_file(const std::string& path)
{
    return detail::load_from_file(path, ErrorCode::io_error, [](const std::string& t) { return load_pool(t); });
}

} // namespace ctem
