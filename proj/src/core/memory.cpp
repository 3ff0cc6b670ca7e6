#include "ctem/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ctem/error.hpp"
#include "ctem/generator.hpp"
#include "json_util.hpp"

namespace ctem {

namespace {

constexpr SimTime kSecondsPerDay = 86400;

std::string lowercase(std::string_view s)
{
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string clip(std::string_view s, std::size_t n)
{
    std::string t = trim(s);
    for (auto& c : t)
        if (c == '\n' || c == '"')
            c = ' ';
    if (t.size() <= n)
        return t;
    return t.substr(0, n) + "...";
}

} // namespace

std::string_view to_string(Speaker s) noexcept
{
    return s == Speaker::user ? "user" : "agent";
}

DayIndex day_of(SimTime t, SimTime utc_offset_seconds) noexcept
{
    const SimTime local = t + utc_offset_seconds;
    DayIndex d = local / kSecondsPerDay;
    if (local % kSecondsPerDay < 0)
        --d;
    return d;
}

std::string format_date(DayIndex day)
{
    // Civil-from-days (proleptic Gregorian).
    std::int64_t z = day + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    std::int64_t y = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
    const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
    if (m <= 2)
        ++y;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lld", static_cast<long long>(y), static_cast<long long>(m),
                  static_cast<long long>(d));
    return buf;
}

std::string format_clock(SimTime t, SimTime utc_offset_seconds)
{
    const SimTime local = t + utc_offset_seconds;
    SimTime secs = local % kSecondsPerDay;
    if (secs < 0)
        secs += kSecondsPerDay;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(secs / 3600), static_cast<int>(secs % 3600 / 60));
    return buf;
}

std::optional<std::string> MemoryStore::fact(std::string_view key) const
{
    for (const auto& f : facts)
        if (f.key == key)
            return f.value;
    return std::nullopt;
}

double clustering_threshold(std::span<const double> gaps, const ClusteringParams& params)
{
    if (gaps.empty())
        return params.epsilon_floor_seconds;
    const double n = static_cast<double>(gaps.size());
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / n;
    double stddev = 0.0;
    if (gaps.size() > 1) {
        double ss = 0.0;
        for (double g : gaps)
            ss += (g - mean) * (g - mean);
        stddev = std::sqrt(ss / (n - 1.0));
    }
    return std::max(mean + stddev, params.epsilon_floor_seconds);
}

std::vector<DialogCluster> cluster_dialogs(std::vector<DialogTurn> turns, const ClusteringParams& params)
{
    std::erase_if(turns, [](const DialogTurn& t) { return t.at < 0; });
    std::vector<DialogCluster> clusters;
    if (turns.empty())
        return clusters;

    std::stable_sort(turns.begin(), turns.end(),
                     [](const DialogTurn& a, const DialogTurn& b) { return a.at < b.at; });

    std::vector<double> gaps;
    gaps.reserve(turns.size());
    for (std::size_t i = 1; i < turns.size(); ++i)
        gaps.push_back(static_cast<double>(turns[i].at - turns[i - 1].at));
    const double eps = clustering_threshold(gaps, params);

    DialogCluster current;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (i > 0 && gaps[i - 1] > eps) {
            clusters.push_back(std::move(current));
            current = DialogCluster{};
        }
        if (current.turns.empty())
            current.start = turns[i].at;
        current.end = turns[i].at;
        current.turns.push_back(std::move(turns[i]));
    }
    clusters.push_back(std::move(current));
    return clusters;
}

std::vector<std::string> extract_user_facts(std::string_view text)
{
    std::vector<std::string> facts;
    const std::string lower = lowercase(text);

    auto value_after = [&](std::size_t pos) {
        std::size_t end = pos;
        while (end < text.size() && text[end] != '.' && text[end] != ',' && text[end] != '!' &&
               text[end] != '?' && text[end] != ';' && text[end] != '\n')
            ++end;
        std::string v = trim(text.substr(pos, end - pos));
        if (v.size() > 40)
            v.resize(40);
        return trim(v);
    };
    auto key_of = [](std::string k) {
        k = trim(k);
        for (auto& c : k)
            if (!std::isalnum(static_cast<unsigned char>(c)))
                c = '_';
        return k;
    };

    if (auto p = lower.find("my name is "); p != std::string::npos) {
        if (auto v = value_after(p + 11); !v.empty())
            facts.push_back("name=" + v);
    }
    if (auto p = lower.find("call me "); p != std::string::npos) {
        if (auto v = value_after(p + 8); !v.empty())
            facts.push_back("nickname=" + v);
    }
    for (std::string_view marker : {"my favorite ", "my favourite "}) {
        std::size_t from = 0;
        while (true) {
            const auto p = lower.find(marker, from);
            if (p == std::string::npos)
                break;
            const auto start = p + marker.size();
            const auto is = lower.find(" is ", start);
            const auto stop = lower.find_first_of(".,!?;\n", start);
            if (is != std::string::npos && (stop == std::string::npos || is < stop)) {
                const auto key = key_of(lower.substr(start, is - start));
                const auto v = value_after(is + 4);
                if (!key.empty() && !v.empty())
                    facts.push_back("favorite_" + key + "=" + v);
            }
            from = start;
        }
    }
    return facts;
}

std::pair<std::string, std::vector<std::string>> split_fact_lines(std::string_view output)
{
    std::string prose;
    std::vector<std::string> facts;
    std::size_t pos = 0;
    while (pos <= output.size()) {
        auto nl = output.find('\n', pos);
        if (nl == std::string_view::npos)
            nl = output.size();
        const std::string line = trim(output.substr(pos, nl - pos));
        if (line.rfind("FACT:", 0) == 0) {
            const std::string payload = trim(std::string_view(line).substr(5));
            if (payload.find('=') != std::string::npos)
                facts.push_back(payload);
        } else if (!line.empty()) {
            if (!prose.empty())
                prose += '\n';
            prose += line;
        }
        pos = nl + 1;
    }
    return {prose, facts};
}

std::string render_cluster_draft(const DialogCluster& cluster, SimTime utc_offset_seconds)
{
    std::size_t users = 0;
    std::size_t agents = 0;
    const DialogTurn* first_user = nullptr;
    const DialogTurn* last_user = nullptr;
    for (const auto& t : cluster.turns) {
        if (t.speaker == Speaker::user) {
            ++users;
            if (!first_user)
                first_user = &t;
            last_user = &t;
        } else {
            ++agents;
        }
    }

    std::string s = format_clock(cluster.start, utc_offset_seconds) + "-" +
                    format_clock(cluster.end, utc_offset_seconds) + ": " + std::to_string(users) +
                    " user and " + std::to_string(agents) + " agent turns.";
    if (first_user)
        s += " Opened with \"" + clip(first_user->text, 60) + "\".";
    if (last_user && last_user != first_user)
        s += " Closed with \"" + clip(last_user->text, 60) + "\".";
    for (const auto& t : cluster.turns)
        if (t.speaker == Speaker::user)
            for (const auto& f : extract_user_facts(t.text))
                s += "\nFACT: " + f;
    return s;
}

std::string render_day_draft(const SummaryInput& input, std::span<const std::string> partials)
{
    std::string s = "Day " + format_date(input.day) + ".";
    std::vector<std::string> facts;
    if (partials.empty()) {
        s += " No conversations.";
    } else {
        for (const auto& p : partials) {
            auto [prose, f] = split_fact_lines(p);
            if (!prose.empty())
                s += "\n" + prose;
            facts.insert(facts.end(), f.begin(), f.end());
        }
    }
    s += "\nActivities: ";
    if (input.executed_behaviors.empty()) {
        s += "none.";
    } else {
        for (std::size_t i = 0; i < input.executed_behaviors.size(); ++i)
            s += (i ? ", " : "") + input.executed_behaviors[i];
        s += ".";
    }
    for (const auto& f : facts)
        s += "\nFACT: " + f;
    return s;
}

SummaryResult summarize_day(const SummaryInput& input, TextGenerator& generator)
{
    SummaryResult result;
    result.summary.day = input.day;
    result.summary.clusters_covered = input.clusters.size();

    std::vector<std::string> drafts;
    for (const auto& c : input.clusters)
        drafts.push_back(render_cluster_draft(c, input.utc_offset_seconds));

    std::string output;
    try {
        std::vector<std::string> partials;
        for (std::size_t i = 0; i < input.clusters.size(); ++i) {
            std::string prompt =
                "[SUMMARIZE CONVERSATION]\n"
                "Summarize this conversation as part of a daily-life diary. Keep events in timeline order, "
                "mention only what happened, and list stated user facts as lines 'FACT: key=value'.\n";
            for (const auto& t : input.clusters[i].turns)
                prompt += format_clock(t.at, input.utc_offset_seconds) + " " + std::string(to_string(t.speaker)) +
                          ": " + t.text + "\n";
            prompt += wrap_draft(drafts[i]);
            ++result.generator_calls;
            partials.push_back(generator.generate(prompt, 800));
        }

        std::string merge =
            "[MERGE DAY]\n"
            "Merge these partial summaries into one coherent daily record in timeline order. "
            "Keep every 'FACT: key=value' line.\n";
        for (const auto& p : partials)
            merge += "- " + p + "\n";
        merge += wrap_draft(render_day_draft(input, partials));
        ++result.generator_calls;
        output = generator.generate(merge, 1600);
    } catch (const std::exception& e) {
        result.used_fallback = true;
        result.error = e.what();
        output = render_day_draft(input, drafts);
    }

    auto [prose, facts] = split_fact_lines(output);
    result.summary.text = std::move(prose);
    result.summary.salient_facts = std::move(facts);
    return result;
}

void update_memory(MemoryStore& m, EpisodicSummary e, SimTime at)
{
    for (const auto& s : m.summaries)
        if (s.day == e.day)
            throw Error(ErrorCode::duplicate_day, "summary for " + format_date(e.day) + " already stored");

    for (const auto& f : e.salient_facts) {
        const auto eq = f.find('=');
        if (eq == std::string::npos)
            continue;
        const std::string key = trim(std::string_view(f).substr(0, eq));
        const std::string value = trim(std::string_view(f).substr(eq + 1));
        auto it = std::find_if(m.facts.begin(), m.facts.end(), [&](const Fact& x) { return x.key == key; });
        if (it == m.facts.end()) {
            m.facts.push_back({key, value, m.next_fact_seq++, at});
        } else {
            it->value = value;
            it->seq = m.next_fact_seq++;
            it->at = at;
        }
    }
    m.summaries.push_back(std::move(e));
}

std::vector<ContextSnippet> retrieve_context(const MemoryStore& m, SimTime now, std::size_t budget,
                                             std::size_t closing_turns)
{
    (void)now;
    std::vector<ContextSnippet> out;

    if (!m.summaries.empty()) {
        const auto newest = std::max_element(m.summaries.begin(), m.summaries.end(),
                                             [](const auto& a, const auto& b) { return a.day < b.day; });
        out.push_back({ContextSnippet::Kind::summary, (newest->day + 1) * kSecondsPerDay - 1,
                       "Earlier: " + newest->text});
    }

    std::vector<const Fact*> facts;
    for (const auto& f : m.facts)
        facts.push_back(&f);
    std::sort(facts.begin(), facts.end(), [](const Fact* a, const Fact* b) { return a->seq > b->seq; });
    for (std::size_t i = 0; i < facts.size() && i < budget; ++i)
        out.push_back({ContextSnippet::Kind::fact, facts[i]->at,
                       "Known about the user: " + facts[i]->key + " = " + facts[i]->value});

    if (!m.turns.empty() && closing_turns > 0) {
        const std::size_t window = std::min<std::size_t>(m.turns.size(), 200);
        std::vector<DialogTurn> recent(m.turns.end() - static_cast<std::ptrdiff_t>(window), m.turns.end());
        const auto clusters = cluster_dialogs(std::move(recent));
        if (!clusters.empty()) {
            const auto& last = clusters.back().turns;
            const std::size_t from = last.size() > closing_turns ? last.size() - closing_turns : 0;
            std::string text = "Last conversation ended with:";
            for (std::size_t i = from; i < last.size(); ++i)
                text += std::string("\n  ") + (last[i].speaker == Speaker::user ? "user" : "Auri") + ": " +
                        clip(last[i].text, 160);
            out.push_back({ContextSnippet::Kind::closing_turns, last.back().at, std::move(text)});
        }
    }
    return out;
}

nlohmann::json to_json(const DialogTurn& t)
{
    nlohmann::json j{{"id", t.id}, {"at", t.at}, {"speaker", to_string(t.speaker)}, {"text", t.text}};
    if (t.feedback)
        j["feedback"] = *t.feedback;
    return j;
}

DialogTurn turn_from_json(const nlohmann::json& j)
{
    DialogTurn t;
    t.id = j.at("id").get<std::int64_t>();
    t.at = j.at("at").get<SimTime>();
    t.speaker = j.at("speaker").get<std::string>() == "user" ? Speaker::user : Speaker::agent;
    t.text = j.at("text").get<std::string>();
    if (j.contains("feedback"))
        t.feedback = j["feedback"];
    return t;
}

nlohmann::json to_json(const MemoryStore& m)
{
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : m.turns)
        turns.push_back(to_json(t));
    nlohmann::json summaries = nlohmann::json::array();
    for (const auto& s : m.summaries)
        summaries.push_back({{"day", s.day},
                             {"text", s.text},
                             {"clusters_covered", s.clusters_covered},
                             {"salient_facts", s.salient_facts}});
    nlohmann::json facts = nlohmann::json::array();
    for (const auto& f : m.facts)
        facts.push_back({{"key", f.key}, {"value", f.value}, {"seq", f.seq}, {"at", f.at}});
    return {{"turns", turns}, {"summaries", summaries}, {"facts", facts}, {"next_fact_seq", m.next_fact_seq}};
}

MemoryStore memory_from_json(const nlohmann::json& j)
{
    MemoryStore m;
    for (const auto& t : j.at("turns"))
        m.turns.push_back(turn_from_json(t));
    for (const auto& s : j.at("summaries"))
        m.summaries.push_back({s.at("day").get<DayIndex>(), s.at("text").get<std::string>(),
                               s.at("clusters_covered").get<std::size_t>(),
                               s.at("salient_facts").get<std::vector<std::string>>()});
    for (const auto& f : j.at("facts"))
        m.facts.push_back({f.at("key").get<std::string>(), f.at("value").get<std::string>(),
                           f.at("seq").get<std::uint64_t>(), f.at("at").get<SimTime>()});
    m.next_fact_seq = j.at("next_fact_seq").get<std::uint64_t>();
    return m;
}

} // namespace ctem
