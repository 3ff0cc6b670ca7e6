// Independent reference implementations used as test oracles. Nothing here
// calls into the code under test except for plain data accessors.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

namespace oracle {

inline const std::array<const char*, 3> kBio{"physiological_drive", "pain_avoidance", "health_preservation"};
inline const std::array<const char*, 9> kPsySoc{"emotional_reactivity", "risk_aversion",       "goal_persistence",
                                                "curiosity_drive",      "norm_adherence",      "prosocial_motivation",
                                                "self_presentation",    "role_duty_sense",     "group_affiliation"};

inline double weight(double energy, double k = 8.0, double center = 0.5)
{
    const double sigma = 1.0 / (1.0 + std::exp(-k * (energy - center)));
    return 1.0 - sigma;
}

/// Score from named drive maps (e.g. the JSON form of the motivation vectors).
inline double score(const nlohmann::json& drives, const nlohmann::json& embedding, double energy, double bio_require,
                    double k = 8.0)
{
    if (energy < bio_require)
        return -1.0;
    double bio = 0.0;
    for (const char* name : kBio)
        bio += drives.at(name).get<double>() * embedding.at(name).get<double>();
    bio /= 3.0;
    double ps = 0.0;
    for (const char* name : kPsySoc)
        ps += drives.at(name).get<double>() * embedding.at(name).get<double>();
    ps /= 9.0;
    const double w = weight(energy, k);
    return w * bio + (1.0 - w) * ps;
}

/// Ids ordered by score descending, then id ascending.
inline std::vector<std::string> rank(std::vector<std::pair<std::string, double>> scored)
{
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> ids;
    for (auto& s : scored)
        ids.push_back(s.first);
    return ids;
}

/// Gap clustering: drop negatives, sort, eps = max(mean + sample sd, floor),
/// split where gap > eps. Returns clusters of timestamps.
inline std::vector<std::vector<std::int64_t>> gap_clusters(std::vector<std::int64_t> ts, double floor = 60.0)
{
    std::vector<std::int64_t> valid;
    for (auto t : ts)
        if (t >= 0)
            valid.push_back(t);
    std::sort(valid.begin(), valid.end());
    std::vector<std::vector<std::int64_t>> out;
    if (valid.empty())
        return out;
    std::vector<double> gaps;
    for (std::size_t i = 1; i < valid.size(); ++i)
        gaps.push_back(static_cast<double>(valid[i] - valid[i - 1]));
    double eps = floor;
    if (!gaps.empty()) {
        long double sum = 0;
        for (double g : gaps)
            sum += g;
        const double mean = static_cast<double>(sum / gaps.size());
        double sd = 0.0;
        if (gaps.size() > 1) {
            long double ss = 0;
            for (double g : gaps)
                ss += (g - mean) * (g - mean);
            sd = std::sqrt(static_cast<double>(ss / (gaps.size() - 1)));
        }
        eps = std::max(mean + sd, floor);
    }
    out.push_back({valid[0]});
    for (std::size_t i = 1; i < valid.size(); ++i) {
        if (gaps[i - 1] > eps)
            out.emplace_back();
        out.back().push_back(valid[i]);
    }
    return out;
}

/// Consensus over levels 0..3: a level with more than half the votes wins;
/// otherwise the smallest level L with #{v <= L} >= floor(n/2) + 1.
inline int consensus(const std::vector<int>& votes)
{
    const int n = static_cast<int>(votes.size());
    for (int level = 0; level <= 3; ++level)
        if (2 * static_cast<int>(std::count(votes.begin(), votes.end(), level)) > n)
            return level;
    for (int level = 0; level <= 3; ++level) {
        const auto at_most = std::count_if(votes.begin(), votes.end(), [&](int v) { return v <= level; });
        if (at_most >= n / 2 + 1)
            return level;
    }
    return 3;
}

inline std::vector<double> softmax(const std::vector<double>& scores, double tau = 1.0)
{
    std::vector<double> p;
    double z = 0.0;
    for (double s : scores)
        z += std::exp(s / tau);
    for (double s : scores)
        p.push_back(std::exp(s / tau) / z);
    return p;
}

/// Upper-tail p-value of Pearson's statistic.
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected)
{
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i)
        stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    if (observed.size() < 2)
        return 1.0;
    boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double rest(double x, double beta, double lambda)
{
    return x + lambda * (beta - x);
}

inline double engagement(std::size_t len, double gap_seconds, bool has_previous)
{
    const double length_part = std::min(1.0, static_cast<double>(len) / 280.0);
    const double recency = has_previous ? std::max(0.0, 1.0 - gap_seconds / 3600.0) : 0.0;
    return 0.5 * length_part + 0.5 * recency;
}

struct SummaryCounts {
    std::uint64_t ticks = 0;
    std::map<std::string, std::uint64_t> executed;
    std::uint64_t replans = 0;
    std::uint64_t proactive = 0;
    std::array<double, 3> sum{}, min{1e9, 1e9, 1e9}, max{-1e9, -1e9, -1e9};
    double final_familiarity = 0.0;
};

/// One pass over JSONL lines.
inline SummaryCounts summarize_jsonl(const std::vector<nlohmann::json>& records)
{
    SummaryCounts c;
    const std::array<const char*, 3> dims{"energy", "valence", "arousal"};
    for (const auto& r : records) {
        const auto ev = r.at("event").get<std::string>();
        if (ev == "tick") {
            ++c.ticks;
            for (std::size_t d = 0; d < 3; ++d) {
                const double x = r.at("physio").at(dims[d]).get<double>();
                c.sum[d] += x;
                c.min[d] = std::min(c.min[d], x);
                c.max[d] = std::max(c.max[d], x);
            }
        } else if (ev == "execute") {
            ++c.executed[r.at("payload").at("category").get<std::string>()];
        } else if (ev == "replan") {
            ++c.replans;
        } else if (ev == "message_out" && r.at("payload").at("mode") == "proactive") {
            ++c.proactive;
        }
        c.final_familiarity = r.at("familiarity").get<double>();
    }
    return c;
}

} // namespace oracle
