// Headless simulator: runs agents against a scripted user and writes
// trajectory logs.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctem/ctem.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    int days = 1;
    std::string persona;
    std::string pool;
    std::optional<std::uint64_t> seed;
    std::string script;
    std::string config;
    std::string out;
    std::string snapshot_out;
    bool summary = false;
    int parallel = 1;
};

struct Outcome {
    std::uint64_t seed = 0;
    std::string summary;
    std::optional<ctem::api::Failure> error;
};

std::string with_seed(const std::string& path, std::uint64_t seed)
{
    if (path.empty())
        return path;
    fs::path p(path);
    return (p.parent_path() / (p.stem().string() + ".seed" + std::to_string(seed) + p.extension().string())).string();
}

Outcome run_one(const Options& o, std::optional<std::uint64_t> seed, bool suffix)
{
    Outcome result;
    try {
        nlohmann::json overrides = nlohmann::json::object();
        if (!o.persona.empty())
            overrides["paths"]["persona"] = fs::absolute(o.persona).string();
        if (!o.pool.empty())
            overrides["paths"]["pool"] = fs::absolute(o.pool).string();
        if (seed)
            overrides["rng_seed"] = *seed;

        ctem::api::Engine engine(o.config, overrides.dump());
        if (!o.script.empty())
            engine.load_script(o.script);
        const std::uint64_t s = seed.value_or(0);
        result.seed = s;
        engine.run_days(o.days, suffix ? with_seed(o.out, s) : o.out);
        if (!o.snapshot_out.empty())
            engine.save_snapshot(suffix ? with_seed(o.snapshot_out, s) : o.snapshot_out);
        result.summary = engine.summary_json();
    } catch (const ctem::api::Failure& f) {
        result.error = f;
    }
    return result;
}

} // namespace

int main(int argc, char** argv)
{
    Options o;
    std::uint64_t seed_value = 0;
    CLI::App app{"ctem-sim: deterministic companion-agent simulator"};
    app.add_option("--days", o.days, "Simulated days to run")->check(CLI::Range(1, 3650));
    app.add_option("--persona", o.persona, "Persona JSON file");
    app.add_option("--pool", o.pool, "Behavior pool JSON file");
    auto* seed_opt = app.add_option("--seed", seed_value, "RNG seed");
    app.add_option("--user-script", o.script, "Scripted user JSON file");
    app.add_option("--config", o.config, "Engine config JSON file");
    app.add_option("--out", o.out, "Trajectory JSONL output")->required();
    app.add_option("--snapshot-out", o.snapshot_out, "Write the final snapshot here");
    app.add_flag("--summary", o.summary, "Print summary statistics as JSON");
    app.add_option("--parallel", o.parallel, "Run k consecutive seeds concurrently")->check(CLI::Range(1, 64));
    CLI11_PARSE(app, argc, argv);
    if (*seed_opt)
        o.seed = seed_value;

    for (const auto* p : {&o.persona, &o.pool, &o.script, &o.config}) {
        if (!p->empty() && !fs::is_regular_file(*p)) {
            std::cerr << "ctem-sim: file not found: " << *p << "\n";
            return 2;
        }
    }

    std::vector<Outcome> outcomes(static_cast<std::size_t>(o.parallel));
    if (o.parallel == 1) {
        outcomes[0] = run_one(o, o.seed, false);
    } else {
        const std::uint64_t base = o.seed.value_or(42);
        std::vector<std::thread> workers;
        for (int k = 0; k < o.parallel; ++k)
            workers.emplace_back([&, k] { outcomes[k] = run_one(o, base + k, true); });
        for (auto& w : workers)
            w.join();
    }

    int code = 0;
    for (const auto& r : outcomes) {
        if (!r.error)
            continue;
        const auto& f = *r.error;
        std::cerr << "ctem-sim: " << f.what() << "\n";
        const auto s = f.status();
        const bool input_error = s == CTEM_ERR_CONFIG || s == CTEM_ERR_IO || s == CTEM_ERR_PARSE ||
                                 s == CTEM_ERR_VALIDATION || s == CTEM_ERR_VERSION || s == CTEM_ERR_CORRUPT;
        code = std::max(code, input_error ? 2 : 1);
    }
    if (code != 0)
        return code;

    if (o.summary) {
        if (o.parallel == 1) {
            std::cout << outcomes[0].summary << "\n";
        } else {
            nlohmann::ordered_json all = nlohmann::ordered_json::array();
            for (const auto& r : outcomes)
                all.push_back({{"seed", r.seed}, {"summary", nlohmann::ordered_json::parse(r.summary)}});
            std::cout << all.dump(2) << "\n";
        }
    }
    return 0;
}
