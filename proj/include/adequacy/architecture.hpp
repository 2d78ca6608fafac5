#pragma once

// Named level stacks such as "Exact|HGB+Gre|HGB+SVR|Avg" (top level first)
// and the loaded system they run on.

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "adequacy/avg_model.hpp"
#include "adequacy/config.hpp"
#include "adequacy/levels.hpp"
#include "adequacy/mlmc.hpp"
#include "adequacy/scenario.hpp"
#include "adequacy/surrogate.hpp"

namespace adequacy {

inline constexpr std::array<std::string_view, 5> level_names{"Exact", "Gre", "Avg", "HGB+Gre", "HGB+SVR"};

struct ArchitectureSpec {
    std::vector<std::string> levels;  // top first

    std::string str() const {
        std::string s;
        for (const auto& l : levels) s += (s.empty() ? "" : "|") + l;
        return s;
    }
    bool uses(std::string_view name) const { return std::find(levels.begin(), levels.end(), name) != levels.end(); }
    bool needs_surrogates() const { return uses("HGB+Gre") || uses("HGB+SVR"); }
    bool analytic_bottom() const { return levels.back() == "Avg"; }
};

inline ArchitectureSpec parse_architecture(std::string_view text) {
    ArchitectureSpec spec;
    std::size_t start = 0;
    for (;;) {
        const std::size_t bar = text.find('|', start);
        std::string_view part = text.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start);
        while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
        while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
        if (std::find(level_names.begin(), level_names.end(), part) == level_names.end())
            throw ConfigError("architecture '" + std::string(text) + "': unknown level '" + std::string(part) +
                              "' (expected Exact, Gre, Avg, HGB+Gre or HGB+SVR)");
        if (spec.uses(part)) throw ConfigError("architecture '" + std::string(text) + "': duplicate level '" + std::string(part) + "'");
        spec.levels.emplace_back(part);
        if (bar == std::string_view::npos) break;
        start = bar + 1;
    }
    if (spec.levels.front() != "Exact") throw ConfigError("architecture '" + std::string(text) + "': top level must be Exact");
    const auto avg = std::find(spec.levels.begin(), spec.levels.end(), "Avg");
    if (avg != spec.levels.end() && avg + 1 != spec.levels.end())
        throw ConfigError("architecture '" + std::string(text) + "': Avg may only be the bottom level");
    return spec;
}

/// Everything needed to sample and evaluate scenarios of one system.
struct AdequacySystem {
    TraceLibrary demand;
    TraceLibrary wind;
    std::vector<GeneratingUnit> fleet;
    StorageFleet storage;
    AvgDispatchProfile profile;
    std::uint64_t hash = 0;
    std::shared_ptr<const SurrogateBundle> bundle;  // set once surrogates are trained or loaded

    ScenarioSource<Scenario> source() const {
        return [this](std::uint64_t seed) { return sample_scenario(demand, wind, fleet, seed); };
    }

    /// Exact Average-model risk; convolution is cached after the first call.
    const OutcomeVector& avg_risk() const {
        if (!avg_risk_) avg_risk_ = analytic_avg_risk(build_copt(fleet), demand, wind, profile);
        return *avg_risk_;
    }

private:
    mutable std::optional<OutcomeVector> avg_risk_;
};

inline DailyProfile nominal_profile(const SystemConfig& cfg, const TraceLibrary& demand, const TraceLibrary& wind) {
    DailyProfile d = mean_daily_profile(demand);
    if (cfg.nominal_profile == NominalProfile::net) {
        const DailyProfile w = mean_daily_profile(wind);
        for (std::size_t h = 0; h < hours_per_day; ++h) d[h] -= w[h];
    }
    return d;
}

inline AdequacySystem make_system(const SystemConfig& cfg, TraceLibrary demand, TraceLibrary wind) {
    AdequacySystem s;
    s.fleet = cfg.fleet();
    s.storage = cfg.storage_fleet();
    s.profile = average_profile(s.storage, nominal_profile(cfg, demand, wind));
    s.demand = std::move(demand);
    s.wind = std::move(wind);
    s.hash = system_hash(cfg);
    return s;
}

/// Generates the trace libraries in memory from the config's seeds.
inline AdequacySystem make_system(const SystemConfig& cfg) {
    return make_system(cfg, generate_demand_library(cfg.demand, derive_seed(cfg.library_seed, {1})),
                       generate_wind_library(cfg.wind, derive_seed(cfg.library_seed, {2})));
}

/// Bottom-first level stack for `spec`.
inline LevelStack<Scenario> build_stack(const ArchitectureSpec& spec, const AdequacySystem& sys,
                                        const std::map<std::string, double>& nominal_costs = {}) {
    if (spec.needs_surrogates() && !sys.bundle)
        throw std::logic_error("architecture " + spec.str() + " needs trained surrogates");
    auto hint = [&](const std::string& name) {
        const auto it = nominal_costs.find(name);
        return it == nominal_costs.end() ? 0.0 : it->second;
    };
    LevelStack<Scenario> stack;
    for (auto it = spec.levels.rbegin(); it != spec.levels.rend(); ++it) {
        const std::string& name = *it;
        if (name == "Exact") stack.push_back(std::make_shared<ExactLevel>(sys.storage, hint(name)));
        else if (name == "Gre") stack.push_back(std::make_shared<GreedyLevel>(sys.storage, hint(name)));
        else if (name == "Avg") stack.push_back(std::make_shared<AvgLevel>(sys.profile, hint(name)));
        else if (name == "HGB+Gre") stack.push_back(std::make_shared<SurrogateLevel>(sys.bundle, EnsPart::greedy, sys.storage, hint(name)));
        else stack.push_back(std::make_shared<SurrogateLevel>(sys.bundle, EnsPart::svr, sys.storage, hint(name)));
    }
    return stack;
}

inline MlmcOptions make_options(const RunConfig& run, const ArchitectureSpec& spec, const AdequacySystem& sys) {
    MlmcOptions o;
    o.budget = run.budget;
    o.budget_mode = run.budget_mode;
    o.exploratory_n = run.exploratory_n;
    o.target = run.target;
    o.reuse_exploration = run.reuse_exploration;
    o.seed = run.seed;
    o.workers = run.workers ? run.workers : std::max(1u, std::thread::hardware_concurrency());
    o.chunk_size = run.chunk_size;
    o.scenario_cost = run.scenario_cost;
    if (spec.analytic_bottom()) o.analytic_bottom = sys.avg_risk();
    return o;
}

/// `repeats` independent runs; run r is seeded with derive_seed(run.seed, {r}).
inline std::vector<MlmcEstimate> run_architecture(const ArchitectureSpec& spec, const AdequacySystem& sys, const RunConfig& run) {
    const auto stack = build_stack(spec, sys, run.nominal_costs);
    MlmcOptions opt = make_options(run, spec, sys);
    const auto source = sys.source();
    std::vector<MlmcEstimate> out;
    for (std::size_t r = 0; r < run.repeats; ++r) {
        opt.seed = derive_seed(run.seed, {r});
        out.push_back(run_mlmc(stack, source, opt));
    }
    return out;
}

}  // namespace adequacy
