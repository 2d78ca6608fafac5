#pragma once

// Experiment configuration: the system to study, how surrogates are trained,
// how estimation runs are budgeted, and where artifacts go. Every field has a
// default, so a config file only needs to list what it changes.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adequacy/dispatch.hpp"
#include "adequacy/gbt.hpp"
#include "adequacy/io.hpp"
#include "adequacy/mlmc.hpp"
#include "adequacy/scenario.hpp"
#include "adequacy/svr.hpp"

namespace adequacy {

/// Malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int config_schema_version = 1;

struct UnitGroup {
    std::size_t count = 1;
    double capacity = 0.0;
    double fail_rate = 0.0;
    double repair_rate = 1.0;
    friend bool operator==(const UnitGroup&, const UnitGroup&) = default;
};

enum class NominalProfile { demand, net };

struct SystemConfig {
    std::uint64_t library_seed = 1;
    DemandParams demand;
    WindParams wind;
    std::vector<UnitGroup> thermal;
    std::vector<std::pair<double, double>> storage;  // (power MW, energy MWh)
    double charge_efficiency = 1.0;
    double discharge_efficiency = 1.0;
    NominalProfile nominal_profile = NominalProfile::demand;

    std::vector<GeneratingUnit> fleet() const {
        std::vector<GeneratingUnit> out;
        for (const auto& g : thermal)
            for (std::size_t i = 0; i < g.count; ++i) out.push_back({g.capacity, g.fail_rate, g.repair_rate});
        return out;
    }
    StorageFleet storage_fleet() const { return StorageFleet::full(storage); }
    friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

struct TrainingConfig {
    std::size_t n_days = 5000;
    std::size_t holdout_days = 1000;
    std::uint64_t seed = 7;
    double theta = 0.5;
    bool train_svr = true;
    GbtParams gbt;
    SvrParams svr;
    friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct RunConfig {
    std::string architecture = "Exact|HGB+Gre|HGB+SVR|Avg";
    double budget = 60.0;
    BudgetMode budget_mode = BudgetMode::wall_clock;
    std::size_t exploratory_n = 500;
    Metric target = Metric::eens;
    std::size_t repeats = 1;
    std::uint64_t seed = 1;
    unsigned workers = 0;  // 0 = available cores
    std::size_t chunk_size = 64;
    bool reuse_exploration = true;
    double scenario_cost = 3.5e-5;                  // nominal seconds per scenario draw
    std::map<std::string, double> nominal_costs{   // nominal seconds per model evaluation
        {"Exact", 6.0e-5}, {"Gre", 3.5e-5}, {"HGB+Gre", 3.5e-5}, {"HGB+SVR", 4.5e-5}, {"Avg", 3.0e-6}};
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ExperimentConfig {
    SystemConfig system;
    TrainingConfig training;
    RunConfig run;
    std::filesystem::path output_dir = "out";

    std::filesystem::path data_dir() const { return output_dir / "data"; }
    std::filesystem::path model_dir() const { return output_dir / "models"; }
    std::filesystem::path report_dir() const { return output_dir / "reports"; }
};

/// The shipped reference system: a 51 GW thermal fleet of 30 units against
/// a 50 GW peak, 10 GW of wind and 27 storage units.
inline SystemConfig reference_system() {
    SystemConfig s;
    const double fail = 1.0 / 1500.0, repair = 1.0 / 100.0;
    s.thermal = {{4, 2458.0, fail, repair}, {6, 2048.0, fail, repair}, {6, 1843.0, fail, repair},
                 {6, 1536.0, fail, repair}, {4, 1229.0, fail, repair}, {4, 922.0, fail, repair}};
    s.storage = {{1020.0, 5400.0}, {240.0, 900.0}, {180.0, 1080.0}, {216.0, 780.0}};
    for (int i = 0; i < 23; ++i) {
        const double p = 30.0 + 6.0 * i;
        s.storage.push_back({p, p * (1.0 + 0.25 * (i % 5))});
    }
    return s;
}

inline ExperimentConfig default_config() {
    ExperimentConfig c;
    c.system = reference_system();
    return c;
}

inline std::string_view budget_mode_name(BudgetMode m) { return m == BudgetMode::wall_clock ? "wall_clock" : "nominal_cost"; }

inline BudgetMode parse_budget_mode(std::string_view s) {
    if (s == "wall_clock") return BudgetMode::wall_clock;
    if (s == "nominal_cost") return BudgetMode::nominal_cost;
    throw ConfigError("unknown budget_mode '" + std::string(s) + "' (expected wall_clock or nominal_cost)");
}

namespace detail {

/// Reads an optional key into `out`, keeping the default when absent.
template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type " + j.at(key).dump());
    }
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

}  // namespace detail

inline nlohmann::json to_json(const SystemConfig& s) {
    nlohmann::json thermal = nlohmann::json::array(), storage = nlohmann::json::array();
    for (const auto& g : s.thermal)
        thermal.push_back({{"count", g.count}, {"capacity", g.capacity}, {"fail_rate", g.fail_rate}, {"repair_rate", g.repair_rate}});
    for (auto [p, e] : s.storage) storage.push_back({{"power", p}, {"energy", e}});
    const auto& d = s.demand;
    const auto& w = s.wind;
    return {{"library_seed", s.library_seed},
            {"demand",
             {{"n_traces", d.n_traces}, {"peak_mw", d.peak_mw}, {"daily_shape", d.daily_shape},
              {"seasonal_amplitude", d.seasonal_amplitude}, {"peak_day", d.peak_day}, {"weekend_factor", d.weekend_factor},
              {"noise_sigma", d.noise_sigma}, {"noise_persistence", d.noise_persistence},
              {"hourly_noise_sigma", d.hourly_noise_sigma}}},
            {"wind",
             {{"n_traces", w.n_traces}, {"capacity_mw", w.capacity_mw}, {"mean_capacity_factor", w.mean_capacity_factor},
              {"persistence", w.persistence}, {"spread", w.spread}, {"seasonal_amplitude", w.seasonal_amplitude}}},
            {"thermal_units", thermal},
            {"storage_units", storage},
            {"charge_efficiency", s.charge_efficiency},
            {"discharge_efficiency", s.discharge_efficiency},
            {"nominal_profile", s.nominal_profile == NominalProfile::demand ? "demand" : "net"}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    const auto& t = c.training;
    const auto& r = c.run;
    return {{"schema_version", config_schema_version},
            {"system", to_json(c.system)},
            {"training",
             {{"n_days", t.n_days}, {"holdout_days", t.holdout_days}, {"seed", t.seed}, {"theta", t.theta},
              {"train_svr", t.train_svr},
              {"gbt",
               {{"iterations", t.gbt.iterations}, {"learning_rate", t.gbt.learning_rate}, {"max_bins", t.gbt.max_bins},
                {"max_leaves", t.gbt.max_leaves}, {"min_samples_leaf", t.gbt.min_samples_leaf}, {"l2_regularization", t.gbt.l2_regularization}}},
              {"svr",
               {{"c", t.svr.c}, {"epsilon", t.svr.epsilon}, {"gamma", t.svr.gamma}, {"tolerance", t.svr.tolerance},
                {"max_sweeps", t.svr.max_sweeps}}}}},
            {"run",
             {{"architecture", r.architecture}, {"budget", r.budget}, {"budget_mode", budget_mode_name(r.budget_mode)},
              {"exploratory_n", r.exploratory_n}, {"target", metric_name(r.target)}, {"repeats", r.repeats},
              {"seed", r.seed}, {"workers", r.workers}, {"chunk_size", r.chunk_size},
              {"reuse_exploration", r.reuse_exploration}, {"scenario_cost", r.scenario_cost},
              {"nominal_costs", r.nominal_costs}}},
            {"output", {{"dir", c.output_dir.generic_string()}}}};
}

inline void validate(const ExperimentConfig& c) {
    const auto& s = c.system;
    if (s.demand.n_traces == 0 || s.wind.n_traces == 0) throw ConfigError("system: trace libraries need at least one trace");
    if (!(s.demand.peak_mw > 0.0)) throw ConfigError("system.demand.peak_mw must be positive");
    if (!(s.wind.capacity_mw >= 0.0)) throw ConfigError("system.wind.capacity_mw must be >= 0");
    if (!(s.wind.mean_capacity_factor > 0.0 && s.wind.mean_capacity_factor < 1.0))
        throw ConfigError("system.wind.mean_capacity_factor must be in (0, 1)");
    if (s.thermal.empty()) throw ConfigError("system.thermal_units is empty");
    for (const auto& g : s.thermal) {
        if (g.count == 0) throw ConfigError("system.thermal_units: count must be >= 1");
        try {
            GeneratingUnit{g.capacity, g.fail_rate, g.repair_rate}.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("system.thermal_units: ") + e.what());
        }
    }
    if (s.storage.empty()) throw ConfigError("system.storage_units is empty");
    for (auto [p, e] : s.storage)
        if (!(p > 0.0) || !(e > 0.0)) throw ConfigError("system.storage_units: power and energy must be positive");
    if (s.charge_efficiency != 1.0 || s.discharge_efficiency != 1.0)
        throw ConfigError("system: only lossless storage (efficiency 1.0) is supported");

    const auto& t = c.training;
    if (t.n_days < 2) throw ConfigError("training.n_days must be >= 2");
    if (!(t.theta >= 0.0)) throw ConfigError("training.theta must be >= 0");
    try {
        t.gbt.validate();
        t.svr.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("training: ") + e.what());
    }

    const auto& r = c.run;
    if (!(r.budget > 0.0)) throw ConfigError("run.budget must be positive");
    if (r.exploratory_n < 2) throw ConfigError("run.exploratory_n must be >= 2");
    if (r.repeats < 1) throw ConfigError("run.repeats must be >= 1");
    if (r.chunk_size < 1) throw ConfigError("run.chunk_size must be >= 1");
    if (!(r.scenario_cost >= 0.0)) throw ConfigError("run.scenario_cost must be >= 0");
    for (const auto& [name, cost] : r.nominal_costs)
        if (!(cost > 0.0)) throw ConfigError("run.nominal_costs." + name + " must be positive");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c = default_config();
    detail::check_keys(j, {"schema_version", "system", "training", "run", "output"}, "config");
    if (j.contains("schema_version") && j.at("schema_version") != config_schema_version)
        throw ConfigError("unsupported config schema_version " + j.at("schema_version").dump());

    if (j.contains("system")) {
        const auto& js = j.at("system");
        detail::check_keys(js, {"library_seed", "demand", "wind", "thermal_units", "storage_units", "charge_efficiency",
                                "discharge_efficiency", "nominal_profile"},
                           "system");
        auto& s = c.system;
        detail::read_opt(js, "library_seed", s.library_seed, "system");
        detail::read_opt(js, "charge_efficiency", s.charge_efficiency, "system");
        detail::read_opt(js, "discharge_efficiency", s.discharge_efficiency, "system");
        if (js.contains("demand")) {
            const auto& d = js.at("demand");
            detail::check_keys(d, {"n_traces", "peak_mw", "daily_shape", "seasonal_amplitude", "peak_day", "weekend_factor",
                                   "noise_sigma", "noise_persistence", "hourly_noise_sigma"},
                               "system.demand");
            const std::string w = "system.demand";
            detail::read_opt(d, "n_traces", s.demand.n_traces, w);
            detail::read_opt(d, "peak_mw", s.demand.peak_mw, w);
            detail::read_opt(d, "daily_shape", s.demand.daily_shape, w);
            detail::read_opt(d, "seasonal_amplitude", s.demand.seasonal_amplitude, w);
            detail::read_opt(d, "peak_day", s.demand.peak_day, w);
            detail::read_opt(d, "weekend_factor", s.demand.weekend_factor, w);
            detail::read_opt(d, "noise_sigma", s.demand.noise_sigma, w);
            detail::read_opt(d, "noise_persistence", s.demand.noise_persistence, w);
            detail::read_opt(d, "hourly_noise_sigma", s.demand.hourly_noise_sigma, w);
        }
        if (js.contains("wind")) {
            const auto& d = js.at("wind");
            detail::check_keys(d, {"n_traces", "capacity_mw", "mean_capacity_factor", "persistence", "spread", "seasonal_amplitude"},
                               "system.wind");
            const std::string w = "system.wind";
            detail::read_opt(d, "n_traces", s.wind.n_traces, w);
            detail::read_opt(d, "capacity_mw", s.wind.capacity_mw, w);
            detail::read_opt(d, "mean_capacity_factor", s.wind.mean_capacity_factor, w);
            detail::read_opt(d, "persistence", s.wind.persistence, w);
            detail::read_opt(d, "spread", s.wind.spread, w);
            detail::read_opt(d, "seasonal_amplitude", s.wind.seasonal_amplitude, w);
        }
        if (js.contains("thermal_units")) {
            if (!js.at("thermal_units").is_array()) throw ConfigError("system.thermal_units: expected an array");
            s.thermal.clear();
            for (const auto& u : js.at("thermal_units")) {
                detail::check_keys(u, {"count", "capacity", "fail_rate", "repair_rate"}, "system.thermal_units[]");
                UnitGroup g;
                detail::read_opt(u, "count", g.count, "system.thermal_units[]");
                detail::read_opt(u, "fail_rate", g.fail_rate, "system.thermal_units[]");
                detail::read_opt(u, "repair_rate", g.repair_rate, "system.thermal_units[]");
                if (!u.contains("capacity")) throw ConfigError("system.thermal_units[]: capacity is required");
                detail::read_opt(u, "capacity", g.capacity, "system.thermal_units[]");
                s.thermal.push_back(g);
            }
        }
        if (js.contains("storage_units")) {
            if (!js.at("storage_units").is_array()) throw ConfigError("system.storage_units: expected an array");
            s.storage.clear();
            for (const auto& u : js.at("storage_units")) {
                detail::check_keys(u, {"power", "energy"}, "system.storage_units[]");
                if (!u.contains("power") || !u.contains("energy"))
                    throw ConfigError("system.storage_units[]: power and energy are required");
                double p = 0.0, e = 0.0;
                detail::read_opt(u, "power", p, "system.storage_units[]");
                detail::read_opt(u, "energy", e, "system.storage_units[]");
                s.storage.push_back({p, e});
            }
        }
        if (js.contains("nominal_profile")) {
            std::string p;
            detail::read_opt(js, "nominal_profile", p, "system");
            if (p == "demand") s.nominal_profile = NominalProfile::demand;
            else if (p == "net") s.nominal_profile = NominalProfile::net;
            else throw ConfigError("system.nominal_profile must be 'demand' or 'net'");
        }
    }

    if (j.contains("training")) {
        const auto& jt = j.at("training");
        detail::check_keys(jt, {"n_days", "holdout_days", "seed", "theta", "train_svr", "gbt", "svr"}, "training");
        auto& t = c.training;
        detail::read_opt(jt, "n_days", t.n_days, "training");
        detail::read_opt(jt, "holdout_days", t.holdout_days, "training");
        detail::read_opt(jt, "seed", t.seed, "training");
        detail::read_opt(jt, "theta", t.theta, "training");
        detail::read_opt(jt, "train_svr", t.train_svr, "training");
        if (jt.contains("gbt")) {
            const auto& g = jt.at("gbt");
            detail::check_keys(g, {"iterations", "learning_rate", "max_bins", "max_leaves", "min_samples_leaf", "l2_regularization"}, "training.gbt");
            detail::read_opt(g, "iterations", t.gbt.iterations, "training.gbt");
            detail::read_opt(g, "learning_rate", t.gbt.learning_rate, "training.gbt");
            detail::read_opt(g, "max_bins", t.gbt.max_bins, "training.gbt");
            detail::read_opt(g, "max_leaves", t.gbt.max_leaves, "training.gbt");
            detail::read_opt(g, "min_samples_leaf", t.gbt.min_samples_leaf, "training.gbt");
            detail::read_opt(g, "l2_regularization", t.gbt.l2_regularization, "training.gbt");
        }
        if (jt.contains("svr")) {
            const auto& g = jt.at("svr");
            detail::check_keys(g, {"c", "epsilon", "gamma", "tolerance", "max_sweeps"}, "training.svr");
            detail::read_opt(g, "c", t.svr.c, "training.svr");
            detail::read_opt(g, "epsilon", t.svr.epsilon, "training.svr");
            detail::read_opt(g, "gamma", t.svr.gamma, "training.svr");
            detail::read_opt(g, "tolerance", t.svr.tolerance, "training.svr");
            detail::read_opt(g, "max_sweeps", t.svr.max_sweeps, "training.svr");
        }
    }

    if (j.contains("run")) {
        const auto& jr = j.at("run");
        detail::check_keys(jr, {"architecture", "budget", "budget_mode", "exploratory_n", "target", "repeats", "seed", "workers",
                                "chunk_size", "reuse_exploration", "scenario_cost", "nominal_costs"},
                           "run");
        auto& r = c.run;
        detail::read_opt(jr, "architecture", r.architecture, "run");
        detail::read_opt(jr, "budget", r.budget, "run");
        detail::read_opt(jr, "exploratory_n", r.exploratory_n, "run");
        detail::read_opt(jr, "repeats", r.repeats, "run");
        detail::read_opt(jr, "seed", r.seed, "run");
        detail::read_opt(jr, "workers", r.workers, "run");
        detail::read_opt(jr, "chunk_size", r.chunk_size, "run");
        detail::read_opt(jr, "reuse_exploration", r.reuse_exploration, "run");
        detail::read_opt(jr, "scenario_cost", r.scenario_cost, "run");
        if (jr.contains("budget_mode")) {
            std::string m;
            detail::read_opt(jr, "budget_mode", m, "run");
            r.budget_mode = parse_budget_mode(m);
        }
        if (jr.contains("target")) {
            std::string m;
            detail::read_opt(jr, "target", m, "run");
            try {
                r.target = parse_metric(m);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("run.target: ") + e.what());
            }
        }
        if (jr.contains("nominal_costs")) {
            std::map<std::string, double> costs;
            detail::read_opt(jr, "nominal_costs", costs, "run");
            for (const auto& [k, v] : costs) r.nominal_costs[k] = v;
        }
    }

    if (j.contains("output")) {
        const auto& jo = j.at("output");
        detail::check_keys(jo, {"dir"}, "output");
        std::string dir = c.output_dir.string();
        detail::read_opt(jo, "dir", dir, "output");
        c.output_dir = dir;
    }
    validate(c);
    return c;
}

/// Loads a config file; a relative output dir is resolved against the file's directory.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = read_json(path);
    } catch (const MissingFileError&) {
        throw ConfigError("cannot open config " + path.string());
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    ExperimentConfig c = config_from_json(j);
    if (c.output_dir.is_relative()) c.output_dir = path.parent_path() / c.output_dir;
    return c;
}

/// Identity of the studied system; reports and models carry it so results
/// from different systems are never mixed.
inline std::uint64_t system_hash(const SystemConfig& s) { return fnv1a(to_json(s).dump()); }

inline std::string hash_hex(std::uint64_t h) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return out;
}

}  // namespace adequacy
