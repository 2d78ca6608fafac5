#pragma once

// Run reports: one JSON document per architecture (authoritative) plus
// table rows in CSV for presentation.

#include <json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "adequacy/config.hpp"
#include "adequacy/io.hpp"
#include "adequacy/mlmc.hpp"

namespace adequacy {

inline constexpr int report_format_version = 1;

struct LevelReport {
    std::string name;
    bool analytic = false;
    std::uint64_t n = 0;
    double tau = 0.0;                      // timing
    std::array<double, metric_count> r_hat{};
    std::array<double, metric_count> sigma_y{};
    std::array<std::optional<double>, metric_count> rho{};
    std::array<double, metric_count> share{};  // r_hat / q_hat
    friend bool operator==(const LevelReport&, const LevelReport&) = default;
};

struct MetricReport {
    double q_hat = 0.0;
    double std_error = 0.0;
    double speed = 0.0;  // timing
    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

struct RunRecord {
    std::uint64_t seed = 0;
    double total_time = 0.0;  // timing
    bool exploratory_only = false;
    std::array<MetricReport, metric_count> metric{};
    std::vector<LevelReport> levels;  // bottom first
    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct RunReport {
    std::string architecture;
    std::string config_hash;
    std::uint64_t seed = 0;
    double budget = 0.0;
    BudgetMode budget_mode = BudgetMode::wall_clock;
    std::size_t exploratory_n = 0;
    Metric target = Metric::eens;
    std::string model_hash;  // empty when no surrogate level is used
    std::vector<RunRecord> runs;
    // Aggregate over runs: mean estimate, standard error of that mean (the
    // run's own standard error when there is a single run), mean speed and time.
    std::array<MetricReport, metric_count> summary{};
    double mean_time = 0.0;      // timing
    double wall_seconds = 0.0;   // timing
    friend bool operator==(const RunReport&, const RunReport&) = default;
};

inline RunRecord make_run_record(const MlmcEstimate& est, std::uint64_t seed) {
    RunRecord r;
    r.seed = seed;
    r.total_time = est.total_time;
    r.exploratory_only = est.exploratory_only;
    for (Metric m : all_metrics) {
        const auto k = static_cast<std::size_t>(m);
        r.metric[k] = {est.metric[k].q_hat, est.metric[k].std_error, est.metric[k].speed};
    }
    for (const auto& l : est.levels) {
        LevelReport lr;
        lr.name = l.name;
        lr.analytic = l.analytic;
        lr.n = l.n;
        lr.tau = l.tau;
        lr.r_hat = l.r_hat;
        lr.sigma_y = l.sigma_y;
        lr.rho = l.rho;
        for (std::size_t k = 0; k < metric_count; ++k) {
            const double q = r.metric[k].q_hat;
            lr.share[k] = q != 0.0 ? l.r_hat[k] / q : 0.0;
        }
        r.levels.push_back(std::move(lr));
    }
    return r;
}

/// Fills `summary` and `mean_time` from `runs`.
inline void summarize(RunReport& rep) {
    const auto n = static_cast<double>(rep.runs.size());
    rep.summary = {};
    rep.mean_time = 0.0;
    if (rep.runs.empty()) return;
    for (const auto& r : rep.runs) rep.mean_time += r.total_time / n;
    for (std::size_t k = 0; k < metric_count; ++k) {
        double mean = 0.0, speed = 0.0;
        for (const auto& r : rep.runs) {
            mean += r.metric[k].q_hat / n;
            speed += r.metric[k].speed / n;
        }
        double se = rep.runs.front().metric[k].std_error;
        if (rep.runs.size() > 1) {
            double sq = 0.0;
            for (const auto& r : rep.runs) sq += (r.metric[k].q_hat - mean) * (r.metric[k].q_hat - mean);
            se = std::sqrt(sq / (n - 1.0) / n);
        }
        rep.summary[k] = {mean, se, speed};
    }
}

namespace detail {

inline nlohmann::json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline double number_from(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline nlohmann::json metric_pair(const std::array<double, metric_count>& v) {
    return {{"LOLE", v[0]}, {"EENS", v[1]}};
}

inline std::array<double, metric_count> metric_pair_from(const nlohmann::json& j) {
    return {j.at("LOLE").get<double>(), j.at("EENS").get<double>()};
}

inline nlohmann::json to_json(const std::array<MetricReport, metric_count>& m) {
    nlohmann::json j;
    for (Metric x : all_metrics) {
        const auto& v = m[static_cast<std::size_t>(x)];
        j[std::string(metric_name(x))] = {{"estimate", v.q_hat}, {"std_error", v.std_error}, {"speed", number_or_null(v.speed)}};
    }
    return j;
}

inline std::array<MetricReport, metric_count> metrics_from(const nlohmann::json& j) {
    std::array<MetricReport, metric_count> out{};
    for (Metric x : all_metrics) {
        const auto& v = j.at(std::string(metric_name(x)));
        out[static_cast<std::size_t>(x)] = {v.at("estimate").get<double>(), v.at("std_error").get<double>(),
                                            number_from(v.at("speed"))};
    }
    return out;
}

}  // namespace detail

inline nlohmann::json to_json(const RunReport& rep) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : rep.runs) {
        nlohmann::json levels = nlohmann::json::array();
        for (const auto& l : r.levels) {
            nlohmann::json rho;
            for (Metric m : all_metrics) {
                const auto& v = l.rho[static_cast<std::size_t>(m)];
                rho[std::string(metric_name(m))] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
            }
            levels.push_back({{"name", l.name},
                              {"analytic", l.analytic},
                              {"n", l.n},
                              {"tau", l.tau},
                              {"r_hat", detail::metric_pair(l.r_hat)},
                              {"sigma_y", detail::metric_pair(l.sigma_y)},
                              {"rho", rho},
                              {"share", detail::metric_pair(l.share)}});
        }
        runs.push_back({{"seed", r.seed},
                        {"total_time", r.total_time},
                        {"exploratory_only", r.exploratory_only},
                        {"metrics", detail::to_json(r.metric)},
                        {"levels", levels}});
    }
    return {{"format", "adequacy-run-report"},
            {"version", report_format_version},
            {"architecture", rep.architecture},
            {"config_hash", rep.config_hash},
            {"model_hash", rep.model_hash},
            {"seed", rep.seed},
            {"budget", rep.budget},
            {"budget_mode", budget_mode_name(rep.budget_mode)},
            {"exploratory_n", rep.exploratory_n},
            {"target", metric_name(rep.target)},
            {"repeats", rep.runs.size()},
            {"summary", detail::to_json(rep.summary)},
            {"mean_time", rep.mean_time},
            {"wall_seconds", rep.wall_seconds},
            {"runs", runs}};
}

inline RunReport report_from_json(const nlohmann::json& j) {
    if (j.at("format") != "adequacy-run-report") throw std::runtime_error("not a run report");
    if (j.at("version").get<int>() != report_format_version)
        throw std::runtime_error("unsupported run report version " + j.at("version").dump());
    RunReport rep;
    rep.architecture = j.at("architecture").get<std::string>();
    rep.config_hash = j.at("config_hash").get<std::string>();
    rep.model_hash = j.at("model_hash").get<std::string>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.budget = j.at("budget").get<double>();
    rep.budget_mode = parse_budget_mode(j.at("budget_mode").get<std::string>());
    rep.exploratory_n = j.at("exploratory_n").get<std::size_t>();
    rep.target = parse_metric(j.at("target").get<std::string>());
    rep.summary = detail::metrics_from(j.at("summary"));
    rep.mean_time = j.at("mean_time").get<double>();
    rep.wall_seconds = j.at("wall_seconds").get<double>();
    for (const auto& jr : j.at("runs")) {
        RunRecord r;
        r.seed = jr.at("seed").get<std::uint64_t>();
        r.total_time = jr.at("total_time").get<double>();
        r.exploratory_only = jr.at("exploratory_only").get<bool>();
        r.metric = detail::metrics_from(jr.at("metrics"));
        for (const auto& jl : jr.at("levels")) {
            LevelReport l;
            l.name = jl.at("name").get<std::string>();
            l.analytic = jl.at("analytic").get<bool>();
            l.n = jl.at("n").get<std::uint64_t>();
            l.tau = jl.at("tau").get<double>();
            l.r_hat = detail::metric_pair_from(jl.at("r_hat"));
            l.sigma_y = detail::metric_pair_from(jl.at("sigma_y"));
            l.share = detail::metric_pair_from(jl.at("share"));
            for (Metric m : all_metrics) {
                const auto& v = jl.at("rho").at(std::string(metric_name(m)));
                if (!v.is_null()) l.rho[static_cast<std::size_t>(m)] = v.get<double>();
            }
            r.levels.push_back(std::move(l));
        }
        rep.runs.push_back(std::move(r));
    }
    if (j.at("repeats").get<std::size_t>() != rep.runs.size()) throw std::runtime_error("run report: repeats mismatch");
    return rep;
}

/// The report with every wall-clock dependent field zeroed.
inline RunReport without_timing(RunReport rep) {
    rep.mean_time = rep.wall_seconds = 0.0;
    for (auto& m : rep.summary) m.speed = 0.0;
    for (auto& r : rep.runs) {
        r.total_time = 0.0;
        for (auto& m : r.metric) m.speed = 0.0;
        for (auto& l : r.levels) l.tau = 0.0;
    }
    return rep;
}

inline const std::vector<std::string>& table_header() {
    static const std::vector<std::string> h{"architecture", "time_s",     "lole",       "lole_se",       "eens",
                                            "eens_se",      "lole_speed", "eens_speed", "lole_speedup", "eens_speedup"};
    return h;
}

/// Table rows with speedups relative to `baseline` (the plain MC report);
/// speedups are NaN without one.
inline std::string table_csv(const std::vector<RunReport>& reports, const RunReport* baseline) {
    std::string out;
    for (const auto& h : table_header()) out += (out.empty() ? "" : ",") + h;
    out += '\n';
    auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(std::isnan(v) ? "nan" : "inf"); };
    for (const auto& r : reports) {
        const auto& lole = r.summary[0];
        const auto& eens = r.summary[1];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double su_lole = baseline ? lole.speed / baseline->summary[0].speed : nan;
        const double su_eens = baseline ? eens.speed / baseline->summary[1].speed : nan;
        out += r.architecture + "," + num(r.mean_time) + "," + num(lole.q_hat) + "," + num(lole.std_error) + "," +
               num(eens.q_hat) + "," + num(eens.std_error) + "," + num(lole.speed) + "," + num(eens.speed) + "," +
               num(su_lole) + "," + num(su_eens) + "\n";
    }
    return out;
}

/// Reports must come from the same system.
inline void check_comparable(const std::vector<RunReport>& reports) {
    for (const auto& r : reports)
        if (r.config_hash != reports.front().config_hash)
            throw ConfigError("cannot compare reports of different systems: config hash " + r.config_hash + " (" +
                              r.architecture + ") vs " + reports.front().config_hash + " (" + reports.front().architecture + ")");
}

inline const RunReport* find_baseline(const std::vector<RunReport>& reports) {
    for (const auto& r : reports)
        if (r.architecture == "Exact") return &r;
    return nullptr;
}

}  // namespace adequacy
