#pragma once

// Random annual net-generation-margin traces: m_t = g_t + w_t - d_t.
// Demand and wind come from finite trace libraries; conventional generation
// is simulated fresh per scenario from unit outage processes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adequacy/outcome.hpp"
#include "adequacy/rng.hpp"

namespace adequacy {

/// Thermal unit with a two-state (up/down) continuous-time outage process.
struct GeneratingUnit {
    double capacity = 0.0;     // MW
    double fail_rate = 0.0;    // 1/h
    double repair_rate = 1.0;  // 1/h

    double availability() const { return repair_rate / (fail_rate + repair_rate); }

    void validate() const {
        if (!(capacity > 0.0)) throw std::invalid_argument("generating unit capacity must be positive");
        if (!(fail_rate >= 0.0)) throw std::invalid_argument("generating unit fail_rate must be >= 0");
        if (!(repair_rate > 0.0)) throw std::invalid_argument("generating unit repair_rate must be positive");
    }
    friend bool operator==(const GeneratingUnit&, const GeneratingUnit&) = default;
};

/// A finite set of annual hourly traces (8760 values each).
struct TraceLibrary {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> traces;

    std::size_t size() const { return traces.size(); }
    bool empty() const { return traces.empty(); }
    friend bool operator==(const TraceLibrary&, const TraceLibrary&) = default;
};

struct DemandParams {
    std::size_t n_traces = 20;
    double peak_mw = 50000.0;  // target mean annual peak over the library
    // Relative hourly shape of a winter weekday, hour 0 = midnight.
    std::array<double, hours_per_day> daily_shape{0.62, 0.58, 0.56, 0.55, 0.56, 0.60, 0.70, 0.80,
                                                  0.86, 0.88, 0.88, 0.87, 0.86, 0.85, 0.84, 0.86,
                                                  0.93, 1.00, 0.99, 0.95, 0.89, 0.82, 0.74, 0.67};
    double seasonal_amplitude = 0.15;  // relative swing of the daily level over the year
    double peak_day = 15.0;            // day of year of the seasonal maximum
    double weekend_factor = 0.90;
    double noise_sigma = 0.04;          // daily lognormal level noise
    double noise_persistence = 0.7;     // AR(1) coefficient of the daily noise
    double hourly_noise_sigma = 0.01;

    friend bool operator==(const DemandParams&, const DemandParams&) = default;
};

struct WindParams {
    std::size_t n_traces = 20;
    double capacity_mw = 10000.0;
    double mean_capacity_factor = 0.32;
    double persistence = 0.985;        // hourly AR(1) coefficient of the latent weather state
    double spread = 1.6;               // logistic slope on the latent state
    double seasonal_amplitude = 0.35;  // latent shift, windier in winter

    friend bool operator==(const WindParams&, const WindParams&) = default;
};

namespace detail {

inline double seasonal_cos(std::size_t day, double peak_day) {
    return std::cos(2.0 * std::numbers::pi * (static_cast<double>(day) - peak_day) / static_cast<double>(days_per_year));
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// Synthetic demand: daily shape × seasonal sinusoid × weekly factor ×
/// lognormal noise, rescaled so the library's mean annual peak is `peak_mw`.
inline TraceLibrary generate_demand_library(const DemandParams& p, std::uint64_t seed) {
    if (p.n_traces == 0) throw std::invalid_argument("demand library needs at least one trace");
    TraceLibrary lib;
    double peak_sum = 0.0;
    for (std::size_t k = 0; k < p.n_traces; ++k) {
        Rng rng = make_rng(derive_seed(seed, {0xde, k}));
        std::normal_distribution<double> normal;
        std::uniform_int_distribution<int> weekday(0, 6);
        const int first_weekday = weekday(rng);
        std::vector<double> trace(hours_per_year);
        const double stationary = std::sqrt(1.0 - p.noise_persistence * p.noise_persistence);
        double level_noise = normal(rng);
        for (std::size_t d = 0; d < days_per_year; ++d) {
            if (d > 0) level_noise = p.noise_persistence * level_noise + stationary * normal(rng);
            const bool weekend = (first_weekday + static_cast<int>(d)) % 7 >= 5;
            const double level = (1.0 + p.seasonal_amplitude * detail::seasonal_cos(d, p.peak_day)) *
                                 (weekend ? p.weekend_factor : 1.0) *
                                 std::exp(p.noise_sigma * level_noise - 0.5 * p.noise_sigma * p.noise_sigma);
            for (std::size_t h = 0; h < hours_per_day; ++h) {
                const double jitter = std::exp(p.hourly_noise_sigma * normal(rng));
                trace[d * hours_per_day + h] = std::max(0.0, p.daily_shape[h] * level * jitter);
            }
        }
        peak_sum += *std::max_element(trace.begin(), trace.end());
        lib.ids.push_back("demand_" + std::to_string(k));
        lib.traces.push_back(std::move(trace));
    }
    const double scale = p.peak_mw / (peak_sum / static_cast<double>(p.n_traces));
    for (auto& t : lib.traces)
        for (auto& v : t) v *= scale;
    return lib;
}

/// Synthetic wind: logistic-squashed AR(1) capacity factor times capacity.
/// The logistic offset is calibrated so the library mean capacity factor
/// hits its target.
inline TraceLibrary generate_wind_library(const WindParams& p, std::uint64_t seed) {
    if (p.n_traces == 0) throw std::invalid_argument("wind library needs at least one trace");
    std::vector<std::vector<double>> latent;
    for (std::size_t k = 0; k < p.n_traces; ++k) {
        Rng rng = make_rng(derive_seed(seed, {0x3d, k}));
        std::normal_distribution<double> normal;
        const double innovation = std::sqrt(1.0 - p.persistence * p.persistence);
        std::vector<double> z(hours_per_year);
        double state = normal(rng);
        for (std::size_t t = 0; t < hours_per_year; ++t) {
            if (t > 0) state = p.persistence * state + innovation * normal(rng);
            z[t] = p.spread * state + p.seasonal_amplitude * detail::seasonal_cos(t / hours_per_day, 15.0);
        }
        latent.push_back(std::move(z));
    }
    auto mean_cf = [&](double offset) {
        double acc = 0.0;
        for (const auto& z : latent)
            for (double v : z) acc += detail::logistic(offset + v);
        return acc / static_cast<double>(latent.size() * hours_per_year);
    };
    double lo = -20.0, hi = 20.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_cf(mid) < p.mean_capacity_factor ? lo : hi) = mid;
    }
    const double offset = 0.5 * (lo + hi);

    TraceLibrary lib;
    for (std::size_t k = 0; k < latent.size(); ++k) {
        std::vector<double> trace(hours_per_year);
        for (std::size_t t = 0; t < hours_per_year; ++t)
            trace[t] = std::clamp(p.capacity_mw * detail::logistic(offset + latent[k][t]), 0.0, p.capacity_mw);
        lib.ids.push_back("wind_" + std::to_string(k));
        lib.traces.push_back(std::move(trace));
    }
    return lib;
}

struct ScenarioComponents {
    std::vector<double> generation;
    std::vector<double> wind;
    std::vector<double> demand;
};

/// One sampled year of hourly net generation margin.
struct Scenario {
    std::vector<double> margin;  // MW, 8760 values
    std::uint64_t id = 0;
    std::uint32_t demand_index = 0;
    std::uint32_t wind_index = 0;
    std::optional<ScenarioComponents> components;
    std::vector<double> day_min;  // per-day minimum margin, 365 values

    std::uint64_t fingerprint() const { return id; }

    /// Recomputes `day_min` from `margin`; needed after editing the margin by hand.
    void index_days() {
        day_min.assign(margin.size() / hours_per_day, 0.0);
        for (std::size_t d = 0; d < day_min.size(); ++d) {
            const auto first = margin.begin() + static_cast<std::ptrdiff_t>(d * hours_per_day);
            day_min[d] = *std::min_element(first, first + hours_per_day);
        }
    }
};

/// Scenario with only a margin trace, e.g. for hand-built test cases.
inline Scenario scenario_from_margin(std::vector<double> margin, std::uint64_t id = 0) {
    if (margin.size() % hours_per_day != 0) throw std::invalid_argument("margin length must be whole days");
    Scenario s;
    s.margin = std::move(margin);
    s.id = id;
    s.index_days();
    return s;
}

namespace detail {

/// Adds each unit's available capacity to `diff` as +c at the hour it comes
/// up and -c at the hour it fails, so a prefix sum yields g_t. Each unit is a
/// continuous-time up/down Markov process started from its stationary law
/// and observed at integer hours, so every hour's marginal availability is
/// exactly μ/(λ+μ).
inline void add_availability_steps(std::span<const GeneratingUnit> fleet, Rng& rng, std::span<double> diff) {
    const std::size_t hours = diff.size() - 1;
    const double horizon = static_cast<double>(hours);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (const auto& unit : fleet) {
        bool up = unif(rng) < unit.availability();
        double t = 0.0;
        while (t < horizon) {
            const double rate = up ? unit.fail_rate : unit.repair_rate;
            const double end = rate > 0.0 ? t + std::exponential_distribution<double>(rate)(rng) : horizon;
            if (up) {
                const auto from = static_cast<std::size_t>(std::ceil(t));
                const auto to = static_cast<std::size_t>(std::ceil(std::min(end, horizon)));
                if (from < to) {
                    diff[from] += unit.capacity;
                    diff[to] -= unit.capacity;
                }
            }
            t = end;
            up = !up;
        }
    }
}

}  // namespace detail

/// Hourly available conventional capacity of the fleet.
inline std::vector<double> sample_generation_trace(std::span<const GeneratingUnit> fleet, Rng& rng,
                                                   std::size_t hours = hours_per_year) {
    if (fleet.empty()) throw std::invalid_argument("sample_generation_trace: empty fleet");
    std::vector<double> g(hours + 1, 0.0);
    detail::add_availability_steps(fleet, rng, g);
    double running = 0.0;
    for (std::size_t h = 0; h < hours; ++h) g[h] = (running += g[h]);
    g.pop_back();
    return g;
}

/// Draws one scenario; a pure function of the libraries, fleet and seed.
inline Scenario sample_scenario(const TraceLibrary& demand, const TraceLibrary& wind,
                                std::span<const GeneratingUnit> fleet, std::uint64_t seed,
                                bool retain_components = false) {
    if (demand.empty() || wind.empty()) throw std::invalid_argument("sample_scenario: empty trace library");
    if (fleet.empty()) throw std::invalid_argument("sample_scenario: empty fleet");
    Rng rng = make_rng(seed);
    Scenario s;
    s.id = mix64(seed);
    s.demand_index = std::uniform_int_distribution<std::uint32_t>(0, static_cast<std::uint32_t>(demand.size() - 1))(rng);
    s.wind_index = std::uniform_int_distribution<std::uint32_t>(0, static_cast<std::uint32_t>(wind.size() - 1))(rng);
    const auto& d = demand.traces[s.demand_index];
    const auto& w = wind.traces[s.wind_index];

    // The step array becomes the margin trace in place.
    s.margin.assign(hours_per_year + 1, 0.0);
    detail::add_availability_steps(fleet, rng, s.margin);
    s.margin.pop_back();
    std::vector<double> g;
    if (retain_components) g.resize(hours_per_year);
    s.day_min.resize(days_per_year);
    double running = 0.0;
    for (std::size_t day = 0, t = 0; day < days_per_year; ++day) {
        double lowest = std::numeric_limits<double>::infinity();
        for (std::size_t h = 0; h < hours_per_day; ++h, ++t) {
            running += s.margin[t];
            if (retain_components) g[t] = running;
            s.margin[t] = running + w[t] - d[t];
            lowest = std::min(lowest, s.margin[t]);
        }
        s.day_min[day] = lowest;
    }
    if (retain_components) s.components = ScenarioComponents{std::move(g), w, d};
    return s;
}

using DayMargins = std::array<double, hours_per_day>;

inline DayMargins day_margins(std::span<const double> margin, std::size_t day) {
    DayMargins out;
    std::copy_n(margin.begin() + static_cast<std::ptrdiff_t>(day * hours_per_day), hours_per_day, out.begin());
    return out;
}

struct MiningStats {
    std::uint64_t days_scanned = 0;
    std::uint64_t days_accepted = 0;
    double acceptance_rate() const {
        return days_scanned ? static_cast<double>(days_accepted) / static_cast<double>(days_scanned) : 0.0;
    }
};

/// Rejection-samples midnight-aligned days whose margin drops below zero
/// for at least one hour. Returns exactly `count` days.
inline std::vector<DayMargins> sample_low_margin_days(std::size_t count, const TraceLibrary& demand,
                                                      const TraceLibrary& wind, std::span<const GeneratingUnit> fleet,
                                                      Rng& rng, MiningStats* stats = nullptr,
                                                      std::uint64_t probe_days = 1'000'000) {
    if (count == 0) throw std::invalid_argument("sample_low_margin_days: count must be >= 1");
    std::vector<DayMargins> days;
    days.reserve(count);
    MiningStats local;
    while (days.size() < count) {
        const Scenario s = sample_scenario(demand, wind, fleet, rng());
        for (std::size_t d = 0; d < days_per_year && days.size() < count; ++d) {
            ++local.days_scanned;
            const auto first = s.margin.begin() + static_cast<std::ptrdiff_t>(d * hours_per_day);
            if (*std::min_element(first, first + hours_per_day) < 0.0) {
                days.push_back(day_margins(s.margin, d));
                ++local.days_accepted;
            }
        }
        if (local.days_scanned >= probe_days && local.acceptance_rate() < 1e-6)
            throw std::runtime_error("system too reliable for day mining (acceptance rate below 1e-6)");
    }
    if (stats) *stats = local;
    return days;
}

}  // namespace adequacy
