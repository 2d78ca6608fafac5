#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace adequacy {

inline constexpr std::size_t hours_per_day = 24;
inline constexpr std::size_t days_per_year = 365;
inline constexpr std::size_t hours_per_year = hours_per_day * days_per_year;

/// Risk measures estimated by every level model.
enum class Metric : std::size_t { lole = 0, eens = 1 };

inline constexpr std::array<Metric, 2> all_metrics{Metric::lole, Metric::eens};
inline constexpr std::size_t metric_count = all_metrics.size();

inline std::string_view metric_name(Metric m) {
    return m == Metric::lole ? "LOLE" : "EENS";
}

inline Metric parse_metric(std::string_view text) {
    if (text == "LOLE" || text == "lole") return Metric::lole;
    if (text == "EENS" || text == "eens") return Metric::eens;
    throw std::invalid_argument("unknown metric '" + std::string(text) + "' (expected LOLE or EENS)");
}

/// Annual loss-of-load hours and energy not served for one sampled year
/// (or one day, for the daily surrogates).
struct OutcomeVector {
    double lol_hours = 0.0;   // h
    double ens_energy = 0.0;  // MWh

    double operator[](Metric m) const { return m == Metric::lole ? lol_hours : ens_energy; }
    double& operator[](Metric m) { return m == Metric::lole ? lol_hours : ens_energy; }

    OutcomeVector& operator+=(const OutcomeVector& o) {
        lol_hours += o.lol_hours;
        ens_energy += o.ens_energy;
        return *this;
    }
    OutcomeVector& operator-=(const OutcomeVector& o) {
        lol_hours -= o.lol_hours;
        ens_energy -= o.ens_energy;
        return *this;
    }
    friend OutcomeVector operator+(OutcomeVector a, const OutcomeVector& b) { return a += b; }
    friend OutcomeVector operator-(OutcomeVector a, const OutcomeVector& b) { return a -= b; }
    friend bool operator==(const OutcomeVector&, const OutcomeVector&) = default;
};

}  // namespace adequacy
