#pragma once

// Average dispatch: the storage fleet collapsed into one unit that follows a
// fixed, daily repeating peak-shaving offset. With no time coupling left, its
// risk can be computed exactly by convolution over the capacity outage table.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "adequacy/dispatch.hpp"
#include "adequacy/outcome.hpp"
#include "adequacy/qp.hpp"
#include "adequacy/scenario.hpp"

namespace adequacy {

using DailyProfile = std::array<double, hours_per_day>;

struct AvgDispatchProfile {
    DailyProfile offset{};   // s̄_h, MW, charging positive
    DailyProfile nominal{};  // d̃_h, MW
    double total_power = 0.0;
    double total_energy = 0.0;
    double kkt_residual = 0.0;  // in the solver's normalized units
};

/// Hour-of-day mean over every trace and day of the library.
inline DailyProfile mean_daily_profile(const TraceLibrary& lib) {
    if (lib.empty()) throw std::invalid_argument("mean_daily_profile: empty library");
    DailyProfile p{};
    for (const auto& trace : lib.traces)
        for (std::size_t t = 0; t < trace.size(); ++t) p[t % hours_per_day] += trace[t];
    const double count = static_cast<double>(lib.size() * (hours_per_year / hours_per_day));
    for (auto& v : p) v /= count;
    return p;
}

/// Peak-shaving offset: minimizes Σ_h (d̃_h + s̄_h)² subject to |s̄_h| ≤ p̄,
/// Σ_h s̄_h = 0 and a cyclic state of charge that stays within [0, ē].
inline AvgDispatchProfile average_profile(double total_power, double total_energy, const DailyProfile& nominal) {
    if (total_power < 0.0 || total_energy < 0.0) throw std::invalid_argument("average_profile: negative fleet size");
    AvgDispatchProfile out;
    out.nominal = nominal;
    out.total_power = total_power;
    out.total_energy = total_energy;
    if (total_power == 0.0 || total_energy == 0.0) return out;

    constexpr int n = static_cast<int>(hours_per_day);
    double mean = 0.0;
    for (double v : nominal) mean += v / n;
    double scale = total_power;
    for (double v : nominal) scale = std::max(scale, std::abs(v - mean));

    QpProblem qp;
    qp.G = 2.0 * Eigen::MatrixXd::Identity(n, n);
    qp.c.resize(n);
    for (int h = 0; h < n; ++h) qp.c[h] = 2.0 * (nominal[h] - mean) / scale;
    qp.A_eq = Eigen::MatrixXd::Ones(n, 1);
    qp.b_eq = Eigen::VectorXd::Zero(1);

    const double p = total_power / scale;
    const double e = total_energy / scale;
    const int pairs = n * (n - 1) / 2;
    qp.A_in = Eigen::MatrixXd::Zero(n, 2 * n + 2 * pairs);
    qp.b_in.resize(2 * n + 2 * pairs);
    int col = 0;
    for (int h = 0; h < n; ++h) {
        qp.A_in(h, col) = 1.0;
        qp.b_in[col++] = -p;
        qp.A_in(h, col) = -1.0;
        qp.b_in[col++] = -p;
    }
    // Energy swing between any two hour boundaries u < t is Σ_{u ≤ h < t} s̄_h.
    for (int u = 0; u < n; ++u) {
        for (int t = u + 1; t < n; ++t) {
            for (int h = u; h < t; ++h) {
                qp.A_in(h, col) = 1.0;
                qp.A_in(h, col + 1) = -1.0;
            }
            qp.b_in[col++] = -e;
            qp.b_in[col++] = -e;
        }
    }

    const QpResult sol = solve_qp_active_set(qp, Eigen::VectorXd::Zero(n));
    for (int h = 0; h < n; ++h) out.offset[h] = sol.x[h] * scale;
    out.kkt_residual = sol.kkt_residual;
    return out;
}

inline AvgDispatchProfile average_profile(const StorageFleet& fleet, const DailyProfile& nominal) {
    fleet.validate();
    return average_profile(fleet.total_power(), fleet.total_energy(), nominal);
}

/// Curtailment metrics of a margin trace under a fixed daily load offset.
inline OutcomeVector avg_outcome(std::span<const double> margin, const DailyProfile& offset) {
    OutcomeVector out;
    std::size_t t = 0;
    while (t < margin.size()) {
        const std::size_t n = std::min(hours_per_day, margin.size() - t);
        double ens = 0.0, lol = 0.0;
        for (std::size_t h = 0; h < n; ++h) {
            const double c = std::max(0.0, offset[h] - margin[t + h]);
            ens += c;
            lol += c > lol_threshold_mw ? 1.0 : 0.0;
        }
        out.ens_energy += ens;
        out.lol_hours += lol;
        t += n;
    }
    return out;
}

/// Same as above, skipping days whose minimum margin rules out curtailment.
inline OutcomeVector avg_outcome(const Scenario& s, const DailyProfile& offset) {
    if (s.day_min.size() * hours_per_day != s.margin.size()) return avg_outcome(std::span<const double>(s.margin), offset);
    const double top = *std::max_element(offset.begin(), offset.end());
    OutcomeVector out;
    for (std::size_t d = 0; d < s.day_min.size(); ++d) {
        if (s.day_min[d] >= top) continue;
        out += avg_outcome(std::span<const double>(s.margin).subspan(d * hours_per_day, hours_per_day), offset);
    }
    return out;
}

/// Capacity outage probability table: the distribution of available
/// conventional capacity, ascending in capacity.
struct Copt {
    std::vector<double> capacity;
    std::vector<double> probability;
    std::vector<double> cum_prob;    // cum_prob[j] = P(G < capacity[j]), size + 1 entries
    std::vector<double> cum_moment;  // cum_moment[j] = E[G; G < capacity[j]]

    std::size_t size() const { return capacity.size(); }

    /// Number of support points strictly below `x`.
    std::size_t count_below(double x) const {
        return static_cast<std::size_t>(std::lower_bound(capacity.begin(), capacity.end(), x) - capacity.begin());
    }
    double prob_below(double x) const { return cum_prob[count_below(x)]; }
    /// E[max(0, x - G)].
    double expected_shortfall(double x) const {
        const std::size_t j = count_below(x);
        return x * cum_prob[j] - cum_moment[j];
    }
};

/// Unit-by-unit convolution of two-point capacity distributions.
inline Copt build_copt(std::span<const GeneratingUnit> fleet) {
    if (fleet.empty()) throw std::invalid_argument("build_copt: empty fleet");
    std::map<double, double> dist{{0.0, 1.0}};
    for (const auto& unit : fleet) {
        unit.validate();
        const double a = unit.availability();
        std::map<double, double> next;
        for (auto [cap, prob] : dist) {
            if (a > 0.0) next[cap + unit.capacity] += prob * a;
            if (a < 1.0) next[cap] += prob * (1.0 - a);
        }
        dist = std::move(next);
    }
    Copt t;
    t.cum_prob.push_back(0.0);
    t.cum_moment.push_back(0.0);
    for (auto [cap, prob] : dist) {
        t.capacity.push_back(cap);
        t.probability.push_back(prob);
        t.cum_prob.push_back(t.cum_prob.back() + prob);
        t.cum_moment.push_back(t.cum_moment.back() + prob * cap);
    }
    return t;
}

/// Exact E[X] of the Average model over the scenario distribution: every
/// demand/wind library pair is equally likely and each hour's available
/// capacity follows the COPT.
inline OutcomeVector analytic_avg_risk(const Copt& copt, const TraceLibrary& demand, const TraceLibrary& wind,
                                       const DailyProfile& offset) {
    if (demand.empty() || wind.empty()) throw std::invalid_argument("analytic_avg_risk: empty library");
    OutcomeVector acc;
    for (const auto& d : demand.traces) {
        for (const auto& w : wind.traces) {
            OutcomeVector pair;
            for (std::size_t t = 0; t < hours_per_year; ++t) {
                const double threshold = d[t] - w[t] + offset[t % hours_per_day];
                if (threshold <= 0.0) continue;
                pair.lol_hours += copt.prob_below(threshold - lol_threshold_mw);
                pair.ens_energy += copt.expected_shortfall(threshold);
            }
            acc += pair;
        }
    }
    const double pairs = static_cast<double>(demand.size() * wind.size());
    acc.lol_hours /= pairs;
    acc.ens_energy /= pairs;
    return acc;
}

inline OutcomeVector analytic_avg_risk(const Copt& copt, const TraceLibrary& demand, const TraceLibrary& wind,
                                       const AvgDispatchProfile& profile) {
    return analytic_avg_risk(copt, demand, wind, profile.offset);
}

}  // namespace adequacy
