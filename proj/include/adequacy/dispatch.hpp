#pragma once

// Chronological storage dispatch over a margin trace. Sign convention:
// s_t is net storage load (charging positive, discharging negative) and
// curtailment is c_t = max(0, -m_t + s_t).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "adequacy/outcome.hpp"

namespace adequacy {

/// Hourly curtailment below this level (MW) does not count as a loss-of-load hour.
inline constexpr double lol_threshold_mw = 1e-6;

struct StorageUnit {
    double power = 0.0;   // MW, symmetric charge/discharge limit
    double energy = 0.0;  // MWh
    double soc = 0.0;     // MWh

    double time_to_go() const { return energy / power; }

    void validate() const {
        if (!(power > 0.0) || !(energy > 0.0)) throw std::invalid_argument("storage unit power and energy must be positive");
        if (soc < 0.0 || soc > energy) throw std::invalid_argument("storage unit soc outside [0, energy]");
    }
    friend bool operator==(const StorageUnit&, const StorageUnit&) = default;
};

struct StorageFleet {
    std::vector<StorageUnit> units;

    /// Fleet with every unit at full state of charge.
    static StorageFleet full(std::span<const std::pair<double, double>> power_energy) {
        StorageFleet f;
        for (auto [p, e] : power_energy) f.units.push_back({p, e, e});
        return f;
    }

    StorageFleet refilled() const {
        StorageFleet f = *this;
        for (auto& u : f.units) u.soc = u.energy;
        return f;
    }

    double total_power() const {
        return std::accumulate(units.begin(), units.end(), 0.0, [](double a, const StorageUnit& u) { return a + u.power; });
    }
    double total_energy() const {
        return std::accumulate(units.begin(), units.end(), 0.0, [](double a, const StorageUnit& u) { return a + u.energy; });
    }

    void validate() const {
        if (units.empty()) throw std::invalid_argument("storage fleet is empty");
        for (const auto& u : units) u.validate();
    }
    friend bool operator==(const StorageFleet&, const StorageFleet&) = default;
};

struct DispatchResult {
    std::vector<double> storage_load;  // s_t, MW
    std::vector<double> curtailment;   // c_t, MW
    std::vector<double> final_soc;     // per unit, fleet order
    // Per hour, per unit (fleet order) energy change; filled on request only.
    std::vector<std::vector<double>> unit_dispatch;
};

inline std::vector<double> curtailment(std::span<const double> margin, std::span<const double> storage_load) {
    if (margin.size() != storage_load.size()) throw std::invalid_argument("curtailment: length mismatch");
    std::vector<double> c(margin.size());
    for (std::size_t t = 0; t < margin.size(); ++t) c[t] = std::max(0.0, -margin[t] + storage_load[t]);
    return c;
}

inline OutcomeVector risk_metrics(std::span<const double> curtailment) {
    OutcomeVector out;
    for (double c : curtailment) {
        if (!(c >= 0.0)) throw std::invalid_argument("risk_metrics: negative or NaN curtailment");
        if (c > lol_threshold_mw) out.lol_hours += 1.0;
        out.ens_energy += c;
    }
    return out;
}

/// Adequacy of the bare margin trace.
inline OutcomeVector no_storage_outcome(std::span<const double> margin) {
    OutcomeVector out;
    for (double m : margin) {
        if (m < 0.0) {
            if (-m > lol_threshold_mw) out.lol_hours += 1.0;
            out.ens_energy -= m;
        }
    }
    return out;
}

namespace detail {

/// Storage state shared by the policies, in structure-of-arrays form and
/// permuted into the policy's priority order.
class FleetState {
public:
    FleetState(const StorageFleet& fleet, std::vector<std::size_t> order) : order_(std::move(order)) {
        fleet.validate();
        for (std::size_t i : order_) {
            const auto& u = fleet.units[i];
            power_.push_back(u.power);
            energy_.push_back(u.energy);
            soc_.push_back(u.soc);
        }
        delta_.assign(order_.size(), 0.0);
        refresh_full();
    }

    std::size_t size() const { return order_.size(); }
    bool full() const { return full_; }

    void refill() {
        soc_ = energy_;
        full_ = true;
        clear_delta();
    }

    std::vector<double> soc_in_fleet_order() const {
        std::vector<double> out(order_.size());
        for (std::size_t k = 0; k < order_.size(); ++k) out[order_[k]] = soc_[k];
        return out;
    }
    std::vector<double> delta_in_fleet_order() const {
        std::vector<double> out(order_.size());
        for (std::size_t k = 0; k < order_.size(); ++k) out[order_[k]] = delta_[k];
        return out;
    }

protected:
    void refresh_full() {
        full_ = true;
        for (std::size_t k = 0; k < soc_.size(); ++k) {
            if (soc_[k] >= energy_[k] - 1e-12 * energy_[k]) soc_[k] = energy_[k];
            else full_ = false;
        }
    }

    void clear_delta() {
        if (dirty_) std::fill(delta_.begin(), delta_.end(), 0.0);
        dirty_ = false;
    }

    /// Applies per-unit energy changes in `delta_` and returns their sum.
    double commit() {
        dirty_ = true;
        double s = 0.0;
        for (std::size_t k = 0; k < soc_.size(); ++k) {
            soc_[k] = std::clamp(soc_[k] + delta_[k], 0.0, energy_[k]);
            s += delta_[k];
        }
        refresh_full();
        return s;
    }

    std::vector<std::size_t> order_;
    std::vector<double> power_, energy_, soc_, delta_;
    bool full_ = true;
    bool dirty_ = false;
};

inline std::vector<std::size_t> ttg_descending_order(const StorageFleet& fleet) {
    std::vector<std::size_t> order(fleet.units.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return fleet.units[a].time_to_go() > fleet.units[b].time_to_go();
    });
    return order;
}

/// Sequential pass over units in descending rated time-to-go: charge what
/// surplus allows, discharge what shortfall requires.
class GreedyPolicy : public FleetState {
public:
    explicit GreedyPolicy(const StorageFleet& fleet) : FleetState(fleet, ttg_descending_order(fleet)) {}

    double step(double margin) {
        clear_delta();
        if (margin >= 0.0) {
            if (full_ || margin == 0.0) return 0.0;
            double surplus = margin;
            for (std::size_t k = 0; k < soc_.size() && surplus > 0.0; ++k) {
                const double c = std::min({power_[k], energy_[k] - soc_[k], surplus});
                delta_[k] = c;
                surplus -= c;
            }
        } else {
            double shortfall = -margin;
            for (std::size_t k = 0; k < soc_.size() && shortfall > 0.0; ++k) {
                const double d = std::min({power_[k], soc_[k], shortfall});
                delta_[k] = -d;
                shortfall -= d;
            }
        }
        return commit();
    }
};

/// Level at which a monotone sum of clamped linear pieces reaches `target`.
/// `value(L)` must be continuous and piecewise linear between `breaks`.
template <class F>
double solve_piecewise_level(std::vector<double>& breaks, F value, double target, bool increasing) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    auto reached = [&](std::size_t i) { return increasing ? value(breaks[i]) >= target : value(breaks[i]) <= target; };
    std::size_t lo = 0, hi = breaks.size() - 1;  // invariant: !reached(lo), reached(hi)
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        (reached(mid) ? hi : lo) = mid;
    }
    const double l1 = breaks[lo], l2 = breaks[hi];
    const double f1 = value(l1), f2 = value(l2);
    if (f2 == f1) return l2;
    return l1 + (target - f1) * (l2 - l1) / (f2 - f1);
}

/// Causal time-to-go water-filling. Shortfalls are met by lowering the
/// highest times-to-go (soc/p) to a common level; surpluses raise the lowest
/// ones, each unit bounded by its power and energy limits.
class ExactPolicy : public FleetState {
public:
    explicit ExactPolicy(const StorageFleet& fleet) : FleetState(fleet, ttg_descending_order(fleet)) {}

    double step(double margin) {
        clear_delta();
        if (margin > 0.0) {
            if (full_) return 0.0;
            charge(margin);
        } else if (margin < 0.0) {
            discharge(-margin);
        } else {
            return 0.0;
        }
        return commit();
    }

private:
    void discharge(double demand) {
        const std::size_t n = soc_.size();
        limit_.resize(n);
        double available = 0.0;
        for (std::size_t k = 0; k < n; ++k) available += (limit_[k] = std::min(power_[k], soc_[k]));
        if (available <= 0.0) return;
        if (demand >= available) {
            for (std::size_t k = 0; k < n; ++k) delta_[k] = -limit_[k];
            return;
        }
        breaks_.clear();
        for (std::size_t k = 0; k < n; ++k) {
            if (limit_[k] <= 0.0) continue;
            breaks_.push_back(soc_[k] / power_[k]);
            breaks_.push_back((soc_[k] - limit_[k]) / power_[k]);
        }
        auto drawn = [&](double level) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += std::clamp(soc_[k] - level * power_[k], 0.0, limit_[k]);
            return s;
        };
        const double level = solve_piecewise_level(breaks_, drawn, demand, false);
        for (std::size_t k = 0; k < n; ++k) delta_[k] = -std::clamp(soc_[k] - level * power_[k], 0.0, limit_[k]);
    }

    void charge(double surplus) {
        const std::size_t n = soc_.size();
        limit_.resize(n);
        double headroom = 0.0;
        for (std::size_t k = 0; k < n; ++k) headroom += (limit_[k] = std::min(power_[k], energy_[k] - soc_[k]));
        if (headroom <= 0.0) return;
        if (surplus >= headroom) {
            for (std::size_t k = 0; k < n; ++k) delta_[k] = limit_[k];
            return;
        }
        breaks_.clear();
        for (std::size_t k = 0; k < n; ++k) {
            if (limit_[k] <= 0.0) continue;
            breaks_.push_back(soc_[k] / power_[k]);
            breaks_.push_back((soc_[k] + limit_[k]) / power_[k]);
        }
        auto stored = [&](double level) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += std::clamp(level * power_[k] - soc_[k], 0.0, limit_[k]);
            return s;
        };
        const double level = solve_piecewise_level(breaks_, stored, surplus, true);
        for (std::size_t k = 0; k < n; ++k) delta_[k] = std::clamp(level * power_[k] - soc_[k], 0.0, limit_[k]);
    }

    std::vector<double> limit_, breaks_;
};

template <class Policy>
DispatchResult run_policy(std::span<const double> margin, const StorageFleet& fleet, bool record_units) {
    Policy policy(fleet);
    DispatchResult r;
    r.storage_load.resize(margin.size());
    r.curtailment.resize(margin.size());
    if (record_units) r.unit_dispatch.reserve(margin.size());
    for (std::size_t t = 0; t < margin.size(); ++t) {
        const double s = policy.step(margin[t]);
        r.storage_load[t] = s;
        r.curtailment[t] = std::max(0.0, -margin[t] + s);
        if (record_units) r.unit_dispatch.push_back(policy.delta_in_fleet_order());
    }
    r.final_soc = policy.soc_in_fleet_order();
    return r;
}

template <class Policy>
OutcomeVector policy_outcome(std::span<const double> margin, const StorageFleet& fleet) {
    Policy policy(fleet);
    OutcomeVector out;
    for (double m : margin) {
        const double c = std::max(0.0, -m + policy.step(m));
        if (c > lol_threshold_mw) out.lol_hours += 1.0;
        out.ens_energy += c;
    }
    return out;
}

}  // namespace detail

inline DispatchResult greedy_dispatch(std::span<const double> margin, const StorageFleet& fleet,
                                      bool record_units = false) {
    return detail::run_policy<detail::GreedyPolicy>(margin, fleet, record_units);
}

inline DispatchResult exact_dispatch(std::span<const double> margin, const StorageFleet& fleet,
                                     bool record_units = false) {
    return detail::run_policy<detail::ExactPolicy>(margin, fleet, record_units);
}

/// Greedy dispatch of many short traces, each starting from full storage,
/// without rebuilding the fleet state every time.
class GreedyDayRunner {
public:
    explicit GreedyDayRunner(const StorageFleet& fleet) : policy_(fleet.refilled()) {}

    OutcomeVector run(std::span<const double> margin) {
        policy_.refill();
        OutcomeVector out;
        for (double m : margin) {
            const double c = std::max(0.0, -m + policy_.step(m));
            if (c > lol_threshold_mw) out.lol_hours += 1.0;
            out.ens_energy += c;
        }
        return out;
    }

private:
    detail::GreedyPolicy policy_;
};

/// Metrics of greedy_dispatch without materializing the hourly traces.
inline OutcomeVector greedy_outcome(std::span<const double> margin, const StorageFleet& fleet) {
    return detail::policy_outcome<detail::GreedyPolicy>(margin, fleet);
}

/// Metrics of exact_dispatch without materializing the hourly traces.
inline OutcomeVector exact_outcome(std::span<const double> margin, const StorageFleet& fleet) {
    return detail::policy_outcome<detail::ExactPolicy>(margin, fleet);
}

}  // namespace adequacy
