#pragma once

// Multilevel Monte Carlo over a stack of level models that share one
// scenario space. Level l (0-based, bottom first) is sampled as the coupled
// pair (X_l, X_{l-1}) on a single scenario, with X_{-1} == 0.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "adequacy/outcome.hpp"
#include "adequacy/rng.hpp"

namespace adequacy {

template <class S>
concept FingerprintedScenario = requires(const S& s) {
    { s.fingerprint() } -> std::convertible_to<std::uint64_t>;
};

/// A model of the system mapping a scenario to its annual outcome. Models
/// are immutable and deterministic given the scenario, so one instance is
/// shared by all sampling workers.
template <FingerprintedScenario Scenario>
class LevelModel {
public:
    explicit LevelModel(double nominal_cost_hint = 0.0) : cost_hint_(nominal_cost_hint) {}
    virtual ~LevelModel() = default;

    virtual OutcomeVector evaluate(const Scenario& scenario) const = 0;
    virtual std::string name() const = 0;

    /// Advisory evaluation cost in seconds, used by the nominal-cost budget mode.
    double nominal_cost_hint() const { return cost_hint_; }

private:
    double cost_hint_;
};

/// Level model backed by a callable; handy for tests and ad-hoc stacks.
template <FingerprintedScenario Scenario>
class FunctionLevel final : public LevelModel<Scenario> {
public:
    using Fn = std::function<OutcomeVector(const Scenario&)>;

    FunctionLevel(std::string name, Fn fn, double cost_hint = 0.0)
        : LevelModel<Scenario>(cost_hint), name_(std::move(name)), fn_(std::move(fn)) {}

    OutcomeVector evaluate(const Scenario& s) const override { return fn_(s); }
    std::string name() const override { return name_; }

private:
    std::string name_;
    Fn fn_;
};

template <class Scenario>
using LevelStack = std::vector<std::shared_ptr<const LevelModel<Scenario>>>;

/// Produces the scenario for a given per-sample seed.
template <class Scenario>
using ScenarioSource = std::function<Scenario(std::uint64_t seed)>;

class LevelError : public std::runtime_error {
public:
    LevelError(std::size_t level, const std::string& what)
        : std::runtime_error("level " + std::to_string(level + 1) + ": " + what), level_(level) {}
    std::size_t level() const { return level_; }

private:
    std::size_t level_;
};

struct LevelPairSample {
    OutcomeVector y;     // x_hi - x_lo
    OutcomeVector x_hi;
    OutcomeVector x_lo;  // zero on the bottom level
    double cost = 0.0;   // seconds
    std::uint64_t fingerprint = 0;
};

/// Evaluates both models of a level pair on the same scenario.
template <class Scenario>
LevelPairSample sample_level_pair(const LevelModel<Scenario>& hi, const LevelModel<Scenario>* lo,
                                  const Scenario& scenario, std::size_t level = 0) {
    using clock = std::chrono::steady_clock;
    LevelPairSample s;
    s.fingerprint = scenario.fingerprint();
    const auto start = clock::now();
    try {
        s.x_hi = hi.evaluate(scenario);
        if (lo != nullptr) s.x_lo = lo->evaluate(scenario);
    } catch (const LevelError&) {
        throw;
    } catch (const std::exception& e) {
        throw LevelError(level, e.what());
    }
    s.cost = std::chrono::duration<double>(clock::now() - start).count();
    s.y = s.x_hi - s.x_lo;
    return s;
}

/// Streaming first and second moments of one metric of a level pair.
struct MetricMoments {
    double mean_y = 0.0;
    double m2_y = 0.0;
    double mean_hi = 0.0;
    double mean_lo = 0.0;
    double m2_hi = 0.0;
    double m2_lo = 0.0;
    double co_moment = 0.0;  // sum of (hi - mean_hi)(lo - mean_lo)

    friend bool operator==(const MetricMoments&, const MetricMoments&) = default;
};

struct LevelStats {
    std::uint64_t n = 0;
    std::array<MetricMoments, metric_count> metric{};
    double mean_cost = 0.0;

    const MetricMoments& operator[](Metric m) const { return metric[static_cast<std::size_t>(m)]; }

    void add(const LevelPairSample& s) {
        ++n;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (Metric m : all_metrics) {
            auto& mm = metric[static_cast<std::size_t>(m)];
            const double dy = s.y[m] - mm.mean_y;
            mm.mean_y += dy * inv_n;
            mm.m2_y += dy * (s.y[m] - mm.mean_y);

            const double dhi = s.x_hi[m] - mm.mean_hi;
            const double dlo = s.x_lo[m] - mm.mean_lo;
            mm.mean_hi += dhi * inv_n;
            mm.mean_lo += dlo * inv_n;
            mm.m2_hi += dhi * (s.x_hi[m] - mm.mean_hi);
            mm.m2_lo += dlo * (s.x_lo[m] - mm.mean_lo);
            mm.co_moment += dhi * (s.x_lo[m] - mm.mean_lo);
        }
        mean_cost += (s.cost - mean_cost) * inv_n;
    }

    /// Pairwise (Chan et al.) combination of two disjoint sample streams.
    void merge(const LevelStats& other) {
        if (other.n == 0) return;
        if (n == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(n);
        const double nb = static_cast<double>(other.n);
        const double nt = na + nb;
        const double w = na * nb / nt;
        for (std::size_t k = 0; k < metric_count; ++k) {
            auto& a = metric[k];
            const auto& b = other.metric[k];
            const double dy = b.mean_y - a.mean_y;
            const double dhi = b.mean_hi - a.mean_hi;
            const double dlo = b.mean_lo - a.mean_lo;
            a.m2_y += b.m2_y + dy * dy * w;
            a.m2_hi += b.m2_hi + dhi * dhi * w;
            a.m2_lo += b.m2_lo + dlo * dlo * w;
            a.co_moment += b.co_moment + dhi * dlo * w;
            a.mean_y += dy * nb / nt;
            a.mean_hi += dhi * nb / nt;
            a.mean_lo += dlo * nb / nt;
        }
        mean_cost += (other.mean_cost - mean_cost) * nb / nt;
        n += other.n;
    }

    /// Unbiased variance of Y; zero below two samples.
    double variance(Metric m) const {
        return n >= 2 ? (*this)[m].m2_y / static_cast<double>(n - 1) : 0.0;
    }

    /// Sample correlation of the pair, undefined when either side is constant.
    std::optional<double> correlation(Metric m) const {
        const auto& mm = (*this)[m];
        if (n < 2 || mm.m2_hi <= 0.0 || mm.m2_lo <= 0.0) return std::nullopt;
        const double r = mm.co_moment / std::sqrt(mm.m2_hi * mm.m2_lo);
        return std::clamp(r, -1.0, 1.0);
    }

    friend bool operator==(const LevelStats&, const LevelStats&) = default;
};

inline LevelStats update_stats(LevelStats stats, const LevelPairSample& s) {
    stats.add(s);
    return stats;
}

inline LevelStats merge_stats(LevelStats a, const LevelStats& b) {
    a.merge(b);
    return a;
}

/// Variance-optimal sample counts n_l ∝ σ_l/√τ_l for a cost budget, rounded
/// half up and floored at `min_samples` per level.
inline std::vector<std::uint64_t> optimal_allocation(std::span<const double> sigmas, std::span<const double> taus,
                                                     double budget, std::uint64_t min_samples = 2) {
    if (sigmas.empty() || sigmas.size() != taus.size())
        throw std::invalid_argument("optimal_allocation: sigmas and taus must be nonempty and of equal length");
    if (!(budget > 0.0)) throw std::invalid_argument("optimal_allocation: budget must be positive");
    double denom = 0.0;
    for (std::size_t l = 0; l < sigmas.size(); ++l) {
        if (sigmas[l] < 0.0 || !std::isfinite(sigmas[l]))
            throw std::invalid_argument("optimal_allocation: sigma must be finite and >= 0");
        if (!(taus[l] > 0.0)) throw std::invalid_argument("optimal_allocation: tau must be positive");
        denom += sigmas[l] * std::sqrt(taus[l]);
    }
    if (denom <= 0.0) throw std::invalid_argument("degenerate stack: all level variances are zero");

    std::vector<std::uint64_t> n(sigmas.size(), min_samples);
    for (std::size_t l = 0; l < sigmas.size(); ++l) {
        if (sigmas[l] <= 0.0) continue;
        const double ideal = budget * (sigmas[l] / std::sqrt(taus[l])) / denom;
        const auto rounded = static_cast<std::uint64_t>(std::floor(ideal + 0.5));
        n[l] = std::max(rounded, min_samples);
    }
    return n;
}

/// Speed z = q² / (t σ²). Zero estimator variance yields +infinity.
inline double speed_measure(double q_hat, double total_time, double estimator_variance) {
    if (!(total_time > 0.0)) throw std::invalid_argument("speed_measure: total_time must be positive");
    if (estimator_variance < 0.0) throw std::invalid_argument("speed_measure: variance must be >= 0");
    if (estimator_variance == 0.0) return std::numeric_limits<double>::infinity();
    return q_hat * q_hat / (total_time * estimator_variance);
}

enum class BudgetMode {
    wall_clock,    // costs are measured per coupled pair, scenario draw included
    nominal_cost,  // costs come from hints; fully deterministic
};

struct MlmcOptions {
    double budget = 60.0;  // seconds of summed pair cost
    BudgetMode budget_mode = BudgetMode::wall_clock;
    std::size_t exploratory_n = 500;
    Metric target = Metric::eens;
    std::optional<OutcomeVector> analytic_bottom;  // exact r_1 replaces sampling of level 1
    bool reuse_exploration = true;
    std::uint64_t min_samples = 2;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::size_t chunk_size = 64;
    // Nominal-cost mode: per-model costs (falls back to each model's hint)
    // plus the cost of drawing one scenario.
    std::vector<double> nominal_costs;
    double scenario_cost = 0.0;
};

struct LevelSummary {
    std::string name;
    std::uint64_t n = 0;
    double tau = 0.0;
    std::array<double, metric_count> r_hat{};
    std::array<double, metric_count> sigma_y{};
    std::array<std::optional<double>, metric_count> rho{};
    bool analytic = false;
};

struct MetricEstimate {
    double q_hat = 0.0;
    double std_error = 0.0;
    double speed = 0.0;  // +inf when the estimator variance is zero
};

struct MlmcEstimate {
    std::array<MetricEstimate, metric_count> metric{};
    std::vector<LevelSummary> levels;
    std::vector<LevelStats> stats;  // final per-level statistics (empty for an analytic level)
    double total_time = 0.0;
    Metric target = Metric::eens;
    bool analytic_bottom = false;
    bool exploratory_only = false;

    const MetricEstimate& operator[](Metric m) const { return metric[static_cast<std::size_t>(m)]; }
    std::vector<std::uint64_t> allocation() const {
        std::vector<std::uint64_t> n;
        for (const auto& l : levels) n.push_back(l.n);
        return n;
    }
};

/// Thrown when a level model fails mid-run; carries the statistics gathered so far.
class MlmcError : public LevelError {
public:
    MlmcError(const LevelError& cause, std::vector<LevelStats> partial)
        : LevelError(cause), partial_(std::move(partial)) {}
    const std::vector<LevelStats>& partial_stats() const { return partial_; }

private:
    std::vector<LevelStats> partial_;
};

namespace detail {

template <class Scenario>
class PairSampler {
public:
    PairSampler(const LevelStack<Scenario>& stack, const ScenarioSource<Scenario>& source, const MlmcOptions& opt)
        : stack_(stack), source_(source), opt_(opt) {
        for (std::size_t l = 0; l < stack.size(); ++l) {
            double c = opt.scenario_cost + model_cost(l);
            if (l > 0) c += model_cost(l - 1);
            pair_cost_.push_back(c);
        }
    }

    /// Samples indices [first, first + count) of level `level`. Chunks are
    /// merged in index order, so the result does not depend on worker count.
    LevelStats sample(std::size_t level, std::uint64_t first, std::uint64_t count) const {
        const std::uint64_t chunk = std::max<std::uint64_t>(1, opt_.chunk_size);
        const std::uint64_t n_chunks = (count + chunk - 1) / chunk;
        std::vector<LevelStats> parts(n_chunks);
        auto run_chunk = [&](std::uint64_t c) {
            const std::uint64_t lo = first + c * chunk;
            const std::uint64_t hi = std::min(first + count, lo + chunk);
            for (std::uint64_t i = lo; i < hi; ++i) parts[c].add(draw(level, i));
        };

        const unsigned workers = std::max(1u, opt_.workers);
        if (workers == 1 || n_chunks <= 1) {
            for (std::uint64_t c = 0; c < n_chunks; ++c) run_chunk(c);
        } else {
            std::atomic<std::uint64_t> next{0};
            std::atomic<bool> failed{false};
            std::exception_ptr error;
            std::mutex error_mutex;
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < std::min<std::uint64_t>(workers, n_chunks); ++w) {
                pool.emplace_back([&] {
                    for (std::uint64_t c = next++; c < n_chunks && !failed; c = next++) {
                        try {
                            run_chunk(c);
                        } catch (...) {
                            std::lock_guard lock(error_mutex);
                            if (!error) error = std::current_exception();
                            failed = true;
                        }
                    }
                });
            }
            pool.clear();
            if (error) std::rethrow_exception(error);
        }

        LevelStats out;
        for (const auto& p : parts) out.merge(p);
        return out;
    }

private:
    double model_cost(std::size_t l) const {
        if (l < opt_.nominal_costs.size()) return opt_.nominal_costs[l];
        return stack_[l]->nominal_cost_hint();
    }

    LevelPairSample draw(std::size_t level, std::uint64_t index) const {
        using clock = std::chrono::steady_clock;
        const auto start = clock::now();
        const Scenario scenario = source_(derive_seed(opt_.seed, {level, index}));
        const double scenario_time = std::chrono::duration<double>(clock::now() - start).count();
        const auto* lo = level > 0 ? stack_[level - 1].get() : nullptr;
        LevelPairSample s = sample_level_pair(*stack_[level], lo, scenario, level);
        if (opt_.budget_mode == BudgetMode::nominal_cost)
            s.cost = pair_cost_[level];
        else
            s.cost += scenario_time;
        return s;
    }

    const LevelStack<Scenario>& stack_;
    const ScenarioSource<Scenario>& source_;
    const MlmcOptions& opt_;
    std::vector<double> pair_cost_;
};

inline double total_cost(const LevelStats& s) { return static_cast<double>(s.n) * s.mean_cost; }

template <class Scenario>
MlmcEstimate assemble(const LevelStack<Scenario>& stack, const MlmcOptions& opt, std::vector<LevelStats> final_stats,
                      std::size_t first, double spent, MlmcEstimate est) {
    const std::size_t L = stack.size();
    est.total_time = spent;
    est.stats = final_stats;
    for (std::size_t l = 0; l < L; ++l) {
        LevelSummary s;
        s.name = stack[l]->name();
        if (l > 0) s.name += " - " + stack[l - 1]->name();
        if (l < first) {
            s.analytic = true;
            for (Metric m : all_metrics) s.r_hat[static_cast<std::size_t>(m)] = (*opt.analytic_bottom)[m];
        } else {
            const auto& st = final_stats[l];
            s.n = st.n;
            s.tau = st.mean_cost;
            for (Metric m : all_metrics) {
                const auto k = static_cast<std::size_t>(m);
                s.r_hat[k] = st[m].mean_y;
                s.sigma_y[k] = std::sqrt(st.variance(m));
                s.rho[k] = st.correlation(m);
            }
        }
        est.levels.push_back(std::move(s));
    }

    for (Metric m : all_metrics) {
        const auto k = static_cast<std::size_t>(m);
        double q = 0.0, var = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            q += est.levels[l].r_hat[k];
            if (l >= first && final_stats[l].n >= 2) {
                const double n = static_cast<double>(final_stats[l].n);
                var += final_stats[l][m].m2_y / ((n - 1.0) * n);
            }
        }
        est.metric[k].q_hat = q;
        est.metric[k].std_error = std::sqrt(var);
        est.metric[k].speed = (spent > 0.0) ? speed_measure(q, spent, var) : std::numeric_limits<double>::infinity();
    }
    return est;
}

}  // namespace detail

/// Two-phase MLMC run: an exploratory batch on every sampled level, then the
/// remaining budget allocated optimally for `opt.target`.
template <class Scenario>
MlmcEstimate run_mlmc(const LevelStack<Scenario>& stack, const ScenarioSource<Scenario>& source,
                      const MlmcOptions& opt) {
    if (stack.empty()) throw std::invalid_argument("run_mlmc: empty level stack");
    for (const auto& m : stack)
        if (!m) throw std::invalid_argument("run_mlmc: null level model");
    if (opt.exploratory_n < 2) throw std::invalid_argument("run_mlmc: exploratory_n must be >= 2");
    if (!(opt.budget > 0.0)) throw std::invalid_argument("run_mlmc: budget must be positive");

    const std::size_t L = stack.size();
    const std::size_t first = opt.analytic_bottom ? 1 : 0;
    detail::PairSampler<Scenario> sampler(stack, source, opt);

    std::vector<LevelStats> explore(L), final_stats(L);
    double spent = 0.0;
    auto guarded = [&](std::size_t l, std::uint64_t from, std::uint64_t count) {
        try {
            return sampler.sample(l, from, count);
        } catch (const LevelError& e) {
            std::vector<LevelStats> partial = final_stats;
            for (std::size_t k = 0; k < L; ++k)
                if (partial[k].n == 0) partial[k] = explore[k];
            throw MlmcError(e, std::move(partial));
        }
    };

    for (std::size_t l = first; l < L; ++l) {
        explore[l] = guarded(l, 0, opt.exploratory_n);
        spent += detail::total_cost(explore[l]);
    }

    MlmcEstimate est;
    est.target = opt.target;
    est.analytic_bottom = opt.analytic_bottom.has_value();

    std::vector<double> sigmas, taus;
    for (std::size_t l = first; l < L; ++l) {
        sigmas.push_back(std::sqrt(explore[l].variance(opt.target)));
        taus.push_back(std::max(explore[l].mean_cost, 1e-12));
    }
    const bool degenerate = std::all_of(sigmas.begin(), sigmas.end(), [](double s) { return s <= 0.0; });

    if (first == L || degenerate) {
        final_stats = explore;
    } else if (spent >= opt.budget) {
        final_stats = explore;
        est.exploratory_only = true;
    } else {
        const auto n_new = optimal_allocation(sigmas, taus, opt.budget - spent, opt.min_samples);
        for (std::size_t l = first; l < L; ++l) {
            LevelStats batch = guarded(l, opt.exploratory_n, n_new[l - first]);
            spent += detail::total_cost(batch);
            final_stats[l] = opt.reuse_exploration ? merge_stats(explore[l], batch) : batch;
        }
    }

    return detail::assemble(stack, opt, std::move(final_stats), first, spent, std::move(est));
}

/// Samples exactly `allocation[l]` coupled pairs on every sampled level, with
/// no exploratory phase. Entries for an analytic bottom level are ignored.
template <class Scenario>
MlmcEstimate run_mlmc_fixed(const LevelStack<Scenario>& stack, const ScenarioSource<Scenario>& source,
                            std::span<const std::uint64_t> allocation, const MlmcOptions& opt) {
    if (stack.empty()) throw std::invalid_argument("run_mlmc_fixed: empty level stack");
    if (allocation.size() != stack.size()) throw std::invalid_argument("run_mlmc_fixed: one count per level required");
    const std::size_t first = opt.analytic_bottom ? 1 : 0;
    detail::PairSampler<Scenario> sampler(stack, source, opt);
    std::vector<LevelStats> stats(stack.size());
    double spent = 0.0;
    for (std::size_t l = first; l < stack.size(); ++l) {
        try {
            stats[l] = sampler.sample(l, 0, allocation[l]);
        } catch (const LevelError& e) {
            throw MlmcError(e, stats);
        }
        spent += detail::total_cost(stats[l]);
    }
    MlmcEstimate est;
    est.target = opt.target;
    est.analytic_bottom = opt.analytic_bottom.has_value();
    return detail::assemble(stack, opt, std::move(stats), first, spent, std::move(est));
}

/// Mean wall-clock evaluation time per model over `n` scenarios, for
/// freezing nominal costs before deterministic runs.
template <class Scenario>
std::pair<std::vector<double>, double> calibrate_costs(const LevelStack<Scenario>& stack,
                                                       const ScenarioSource<Scenario>& source, std::size_t n,
                                                       std::uint64_t seed = 0x5eed) {
    using clock = std::chrono::steady_clock;
    auto seconds = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
    std::vector<std::vector<double>> times(stack.size());
    std::vector<double> scen_times;
    volatile double sink = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto t0 = clock::now();
        const Scenario s = source(derive_seed(seed, {0xca1, i}));
        scen_times.push_back(seconds(t0, clock::now()));
        for (std::size_t l = 0; l < stack.size(); ++l) {
            auto t1 = clock::now();
            sink = sink + stack[l]->evaluate(s).ens_energy;
            times[l].push_back(seconds(t1, clock::now()));
        }
    }
    auto mean = [](const std::vector<double>& v) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
    };
    std::vector<double> costs;
    for (auto& t : times) costs.push_back(mean(t));
    return {costs, mean(scen_times)};
}

}  // namespace adequacy
