// Acceptance gate on the shipped reference system. Prints one PASS/FAIL line
// per criterion, with the measured numbers underneath, and exits nonzero if
// any criterion fails.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <vector>

#include "adequacy/architecture.hpp"
#include "adequacy/report.hpp"
#include "dp_oracle.hpp"

using namespace adequacy;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::vector<std::string> architectures{"Exact|Avg",         "Exact|HGB+SVR",         "Exact|Gre|Avg",
                                             "Exact|HGB+SVR|Avg", "Exact|HGB+Gre|Avg", "Exact|HGB+Gre|HGB+SVR|Avg"};

constexpr std::size_t reference_n = 1'000'000;
constexpr double unbiased_budget = 1.0;  // nominal seconds
constexpr std::size_t unbiased_repeats = 50;
constexpr std::size_t variance_runs = 200;
constexpr double variance_tolerance = 0.30;
constexpr double speed_budget = 3.0;  // wall-clock seconds
constexpr std::size_t speed_repeats = 20;
constexpr double speedup_factor = 2.0;
constexpr std::size_t avg_check_n = 100'000;
const std::vector<std::size_t> train_sizes{500, 1000, 5000};
constexpr std::size_t train_pool_days = 10'000, test_pool_days = 4'000, accuracy_repeats = 20;

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) m += x / n;
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return {m, v.size() > 1 ? std::sqrt(sq / (n - 1.0) / n) : 0.0};
}

double sample_variance(const std::vector<double>& v) {
    const MeanSe s = mean_se(v);
    return s.se * s.se * static_cast<double>(v.size());
}

std::vector<double> metric_values(const std::vector<MlmcEstimate>& runs, Metric m, double MetricEstimate::*field) {
    std::vector<double> out;
    for (const auto& e : runs) out.push_back(e[m].*field);
    return out;
}

const char* metric_label(Metric m) { return m == Metric::lole ? "LOLE" : "EENS"; }

class Gate {
public:
    Gate(ExperimentConfig cfg, fs::path cache, std::string cli) : cfg_(std::move(cfg)), cache_(fs::absolute(cache)), cli_(std::move(cli)) {
        fs::create_directories(cache_);
    }

    bool run(int id) {
        const auto start = std::chrono::steady_clock::now();
        bool pass = false;
        std::string title;
        switch (id) {
            case 1: title = "unbiasedness against direct MC"; pass = unbiasedness(); break;
            case 2: title = "variance law over fixed allocations"; pass = variance_law(); break;
            case 3: title = "optimal allocation beats equal split"; pass = allocation_optimality(); break;
            case 4: title = "EENS speedup ordering"; pass = speedup_ordering(); break;
            case 5: title = "LOLE speedup <= EENS speedup"; pass = lole_vs_eens(); break;
            case 6: title = "exact dispatch optimality"; pass = dispatch_optimality(); break;
            case 7: title = "convolution correctness"; pass = convolution(); break;
            case 8: title = "surrogate accuracy improves with training size"; pass = accuracy_trend(); break;
            case 9: title = "MLMC speedup vs training size"; pass = training_size_trend(); break;
            case 10: title = "determinism of CLI reruns"; pass = determinism(); break;
            default: throw std::invalid_argument("no criterion " + std::to_string(id));
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %d: %s (%.0f s)\n", pass ? "PASS" : "FAIL", id, title.c_str(), secs);
        std::fflush(stdout);
        return pass;
    }

private:
    const AdequacySystem& system() {
        if (!system_) {
            system_.emplace(make_system(cfg_.system));
            const auto& t = cfg_.training;
            training_ = build_training_set(t.n_days, system_->demand, system_->wind, system_->fleet, system_->storage, t.seed, system_->hash);
            system_->bundle = std::make_shared<const SurrogateBundle>(train_surrogates(*training_, t.gbt, t.svr, t.theta));
            const auto& risk = system_->avg_risk();
            std::printf("  reference system %s: %zu training days, acceptance rate %.4f, Avg model LOLE %.3f h/y\n",
                        hash_hex(system_->hash).c_str(), training_->size(), training_->provenance.acceptance_rate, risk.lol_hours);
        }
        return *system_;
    }

    RunConfig run_config(BudgetMode mode, double budget, std::size_t repeats, std::uint64_t seed) const {
        RunConfig r = cfg_.run;
        r.budget_mode = mode;
        r.budget = budget;
        r.repeats = repeats;
        r.seed = seed;
        r.workers = 1;
        return r;
    }

    // Direct MC of the Exact model, cached per system hash.
    std::array<MeanSe, metric_count> reference() {
        const auto& sys = system();
        const fs::path path = cache_ / ("reference_mc_" + hash_hex(sys.hash) + "_" + std::to_string(reference_n) + ".json");
        std::array<MeanSe, metric_count> out{};
        if (fs::exists(path)) {
            const json j = read_json(path);
            for (Metric m : all_metrics) out[static_cast<std::size_t>(m)] = {j.at(metric_label(m)).at("mean"), j.at(metric_label(m)).at("se")};
            return out;
        }
        const auto stack = build_stack(parse_architecture("Exact"), sys);
        MlmcOptions opt;
        opt.seed = 0x2ef;
        opt.workers = std::max(1u, std::thread::hardware_concurrency());
        const std::vector<std::uint64_t> alloc{reference_n};
        const auto est = run_mlmc_fixed(stack, sys.source(), alloc, opt);
        json j;
        for (Metric m : all_metrics) {
            out[static_cast<std::size_t>(m)] = {est[m].q_hat, est[m].std_error};
            j[metric_label(m)] = {{"mean", est[m].q_hat}, {"se", est[m].std_error}};
        }
        j["n"] = reference_n;
        write_json(path, j);
        return out;
    }

    bool unbiasedness() {
        const auto ref = reference();
        std::printf("  direct MC (n=%zu): LOLE %.4f +- %.4f h/y, EENS %.2f +- %.2f MWh/y\n", reference_n, ref[0].mean, ref[0].se,
                    ref[1].mean, ref[1].se);
        bool ok = true;
        for (const auto& arch : architectures) {
            const auto runs = run_architecture(parse_architecture(arch), system(),
                                               run_config(BudgetMode::nominal_cost, unbiased_budget, unbiased_repeats, 101));
            std::printf("  %-28s", arch.c_str());
            for (Metric m : all_metrics) {
                const auto k = static_cast<std::size_t>(m);
                const MeanSe s = mean_se(metric_values(runs, m, &MetricEstimate::q_hat));
                const double z = (s.mean - ref[k].mean) / std::hypot(s.se, ref[k].se);
                ok = ok && std::abs(z) < 3.0;
                std::printf(" %s %.4g +- %.3g (z %+.2f)", metric_label(m), s.mean, s.se, z);
            }
            std::printf("\n");
        }
        return ok;
    }

    bool variance_law() {
        const auto& sys = system();
        const auto spec = parse_architecture("Exact|HGB+Gre|Avg");
        const auto stack = build_stack(spec, sys);
        MlmcOptions opt = make_options(run_config(BudgetMode::nominal_cost, 1.0, 1, 0), spec, sys);
        const std::vector<std::uint64_t> alloc{0, 4000, 500};
        std::vector<MlmcEstimate> runs;
        for (std::size_t r = 0; r < variance_runs; ++r) {
            opt.seed = derive_seed(0x7a2, {r});
            runs.push_back(run_mlmc_fixed(stack, sys.source(), alloc, opt));
        }
        bool ok = true;
        for (Metric m : all_metrics) {
            const double empirical = sample_variance(metric_values(runs, m, &MetricEstimate::q_hat));
            double reported = 0.0;
            for (double se : metric_values(runs, m, &MetricEstimate::std_error)) reported += se * se / static_cast<double>(runs.size());
            const double ratio = empirical / reported;
            ok = ok && std::abs(ratio - 1.0) <= variance_tolerance;
            std::printf("  %s: empirical variance %.4g, mean SE^2 %.4g, ratio %.3f\n", metric_label(m), empirical, reported, ratio);
        }
        return ok;
    }

    static double variance_of(const std::vector<double>& sigma, const std::vector<std::uint64_t>& n) {
        double v = 0.0;
        for (std::size_t l = 0; l < sigma.size(); ++l) v += sigma[l] * sigma[l] / static_cast<double>(n[l]);
        return v;
    }

    bool allocation_optimality() {
        Rng rng = make_rng(0xa110c);
        std::uniform_int_distribution<int> levels(2, 4);
        std::uniform_real_distribution<double> log_sigma(-2.0, 2.0), log_tau(-5.0, -2.0);
        const double budget = 1000.0;
        bool ok = true;
        int strict = 0;
        auto equal_split = [&](const std::vector<double>& tau) {
            std::vector<std::uint64_t> n;
            for (double t : tau) n.push_back(static_cast<std::uint64_t>(std::floor(budget / (static_cast<double>(tau.size()) * t) + 0.5)));
            return n;
        };
        for (int trial = 0; trial < 20; ++trial) {
            const int L = levels(rng);
            std::vector<double> sigma, tau;
            for (int l = 0; l < L; ++l) {
                sigma.push_back(std::pow(10.0, log_sigma(rng)));
                tau.push_back(std::pow(10.0, log_tau(rng)));
            }
            const double v_opt = variance_of(sigma, optimal_allocation(sigma, tau, budget));
            const double v_eq = variance_of(sigma, equal_split(tau));
            ok = ok && v_opt <= v_eq * (1.0 + 1e-9);
            strict += v_opt < v_eq * (1.0 - 1e-6);
        }
        // σ√τ equal on every level: the optimum is the equal split.
        const std::vector<double> tau{1e-5, 4e-4, 2.5e-3}, sigma{10.0, 10.0 / std::sqrt(40.0), 10.0 / std::sqrt(250.0)};
        const double v_opt = variance_of(sigma, optimal_allocation(sigma, tau, budget));
        const double v_eq = variance_of(sigma, equal_split(tau));
        const bool equal = std::abs(v_opt / v_eq - 1.0) <= 1e-6;
        std::printf("  20 random stacks: optimal <= equal split in all: %s, strictly better in %d; proportional case ratio %.9f\n",
                    ok ? "yes" : "no", strict, v_opt / v_eq);
        return ok && equal;
    }

    const std::map<std::string, std::vector<MlmcEstimate>>& speed_runs() {
        if (speed_.empty()) {
            std::vector<std::string> all{"Exact"};
            all.insert(all.end(), architectures.begin(), architectures.end());
            for (const auto& arch : all)
                speed_[arch] = run_architecture(parse_architecture(arch), system(),
                                                run_config(BudgetMode::wall_clock, speed_budget, speed_repeats, 303));
            std::printf("  %-28s %12s %12s %12s %12s\n", "architecture", "LOLE speed", "EENS speed", "LOLE x", "EENS x");
            for (const auto& arch : all)
                std::printf("  %-28s %12.1f %12.1f %12.2f %12.2f\n", arch.c_str(), mean_speed(arch, Metric::lole),
                            mean_speed(arch, Metric::eens), speedup(arch, Metric::lole), speedup(arch, Metric::eens));
        }
        return speed_;
    }

    double mean_speed(const std::string& arch, Metric m) {
        return mean_se(metric_values(speed_runs().at(arch), m, &MetricEstimate::speed)).mean;
    }

    double speedup(const std::string& arch, Metric m) { return mean_speed(arch, m) / mean_speed("Exact", m); }

    bool speedup_ordering() {
        speed_runs();
        const double a = mean_speed("Exact|Avg", Metric::eens) / mean_speed("Exact", Metric::eens);
        const double b = mean_speed("Exact|HGB+Gre|Avg", Metric::eens) / mean_speed("Exact|Avg", Metric::eens);
        std::printf("  Exact|Avg over Exact: %.2fx (need >= %.0fx)\n", a, speedup_factor);
        std::printf("  Exact|HGB+Gre|Avg over Exact|Avg: %.2fx (need >= %.0fx)\n", b, speedup_factor);
        return a >= speedup_factor && b >= speedup_factor;
    }

    bool lole_vs_eens() {
        speed_runs();
        bool ok = true;
        for (const auto& arch : architectures) {
            const double lole = speedup(arch, Metric::lole), eens = speedup(arch, Metric::eens);
            ok = ok && lole <= eens;
            std::printf("  %-28s LOLE %.2fx, EENS %.2fx, level correlations LOLE/EENS:", arch.c_str(), lole, eens);
            const auto& runs = speed_.at(arch);
            for (std::size_t l = 1; l < runs.front().levels.size(); ++l) {
                std::array<double, metric_count> rho{};
                for (const auto& e : runs)
                    for (std::size_t k = 0; k < metric_count; ++k)
                        rho[k] += e.levels[l].rho[k].value_or(std::nan("")) / static_cast<double>(runs.size());
                std::printf(" %.3f/%.3f", rho[0], rho[1]);
            }
            std::printf("\n");
        }
        return ok;
    }

    bool dispatch_optimality() {
        Rng rng = make_rng(0xd15);
        std::uniform_int_distribution<int> cells(1, 6), p_cells(2, 8), hours(12, 30);
        int worse_than_greedy = 0, off_dp = 0, strictly_better = 0;
        double max_gap = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const double pa = 0.25 * p_cells(rng), pb = 0.25 * p_cells(rng);
            const double ea = pa * hours(rng), eb = pb * hours(rng);
            std::vector<double> m(48);
            for (auto& v : m) v = -0.25 * cells(rng);
            const std::vector<std::pair<double, double>> pe{{pa, ea}, {pb, eb}};
            const auto fleet = StorageFleet::full(pe);
            const double ex = exact_outcome(m, fleet).ens_energy, gre = greedy_outcome(m, fleet).ens_energy;
            const double dp = oracle::min_ens_two_units(m, {pa, ea}, {pb, eb});
            worse_than_greedy += ex > gre + 1e-9;
            strictly_better += ex < gre - 1e-9;
            off_dp += std::abs(ex - dp) > 0.25;
            max_gap = std::max(max_gap, std::abs(ex - dp));
        }
        std::printf("  100 traces: exact > greedy on %d, exact < greedy on %d, |exact - DP| > 0.25 on %d (max %.4f MWh)\n",
                    worse_than_greedy, strictly_better, off_dp, max_gap);
        return worse_than_greedy == 0 && off_dp == 0;
    }

    bool convolution() {
        Rng rng = make_rng(0xc097);
        std::uniform_int_distribution<int> cap(1, 8);
        std::uniform_real_distribution<double> rate(0.001, 0.2);
        double worst_tv = 0.0;
        for (int n = 1; n <= 10; ++n) {
            for (int rep = 0; rep < 3; ++rep) {
                std::vector<GeneratingUnit> units;
                for (int i = 0; i < n; ++i) units.push_back({50.0 * cap(rng), rate(rng), rate(rng)});
                std::map<double, double> dist;
                for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
                    double c = 0.0, p = 1.0;
                    for (int i = 0; i < n; ++i) {
                        const double a = units[i].availability();
                        const bool up = mask >> i & 1ULL;
                        c += up ? units[i].capacity : 0.0;
                        p *= up ? a : 1.0 - a;
                    }
                    dist[c] += p;
                }
                const Copt t = build_copt(units);
                std::map<double, double> table;
                for (std::size_t j = 0; j < t.size(); ++j) table[t.capacity[j]] += t.probability[j];
                std::set<double> keys;
                for (const auto& [c, p] : dist) keys.insert(c);
                for (const auto& [c, p] : table) keys.insert(c);
                double tv = 0.0;
                for (double c : keys) tv += std::abs((dist.contains(c) ? dist[c] : 0.0) - (table.contains(c) ? table[c] : 0.0));
                worst_tv = std::max(worst_tv, 0.5 * tv);
            }
        }
        const auto& sys = system();
        const auto stack = build_stack(parse_architecture("Exact|Avg"), sys);
        const LevelStack<Scenario> avg_only{stack.front()};
        MlmcOptions opt;
        opt.seed = 0xa7a;
        const std::vector<std::uint64_t> alloc{avg_check_n};
        const auto est = run_mlmc_fixed(avg_only, sys.source(), alloc, opt);
        const auto& exact = sys.avg_risk();
        bool ok = worst_tv <= 1e-12;
        std::printf("  COPT vs enumeration, 30 fleets of 1-10 units: worst TV %.3g\n", worst_tv);
        for (Metric m : all_metrics) {
            const double z = (est[m].q_hat - exact[m]) / est[m].std_error;
            ok = ok && std::abs(z) < 3.0;
            std::printf("  Avg %s analytic %.5g, sampled (n=%zu) %.5g +- %.3g (z %+.2f)\n", metric_label(m), exact[m], avg_check_n,
                        est[m].q_hat, est[m].std_error, z);
        }
        return ok;
    }

    bool accuracy_trend() {
        const auto& sys = system();
        const auto& t = cfg_.training;
        const TrainingSet train = build_training_set(train_pool_days, sys.demand, sys.wind, sys.fleet, sys.storage,
                                                     derive_seed(t.seed, {0xacc, 1}), sys.hash);
        const TrainingSet test = build_training_set(test_pool_days, sys.demand, sys.wind, sys.fleet, sys.storage,
                                                    derive_seed(t.seed, {0xacc, 2}), sys.hash);
        const auto points = accuracy_study(train, test, train_sizes, accuracy_repeats, t.gbt, t.svr, 0x5eed);
        bool ok = true;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            std::printf("  size %5zu: LOL RMSE %.4f +- %.4f h, ENS RMSE %.2f +- %.2f MWh\n", p.train_size, AccuracyPoint::mean(p.lol_rmse),
                        AccuracyPoint::std_error(p.lol_rmse), AccuracyPoint::mean(p.ens_rmse), AccuracyPoint::std_error(p.ens_rmse));
            if (i > 0) {
                const auto& q = points[i - 1];
                ok = ok && AccuracyPoint::mean(p.lol_rmse) < AccuracyPoint::mean(q.lol_rmse) &&
                     AccuracyPoint::mean(p.ens_rmse) < AccuracyPoint::mean(q.ens_rmse);
            }
        }
        return ok;
    }

    bool training_size_trend() {
        speed_runs();
        const auto& base = system();
        const auto& t = cfg_.training;
        const std::string arch = "Exact|HGB+Gre|HGB+SVR|Avg";
        bool ok = true;
        double previous = 0.0;
        for (std::size_t size : train_sizes) {
            std::vector<std::size_t> idx(std::min(size, training_->size()));
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            AdequacySystem sys = make_system(cfg_.system, base.demand, base.wind);
            sys.bundle = std::make_shared<const SurrogateBundle>(train_surrogates(training_->subset(idx), t.gbt, t.svr, t.theta));
            const auto runs = run_architecture(parse_architecture(arch), sys,
                                               run_config(BudgetMode::wall_clock, speed_budget, speed_repeats, 909));
            const MeanSe speed = mean_se(metric_values(runs, Metric::eens, &MetricEstimate::speed));
            const double x = speed.mean / mean_speed("Exact", Metric::eens);
            std::printf("  size %5zu: EENS speed %.1f +- %.1f, speedup %.2fx\n", size, speed.mean, speed.se, x);
            ok = ok && x >= previous;
            previous = x;
        }
        return ok;
    }

    int cli(const std::string& args) const {
        const std::string cmd = cli_ + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    bool determinism() {
        const fs::path dir = cache_ / "determinism";
        fs::remove_all(dir);
        fs::create_directories(dir);
        ExperimentConfig c = cfg_;
        c.output_dir = (dir / "out").string();
        c.run.budget_mode = BudgetMode::nominal_cost;
        c.run.budget = 2.0;
        const fs::path cfg = dir / "config.json";
        write_json(cfg, to_json(c));
        const std::string base = "--config " + cfg.string();
        const fs::path out = dir / "out";
        const std::vector<fs::path> files{out / "data" / "demand.csv",         out / "data" / "wind.csv",
                                          out / "data" / "copt.csv",           out / "data" / "system.json",
                                          out / "models" / "surrogates.json",  out / "models" / "training_set.csv",
                                          out / "models" / "training_set.meta.json"};
        const std::string arch = " --arch 'Exact|HGB+Gre|HGB+SVR|Avg' --repeats 2 --seed 11";
        const fs::path report = out / "reports" / "run_Exact_HGB+Gre_HGB+SVR_Avg.json";

        std::vector<std::string> first_files;
        RunReport first;
        std::string first_table;
        bool ok = true;
        for (int pass = 0; pass < 2; ++pass) {
            const std::string workers = pass == 0 ? " --workers 1" : " --workers 2";
            ok = ok && cli("generate " + base) == 0 && cli("train " + base) == 0 &&
                 cli("estimate " + base + arch + workers) == 0 && cli("estimate " + base + " --arch Exact --seed 11" + workers) == 0 &&
                 cli("compare " + base) == 0;
            if (!ok) {
                std::printf("  CLI pipeline failed on pass %d\n", pass + 1);
                return false;
            }
            std::vector<std::string> contents;
            for (const auto& f : files) contents.push_back(slurp(f));
            const RunReport rep = report_from_json(read_json(report));
            const std::string table = slurp(out / "reports" / "compare.csv");
            if (pass == 0) {
                first_files = contents;
                first = rep;
                first_table = table;
                continue;
            }
            for (std::size_t i = 0; i < files.size(); ++i) {
                const bool same = contents[i] == first_files[i];
                ok = ok && same;
                std::printf("  %-36s %s\n", files[i].filename().string().c_str(), same ? "identical" : "DIFFERS");
            }
            const bool same_report = without_timing(rep) == without_timing(first);
            const bool same_table = table == first_table;
            std::printf("  %-36s %s\n", report.filename().string().c_str(), same_report ? "identical without timing" : "DIFFERS");
            std::printf("  %-36s %s\n", "compare.csv", same_table ? "identical" : "DIFFERS");
            ok = ok && same_report && same_table;
        }
        return ok;
    }

    ExperimentConfig cfg_;
    fs::path cache_;
    std::string cli_;
    std::optional<AdequacySystem> system_;
    std::optional<TrainingSet> training_;
    std::map<std::string, std::vector<MlmcEstimate>> speed_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks on the reference system"};
    std::string cache = "acceptance_cache", cli_path = "adequacy", config;
    std::vector<int> only;
    app.add_option("--cache-dir", cache, "Directory for cached reference runs");
    app.add_option("--cli", cli_path, "Path to the adequacy executable");
    app.add_option("--config", config, "Experiment config (defaults to the reference system)");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = config.empty() ? default_config() : load_config(config);
        Gate gate(std::move(cfg), cache, cli_path);
        if (only.empty())
            for (int i = 1; i <= 10; ++i) only.push_back(i);
        int failed = 0;
        for (int id : only) failed += !gate.run(id);
        std::printf("%zu criteria, %d failed\n", only.size(), failed);
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance: %s\n", e.what());
        return 4;
    }
}
