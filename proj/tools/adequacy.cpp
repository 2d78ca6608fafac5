// adequacy: generate trace libraries, train surrogates, run MLMC estimates
// and tabulate them.
//
// Exit codes: 0 ok, 2 config error, 3 missing data or model, 4 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adequacy/architecture.hpp"
#include "adequacy/config.hpp"
#include "adequacy/io.hpp"
#include "adequacy/report.hpp"
#include "adequacy/surrogate.hpp"

namespace fs = std::filesystem;
using namespace adequacy;
using json = nlohmann::json;

namespace {

enum Exit { ok = 0, config_error = 2, missing = 3, failure = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> budget;
    std::optional<std::string> arch;
    std::optional<std::size_t> repeats;
    std::optional<unsigned> workers;
    std::optional<std::string> out;
    std::vector<std::string> reports;
};

ExperimentConfig load(const Options& o) {
    ExperimentConfig c = o.config.empty() ? default_config() : load_config(o.config);
    if (o.out) c.output_dir = *o.out;
    if (o.budget) c.run.budget = *o.budget;
    if (o.arch) c.run.architecture = *o.arch;
    if (o.repeats) c.run.repeats = *o.repeats;
    if (o.workers) c.run.workers = *o.workers;
    validate(c);
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean_annual_peak(const TraceLibrary& lib) {
    double s = 0.0;
    for (const auto& t : lib.traces) s += *std::max_element(t.begin(), t.end());
    return s / static_cast<double>(lib.size());
}

double mean_value(const TraceLibrary& lib) {
    double s = 0.0;
    for (const auto& t : lib.traces)
        for (double v : t) s += v;
    return s / static_cast<double>(lib.size() * hours_per_year);
}

int cmd_generate(ExperimentConfig c, const Options& o) {
    if (o.seed) c.system.library_seed = *o.seed;
    const AdequacySystem sys = make_system(c.system);
    const fs::path dir = c.data_dir();
    write_library_csv(dir / "demand.csv", sys.demand);
    write_library_csv(dir / "wind.csv", sys.wind);
    write_copt_csv(dir / "copt.csv", build_copt(sys.fleet));
    const double peak = mean_annual_peak(sys.demand);
    const double cf = sys.wind.size() && c.system.wind.capacity_mw > 0.0 ? mean_value(sys.wind) / c.system.wind.capacity_mw : 0.0;
    json meta = {{"format", "adequacy-system"},
                 {"version", 1},
                 {"config_hash", hash_hex(sys.hash)},
                 {"system", to_json(c.system)},
                 {"mean_annual_peak_mw", peak},
                 {"mean_wind_capacity_factor", cf},
                 {"thermal_capacity_mw", std::accumulate(sys.fleet.begin(), sys.fleet.end(), 0.0,
                                                         [](double a, const GeneratingUnit& u) { return a + u.capacity; })},
                 {"storage_power_mw", sys.storage.total_power()},
                 {"storage_energy_mwh", sys.storage.total_energy()},
                 {"avg_profile_offset", sys.profile.offset}};
    write_json(dir / "system.json", meta);
    std::printf("wrote %zu demand and %zu wind traces to %s\n", sys.demand.size(), sys.wind.size(), dir.string().c_str());
    std::printf("mean annual peak %.1f MW, wind capacity factor %.4f, config hash %s\n", peak, cf, hash_hex(sys.hash).c_str());
    return ok;
}

AdequacySystem load_system(const ExperimentConfig& c) {
    const fs::path dir = c.data_dir();
    const json meta = read_json(dir / "system.json");
    const std::uint64_t want = system_hash(c.system);
    if (meta.at("config_hash").get<std::string>() != hash_hex(want))
        throw MissingFileError("data in " + dir.string() + " was generated for a different system (hash " +
                               meta.at("config_hash").get<std::string>() + ", config has " + hash_hex(want) +
                               "); rerun 'adequacy generate'");
    AdequacySystem sys = make_system(c.system, read_library_csv(dir / "demand.csv"), read_library_csv(dir / "wind.csv"));
    sys.hash = want;
    return sys;
}

std::string bundle_path_hash(const fs::path& p, json* out = nullptr) {
    const json j = read_json(p);
    if (out) *out = j;
    return hash_hex(fnv1a(j.dump()));
}

int cmd_train(ExperimentConfig c, const Options& o) {
    if (o.seed) c.training.seed = *o.seed;
    const AdequacySystem sys = load_system(c);
    const auto& t = c.training;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainingSet ts = build_training_set(t.n_days, sys.demand, sys.wind, sys.fleet, sys.storage, t.seed, sys.hash);
    const double mining = seconds_since(t0);

    TrainingTimings timings;
    SurrogateBundle bundle;
    try {
        bundle = train_surrogates(ts, t.gbt, t.train_svr ? std::optional<SvrParams>(t.svr) : std::nullopt, t.theta, &timings);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + "; increase training.n_days or set training.train_svr to false");
    }
    if (bundle.lol_model.degenerate) std::fprintf(stderr, "warning: LOL features are degenerate; model predicts the label mean\n");
    if (bundle.ens_model && !bundle.ens_model->converged)
        std::fprintf(stderr, "warning: SVR stopped after %d sweeps without converging\n", bundle.ens_model->sweeps);

    const fs::path mdir = c.model_dir();
    write_training_set(mdir / "training_set.csv", mdir / "training_set.meta.json", ts);
    const json bj = to_json(bundle);
    write_json(mdir / "surrogates.json", bj);
    const std::string model_hash = hash_hex(fnv1a(bj.dump()));

    json holdout = nullptr;
    if (t.holdout_days > 0) {
        const TrainingSet test = build_training_set(t.holdout_days, sys.demand, sys.wind, sys.fleet, sys.storage,
                                                    derive_seed(t.seed, {0x401d}), sys.hash);
        std::vector<double> lol_hat;
        for (const auto& f : test.frames) lol_hat.push_back(bundle.predict_lol(f));
        holdout = {{"days", test.size()}, {"lol_rmse_h", evaluate_rmse(lol_hat, test.lol)}, {"ens_rmse_mwh", nullptr}};
        const TrainingSet cur = test.subset(curtailed_days(test));
        holdout["curtailed_days"] = cur.size();
        if (bundle.ens_model && cur.size() > 0) {
            std::vector<double> ens_hat;
            for (const auto& f : cur.frames) ens_hat.push_back(bundle.predict_ens(f));
            holdout["ens_rmse_mwh"] = evaluate_rmse(ens_hat, cur.ens);
        }
    }

    const json report = {{"format", "adequacy-training-report"},
                         {"version", 1},
                         {"config_hash", hash_hex(sys.hash)},
                         {"model_hash", model_hash},
                         {"seed", t.seed},
                         {"training_days", ts.size()},
                         {"curtailed_days", curtailed_days(ts).size()},
                         {"days_scanned", ts.provenance.days_scanned},
                         {"acceptance_rate", ts.provenance.acceptance_rate},
                         {"gbt_trees", bundle.lol_model.trees.size()},
                         {"svr_support_vectors", bundle.ens_model ? json(bundle.ens_model->support_count()) : json(nullptr)},
                         {"holdout", holdout},
                         {"timing", {{"mining_seconds", mining}, {"gbt_seconds", timings.gbt_seconds}, {"svr_seconds", timings.svr_seconds}}}};
    write_json(c.report_dir() / "training.json", report);
    std::printf("trained on %zu days (acceptance rate %.4f), model hash %s\n", ts.size(), ts.provenance.acceptance_rate,
                model_hash.c_str());
    std::printf("timing: mining %.2f s, GBT %.2f s, SVR %.2f s\n", mining, timings.gbt_seconds, timings.svr_seconds);
    if (!holdout.is_null()) {
        std::printf("holdout LOL RMSE %.4f h", holdout["lol_rmse_h"].get<double>());
        if (!holdout["ens_rmse_mwh"].is_null()) std::printf(", ENS RMSE %.2f MWh", holdout["ens_rmse_mwh"].get<double>());
        std::printf("\n");
    }
    return ok;
}

std::string report_stem(const std::string& arch) {
    std::string s = "run_";
    for (char ch : arch) s += ch == '|' ? '_' : ch;
    return s;
}

int cmd_estimate(ExperimentConfig c, const Options& o) {
    if (o.seed) c.run.seed = *o.seed;
    const ArchitectureSpec spec = parse_architecture(c.run.architecture);
    AdequacySystem sys = load_system(c);
    std::string model_hash;
    if (spec.needs_surrogates()) {
        json bj;
        model_hash = bundle_path_hash(c.model_dir() / "surrogates.json", &bj);
        auto bundle = std::make_shared<SurrogateBundle>(surrogate_from_json(bj));
        if (bundle->provenance.config_hash != sys.hash)
            throw MissingFileError("surrogates in " + c.model_dir().string() + " were trained for a different system; rerun 'adequacy train'");
        if (spec.uses("HGB+SVR") && !bundle->ens_model)
            throw MissingFileError("architecture uses HGB+SVR but the trained bundle has no ENS regressor");
        sys.bundle = std::move(bundle);
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto estimates = run_architecture(spec, sys, c.run);
    RunReport rep;
    rep.architecture = spec.str();
    rep.config_hash = hash_hex(sys.hash);
    rep.model_hash = model_hash;
    rep.seed = c.run.seed;
    rep.budget = c.run.budget;
    rep.budget_mode = c.run.budget_mode;
    rep.exploratory_n = c.run.exploratory_n;
    rep.target = c.run.target;
    for (std::size_t r = 0; r < estimates.size(); ++r) rep.runs.push_back(make_run_record(estimates[r], derive_seed(c.run.seed, {r})));
    summarize(rep);
    rep.wall_seconds = seconds_since(t0);

    const fs::path stem = c.report_dir() / report_stem(rep.architecture);
    write_json(fs::path(stem).concat(".json"), to_json(rep));
    const std::string table = table_csv({rep}, rep.architecture == "Exact" ? &rep : nullptr);
    {
        auto out = open_output(fs::path(stem).concat(".csv"));
        out << table;
    }
    std::cout << table;
    return ok;
}

int cmd_compare(ExperimentConfig c, const Options& o) {
    std::vector<fs::path> paths(o.reports.begin(), o.reports.end());
    if (paths.empty()) {
        if (fs::is_directory(c.report_dir()))
            for (const auto& e : fs::directory_iterator(c.report_dir()))
                if (e.path().extension() == ".json" && e.path().filename().string().rfind("run_", 0) == 0) paths.push_back(e.path());
        std::sort(paths.begin(), paths.end());
    }
    if (paths.empty()) throw MissingFileError("no run reports found in " + c.report_dir().string());
    std::vector<RunReport> reports;
    for (const auto& p : paths) reports.push_back(report_from_json(read_json(p)));
    check_comparable(reports);
    const RunReport* base = find_baseline(reports);
    if (!base) std::fprintf(stderr, "warning: no plain MC ('Exact') report; speedups are nan\n");
    const std::string table = table_csv(reports, base);
    {
        auto out = open_output(c.report_dir() / "compare.csv");
        out << table;
    }
    std::cout << table;
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-system adequacy estimation with multilevel Monte Carlo"};
    app.require_subcommand(1, 1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Experiment config (JSON); built-in reference system if omitted");
        sub->add_option("--seed", o.seed, "Seed: library seed for generate, training seed for train, run seed for estimate");
        sub->add_option("--out", o.out, "Output root (data/, models/, reports/ below it)");
    };
    auto run_opts = [&](CLI::App* sub) {
        sub->add_option("--budget", o.budget, "Cost budget per run, seconds")->check(CLI::PositiveNumber);
        sub->add_option("--arch", o.arch, "Level stack, top first, e.g. Exact|HGB+Gre|Avg");
        sub->add_option("--repeats", o.repeats, "Independent runs to aggregate")->check(CLI::PositiveNumber);
        sub->add_option("--workers", o.workers, "Sampling threads (0 = all cores)");
    };

    auto* gen = app.add_subcommand("generate", "Write demand/wind trace libraries, system summary and COPT");
    auto* train = app.add_subcommand("train", "Mine low-margin days, label them and train the surrogates");
    auto* est = app.add_subcommand("estimate", "Run MLMC for one architecture and write its report");
    auto* cmp = app.add_subcommand("compare", "Tabulate run reports with speedups relative to plain MC");
    for (auto* s : {gen, train, est, cmp}) common(s);
    run_opts(est);
    for (auto* s : {gen, train, cmp}) s->add_option("--workers", o.workers, "Unused; accepted for uniformity");
    cmp->add_option("reports", o.reports, "Run report JSON files (default: all run_*.json in the report dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        const ExperimentConfig c = load(o);
        if (*gen) return cmd_generate(c, o);
        if (*train) return cmd_train(c, o);
        if (*est) return cmd_estimate(c, o);
        return cmd_compare(c, o);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return config_error;
    } catch (const MissingFileError& e) {
        std::fprintf(stderr, "missing input: %s\n", e.what());
        return missing;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return failure;
    }
}
