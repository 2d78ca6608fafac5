#pragma once

// Learned level models. A day is described by its 24 hourly margins clipped
// from above at 1 MW and standardized; a boosted-tree regressor predicts the
// day's LOL hours and, on days it flags, either greedy dispatch or a kernel
// regressor supplies the ENS. Annual outputs are sums over the 365 days.

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adequacy/dispatch.hpp"
#include "adequacy/gbt.hpp"
#include "adequacy/io.hpp"
#include "adequacy/levels.hpp"
#include "adequacy/scenario.hpp"
#include "adequacy/svr.hpp"

namespace adequacy {

inline constexpr double frame_clip_mw = 1.0;

using DayFrame = std::array<double, hours_per_day>;

inline DayFrame clip_frame(std::span<const double> day) {
    if (day.size() != hours_per_day) throw std::invalid_argument("clip_frame: a day has 24 hours");
    DayFrame f;
    for (std::size_t h = 0; h < hours_per_day; ++h) f[h] = std::min(day[h], frame_clip_mw);
    return f;
}

/// Per-feature affine standardization frozen at training time.
struct Normalizer {
    DayFrame mean{};
    DayFrame scale{};

    static Normalizer fit(std::span<const DayFrame> frames) {
        if (frames.empty()) throw std::invalid_argument("Normalizer::fit: no frames");
        Normalizer n;
        const auto count = static_cast<double>(frames.size());
        for (const auto& f : frames)
            for (std::size_t h = 0; h < hours_per_day; ++h) n.mean[h] += f[h] / count;
        for (std::size_t h = 0; h < hours_per_day; ++h) {
            double sq = 0.0;
            for (const auto& f : frames) sq += (f[h] - n.mean[h]) * (f[h] - n.mean[h]);
            const double sd = std::sqrt(sq / count);
            n.scale[h] = sd > 0.0 ? sd : 1.0;
        }
        return n;
    }

    DayFrame apply(const DayFrame& raw) const {
        DayFrame out;
        for (std::size_t h = 0; h < hours_per_day; ++h) out[h] = (raw[h] - mean[h]) / scale[h];
        return out;
    }
    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

inline nlohmann::json to_json(const Normalizer& n) { return {{"mean", n.mean}, {"scale", n.scale}}; }

inline Normalizer normalizer_from_json(const nlohmann::json& j) {
    Normalizer n;
    n.mean = j.at("mean").get<DayFrame>();
    n.scale = j.at("scale").get<DayFrame>();
    return n;
}

/// The 365 clipped, pre-normalization frames of a scenario.
inline std::vector<DayFrame> raw_day_frames(std::span<const double> margin) {
    if (margin.size() != hours_per_year) throw std::invalid_argument("raw_day_frames: expected an 8760-hour trace");
    std::vector<DayFrame> out(days_per_year);
    for (std::size_t d = 0; d < days_per_year; ++d) out[d] = clip_frame(margin.subspan(d * hours_per_day, hours_per_day));
    return out;
}

inline std::vector<DayFrame> extract_day_frames(const Scenario& s, const Normalizer& norm) {
    std::vector<DayFrame> frames = raw_day_frames(s.margin);
    for (auto& f : frames) f = norm.apply(f);
    return frames;
}

struct TrainingProvenance {
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::uint64_t days_scanned = 0;
    double acceptance_rate = 0.0;
    friend bool operator==(const TrainingProvenance&, const TrainingProvenance&) = default;
};

/// Labeled low-margin days; features are clipped but not normalized.
struct TrainingSet {
    std::vector<DayFrame> frames;
    std::vector<double> lol;
    std::vector<double> ens;
    TrainingProvenance provenance;

    std::size_t size() const { return frames.size(); }
    TrainingSet subset(std::span<const std::size_t> idx) const {
        TrainingSet t;
        t.provenance = provenance;
        for (std::size_t i : idx) {
            t.frames.push_back(frames.at(i));
            t.lol.push_back(lol.at(i));
            t.ens.push_back(ens.at(i));
        }
        return t;
    }
    friend bool operator==(const TrainingSet&, const TrainingSet&) = default;
};

/// Daily outcome of exact dispatch on an isolated day that starts with full storage.
inline OutcomeVector label_day(std::span<const double> day, const StorageFleet& fleet) {
    return exact_outcome(day, fleet.refilled());
}

inline TrainingSet build_training_set(std::size_t n_days, const TraceLibrary& demand, const TraceLibrary& wind,
                                      std::span<const GeneratingUnit> fleet, const StorageFleet& storage,
                                      std::uint64_t seed, std::uint64_t config_hash = 0) {
    if (n_days == 0) throw std::invalid_argument("build_training_set: n_days must be >= 1");
    Rng rng = make_rng(derive_seed(seed, {0x7a1}));
    MiningStats stats;
    const auto days = sample_low_margin_days(n_days, demand, wind, fleet, rng, &stats);
    TrainingSet ts;
    ts.provenance = {seed, config_hash, stats.days_scanned, stats.acceptance_rate()};
    for (const auto& day : days) {
        const OutcomeVector y = label_day(day, storage);
        ts.frames.push_back(clip_frame(day));
        ts.lol.push_back(y.lol_hours);
        ts.ens.push_back(y.ens_energy);
    }
    return ts;
}

inline FeatureMatrix feature_matrix(std::span<const DayFrame> frames, const Normalizer& norm) {
    FeatureMatrix x;
    x.rows = frames.size();
    x.cols = hours_per_day;
    x.data.reserve(x.rows * x.cols);
    for (const auto& f : frames) {
        const DayFrame n = norm.apply(f);
        x.data.insert(x.data.end(), n.begin(), n.end());
    }
    return x;
}

inline double evaluate_rmse(std::span<const double> predicted, std::span<const double> observed) {
    if (predicted.empty()) throw std::invalid_argument("evaluate_rmse: empty set");
    if (predicted.size() != observed.size()) throw std::invalid_argument("evaluate_rmse: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) s += (predicted[i] - observed[i]) * (predicted[i] - observed[i]);
    return std::sqrt(s / static_cast<double>(predicted.size()));
}

/// Trained predictors for one system, shared read-only by the surrogate levels.
struct SurrogateBundle {
    Normalizer normalizer;
    GbtModel lol_model;
    std::optional<SvrModel> ens_model;
    double theta = 0.5;  // LOL hours above which a day counts as curtailed
    TrainingProvenance provenance;
    std::size_t training_days = 0;

    /// Clamped LOL prediction for a clipped, pre-normalization frame. Frames
    /// without a negative hour cannot curtail under any dispatch and map to 0.
    double predict_lol(const DayFrame& raw) const {
        if (*std::min_element(raw.begin(), raw.end()) >= 0.0) return 0.0;
        const DayFrame x = normalizer.apply(raw);
        return std::clamp(lol_model.predict(x), 0.0, static_cast<double>(hours_per_day));
    }

    double predict_ens(const DayFrame& raw) const {
        if (!ens_model) throw std::logic_error("surrogate bundle has no ENS regressor");
        if (*std::min_element(raw.begin(), raw.end()) >= 0.0) return 0.0;
        return std::max(0.0, ens_model->predict(normalizer.apply(raw)));
    }
};

struct TrainingTimings {
    double gbt_seconds = 0.0;
    double svr_seconds = 0.0;
};

inline std::vector<std::size_t> curtailed_days(const TrainingSet& ts) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ts.size(); ++i)
        if (ts.ens[i] > 0.0) idx.push_back(i);
    return idx;
}

inline SvrModel train_ens_regressor(const TrainingSet& ts, const Normalizer& norm, const SvrParams& p) {
    const auto idx = curtailed_days(ts);
    if (idx.size() < 2) throw std::runtime_error("ENS regressor untrainable: fewer than 2 curtailed days in the training set");
    const TrainingSet cur = ts.subset(idx);
    return train_svr(feature_matrix(cur.frames, norm), cur.ens, p);
}

inline SurrogateBundle train_surrogates(const TrainingSet& ts, const GbtParams& gbt, const std::optional<SvrParams>& svr,
                                        double theta, TrainingTimings* timings = nullptr) {
    if (ts.size() < 2) throw std::invalid_argument("train_surrogates: need at least 2 training days");
    using clock = std::chrono::steady_clock;
    SurrogateBundle b;
    b.theta = theta;
    b.provenance = ts.provenance;
    b.training_days = ts.size();
    b.normalizer = Normalizer::fit(ts.frames);
    auto t0 = clock::now();
    b.lol_model = train_gbt(feature_matrix(ts.frames, b.normalizer), ts.lol, gbt);
    auto t1 = clock::now();
    if (svr) b.ens_model = train_ens_regressor(ts, b.normalizer, *svr);
    auto t2 = clock::now();
    if (timings) {
        timings->gbt_seconds = std::chrono::duration<double>(t1 - t0).count();
        timings->svr_seconds = std::chrono::duration<double>(t2 - t1).count();
    }
    return b;
}

enum class EnsPart { greedy, svr };

/// HGB+Gre (greedy ENS on flagged days) or HGB+SVR (regressor ENS on flagged days).
class SurrogateLevel final : public ScenarioLevel {
public:
    SurrogateLevel(std::shared_ptr<const SurrogateBundle> bundle, EnsPart part, StorageFleet fleet, double cost_hint = 0.0)
        : ScenarioLevel(cost_hint), bundle_(std::move(bundle)), part_(part), fleet_(std::move(fleet).refilled()) {
        if (!bundle_) throw std::invalid_argument("SurrogateLevel: null bundle");
        if (part_ == EnsPart::svr && !bundle_->ens_model) throw std::invalid_argument("SurrogateLevel: HGB+SVR needs an ENS regressor");
        fleet_.validate();
    }

    std::string name() const override { return part_ == EnsPart::greedy ? "HGB+Gre" : "HGB+SVR"; }

    OutcomeVector evaluate(const Scenario& s) const override {
        const std::span<const double> margin(s.margin);
        const std::size_t days = margin.size() / hours_per_day;
        const bool indexed = s.day_min.size() == days;
        thread_local std::vector<std::size_t> flagged;
        thread_local std::vector<double> features, lol;
        flagged.clear();
        features.clear();
        for (std::size_t d = 0; d < days; ++d) {
            if (indexed && s.day_min[d] >= 0.0) continue;
            const DayFrame raw = clip_frame(margin.subspan(d * hours_per_day, hours_per_day));
            if (*std::min_element(raw.begin(), raw.end()) >= 0.0) continue;
            const DayFrame x = bundle_->normalizer.apply(raw);
            flagged.push_back(d);
            features.insert(features.end(), x.begin(), x.end());
        }
        OutcomeVector out;
        if (flagged.empty()) return out;
        lol.resize(flagged.size());
        bundle_->lol_model.predict_batch(features, flagged.size(), lol);
        std::optional<GreedyDayRunner> greedy;
        for (std::size_t k = 0; k < flagged.size(); ++k) {
            const double lol_hat = std::clamp(lol[k], 0.0, static_cast<double>(hours_per_day));
            out.lol_hours += lol_hat;
            if (lol_hat <= bundle_->theta) continue;
            const auto day = margin.subspan(flagged[k] * hours_per_day, hours_per_day);
            if (part_ == EnsPart::svr) {
                out.ens_energy += std::max(0.0, bundle_->ens_model->predict(std::span<const double>(features).subspan(k * hours_per_day, hours_per_day)));
            } else {
                if (!greedy) greedy.emplace(fleet_);
                out.ens_energy += greedy->run(day).ens_energy;
            }
        }
        return out;
    }

    /// Daily prediction; evaluate() equals the sum of this over the days.
    OutcomeVector predict_day(std::span<const double> day) const {
        const DayFrame raw = clip_frame(day);
        OutcomeVector y;
        y.lol_hours = bundle_->predict_lol(raw);
        if (y.lol_hours <= bundle_->theta) return y;
        y.ens_energy = part_ == EnsPart::svr ? bundle_->predict_ens(raw) : GreedyDayRunner(fleet_).run(day).ens_energy;
        return y;
    }

private:
    std::shared_ptr<const SurrogateBundle> bundle_;
    EnsPart part_;
    StorageFleet fleet_;
};

inline constexpr int surrogate_format_version = 1;

inline nlohmann::json to_json(const TrainingProvenance& p) {
    return {{"seed", p.seed}, {"config_hash", p.config_hash}, {"days_scanned", p.days_scanned}, {"acceptance_rate", p.acceptance_rate}};
}

inline TrainingProvenance provenance_from_json(const nlohmann::json& j) {
    return {j.at("seed").get<std::uint64_t>(), j.at("config_hash").get<std::uint64_t>(),
            j.at("days_scanned").get<std::uint64_t>(), j.at("acceptance_rate").get<double>()};
}

inline nlohmann::json to_json(const SurrogateBundle& b) {
    nlohmann::json j = {{"format", "surrogate-bundle"},
                        {"version", surrogate_format_version},
                        {"theta", b.theta},
                        {"training_days", b.training_days},
                        {"provenance", to_json(b.provenance)},
                        {"normalizer", to_json(b.normalizer)},
                        {"lol_model", to_json(b.lol_model)},
                        {"ens_model", nullptr}};
    if (b.ens_model) j["ens_model"] = to_json(*b.ens_model);
    return j;
}

inline SurrogateBundle surrogate_from_json(const nlohmann::json& j) {
    if (j.at("format") != "surrogate-bundle") throw std::runtime_error("not a surrogate bundle");
    if (j.at("version").get<int>() != surrogate_format_version)
        throw std::runtime_error("unsupported surrogate bundle version " + j.at("version").dump());
    SurrogateBundle b;
    b.theta = j.at("theta").get<double>();
    b.training_days = j.at("training_days").get<std::size_t>();
    b.provenance = provenance_from_json(j.at("provenance"));
    b.normalizer = normalizer_from_json(j.at("normalizer"));
    b.lol_model = gbt_from_json(j.at("lol_model"));
    if (!j.at("ens_model").is_null()) b.ens_model = svr_from_json(j.at("ens_model"));
    return b;
}

inline std::vector<std::string> training_set_header() {
    std::vector<std::string> h;
    for (std::size_t i = 0; i < hours_per_day; ++i) h.push_back((i < 10 ? "m0" : "m") + std::to_string(i));
    h.push_back("lol_label");
    h.push_back("ens_label");
    return h;
}

/// CSV of frames and labels, plus a JSON sidecar with the normalization
/// fitted on this set and its provenance.
inline void write_training_set(const std::filesystem::path& csv, const std::filesystem::path& meta, const TrainingSet& ts) {
    CsvTable t;
    t.header = training_set_header();
    t.columns.assign(hours_per_day + 2, {});
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (std::size_t h = 0; h < hours_per_day; ++h) t.columns[h].push_back(ts.frames[i][h]);
        t.columns[hours_per_day].push_back(ts.lol[i]);
        t.columns[hours_per_day + 1].push_back(ts.ens[i]);
    }
    write_csv(csv, t);
    nlohmann::json m = {{"format", "training-set"},
                        {"version", surrogate_format_version},
                        {"days", ts.size()},
                        {"provenance", to_json(ts.provenance)},
                        {"normalizer", ts.size() ? to_json(Normalizer::fit(ts.frames)) : nlohmann::json(nullptr)}};
    write_json(meta, m);
}

inline TrainingSet read_training_set(const std::filesystem::path& csv, const std::filesystem::path& meta) {
    const CsvTable t = read_csv(csv);
    if (t.header != training_set_header()) throw std::runtime_error(csv.string() + ": unexpected training set columns");
    const nlohmann::json m = read_json(meta);
    TrainingSet ts;
    ts.provenance = provenance_from_json(m.at("provenance"));
    for (std::size_t i = 0; i < t.rows(); ++i) {
        DayFrame f;
        for (std::size_t h = 0; h < hours_per_day; ++h) f[h] = t.columns[h][i];
        ts.frames.push_back(f);
        ts.lol.push_back(t.columns[hours_per_day][i]);
        ts.ens.push_back(t.columns[hours_per_day + 1][i]);
    }
    return ts;
}

struct AccuracyPoint {
    std::size_t train_size = 0;
    std::vector<double> lol_rmse;  // one per repeat
    std::vector<double> ens_rmse;

    static double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }
    static double std_error(const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean(v);
        double sq = 0.0;
        for (double x : v) sq += (x - m) * (x - m);
        return std::sqrt(sq / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
};

/// Repeated random subsampling of a fixed training pool, scored on a fixed
/// test pool. LOL error is over all test days; ENS error over the test days
/// with curtailment, which is what the regressor is trained on.
inline std::vector<AccuracyPoint> accuracy_study(const TrainingSet& train_pool, const TrainingSet& test_pool,
                                                 std::span<const std::size_t> sizes, std::size_t repeats,
                                                 const GbtParams& gbt, const SvrParams& svr, std::uint64_t seed) {
    if (test_pool.size() == 0) throw std::invalid_argument("accuracy_study: empty test pool");
    const auto test_cur = test_pool.subset(curtailed_days(test_pool));
    std::vector<AccuracyPoint> out;
    for (std::size_t size : sizes) {
        if (size > train_pool.size()) throw std::invalid_argument("accuracy_study: train size exceeds pool");
        AccuracyPoint pt;
        pt.train_size = size;
        for (std::size_t r = 0; r < repeats; ++r) {
            std::vector<std::size_t> idx(train_pool.size());
            std::iota(idx.begin(), idx.end(), 0);
            Rng rng = make_rng(derive_seed(seed, {size, r}));
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(size);
            const TrainingSet ts = train_pool.subset(idx);
            const SurrogateBundle b = train_surrogates(ts, gbt, svr, 0.5);
            std::vector<double> lol_hat;
            for (const auto& f : test_pool.frames) lol_hat.push_back(b.predict_lol(f));
            pt.lol_rmse.push_back(evaluate_rmse(lol_hat, test_pool.lol));
            std::vector<double> ens_hat;
            for (const auto& f : test_cur.frames) ens_hat.push_back(b.predict_ens(f));
            if (!ens_hat.empty()) pt.ens_rmse.push_back(evaluate_rmse(ens_hat, test_cur.ens));
        }
        out.push_back(std::move(pt));
    }
    return out;
}

}  // namespace adequacy
