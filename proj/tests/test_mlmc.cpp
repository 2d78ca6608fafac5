#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "adequacy/mlmc.hpp"

using namespace adequacy;

namespace {

struct Draw {
    double u = 0.0;
    std::uint64_t id = 0;
    std::uint64_t fingerprint() const { return id; }
};

Draw draw(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return {std::uniform_real_distribution<double>(0.0, 1.0)(rng), seed};
}

using Level = FunctionLevel<Draw>;

std::shared_ptr<const LevelModel<Draw>> level(std::string name, std::function<double(double)> f, double cost) {
    return std::make_shared<Level>(
        std::move(name), [f](const Draw& d) { return OutcomeVector{f(d.u), 10.0 * f(d.u)}; }, cost);
}

MlmcOptions nominal(double budget, std::uint64_t seed = 11) {
    MlmcOptions o;
    o.budget = budget;
    o.budget_mode = BudgetMode::nominal_cost;
    o.exploratory_n = 200;
    o.seed = seed;
    return o;
}

LevelPairSample pair(double hi, double lo, double cost = 1.0) {
    LevelPairSample s;
    s.x_hi = {hi, 2.0 * hi};
    s.x_lo = {lo, -lo};
    s.y = s.x_hi - s.x_lo;
    s.cost = cost;
    return s;
}

}  // namespace

TEST(LevelStats, MatchesTwoPassMoments) {
    Rng rng = make_rng(3);
    std::normal_distribution<double> nd(5.0, 2.0);
    std::vector<double> hi, lo;
    LevelStats st;
    for (int i = 0; i < 1000; ++i) {
        hi.push_back(nd(rng));
        lo.push_back(0.7 * hi.back() + nd(rng));
        st.add(pair(hi.back(), lo.back()));
    }
    const double n = 1000.0;
    double mh = 0, ml = 0;
    for (int i = 0; i < 1000; ++i) mh += hi[i] / n, ml += lo[i] / n;
    double shh = 0, sll = 0, shl = 0, syy = 0;
    for (int i = 0; i < 1000; ++i) {
        shh += (hi[i] - mh) * (hi[i] - mh);
        sll += (lo[i] - ml) * (lo[i] - ml);
        shl += (hi[i] - mh) * (lo[i] - ml);
        const double y = (hi[i] - lo[i]) - (mh - ml);
        syy += y * y;
    }
    EXPECT_NEAR(st[Metric::lole].mean_y, mh - ml, 1e-12);
    EXPECT_NEAR(st.variance(Metric::lole), syy / (n - 1), 1e-9);
    EXPECT_NEAR(*st.correlation(Metric::lole), shl / std::sqrt(shh * sll), 1e-12);
}

TEST(LevelStats, MergeEqualsSequential) {
    Rng rng = make_rng(4);
    std::uniform_real_distribution<double> u(-3.0, 8.0);
    LevelStats all, a, b;
    for (int i = 0; i < 500; ++i) {
        const auto s = pair(u(rng), u(rng), u(rng) + 4.0);
        all.add(s);
        (i < 137 ? a : b).add(s);
    }
    const LevelStats m = merge_stats(a, b);
    EXPECT_EQ(m.n, all.n);
    for (Metric k : all_metrics) {
        EXPECT_NEAR(m[k].mean_y, all[k].mean_y, 1e-12);
        EXPECT_NEAR(m.variance(k), all.variance(k), 1e-10);
        EXPECT_NEAR(*m.correlation(k), *all.correlation(k), 1e-12);
    }
    EXPECT_NEAR(m.mean_cost, all.mean_cost, 1e-12);
}

TEST(LevelStats, ConstantSideHasNoCorrelation) {
    LevelStats st;
    st.add(pair(1.0, 0.0));
    st.add(pair(2.0, 0.0));
    EXPECT_FALSE(st.correlation(Metric::lole).has_value());
    LevelStats one;
    one.add(pair(1.0, 0.5));
    EXPECT_EQ(one.variance(Metric::eens), 0.0);
}

TEST(OptimalAllocation, HandComputedValues) {
    const std::vector<double> sigma{2.0, 1.0}, tau{1.0, 4.0};
    // Σσ√τ = 4, so n_1 = 100·2/4 = 50 and n_2 = 100·0.5/4 = 12.5 → 13.
    const auto n = optimal_allocation(sigma, tau, 100.0);
    EXPECT_EQ(n, (std::vector<std::uint64_t>{50, 13}));
}

TEST(OptimalAllocation, FloorsAtMinimumSamples) {
    const std::vector<double> sigma{1.0, 1e-9}, tau{1.0, 1.0};
    const auto n = optimal_allocation(sigma, tau, 10.0, 2);
    EXPECT_EQ(n[1], 2u);
    EXPECT_EQ(n[0], 10u);
}

TEST(OptimalAllocation, RejectsDegenerateInput) {
    const std::vector<double> zero{0.0, 0.0}, tau{1.0, 1.0}, bad_tau{1.0, 0.0};
    EXPECT_THROW(optimal_allocation(zero, tau, 5.0), std::invalid_argument);
    EXPECT_THROW(optimal_allocation(tau, bad_tau, 5.0), std::invalid_argument);
    EXPECT_THROW(optimal_allocation(tau, tau, 0.0), std::invalid_argument);
}

TEST(SpeedMeasure, Definition) {
    EXPECT_DOUBLE_EQ(speed_measure(2.0, 4.0, 0.25), 4.0);
    EXPECT_TRUE(std::isinf(speed_measure(1.0, 1.0, 0.0)));
    EXPECT_THROW(speed_measure(1.0, 0.0, 1.0), std::invalid_argument);
}

TEST(RunMlmc, SingleLevelIsPlainMonteCarlo) {
    const LevelStack<Draw> stack{level("top", [](double u) { return u * u; }, 1.0)};
    const auto est = run_mlmc<Draw>(stack, draw, nominal(4000.0));
    ASSERT_EQ(est.levels.size(), 1u);
    const std::uint64_t n = est.levels[0].n;
    double sum = 0.0, sq = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const double x = draw(derive_seed(11, {0, i})).u;
        sum += x * x;
        sq += x * x * x * x;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
    EXPECT_NEAR(est[Metric::lole].q_hat, mean, 1e-12);
    EXPECT_NEAR(est[Metric::lole].std_error, std::sqrt(var / static_cast<double>(n)), 1e-12);
    EXPECT_EQ(n, 4000u);
}

TEST(RunMlmc, TwoLevelEstimateIsUnbiased) {
    const LevelStack<Draw> stack{level("cheap", [](double u) { return u; }, 0.1),
                                 level("fine", [](double u) { return u * u + 0.05 * u; }, 1.0)};
    const auto est = run_mlmc<Draw>(stack, draw, nominal(3000.0));
    const double truth = 1.0 / 3.0 + 0.025;
    EXPECT_LT(std::abs(est[Metric::lole].q_hat - truth), 4.0 * est[Metric::lole].std_error);
    EXPECT_GT(est.levels[0].n, est.levels[1].n);
    EXPECT_EQ(est.levels[1].name, "fine - cheap");
}

TEST(RunMlmc, DuplicatedModelHasZeroCorrectionVariance) {
    auto top = level("X", [](double u) { return std::exp(u); }, 1.0);
    const LevelStack<Draw> single{top};
    const LevelStack<Draw> twice{top, top};
    const auto mc = run_mlmc<Draw>(single, draw, nominal(2000.0));
    const auto ml = run_mlmc<Draw>(twice, draw, nominal(2000.0 + 2.0 * 200));
    EXPECT_EQ(ml.levels[1].sigma_y[0], 0.0);
    EXPECT_EQ(ml.levels[1].r_hat[0], 0.0);
    EXPECT_EQ(ml[Metric::lole].q_hat, ml.levels[0].r_hat[0]);
    EXPECT_LT(std::abs(ml[Metric::lole].q_hat - mc[Metric::lole].q_hat), 4.0 * mc[Metric::lole].std_error);
}

TEST(RunMlmc, AnalyticBottomReplacesSampling) {
    const LevelStack<Draw> stack{level("avg", [](double u) { return u; }, 0.1),
                                 level("fine", [](double u) { return u * u; }, 1.0)};
    MlmcOptions o = nominal(2000.0);
    o.analytic_bottom = OutcomeVector{0.5, 5.0};
    const auto est = run_mlmc<Draw>(stack, draw, o);
    EXPECT_TRUE(est.levels[0].analytic);
    EXPECT_EQ(est.levels[0].n, 0u);
    EXPECT_EQ(est.levels[0].r_hat[1], 5.0);
    EXPECT_NEAR(est[Metric::eens].q_hat, 5.0 + est.levels[1].r_hat[1], 1e-12);
    EXPECT_LT(std::abs(est[Metric::lole].q_hat - 1.0 / 3.0), 4.0 * est[Metric::lole].std_error);
}

TEST(RunMlmc, NominalBudgetIsRespected) {
    const LevelStack<Draw> stack{level("a", [](double u) { return u; }, 0.2),
                                 level("b", [](double u) { return u + 0.1 * u * u; }, 1.0)};
    MlmcOptions o = nominal(5000.0);
    const auto est = run_mlmc<Draw>(stack, draw, o);
    // Pair costs: level 1 = 0.2, level 2 = 1.2. Rounding adds at most half a sample per level.
    EXPECT_NEAR(est.total_time, 5000.0, 0.5 * (0.2 + 1.2));
}

TEST(RunMlmc, ExploratoryOnlyWhenBudgetTooSmall) {
    const LevelStack<Draw> stack{level("a", [](double u) { return u; }, 1.0)};
    const auto est = run_mlmc<Draw>(stack, draw, nominal(10.0));
    EXPECT_TRUE(est.exploratory_only);
    EXPECT_EQ(est.levels[0].n, 200u);
}

TEST(RunMlmc, ResultIndependentOfWorkerCount) {
    const LevelStack<Draw> stack{level("a", [](double u) { return std::sin(u); }, 0.1),
                                 level("b", [](double u) { return std::sin(u) + u * u; }, 1.0)};
    MlmcOptions o = nominal(3000.0);
    o.chunk_size = 16;
    o.workers = 1;
    const auto one = run_mlmc<Draw>(stack, draw, o);
    o.workers = 4;
    const auto four = run_mlmc<Draw>(stack, draw, o);
    EXPECT_EQ(one.stats, four.stats);
    EXPECT_EQ(one[Metric::eens].q_hat, four[Metric::eens].q_hat);
}

TEST(RunMlmc, FailingLevelReportsLevelAndPartialStats) {
    const LevelStack<Draw> stack{level("ok", [](double u) { return u; }, 0.1),
                                 std::make_shared<Level>(
                                     "bad", [](const Draw& d) -> OutcomeVector {
                                         if (d.u > 0.9) throw std::runtime_error("boom");
                                         return {d.u, d.u};
                                     },
                                     1.0)};
    try {
        run_mlmc<Draw>(stack, draw, nominal(1000.0));
        FAIL() << "expected MlmcError";
    } catch (const MlmcError& e) {
        EXPECT_EQ(e.level(), 1u);
        EXPECT_EQ(e.partial_stats()[0].n, 200u);
        EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
    }
}

TEST(RunMlmcFixed, SamplesExactlyTheRequestedCounts) {
    const LevelStack<Draw> stack{level("a", [](double u) { return u; }, 0.1),
                                 level("b", [](double u) { return u * u; }, 1.0)};
    const std::vector<std::uint64_t> n{300, 40};
    const auto est = run_mlmc_fixed<Draw>(stack, draw, n, nominal(1.0));
    EXPECT_EQ(est.allocation(), n);
    EXPECT_NEAR(est.total_time, 300 * 0.1 + 40 * 1.1, 1e-9);
}

TEST(RunMlmc, RejectsBadOptions) {
    const LevelStack<Draw> stack{level("a", [](double u) { return u; }, 1.0)};
    MlmcOptions o = nominal(100.0);
    o.exploratory_n = 1;
    EXPECT_THROW(run_mlmc<Draw>(stack, draw, o), std::invalid_argument);
    EXPECT_THROW(run_mlmc<Draw>(LevelStack<Draw>{}, draw, nominal(1.0)), std::invalid_argument);
}
