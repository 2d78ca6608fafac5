#pragma once

// Dispatch-based level models over sampled margin scenarios.

#include <string>
#include <utility>

#include "adequacy/avg_model.hpp"
#include "adequacy/dispatch.hpp"
#include "adequacy/mlmc.hpp"
#include "adequacy/scenario.hpp"

namespace adequacy {

using ScenarioLevel = LevelModel<Scenario>;

class ExactLevel final : public ScenarioLevel {
public:
    explicit ExactLevel(StorageFleet fleet, double cost_hint = 0.0) : ScenarioLevel(cost_hint), fleet_(std::move(fleet)) {
        fleet_.validate();
    }
    OutcomeVector evaluate(const Scenario& s) const override { return exact_outcome(s.margin, fleet_); }
    std::string name() const override { return "Exact"; }

private:
    StorageFleet fleet_;
};

class GreedyLevel final : public ScenarioLevel {
public:
    explicit GreedyLevel(StorageFleet fleet, double cost_hint = 0.0) : ScenarioLevel(cost_hint), fleet_(std::move(fleet)) {
        fleet_.validate();
    }
    OutcomeVector evaluate(const Scenario& s) const override { return greedy_outcome(s.margin, fleet_); }
    std::string name() const override { return "Gre"; }

private:
    StorageFleet fleet_;
};

class AvgLevel final : public ScenarioLevel {
public:
    explicit AvgLevel(AvgDispatchProfile profile, double cost_hint = 0.0)
        : ScenarioLevel(cost_hint), profile_(std::move(profile)) {}
    OutcomeVector evaluate(const Scenario& s) const override { return avg_outcome(s, profile_.offset); }
    std::string name() const override { return "Avg"; }
    const AvgDispatchProfile& profile() const { return profile_; }

private:
    AvgDispatchProfile profile_;
};

}  // namespace adequacy
