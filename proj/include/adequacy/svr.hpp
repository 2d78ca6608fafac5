#pragma once

// Epsilon-insensitive support vector regression with an RBF kernel, solved
// in the dual by greedy coordinate descent. The bias is folded into the
// kernel (K + 1), which removes the equality constraint of the classic dual.
// Targets are standardized internally; epsilon is in standardized units.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "adequacy/gbt.hpp"

namespace adequacy {

struct SvrParams {
    double c = 100.0;         // box constraint
    double epsilon = 0.05;    // insensitive tube half-width, standardized target units
    double gamma = 0.001;     // RBF width; <= 0 selects 1 / (n_features · feature variance)
    double tolerance = 5e-4;  // stop once no coordinate step exceeds this
    int max_sweeps = 5000;   // in units of n coordinate updates

    void validate() const {
        if (!(c > 0.0)) throw std::invalid_argument("svr: c must be positive");
        if (!(epsilon >= 0.0)) throw std::invalid_argument("svr: epsilon must be >= 0");
        if (!(tolerance > 0.0)) throw std::invalid_argument("svr: tolerance must be positive");
        if (max_sweeps < 1) throw std::invalid_argument("svr: max_sweeps must be >= 1");
    }
    friend bool operator==(const SvrParams&, const SvrParams&) = default;
};

struct SvrModel {
    std::size_t n_features = 0;
    double gamma = 1.0;
    double y_mean = 0.0, y_scale = 1.0;
    std::vector<double> coef;          // dual coefficients of the support vectors
    std::vector<double> support;       // support vectors, row-major
    int sweeps = 0;
    bool converged = false;

    std::size_t support_count() const { return coef.size(); }

    double predict(std::span<const double> x) const {
        if (x.size() != n_features) throw std::invalid_argument("svr: feature count mismatch");
        double f = 0.0;
        for (std::size_t k = 0; k < coef.size(); ++k) {
            const double* sv = support.data() + k * n_features;
            double d2 = 0.0;
            for (std::size_t j = 0; j < n_features; ++j) {
                const double d = x[j] - sv[j];
                d2 += d * d;
            }
            f += coef[k] * (std::exp(-gamma * d2) + 1.0);
        }
        return y_mean + y_scale * f;
    }
};

inline SvrModel train_svr(const FeatureMatrix& x, std::span<const double> y, const SvrParams& p = {}) {
    p.validate();
    const std::size_t n = x.rows, d = x.cols;
    if (y.size() != n) throw std::invalid_argument("svr: label count mismatch");
    if (n < 1 || d < 1) throw std::invalid_argument("svr: empty training set");

    SvrModel m;
    m.n_features = d;
    m.gamma = p.gamma;
    if (!(m.gamma > 0.0)) {
        double mean = 0.0, sq = 0.0;
        for (double v : x.data) mean += v;
        mean /= static_cast<double>(x.data.size());
        for (double v : x.data) sq += (v - mean) * (v - mean);
        const double var = sq / static_cast<double>(x.data.size());
        m.gamma = var > 0.0 ? 1.0 / (static_cast<double>(d) * var) : 1.0;
    }
    for (double v : y) m.y_mean += v;
    m.y_mean /= static_cast<double>(n);
    double y_sq = 0.0;
    for (double v : y) y_sq += (v - m.y_mean) * (v - m.y_mean);
    m.y_scale = n > 1 && y_sq > 0.0 ? std::sqrt(y_sq / static_cast<double>(n - 1)) : 1.0;

    std::vector<double> K(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        K[i * n + i] = 2.0;
        for (std::size_t j = 0; j < i; ++j) {
            double d2 = 0.0;
            for (std::size_t f = 0; f < d; ++f) {
                const double t = x(i, f) - x(j, f);
                d2 += t * t;
            }
            K[i * n + j] = K[j * n + i] = std::exp(-m.gamma * d2) + 1.0;
        }
    }

    // minimize ½βᵀKβ − zᵀβ + ε‖β‖₁ subject to |β_i| ≤ C, where z is the standardized target.
    // Each update moves the coordinate whose exact minimizing step is largest.
    std::vector<double> z(n), beta(n, 0.0), kb(n, 0.0), step(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = (y[i] - m.y_mean) / m.y_scale;
    // The diagonal of K + 1 is 2 everywhere.
    auto best_step = [&](std::size_t i) {
        const double u = 2.0 * beta[i] - kb[i] + z[i];
        const double next = std::min(std::max(std::abs(u) - p.epsilon, 0.0) * 0.5, p.c);
        return std::copysign(next, u) - beta[i];
    };
    for (std::size_t i = 0; i < n; ++i) step[i] = best_step(i);

    // Coordinates whose step is exactly zero sit in the tube or at the box
    // bound. They leave the working set every n updates and are checked again
    // once the working set has converged.
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), std::size_t{0});
    auto largest_active = [&] {
        std::size_t k = active.front();
        for (std::size_t i : active)
            if (std::abs(step[i]) > std::abs(step[k])) k = i;
        return k;
    };
    auto largest_step = [&] {
        double top = 0.0;
        for (double v : step) top = std::max(top, std::abs(v));
        return top;
    };
    const std::size_t max_updates = static_cast<std::size_t>(p.max_sweeps) * n;
    std::size_t updates = 0;
    for (;;) {
        while (updates < max_updates && !active.empty()) {
            const std::size_t pick = largest_active();
            const double delta = step[pick];
            if (std::abs(delta) <= p.tolerance) break;
            beta[pick] += delta;
            const double* col = K.data() + pick * n;
            for (std::size_t j : active) {
                kb[j] += delta * col[j];
                step[j] = best_step(j);
            }
            if (++updates % n == 0) std::erase_if(active, [&](std::size_t j) { return step[j] == 0.0; });
        }
        if (active.size() == n) break;
        std::fill(kb.begin(), kb.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (beta[i] == 0.0) continue;
            const double* col = K.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) kb[j] += beta[i] * col[j];
        }
        for (std::size_t j = 0; j < n; ++j) step[j] = best_step(j);
        active.resize(n);
        std::iota(active.begin(), active.end(), std::size_t{0});
        if (largest_step() <= p.tolerance || updates >= max_updates) break;
    }
    m.converged = largest_step() <= p.tolerance;
    m.sweeps = static_cast<int>((updates + n - 1) / n);

    for (std::size_t i = 0; i < n; ++i) {
        if (beta[i] == 0.0) continue;
        m.coef.push_back(beta[i]);
        const auto r = x.row(i);
        m.support.insert(m.support.end(), r.begin(), r.end());
    }
    return m;
}

inline constexpr int svr_format_version = 1;

inline nlohmann::json to_json(const SvrModel& m) {
    return {{"format", "svr"},       {"version", svr_format_version}, {"n_features", m.n_features},
            {"gamma", m.gamma},      {"y_mean", m.y_mean},            {"y_scale", m.y_scale},
            {"coef", m.coef},        {"support", m.support},          {"sweeps", m.sweeps},
            {"converged", m.converged}};
}

inline SvrModel svr_from_json(const nlohmann::json& j) {
    if (j.at("format") != "svr") throw std::runtime_error("not an svr model");
    if (j.at("version").get<int>() != svr_format_version)
        throw std::runtime_error("unsupported svr model version " + j.at("version").dump());
    SvrModel m;
    m.n_features = j.at("n_features").get<std::size_t>();
    m.gamma = j.at("gamma").get<double>();
    m.y_mean = j.at("y_mean").get<double>();
    m.y_scale = j.at("y_scale").get<double>();
    m.coef = j.at("coef").get<std::vector<double>>();
    m.support = j.at("support").get<std::vector<double>>();
    m.sweeps = j.at("sweeps").get<int>();
    m.converged = j.at("converged").get<bool>();
    if (m.support.size() != m.coef.size() * m.n_features) throw std::runtime_error("malformed svr model");
    return m;
}

}  // namespace adequacy
