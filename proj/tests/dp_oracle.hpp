#pragma once

// Brute-force minimum energy not served for a two-unit fleet by dynamic
// programming over a state-of-charge grid. Margins, powers and energies
// must be multiples of the grid step.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracle {

struct GridUnit {
    double power;
    double energy;
};

inline double min_ens_two_units(std::span<const double> margin, GridUnit a, GridUnit b, double step = 0.25) {
    auto cells = [&](double v) {
        const double k = v / step;
        if (std::abs(k - std::round(k)) > 1e-9) throw std::invalid_argument("value off the grid");
        return static_cast<int>(std::lround(k));
    };
    const int ea = cells(a.energy), eb = cells(b.energy), pa = cells(a.power), pb = cells(b.power);
    const double inf = std::numeric_limits<double>::infinity();
    auto at = [&](std::vector<double>& v, int i, int j) -> double& { return v[static_cast<std::size_t>(i * (eb + 1) + j)]; };

    // best[i][j]: least ENS so far ending with soc (i, j) grid cells; storage starts full.
    std::vector<double> best((ea + 1) * (eb + 1), inf), next(best.size());
    at(best, ea, eb) = 0.0;
    for (double m : margin) {
        std::fill(next.begin(), next.end(), inf);
        const int shortfall = m < 0.0 ? cells(-m) : 0;
        const int surplus = m > 0.0 ? cells(m) : 0;
        for (int i = 0; i <= ea; ++i) {
            for (int j = 0; j <= eb; ++j) {
                const double cost = at(best, i, j);
                if (cost == inf) continue;
                if (shortfall > 0) {
                    for (int da = 0; da <= std::min(pa, i); ++da)
                        for (int db = 0; db <= std::min(pb, j); ++db) {
                            const double ens = step * std::max(0, shortfall - da - db);
                            double& slot = at(next, i - da, j - db);
                            slot = std::min(slot, cost + ens);
                        }
                } else {
                    for (int ca = 0; ca <= std::min(pa, ea - i); ++ca)
                        for (int cb = 0; cb <= std::min(pb, eb - j); ++cb) {
                            if (ca + cb > surplus) break;
                            double& slot = at(next, i + ca, j + cb);
                            slot = std::min(slot, cost);
                        }
                }
            }
        }
        best.swap(next);
    }
    return *std::min_element(best.begin(), best.end());
}

}  // namespace oracle
