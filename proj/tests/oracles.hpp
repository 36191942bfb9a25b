#pragma once

// Brute-force reference implementations used only by tests. Every oracle
// here takes the slow, obviously-correct route and stays independent of the
// library code paths it checks.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "hydrocal/forcing.hpp"
#include "hydrocal/grid.hpp"
#include "hydrocal/terrain.hpp"

namespace oracles {

using hydrocal::Cell;
using hydrocal::D8;
using hydrocal::DemGrid;
using hydrocal::FlowGrid;

// ---------------------------------------------------------------------------
// Terrain
// ---------------------------------------------------------------------------

// Depression filling by exhaustive fixed point. Water levels start at
// infinity everywhere except the spill cells (border and nodata-adjacent,
// which keep their ground elevation); every cell below the minimum of its
// neighbours' water levels is then repeatedly raised to
// max(ground, min(neighbour levels)) until nothing changes.
inline DemGrid fill_fixed_point(const DemGrid& grid) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    DemGrid out = grid;
    std::vector<uint8_t> spill(grid.size(), 0);
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            if (grid.is_nodata(r, c)) continue;
            bool is_spill = grid.on_border(r, c);
            for (int k = 0; k < 8 && !is_spill; ++k) {
                const int nr = r + hydrocal::kD8Row[k], nc = c + hydrocal::kD8Col[k];
                is_spill = grid.in_bounds(nr, nc) && grid.is_nodata(nr, nc);
            }
            spill[grid.index(r, c)] = is_spill;
            if (!is_spill) out.at(r, c) = kInf;
        }
    bool changed = true;
    while (changed) {
        changed = false;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) {
                const int i = out.index(r, c);
                if (spill[i] || grid.is_nodata(i)) continue;
                double min_nbr = kInf;
                for (int k = 0; k < 8; ++k) {
                    const int nr = r + hydrocal::kD8Row[k], nc = c + hydrocal::kD8Col[k];
                    if (!out.in_bounds(nr, nc) || grid.is_nodata(nr, nc)) continue;
                    min_nbr = std::min(min_nbr, out.at(nr, nc));
                }
                const double level = std::max(grid.at(r, c), min_nbr);
                if (level < out.at(r, c)) {
                    out.at(r, c) = level;
                    changed = true;
                }
            }
    }
    return out;
}

// Steepest-descent direction of one cell by independent scan, or
// D8::outlet / D8::none. Returns false for flat cells (no decision here).
inline bool steepest_direction(const DemGrid& grid, int r, int c, D8& dir) {
    if (grid.is_nodata(r, c)) {
        dir = D8::none;
        return true;
    }
    double best = 0.0;
    int best_k = -1;
    for (int k = 0; k < 8; ++k) {
        const int nr = r + hydrocal::kD8Row[k], nc = c + hydrocal::kD8Col[k];
        if (!grid.in_bounds(nr, nc)) continue;
        if (grid.is_nodata(nr, nc)) {
            dir = D8::outlet;   // ocean rule
            return true;
        }
        const double dist = (k % 2) ? std::sqrt(2.0) : 1.0;
        const double drop = (grid.at(r, c) - grid.at(nr, nc)) / dist;
        if (drop > best) {
            best = drop;
            best_k = k;
        }
    }
    if (best_k >= 0) {
        dir = D8(best_k);
        return true;
    }
    if (grid.on_border(r, c)) {
        dir = D8::outlet;
        return true;
    }
    return false;   // flat
}

// Breadth-first hop distance from every flat cell to the nearest resolved
// cell of equal elevation (the flat's spill side). Non-flat cells get 0.
inline std::vector<int> flat_distances(const DemGrid& grid) {
    std::vector<int> dist(grid.size(), -1);
    std::deque<int> q;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            D8 d;
            if (steepest_direction(grid, r, c, d)) {
                dist[grid.index(r, c)] = 0;
                q.push_back(grid.index(r, c));
            }
        }
    while (!q.empty()) {
        const int i = q.front();
        q.pop_front();
        const int r = i / grid.cols, c = i % grid.cols;
        if (grid.is_nodata(i)) continue;
        for (int k = 0; k < 8; ++k) {
            const int nr = r + hydrocal::kD8Row[k], nc = c + hydrocal::kD8Col[k];
            if (!grid.in_bounds(nr, nc)) continue;
            const int n = grid.index(nr, nc);
            if (dist[n] >= 0 || grid.is_nodata(n)) continue;
            if (grid.at(nr, nc) != grid.at(r, c)) continue;
            dist[n] = dist[i] + 1;
            q.push_back(n);
        }
    }
    return dist;
}

// Accumulation by tracing the full path from every cell.
inline std::vector<long long> accumulation_by_tracing(const FlowGrid& flow) {
    std::vector<long long> acc(flow.size(), 0);
    for (size_t start = 0; start < flow.size(); ++start) {
        if (flow.directions[start] == D8::none) continue;
        int i = int(start);
        while (i >= 0) {
            acc[i] += 1;
            i = flow.receiver(i);
        }
    }
    return acc;
}

// Membership by following the path from every cell to see if it passes
// through the outlet.
inline std::vector<uint8_t> catchment_by_tracing(const FlowGrid& flow, const Cell& outlet) {
    const int target = flow.index(outlet);
    std::vector<uint8_t> member(flow.size(), 0);
    for (size_t start = 0; start < flow.size(); ++start) {
        if (flow.directions[start] == D8::none) continue;
        int i = int(start);
        while (i >= 0) {
            if (i == target) {
                member[start] = 1;
                break;
            }
            i = flow.receiver(i);
        }
    }
    return member;
}

// Random grid with depressions: smooth base + bumps + a few dips.
inline DemGrid random_grid(std::mt19937_64& rng, int rows, int cols,
                           double nodata_fraction = 0.0) {
    DemGrid g(rows, cols, 1000.0);
    std::uniform_real_distribution<double> uni(0.0, 30.0);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (nodata_fraction > 0 && pick(rng) < nodata_fraction) {
                g.at(r, c) = g.nodata;
                continue;
            }
            g.at(r, c) = 50.0 + 2.0 * r + 1.5 * c + uni(rng);
        }
    return g;
}

// ---------------------------------------------------------------------------
// Forcing
// ---------------------------------------------------------------------------

// Group-by day-of-year means.
inline std::array<double, 365> climatology_group_by(const hydrocal::ForcingSeries& s,
                                                    int y1, int y2) {
    std::array<double, 365> sum{};
    std::array<int, 365> n{};
    for (size_t i = 0; i < s.size(); ++i) {
        const int y = s.dates[i].year();
        if (y < y1 || y > y2) continue;
        const int d = s.dates[i].doy365() - 1;
        sum[d] += s.values[i];
        n[d] += 1;
    }
    std::array<double, 365> mean{};
    for (int d = 0; d < 365; ++d) mean[d] = n[d] ? sum[d] / n[d] : std::nan("");
    return mean;
}

// Sinusoid least squares via an explicit design matrix and QR, independent
// of the closed-form accumulation route.
inline std::array<double, 3> sinusoid_lsq(const hydrocal::AnnualCycle& cycle) {
    Eigen::MatrixXd a(365, 3);
    Eigen::VectorXd y(365);
    const double w = 2.0 * std::numbers::pi / 365.25;
    for (int d = 1; d <= 365; ++d) {
        a(d - 1, 0) = 1.0;
        a(d - 1, 1) = std::cos(w * d);
        a(d - 1, 2) = std::sin(w * d);
        y[d - 1] = cycle[d];
    }
    const Eigen::Vector3d x = a.colPivHouseholderQr().solve(y);
    return {x[0], x[1], x[2]};
}

// Ordinary least-squares slope of y against x.
inline double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Metrics (naive element-wise route)
// ---------------------------------------------------------------------------

struct NaiveMetrics {
    double diff_pct, nse, rmsd, bias, cor;
    bool diff_ok, nse_ok, cor_ok;
};

inline NaiveMetrics naive_metrics(const std::vector<double>& c, const std::vector<double>& u) {
    const size_t n = c.size();
    NaiveMetrics m{};
    double cbar = 0, ubar = 0;
    for (size_t i = 0; i < n; ++i) {
        cbar += c[i];
        ubar += u[i];
    }
    cbar /= n;
    ubar /= n;
    double abs_e = 0, abs_c = 0, sq = 0, e = 0, vc = 0, vu = 0, cov = 0;
    for (size_t i = 0; i < n; ++i) {
        abs_e += std::abs(u[i] - c[i]);
        abs_c += std::abs(c[i]);
        sq += (u[i] - c[i]) * (u[i] - c[i]);
        e += u[i] - c[i];
        vc += (c[i] - cbar) * (c[i] - cbar);
        vu += (u[i] - ubar) * (u[i] - ubar);
        cov += (c[i] - cbar) * (u[i] - ubar);
    }
    m.diff_ok = abs_c > 0;
    m.nse_ok = vc > 0;
    m.cor_ok = vc > 0 && vu > 0;
    m.diff_pct = m.diff_ok ? 100.0 * abs_e / abs_c : 0.0;
    m.nse = m.nse_ok ? 1.0 - sq / vc : 0.0;
    m.rmsd = std::sqrt(sq / double(n));
    m.bias = e / double(n);
    m.cor = m.cor_ok ? cov / std::sqrt(vc * vu) : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Misc
// ---------------------------------------------------------------------------

inline double rel_diff(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracles
