#pragma once

/**
 * @file terrain.hpp
 * @brief Flow networks from DEMs: depression filling, D8 steepest-descent
 *        directions, flow accumulation, catchment delineation, and reference
 *        boundary enforcement by raising elevations.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <queue>
#include <vector>

#include "hydrocal/grid.hpp"

namespace hydrocal {

/// D8 direction of a cell. Compass values are ordered by scan priority;
/// ties in drop/distance resolve to the lowest enumerator.
enum class D8 : uint8_t {
    north = 0,
    northeast,
    east,
    southeast,
    south,
    southwest,
    west,
    northwest,
    outlet,   // drains off-domain (grid edge or into nodata)
    none,     // nodata cell
};

inline constexpr std::array<int, 8> kD8Row = {-1, -1, 0, 1, 1, 1, 0, -1};
inline constexpr std::array<int, 8> kD8Col = {0, 1, 1, 1, 0, -1, -1, -1};

/// Unit distance to each neighbour (diagonals are sqrt(2) cells away).
inline double d8_distance(int k) { return (k % 2) ? std::sqrt(2.0) : 1.0; }

inline D8 opposite(D8 d) { return D8((int(d) + 4) % 8); }

/**
 * D8 flow directions plus upstream cell counts on the same grid.
 * accumulation(cell) counts the cell itself and everything draining
 * through it; nodata cells carry zero.
 */
struct FlowGrid {
    int rows = 0, cols = 0;
    double cell_size = 0.0;
    std::vector<D8> directions;
    std::vector<int64_t> accumulation;

    size_t size() const { return directions.size(); }
    int index(int r, int c) const { return r * cols + c; }
    int index(const Cell& cell) const { return index(cell.row, cell.col); }
    Cell cell_of(int idx) const { return {idx / cols, idx % cols}; }
    bool in_bounds(int r, int c) const {
        return r >= 0 && r < rows && c >= 0 && c < cols;
    }

    D8 direction(int r, int c) const { return directions[index(r, c)]; }

    /// Flat index of the cell this cell drains into, or -1 for outlet/nodata.
    int receiver(int idx) const {
        const D8 d = directions[idx];
        if (d >= D8::outlet) return -1;
        const int r = idx / cols + kD8Row[int(d)];
        const int c = idx % cols + kD8Col[int(d)];
        return index(r, c);
    }

    size_t count_routed() const {
        size_t n = 0;
        for (D8 d : directions) n += d != D8::none;
        return n;
    }
};

/**
 * Fills interior depressions by priority flood seeded from the grid edge.
 *
 * Cells are popped from a min-heap in elevation order, starting from every
 * cell that could spill off-domain (border cells and cells beside nodata);
 * each newly reached neighbour is raised to at least the spill level of the
 * cell that reached it. Elevations are only raised, never lowered, and seed
 * cells are never modified.
 */
inline DemGrid fill_depressions(const DemGrid& grid) {
    grid.validate();
    if (grid.count_valid() == 0) throw InvalidGrid("all cells are nodata");

    DemGrid out = grid;
    const int rows = grid.rows, cols = grid.cols;

    using Entry = std::pair<double, int>;  // (elevation, flat index)
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    std::vector<uint8_t> visited(out.size(), 0);

    auto is_seed = [&](int r, int c) {
        if (grid.on_border(r, c)) return true;
        for (int k = 0; k < 8; ++k) {
            const int nr = r + kD8Row[k], nc = c + kD8Col[k];
            if (grid.in_bounds(nr, nc) && grid.is_nodata(nr, nc)) return true;
        }
        return false;
    };

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int i = out.index(r, c);
            if (grid.is_nodata(i)) {
                visited[i] = 1;
            } else if (is_seed(r, c)) {
                visited[i] = 1;
                open.emplace(out.elevations[i], i);
            }
        }

    while (!open.empty()) {
        const auto [elev, i] = open.top();
        open.pop();
        const int r = i / cols, c = i % cols;
        for (int k = 0; k < 8; ++k) {
            const int nr = r + kD8Row[k], nc = c + kD8Col[k];
            if (!out.in_bounds(nr, nc)) continue;
            const int n = out.index(nr, nc);
            if (visited[n]) continue;
            visited[n] = 1;
            if (out.elevations[n] < elev) out.elevations[n] = elev;
            open.emplace(out.elevations[n], n);
        }
    }
    return out;
}

/**
 * Assigns every cell the direction of its steepest downward drop, with
 * diagonal drops divided by sqrt(2).
 *
 * Rules, in order:
 *  - a neighbour that is nodata counts as ocean, so the cell is an outlet;
 *  - otherwise the steepest strictly positive drop/distance wins, ties
 *    resolving to the first direction in N, NE, E, SE, S, SW, W, NW order;
 *  - a cell with no lower neighbour on the grid border is an outlet;
 *  - remaining cells are flats: each points one step along the shortest
 *    path (breadth-first over equal elevations) to the flat's spill cell.
 *
 * Interior sinks left by an unfilled input become outlets rather than
 * errors; a depression-filled grid never produces them.
 */
inline FlowGrid flow_directions(const DemGrid& grid) {
    grid.validate();
    FlowGrid fg;
    fg.rows = grid.rows;
    fg.cols = grid.cols;
    fg.cell_size = grid.cell_size;
    fg.directions.assign(grid.size(), D8::none);
    fg.accumulation.assign(grid.size(), 0);

    constexpr uint8_t kUnset = 0, kResolved = 1;
    std::vector<uint8_t> state(grid.size(), kUnset);

    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const int i = grid.index(r, c);
            if (grid.is_nodata(i)) {
                state[i] = kResolved;
                continue;
            }
            const double elev = grid.elevations[i];
            double best = 0.0;
            D8 dir = D8::none;
            bool to_ocean = false;
            for (int k = 0; k < 8; ++k) {
                const int nr = r + kD8Row[k], nc = c + kD8Col[k];
                if (!grid.in_bounds(nr, nc)) continue;
                if (grid.is_nodata(nr, nc)) {
                    to_ocean = true;
                    break;
                }
                const double drop = (elev - grid.at(nr, nc)) / d8_distance(k);
                if (drop > best) {
                    best = drop;
                    dir = D8(k);
                }
            }
            if (to_ocean) {
                fg.directions[i] = D8::outlet;
                state[i] = kResolved;
            } else if (dir != D8::none) {
                fg.directions[i] = dir;
                state[i] = kResolved;
            } else if (grid.on_border(r, c)) {
                fg.directions[i] = D8::outlet;
                state[i] = kResolved;
            }
            // else: flat cell, resolved below
        }

    // Flat resolution: breadth-first from every resolved cell that borders an
    // unresolved cell of equal elevation. Each flat cell points at the
    // neighbour through which it was first reached.
    std::deque<int> frontier;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const int i = grid.index(r, c);
            if (state[i] != kResolved || grid.is_nodata(i)) continue;
            for (int k = 0; k < 8; ++k) {
                const int nr = r + kD8Row[k], nc = c + kD8Col[k];
                if (grid.in_bounds(nr, nc) && !state[grid.index(nr, nc)] &&
                    grid.at(nr, nc) == grid.elevations[i]) {
                    frontier.push_back(i);
                    break;
                }
            }
        }
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop_front();
        const int r = i / grid.cols, c = i % grid.cols;
        for (int k = 0; k < 8; ++k) {
            const int nr = r + kD8Row[k], nc = c + kD8Col[k];
            if (!grid.in_bounds(nr, nc)) continue;
            const int n = grid.index(nr, nc);
            if (state[n] || grid.at(nr, nc) != grid.elevations[i]) continue;
            fg.directions[n] = opposite(D8(k));
            state[n] = kResolved;
            frontier.push_back(n);
        }
    }

    // Residual interior sinks (unfilled input): swallow flow.
    for (size_t i = 0; i < state.size(); ++i)
        if (!state[i]) fg.directions[i] = D8::outlet;

    return fg;
}

/// Topological order of routed cells, upstream before downstream.
/// Throws CyclicFlow with a cell on the cycle when the graph is not acyclic.
inline std::vector<int> topological_order(const FlowGrid& flow) {
    const size_t n = flow.size();
    std::vector<int> indegree(n, 0);
    for (size_t i = 0; i < n; ++i) {
        if (flow.directions[i] == D8::none) continue;
        const int r = flow.receiver(int(i));
        if (r >= 0) ++indegree[r];
    }
    std::vector<int> order;
    order.reserve(n);
    std::deque<int> ready;
    for (size_t i = 0; i < n; ++i)
        if (flow.directions[i] != D8::none && indegree[i] == 0) ready.push_back(int(i));
    while (!ready.empty()) {
        const int i = ready.front();
        ready.pop_front();
        order.push_back(i);
        const int r = flow.receiver(i);
        if (r >= 0 && --indegree[r] == 0) ready.push_back(r);
    }
    if (order.size() != flow.count_routed()) {
        // Walk forward from an unprocessed cell until a revisit pins down a
        // genuine cycle member (unprocessed cells may merely drain into one).
        std::vector<uint8_t> processed(n, 0);
        for (int i : order) processed[i] = 1;
        std::vector<int> walk_mark(n, -1);
        for (size_t s = 0; s < n; ++s) {
            if (processed[s] || flow.directions[s] == D8::none) continue;
            int cur = int(s);
            while (cur >= 0 && walk_mark[cur] == -1) {
                walk_mark[cur] = int(s);
                cur = flow.receiver(cur);
            }
            if (cur >= 0 && walk_mark[cur] == int(s)) {
                const Cell cell = flow.cell_of(cur);
                throw CyclicFlow(cell.row, cell.col);
            }
        }
        throw CyclicFlow(-1, -1);  // unreachable for well-formed grids
    }
    return order;
}

/// Fills in accumulation: each cell counts itself plus all upslope cells.
inline FlowGrid flow_accumulation(FlowGrid flow) {
    flow.accumulation.assign(flow.size(), 0);
    const std::vector<int> order = topological_order(flow);
    for (int i : order) flow.accumulation[i] = 1;
    for (int i : order) {
        const int r = flow.receiver(i);
        if (r >= 0) flow.accumulation[r] += flow.accumulation[i];
    }
    return flow;
}

/// All cells whose direction path reaches the outlet, outlet included.
inline CatchmentMask delineate_catchment(const FlowGrid& flow, const Cell& outlet) {
    if (!flow.in_bounds(outlet.row, outlet.col))
        throw InvalidOutlet("outlet (" + std::to_string(outlet.row) + "," +
                            std::to_string(outlet.col) + ") outside grid");
    const int o = flow.index(outlet);
    if (flow.directions[o] == D8::none)
        throw InvalidOutlet("outlet (" + std::to_string(outlet.row) + "," +
                            std::to_string(outlet.col) + ") is nodata");

    CatchmentMask mask;
    mask.rows = flow.rows;
    mask.cols = flow.cols;
    mask.outlet = outlet;
    mask.member.assign(flow.size(), 0);
    mask.member[o] = 1;

    std::deque<int> frontier{o};
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop_front();
        const int r = i / flow.cols, c = i % flow.cols;
        for (int k = 0; k < 8; ++k) {
            const int nr = r + kD8Row[k], nc = c + kD8Col[k];
            if (!flow.in_bounds(nr, nc)) continue;
            const int n = flow.index(nr, nc);
            if (mask.member[n] || flow.directions[n] == D8::none) continue;
            if (flow.receiver(n) == i) {
                mask.member[n] = 1;
                frontier.push_back(n);
            }
        }
    }
    mask.area_km2 = double(mask.cell_count()) * flow.cell_size * flow.cell_size / 1e6;
    return mask;
}

/// Result of boundary enforcement; nodata boundary cells are skipped and
/// reported rather than raised.
struct BoundaryResult {
    DemGrid grid;
    std::vector<Cell> skipped;
};

/// Raises the elevation of each boundary cell by exactly `raise` metres.
inline BoundaryResult enforce_boundary(const DemGrid& grid,
                                       const std::vector<Cell>& boundary,
                                       double raise) {
    if (!(raise > 0)) throw InvalidArgument("boundary raise must be positive");
    BoundaryResult result{grid, {}};
    for (const Cell& cell : boundary) {
        if (!grid.in_bounds(cell))
            throw InvalidArgument("boundary cell (" + std::to_string(cell.row) + "," +
                                  std::to_string(cell.col) + ") outside grid");
        const int i = grid.index(cell);
        if (grid.is_nodata(i)) {
            result.skipped.push_back(cell);
            continue;
        }
        result.grid.elevations[i] += raise;
    }
    return result;
}

/// True when candidate and reference areas agree within the given factor.
inline bool area_ratio_ok(double candidate_area_km2, double reference_area_km2,
                          double factor) {
    if (!(reference_area_km2 > 0)) throw InvalidArgument("reference area must be positive");
    if (!(factor >= 1)) throw InvalidArgument("area factor must be >= 1");
    if (!(candidate_area_km2 > 0)) return false;
    const double ratio = std::max(candidate_area_km2 / reference_area_km2,
                                  reference_area_km2 / candidate_area_km2);
    return ratio <= factor;
}

inline bool area_ratio_ok(const CatchmentMask& candidate, double reference_area_km2,
                          double factor) {
    return area_ratio_ok(candidate.area_km2, reference_area_km2, factor);
}

}  // namespace hydrocal
