#pragma once

/**
 * @file hydromodel.hpp
 * @brief Distributed bucket-and-channel process model with nine bounded
 *        calibration parameters.
 *
 * Each cell carries a soil store and a snow store stepped daily; channel
 * routing chains one linear reservoir per cell down the D8 network. The
 * model is deliberately simple: its job is to expose a nonlinear, bounded,
 * nine-parameter map from forcing to streamflow for the calibration
 * machinery, not to reproduce any production land-surface physics.
 */

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hydrocal/series.hpp"
#include "hydrocal/terrain.hpp"

namespace hydrocal {

enum class ParamKind { absolute, multiplier };

struct ParamInfo {
    const char* name;
    double lo, hi;
    ParamKind kind;
    double default_value;
};

inline constexpr int kParamCount = 9;

/// Parameter table: names, ranges, and kind ("multiplier" entries scale a
/// default field, represented here by scalar defaults of 1.0).
inline constexpr std::array<ParamInfo, kParamCount> kParamTable = {{
    {"bexp", 0.4, 1.9, ParamKind::multiplier, 1.0},
    {"dksat", 0.2, 10.0, ParamKind::multiplier, 1.0},
    {"mfsno", 0.5, 3.0, ParamKind::absolute, 2.5},
    {"mp", 0.6, 1.4, ParamKind::multiplier, 1.0},
    {"ovroughrtfac", 0.5, 1.5, ParamKind::absolute, 1.0},
    {"refkdt", 0.1, 4.0, ParamKind::absolute, 3.0},
    {"retdeprtfac", 0.1, 10.0, ParamKind::absolute, 1.0},
    {"slope", 0.0, 1.0, ParamKind::absolute, 0.1},
    {"smcmax", 0.8, 1.2, ParamKind::multiplier, 1.02},
}};

/// The nine bounded calibration parameters.
struct ParameterSet {
    std::array<double, kParamCount> values{};

    double bexp() const { return values[0]; }
    double dksat() const { return values[1]; }
    double mfsno() const { return values[2]; }
    double mp() const { return values[3]; }
    double ovroughrtfac() const { return values[4]; }
    double refkdt() const { return values[5]; }
    double retdeprtfac() const { return values[6]; }
    double slope() const { return values[7]; }
    double smcmax() const { return values[8]; }

    double operator[](int i) const { return values[i]; }
    double& operator[](int i) { return values[i]; }

    static ParameterSet defaults() {
        ParameterSet p;
        for (int i = 0; i < kParamCount; ++i) p.values[i] = kParamTable[i].default_value;
        return p;
    }

    void validate() const {
        for (int i = 0; i < kParamCount; ++i) {
            const ParamInfo& info = kParamTable[i];
            if (!std::isfinite(values[i]) || values[i] < info.lo || values[i] > info.hi)
                throw OutOfBounds(info.name, values[i], info.lo, info.hi);
        }
    }

    ParameterSet clamped() const {
        ParameterSet p = *this;
        for (int i = 0; i < kParamCount; ++i)
            p.values[i] = std::clamp(p.values[i], kParamTable[i].lo, kParamTable[i].hi);
        return p;
    }

    /// Parameter names whose value sits on a range limit (within tol of it).
    std::vector<std::string> at_bounds(double tol = 1e-12) const {
        std::vector<std::string> names;
        for (int i = 0; i < kParamCount; ++i)
            if (values[i] - kParamTable[i].lo <= tol || kParamTable[i].hi - values[i] <= tol)
                names.push_back(kParamTable[i].name);
        return names;
    }
};

inline int param_index(const std::string& name) {
    for (int i = 0; i < kParamCount; ++i)
        if (name == kParamTable[i].name) return i;
    throw InvalidArgument("unknown parameter '" + name + "'");
}

/// Soil and snow stores of one cell, in mm of water.
struct CellState {
    double soil_mm = 0.0;
    double snow_mm = 0.0;
};

/// Full model state: cell stores plus one channel reservoir per cell.
struct ModelState {
    std::vector<CellState> cells;
    std::vector<double> channel_m3;

    static ModelState zeros(size_t n_cells) {
        ModelState s;
        s.cells.assign(n_cells, CellState{});
        s.channel_m3.assign(n_cells, 0.0);
        return s;
    }
};

/// Water leaving one cell during a step, in mm. Runoff and drainage feed the
/// channel network; evapotranspiration leaves the domain.
struct CellFluxes {
    double runoff_mm = 0.0;
    double drainage_mm = 0.0;
    double et_mm = 0.0;
};

// Fixed process scales. These set the magnitude of each flux; the nine
// calibration parameters modulate them. The constants are tuned so that
// every parameter leaves a distinct signature on a seasonal hydrograph
// (storm peaks, recessions, freshet timing, dry-season baseflow).
inline constexpr double kSoilCapacityMm = 100.0;      // at smcmax = 1
inline constexpr double kMeltRateMmPerC = 2.5;        // at mfsno = 1
inline constexpr double kEtRateMmPerC = 0.10;         // at mp = 1, saturated soil
inline constexpr double kDrainRateMm = 8.0;           // at slope*dksat = 1, saturated soil
inline constexpr double kInfilCapMmPerDksat = 2.5;    // infiltration cap per unit dksat
inline constexpr double kRetentionDelay = 0.4;        // per unit retdeprtfac
inline constexpr double kRoughnessDelay = 0.6;        // per unit ovroughrtfac above 0.5
inline constexpr double kSmoothWidthMm = 0.5;         // flux-limiter smoothing width

// Smooth flux limiters. Hard min/max thresholds put kinks in the
// parameter-to-streamflow map that corrupt finite-difference Jacobians, so
// every store-limited flux goes through a smooth cap instead.

/// Smooth minimum of demand and budget: always within [0, min(demand, budget)].
inline double soft_cap(double demand, double budget, double width = kSmoothWidthMm) {
    const double lo = std::min(demand, budget);
    const double softmin =
        lo - width * std::log1p(std::exp(-std::abs(demand - budget) / width));
    return std::max(softmin, 0.0);
}

/// Smooth positive part of (value - threshold).
inline double soft_excess(double value, double threshold, double width = kSmoothWidthMm) {
    const double x = (value - threshold) / width;
    if (x > 30.0) return value - threshold;
    return width * std::log1p(std::exp(x));
}

/**
 * Advances one cell by one day.
 *
 * Water balance closes exactly:
 *   precip = d(soil) + d(snow) + runoff + drainage + et
 * with runoff, drainage, and et all non-negative. Parameter roles:
 * refkdt raises the infiltrated fraction, dksat caps the daily
 * infiltration depth and (with slope) scales drainage, bexp shapes the
 * saturation nonlinearity of infiltration and drainage, retdeprtfac and
 * ovroughrtfac hold surface water back into the soil store, smcmax
 * scales capacity, mp scales evapotranspiration, and mfsno scales
 * snowmelt.
 */
inline CellFluxes step_cell(CellState& state, double precip_mm, double temp_c,
                            const ParameterSet& params) {
    params.validate();
    if (!std::isfinite(precip_mm) || !std::isfinite(temp_c) || precip_mm < 0)
        throw InvalidArgument("non-finite or negative forcing in step_cell");

    CellFluxes flux;
    const double capacity = kSoilCapacityMm * params.smcmax();

    // Snow accumulation below freezing, temperature-index melt above.
    const double snowfall = temp_c < 0.0 ? precip_mm : 0.0;
    const double rain = precip_mm - snowfall;
    state.snow_mm += snowfall;
    const double melt = soft_cap(kMeltRateMmPerC * params.mfsno() * std::max(temp_c, 0.0),
                                 state.snow_mm);
    state.snow_mm -= melt;

    // Partition surface water between infiltration and surface runoff; the
    // infiltrated depth cannot exceed the conductivity-limited cap.
    const double water = rain + melt;
    const double sat = std::min(state.soil_mm / capacity, 1.0);
    const double infil_frac =
        (params.refkdt() / (params.refkdt() + 1.0)) * (1.0 - std::pow(sat, params.bexp()));
    const double infiltration =
        soft_cap(water * infil_frac, kInfilCapMmPerDksat * params.dksat());
    const double surface = water - infiltration;

    // Retention and roughness hold part of the surface water back into the
    // soil store instead of releasing it as same-day runoff.
    const double release =
        1.0 / (1.0 + kRetentionDelay * params.retdeprtfac() +
               kRoughnessDelay * (params.ovroughrtfac() - 0.5));
    flux.runoff_mm = surface * release;
    state.soil_mm += infiltration + (surface - flux.runoff_mm);

    // Saturation excess spills to runoff.
    const double spill = std::min(soft_excess(state.soil_mm, capacity), state.soil_mm);
    flux.runoff_mm += spill;
    state.soil_mm -= spill;

    // Evapotranspiration, then subsurface drainage, both limited by storage.
    const double sat_wet = std::min(state.soil_mm / capacity, 1.0);
    flux.et_mm = soft_cap(kEtRateMmPerC * params.mp() * std::max(temp_c, 0.0) * sat_wet,
                          state.soil_mm);
    state.soil_mm -= flux.et_mm;

    const double sat_drained = std::min(state.soil_mm / capacity, 1.0);
    flux.drainage_mm = soft_cap(kDrainRateMm * params.slope() * params.dksat() *
                                    std::pow(sat_drained, 1.0 + params.bexp()),
                                state.soil_mm);
    state.soil_mm -= flux.drainage_mm;

    return flux;
}

/// Residence time of a cell's channel reservoir, in days.
inline double channel_residence_days(const ParameterSet& params) {
    return 0.5 + params.ovroughrtfac();
}

/// Converts a daily water volume (m^3 over one day) to discharge in m^3/s.
inline constexpr double kSecondsPerDay = 86400.0;

/**
 * Routes one day of per-cell channel inflow (mm over the cell) through the
 * cascade of linear reservoirs, upstream cells first. Each reservoir
 * releases the fraction 1 - exp(-1/tau) of its storage per day and passes
 * it to its D8 receiver (or out of the domain at outlets). Returns the
 * per-cell discharge in m^3/s; total volume is conserved.
 */
inline std::vector<double> route_step(std::vector<double>& channel_m3,
                                      const std::vector<double>& inflow_mm,
                                      const FlowGrid& flow,
                                      const std::vector<int>& topo_order,
                                      const ParameterSet& params) {
    if (channel_m3.size() != flow.size() || inflow_mm.size() != flow.size())
        throw ShapeError("route_step: field size mismatch");
    const double cell_km2 = flow.cell_size * flow.cell_size / 1e6;
    const double tau = channel_residence_days(params);
    const double release = 1.0 - std::exp(-1.0 / tau);

    std::vector<double> discharge(flow.size(), 0.0);
    std::vector<double> lateral(flow.size(), 0.0);
    for (size_t i = 0; i < flow.size(); ++i) {
        if (flow.directions[i] == D8::none) continue;
        if (inflow_mm[i] < 0) throw InvalidArgument("negative channel inflow");
        lateral[i] = inflow_mm[i] * cell_km2 * 1000.0;  // mm * km^2 -> m^3
    }
    for (int i : topo_order) {
        channel_m3[i] += lateral[i];
        const double out_m3 = channel_m3[i] * release;
        channel_m3[i] -= out_m3;
        discharge[i] = out_m3 / kSecondsPerDay;
        const int r = flow.receiver(i);
        if (r >= 0) lateral[r] += out_m3;
    }
    return discharge;
}

/// Convenience wrapper: routes a sequence of daily runoff fields from a zero
/// channel state and returns the per-day discharge at one cell.
inline std::vector<double> route(const std::vector<std::vector<double>>& inflow_days,
                                 const FlowGrid& flow, const ParameterSet& params,
                                 const Cell& at) {
    const std::vector<int> order = topological_order(flow);
    std::vector<double> channel(flow.size(), 0.0);
    std::vector<double> result;
    result.reserve(inflow_days.size());
    for (const auto& inflow : inflow_days) {
        const auto q = route_step(channel, inflow, flow, order, params);
        result.push_back(q[flow.index(at)]);
    }
    return result;
}

/// A gauged location on the routing grid.
struct Station {
    std::string id;
    Cell cell;
};

/// Lumped daily forcing driving a simulation: every cell sees the same
/// precipitation and temperature.
struct SimulationForcing {
    ForcingSeries precipitation;  // mm per day
    ForcingSeries temperature;    // degC

    /// Index of `date` in both series; throws MissingForcing when absent.
    int require_index(const Date& date) const {
        auto find = [&](const ForcingSeries& s) {
            auto it = std::lower_bound(s.dates.begin(), s.dates.end(), date);
            if (it == s.dates.end() || *it != date)
                throw MissingForcing(date.to_string());
            return int(it - s.dates.begin());
        };
        const int ip = find(precipitation);
        (void)find(temperature);
        return ip;
    }
};

/// Total water held in cell stores and channels, in m^3.
inline double storage_m3(const ModelState& state, const FlowGrid& flow) {
    const double cell_km2 = flow.cell_size * flow.cell_size / 1e6;
    double total = 0.0;
    for (size_t i = 0; i < flow.size(); ++i) {
        if (flow.directions[i] == D8::none) continue;
        total += (state.cells[i].soil_mm + state.cells[i].snow_mm) * cell_km2 * 1000.0;
        total += state.channel_m3[i];
    }
    return total;
}

/// Per-station hydrographs plus domain water-balance terms accumulated over
/// the scored window (all in m^3). The balance identity is
///   precip = et + outlet + (storage_end - storage_start).
struct SimulationResult {
    std::vector<StreamflowSeries> stations;
    double precip_m3 = 0.0;
    double et_m3 = 0.0;
    double channel_inflow_m3 = 0.0;   // surface runoff + drainage entering channels
    double outlet_m3 = 0.0;           // discharge leaving the domain
    double storage_start_m3 = 0.0;    // at the start of the scored window
    double storage_end_m3 = 0.0;
    ModelState final_state;
};

/**
 * Runs the model over `window` and reports daily discharge at each station.
 *
 * Spinup repeats the first (up to) 365 days of in-window forcing three
 * times before the scored period, mirroring a multi-year spinup, and is
 * discarded from the output. Identical inputs produce bit-identical
 * output: iteration order is fixed and there is no shared mutable state.
 */
inline SimulationResult simulate(const SimulationForcing& forcing,
                                 const ParameterSet& params, const FlowGrid& flow,
                                 const std::vector<Station>& stations,
                                 const DateRange& window) {
    params.validate();
    forcing.precipitation.validate();
    forcing.temperature.validate();
    if (window.last < window.first) throw InvalidArgument("empty simulation window");
    for (const Station& st : stations)
        if (!flow.in_bounds(st.cell.row, st.cell.col) ||
            flow.directions[flow.index(st.cell)] == D8::none)
            throw InvalidOutlet("station " + st.id + " is not on a routed cell");

    const std::vector<int> order = topological_order(flow);
    const size_t n = flow.size();
    ModelState state = ModelState::zeros(n);

    // Forcing indices for every simulated day: three spinup passes over the
    // first year of the window, then the window itself.
    std::vector<int> day_index;
    const int window_days = window.days();
    const int spin_days = std::min(window_days, 365);
    int first_idx = forcing.require_index(window.first);
    for (int d = 1; d < window_days; ++d) forcing.require_index(window.first + d);
    for (int pass = 0; pass < 3; ++pass)
        for (int d = 0; d < spin_days; ++d) day_index.push_back(first_idx + d);
    for (int d = 0; d < window_days; ++d) day_index.push_back(first_idx + d);
    const size_t spinup_steps = size_t(3) * spin_days;

    SimulationResult result;
    result.stations.resize(stations.size());
    for (size_t s = 0; s < stations.size(); ++s) {
        result.stations[s].station_id = stations[s].id;
        result.stations[s].dates.reserve(window_days);
    }

    const size_t routed = flow.count_routed();
    const double cell_m3_per_mm = flow.cell_size * flow.cell_size / 1e6 * 1000.0;
    std::vector<double> inflow(n, 0.0);
    for (size_t step = 0; step < day_index.size(); ++step) {
        const int fi = day_index[step];
        const double precip = forcing.precipitation.values[fi];
        const double temp = forcing.temperature.values[fi];
        const bool scored = step >= spinup_steps;
        if (step == spinup_steps) result.storage_start_m3 = storage_m3(state, flow);

        double et_day = 0.0, inflow_day = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (flow.directions[i] == D8::none) {
                inflow[i] = 0.0;
                continue;
            }
            const CellFluxes f = step_cell(state.cells[i], precip, temp, params);
            inflow[i] = f.runoff_mm + f.drainage_mm;
            et_day += f.et_mm;
            inflow_day += inflow[i];
        }
        const auto discharge = route_step(state.channel_m3, inflow, flow, order, params);

        if (!scored) continue;
        const Date date = window.first + int(step - spinup_steps);
        for (size_t s = 0; s < stations.size(); ++s) {
            result.stations[s].dates.push_back(date);
            result.stations[s].values.push_back(discharge[flow.index(stations[s].cell)]);
            result.stations[s].valid.push_back(1);
        }
        result.precip_m3 += precip * double(routed) * cell_m3_per_mm;
        result.et_m3 += et_day * cell_m3_per_mm;
        result.channel_inflow_m3 += inflow_day * cell_m3_per_mm;
        for (size_t i = 0; i < n; ++i)
            if (flow.directions[i] == D8::outlet)
                result.outlet_m3 += discharge[i] * kSecondsPerDay;
    }
    result.storage_end_m3 = storage_m3(state, flow);
    result.final_state = std::move(state);
    return result;
}

}  // namespace hydrocal
