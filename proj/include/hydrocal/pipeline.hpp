#pragma once

/**
 * @file pipeline.hpp
 * @brief End-to-end orchestration: terrain, forcing calibration, baseline
 *        simulation, parameter estimation, NN232/NN343 post-processing, and
 *        metrics, each stage consuming the previous stage's files so a run
 *        can resume from any point. A manifest records per-stage outcomes
 *        and content digests of every produced file.
 */

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydrocal/forcing.hpp"
#include "hydrocal/hydromodel.hpp"
#include "hydrocal/metrics.hpp"
#include "hydrocal/mlp.hpp"
#include "hydrocal/paramest.hpp"
#include "hydrocal/synth.hpp"
#include "hydrocal/terrain.hpp"

namespace hydrocal {

#ifndef HYDROCAL_VERSION
#define HYDROCAL_VERSION "0.0.0"
#endif

/// A pipeline stage failed; carries the stage name for the exit status.
struct StageFailure : Error {
    std::string stage;
    StageFailure(const std::string& stage_name, const std::string& msg)
        : Error("stage " + stage_name + " failed: " + msg), stage(stage_name) {}
};

// ---------------------------------------------------------------------------
// Content digests (FNV-1a 64-bit) and the run manifest
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void* data, size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    uint64_t hash = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < len; ++i) {
        hash ^= bytes[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot digest " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  (unsigned long long)fnv1a64(data.data(), data.size()));
    return hex;
}

struct StageOutcome {
    std::string name;
    std::string status;    // "ok", "skipped", "failed"
    std::string message;
};

struct RunManifest {
    std::string version = HYDROCAL_VERSION;
    uint64_t seed = 0;
    std::vector<StageOutcome> stages;
    std::map<std::string, std::string> outputs;   // path relative to output dir -> digest

    nlohmann::json to_json() const {
        nlohmann::json stage_list = nlohmann::json::array();
        for (const StageOutcome& s : stages)
            stage_list.push_back(
                {{"name", s.name}, {"status", s.status}, {"message", s.message}});
        return {{"version", version},
                {"seed", seed},
                {"stages", stage_list},
                {"outputs", outputs}};
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path);
        out << to_json().dump(2) << '\n';
    }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
    uint64_t seed = 0;

    // paths
    std::string dem_path, stations_path, forcing_dir, observations_dir, output_dir;

    struct Terrain {
        bool enabled = true;
        std::string boundary_path;   // empty: no enforcement
        double raise_m = 100.0;
    } terrain;

    struct Forcing {
        bool enabled = true;
        std::string reference_dir;
        int train_first_year = 0, train_last_year = 9999;
    } forcing;

    struct Simulate {
        bool enabled = true;
        DateRange window;
    } simulate;

    struct ParamEst {
        bool enabled = true;
        MonthDayWindow window{5, 1, 10, 31};
        int iterations = 5;
        double rel_step = 0.01;
    } paramest;

    struct Nn {
        bool enabled = true;
        int iterations = 1000;
        int train_parity = 0;        // 0 = even years, 1 = odd years
        bool rank_match = false;     // NN343 only
        double learning_rate = 0.02;
    } nn232, nn343;

    double area_factor = 1.2;
    double coverage_fraction = 0.40;

    struct Metrics {
        bool enabled = true;
        std::string parity = "auto";   // "even", "odd", "all", or "auto"
    } metrics;

    static PipelineConfig load(const std::string& path);
    void validate() const;
};

inline PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }

    PipelineConfig cfg;
    cfg.seed = j.value("seed", uint64_t(0));
    const auto& paths = j.at("paths");
    cfg.dem_path = paths.at("dem");
    cfg.stations_path = paths.at("stations");
    cfg.forcing_dir = paths.at("forcing_dir");
    cfg.observations_dir = paths.at("observations_dir");
    cfg.output_dir = paths.at("output_dir");

    auto parity_of = [](const std::string& split) {
        if (split == "even") return 0;
        if (split == "odd") return 1;
        throw ConfigError("split must be 'even' or 'odd', got '" + split + "'");
    };

    if (j.contains("terrain")) {
        const auto& t = j["terrain"];
        cfg.terrain.enabled = t.value("enabled", true);
        cfg.terrain.boundary_path = t.value("boundary", std::string());
        cfg.terrain.raise_m = t.value("raise_m", 100.0);
    }
    if (j.contains("forcing")) {
        const auto& f = j["forcing"];
        cfg.forcing.enabled = f.value("enabled", true);
        cfg.forcing.reference_dir = f.value("reference_dir", std::string());
        if (f.contains("train_years")) {
            cfg.forcing.train_first_year = f["train_years"][0];
            cfg.forcing.train_last_year = f["train_years"][1];
        }
    }
    if (j.contains("simulate")) {
        const auto& s = j["simulate"];
        cfg.simulate.enabled = s.value("enabled", true);
        if (s.contains("window")) {
            cfg.simulate.window.first = Date::parse(s["window"][0]);
            cfg.simulate.window.last = Date::parse(s["window"][1]);
        }
    }
    if (j.contains("paramest")) {
        const auto& p = j["paramest"];
        cfg.paramest.enabled = p.value("enabled", true);
        if (p.contains("window")) cfg.paramest.window = MonthDayWindow::parse(p["window"]);
        cfg.paramest.iterations = p.value("iterations", 5);
        cfg.paramest.rel_step = p.value("rel_step", 0.01);
    }
    auto load_nn = [&](const char* key, PipelineConfig::Nn& nn) {
        if (!j.contains(key)) return;
        const auto& n = j[key];
        nn.enabled = n.value("enabled", true);
        nn.iterations = n.value("iterations", 1000);
        nn.learning_rate = n.value("learning_rate", 0.02);
        if (n.contains("split")) nn.train_parity = parity_of(n["split"]);
        nn.rank_match = n.value("rank_match", false);
    };
    load_nn("nn232", cfg.nn232);
    load_nn("nn343", cfg.nn343);
    if (j.contains("nn343")) {
        cfg.area_factor = j["nn343"].value("area_factor", 1.2);
        cfg.coverage_fraction = j["nn343"].value("coverage_fraction", 0.40);
    }
    if (j.contains("metrics")) {
        cfg.metrics.enabled = j["metrics"].value("enabled", true);
        cfg.metrics.parity = j["metrics"].value("parity", std::string("auto"));
    }
    cfg.validate();
    return cfg;
}

inline void PipelineConfig::validate() const {
    namespace fs = std::filesystem;
    if (!(area_factor >= 1)) throw ConfigError("area_factor must be >= 1");
    if (!(coverage_fraction > 0)) throw ConfigError("coverage_fraction must be positive");
    if (!(terrain.raise_m > 0)) throw ConfigError("raise_m must be positive");
    for (const std::string& p : {dem_path, stations_path, forcing_dir, observations_dir})
        if (!fs::exists(p)) throw ConfigError("configured path does not exist: " + p);
    if (forcing.enabled && !fs::exists(forcing.reference_dir))
        throw ConfigError("forcing reference_dir does not exist: " + forcing.reference_dir);
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Station list CSV: id,row,col[,ref_area_km2].
struct StationEntry {
    Station station;
    std::optional<double> reference_area_km2;
};

inline std::vector<StationEntry> read_station_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<StationEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#' || line.rfind("id", 0) == 0) continue;
        StationEntry e;
        char id[128];
        double area = 0;
        const int n = std::sscanf(line.c_str(), "%127[^,],%d,%d,%lf", id,
                                  &e.station.cell.row, &e.station.cell.col, &area);
        if (n < 3) throw IoError(path + ": malformed station row '" + line + "'");
        e.station.id = id;
        if (n == 4) e.reference_area_km2 = area;
        entries.push_back(e);
    }
    if (entries.empty()) throw IoError(path + ": no stations");
    return entries;
}

/// Re-dates a series onto a fixed axis; days absent from the source are
/// masked.
inline StreamflowSeries align_to_axis(const StreamflowSeries& src,
                                      const std::vector<Date>& axis) {
    StreamflowSeries out;
    out.station_id = src.station_id;
    out.dates = axis;
    out.values.assign(axis.size(), 0.0);
    out.valid.assign(axis.size(), 0);
    for (size_t i = 0; i < axis.size(); ++i) {
        const int j = src.index_of(axis[i]);
        if (j >= 0 && src.valid[j]) {
            out.values[i] = src.values[j];
            out.valid[i] = 1;
        }
    }
    return out;
}

/// Keeps only days whose calendar year has the given parity (0 even, 1 odd).
inline StreamflowSeries mask_to_parity(const StreamflowSeries& src, int parity) {
    StreamflowSeries out = src;
    for (size_t i = 0; i < out.size(); ++i)
        if ((out.dates[i].year() & 1) != parity) {
            out.valid[i] = 0;
            out.values[i] = 0.0;
        }
    return out;
}

/// True iff the station catchment covers at least `fraction` of the ocean
/// outlet catchment it belongs to.
inline bool coverage_ok(const CatchmentMask& station_mask,
                        const CatchmentMask& outlet_mask, double fraction) {
    const size_t outlet_cells = outlet_mask.cell_count();
    if (outlet_cells == 0) throw InvalidOutlet("outlet catchment is empty");
    return double(station_mask.overlap(outlet_mask)) / double(outlet_cells) >= fraction;
}

/// Follows directions from a cell to the outlet it drains through.
inline Cell trace_to_outlet(const FlowGrid& flow, const Cell& from) {
    int i = flow.index(from);
    if (flow.directions[i] == D8::none) throw InvalidOutlet("cell is not routed");
    size_t guard = flow.size() + 1;
    while (flow.directions[i] != D8::outlet) {
        i = flow.receiver(i);
        if (i < 0 || guard-- == 0) throw InvalidOutlet("cell does not reach an outlet");
    }
    return flow.cell_of(i);
}

// ---------------------------------------------------------------------------
// Decadal summaries (plot-ready)
// ---------------------------------------------------------------------------

struct DecadalSummary {
    std::vector<int> decades;                          // retained decade start years
    std::vector<std::array<double, 365>> doy_means;    // per retained decade
    std::vector<std::array<int, 365>> doy_counts;
    std::vector<int> omitted;                          // decades with no data
    std::vector<std::pair<int, double>> annual_means;  // (year, mean of valid days)
    double daily_mean = 0.0, daily_std = 0.0;          // over all valid days
};

/// Day-of-year climatologies per decade, annual means, and the overall
/// mean/std of valid daily values. decade_starts are years (e.g. 1990).
inline DecadalSummary decadal_summary(const StreamflowSeries& series,
                                      const std::vector<int>& decade_starts) {
    series.validate();
    DecadalSummary out;
    std::map<int, std::pair<double, int>> annual;
    double sum = 0, sq = 0;
    int n = 0;
    for (size_t i = 0; i < series.size(); ++i) {
        if (!series.valid[i]) continue;
        const double v = series.values[i];
        sum += v;
        sq += v * v;
        ++n;
        auto& [a_sum, a_n] = annual[series.dates[i].year()];
        a_sum += v;
        ++a_n;
    }
    if (n == 0) throw InsufficientData("decadal_summary: series has no valid days");
    out.daily_mean = sum / n;
    out.daily_std = std::sqrt(std::max(sq / n - out.daily_mean * out.daily_mean, 0.0));
    for (const auto& [year, acc] : annual)
        out.annual_means.emplace_back(year, acc.first / acc.second);

    for (int start : decade_starts) {
        std::array<double, 365> means{};
        std::array<int, 365> counts{};
        for (size_t i = 0; i < series.size(); ++i) {
            if (!series.valid[i]) continue;
            const int y = series.dates[i].year();
            if (y < start || y >= start + 10) continue;
            const int d = series.dates[i].doy365() - 1;
            means[d] += series.values[i];
            counts[d] += 1;
        }
        int total = 0;
        for (int d = 0; d < 365; ++d) {
            if (counts[d]) means[d] /= counts[d];
            total += counts[d];
        }
        if (total == 0) {
            out.omitted.push_back(start);
            continue;
        }
        out.decades.push_back(start);
        out.doy_means.push_back(means);
        out.doy_counts.push_back(counts);
    }
    return out;
}

/// Writes <prefix>_decadal.csv, <prefix>_annual.csv, and <prefix>_stats.csv.
inline void write_summary_csv(const std::string& prefix, const DecadalSummary& s) {
    {
        std::ofstream out(prefix + "_decadal.csv");
        if (!out) throw IoError("cannot write " + prefix + "_decadal.csv");
        out << "doy";
        for (int d : s.decades) out << ",decade_" << d;
        out << '\n';
        out.precision(10);
        for (int d = 0; d < 365; ++d) {
            out << (d + 1);
            for (size_t k = 0; k < s.decades.size(); ++k) {
                out << ',';
                if (s.doy_counts[k][d]) out << s.doy_means[k][d];
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(prefix + "_annual.csv");
        if (!out) throw IoError("cannot write " + prefix + "_annual.csv");
        out << "year,mean\n";
        out.precision(12);
        for (const auto& [year, mean] : s.annual_means) out << year << ',' << mean << '\n';
    }
    {
        std::ofstream out(prefix + "_stats.csv");
        if (!out) throw IoError("cannot write " + prefix + "_stats.csv");
        out.precision(12);
        out << "stat,value\n";
        out << "daily_mean," << s.daily_mean << '\n';
        out << "daily_std," << s.daily_std << '\n';
    }
}

// ---------------------------------------------------------------------------
// Pipeline stages. Every stage reads its inputs from files (the config or a
// previous stage's outputs) and writes files under output_dir/<stage>/.
// ---------------------------------------------------------------------------

namespace stages {

namespace fs = std::filesystem;

inline std::string stage_dir(const PipelineConfig& cfg, const std::string& stage) {
    const std::string dir = cfg.output_dir + "/" + stage;
    fs::create_directories(dir);
    return dir;
}

/// The DEM the simulation stages should route on: the terrain stage's
/// filled product when present, otherwise the configured DEM filled on the
/// fly.
inline FlowGrid load_flow_grid(const PipelineConfig& cfg) {
    const std::string filled = cfg.output_dir + "/terrain/dem_filled.asc";
    DemGrid dem = fs::exists(filled) ? read_esri_ascii(filled)
                                     : fill_depressions(read_esri_ascii(cfg.dem_path));
    return flow_accumulation(flow_directions(dem));
}

/// The forcing the simulation stages should use: adjusted outputs when the
/// forcing stage produced them, otherwise the configured model forcing.
inline SimulationForcing load_sim_forcing(const PipelineConfig& cfg) {
    std::string dir = cfg.forcing_dir;
    if (fs::exists(cfg.output_dir + "/forcing/precipitation.csv"))
        dir = cfg.output_dir + "/forcing";
    SimulationForcing f;
    f.precipitation = read_forcing_csv(dir + "/precipitation.csv", Variable::precipitation);
    f.temperature = read_forcing_csv(dir + "/temperature.csv", Variable::temperature);
    return f;
}

inline std::vector<Station> station_list(const std::vector<StationEntry>& entries) {
    std::vector<Station> out;
    for (const StationEntry& e : entries) out.push_back(e.station);
    return out;
}

inline StreamflowSeries read_observations(const PipelineConfig& cfg,
                                          const std::string& station_id) {
    return read_flow_csv(cfg.observations_dir + "/" + station_id + ".csv", station_id);
}

/// Terrain: boundary enforcement, filling, routing, per-station catchments,
/// and the area/coverage gates that decide NN343 eligibility.
inline void run_terrain(const PipelineConfig& cfg) {
    const std::string dir = stage_dir(cfg, "terrain");
    DemGrid dem = read_esri_ascii(cfg.dem_path);
    nlohmann::json report;
    if (!cfg.terrain.boundary_path.empty()) {
        const auto boundary = read_cell_csv(cfg.terrain.boundary_path);
        BoundaryResult enforced = enforce_boundary(dem, boundary, cfg.terrain.raise_m);
        dem = std::move(enforced.grid);
        report["boundary_cells"] = boundary.size();
        report["boundary_skipped"] = enforced.skipped.size();
    }
    const DemGrid filled = fill_depressions(dem);
    write_esri_ascii(dir + "/dem_filled.asc", filled);
    const FlowGrid flow = flow_accumulation(flow_directions(filled));

    const auto entries = read_station_csv(cfg.stations_path);
    nlohmann::json stations = nlohmann::json::object();
    for (const StationEntry& e : entries) {
        const CatchmentMask mask = delineate_catchment(flow, e.station.cell);
        write_mask_csv(dir + "/catchment_" + e.station.id + ".csv", mask);

        const Cell outlet = trace_to_outlet(flow, e.station.cell);
        const CatchmentMask outlet_mask = delineate_catchment(flow, outlet);
        const bool area_ok = e.reference_area_km2
                                 ? area_ratio_ok(mask, *e.reference_area_km2, cfg.area_factor)
                                 : true;
        const bool cov_ok = coverage_ok(mask, outlet_mask, cfg.coverage_fraction);
        stations[e.station.id] = {
            {"cell", {e.station.cell.row, e.station.cell.col}},
            {"area_km2", mask.area_km2},
            {"reference_area_km2",
             e.reference_area_km2 ? nlohmann::json(*e.reference_area_km2) : nlohmann::json()},
            {"area_ok", area_ok},
            {"outlet", {outlet.row, outlet.col}},
            {"outlet_area_km2", outlet_mask.area_km2},
            {"coverage",
             double(mask.overlap(outlet_mask)) / double(outlet_mask.cell_count())},
            {"coverage_ok", cov_ok},
            {"nn343_eligible", area_ok && cov_ok},
        };
    }
    report["stations"] = stations;
    std::ofstream out(dir + "/terrain.json");
    out << report.dump(2) << '\n';
}

/// Forcing: derive and apply seasonal adjustments variable by variable.
/// Pass-through variables are copied unchanged.
inline void run_forcing(const PipelineConfig& cfg) {
    const std::string dir = stage_dir(cfg, "forcing");
    for (const auto& file : fs::directory_iterator(cfg.forcing_dir)) {
        if (file.path().extension() != ".csv") continue;
        const std::string stem = file.path().stem().string();
        Variable variable;
        try {
            variable = parse_variable(stem);
        } catch (const InvalidArgument&) {
            continue;   // not a forcing file
        }
        const ForcingSeries model = read_forcing_csv(file.path().string(), variable);
        if (!adjustable_variable(variable)) {
            write_forcing_csv(dir + "/" + stem + ".csv", model);
            continue;
        }
        const ForcingSeries reference =
            read_forcing_csv(cfg.forcing.reference_dir + "/" + stem + ".csv", variable);
        const AnnualCycle ref_cycle = doy_climatology(reference, cfg.forcing.train_first_year,
                                                      cfg.forcing.train_last_year);
        const AnnualCycle mod_cycle = doy_climatology(model, cfg.forcing.train_first_year,
                                                      cfg.forcing.train_last_year);
        const AdjustmentMode mode = multiplicative_variable(variable)
                                        ? AdjustmentMode::multiplicative
                                        : AdjustmentMode::additive;
        const DailyAdjustment adj =
            derive_adjustment(fit_sinusoid(ref_cycle), fit_sinusoid(mod_cycle), mode);
        write_adjustment_csv(dir + "/adjustment_" + stem + ".csv", adj);
        write_forcing_csv(dir + "/" + stem + ".csv", apply_adjustment(model, adj));
    }
}

/// Simulate: baseline run at default parameters.
inline void run_simulate(const PipelineConfig& cfg) {
    const std::string dir = stage_dir(cfg, "simulate");
    const FlowGrid flow = load_flow_grid(cfg);
    const SimulationForcing forcing = load_sim_forcing(cfg);
    const auto entries = read_station_csv(cfg.stations_path);
    const SimulationResult result = simulate(forcing, ParameterSet::defaults(), flow,
                                             station_list(entries), cfg.simulate.window);
    for (const StreamflowSeries& s : result.stations)
        write_flow_csv(dir + "/sim_default_" + s.station_id + ".csv", s);
}

/// Parameter estimation against observations inside the seasonal window,
/// then a re-simulation at the estimated parameters.
inline void run_paramest(const PipelineConfig& cfg) {
    const std::string dir = stage_dir(cfg, "paramest");
    const FlowGrid flow = load_flow_grid(cfg);
    const SimulationForcing forcing = load_sim_forcing(cfg);
    const auto entries = read_station_csv(cfg.stations_path);
    const std::vector<Station> stations = station_list(entries);

    std::vector<StreamflowSeries> observations;
    for (const StationEntry& e : entries) {
        StreamflowSeries obs = read_observations(cfg, e.station.id);
        // Clip to the simulation window so every sample is predictable.
        StreamflowSeries clipped;
        clipped.station_id = obs.station_id;
        for (size_t i = 0; i < obs.size(); ++i) {
            if (!cfg.simulate.window.contains(obs.dates[i])) continue;
            clipped.dates.push_back(obs.dates[i]);
            clipped.values.push_back(obs.values[i]);
            clipped.valid.push_back(obs.valid[i]);
        }
        observations.push_back(std::move(clipped));
    }

    const ObjectiveSpec spec = build_objective(observations, cfg.paramest.window);
    SeriesSimulator simulator = [&](const ParameterSet& p) {
        return simulate(forcing, p, flow, stations, cfg.simulate.window).stations;
    };
    EstimateOptions opts;
    opts.max_iterations = cfg.paramest.iterations;
    opts.rel_step = cfg.paramest.rel_step;
    const EstimationResult result = estimate(simulator, spec, ParameterSet::defaults(), opts);

    std::ofstream out(dir + "/estimation.json");
    out << estimation_to_json(result).dump(2) << '\n';
    out.close();

    const SimulationResult best =
        simulate(forcing, result.params, flow, stations, cfg.simulate.window);
    for (const StreamflowSeries& s : best.stations)
        write_flow_csv(dir + "/sim_estimated_" + s.station_id + ".csv", s);
}

/// Best model series produced so far for a station, in stage order.
inline std::optional<StreamflowSeries> latest_model_series(const PipelineConfig& cfg,
                                                           const std::string& id,
                                                           const std::string& before_stage) {
    const std::vector<std::pair<std::string, std::string>> candidates = {
        {"nn343", cfg.output_dir + "/nn343/nn343_" + id + ".csv"},
        {"nn232", cfg.output_dir + "/nn232/nn232_" + id + ".csv"},
        {"paramest", cfg.output_dir + "/paramest/sim_estimated_" + id + ".csv"},
        {"simulate", cfg.output_dir + "/simulate/sim_default_" + id + ".csv"},
    };
    bool seen_gate = before_stage.empty();
    for (const auto& [stage, path] : candidates) {
        if (!seen_gate) {
            if (stage == before_stage) seen_gate = true;
            continue;
        }
        if (fs::exists(path)) return read_flow_csv(path, id);
    }
    return std::nullopt;
}

struct NnTrainingData {
    MultiScaleSeries inputs;
    MultiScaleSeries targets;
};

/// Assembles training channels for one station: full-series model inputs
/// and parity-masked observation targets, with the daily target channel
/// optionally rank-matched to handle asynchronous forcing.
inline NnTrainingData nn_training_data(const StreamflowSeries& model_series,
                                       const StreamflowSeries& obs_raw, int train_parity,
                                       bool use_rank_match) {
    NnTrainingData data;
    data.inputs = MultiScaleSeries::from_daily(model_series);

    const StreamflowSeries obs_axis = align_to_axis(obs_raw, model_series.dates);
    StreamflowSeries obs_train = mask_to_parity(obs_axis, train_parity);
    for (size_t i = 0; i < obs_train.size(); ++i)
        if (!model_series.valid[i]) {
            obs_train.valid[i] = 0;
            obs_train.values[i] = 0.0;
        }
    data.targets = MultiScaleSeries::from_daily(obs_train);

    if (use_rank_match) {
        StreamflowSeries model_train = model_series;
        for (size_t i = 0; i < model_train.size(); ++i)
            if (!obs_train.valid[i]) {
                model_train.valid[i] = 0;
                model_train.values[i] = 0.0;
            }
        data.targets.daily = rank_match(model_train, obs_train);
    }
    return data;
}

inline void write_loss_curve(const std::string& path, const TrainedNetwork& model,
                             const std::string& split) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# train_split: " << split << "\n";
    out << "iteration,loss\n";
    out.precision(12);
    for (size_t i = 0; i < model.loss_curve.size(); ++i)
        out << i << ',' << model.loss_curve[i] << '\n';
}

/// NN232: one buffering network trained on all stations at once, applied to
/// every station.
inline void run_nn232(const PipelineConfig& cfg) {
    const std::string dir = stage_dir(cfg, "nn232");
    const auto entries = read_station_csv(cfg.stations_path);

    std::vector<std::pair<MultiScaleSeries, MultiScaleSeries>> pairs;
    std::vector<MultiScaleSeries> inputs_by_station;
    for (const StationEntry& e : entries) {
        const auto model_series = latest_model_series(cfg, e.station.id, "nn232");
        if (!model_series)
            throw ConfigError("nn232: no upstream simulation for station " + e.station.id);
        const StreamflowSeries obs = read_observations(cfg, e.station.id);
        NnTrainingData data =
            nn_training_data(*model_series, obs, cfg.nn232.train_parity, false);
        inputs_by_station.push_back(data.inputs);
        pairs.emplace_back(std::move(data.inputs), std::move(data.targets));
    }

    TrainOptions opts;
    opts.iterations = cfg.nn232.iterations;
    opts.seed = cfg.seed * 1000003ull + 232;
    opts.learning_rate = cfg.nn232.learning_rate;
    const TrainedNetwork model = train_network_pooled(NetArch::nn232, pairs, opts);

    std::ofstream nf(dir + "/network.json");
    nf << network_to_json(model).dump(2) << '\n';
    nf.close();
    write_loss_curve(dir + "/training_report.csv", model,
                     cfg.nn232.train_parity == 0 ? "even" : "odd");

    for (size_t s = 0; s < entries.size(); ++s) {
        StreamflowSeries out = apply_network(model, inputs_by_station[s]);
        out.station_id = entries[s].station.id;
        write_flow_csv(dir + "/nn232_" + out.station_id + ".csv", out);
    }
}

/// NN343: per-station seasonal calibration, trained only where the terrain
/// gates passed; gated-out stations keep their NN232 series.
inline void run_nn343(const PipelineConfig& cfg) {
    const std::string dir = stage_dir(cfg, "nn343");
    const auto entries = read_station_csv(cfg.stations_path);

    std::map<std::string, bool> eligible;
    const std::string terrain_json = cfg.output_dir + "/terrain/terrain.json";
    if (fs::exists(terrain_json)) {
        std::ifstream in(terrain_json);
        nlohmann::json t;
        in >> t;
        for (const auto& [id, entry] : t.at("stations").items())
            eligible[id] = entry.value("nn343_eligible", true);
    }

    for (size_t s = 0; s < entries.size(); ++s) {
        const std::string& id = entries[s].station.id;
        if (eligible.count(id) && !eligible[id]) continue;
        const auto model_series = latest_model_series(cfg, id, "nn343");
        if (!model_series)
            throw ConfigError("nn343: no upstream series for station " + id);
        const StreamflowSeries obs = read_observations(cfg, id);
        const NnTrainingData data =
            nn_training_data(*model_series, obs, cfg.nn343.train_parity, cfg.nn343.rank_match);

        TrainOptions opts;
        opts.iterations = cfg.nn343.iterations;
        opts.seed = cfg.seed * 1000003ull + 343 + uint64_t(s);
        opts.learning_rate = cfg.nn343.learning_rate;
        const TrainedNetwork model = train_network(NetArch::nn343, data.inputs, data.targets, opts);

        std::ofstream nf(dir + "/network_" + id + ".json");
        nf << network_to_json(model).dump(2) << '\n';
        nf.close();
        write_loss_curve(dir + "/training_report_" + id + ".csv", model,
                         cfg.nn343.train_parity == 0 ? "even" : "odd");

        StreamflowSeries out = apply_network(model, data.inputs);
        out.station_id = id;
        write_flow_csv(dir + "/nn343_" + id + ".csv", out);
    }
}

/// Metrics: every available calibration series against observations at
/// daily, monthly, and annual averaging, on the held-out parity.
inline void run_metrics(const PipelineConfig& cfg) {
    const std::string dir = stage_dir(cfg, "metrics");
    const auto entries = read_station_csv(cfg.stations_path);

    int parity = -1;   // -1: all days
    if (cfg.metrics.parity == "even") parity = 0;
    else if (cfg.metrics.parity == "odd") parity = 1;
    else if (cfg.metrics.parity == "auto" && (cfg.nn232.enabled || cfg.nn343.enabled))
        parity = 1 - cfg.nn343.train_parity;

    const std::vector<std::pair<std::string, std::string>> calibrations = {
        {"default", cfg.output_dir + "/simulate/sim_default_"},
        {"estimated", cfg.output_dir + "/paramest/sim_estimated_"},
        {"nn232", cfg.output_dir + "/nn232/nn232_"},
        {"nn343", cfg.output_dir + "/nn343/nn343_"},
    };

    nlohmann::json report = nlohmann::json::object();
    std::vector<TableRow> rows;
    for (const StationEntry& e : entries) {
        const std::string& id = e.station.id;
        StreamflowSeries obs = read_observations(cfg, id);
        if (parity >= 0) obs = mask_to_parity(obs, parity);
        nlohmann::json station_report = nlohmann::json::object();
        for (const auto& [name, prefix] : calibrations) {
            const std::string path = prefix + id + ".csv";
            if (!fs::exists(path)) continue;
            const StreamflowSeries model = read_flow_csv(path, id);
            nlohmann::json by_avg = nlohmann::json::object();
            for (Averaging avg : {Averaging::day, Averaging::month, Averaging::year}) {
                try {
                    const MetricsReport r = evaluate({obs, model, DataModel::target}, avg);
                    by_avg[averaging_name(avg)] = report_to_json(r);
                    rows.push_back({id, name, r});
                } catch (const InsufficientData& e) {
                    by_avg[averaging_name(avg)] = {{"skipped", e.what()}};
                }
            }
            station_report[name] = by_avg;
        }
        report[id] = station_report;
    }
    std::ofstream out(dir + "/report.json");
    out << report.dump(2) << '\n';
    out.close();
    write_metrics_table_csv(dir + "/table.csv", rows);
}

}  // namespace stages

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

/**
 * Runs every enabled stage in order, collecting output digests into the
 * manifest (written to output_dir/manifest.json even on failure). A stage
 * failure halts the run and is rethrown as StageFailure.
 */
inline RunManifest run_pipeline(const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();
    fs::create_directories(cfg.output_dir);

    RunManifest manifest;
    manifest.seed = cfg.seed;

    struct StageDef {
        const char* name;
        bool enabled;
        void (*run)(const PipelineConfig&);
    };
    const std::vector<StageDef> defs = {
        {"terrain", cfg.terrain.enabled, stages::run_terrain},
        {"forcing", cfg.forcing.enabled, stages::run_forcing},
        {"simulate", cfg.simulate.enabled, stages::run_simulate},
        {"paramest", cfg.paramest.enabled, stages::run_paramest},
        {"nn232", cfg.nn232.enabled, stages::run_nn232},
        {"nn343", cfg.nn343.enabled, stages::run_nn343},
        {"metrics", cfg.metrics.enabled, stages::run_metrics},
    };

    auto collect_outputs = [&](const std::string& stage) {
        const std::string dir = cfg.output_dir + "/" + stage;
        if (!fs::exists(dir)) return;
        for (const auto& file : fs::recursive_directory_iterator(dir)) {
            if (!file.is_regular_file()) continue;
            const std::string rel = fs::relative(file.path(), cfg.output_dir).string();
            manifest.outputs[rel] = file_digest(file.path().string());
        }
    };

    for (const StageDef& def : defs) {
        if (!def.enabled) {
            manifest.stages.push_back({def.name, "skipped", ""});
            collect_outputs(def.name);   // pre-existing outputs still count
            continue;
        }
        try {
            def.run(cfg);
            manifest.stages.push_back({def.name, "ok", ""});
            collect_outputs(def.name);
        } catch (const std::exception& e) {
            manifest.stages.push_back({def.name, "failed", e.what()});
            manifest.save(cfg.output_dir + "/manifest.json");
            throw StageFailure(def.name, e.what());
        }
    }
    manifest.save(cfg.output_dir + "/manifest.json");
    return manifest;
}

}  // namespace hydrocal
