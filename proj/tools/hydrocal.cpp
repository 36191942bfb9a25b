// Command-line front end for the calibration toolkit. One subcommand per
// pipeline capability; see README.md for examples.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "hydrocal/hydrocal.hpp"

namespace hc = hydrocal;

namespace {

hc::Cell parse_cell(const std::string& text) {
    hc::Cell c;
    if (std::sscanf(text.c_str(), "%d,%d", &c.row, &c.col) != 2)
        throw hc::InvalidArgument("expected row,col but got '" + text + "'");
    return c;
}

hc::DateRange parse_date_range(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw hc::InvalidArgument("expected date1:date2 but got '" + text + "'");
    return {hc::Date::parse(text.substr(0, colon)), hc::Date::parse(text.substr(colon + 1))};
}

std::pair<int, int> parse_year_range(const std::string& text) {
    int y1 = 0, y2 = 0;
    if (std::sscanf(text.c_str(), "%d..%d", &y1, &y2) == 2) return {y1, y2};
    if (std::sscanf(text.c_str(), "%d:%d", &y1, &y2) == 2) return {y1, y2};
    throw hc::InvalidArgument("expected y1..y2 but got '" + text + "'");
}

void print_report(const std::string& label, const hc::MetricsReport& r) {
    auto opt = [](const std::optional<double>& v) {
        return v ? std::to_string(*v) : std::string("undefined");
    };
    std::cout << label << ": n=" << r.n << " DIFF%=" << opt(r.diff_pct)
              << " NSE=" << opt(r.nse) << " RMSD=" << r.rmsd << " BIAS=" << r.bias
              << " COR=" << opt(r.cor)
              << (r.satisfactory ? " satisfactory" : " not-satisfactory") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streamflow calibration toolkit"};
    app.require_subcommand(1);

    // ---- delineate ----
    std::string dem_path, boundary_path, out_path = "catchment.csv";
    std::string outlet_text;
    double raise_m = 100.0;
    auto* delineate = app.add_subcommand("delineate", "Delineate a catchment on a DEM");
    delineate->add_option("--dem", dem_path, "ESRI ASCII DEM")->required();
    delineate->add_option("--outlet", outlet_text, "Outlet cell as row,col")->required();
    delineate->add_option("--boundary", boundary_path, "Boundary cell CSV to enforce first");
    delineate->add_option("--raise", raise_m, "Boundary raise in metres");
    delineate->add_option("--out", out_path, "Output mask CSV");

    // ---- calibrate-forcing ----
    std::string ref_csv, model_csv, mode_text = "add", years_text;
    std::string adj_out = "adjustment.csv", applied_out;
    auto* calf = app.add_subcommand("calibrate-forcing",
                                    "Derive a seasonal adjustment from reference/model series");
    calf->add_option("--reference", ref_csv, "Reference series CSV")->required();
    calf->add_option("--model", model_csv, "Model series CSV")->required();
    calf->add_option("--mode", mode_text, "add or mul")->required();
    calf->add_option("--train-years", years_text, "Training years y1..y2")->required();
    calf->add_option("--out", adj_out, "Adjustment CSV output");
    calf->add_option("--apply-out", applied_out, "Write the adjusted model series here");

    // ---- simulate ----
    std::string forcing_dir, params_path, stations_path, window_text, out_dir = ".";
    auto* sim = app.add_subcommand("simulate", "Run the process model");
    sim->add_option("--dem", dem_path, "ESRI ASCII DEM")->required();
    sim->add_option("--forcing", forcing_dir, "Forcing CSV directory")->required();
    sim->add_option("--params", params_path, "Parameter JSON (omit for defaults)");
    sim->add_option("--stations", stations_path, "Station CSV (id,row,col)")->required();
    sim->add_option("--window", window_text, "Window date1:date2")->required();
    sim->add_option("--out-dir", out_dir, "Output directory");

    // ---- estimate-params ----
    std::vector<std::string> obs_paths;
    std::string est_window_text = "05-01:10-31", est_out = "estimation.json";
    int est_iters = 5;
    auto* est = app.add_subcommand("estimate-params", "Estimate model parameters");
    est->add_option("--obs", obs_paths, "Observation CSVs, one per station, in station order")
        ->required();
    est->add_option("--dem", dem_path, "ESRI ASCII DEM")->required();
    est->add_option("--forcing", forcing_dir, "Forcing CSV directory")->required();
    est->add_option("--stations", stations_path, "Station CSV (id,row,col)")->required();
    est->add_option("--sim-window", window_text, "Simulation window date1:date2")->required();
    est->add_option("--window", est_window_text, "Objective window MM-DD:MM-DD");
    est->add_option("--iters", est_iters, "Estimation iterations");
    est->add_option("--out", est_out, "Estimation JSON output");

    // ---- train-nn ----
    std::string arch_text = "232", split_text = "even", rank_text = "off";
    std::string net_out = "network.json", series_out = "nn_output.csv",
                report_out = "training_report.csv";
    int nn_iters = 1000;
    uint64_t nn_seed = 0;
    auto* nn = app.add_subcommand("train-nn", "Train a post-processing network");
    nn->add_option("--arch", arch_text, "232 or 343")->required();
    nn->add_option("--model", model_csv, "Model daily series CSV")->required();
    nn->add_option("--obs", ref_csv, "Observed daily series CSV")->required();
    nn->add_option("--split", split_text, "Training years: even or odd");
    nn->add_option("--rank-match", rank_text, "on or off");
    nn->add_option("--iters", nn_iters, "Training iterations");
    nn->add_option("--seed", nn_seed, "Initialization seed");
    nn->add_option("--out-network", net_out, "Network JSON output");
    nn->add_option("--out-series", series_out, "Calibrated series output");
    nn->add_option("--out-report", report_out, "Loss curve CSV output");

    // ---- evaluate ----
    std::string avg_text = "day", eval_json;
    auto* eval = app.add_subcommand("evaluate", "Compare a model series to a reference");
    eval->add_option("--ref", ref_csv, "Reference series CSV")->required();
    eval->add_option("--model", model_csv, "Model series CSV")->required();
    eval->add_option("--avg", avg_text, "day, month, or year");
    eval->add_option("--json", eval_json, "Also write the report as JSON here");

    // ---- synth ----
    std::string scenario_text = "natural", synth_dir = "twin";
    uint64_t synth_seed = 1;
    double noise = 0.0, temp_bias = 0.0, precip_bias = 1.0;
    int years = 4, rows = 15, cols = 14;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic twin dataset");
    synth->add_option("--seed", synth_seed, "Root seed");
    synth->add_option("--scenario", scenario_text, "natural, regulated, or asynchronous");
    synth->add_option("--out", synth_dir, "Output directory");
    synth->add_option("--noise", noise, "Relative observation noise");
    synth->add_option("--years", years, "Forcing span in years");
    synth->add_option("--rows", rows, "Grid rows");
    synth->add_option("--cols", cols, "Grid cols");
    synth->add_option("--temp-bias", temp_bias, "Model temperature bias (degC)");
    synth->add_option("--precip-bias", precip_bias, "Model precipitation factor");

    // ---- run-pipeline ----
    std::string config_path = "pipeline_config.json";
    auto* runp = app.add_subcommand("run-pipeline", "Run every enabled stage");
    runp->add_option("--config", config_path,
                     "Pipeline config JSON (HYDROCAL_CONFIG overrides)");

    // ---- summary ----
    std::string series_csv, decades_text, prefix = "summary";
    auto* summ = app.add_subcommand("summary", "Decadal/annual summary of a series");
    summ->add_option("--series", series_csv, "Daily series CSV")->required();
    summ->add_option("--decades", decades_text, "Comma-separated decade start years")
        ->required();
    summ->add_option("--out-prefix", prefix, "Output file prefix");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*delineate) {
            hc::DemGrid dem = hc::read_esri_ascii(dem_path);
            if (!boundary_path.empty()) {
                const auto boundary = hc::read_cell_csv(boundary_path);
                auto enforced = hc::enforce_boundary(dem, boundary, raise_m);
                dem = std::move(enforced.grid);
                if (!enforced.skipped.empty())
                    std::cerr << "skipped " << enforced.skipped.size()
                              << " nodata boundary cells\n";
            }
            const hc::FlowGrid flow =
                hc::flow_accumulation(hc::flow_directions(hc::fill_depressions(dem)));
            const hc::CatchmentMask mask =
                hc::delineate_catchment(flow, parse_cell(outlet_text));
            hc::write_mask_csv(out_path, mask);
            std::cout << "catchment: " << mask.cell_count() << " cells, " << mask.area_km2
                      << " km^2 -> " << out_path << "\n";
        } else if (*calf) {
            const hc::AdjustmentMode mode = hc::parse_adjustment_mode(mode_text);
            const hc::Variable variable = mode == hc::AdjustmentMode::multiplicative
                                              ? hc::Variable::wind_speed
                                              : hc::Variable::temperature;
            const auto [y1, y2] = parse_year_range(years_text);
            const hc::ForcingSeries reference = hc::read_forcing_csv(ref_csv, variable);
            const hc::ForcingSeries model = hc::read_forcing_csv(model_csv, variable);
            const hc::DailyAdjustment adj = hc::derive_adjustment(
                hc::fit_sinusoid(hc::doy_climatology(reference, y1, y2)),
                hc::fit_sinusoid(hc::doy_climatology(model, y1, y2)), mode);
            hc::write_adjustment_csv(adj_out, adj);
            std::cout << "adjustment -> " << adj_out << "\n";
            if (!applied_out.empty()) {
                hc::write_forcing_csv(applied_out, hc::apply_adjustment(model, adj));
                std::cout << "adjusted series -> " << applied_out << "\n";
            }
        } else if (*sim) {
            const hc::FlowGrid flow = hc::flow_accumulation(
                hc::flow_directions(hc::fill_depressions(hc::read_esri_ascii(dem_path))));
            hc::SimulationForcing forcing;
            forcing.precipitation = hc::read_forcing_csv(forcing_dir + "/precipitation.csv",
                                                         hc::Variable::precipitation);
            forcing.temperature = hc::read_forcing_csv(forcing_dir + "/temperature.csv",
                                                       hc::Variable::temperature);
            hc::ParameterSet params = hc::ParameterSet::defaults();
            if (!params_path.empty()) {
                std::ifstream in(params_path);
                if (!in) throw hc::IoError("cannot open " + params_path);
                nlohmann::json j;
                in >> j;
                params = hc::parameters_from_json(
                    j.contains("parameters") ? j["parameters"] : j);
            }
            std::vector<hc::Station> stations;
            for (const auto& e : hc::read_station_csv(stations_path))
                stations.push_back(e.station);
            const hc::SimulationResult result = hc::simulate(
                forcing, params, flow, stations, parse_date_range(window_text));
            for (const hc::StreamflowSeries& s : result.stations) {
                const std::string path = out_dir + "/sim_" + s.station_id + ".csv";
                hc::write_flow_csv(path, s);
                std::cout << "hydrograph -> " << path << "\n";
            }
            const double residual = result.precip_m3 - result.et_m3 - result.outlet_m3 -
                                    (result.storage_end_m3 - result.storage_start_m3);
            std::cout << "water balance residual: " << residual << " m^3 of "
                      << result.precip_m3 << " m^3 precipitation\n";
        } else if (*est) {
            const hc::FlowGrid flow = hc::flow_accumulation(
                hc::flow_directions(hc::fill_depressions(hc::read_esri_ascii(dem_path))));
            hc::SimulationForcing forcing;
            forcing.precipitation = hc::read_forcing_csv(forcing_dir + "/precipitation.csv",
                                                         hc::Variable::precipitation);
            forcing.temperature = hc::read_forcing_csv(forcing_dir + "/temperature.csv",
                                                       hc::Variable::temperature);
            std::vector<hc::Station> stations;
            for (const auto& e : hc::read_station_csv(stations_path))
                stations.push_back(e.station);
            if (obs_paths.size() != stations.size())
                throw hc::InvalidArgument("need one --obs file per station");
            const hc::DateRange window = parse_date_range(window_text);
            std::vector<hc::StreamflowSeries> observations;
            for (size_t i = 0; i < obs_paths.size(); ++i) {
                hc::StreamflowSeries obs = hc::read_flow_csv(obs_paths[i], stations[i].id);
                hc::StreamflowSeries clipped;
                clipped.station_id = obs.station_id;
                for (size_t k = 0; k < obs.size(); ++k) {
                    if (!window.contains(obs.dates[k])) continue;
                    clipped.dates.push_back(obs.dates[k]);
                    clipped.values.push_back(obs.values[k]);
                    clipped.valid.push_back(obs.valid[k]);
                }
                observations.push_back(std::move(clipped));
            }
            const hc::ObjectiveSpec spec = hc::build_objective(
                observations, hc::MonthDayWindow::parse(est_window_text));
            hc::SeriesSimulator simulator = [&](const hc::ParameterSet& p) {
                return hc::simulate(forcing, p, flow, stations, window).stations;
            };
            hc::EstimateOptions opts;
            opts.max_iterations = est_iters;
            const hc::EstimationResult result =
                hc::estimate(simulator, spec, hc::ParameterSet::defaults(), opts);
            std::ofstream out(est_out);
            out << hc::estimation_to_json(result).dump(2) << '\n';
            for (const auto& entry : result.trace.entries)
                std::cout << "phi=" << entry.phi << " (" << entry.model_runs << " runs)\n";
            std::cout << "status: " << hc::estimate_status_name(result.status) << " -> "
                      << est_out << "\n";
        } else if (*nn) {
            const hc::NetArch arch = hc::parse_arch(arch_text);
            const hc::StreamflowSeries model_series = hc::read_flow_csv(model_csv, "model");
            const hc::StreamflowSeries obs = hc::read_flow_csv(ref_csv, "obs");
            const int parity = split_text == "odd" ? 1 : 0;
            const bool rank = rank_text == "on";
            const hc::stages::NnTrainingData data =
                hc::stages::nn_training_data(model_series, obs, parity, rank);
            hc::TrainOptions opts;
            opts.iterations = nn_iters;
            opts.seed = nn_seed;
            const hc::TrainedNetwork trained =
                hc::train_network(arch, data.inputs, data.targets, opts);
            std::ofstream out(net_out);
            out << hc::network_to_json(trained).dump(2) << '\n';
            hc::write_flow_csv(series_out, hc::apply_network(trained, data.inputs));
            hc::stages::write_loss_curve(report_out, trained, split_text);
            std::cout << "final loss " << trained.loss_curve.back() << " -> " << net_out
                      << ", " << series_out << ", " << report_out << "\n";
        } else if (*eval) {
            const hc::StreamflowSeries reference = hc::read_flow_csv(ref_csv, "ref");
            const hc::StreamflowSeries model = hc::read_flow_csv(model_csv, "model");
            const hc::MetricsReport r = hc::evaluate(
                {reference, model, hc::DataModel::target}, hc::parse_averaging(avg_text));
            print_report(avg_text, r);
            if (!eval_json.empty()) {
                std::ofstream out(eval_json);
                out << hc::report_to_json(r).dump(2) << '\n';
            }
        } else if (*synth) {
            hc::TwinOptions opts;
            opts.obs_noise_rel = noise;
            opts.years = years;
            opts.rows = rows;
            opts.cols = cols;
            opts.temp_bias_c = temp_bias;
            opts.precip_bias_factor = precip_bias;
            const hc::TwinBundle bundle =
                hc::synth_twin(synth_seed, hc::parse_scenario(scenario_text), opts);
            hc::save_twin(bundle, synth_dir);
            std::cout << "twin dataset (" << scenario_text << ", seed " << synth_seed
                      << ") -> " << synth_dir << "\n";
        } else if (*runp) {
            if (const char* env = std::getenv("HYDROCAL_CONFIG")) config_path = env;
            const hc::PipelineConfig cfg = hc::PipelineConfig::load(config_path);
            try {
                const hc::RunManifest manifest = hc::run_pipeline(cfg);
                std::cout << "pipeline ok, " << manifest.outputs.size() << " outputs -> "
                          << cfg.output_dir << "/manifest.json\n";
            } catch (const hc::StageFailure& f) {
                std::cerr << "pipeline failed at stage " << f.stage << ": " << f.what()
                          << "\n";
                return 2;
            }
        } else if (*summ) {
            std::vector<int> decades;
            std::stringstream ss(decades_text);
            std::string tok;
            while (std::getline(ss, tok, ',')) decades.push_back(std::stoi(tok));
            const hc::DecadalSummary s =
                hc::decadal_summary(hc::read_flow_csv(series_csv), decades);
            hc::write_summary_csv(prefix, s);
            std::cout << "daily mean " << s.daily_mean << ", std " << s.daily_std << " -> "
                      << prefix << "_{decadal,annual,stats}.csv\n";
            for (int d : s.omitted) std::cerr << "decade " << d << " omitted: no data\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
