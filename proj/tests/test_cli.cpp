// End-to-end exercise of the command-line surface: synth a twin dataset,
// run each subcommand against it, and check exit codes and output files.
// The CLI binary path arrives as argv[1].

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what.c_str());
    if (!ok) ++failures;
}

int run(const std::string& command) {
    const int status = std::system(command.c_str());
    return status < 0 ? status : WEXITSTATUS(status);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <path-to-cli>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path dir = fs::temp_directory_path() / "hydrocal_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    const std::string quiet = " > " + d + "/stdout.txt 2>&1";

    check(run(cli + " synth --seed 11 --scenario regulated --rows 8 --cols 7 --years 4 --out " +
              d + "/twin" + quiet) == 0,
          "synth exits 0");
    check(fs::exists(dir / "twin/dem.asc"), "synth wrote dem.asc");
    check(fs::exists(dir / "twin/pipeline_config.json"), "synth wrote a pipeline config");

    check(run(cli + " delineate --dem " + d + "/twin/dem.asc --outlet 3,2 --out " + d +
              "/mask.csv" + quiet) == 0,
          "delineate exits 0");
    check(fs::exists(dir / "mask.csv"), "delineate wrote the mask");

    check(run(cli + " calibrate-forcing --reference " + d +
              "/twin/forcing_reference/temperature.csv --model " + d +
              "/twin/forcing/temperature.csv --mode add --train-years 1991..1994 --out " +
              d + "/adj.csv --apply-out " + d + "/adjusted.csv" + quiet) == 0,
          "calibrate-forcing exits 0");
    check(fs::exists(dir / "adj.csv") && fs::exists(dir / "adjusted.csv"),
          "calibrate-forcing wrote adjustment and adjusted series");

    check(run(cli + " simulate --dem " + d + "/twin/dem.asc --forcing " + d +
              "/twin/forcing_reference --stations " + d +
              "/twin/stations.csv --window 1992-01-01:1994-12-31 --out-dir " + d + quiet) == 0,
          "simulate exits 0");
    check(fs::exists(dir / "sim_st1.csv"), "simulate wrote hydrographs");

    check(run(cli + " estimate-params --obs " + d + "/twin/obs/st1.csv " + d +
              "/twin/obs/st2.csv --dem " + d + "/twin/dem.asc --forcing " + d +
              "/twin/forcing_reference --stations " + d +
              "/twin/stations.csv --sim-window 1992-01-01:1994-12-31 --iters 1 --out " + d +
              "/estimation.json" + quiet) == 0,
          "estimate-params exits 0");
    check(fs::exists(dir / "estimation.json"), "estimate-params wrote the result");

    check(run(cli + " train-nn --arch 232 --model " + d + "/sim_st1.csv --obs " + d +
              "/twin/obs/st1.csv --split even --iters 150 --seed 5 --out-network " + d +
              "/net.json --out-series " + d + "/nn.csv --out-report " + d + "/loss.csv" +
              quiet) == 0,
          "train-nn exits 0");
    check(fs::exists(dir / "net.json") && fs::exists(dir / "nn.csv"),
          "train-nn wrote network and series");

    check(run(cli + " evaluate --ref " + d + "/twin/obs/st1.csv --model " + d +
              "/sim_st1.csv --avg month --json " + d + "/report.json" + quiet) == 0,
          "evaluate exits 0");
    check(fs::exists(dir / "report.json"), "evaluate wrote the report");

    check(run(cli + " summary --series " + d + "/sim_st1.csv --decades 1990 --out-prefix " +
              d + "/sum" + quiet) == 0,
          "summary exits 0");
    check(fs::exists(dir / "sum_decadal.csv") && fs::exists(dir / "sum_annual.csv") &&
              fs::exists(dir / "sum_stats.csv"),
          "summary wrote the three CSVs");

    // Speed up the pipeline config, then drive run-pipeline through the
    // environment-variable override.
    {
        std::ifstream in(d + "/twin/pipeline_config.json");
        std::string cfg((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
        in.close();
        auto patch = [&cfg](const std::string& key, const std::string& from,
                            const std::string& to) {
            const auto at = cfg.find(key);
            const auto pos = cfg.find(from, at);
            if (pos != std::string::npos) cfg.replace(pos, from.size(), to);
        };
        patch("paramest", "\"iterations\": 5", "\"iterations\": 1");
        patch("nn232", "\"iterations\": 1000", "\"iterations\": 100");
        patch("nn343", "\"iterations\": 1000", "\"iterations\": 100");
        std::ofstream out(d + "/twin/pipeline_config.json");
        out << cfg;
    }
    check(run("HYDROCAL_CONFIG=" + d + "/twin/pipeline_config.json " + cli +
              " run-pipeline --config /nonexistent.json" + quiet) == 0,
          "run-pipeline exits 0 with the env override");
    check(fs::exists(dir / "twin/out/manifest.json"), "run-pipeline wrote the manifest");

    // A bad config must fail with a nonzero exit.
    check(run(cli + " run-pipeline --config /nonexistent.json" + quiet) != 0,
          "run-pipeline fails on a missing config");

    if (failures == 0) fs::remove_all(dir);
    std::printf("%s (%d failures)\n", failures ? "FAILED" : "OK", failures);
    return failures ? 1 : 0;
}
