#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "hydrocal/paramest.hpp"
#include "hydrocal/synth.hpp"
#include "oracles.hpp"

using namespace hydrocal;

namespace {

Eigen::VectorXd to_vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(v.size());
    std::copy(v.begin(), v.end(), out.data());
    return out;
}

// A linear test simulator U = X p + u0 around fixed sensitivities; the
// offset keeps simulated flows positive without touching the Jacobian.
struct LinearSimulator {
    Eigen::MatrixXd x;
    Eigen::VectorXd operator()(const ParameterSet& p) const {
        Eigen::VectorXd pv(kParamCount);
        for (int i = 0; i < kParamCount; ++i) pv[i] = p[i];
        return (x * pv).array() + 500.0;
    }
};

Eigen::MatrixXd random_sensitivities(std::mt19937_64& rng, int n_obs) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd x(n_obs, kParamCount);
    for (int r = 0; r < n_obs; ++r)
        for (int c = 0; c < kParamCount; ++c) x(r, c) = g(rng);
    return x;
}

ParameterSet mid_range() {
    ParameterSet p;
    for (int i = 0; i < kParamCount; ++i)
        p[i] = 0.5 * (kParamTable[i].lo + kParamTable[i].hi);
    return p;
}

ObjectiveSpec spec_from_vectors(const Eigen::VectorXd& obs, const Eigen::VectorXd& q) {
    // Wrap plain vectors as a single-station daily series starting mid-year.
    ObjectiveSpec spec;
    StreamflowSeries s;
    s.station_id = "v";
    for (Eigen::Index i = 0; i < obs.size(); ++i) {
        s.dates.push_back(Date(2001, 6, 1) + int(i));
        s.values.push_back(obs[i]);
        s.valid.push_back(1);
    }
    spec.observations = {s};
    spec.window = MonthDayWindow{1, 1, 12, 31};
    for (Eigen::Index i = 0; i < obs.size(); ++i)
        spec.samples.push_back({0, int(i)});
    spec.q_diag = q;
    return spec;
}

}  // namespace

TEST_CASE("phi_p is zero iff prediction equals observation") {
    const auto c = to_vec({1.0, 2.0, 3.0});
    CHECK(phi_p(c, c, to_vec({1, 1, 1})) == 0.0);
}

TEST_CASE("phi_p weights squared residuals by the inverse variance") {
    CHECK(phi_p(to_vec({1, 2}), to_vec({0, 0}), to_vec({1, 1})) == Catch::Approx(5.0));
    CHECK(phi_p(to_vec({1, 2}), to_vec({0, 0}), to_vec({1, 4})) == Catch::Approx(2.0));
}

TEST_CASE("phi_p rejects mismatched lengths") {
    CHECK_THROWS_AS(phi_p(to_vec({1, 2}), to_vec({1}), to_vec({1, 1})), ShapeError);
}

TEST_CASE("jacobian of a linear simulator is its matrix") {
    std::mt19937_64 rng(1);
    const LinearSimulator sim{random_sensitivities(rng, 15)};
    const ParameterSet p = mid_range();
    const Eigen::VectorXd base = sim(p);
    const Eigen::MatrixXd j = jacobian(sim, p, 0.01, base);
    for (int r = 0; r < j.rows(); ++r)
        for (int c = 0; c < j.cols(); ++c)
            CHECK(j(r, c) == Catch::Approx(sim.x(r, c)).margin(1e-8));
}

TEST_CASE("jacobian reports a zero column for an insensitive parameter") {
    std::mt19937_64 rng(2);
    Eigen::MatrixXd x = random_sensitivities(rng, 12);
    x.col(3).setZero();
    const LinearSimulator sim{x};
    const ParameterSet p = mid_range();
    const Eigen::MatrixXd j = jacobian(sim, p, 0.01, sim(p));
    CHECK(j.col(3).norm() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("jacobian flips the step at an upper bound") {
    std::mt19937_64 rng(3);
    const LinearSimulator sim{random_sensitivities(rng, 12)};
    ParameterSet p = mid_range();
    p[0] = kParamTable[0].hi;   // at the top of the range
    const Eigen::MatrixXd j = jacobian(sim, p, 0.01, sim(p));
    CHECK(j.col(0).isApprox(sim.x.col(0), 1e-8));   // still the right derivative
}

TEST_CASE("jacobian of the process model matches central differences") {
    const TwinBundle twin = synth_twin(77, TwinScenario::natural,
                                       TwinOptions{.rows = 6, .cols = 6, .years = 2});
    const DemGrid filled = fill_depressions(twin.dem);
    const FlowGrid flow = flow_accumulation(flow_directions(filled));
    const DateRange window = twin.observation_window;
    auto sim_series = [&](const ParameterSet& p) {
        return simulate(twin.reference_forcing, p, flow, twin.stations, window).stations;
    };
    ObjectiveSpec spec =
        build_objective(sim_series(twin.truth_params), MonthDayWindow{5, 1, 10, 31});
    VectorSimulator sim = [&](const ParameterSet& p) {
        return spec.prediction_vector(sim_series(p));
    };

    const ParameterSet p = twin.truth_params;
    const double rel_step = 0.01;
    const Eigen::MatrixXd j = jacobian(sim, p, rel_step, sim(p));
    for (int k = 0; k < kParamCount; ++k) {
        const double delta = rel_step * (kParamTable[k].hi - kParamTable[k].lo);
        ParameterSet lo = p, hi = p;
        lo[k] -= delta / 2;
        hi[k] += delta / 2;
        const Eigen::VectorXd central = (sim(hi) - sim(lo)) / delta;
        const double denom = std::max(central.norm(), 1e-12);
        CHECK((j.col(k) - central).norm() / denom < 0.05);
    }
}

TEST_CASE("svd_step solves the identity system with per-component clamping") {
    const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(kParamCount, kParamCount);
    const Eigen::VectorXd r = Eigen::VectorXd::Ones(kParamCount);
    const Eigen::VectorXd q = Eigen::VectorXd::Ones(kParamCount);
    const Eigen::VectorXd dp = svd_step(j, r, q);
    for (int k = 0; k < kParamCount; ++k) {
        const double limit = 0.5 * (kParamTable[k].hi - kParamTable[k].lo);
        CHECK(dp[k] == Catch::Approx(std::min(1.0, limit)));
    }
}

TEST_CASE("svd_step of a rank-1 system stays in the row space") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd u(20), v(kParamCount);
    for (int i = 0; i < 20; ++i) u[i] = g(rng);
    for (int i = 0; i < kParamCount; ++i) v[i] = g(rng);
    v.normalize();
    const Eigen::MatrixXd j = u * v.transpose();
    const Eigen::VectorXd r = 0.01 * u;   // small: no clamping
    const Eigen::VectorXd dp = svd_step(j, r, Eigen::VectorXd::Ones(20));
    const Eigen::VectorXd orthogonal = dp - dp.dot(v) * v;
    CHECK(orthogonal.norm() == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("svd_step matches a normal-equations pseudoinverse oracle") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd j = random_sensitivities(rng, 20);
        Eigen::VectorXd r(20), q(20);
        std::normal_distribution<double> g(0.0, 0.01);
        std::uniform_real_distribution<double> qv(0.5, 2.0);
        for (int i = 0; i < 20; ++i) {
            r[i] = g(rng);
            q[i] = qv(rng);
        }
        const Eigen::VectorXd dp = svd_step(j, r, q);
        const Eigen::VectorXd w = q.cwiseSqrt().cwiseInverse();
        const Eigen::MatrixXd jw = w.asDiagonal() * j;
        const Eigen::VectorXd rw = w.asDiagonal() * r;
        const Eigen::VectorXd expected =
            (jw.transpose() * jw).ldlt().solve(jw.transpose() * rw);
        CHECK((dp - expected).norm() / expected.norm() < 1e-6);
    }
}

TEST_CASE("svd_step reports a fully truncated system") {
    const Eigen::MatrixXd j = Eigen::MatrixXd::Zero(12, kParamCount);
    CHECK_THROWS_AS(
        svd_step(j, Eigen::VectorXd::Ones(12), Eigen::VectorXd::Ones(12)),
        SingularSystem);
}

TEST_CASE("estimate converges immediately when started at the truth") {
    const TwinBundle twin = synth_twin(11, TwinScenario::natural,
                                       TwinOptions{.rows = 6, .cols = 6, .years = 2});
    const FlowGrid flow = flow_accumulation(flow_directions(fill_depressions(twin.dem)));
    SeriesSimulator sim = [&](const ParameterSet& p) {
        return simulate(twin.reference_forcing, p, flow, twin.stations,
                        twin.observation_window)
            .stations;
    };
    const ObjectiveSpec spec =
        build_objective(twin.observations, MonthDayWindow{5, 1, 10, 31});
    const EstimationResult result = estimate(sim, spec, twin.truth_params);
    CHECK(result.status == EstimateStatus::converged);
    REQUIRE(result.trace.entries.size() == 1);
    CHECK(result.trace.entries[0].phi == 0.0);
}

TEST_CASE("identical-twin estimation reduces phi by 90 percent") {
    const TwinBundle twin = synth_twin(19, TwinScenario::natural,
                                       TwinOptions{.rows = 7, .cols = 7, .years = 2});
    const FlowGrid flow = flow_accumulation(flow_directions(fill_depressions(twin.dem)));
    SeriesSimulator sim = [&](const ParameterSet& p) {
        return simulate(twin.reference_forcing, p, flow, twin.stations,
                        twin.observation_window)
            .stations;
    };
    const ObjectiveSpec spec =
        build_objective(twin.observations, MonthDayWindow{5, 1, 10, 31});
    const EstimationResult result = estimate(sim, spec, ParameterSet::defaults());
    const double initial = result.trace.entries.front().phi;
    const double final_phi = result.trace.entries.back().phi;
    CHECK(final_phi <= 0.1 * initial);
    // Every accepted iteration after the first costs 9 Jacobian runs plus
    // at least one trial.
    for (size_t i = 1; i < result.trace.entries.size(); ++i)
        CHECK(result.trace.entries[i].model_runs >= 10);
}

TEST_CASE("estimation reaches the noise floor on a linear simulator") {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd x = random_sensitivities(rng, 60);
    const LinearSimulator sim{x};
    const ParameterSet truth = mid_range();
    std::normal_distribution<double> g(0.0, 0.5);
    Eigen::VectorXd noise(60);
    for (int i = 0; i < 60; ++i) noise[i] = g(rng);
    const Eigen::VectorXd obs = sim(truth) + noise;
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(60, 0.25);

    const ObjectiveSpec spec = spec_from_vectors(obs, q);
    VectorSimulator vsim = [&](const ParameterSet& p) { return sim(p); };
    ParameterSet p0 = truth;
    p0[0] = kParamTable[0].lo + 0.1;
    p0[5] = kParamTable[5].hi - 0.2;
    const EstimationResult result = estimate(vsim, spec, p0);

    double noise_floor = 0.0;
    for (int i = 0; i < 60; ++i) noise_floor += noise[i] * noise[i] / q[i];
    CHECK(result.trace.entries.back().phi <= 2.0 * noise_floor);
}

TEST_CASE("accepted phi is non-increasing and parameters stay in bounds") {
    const TwinBundle twin = synth_twin(23, TwinScenario::natural,
                                       TwinOptions{.rows = 6, .cols = 6, .years = 2});
    const FlowGrid flow = flow_accumulation(flow_directions(fill_depressions(twin.dem)));
    SeriesSimulator sim = [&](const ParameterSet& p) {
        return simulate(twin.reference_forcing, p, flow, twin.stations,
                        twin.observation_window)
            .stations;
    };
    const ObjectiveSpec spec =
        build_objective(twin.observations, MonthDayWindow{5, 1, 10, 31});
    const EstimationResult result = estimate(sim, spec, ParameterSet::defaults());
    for (size_t i = 1; i < result.trace.entries.size(); ++i)
        CHECK(result.trace.entries[i].phi <= result.trace.entries[i - 1].phi);
    for (const TraceEntry& e : result.trace.entries)
        CHECK_NOTHROW(e.params.validate());
}

TEST_CASE("one iteration solves a linear problem to optimality") {
    std::mt19937_64 rng(7);
    const Eigen::MatrixXd x = random_sensitivities(rng, 40);
    const LinearSimulator sim{x};
    const ParameterSet truth = mid_range();
    const Eigen::VectorXd obs = sim(truth);
    const Eigen::VectorXd q = Eigen::VectorXd::Ones(40);

    ParameterSet p0 = truth;
    p0[2] += 0.1;
    p0[7] -= 0.1;
    VectorSimulator vsim = [&](const ParameterSet& p) { return sim(p); };
    EstimateOptions opts;
    opts.max_iterations = 1;
    const EstimationResult result =
        estimate(vsim, spec_from_vectors(obs, q), p0, opts);
    // Residual orthogonal to the Jacobian columns at the optimum.
    const Eigen::VectorXd residual = obs - sim(result.params);
    CHECK((x.transpose() * residual).norm() < 1e-6);
}

TEST_CASE("scaling Q uniformly leaves the parameter trajectory unchanged") {
    const TwinBundle twin = synth_twin(29, TwinScenario::natural,
                                       TwinOptions{.rows = 6, .cols = 6, .years = 2});
    const FlowGrid flow = flow_accumulation(flow_directions(fill_depressions(twin.dem)));
    SeriesSimulator sim = [&](const ParameterSet& p) {
        return simulate(twin.reference_forcing, p, flow, twin.stations,
                        twin.observation_window)
            .stations;
    };
    ObjectiveSpec spec = build_objective(twin.observations, MonthDayWindow{5, 1, 10, 31});
    EstimateOptions opts;
    opts.max_iterations = 3;
    const EstimationResult a = estimate(sim, spec, ParameterSet::defaults(), opts);
    spec.q_diag *= 37.5;
    const EstimationResult b = estimate(sim, spec, ParameterSet::defaults(), opts);
    REQUIRE(a.trace.entries.size() == b.trace.entries.size());
    for (size_t i = 0; i < a.trace.entries.size(); ++i)
        for (int k = 0; k < kParamCount; ++k)
            CHECK(a.trace.entries[i].params[k] ==
                  Catch::Approx(b.trace.entries[i].params[k]).margin(1e-10));
}

TEST_CASE("parameters on a range limit are reported") {
    ParameterSet p = mid_range();
    p[4] = kParamTable[4].hi;
    p[7] = kParamTable[7].lo;
    const auto names = p.at_bounds();
    CHECK(names == std::vector<std::string>{"ovroughrtfac", "slope"});
}

TEST_CASE("parameter JSON round-trips") {
    const ParameterSet p = mid_range();
    const ParameterSet back = parameters_from_json(parameters_to_json(p));
    for (int i = 0; i < kParamCount; ++i) CHECK(back[i] == p[i]);
}

TEST_CASE("build_objective rejects too few observations") {
    StreamflowSeries tiny = make_daily_series("t", Date(2001, 6, 1), {1.0, 2.0, 3.0});
    CHECK_THROWS_AS(build_objective({tiny}, MonthDayWindow{5, 1, 10, 31}),
                    InsufficientData);
}
