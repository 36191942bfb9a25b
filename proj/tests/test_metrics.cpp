#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "hydrocal/metrics.hpp"
#include "oracles.hpp"

using namespace hydrocal;

namespace {

StreamflowSeries series_of(std::vector<double> values, Date start = Date(2001, 1, 1)) {
    return make_daily_series("s", start, std::move(values));
}

ComparisonPair pair_of(std::vector<double> c, std::vector<double> u) {
    return {series_of(std::move(c)), series_of(std::move(u)), DataModel::target};
}

}  // namespace

TEST_CASE("a perfect representation scores perfectly") {
    const MetricsReport r = evaluate(pair_of({1, 2, 3}, {1, 2, 3}), Averaging::day);
    REQUIRE(r.diff_pct);
    REQUIRE(r.nse);
    REQUIRE(r.cor);
    CHECK(*r.diff_pct == 0.0);
    CHECK(*r.nse == 1.0);
    CHECK(r.rmsd == 0.0);
    CHECK(r.bias == 0.0);
    CHECK(*r.cor == Catch::Approx(1.0));
    CHECK(r.satisfactory);
    CHECK(r.n == 3);
}

TEST_CASE("the constant predictor scores NSE exactly zero") {
    const MetricsReport r = evaluate(pair_of({1, 2, 3}, {2, 2, 2}), Averaging::day);
    REQUIRE(r.diff_pct);
    REQUIRE(r.nse);
    CHECK(*r.diff_pct == Catch::Approx(100.0 * 2.0 / 6.0));
    CHECK(*r.nse == 0.0);   // exact
    CHECK(r.rmsd == Catch::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(r.bias == 0.0);
    CHECK_FALSE(r.cor);   // var(U) = 0
    CHECK_FALSE(r.satisfactory);
}

TEST_CASE("the satisfactory classifier flips at both boundaries") {
    // NSE boundary with negligible DIFF: var(C) = 2, squared error 1.
    const MetricsReport at_nse =
        evaluate(pair_of({100, 102}, {101, 102}), Averaging::day);
    REQUIRE(at_nse.nse);
    CHECK(*at_nse.nse == Catch::Approx(0.5));
    CHECK_FALSE(at_nse.satisfactory);   // 0.5 is not > 0.5

    const MetricsReport above_nse =
        evaluate(pair_of({100, 102}, {100.9, 102}), Averaging::day);
    REQUIRE(above_nse.nse);
    CHECK(*above_nse.nse > 0.5);
    CHECK(above_nse.satisfactory);

    // DIFF boundary with high NSE: sum|C| = 100, sum|U-C| = 15.
    const MetricsReport at_diff = evaluate(
        pair_of({10, 20, 30, 40}, {13.75, 23.75, 33.75, 43.75}), Averaging::day);
    REQUIRE(at_diff.diff_pct);
    CHECK(*at_diff.diff_pct == Catch::Approx(15.0));
    REQUIRE(at_diff.nse);
    CHECK(*at_diff.nse > 0.5);
    CHECK_FALSE(at_diff.satisfactory);   // 15 is not < 15

    const MetricsReport below_diff = evaluate(
        pair_of({10, 20, 30, 40}, {13.7, 23.7, 33.7, 43.7}), Averaging::day);
    REQUIRE(below_diff.diff_pct);
    CHECK(*below_diff.diff_pct < 15.0);
    CHECK(below_diff.satisfactory);

    // NSE 0.6-style cases from either side of the DIFF rule.
    const MetricsReport bad = evaluate(
        pair_of({10, 20, 30, 40}, {15, 25, 35, 45}), Averaging::day);   // DIFF 20%
    REQUIRE(bad.nse);
    CHECK(*bad.nse > 0.5);
    CHECK_FALSE(bad.satisfactory);
    const MetricsReport good = evaluate(
        pair_of({10, 20, 30, 40}, {12.5, 22.5, 32.5, 42.5}), Averaging::day);  // DIFF 10%
    CHECK(good.satisfactory);
}

TEST_CASE("undefined metrics are reported independently") {
    // Constant zero reference: DIFF, NSE, and COR all undefined; RMSD and
    // BIAS still come out.
    const MetricsReport r = evaluate(pair_of({0, 0}, {1, 2}), Averaging::day);
    CHECK_FALSE(r.diff_pct);
    CHECK_FALSE(r.nse);
    CHECK_FALSE(r.cor);
    CHECK(r.rmsd == Catch::Approx(std::sqrt(2.5)));
    CHECK(r.bias == Catch::Approx(1.5));
    CHECK_FALSE(r.satisfactory);

    // Constant nonzero reference: DIFF defined, NSE/COR undefined.
    const MetricsReport r2 = evaluate(pair_of({2, 2}, {1, 2}), Averaging::day);
    REQUIRE(r2.diff_pct);
    CHECK(*r2.diff_pct == Catch::Approx(25.0));
    CHECK_FALSE(r2.nse);
    CHECK_FALSE(r2.cor);
}

TEST_CASE("metrics match the naive oracle on random pairs") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> uni(0.0, 100.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> c(30), u(30);
        for (int i = 0; i < 30; ++i) {
            c[i] = uni(rng);
            u[i] = uni(rng);
        }
        const MetricsReport r = evaluate(pair_of(c, u), Averaging::day);
        const oracles::NaiveMetrics m = oracles::naive_metrics(c, u);
        REQUIRE(r.diff_pct);
        REQUIRE(r.nse);
        REQUIRE(r.cor);
        CHECK(oracles::rel_diff(*r.diff_pct, m.diff_pct) < 1e-10);
        CHECK(oracles::rel_diff(*r.nse, m.nse) < 1e-10);
        CHECK(oracles::rel_diff(r.rmsd, m.rmsd) < 1e-10);
        CHECK(oracles::rel_diff(r.bias, m.bias) < 1e-10);
        CHECK(oracles::rel_diff(*r.cor, m.cor) < 1e-10);
    }
}

TEST_CASE("metrics use only jointly valid days") {
    StreamflowSeries c = series_of({1, 2, 3, 4});
    StreamflowSeries u = series_of({1, 9, 3, 9});
    c.valid[3] = 0;
    u.valid[1] = 0;
    const MetricsReport r = evaluate({c, u, DataModel::target}, Averaging::day);
    CHECK(r.n == 2);   // days 0 and 2 only
    CHECK(r.rmsd == 0.0);
}

TEST_CASE("correlation is invariant under positive affine transforms, NSE is not") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(1.0, 50.0);
    std::vector<double> c(40), u(40);
    for (int i = 0; i < 40; ++i) {
        c[i] = uni(rng);
        u[i] = uni(rng);
    }
    std::vector<double> u_affine(40);
    for (int i = 0; i < 40; ++i) u_affine[i] = 2.5 * u[i] + 7.0;
    const MetricsReport base = evaluate(pair_of(c, u), Averaging::day);
    const MetricsReport affine = evaluate(pair_of(c, u_affine), Averaging::day);
    REQUIRE(base.cor);
    REQUIRE(affine.cor);
    CHECK(*affine.cor == Catch::Approx(*base.cor).margin(1e-12));
    CHECK(*affine.nse != *base.nse);
    CHECK(*affine.diff_pct != *base.diff_pct);
}

TEST_CASE("monthly averaging of monthly-constant series equals daily metrics") {
    // Three months of constant values, trimmed to 20 valid days each so the
    // day and month sample weights agree.
    StreamflowSeries c = series_of(std::vector<double>(90, 0.0));
    StreamflowSeries u = series_of(std::vector<double>(90, 0.0));
    const double cm[3] = {5, 9, 2}, um[3] = {6, 7, 3};
    for (size_t i = 0; i < c.size(); ++i) {
        const int m = int(c.dates[i].month()) - 1;
        c.values[i] = cm[m];
        u.values[i] = um[m];
        if (c.dates[i].day() > 20) c.valid[i] = u.valid[i] = 0;
    }
    const MetricsReport daily = evaluate({c, u, DataModel::target}, Averaging::day);
    const MetricsReport monthly = evaluate({c, u, DataModel::target}, Averaging::month);
    REQUIRE(monthly.n == 3);
    REQUIRE(daily.n == 60);
    CHECK(*monthly.diff_pct == Catch::Approx(*daily.diff_pct).margin(1e-12));
    CHECK(*monthly.nse == Catch::Approx(*daily.nse).margin(1e-12));
    CHECK(*monthly.cor == Catch::Approx(*daily.cor).margin(1e-12));
}

TEST_CASE("months below the completeness threshold are dropped") {
    StreamflowSeries c = series_of(std::vector<double>(90, 1.0));
    StreamflowSeries u = series_of(std::vector<double>(90, 2.0));
    for (size_t i = 0; i < c.size(); ++i) c.values[i] = 1.0 + i * 0.1;
    // Invalidate most of February (indices 31..58 leave 10 valid days).
    for (int i = 41; i < 59; ++i) c.valid[i] = 0;
    const MetricsReport r = evaluate({c, u, DataModel::target}, Averaging::month);
    CHECK(r.n == 2);   // January and March
}

TEST_CASE("annual averaging needs most of the year") {
    StreamflowSeries c = series_of(std::vector<double>(3 * 365, 0.0));
    StreamflowSeries u = series_of(std::vector<double>(3 * 365, 0.0));
    for (size_t i = 0; i < c.size(); ++i) {
        c.values[i] = std::sin(i * 0.01) + 2.0;
        u.values[i] = std::cos(i * 0.01) + 2.0;
    }
    // Year 2002: only 100 valid days.
    for (size_t i = 0; i < c.size(); ++i)
        if (c.dates[i].year() == 2002 && c.dates[i].day_of_year() > 100) c.valid[i] = 0;
    const MetricsReport r = evaluate({c, u, DataModel::target}, Averaging::year);
    CHECK(r.n == 2);   // 2001 and 2003
}

TEST_CASE("metrics require two jointly valid samples") {
    StreamflowSeries c = series_of({1, 2, 3});
    StreamflowSeries u = series_of({1, 2, 3});
    c.valid[0] = c.valid[1] = 0;
    CHECK_THROWS_AS(evaluate({c, u, DataModel::target}, Averaging::day),
                    InsufficientData);
}

TEST_CASE("data-model labels classify but never change the numbers") {
    CHECK(classify_data_model(0.5, 0.5) == DataModel::target);
    CHECK(classify_data_model(0.0, 0.5) == DataModel::truth);
    CHECK(classify_data_model(0.0, 0.0) == DataModel::truth_truth);

    const std::vector<double> c{3, 1, 4, 1, 5}, u{2, 7, 1, 8, 2};
    MetricsReport r1 = evaluate({series_of(c), series_of(u), DataModel::target},
                                Averaging::day);
    MetricsReport r2 = evaluate({series_of(c), series_of(u), DataModel::truth_truth},
                                Averaging::day);
    CHECK(*r1.nse == *r2.nse);
    CHECK(*r1.diff_pct == *r2.diff_pct);
    CHECK(r1.rmsd == r2.rmsd);
    CHECK(r1.data_model == DataModel::target);
    CHECK(r2.data_model == DataModel::truth_truth);
}

TEST_CASE("station_summary counts satisfactory and improved stations") {
    auto report_with_nse = [](double nse_target) {
        // Two-point series tuned to hit the requested NSE while keeping
        // metrics well defined.
        MetricsReport r = evaluate(pair_of({0, 2}, {0, 2}), Averaging::day);
        r.nse = nse_target;
        r.satisfactory = nse_target > 0.5;
        return r;
    };
    const std::vector<MetricsReport> reports{report_with_nse(-0.9), report_with_nse(0.6),
                                             report_with_nse(0.7)};
    const std::vector<MetricsReport> baseline{report_with_nse(-1.0), report_with_nse(0.7),
                                              report_with_nse(0.5)};
    const StationSummary s = station_summary(reports, &baseline);
    CHECK(s.stations == 3);
    CHECK(s.satisfactory == 2);
    CHECK(s.improved_nse == 2);
    REQUIRE(s.mean_nse);
    CHECK(*s.mean_nse == Catch::Approx((-0.9 + 0.6 + 0.7) / 3.0));
}

TEST_CASE("station_summary averages match a fold oracle") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(1.0, 60.0);
    std::vector<MetricsReport> reports;
    double sum_nse = 0, sum_diff = 0, sum_cor = 0;
    for (int s = 0; s < 7; ++s) {
        std::vector<double> c(25), u(25);
        for (int i = 0; i < 25; ++i) {
            c[i] = uni(rng);
            u[i] = uni(rng);
        }
        reports.push_back(evaluate(pair_of(c, u), Averaging::day));
        sum_nse += *reports.back().nse;
        sum_diff += *reports.back().diff_pct;
        sum_cor += *reports.back().cor;
    }
    const StationSummary summary = station_summary(reports);
    CHECK(*summary.mean_nse == Catch::Approx(sum_nse / 7.0));
    CHECK(*summary.mean_diff_pct == Catch::Approx(sum_diff / 7.0));
    CHECK(*summary.mean_cor == Catch::Approx(sum_cor / 7.0));
    CHECK(summary.satisfactory == 0);   // random pairs are never satisfactory
}

TEST_CASE("single satisfactory station counts as one") {
    const std::vector<MetricsReport> reports{
        evaluate(pair_of({1, 2, 3}, {1, 2, 3}), Averaging::day)};
    CHECK(station_summary(reports).satisfactory == 1);
}
