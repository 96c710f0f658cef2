#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "kinkfilter/errors.hpp"
#include "kinkfilter/series.hpp"

using namespace kinkfilter;

namespace {

std::string make_csv(const std::vector<std::array<double, 3>>& counts,
                     const std::string& first_date = "2020-03-01") {
    std::ostringstream out;
    out << "date,confirmed,recovered,deaths\n";
    Date d = Date::from_iso(first_date);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out << (d + static_cast<std::int64_t>(i)).to_iso() << ',' << counts[i][0] << ','
            << counts[i][1] << ',' << counts[i][2] << '\n';
    }
    return out.str();
}

/// Constant new cases with recoveries keeping the active pool fixed; the
/// transform sees an (almost exactly) constant signal.
RawCaseTable constant_increment_table(std::size_t days, double population) {
    std::vector<std::array<double, 3>> counts;
    for (std::size_t i = 0; i < days; ++i) {
        const double t = static_cast<double>(i);
        counts.push_back({1000.0 + 100.0 * t, 100.0 * t, 0.0});
    }
    return load_raw_from_string(make_csv(counts), InputFormat::Cumulative, population);
}

}  // namespace

TEST_CASE("cumulative and daily-increment inputs agree") {
    const std::string cumulative =
        "date,confirmed,recovered,deaths\n"
        "2020-03-01,100,0,0\n"
        "2020-03-02,150,10,1\n"
        "2020-03-03,225,30,2\n";
    const std::string increments =
        "date,confirmed,recovered,deaths\n"
        "2020-03-01,100,0,0\n"
        "2020-03-02,50,10,1\n"
        "2020-03-03,75,20,1\n";
    RawCaseTable a = load_raw_from_string(cumulative, InputFormat::Cumulative, 1e6);
    RawCaseTable b = load_raw_from_string(increments, InputFormat::DailyIncrements, 1e6);
    REQUIRE(a.rows.size() == 3);
    REQUIRE(b.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.rows[i].date == b.rows[i].date);
        CHECK(a.rows[i].confirmed == b.rows[i].confirmed);
        CHECK(a.rows[i].recovered == b.rows[i].recovered);
        CHECK(a.rows[i].deaths == b.rows[i].deaths);
    }
}

TEST_CASE("loader errors name the offending row") {
    const std::string gap =
        "date,confirmed,recovered,deaths\n"
        "2020-03-04,100,0,0\n"
        "2020-03-06,150,0,0\n";
    CHECK_THROWS_WITH_AS(load_raw_from_string(gap, InputFormat::Cumulative, 1e6),
                         doctest::Contains("2020-03-06"), ValidationError);

    const std::string inconsistent =
        "date,confirmed,recovered,deaths\n"
        "2020-03-04,100,0,0\n"
        "2020-03-05,150,140,20\n";
    CHECK_THROWS_WITH_AS(load_raw_from_string(inconsistent, InputFormat::Cumulative, 1e6),
                         doctest::Contains("2020-03-05"), ValidationError);

    const std::string bad_cell =
        "date,confirmed,recovered,deaths\n"
        "2020-03-04,abc,0,0\n";
    CHECK_THROWS_AS(load_raw_from_string(bad_cell, InputFormat::Cumulative, 1e6), ValidationError);

    const std::string wrong_header = "day,confirmed,recovered,deaths\n2020-03-04,1,0,0\n";
    CHECK_THROWS_AS(load_raw_from_string(wrong_header, InputFormat::Cumulative, 1e6),
                    ValidationError);
}

TEST_CASE("constant-increment synthetic gives a constant signal") {
    WindowPolicy policy;
    policy.start_threshold = 1350.0;  // crossed on day 4, after the warm-up days
    EpidemicSeries series = build_series(constant_increment_table(20, 1e12), policy);
    REQUIRE(series.size() >= 5);
    // The susceptible pool drifts by ~1e-10 of itself over the window; the
    // signal is constant to that order.
    for (std::size_t t = 1; t < series.size(); ++t) {
        CHECK(series.y[t] == doctest::Approx(series.y[0]).epsilon(1e-8));
        CHECK(series.Ybar[t] == doctest::Approx(series.Ybar[0]).epsilon(1e-8));
    }
}

TEST_CASE("window start, moving-average warm-up and the reconstruction identity") {
    // Cumulative counts crossing the threshold of 100 on the fifth day.
    std::vector<std::array<double, 3>> counts = {
        {20, 0, 0},  {45, 2, 0},  {70, 4, 0},   {90, 6, 1},   {130, 9, 1},
        {200, 15, 2}, {300, 30, 3}, {450, 60, 5}, {650, 100, 8}, {900, 160, 12},
    };
    RawCaseTable raw = load_raw_from_string(make_csv(counts), InputFormat::Cumulative, 1e6);
    WindowPolicy policy;  // start threshold 100
    EpidemicSeries series = build_series(raw, policy);
    CHECK(series.t0_date.to_iso() == "2020-03-05");  // first day with >= 100 cumulative
    REQUIRE(series.size() == 6);

    // Ybar at the start date uses the two preceding raw days.
    const double pop = 1e6;
    auto ybreve = [&](std::size_t i) {
        const double dc = (counts[i][0] - counts[i - 1][0]) / pop;
        const double lag_c = counts[i - 1][0] / pop;
        const double lag_i = (counts[i - 1][0] - counts[i - 1][1] - counts[i - 1][2]) / pop;
        return dc / (lag_i * (1.0 - lag_c));
    };
    CHECK(series.Ybar[0] == doctest::Approx((ybreve(4) + ybreve(3) + ybreve(2)) / 3.0).epsilon(1e-14));
    CHECK(series.Y[0] == doctest::Approx(ybreve(4)).epsilon(1e-14));

    // exp(y_t) * I_{t-1} * S_{t-1} reproduces the smoothed daily change.
    for (std::size_t t = 1; t < series.size(); ++t) {
        const double lhs = std::exp(series.y[t]) * series.I[t - 1] * series.S[t - 1];
        const double rhs = series.Ybar[t] * series.I[t - 1] * series.S[t - 1];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        CHECK(series.y[t] == doctest::Approx(std::log(series.Ybar[t])).epsilon(1e-15));
    }

    // The accounting identity C = I + R + D holds on every retained day.
    for (std::size_t t = 0; t < series.size(); ++t) {
        CHECK(std::abs(series.C[t] - (series.I[t] + series.R[t] + series.D[t])) <= 1e-12);
    }
}

TEST_CASE("build_series is deterministic") {
    RawCaseTable raw = constant_increment_table(15, 1e9);
    WindowPolicy policy;
    policy.start_threshold = 1350.0;
    EpidemicSeries a = build_series(raw, policy);
    EpidemicSeries b = build_series(raw, policy);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.y.data(), b.y.data(), a.y.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.Ybar.data(), b.Ybar.data(), a.Ybar.size() * sizeof(double)) == 0);
}

TEST_CASE("archive starting at the threshold day cannot warm up the average") {
    std::vector<std::array<double, 3>> counts = {
        {120, 0, 0}, {180, 0, 0}, {260, 0, 0}, {360, 0, 0}, {480, 0, 0}, {620, 0, 0},
    };
    RawCaseTable raw = load_raw_from_string(make_csv(counts), InputFormat::Cumulative, 1e6);
    WindowPolicy policy;
    CHECK_THROWS_WITH_AS(build_series(raw, policy), doctest::Contains("three days"),
                         ValidationError);
}

TEST_CASE("censoring ends the series on the first quiet day") {
    // New cases: 20,30,40,40,40,12,9,6,3,2,2 -> raw day 7 is the first whose
    // trailing mean (6+9+12)/3 = 9 falls under 10.
    std::vector<std::array<double, 3>> counts;
    double cum = 0.0;
    const double daily[] = {20, 30, 40, 40, 40, 12, 9, 6, 3, 2, 2};
    for (double d : daily) {
        cum += d;
        counts.push_back({cum, 0.0, 0.0});
    }
    RawCaseTable raw = load_raw_from_string(make_csv(counts), InputFormat::Cumulative, 1e6);
    WindowPolicy censoring;
    censoring.censor_enabled = true;
    WindowPolicy open_ended;

    EpidemicSeries censored = build_series(raw, censoring);
    EpidemicSeries full = build_series(raw, open_ended);
    CHECK(full.size() == counts.size() - 3);  // window opens on raw day 3 (cum 130)
    CHECK(censored.t0_date.to_iso() == "2020-03-04");
    // The quiet day itself stays in the series as its last day.
    CHECK(censored.size() == 5);
    CHECK((censored.t0_date + static_cast<std::int64_t>(censored.size() - 1)).to_iso() ==
          "2020-03-08");
}

TEST_CASE("negative daily increments: error by default, clip on request") {
    std::vector<std::array<double, 3>> counts = {
        {40, 0, 0},  {80, 0, 0},  {95, 0, 0},  {140, 0, 0}, {400, 0, 0}, {700, 0, 0},
        {600, 0, 0},  // correction: -100 on 2020-03-07
        {610, 0, 0}, {640, 0, 0}, {700, 0, 0}, {800, 0, 0},
    };
    RawCaseTable raw = load_raw_from_string(make_csv(counts), InputFormat::Cumulative, 1e6);
    WindowPolicy policy;

    // The -100 day drags a three-day smoothed change negative.
    CHECK_THROWS_WITH_AS(build_series(raw, policy, NegativeDeltaPolicy::Error),
                         doctest::Contains("not positive"), ValidationError);

    EpidemicSeries clipped = build_series(raw, policy, NegativeDeltaPolicy::ClipToZero);
    REQUIRE(!clipped.warnings.empty());
    CHECK(clipped.warnings.front().find("2020-03-07") != std::string::npos);
    for (double v : clipped.Ybar) CHECK(v > 0.0);
}

TEST_CASE("second difference operator on simple shapes") {
    SecondDifference d3 = second_difference_matrix(3);
    std::vector<double> f{1, 2, 3};
    CHECK(d3.apply(f) == std::vector<double>{0});

    SecondDifference d4 = second_difference_matrix(4);
    std::vector<double> hinge{0, 0, 1, 2};
    CHECK(d4.apply(hinge) == std::vector<double>{1, 0});

    SecondDifference d5 = second_difference_matrix(5);
    std::vector<double> flat{1, 1, 1, 1, 1};
    CHECK(d5.apply(flat) == std::vector<double>{0, 0, 0});

    CHECK_THROWS_AS(second_difference_matrix(2), ValidationError);
}
