#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinkfilter/dates.hpp"
#include "kinkfilter/second_difference.hpp"

namespace kinkfilter {

/// One row of observed cumulative counts.
struct CaseRow {
    Date date;
    double confirmed = 0.0;
    double recovered = 0.0;
    double deaths = 0.0;
};

/// Cumulative case counts on consecutive calendar days plus the population
/// they are drawn from. Invariants (checked on load):
///   - dates strictly increasing with no gaps,
///   - counts nonnegative,
///   - confirmed >= recovered + deaths on every row.
struct RawCaseTable {
    std::vector<CaseRow> rows;
    double population = 0.0;

    void validate() const;  // throws ValidationError naming the offending row
};

enum class InputFormat { Cumulative, DailyIncrements };

enum class NegativeDeltaPolicy { Error, ClipToZero };

/// Analysis-window rules: the window opens on the first day cumulative
/// confirmed counts reach start_threshold, and (optionally) closes on the
/// first day the trailing 3-day average of new confirmed counts drops below
/// censor_threshold.
struct WindowPolicy {
    double start_threshold = 100.0;
    double censor_threshold = 10.0;
    bool censor_enabled = false;

    void validate() const;
};

/// Population-normalized epidemic record over the analysis window.
/// All vectors share the same length T and index 0 corresponds to t0_date.
///   C, R, D : cumulative fractions of the population
///   S = 1 - C, I = C - R - D
///   Y       : daily contact measurement dC_t / (I_{t-1} S_{t-1})
///   Ybar    : trailing three-day moving average of Y
///   y       : log(Ybar), the regression target for the trend filters
struct EpidemicSeries {
    Date t0_date;
    std::vector<double> C, R, D, S, I, Y, Ybar, y;
    std::vector<std::string> warnings;  // e.g. clipped negative increments

    [[nodiscard]] std::size_t size() const { return y.size(); }
    [[nodiscard]] Date date_at(std::size_t t) const { return t0_date + static_cast<std::int64_t>(t); }
};

/// Parses a CSV file with header `date,confirmed,recovered,deaths`.
/// Daily-increment input is cumulated with an implicit all-zero day before
/// the first row. Errors name the offending row. The population is not part
/// of the file; it arrives separately (CLI flag or config).
RawCaseTable load_raw(const std::string& path, InputFormat format, double population);
RawCaseTable load_raw_from_string(const std::string& text, InputFormat format, double population,
                                  const std::string& origin = "<string>");

/// Applies the windowing rules and the epidemic transform producing y_t.
/// The daily measurement Y is computed on the full raw range so the moving
/// average is defined from the start date onward; this needs raw history
/// covering the three days before the start date.
EpidemicSeries build_series(const RawCaseTable& raw, const WindowPolicy& policy,
                            NegativeDeltaPolicy negative_delta = NegativeDeltaPolicy::Error);

/// The (T-2) x T second-order difference operator. Throws for T < 3.
SecondDifference second_difference_matrix(std::size_t length);

}  // namespace kinkfilter
