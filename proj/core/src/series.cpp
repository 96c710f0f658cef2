#include "kinkfilter/series.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "kinkfilter/csv.hpp"
#include "kinkfilter/errors.hpp"

namespace kinkfilter {

void WindowPolicy::validate() const {
    if (!(start_threshold > 0.0)) throw ValidationError("window policy: start threshold must be positive");
    if (!(censor_threshold > 0.0)) throw ValidationError("window policy: censor threshold must be positive");
}

void RawCaseTable::validate() const {
    if (rows.empty()) throw ValidationError("case table: no data rows");
    if (!(population > 0.0)) throw ValidationError("case table: population must be positive");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const CaseRow& r = rows[i];
        const std::string where = "row " + std::to_string(i + 1) + " (" + r.date.to_iso() + ")";
        if (!(std::isfinite(r.confirmed) && std::isfinite(r.recovered) && std::isfinite(r.deaths))) {
            throw ValidationError("case table: non-finite count at " + where);
        }
        if (r.confirmed < 0.0 || r.recovered < 0.0 || r.deaths < 0.0) {
            throw ValidationError("case table: negative count at " + where);
        }
        if (r.recovered + r.deaths > r.confirmed) {
            throw ValidationError("case table: recovered+deaths exceed confirmed at " + where);
        }
        if (i > 0) {
            const auto gap = r.date - rows[i - 1].date;
            if (gap <= 0) {
                throw ValidationError("case table: dates not strictly increasing at " + where);
            }
            if (gap != 1) {
                throw ValidationError("case table: missing calendar day before " + where);
            }
        }
    }
}

RawCaseTable load_raw_from_string(const std::string& text, InputFormat format, double population,
                                  const std::string& origin) {
    csv::Table table = csv::read_string(text, origin);
    const std::vector<std::string> expected = {"date", "confirmed", "recovered", "deaths"};
    if (table.header != expected) {
        throw ValidationError(origin + ": header must be 'date,confirmed,recovered,deaths'");
    }
    RawCaseTable raw;
    raw.population = population;
    raw.rows.reserve(table.rows.size());
    double cum_c = 0.0, cum_r = 0.0, cum_d = 0.0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& cells = table.rows[i];
        const std::string where = origin + ": data row " + std::to_string(i + 1);
        CaseRow row;
        row.date = Date::from_iso(cells[0]);
        double c = csv::parse_double(cells[1], where + " confirmed");
        double r = csv::parse_double(cells[2], where + " recovered");
        double d = csv::parse_double(cells[3], where + " deaths");
        if (format == InputFormat::DailyIncrements) {
            cum_c += c;
            cum_r += r;
            cum_d += d;
            row.confirmed = cum_c;
            row.recovered = cum_r;
            row.deaths = cum_d;
        } else {
            row.confirmed = c;
            row.recovered = r;
            row.deaths = d;
        }
        raw.rows.push_back(row);
    }
    raw.validate();
    return raw;
}

RawCaseTable load_raw(const std::string& path, InputFormat format, double population) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ValidationError("cannot open file: " + path);
    std::ostringstream buf;
    buf << file.rdbuf();
    return load_raw_from_string(buf.str(), format, population, path);
}

namespace {

constexpr std::size_t kWarmupDays = 3;  // raw history needed ahead of the start date

double checked_log(double value, const std::string& what) {
    if (!(value > 0.0)) throw ValidationError(what);
    return std::log(value);
}

}  // namespace

EpidemicSeries build_series(const RawCaseTable& raw, const WindowPolicy& policy,
                            NegativeDeltaPolicy negative_delta) {
    raw.validate();
    policy.validate();
    const std::size_t n = raw.rows.size();
    const double pop = raw.population;

    EpidemicSeries out;

    // Daily increments in count units; clip-to-zero rewrites them before
    // cumulation and records what was dropped.
    std::vector<double> dc(n, 0.0), dr(n, 0.0), dd(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        dc[i] = raw.rows[i].confirmed - raw.rows[i - 1].confirmed;
        dr[i] = raw.rows[i].recovered - raw.rows[i - 1].recovered;
        dd[i] = raw.rows[i].deaths - raw.rows[i - 1].deaths;
    }
    std::vector<double> cum_c(n), cum_r(n), cum_d(n);
    if (negative_delta == NegativeDeltaPolicy::ClipToZero) {
        auto clip = [&](std::vector<double>& delta, const char* field) {
            for (std::size_t i = 1; i < n; ++i) {
                if (delta[i] < 0.0) {
                    out.warnings.push_back("clipped negative " + std::string(field) + " increment " +
                                           csv::format_double(delta[i]) + " on " +
                                           raw.rows[i].date.to_iso());
                    delta[i] = 0.0;
                }
            }
        };
        clip(dc, "confirmed");
        clip(dr, "recovered");
        clip(dd, "deaths");
    }
    cum_c[0] = raw.rows[0].confirmed;
    cum_r[0] = raw.rows[0].recovered;
    cum_d[0] = raw.rows[0].deaths;
    for (std::size_t i = 1; i < n; ++i) {
        cum_c[i] = cum_c[i - 1] + dc[i];
        cum_r[i] = cum_r[i - 1] + dr[i];
        cum_d[i] = cum_d[i - 1] + dd[i];
    }

    // Fractions of the population over the full raw range.
    std::vector<double> C(n), R(n), D(n), S(n), I(n);
    for (std::size_t i = 0; i < n; ++i) {
        C[i] = cum_c[i] / pop;
        R[i] = cum_r[i] / pop;
        D[i] = cum_d[i] / pop;
        S[i] = 1.0 - C[i];
        I[i] = C[i] - R[i] - D[i];
    }

    // Start of the analysis window: first day cumulative confirmed counts
    // reach the threshold.
    std::optional<std::size_t> start;
    for (std::size_t i = 0; i < n; ++i) {
        if (cum_c[i] >= policy.start_threshold) {
            start = i;
            break;
        }
    }
    if (!start) {
        throw ValidationError("analysis window: cumulative confirmed never reaches " +
                              csv::format_double(policy.start_threshold));
    }
    if (n - *start < 5) {
        throw ValidationError("analysis window: need at least 5 rows at or beyond the start threshold");
    }
    if (*start < kWarmupDays) {
        throw ValidationError(
            "analysis window: the three-day moving average needs raw history covering the "
            "three days before the start date " +
            raw.rows[*start].date.to_iso() + "; the archive begins too late");
    }

    // Daily measurement on the full raw range so the moving average is
    // defined from the start date onward.
    std::vector<double> ybreve(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = *start - 2; i < n; ++i) {
        const double denom = I[i - 1] * S[i - 1];
        if (!(I[i - 1] > 0.0)) {
            throw ValidationError("epidemic transform: nonpositive active infections on " +
                                  raw.rows[i - 1].date.to_iso() + " (division impossible)");
        }
        if (!(S[i - 1] > 0.0)) {
            throw ValidationError("epidemic transform: nonpositive susceptible fraction on " +
                                  raw.rows[i - 1].date.to_iso());
        }
        ybreve[i] = (dc[i] / pop) / denom;
    }

    // End of the analysis window under censoring: the first day (from the
    // start onward) whose trailing 3-day average of new confirmed counts
    // falls below the threshold becomes the last retained day.
    std::size_t end = n - 1;
    if (policy.censor_enabled) {
        for (std::size_t i = *start; i < n; ++i) {
            if (i < 2) continue;
            const double avg_new = (dc[i] + dc[i - 1] + dc[i - 2]) / 3.0;
            if (avg_new < policy.censor_threshold) {
                end = i;
                break;
            }
        }
    }

    const std::size_t T = end - *start + 1;
    out.t0_date = raw.rows[*start].date;
    out.C.resize(T);
    out.R.resize(T);
    out.D.resize(T);
    out.S.resize(T);
    out.I.resize(T);
    out.Y.resize(T);
    out.Ybar.resize(T);
    out.y.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t i = *start + t;
        out.C[t] = C[i];
        out.R[t] = R[i];
        out.D[t] = D[i];
        out.S[t] = S[i];
        out.I[t] = I[i];
        out.Y[t] = ybreve[i];
        out.Ybar[t] = (ybreve[i] + ybreve[i - 1] + ybreve[i - 2]) / 3.0;
        const std::string date = raw.rows[i].date.to_iso();
        if (!(out.I[t] > 0.0)) {
            throw ValidationError("epidemic series: active infections not positive on " + date);
        }
        if (!(out.S[t] > 0.0 && out.S[t] <= 1.0)) {
            throw ValidationError("epidemic series: susceptible fraction outside (0,1] on " + date);
        }
        out.y[t] = checked_log(
            out.Ybar[t],
            negative_delta == NegativeDeltaPolicy::Error
                ? "epidemic series: smoothed measurement not positive on " + date +
                      " (negative daily increments the moving average cannot absorb; "
                      "consider --negative-delta clip)"
                : "epidemic series: smoothed measurement not positive on " + date);
        if (std::abs(out.C[t] - (out.I[t] + out.R[t] + out.D[t])) > 1e-12) {
            throw InvariantError("epidemic series: accounting identity violated on " + date);
        }
    }
    return out;
}

SecondDifference second_difference_matrix(std::size_t length) {
    return SecondDifference(length);
}

}  // namespace kinkfilter
