// Command-line pipeline: ingest -> transform -> tune -> filter -> analyze,
// emitting plot-ready CSV tables and a machine-readable run manifest. Every
// stage is also exposed as its own subcommand.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kinkfilter/analysis.hpp"
#include "kinkfilter/csv.hpp"
#include "kinkfilter/errors.hpp"
#include "kinkfilter/hp_filter.hpp"
#include "kinkfilter/l1_filter.hpp"
#include "kinkfilter/risk_lab.hpp"
#include "kinkfilter/series.hpp"
#include "kinkfilter/sparse_hp.hpp"
#include "kinkfilter/tuning.hpp"

namespace kf = kinkfilter;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct RunConfig {
    std::string input;
    double population = 0.0;
    std::string format = "cumulative";
    double start_threshold = 100.0;
    double censor_threshold = 10.0;
    bool censor_enabled = false;
    std::string negative_delta = "error";
    std::vector<std::size_t> kappa_set = {2, 3, 4};
    std::vector<double> lambda_set = {1, 2, 4, 8, 16, 32};
    std::vector<std::string> filters = {"sparse_hp", "hp", "l1", "sqrt_l1"};
    double gamma = kf::kDefaultGamma;
    double eta = 1e-6;
    std::string t0;  // ISO date for the single-break baseline; empty = skip
    double rho = 0.0;  // 0 = skip the under-reporting diagnostic
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t threads = 0;  // 0 = resolve from env/hardware
    std::size_t node_budget = 10'000'000;
};

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("KINKFILTER_THREADS")) {
        const long parsed = std::strtol(env, nullptr, 10);
        if (parsed > 0) return static_cast<std::size_t>(parsed);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// --- config file ------------------------------------------------------------

void reject_unknown_keys(const ordered_json& object, const std::vector<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : object.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw kf::ValidationError("config: unknown key '" + key + "' in " + where);
        }
        (void)value;
    }
}

void apply_config_file(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw kf::ValidationError("config: cannot open " + path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const std::exception& e) {
        throw kf::ValidationError(std::string("config: parse error: ") + e.what());
    }
    reject_unknown_keys(doc,
                        {"input", "population", "format", "window", "grid", "filters", "gamma",
                         "eta", "t0", "rho", "negative_delta", "seed", "out_dir", "threads",
                         "node_budget"},
                        "top level");
    if (doc.contains("input")) cfg.input = doc["input"].get<std::string>();
    if (doc.contains("population")) cfg.population = doc["population"].get<double>();
    if (doc.contains("format")) cfg.format = doc["format"].get<std::string>();
    if (doc.contains("window")) {
        const auto& window = doc["window"];
        reject_unknown_keys(window, {"start_threshold", "censor_threshold", "censor_enabled"},
                            "window");
        if (window.contains("start_threshold")) cfg.start_threshold = window["start_threshold"];
        if (window.contains("censor_threshold")) cfg.censor_threshold = window["censor_threshold"];
        if (window.contains("censor_enabled")) cfg.censor_enabled = window["censor_enabled"];
    }
    if (doc.contains("grid")) {
        const auto& grid = doc["grid"];
        reject_unknown_keys(grid, {"kappas", "lambdas"}, "grid");
        if (grid.contains("kappas")) cfg.kappa_set = grid["kappas"].get<std::vector<std::size_t>>();
        if (grid.contains("lambdas")) cfg.lambda_set = grid["lambdas"].get<std::vector<double>>();
    }
    if (doc.contains("filters")) cfg.filters = doc["filters"].get<std::vector<std::string>>();
    if (doc.contains("gamma")) cfg.gamma = doc["gamma"].get<double>();
    if (doc.contains("eta")) cfg.eta = doc["eta"].get<double>();
    if (doc.contains("t0")) cfg.t0 = doc["t0"].get<std::string>();
    if (doc.contains("rho")) cfg.rho = doc["rho"].get<double>();
    if (doc.contains("negative_delta")) cfg.negative_delta = doc["negative_delta"].get<std::string>();
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("out_dir")) cfg.out_dir = doc["out_dir"].get<std::string>();
    if (doc.contains("threads")) cfg.threads = doc["threads"].get<std::size_t>();
    if (doc.contains("node_budget")) cfg.node_budget = doc["node_budget"].get<std::size_t>();
}

void validate_config(const RunConfig& cfg, bool needs_input) {
    if (needs_input) {
        if (cfg.input.empty()) throw kf::ValidationError("config: input path is required");
        if (!(cfg.population > 0.0)) throw kf::ValidationError("config: population must be positive");
    }
    if (cfg.format != "cumulative" && cfg.format != "daily") {
        throw kf::ValidationError("config: format must be 'cumulative' or 'daily'");
    }
    if (cfg.negative_delta != "error" && cfg.negative_delta != "clip") {
        throw kf::ValidationError("config: negative_delta must be 'error' or 'clip'");
    }
    if (cfg.kappa_set.empty()) throw kf::ValidationError("config: kappa set must be nonempty");
    if (cfg.lambda_set.empty()) throw kf::ValidationError("config: lambda set must be nonempty");
    for (double l : cfg.lambda_set) {
        if (!(l > 0.0)) throw kf::ValidationError("config: lambdas must be positive");
    }
    if (!(cfg.gamma > 0.0)) throw kf::ValidationError("config: gamma must be positive");
    if (!(cfg.eta >= 0.0)) throw kf::ValidationError("config: eta must be nonnegative");
    if (cfg.rho < 0.0 || cfg.rho > 1.0) throw kf::ValidationError("config: rho must lie in (0,1]");
    const std::vector<std::string> known_filters = {"sparse_hp", "hp", "l1", "sqrt_l1",
                                                    "parametric"};
    for (const auto& f : cfg.filters) {
        if (std::find(known_filters.begin(), known_filters.end(), f) == known_filters.end()) {
            throw kf::ValidationError("config: unknown filter '" + f + "'");
        }
    }
    if (std::find(cfg.filters.begin(), cfg.filters.end(), "parametric") != cfg.filters.end() &&
        cfg.t0.empty()) {
        throw kf::ValidationError("config: the parametric baseline needs --t0");
    }
}

// --- pipeline pieces ---------------------------------------------------------

kf::EpidemicSeries build_series_from_config(const RunConfig& cfg) {
    const kf::InputFormat format = cfg.format == "daily" ? kf::InputFormat::DailyIncrements
                                                         : kf::InputFormat::Cumulative;
    kf::RawCaseTable raw = kf::load_raw(cfg.input, format, cfg.population);
    kf::WindowPolicy policy;
    policy.start_threshold = cfg.start_threshold;
    policy.censor_threshold = cfg.censor_threshold;
    policy.censor_enabled = cfg.censor_enabled;
    const kf::NegativeDeltaPolicy negative = cfg.negative_delta == "clip"
                                                 ? kf::NegativeDeltaPolicy::ClipToZero
                                                 : kf::NegativeDeltaPolicy::Error;
    return kf::build_series(raw, policy, negative);
}

void ensure_out_dir(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) throw kf::ValidationError("config: out_dir is required");
    std::filesystem::create_directories(cfg.out_dir);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

void write_series_csv(const RunConfig& cfg, const kf::EpidemicSeries& series) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < series.size(); ++t) {
        rows.push_back({series.date_at(t).to_iso(), kf::csv::format_double(series.C[t]),
                        kf::csv::format_double(series.R[t]), kf::csv::format_double(series.D[t]),
                        kf::csv::format_double(series.S[t]), kf::csv::format_double(series.I[t]),
                        kf::csv::format_double(series.Y[t]), kf::csv::format_double(series.Ybar[t]),
                        kf::csv::format_double(series.y[t])});
    }
    kf::csv::write_file(out_path(cfg, "series.csv"),
                        {"date", "C", "R", "D", "S", "I", "Y", "Ybar", "y"}, rows);
}

void write_trend_csv(const RunConfig& cfg, const std::string& name,
                     const kf::EpidemicSeries& series, std::span<const double> f,
                     const std::vector<std::size_t>& kinks) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const bool is_kink = std::find(kinks.begin(), kinks.end(), t) != kinks.end();
        rows.push_back({series.date_at(t).to_iso(), kf::csv::format_double(series.y[t]),
                        kf::csv::format_double(f[t]), is_kink ? "1" : "0"});
    }
    kf::csv::write_file(out_path(cfg, "trend_" + name + ".csv"), {"date", "y", "f", "kink_flag"},
                        rows);
}

std::string format_percent_2dp(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

void write_surveillance(const RunConfig& cfg, const kf::EpidemicSeries& series,
                        const kf::SurveillanceReport& report, std::span<const double> f) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < series.size(); ++t) {
        rows.push_back({series.date_at(t).to_iso(), kf::csv::format_double(f[t]),
                        kf::csv::format_double(report.r0[t]),
                        t == 0 ? "" : kf::csv::format_double(report.xi[t]),
                        std::to_string(report.segment_of(t))});
    }
    kf::csv::write_file(out_path(cfg, "surveillance.csv"), {"date", "f", "R0", "xi", "segment_id"},
                        rows);

    std::vector<std::vector<std::string>> segment_rows;
    for (std::size_t s = 0; s < report.segments.size(); ++s) {
        const auto& seg = report.segments[s];
        segment_rows.push_back({std::to_string(s + 1), series.date_at(seg.start).to_iso(),
                                series.date_at(seg.end).to_iso(),
                                format_percent_2dp(seg.xi_percent)});
    }
    kf::csv::write_file(out_path(cfg, "segments.csv"),
                        {"segment", "start_date", "end_date", "xi_percent"}, segment_rows);
}

ordered_json config_json(const RunConfig& cfg) {
    ordered_json j;
    j["input"] = cfg.input;
    j["population"] = cfg.population;
    j["format"] = cfg.format;
    j["window"] = {{"start_threshold", cfg.start_threshold},
                   {"censor_threshold", cfg.censor_threshold},
                   {"censor_enabled", cfg.censor_enabled}};
    j["grid"] = {{"kappas", cfg.kappa_set}, {"lambdas", cfg.lambda_set}};
    j["filters"] = cfg.filters;
    j["gamma"] = cfg.gamma;
    j["eta"] = cfg.eta;
    if (!cfg.t0.empty()) j["t0"] = cfg.t0;
    if (cfg.rho > 0.0) j["rho"] = cfg.rho;
    j["negative_delta"] = cfg.negative_delta;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["node_budget"] = cfg.node_budget;
    return j;
}

char hex_digit(unsigned v) { return v < 10 ? static_cast<char>('0' + v) : static_cast<char>('a' + v - 10); }

std::string hex64(std::uint64_t v) {
    std::string out = "0x";
    for (int shift = 60; shift >= 0; shift -= 4) out.push_back(hex_digit((v >> shift) & 0xF));
    return out;
}

bool want_filter(const RunConfig& cfg, const std::string& name) {
    return std::find(cfg.filters.begin(), cfg.filters.end(), name) != cfg.filters.end();
}

// Shared by `run`, `filter` and `report`: the tuned constrained fit plus the
// fidelity-matched comparators.
struct PipelineResult {
    kf::TuningResult tuning;
    kf::SparseHpSolution sparse;
    std::optional<kf::MatchedFit> hp, l1, sqrt_l1;
    std::optional<kf::ParametricFit> parametric;
    int exit_code = 0;
};

PipelineResult run_filters(const RunConfig& cfg, const kf::EpidemicSeries& series,
                           std::optional<std::size_t> fixed_kappa,
                           std::optional<double> fixed_lambda) {
    PipelineResult result;
    const std::vector<double>& y = series.y;

    if (fixed_kappa && fixed_lambda) {
        kf::TuningResult manual;
        manual.selected_kappa = *fixed_kappa;
        manual.selected_lambda = *fixed_lambda;
        kf::SparseHpOptions sopts;
        sopts.node_budget = cfg.node_budget;
        manual.selected_fit =
            kf::solve_bnb(kf::SparseHpProblem::from_data(y, *fixed_kappa, *fixed_lambda), sopts);
        result.tuning = std::move(manual);
    } else {
        kf::TuningGrid grid;
        grid.kappas = cfg.kappa_set;
        grid.lambdas = cfg.lambda_set;
        kf::LoocvOptions lopts;
        lopts.threads = resolve_threads(cfg.threads);
        lopts.node_budget = cfg.node_budget;
        result.tuning = kf::loocv_sparse_hp(y, grid, lopts);
    }
    result.sparse = result.tuning.selected_fit;
    if (result.sparse.bound_gap > 0.0) result.exit_code = 3;

    const double target = result.sparse.fidelity;
    if (want_filter(cfg, "hp")) {
        result.hp = kf::match_fidelity(y, target, kf::ComparatorFilter::Hp,
                                       kf::default_bracket(y, kf::ComparatorFilter::Hp), cfg.eta);
    }
    if (want_filter(cfg, "l1")) {
        result.l1 = kf::match_fidelity(y, target, kf::ComparatorFilter::L1,
                                       kf::default_bracket(y, kf::ComparatorFilter::L1), cfg.eta);
    }
    if (want_filter(cfg, "sqrt_l1")) {
        result.sqrt_l1 =
            kf::match_fidelity(y, target, kf::ComparatorFilter::SqrtL1,
                               kf::default_bracket(y, kf::ComparatorFilter::SqrtL1), cfg.eta);
    }
    if (want_filter(cfg, "parametric")) {
        const kf::Date t0 = kf::Date::from_iso(cfg.t0);
        const std::int64_t offset = t0 - series.t0_date;
        if (offset <= 0 || offset >= static_cast<std::int64_t>(series.size()) - 1) {
            throw kf::ValidationError("t0 " + cfg.t0 + " is not strictly inside the series window");
        }
        result.parametric = kf::parametric_fit(y, static_cast<std::size_t>(offset));
    }
    return result;
}

void write_kink_table(const RunConfig& cfg, const kf::EpidemicSeries& series,
                      const PipelineResult& result) {
    std::vector<std::vector<std::string>> rows;
    auto add = [&](const std::string& filter, const std::vector<std::size_t>& kinks) {
        for (std::size_t k : kinks) {
            rows.push_back({filter, std::to_string(k), series.date_at(k).to_iso()});
        }
    };
    add("sparse_hp", result.sparse.kinks.indices);
    if (result.l1) add("l1", result.l1->kinks.indices);
    if (result.sqrt_l1) add("sqrt_l1", result.sqrt_l1->kinks.indices);
    if (result.parametric) add("parametric", {result.parametric->t0});
    kf::csv::write_file(out_path(cfg, "kinks.csv"), {"filter", "index", "date"}, rows);
}

ordered_json filters_json(const RunConfig& cfg, const kf::EpidemicSeries& series,
                          const PipelineResult& result) {
    ordered_json j;
    {
        ordered_json s;
        s["kappa"] = result.tuning.selected_kappa;
        s["lambda"] = result.tuning.selected_lambda;
        s["objective"] = result.sparse.objective;
        s["fidelity"] = result.sparse.fidelity;
        s["penalty"] = result.sparse.penalty;
        s["nodes_explored"] = result.sparse.nodes_explored;
        s["bound_gap"] = result.sparse.bound_gap;
        s["bounds_violation"] = result.sparse.bounds_violation;
        s["bounds_refit_applied"] = result.sparse.bounds_refit_applied;
        ordered_json dates = ordered_json::array();
        for (std::size_t k : result.sparse.kinks.indices) dates.push_back(series.date_at(k).to_iso());
        s["kink_dates"] = dates;
        j["sparse_hp"] = s;
    }
    auto matched = [&](const kf::MatchedFit& fit) {
        ordered_json m;
        m["lambda"] = fit.lambda;
        m["fidelity"] = fit.fidelity;
        ordered_json dates = ordered_json::array();
        for (std::size_t k : fit.kinks.indices) dates.push_back(series.date_at(k).to_iso());
        m["kink_dates"] = dates;
        return m;
    };
    if (result.hp) j["hp"] = matched(*result.hp);
    if (result.l1) j["l1"] = matched(*result.l1);
    if (result.sqrt_l1) j["sqrt_l1"] = matched(*result.sqrt_l1);
    if (result.parametric) {
        ordered_json p;
        p["alpha0"] = result.parametric->alpha0;
        p["alpha1"] = result.parametric->alpha1;
        p["t0"] = cfg.t0;
        j["parametric"] = p;
    }
    return j;
}

ordered_json tolerances_json(const RunConfig& cfg) {
    ordered_json t;
    t["eta"] = cfg.eta;
    t["l1_tol_opt"] = 1e-8;
    t["objective_tie_rel"] = 1e-9;
    t["fidelity_match_rel"] = 1e-6;
    t["prune_eps"] = 1e-12;
    return t;
}

void write_manifest(const RunConfig& cfg, const kf::EpidemicSeries& series,
                    const PipelineResult& result, const std::vector<std::string>& outputs) {
    ordered_json manifest;
    manifest["tool"] = {{"name", "kinkfilter"}, {"version", kVersion}};
    manifest["input"] = {{"path", cfg.input},
                         {"fnv1a64", hex64(kf::csv::fnv1a64_file(cfg.input))},
                         {"series_days", series.size()},
                         {"t0_date", series.t0_date.to_iso()},
                         {"warnings", series.warnings}};
    manifest["config"] = config_json(cfg);
    manifest["tolerances"] = tolerances_json(cfg);
    {
        ordered_json cells = ordered_json::array();
        for (const auto& cell : result.tuning.cells) {
            ordered_json c;
            c["kappa"] = cell.kappa;
            c["lambda"] = cell.lambda;
            c["score"] = cell.score;
            c["valid"] = cell.diagnostics.valid;
            c["max_bound_gap"] = cell.diagnostics.max_bound_gap;
            c["failed_solves"] = cell.diagnostics.failed_solves;
            cells.push_back(c);
        }
        manifest["tuning"] = {{"selected_kappa", result.tuning.selected_kappa},
                              {"selected_lambda", result.tuning.selected_lambda},
                              {"cells", cells}};
    }
    manifest["filters"] = filters_json(cfg, series, result);
    if (cfg.rho > 0.0) {
        kf::UnderreportingReport u = kf::underreporting_diagnostic(series, cfg.rho);
        manifest["underreporting"] = {{"rho", u.rho},
                                      {"correction", u.correction},
                                      {"ratio_min", u.ratio_min},
                                      {"ratio_median", u.ratio_median},
                                      {"ratio_max", u.ratio_max},
                                      {"negligible_fraction", u.negligible_fraction},
                                      {"correction_negligible", u.correction_negligible}};
    }
    manifest["outputs"] = outputs;
    std::ofstream out(out_path(cfg, "manifest.json"), std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw kf::ValidationError("write failed: manifest.json");
}

// --- subcommand bodies --------------------------------------------------------

int cmd_series(const RunConfig& cfg) {
    validate_config(cfg, true);
    ensure_out_dir(cfg);
    kf::EpidemicSeries series = build_series_from_config(cfg);
    write_series_csv(cfg, series);
    for (const auto& w : series.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "series: " << series.size() << " days from " << series.t0_date.to_iso()
              << ", wrote series.csv\n";
    return 0;
}

int cmd_tune(const RunConfig& cfg) {
    validate_config(cfg, true);
    ensure_out_dir(cfg);
    kf::EpidemicSeries series = build_series_from_config(cfg);
    kf::TuningGrid grid;
    grid.kappas = cfg.kappa_set;
    grid.lambdas = cfg.lambda_set;
    kf::LoocvOptions lopts;
    lopts.threads = resolve_threads(cfg.threads);
    lopts.node_budget = cfg.node_budget;
    kf::TuningResult tuning = kf::loocv_sparse_hp(series.y, grid, lopts);
    std::ofstream out(out_path(cfg, "tuning_surface.csv"), std::ios::binary);
    out << kf::tuning_surface_csv(tuning);
    std::cout << "selected kappa=" << tuning.selected_kappa
              << " lambda=" << kf::csv::format_double(tuning.selected_lambda) << '\n';
    double max_gap = 0.0;
    for (const auto& cell : tuning.cells) max_gap = std::max(max_gap, cell.diagnostics.max_bound_gap);
    return max_gap > 0.0 ? 3 : 0;
}

int run_pipeline(const RunConfig& cfg, std::optional<std::size_t> kappa,
                 std::optional<double> lambda, bool with_surveillance) {
    validate_config(cfg, true);
    ensure_out_dir(cfg);
    kf::EpidemicSeries series = build_series_from_config(cfg);
    PipelineResult result = run_filters(cfg, series, kappa, lambda);

    std::vector<std::string> outputs;
    write_series_csv(cfg, series);
    outputs.push_back("series.csv");
    {
        std::ofstream out(out_path(cfg, "tuning_surface.csv"), std::ios::binary);
        out << kf::tuning_surface_csv(result.tuning);
        outputs.push_back("tuning_surface.csv");
    }
    write_trend_csv(cfg, "sparse_hp", series, result.sparse.f, result.sparse.kinks.indices);
    outputs.push_back("trend_sparse_hp.csv");
    if (result.hp) {
        write_trend_csv(cfg, "hp", series, result.hp->f, result.hp->kinks.indices);
        outputs.push_back("trend_hp.csv");
    }
    if (result.l1) {
        write_trend_csv(cfg, "l1", series, result.l1->f, result.l1->kinks.indices);
        outputs.push_back("trend_l1.csv");
    }
    if (result.sqrt_l1) {
        write_trend_csv(cfg, "sqrt_l1", series, result.sqrt_l1->f, result.sqrt_l1->kinks.indices);
        outputs.push_back("trend_sqrt_l1.csv");
    }
    if (result.parametric) {
        write_trend_csv(cfg, "parametric", series, result.parametric->fitted,
                        {result.parametric->t0});
        outputs.push_back("trend_parametric.csv");
    }
    write_kink_table(cfg, series, result);
    outputs.push_back("kinks.csv");

    if (with_surveillance) {
        kf::SurveillanceReport report = kf::contact_growth_rates(
            result.sparse.f, result.sparse.kinks, cfg.gamma, series.t0_date);
        write_surveillance(cfg, series, report, result.sparse.f);
        outputs.push_back("surveillance.csv");
        outputs.push_back("segments.csv");
    }

    outputs.push_back("manifest.json");
    write_manifest(cfg, series, result, outputs);
    for (const auto& w : series.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "run: kappa=" << result.tuning.selected_kappa
              << " lambda=" << kf::csv::format_double(result.tuning.selected_lambda) << ", "
              << result.sparse.kinks.indices.size() << " kinks, outputs in " << cfg.out_dir << '\n';
    return result.exit_code;
}

int cmd_risklab(const RunConfig& cfg, const std::vector<std::size_t>& t_set, std::size_t reps,
                const std::string& noise, double sigma, std::size_t n_kinks, double sparse_lambda) {
    ensure_out_dir(cfg);
    const kf::NoiseLaw law = kf::noise_law_from_string(noise);

    // One underlying piecewise-linear function, sampled at each requested
    // length so the study is a pure sample-size comparison.
    kf::RandomSource rng(cfg.seed);
    if (t_set.empty()) throw kf::ValidationError("risklab: need at least one length in --T-set");
    const std::size_t t_min = *std::min_element(t_set.begin(), t_set.end());
    kf::SyntheticSpec base = kf::random_piecewise_spec(t_min, n_kinks, rng);
    base.noise = law;
    base.sigma = sigma;

    std::vector<std::vector<std::string>> rows;
    std::vector<std::vector<std::string>> summary_rows;
    for (std::size_t T : t_set) {
        kf::SyntheticSpec spec = base;
        spec.T = T;
        std::vector<double> risks;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            kf::SyntheticSpec rep_spec = spec;
            rep_spec.seed = kf::RandomSource::derive_seed(cfg.seed, T * 1000003ull + rep);
            kf::SyntheticData data = kf::generate(rep_spec);
            kf::SparseHpOptions sopts;
            sopts.node_budget = cfg.node_budget;
            kf::SparseHpSolution fit = kf::solve_bnb(
                kf::SparseHpProblem::from_data(data.y, n_kinks, sparse_lambda), sopts);
            const double risk = kf::empirical_risk(fit.f, data.f_star);
            risks.push_back(risk);
            kf::KinkSet kinks = kf::extract_kinks(fit.f, cfg.eta);
            rows.push_back({std::to_string(rep), std::to_string(T), "sparse_hp",
                            kf::csv::format_double(risk), std::to_string(kinks.indices.size()),
                            kinks.indices == data.kinks ? "1" : "0"});
        }
        kf::RiskEstimate estimate = kf::summarize_risks(risks);
        summary_rows.push_back({std::to_string(T), kf::csv::format_double(estimate.q1),
                                kf::csv::format_double(estimate.median),
                                kf::csv::format_double(estimate.q3)});
    }
    kf::csv::write_file(out_path(cfg, "study.csv"),
                        {"rep", "T", "method", "risk", "kink_count", "exact_recovery"}, rows);
    kf::csv::write_file(out_path(cfg, "risk_summary.csv"), {"T", "q1", "median", "q3"},
                        summary_rows);
    std::cout << "risklab: " << rows.size() << " fits, summaries in risk_summary.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contact-rate trend filtering with exact kink control"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    RunConfig cfg;
    std::string config_path;
    std::optional<std::size_t> fixed_kappa;
    std::optional<double> fixed_lambda;

    // risklab-specific knobs
    std::vector<std::size_t> t_set = {50, 100, 200};
    std::size_t reps = 50;
    std::string noise = "gaussian";
    double sigma = 0.3;
    std::size_t n_kinks = 2;
    double sparse_lambda = 1.0;

    auto add_common = [&](CLI::App* cmd, bool with_input) {
        cmd->add_option("--config", config_path, "JSON config file; flags override it");
        if (with_input) {
            cmd->add_option("--input", cfg.input, "case CSV (date,confirmed,recovered,deaths)");
            cmd->add_option("--population", cfg.population, "population the counts refer to");
            cmd->add_option("--format", cfg.format, "cumulative|daily")->capture_default_str();
            cmd->add_option("--start-threshold", cfg.start_threshold,
                            "cumulative cases that open the analysis window")
                ->capture_default_str();
            cmd->add_flag("--censor,!--no-censor", cfg.censor_enabled,
                          "end the window when new cases go quiet");
            cmd->add_option("--censor-threshold", cfg.censor_threshold,
                            "3-day average of new cases that closes the window")
                ->capture_default_str();
            cmd->add_option("--negative-delta", cfg.negative_delta, "error|clip")
                ->capture_default_str();
        }
        cmd->add_option("--out-dir", cfg.out_dir, "output directory");
        cmd->add_option("--threads", cfg.threads,
                        "worker threads (default: KINKFILTER_THREADS or hardware)");
        cmd->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
        cmd->add_option("--node-budget", cfg.node_budget, "search node budget")
            ->capture_default_str();
        cmd->add_option("--eta", cfg.eta, "effective-zero threshold for kink counting")
            ->capture_default_str();
        cmd->add_option("--gamma", cfg.gamma, "recovery+death rate per day")
            ->capture_default_str();
    };
    auto add_grid = [&](CLI::App* cmd) {
        cmd->add_option("--kappa-set", cfg.kappa_set, "candidate kink budgets")
            ->delimiter(',')
            ->capture_default_str();
        cmd->add_option("--lambda-set", cfg.lambda_set, "candidate ridge weights")
            ->delimiter(',')
            ->capture_default_str();
    };

    CLI::App* series_cmd = app.add_subcommand("series", "ingest and transform the case data");
    add_common(series_cmd, true);

    CLI::App* tune_cmd = app.add_subcommand("tune", "leave-one-out cross-validation on the grid");
    add_common(tune_cmd, true);
    add_grid(tune_cmd);

    CLI::App* filter_cmd =
        app.add_subcommand("filter", "fit the filters (tunes first unless kappa/lambda are given)");
    add_common(filter_cmd, true);
    add_grid(filter_cmd);
    filter_cmd->add_option("--filters", cfg.filters, "sparse_hp,hp,l1,sqrt_l1,parametric")
        ->delimiter(',');
    filter_cmd->add_option("--kappa", [&fixed_kappa](const std::vector<std::string>& v) {
        fixed_kappa = static_cast<std::size_t>(std::stoul(v.front()));
        return true;
    }, "fixed kink budget (skips tuning)");
    filter_cmd->add_option("--lambda", [&fixed_lambda](const std::vector<std::string>& v) {
        fixed_lambda = std::stod(v.front());
        return true;
    }, "fixed ridge weight (skips tuning)");
    filter_cmd->add_option("--t0", cfg.t0, "break date for the parametric baseline (ISO)");

    CLI::App* report_cmd =
        app.add_subcommand("report", "surveillance tables from the tuned fit");
    add_common(report_cmd, true);
    add_grid(report_cmd);
    report_cmd->add_option("--filters", cfg.filters, "sparse_hp,hp,l1,sqrt_l1,parametric")
        ->delimiter(',');
    report_cmd->add_option("--kappa", [&fixed_kappa](const std::vector<std::string>& v) {
        fixed_kappa = static_cast<std::size_t>(std::stoul(v.front()));
        return true;
    }, "fixed kink budget (skips tuning)");
    report_cmd->add_option("--lambda", [&fixed_lambda](const std::vector<std::string>& v) {
        fixed_lambda = std::stod(v.front());
        return true;
    }, "fixed ridge weight (skips tuning)");
    report_cmd->add_option("--t0", cfg.t0, "break date for the parametric baseline (ISO)");
    report_cmd->add_option("--rho", cfg.rho, "reporting fraction for the diagnostic");

    CLI::App* run_cmd = app.add_subcommand("run", "full pipeline with manifest");
    add_common(run_cmd, true);
    add_grid(run_cmd);
    run_cmd->add_option("--filters", cfg.filters, "sparse_hp,hp,l1,sqrt_l1,parametric")
        ->delimiter(',');
    run_cmd->add_option("--t0", cfg.t0, "break date for the parametric baseline (ISO)");
    run_cmd->add_option("--rho", cfg.rho, "reporting fraction for the diagnostic");

    CLI::App* risklab_cmd = app.add_subcommand("risklab", "synthetic risk and recovery studies");
    add_common(risklab_cmd, false);
    risklab_cmd->add_option("--T-set", t_set, "sample sizes")->delimiter(',')->capture_default_str();
    risklab_cmd->add_option("--reps", reps, "replications per size")->capture_default_str();
    risklab_cmd->add_option("--noise", noise, "gaussian|scaled_t|heteroskedastic")
        ->capture_default_str();
    risklab_cmd->add_option("--sigma", sigma, "noise scale")->capture_default_str();
    risklab_cmd->add_option("--kinks", n_kinks, "true kink count")->capture_default_str();
    risklab_cmd->add_option("--sparse-lambda", sparse_lambda, "ridge weight for the fits")
        ->capture_default_str();

    // Config file first, then reparse so explicit flags win.
    try {
        app.parse(argc, argv);
        if (!config_path.empty()) {
            apply_config_file(config_path, cfg);
            // Reparse: flags present on the command line overwrite config values.
            app.clear();
            app.parse(argc, argv);
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const kf::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (series_cmd->parsed()) return cmd_series(cfg);
        if (tune_cmd->parsed()) return cmd_tune(cfg);
        if (filter_cmd->parsed()) return run_pipeline(cfg, fixed_kappa, fixed_lambda, false);
        if (report_cmd->parsed()) return run_pipeline(cfg, fixed_kappa, fixed_lambda, true);
        if (run_cmd->parsed()) return run_pipeline(cfg, fixed_kappa, fixed_lambda, true);
        if (risklab_cmd->parsed()) {
            return cmd_risklab(cfg, t_set, reps, noise, sigma, n_kinks, sparse_lambda);
        }
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const kf::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const kf::BudgetError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const kf::InvariantError& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
