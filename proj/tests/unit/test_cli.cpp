// End-to-end checks of the command-line tool. The binary path arrives via
// KINKFILTER_CLI and the bundled fixture directory via KINKFILTER_TEST_DATA;
// both are set by ctest. The cases self-skip when run outside that harness.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kinkfilter/csv.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("KINKFILTER_CLI");
    return p ? p : "";
}

std::string fixture_path() {
    const char* p = std::getenv("KINKFILTER_TEST_DATA");
    if (!p) return "";
    return (fs::path(p) / "synthetic_epidemic.csv").string();
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("kinkfilter_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

bool harness_available() { return !cli_path().empty() && fs::exists(fixture_path()); }

}  // namespace

TEST_CASE("cli: full run emits the artifact set and is byte-deterministic") {
    if (!harness_available()) return;  // outside the ctest harness
    TempDir a("run_a"), b("run_b");
    const std::string common = "run --input " + fixture_path() +
                               " --population 1e7 --kappa-set 2 --lambda-set 4 --threads 1"
                               " --rho 0.32 --out-dir ";
    REQUIRE(run_cli(common + a.path.string()) == 0);
    REQUIRE(run_cli(common + b.path.string()) == 0);

    const std::vector<std::string> expected = {
        "series.csv",   "tuning_surface.csv", "trend_sparse_hp.csv", "trend_hp.csv",
        "trend_l1.csv", "trend_sqrt_l1.csv",  "kinks.csv",           "surveillance.csv",
        "segments.csv", "manifest.json",
    };
    for (const auto& name : expected) {
        CAPTURE(name);
        REQUIRE(fs::exists(a.path / name));
        CHECK(slurp(a.path / name) == slurp(b.path / name));
    }
    // The manifest fingerprints the input.
    const std::string manifest = slurp(a.path / "manifest.json");
    CHECK(manifest.find("fnv1a64") != std::string::npos);
    CHECK(manifest.find("0x") != std::string::npos);
}

TEST_CASE("cli: emitted series table reloads losslessly") {
    if (!harness_available()) return;
    TempDir dir("series");
    REQUIRE(run_cli("series --input " + fixture_path() + " --population 1e7 --out-dir " +
                    dir.path.string()) == 0);
    const fs::path series_csv = dir.path / "series.csv";
    REQUIRE(fs::exists(series_csv));

    // Parse every numeric cell and reformat at 15 significant digits; the
    // regenerated file must be identical byte for byte.
    kinkfilter::csv::Table table = kinkfilter::csv::read_file(series_csv.string());
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : table.rows) {
        std::vector<std::string> out_row;
        out_row.push_back(row[0]);  // date
        for (std::size_t c = 1; c < row.size(); ++c) {
            out_row.push_back(
                kinkfilter::csv::format_double(kinkfilter::csv::parse_double(row[c], "cell")));
        }
        rows.push_back(std::move(out_row));
    }
    const fs::path copy = dir.path / "series_copy.csv";
    kinkfilter::csv::write_file(copy.string(), table.header, rows);
    CHECK(slurp(series_csv) == slurp(copy));
}

TEST_CASE("cli: tuning scores are identical across thread counts") {
    if (!harness_available()) return;
    TempDir a("tune1"), b("tune2");
    const std::string common = "tune --input " + fixture_path() +
                               " --population 1e7 --kappa-set 2 --lambda-set 2,8";
    REQUIRE(run_cli(common + " --threads 1 --out-dir " + a.path.string()) == 0);
    REQUIRE(run_cli(common + " --threads 3 --out-dir " + b.path.string()) == 0);
    CHECK(slurp(a.path / "tuning_surface.csv") == slurp(b.path / "tuning_surface.csv"));
}

TEST_CASE("cli: schema violations exit with code 2") {
    if (!harness_available()) return;
    TempDir dir("schema");

    SUBCASE("empty lambda set in the config file") {
        const fs::path config = dir.path / "bad.json";
        std::ofstream(config) << R"({"grid": {"lambdas": []}})";
        CHECK(run_cli("run --config " + config.string() + " --input " + fixture_path() +
                      " --population 1e7 --out-dir " + dir.path.string()) == 2);
    }
    SUBCASE("unknown config key") {
        const fs::path config = dir.path / "unknown.json";
        std::ofstream(config) << R"({"lambda_grid": [1, 2]})";
        CHECK(run_cli("run --config " + config.string() + " --input " + fixture_path() +
                      " --population 1e7 --out-dir " + dir.path.string()) == 2);
    }
    SUBCASE("missing population") {
        CHECK(run_cli("series --input " + fixture_path() + " --out-dir " + dir.path.string()) ==
              2);
    }
    SUBCASE("parametric filter without a break date") {
        CHECK(run_cli("filter --input " + fixture_path() +
                      " --population 1e7 --filters parametric --kappa 2 --lambda 4 --out-dir " +
                      dir.path.string()) == 2);
    }
}

TEST_CASE("cli: an exhausted node budget exits with code 3") {
    if (!harness_available()) return;
    TempDir dir("budget");
    CHECK(run_cli("filter --input " + fixture_path() +
                  " --population 1e7 --kappa 3 --lambda 1 --node-budget 0 --out-dir " +
                  dir.path.string()) == 3);
}

TEST_CASE("cli: fixed kappa/lambda skips tuning and flags kinks") {
    if (!harness_available()) return;
    TempDir dir("fixed");
    REQUIRE(run_cli("filter --input " + fixture_path() +
                    " --population 1e7 --kappa 2 --lambda 4 --out-dir " + dir.path.string()) == 0);
    kinkfilter::csv::Table trend =
        kinkfilter::csv::read_file((dir.path / "trend_sparse_hp.csv").string());
    int kink_flags = 0;
    const int flag_col = trend.column("kink_flag");
    REQUIRE(flag_col >= 0);
    for (const auto& row : trend.rows) {
        if (row[static_cast<std::size_t>(flag_col)] == "1") ++kink_flags;
    }
    CHECK(kink_flags == 2);
    REQUIRE(fs::exists(dir.path / "kinks.csv"));
}

TEST_CASE("cli: synthetic study honours zero noise and rejects unknown laws") {
    if (!harness_available()) return;
    TempDir dir("risklab");

    SUBCASE("zero-noise study has zero risk at every length") {
        REQUIRE(run_cli("risklab --T-set 30,60 --reps 3 --sigma 0 --kinks 2 --seed 7"
                        " --sparse-lambda 1e-8 --out-dir " +
                        dir.path.string()) == 0);
        kinkfilter::csv::Table study =
            kinkfilter::csv::read_file((dir.path / "study.csv").string());
        const int risk_col = study.column("risk");
        const int recovery_col = study.column("exact_recovery");
        REQUIRE(risk_col >= 0);
        for (const auto& row : study.rows) {
            CHECK(kinkfilter::csv::parse_double(row[static_cast<std::size_t>(risk_col)], "risk") <=
                  1e-12);
            CHECK(row[static_cast<std::size_t>(recovery_col)] == "1");
        }
    }
    SUBCASE("unknown noise law exits with code 2") {
        CHECK(run_cli("risklab --T-set 30 --reps 2 --noise cauchy --out-dir " +
                      dir.path.string()) == 2);
    }
}
