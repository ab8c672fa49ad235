#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "denflow/cli.hpp"

using namespace denflow;
namespace fs = std::filesystem;

namespace {

const std::string kData = DENFLOW_TEST_DATA;

std::string data(const char* name) { return kData + "/" + name; }

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "denflow_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Run {
    int code;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int spawn(const std::string& args) {
    const std::string cmd = std::string(DENFLOW_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t column(const io::CsvTable& t, const std::string& name) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw std::runtime_error("missing column " + name);
    return static_cast<std::size_t>(it - t.header.begin());
}

}  // namespace

TEST(CliInterpolate, SmallEpsilonCrossFades) {
    const auto dir = scratch("fade");
    const auto r = run({"--quiet", "interpolate", "--rho0", data("rho0_2x2.json"), "--rho1", data("rho1_2x2.json"),
                        "--epsilon", "0.1", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.err.empty());
    const auto t = io::parse_csv(slurp(dir / "path.csv"));
    ASSERT_EQ(t.rows.size(), 21u);
    for (const auto& row : t.rows) {
        const double s = row[column(t, "t")];
        EXPECT_NEAR(row[column(t, "re_0_0")], 1.0 - s, 1e-9);
        EXPECT_NEAR(row[column(t, "re_1_1")], s, 1e-9);
        EXPECT_NEAR(row[column(t, "eig_0")], std::min(s, 1.0 - s), 1e-9);
        EXPECT_NEAR(row[column(t, "trace")], 1.0, 1e-12);
    }
    const auto sol = io::solution_from_json(io::read_json_file((dir / "solution.json").string()));
    EXPECT_LE(frob_norm(sol.X.matrix()), 1e-6);
}

TEST(CliInterpolate, LargeEpsilonStaysRankOne) {
    const auto dir = scratch("rank_one");
    const auto r = run({"-q", "interpolate", "--rho0", data("rho0_2x2.json"), "--rho1", data("rho1_2x2.json"),
                        "--epsilon", "10", "--samples", "101", "--glyphs", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = io::parse_csv(slurp(dir / "path.csv"));
    ASSERT_EQ(t.rows.size(), 101u);
    for (const auto& row : t.rows) EXPECT_LE(row[column(t, "min_eig")], 1e-9);
    const auto glyphs = io::read_json_file((dir / "glyphs.json").string());
    ASSERT_EQ(glyphs["records"].size(), 101u);
    // Glyphs reproduce the sampled matrices.
    for (std::size_t k = 0; k < 101; ++k) {
        const Matrix g = io::glyph_matrix(glyphs["records"][k]);
        const auto& row = t.rows[k];
        EXPECT_NEAR(g(0, 0).real(), row[column(t, "re_0_0")], 1e-8);
        EXPECT_NEAR(g(0, 1).real(), row[column(t, "re_0_1")], 1e-8);
        EXPECT_NEAR(g(0, 1).imag(), row[column(t, "im_0_1")], 1e-8);
        EXPECT_NEAR(g(1, 1).real(), row[column(t, "re_1_1")], 1e-8);
    }
}

TEST(CliInterpolate, IdenticalEndpointsGiveConstantPath) {
    const auto dir = scratch("identical");
    const auto r = run({"-q", "interpolate", "--rho0", data("rho0_flow.json"), "--rho1", data("rho0_flow.json"),
                        "--epsilon", "1", "--format", "json", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto sol = io::read_json_file((dir / "solution.json").string());
    EXPECT_EQ(sol["cost"]["total"].get<double>(), 0.0);
    const auto path = io::read_json_file((dir / "path.json").string());
    ASSERT_EQ(path.size(), 21u);
    for (const auto& row : path)
        EXPECT_LE(frob_norm(io::matrix_from_json(row["matrix"]) - Matrix::diagonal({1.0, 0.1})), 1e-12);
}

TEST(CliInterpolate, MaxEnumFromEnvironment) {
    const auto dir = scratch("env");
    ::setenv("DENFLOW_MAX_ENUM", "1", 1);
    const auto ok = run({"-q", "interpolate", "--rho0", data("rho0_3x3.json"), "--rho1", data("rho1_3x3.json"),
                         "--epsilon", "10", "--out", dir.string()});
    ::setenv("DENFLOW_MAX_ENUM", "zero", 1);
    const auto bad = run({"-q", "interpolate", "--rho0", data("rho0_3x3.json"), "--rho1", data("rho1_3x3.json"),
                          "--epsilon", "10", "--out", dir.string()});
    ::unsetenv("DENFLOW_MAX_ENUM");
    EXPECT_EQ(ok.code, 0) << ok.err;
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("DENFLOW_MAX_ENUM"), std::string::npos);
}

TEST(CliPath, ReportAgainstClosedForm) {
    const auto dir = scratch("path");
    const auto r = run({"-q", "path", "--rho0", data("rho0_2x2.json"), "--rho1", data("rho1_2x2.json"), "--epsilon",
                        "10", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = io::read_json_file((dir / "report.json").string());
    EXPECT_TRUE(rep["converged"].get<bool>());
    EXPECT_LE(rep["cost"].get<double>(), rep["closed_form_cost"].get<double>() + 1e-2);
    EXPECT_LE(rep["endpoint_residual"].get<double>(), 1e-4);
    for (const auto& round : rep["objective_trace"])
        for (std::size_t i = 1; i < round.size(); ++i) EXPECT_LE(round[i].get<double>(), round[i - 1].get<double>());
    const auto dp = io::read_json_file((dir / "discrete_path.json").string());
    EXPECT_EQ(dp["states"].size(), 51u);
    EXPECT_EQ(io::parse_csv(slurp(dir / "path.csv")).rows.size(), 51u);
}

TEST(CliPath, IdenticalEndpointsCostNothing) {
    const auto dir = scratch("path_identical");
    const auto r = run({"-q", "path", "--rho0", data("rho0_flow.json"), "--rho1", data("rho0_flow.json"), "--epsilon",
                        "1", "--steps", "10", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_LE(io::read_json_file((dir / "report.json").string())["cost"].get<double>(), 1e-12);
}

TEST(CliPath, NonConvergenceIsFlagged) {
    const auto dir = scratch("path_nc");
    const auto r = run({"-q", "path", "--rho0", data("rho0_2x2.json"), "--rho1", data("rho1_2x2.json"), "--epsilon",
                        "1", "--steps", "10", "--tol-end", "1e-300", "--max-rounds", "1", "--out", dir.string()});
    EXPECT_EQ(r.code, 4);
    const auto rep = io::read_json_file((dir / "report.json").string());
    EXPECT_FALSE(rep["converged"].get<bool>());
}

TEST(CliSynth, ByteStablePerSeed) {
    const auto a = scratch("synth_a"), b = scratch("synth_b"), c = scratch("synth_c");
    auto args = [&](const fs::path& out, const char* seed) {
        return std::vector<std::string>{"-q",      "synth",   "--rho0", data("rho0_flow.json"),
                                        "--x",     data("x_flow.json"), "--z", "0,0",
                                        "--times", "0.05:0.05:1",       "--noise", "0.05",
                                        "--seed",  seed,                "--out",   out.string()};
    };
    ASSERT_EQ(run(args(a, "11")).code, 0);
    ASSERT_EQ(run(args(b, "11")).code, 0);
    ASSERT_EQ(run(args(c, "12")).code, 0);
    EXPECT_EQ(slurp(a / "dataset.json"), slurp(b / "dataset.json"));
    EXPECT_NE(slurp(a / "dataset.json"), slurp(c / "dataset.json"));
    const auto ds = io::dataset_from_json(io::read_json_file((a / "dataset.json").string()));
    EXPECT_EQ(ds.size(), 20u);
}

TEST(CliSynth, NoiseFreeMatchesFlow) {
    const auto dir = scratch("synth_clean");
    ASSERT_EQ(run({"-q", "synth", "--rho0", data("rho0_flow.json"), "--x", data("x_flow.json"), "--z", "0,0", "--times",
                   "0.05:0.05:1", "--noise", "0", "--seed", "1", "--out", dir.string()})
                  .code,
              0);
    const SkewHermitian x(Matrix{{0.0, -1.6}, {1.6, 0.0}});
    for (const auto& s : io::dataset_from_json(io::read_json_file((dir / "dataset.json").string())))
        EXPECT_LE(frob_norm(s.value.matrix() - conjugate(expm_skew(x * s.t), HermitianMatrix::diagonal({1.0, 0.1})).matrix()),
                  1e-14);
}

TEST(CliSynth, RejectsBadDrift) {
    const auto dir = scratch("synth_bad");
    EXPECT_EQ(run({"-q", "synth", "--rho0", data("rho0_flow.json"), "--x", data("x_flow.json"), "--z", "0.1,0",
                   "--times", "0:0.5:1", "--noise", "0", "--seed", "1", "--out", dir.string()})
                  .code,
              3);
    EXPECT_EQ(run({"-q", "synth", "--rho0", data("rho0_flow.json"), "--x", data("rho0_flow.json"), "--z", "0,0",
                   "--times", "0:0.5:1", "--noise", "0", "--seed", "1", "--out", dir.string()})
                  .code,
              3);
}

TEST(CliRegularize, NoisyAndCleanData) {
    const auto dir = scratch("reg");
    for (const char* noise : {"0", "0.05"}) {
        const auto ds = dir / (std::string("data_") + noise);
        const auto out = dir / (std::string("fit_") + noise);
        ASSERT_EQ(run({"-q", "synth", "--rho0", data("rho0_flow.json"), "--x", data("x_flow.json"), "--z", "0,0",
                       "--times", "0.05:0.05:1", "--noise", noise, "--seed", "2024", "--out", ds.string()})
                      .code,
                  0);
        const auto r = run({"-q", "regularize", "--data", (ds / "dataset.json").string(), "--out", out.string()});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto m = io::model_from_json(io::read_json_file((out / "model.json").string()));
        if (std::string(noise) == "0") EXPECT_LE(m.objective, 1e-6);
        EXPECT_LE(frob_norm(m.X.matrix() - Matrix{{0.0, -1.6}, {1.6, 0.0}}), 1e-1);
        const auto fit = io::parse_csv(slurp(out / "fit.csv"));
        EXPECT_EQ(fit.rows.size(), 20u);
        double total = 0.0;
        for (const auto& row : fit.rows) total += row[1];
        EXPECT_NEAR(total, m.objective, 1e-12);
        const auto glyphs = io::read_json_file((out / "glyphs.json").string());
        EXPECT_EQ(glyphs["data"].size(), 20u);
        EXPECT_EQ(glyphs["fit"].size(), 20u);
    }
}

TEST(CliRegularize, RepeatedMatrix) {
    const auto dir = scratch("reg_const");
    io::json ds = io::json::array();
    for (int i = 1; i <= 10; ++i)
        ds.push_back({{"t", 0.1 * i}, {"matrix", io::read_json_file(data("rho0_flow.json"))}});
    io::write_json_file((dir / "dataset.json").string(), ds);
    const auto r = run({"-q", "regularize", "--data", (dir / "dataset.json").string(), "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = io::model_from_json(io::read_json_file((dir / "model.json").string()));
    EXPECT_LE(m.objective, 1e-6);
    for (int i = 1; i <= 10; ++i) EXPECT_LE(frob_norm(m.eval(0.1 * i).matrix() - Matrix::diagonal({1.0, 0.1})), 1e-6);
}

TEST(CliRegularize, SchemaErrors) {
    const auto dir = scratch("reg_schema");
    io::write_text_file((dir / "bad.json").string(), R"({"t": 1})");
    EXPECT_EQ(run({"-q", "regularize", "--data", (dir / "bad.json").string(), "--out", dir.string()}).code, 3);
    io::json two = io::json::array();
    for (int i = 0; i < 2; ++i) two.push_back({{"t", 0.1 * i}, {"matrix", io::read_json_file(data("rho0_flow.json"))}});
    io::write_json_file((dir / "two.json").string(), two);
    EXPECT_EQ(run({"-q", "regularize", "--data", (dir / "two.json").string(), "--out", dir.string()}).code, 3);
}

TEST(CliDecompose, ClosedFormSplits) {
    const auto dir = scratch("decompose");
    ASSERT_EQ(run({"-q", "decompose", "--rho", data("rho0_2x2.json"), "--direction", data("direction_offdiag.json"),
                   "--out", dir.string()})
                  .code,
              0);
    auto doc = io::read_json_file((dir / "decomposition.json").string());
    EXPECT_LE(frob_norm(io::matrix_from_json(doc["u"])), 1e-14);
    for (const char* k : {"orthogonality_residual", "commutation_residual", "reconstruction_residual"})
        EXPECT_LE(doc[k].get<double>(), 1e-10) << k;

    ASSERT_EQ(run({"-q", "decompose", "--rho", data("rho0_flow.json"), "--direction", data("rho1_3x3.json"), "--out",
                   dir.string()})
                  .code,
              3);
    ASSERT_EQ(run({"-q", "decompose", "--rho", data("rho0_flow.json"), "--direction", data("rho1_2x2.json"), "--out",
                   dir.string()})
                  .code,
              0);
    doc = io::read_json_file((dir / "decomposition.json").string());
    EXPECT_EQ(frob_norm(io::matrix_from_json(doc["X"])), 0.0);
    EXPECT_EQ(run({"-q", "decompose", "--rho", data("rho0_flow.json"), "--direction", data("not_hermitian.json"),
                   "--out", dir.string()})
                  .code,
              3);
}

TEST(CliExitCodes, SpawnedBinary) {
    const auto dir = scratch("spawn").string();
    const std::string pair = "--rho0 " + data("rho0_2x2.json") + " --rho1 " + data("rho1_2x2.json");
    EXPECT_EQ(spawn("interpolate " + pair + " --epsilon 1 --out " + dir), 0);
    EXPECT_EQ(spawn("interpolate --rho0 " + data("rho0_2x2.json") + " --rho1 " + data("rho_trace2.json") +
                    " --epsilon 1 --out " + dir),
              2);
    EXPECT_EQ(spawn("interpolate --rho0 " + data("not_hermitian.json") + " --rho1 " + data("rho1_2x2.json") +
                    " --epsilon 1 --out " + dir),
              3);
    EXPECT_EQ(spawn("interpolate --rho0 /nonexistent.json --rho1 " + data("rho1_2x2.json") + " --epsilon 1 --out " + dir),
              3);
    EXPECT_EQ(spawn("path " + pair + " --epsilon 1 --steps 10 --tol-end 1e-300 --max-rounds 1 --out " + dir), 4);
    EXPECT_EQ(spawn("interpolate " + pair + " --epsilon -1"), 1);
    EXPECT_EQ(spawn("frobnicate"), 1);
    EXPECT_EQ(spawn("--help"), 0);
}
