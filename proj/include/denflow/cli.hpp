// Command-line front end. run() is the whole program; main() only forwards to it,
// so tests can drive every subcommand in-process.
//
// Exit codes: 0 ok, 1 usage or unexpected error, 2 infeasible endpoints,
// 3 I/O or schema error, 4 non-converged, 5 stalled fit.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "denflow/geodesic.hpp"
#include "denflow/io.hpp"
#include "denflow/regularize.hpp"
#include "denflow/tangent.hpp"
#include "denflow/transcription.hpp"

namespace denflow::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInfeasible = 2, kIoError = 3, kNotConverged = 4, kStalled = 5 };

/// "a:h:b" (inclusive, endpoints exact) or a comma-separated list.
inline RealVector parse_times(const std::string& spec) {
    RealVector out;
    auto number = [&](const std::string& s) {
        double v = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
            throw io::SchemaError("times: bad number '" + s + "'");
        return v;
    };
    if (spec.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::string cell;
        std::istringstream in(spec);
        while (std::getline(in, cell, ':')) parts.push_back(cell);
        if (parts.size() != 3) throw io::SchemaError("times: expected start:step:end");
        const double a = number(parts[0]), h = number(parts[1]), b = number(parts[2]);
        if (!(h > 0.0) || b < a) throw io::SchemaError("times: need step > 0 and end >= start");
        const auto m = static_cast<long>(std::floor((b - a) / h + 1e-9));
        if (m > 1000000) throw io::SchemaError("times: too many samples");
        // Grids anchored on a multiple of the step are generated as (k + i) h so
        // that 0.05:0.05:1 gives the same values as 0.05 * i.
        const double k = std::round(a / h);
        const bool anchored = std::abs(a - k * h) <= 1e-12 * std::max(1.0, std::abs(a));
        for (long i = 0; i <= m; ++i) out.push_back(anchored ? (k + double(i)) * h : a + double(i) * h);
        if (std::abs(out.back() - b) <= 1e-9 * std::max(1.0, std::abs(b))) out.back() = b;
    } else {
        std::string cell;
        std::istringstream in(spec);
        while (std::getline(in, cell, ',')) out.push_back(number(cell));
    }
    if (out.empty()) throw io::SchemaError("times: empty");
    return out;
}

inline RealVector parse_csv_vector(const std::string& spec) {
    RealVector out;
    std::string cell;
    std::istringstream in(spec);
    while (std::getline(in, cell, ',')) {
        double v = 0.0;
        const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (cell.empty() || r.ec != std::errc() || r.ptr != cell.data() + cell.size())
            throw io::SchemaError("bad number '" + cell + "'");
        out.push_back(v);
    }
    return out;
}

namespace detail {

struct Context {
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;

    std::ostream& log() {
        static std::ostream null(nullptr);
        return quiet ? null : err;
    }
};

inline std::string prepare_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io::IoError("cannot create " + dir + ": " + ec.message());
    return dir;
}

inline std::string join(const std::string& dir, const char* name) { return (std::filesystem::path(dir) / name).string(); }

inline int resolve_max_enum(const std::optional<int>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("DENFLOW_MAX_ENUM")) {
        int v = 0;
        const std::string s(env);
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v < 1)
            throw std::invalid_argument("DENFLOW_MAX_ENUM must be a positive integer");
        return v;
    }
    return GeodesicOptions{}.max_enum;
}

struct EndpointArgs {
    std::string rho0, rho1, out = ".", format = "csv";
    double epsilon = 0.0;
    int samples = 21;
    std::optional<int> max_enum;
    bool glyphs = false;
};

inline void add_endpoint_flags(CLI::App* sub, EndpointArgs& a) {
    sub->add_option("--rho0", a.rho0, "start matrix (JSON)")->required();
    sub->add_option("--rho1", a.rho1, "end matrix (JSON)")->required();
    sub->add_option("--epsilon", a.epsilon, "scaling weight")->required()->check(CLI::NonNegativeNumber);
    sub->add_option("--samples", a.samples, "path samples")->check(CLI::Range(2, 100000));
    sub->add_option("--max-enum", a.max_enum, "exhaustive matching cap (env DENFLOW_MAX_ENUM)")
        ->check(CLI::Range(1, 12));
    sub->add_option("--out", a.out, "output directory");
    sub->add_option("--format", a.format, "sampled path format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--glyphs", a.glyphs, "also write glyphs.json");
}

inline void write_rows(const std::string& dir, const std::string& format, const std::vector<io::PathRow>& rows,
                       bool glyphs) {
    if (format == "json")
        io::write_json_file(join(dir, "path.json"), io::path_json(rows));
    else
        io::write_text_file(join(dir, "path.csv"), io::path_csv(rows));
    if (glyphs) {
        io::json records = io::json::array();
        for (const auto& r : rows) records.push_back(io::glyph_record(r.t, r.rho));
        io::write_json_file(join(dir, "glyphs.json"), {{"records", std::move(records)}});
    }
}

inline int interpolate(Context& ctx, const EndpointArgs& a) {
    const auto rho0 = io::read_hermitian(a.rho0), rho1 = io::read_hermitian(a.rho1);
    if (rho0.size() != rho1.size()) throw io::SchemaError("rho0 and rho1 differ in dimension");
    GeodesicOptions opts;
    opts.max_enum = resolve_max_enum(a.max_enum);
    const auto sol = solve_problem_b(rho0, rho1, a.epsilon, opts);
    const auto diag = diagnose(sol, rho0, rho1);
    const auto dir = prepare_dir(a.out);
    io::write_json_file(join(dir, "solution.json"), io::solution_to_json(sol, diag));
    std::vector<io::PathRow> rows;
    for (int k = 0; k < a.samples; ++k) {
        const double t = double(k) / (a.samples - 1);
        rows.push_back({t, eval_path(sol, rho0, t).rho});
    }
    write_rows(dir, a.format, rows, a.glyphs);
    ctx.log() << "interpolate: cost " << sol.cost_total << " (rotation " << sol.cost_rotation << ", scaling "
              << sol.cost_scaling << "), endpoint residual " << diag.endpoint_residual << "\n";
    return kOk;
}

struct PathArgs {
    EndpointArgs endpoints;
    int steps = 50;
    double tol_end = 1e-4;
    int max_rounds = 12;
};

inline int path(Context& ctx, const PathArgs& a) {
    const auto rho0 = io::read_hermitian(a.endpoints.rho0), rho1 = io::read_hermitian(a.endpoints.rho1);
    if (rho0.size() != rho1.size()) throw io::SchemaError("rho0 and rho1 differ in dimension");
    TranscriptionOptions opts;
    opts.steps = a.steps;
    opts.tol_end = a.tol_end;
    opts.max_rounds = a.max_rounds;
    opts.geodesic.max_enum = resolve_max_enum(a.endpoints.max_enum);
    const double eps = a.endpoints.epsilon;
    const auto closed = solve_problem_b(rho0, rho1, eps, opts.geodesic);
    const auto p = solve_problem_a(rho0, rho1, eps, opts);
    const auto dir = prepare_dir(a.endpoints.out);
    io::write_json_file(join(dir, "discrete_path.json"), io::discrete_path_to_json(p, eps));
    io::write_json_file(join(dir, "report.json"), io::path_report(p, eps, closed.cost_total));
    std::vector<io::PathRow> rows;
    for (int k = 0; k <= p.steps; ++k) rows.push_back({k * p.dt, p.states[k]});
    write_rows(dir, a.endpoints.format, rows, a.endpoints.glyphs);
    ctx.log() << "path: cost " << p.cost << " (closed form " << closed.cost_total << "), endpoint residual "
              << p.endpoint_residual << ", rounds " << p.rounds << (p.converged ? "" : ", NOT converged") << "\n";
    return p.converged ? kOk : kNotConverged;
}

struct RegularizeArgs {
    std::string data, out = ".";
    int seeds = 5;
    int max_iters = 5000;
    bool squared = false;
    std::uint64_t seed = 0;
};

inline int regularize(Context& ctx, const RegularizeArgs& a) {
    const auto samples = io::dataset_from_json(io::read_json_file(a.data));
    if (samples.size() < 3) throw io::SchemaError("dataset: need at least 3 samples");
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].value.size() != samples[0].value.size()) throw io::SchemaError("dataset: dimension mismatch");
        if (!(samples[i].t > samples[i - 1].t)) throw io::SchemaError("dataset: times must be strictly increasing");
    }
    RegularizationOptions opts;
    opts.seeds = a.seeds;
    opts.max_iters = a.max_iters;
    opts.squared = a.squared;
    opts.seed = a.seed;
    const auto m = solve_regularization(samples, opts);
    const auto dir = prepare_dir(a.out);
    io::write_json_file(join(dir, "model.json"), io::model_to_json(m, a.squared));
    io::write_text_file(join(dir, "fit.csv"), io::fit_csv(m, samples));
    io::json data = io::json::array(), fit = io::json::array();
    for (const auto& s : samples) {
        data.push_back(io::glyph_record(s.t, s.value));
        fit.push_back(io::glyph_record(s.t, m.eval(s.t)));
    }
    io::write_json_file(join(dir, "glyphs.json"), {{"data", std::move(data)}, {"fit", std::move(fit)}});
    ctx.log() << "regularize: objective " << m.objective << " after " << m.iterations << " iterations (start "
              << m.start << ")" << (m.stalled ? ", STALLED" : "") << "\n";
    return m.stalled ? kStalled : kOk;
}

struct DecomposeArgs {
    std::string rho, direction, out = ".";
};

inline int decompose(Context& ctx, const DecomposeArgs& a) {
    const auto rho = io::read_hermitian(a.rho), dir_m = io::read_hermitian(a.direction);
    if (rho.size() != dir_m.size()) throw io::SchemaError("rho and direction differ in dimension");
    const auto split = split_tangent(rho, dir_m);
    const auto doc = io::decomposition_to_json(rho, dir_m, split);
    const auto dir = prepare_dir(a.out);
    io::write_json_file(join(dir, "decomposition.json"), doc);
    ctx.log() << "decompose: |X| " << frob_norm(split.X.matrix()) << ", |u| " << frob_norm(split.u.matrix())
              << ", commutation residual " << doc["commutation_residual"].get<double>() << "\n";
    return kOk;
}

struct SynthArgs {
    std::string rho0, x, z, times, out = ".";
    double noise = 0.0;
    std::uint64_t seed = 0;
    bool complex = false;
};

inline int synth(Context& ctx, const SynthArgs& a) {
    const auto rho0 = io::read_hermitian(a.rho0);
    const auto x = io::read_skew(a.x);
    const auto z = parse_csv_vector(a.z);
    if (x.size() != rho0.size() || z.size() != rho0.size()) throw io::SchemaError("synth: dimension mismatch");
    double sz = 0.0;
    for (double v : z) sz += v;
    if (std::abs(sz) > 1e-12) throw io::SchemaError("synth: z must sum to zero");
    const auto samples = synth_noisy_path(rho0, x, z, parse_times(a.times), a.noise, a.seed, a.complex);
    const auto dir = prepare_dir(a.out);
    io::write_json_file(join(dir, "dataset.json"), io::dataset_to_json(samples));
    ctx.log() << "synth: " << samples.size() << " samples\n";
    return kOk;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Interpolation and regularization of positive-semidefinite matrix flows"};
    app.name("denflow");
    app.require_subcommand(1);
    detail::Context ctx{out, err};
    app.add_flag("--quiet,-q", ctx.quiet, "suppress progress logs");

    std::function<int()> action;

    detail::EndpointArgs interp;
    auto* s_interp = app.add_subcommand("interpolate", "constant-control interpolation between two matrices");
    detail::add_endpoint_flags(s_interp, interp);
    s_interp->callback([&] { action = [&] { return detail::interpolate(ctx, interp); }; });

    detail::PathArgs path;
    auto* s_path = app.add_subcommand("path", "time-varying controls on a discrete grid");
    detail::add_endpoint_flags(s_path, path.endpoints);
    s_path->add_option("--steps", path.steps, "grid steps")->check(CLI::Range(2, 100000));
    s_path->add_option("--tol-end", path.tol_end, "endpoint tolerance")->check(CLI::PositiveNumber);
    s_path->add_option("--max-rounds", path.max_rounds, "penalty continuation rounds")->check(CLI::Range(1, 1000));
    s_path->callback([&] { action = [&] { return detail::path(ctx, path); }; });

    detail::RegularizeArgs reg;
    auto* s_reg = app.add_subcommand("regularize", "fit a constant-control flow to noisy samples");
    s_reg->add_option("--data", reg.data, "dataset (JSON array of {t, matrix})")->required();
    s_reg->add_option("--seeds", reg.seeds, "multi-start count")->check(CLI::Range(1, 1000));
    s_reg->add_option("--max-iters", reg.max_iters, "iteration cap per start")->check(CLI::Range(1, 10000000));
    s_reg->add_flag("--squared", reg.squared, "sum of squared misfits");
    s_reg->add_option("--seed", reg.seed, "multi-start perturbation seed");
    s_reg->add_option("--out", reg.out, "output directory");
    s_reg->callback([&] { action = [&] { return detail::regularize(ctx, reg); }; });

    detail::DecomposeArgs dec;
    auto* s_dec = app.add_subcommand("decompose", "split a tangent direction into rotation and scaling");
    s_dec->add_option("--rho", dec.rho, "base point (JSON)")->required();
    s_dec->add_option("--direction", dec.direction, "tangent direction (JSON)")->required();
    s_dec->add_option("--out", dec.out, "output directory");
    s_dec->callback([&] { action = [&] { return detail::decompose(ctx, dec); }; });

    detail::SynthArgs syn;
    auto* s_syn = app.add_subcommand("synth", "sample a noisy flow");
    s_syn->add_option("--rho0", syn.rho0, "initial matrix (JSON)")->required();
    s_syn->add_option("--x", syn.x, "skew-Hermitian generator (JSON)")->required();
    s_syn->add_option("--z", syn.z, "eigenvalue drift, comma separated, ascending-eigenvalue order")->required();
    s_syn->add_option("--times", syn.times, "start:step:end or comma list")->required();
    s_syn->add_option("--noise", syn.noise, "uniform noise amplitude")->required()->check(CLI::NonNegativeNumber);
    s_syn->add_option("--seed", syn.seed, "noise seed")->required();
    s_syn->add_flag("--complex", syn.complex, "imaginary noise on off-diagonal entries");
    s_syn->add_option("--out", syn.out, "output directory");
    s_syn->callback([&] { action = [&] { return detail::synth(ctx, syn); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        return action();
    } catch (const InfeasibleError& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const io::IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kIoError;
    } catch (const io::SchemaError& e) {
        err << "schema error: " << e.what() << "\n";
        return kIoError;
    } catch (const ConvergenceError& e) {
        err << "not converged: " << e.what() << "\n";
        return kNotConverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"denflow"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace denflow::cli
