#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "denflow/transcription.hpp"
#include "test_util.hpp"

using namespace denflow;

namespace {

const double kSqrt2 = std::sqrt(2.0);

HermitianMatrix diag(std::initializer_list<double> d) { return HermitianMatrix::diagonal(RealVector(d)); }

// Controls that replay a closed-form solution on an N-step grid.
DiscretePath replay(const GeodesicSolution& sol, const HermitianMatrix& rho0, int steps) {
    std::vector<SkewHermitian> xs(steps, sol.X);
    std::vector<HermitianMatrix> us;
    for (int k = 0; k < steps; ++k) us.push_back(conjugate(expm_skew(sol.X * (double(k) / steps)), sol.Z));
    return simulate_path(rho0, xs, us);
}

DiscretePath constant_controls(const HermitianMatrix& rho0, const SkewHermitian& x, const HermitianMatrix& u, int steps) {
    return simulate_path(rho0, std::vector<SkewHermitian>(steps, x), std::vector<HermitianMatrix>(steps, u));
}

}  // namespace

TEST(Step, PureRotationKeepsSpectrum) {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + trial % 4;
        const auto rho = denflow::testing::random_psd(n, rng);
        const auto r = step(rho, denflow::testing::random_skew(n, rng), HermitianMatrix(n), 0.1);
        const auto a = eig_hermitian(rho).values, b = eig_hermitian(r.rho_next).values;
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
        EXPECT_EQ(frob_norm(r.u_used.matrix()), 0.0);
    }
}

TEST(Step, LinearDrift) {
    const auto r = step(diag({1.0, 0.0}), SkewHermitian(2), diag({-1.0, 1.0}), 0.1);
    EXPECT_LE(frob_norm(r.rho_next.matrix() - diag({0.9, 0.1}).matrix()), 1e-15);
}

TEST(Step, ProjectsRawDrift) {
    std::mt19937_64 rng(67);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 4;
        const auto rho = denflow::testing::random_psd(n, rng);
        const auto r = step(rho, denflow::testing::random_skew(n, rng), denflow::testing::random_hermitian(n, rng), 0.05);
        EXPECT_LE(frob_norm(commutator(r.u_used.matrix(), rho.matrix())), 1e-9);
        EXPECT_LE(std::abs(r.u_used.trace()), 1e-10);
        EXPECT_NEAR(r.rho_next.trace(), rho.trace(), 1e-10);
    }
}

TEST(DiscreteCost, ZeroControls) {
    const auto path = constant_controls(diag({0.5, 0.5}), SkewHermitian(2), HermitianMatrix(2), 10);
    EXPECT_EQ(discrete_cost(path, 3.0), 0.0);
}

TEST(DiscreteCost, ClosedFormReplayMatchesContinuousCost) {
    const auto rho0 = diag({1.0, 2.0, 3.0}), rho1 = diag({3.0, 2.0, 1.0});
    for (double eps : {0.1, 1.0, 10.0}) {
        const auto sol = solve_problem_b(rho0, rho1, eps);
        EXPECT_NEAR(discrete_cost(replay(sol, rho0, 50), eps), sol.cost_total, 1e-9);
    }
}

TEST(DiscreteCost, DoublingStepsLeavesConstantCostUnchanged) {
    // A rotation alone and a drift that stays in the commutant: both controls
    // keep their norm on every step.
    const SkewHermitian x(Matrix{{0.0, -0.4}, {0.4, 0.0}});
    const auto rho0 = diag({0.6, 0.4});
    for (const auto& [xc, uc] : {std::pair{x, HermitianMatrix(2)}, std::pair{SkewHermitian(2), diag({-0.1, 0.1})}}) {
        const double a = discrete_cost(constant_controls(rho0, xc, uc, 20), 2.0);
        const double b = discrete_cost(constant_controls(rho0, xc, uc, 40), 2.0);
        EXPECT_GT(a, 0.0);
        EXPECT_NEAR(a, b, 1e-9);
    }
}

TEST(SimulatePath, ReplaysClosedFormPath) {
    const auto rho0 = diag({0.8, 0.2}), rho1 = HermitianMatrix(Matrix{{0.3, 0.2}, {0.2, 0.7}});
    const auto sol = solve_problem_b(rho0, rho1, 1.0);
    const auto path = replay(sol, rho0, 1000);
    for (int k = 0; k <= 1000; k += 50)
        EXPECT_LE(frob_norm(path.states[k].matrix() - eval_path(sol, rho0, k / 1000.0).rho.matrix()), 1e-4);
    for (const auto& s : path.states) EXPECT_NEAR(s.trace(), 1.0, 1e-9);
}

TEST(SimulatePath, FirstOrderRefinement) {
    // Constant raw drift is re-projected each step, so the scheme is only
    // first-order accurate; the error halves with the step.
    const auto rho0 = diag({0.7, 0.3});
    const SkewHermitian x(Matrix{{0.0, -1.0}, {1.0, 0.0}});
    const auto u = diag({-0.2, 0.2});
    const auto reference = constant_controls(rho0, x, u, 10240).states.back();
    std::vector<double> log_dt, log_err;
    for (int steps : {10, 20, 40, 80, 160}) {
        const auto end = constant_controls(rho0, x, u, steps).states.back();
        log_dt.push_back(std::log(1.0 / steps));
        log_err.push_back(std::log(frob_norm(end.matrix() - reference.matrix())));
    }
    const double mx = std::accumulate(log_dt.begin(), log_dt.end(), 0.0) / log_dt.size();
    const double my = std::accumulate(log_err.begin(), log_err.end(), 0.0) / log_err.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < log_dt.size(); ++i) {
        sxy += (log_dt[i] - mx) * (log_err[i] - my);
        sxx += (log_dt[i] - mx) * (log_dt[i] - mx);
    }
    EXPECT_GE(sxy / sxx, 0.9);
}

TEST(SolveProblemA, IdenticalEndpointsCostNothing) {
    const auto rho = diag({0.6, 0.4});
    const auto path = solve_problem_a(rho, rho, 1.0);
    EXPECT_TRUE(path.converged);
    EXPECT_LE(path.cost, 1e-12);
    EXPECT_LE(path.endpoint_residual, 1e-12);
}

TEST(SolveProblemA, NeverWorseThanClosedForm) {
    const auto rho0 = diag({1.0, 0.0}), rho1 = diag({0.0, 1.0});
    for (double eps : {0.1, 1.0, 10.0}) {
        SCOPED_TRACE(eps);
        const auto geo = solve_problem_b(rho0, rho1, eps);
        const auto path = solve_problem_a(rho0, rho1, eps);
        EXPECT_TRUE(path.converged);
        EXPECT_EQ(path.steps, 50);
        EXPECT_LE(path.cost, geo.cost_total + 1e-2);
        EXPECT_LE(path.endpoint_residual, 1e-4);
        EXPECT_NEAR(path.cost, discrete_cost(path, eps), 1e-15);
        for (const auto& round : path.objective_trace)
            for (std::size_t i = 1; i < round.size(); ++i) EXPECT_LE(round[i], round[i - 1]);
        for (std::size_t k = 0; k < path.u.size(); ++k) {
            EXPECT_LE(frob_norm(commutator(path.u[k].matrix(), path.states[k].matrix())), 1e-8);
            EXPECT_LE(std::abs(path.u[k].trace()), 1e-10);
        }
        for (const auto& s : path.states) EXPECT_NEAR(s.trace(), 1.0, 1e-9);
    }
}

TEST(SolveProblemA, SmallEpsilonStaysScalingDominant) {
    const auto path = solve_problem_a(diag({1.0, 0.0}), diag({0.0, 1.0}), 0.1);
    double rotation = 0.0;
    for (const auto& x : path.X) rotation += frob_norm(x.matrix()) * path.dt;
    EXPECT_LE(rotation, 0.05);
    EXPECT_NEAR(path.cost, 0.1 * kSqrt2, 1e-2);
}

TEST(SolveProblemA, LargeEpsilonRotates) {
    const auto path = solve_problem_a(diag({1.0, 0.0}), diag({0.0, 1.0}), 10.0);
    double rotation = 0.0;
    for (const auto& x : path.X) rotation += frob_norm(x.matrix()) * path.dt;
    EXPECT_NEAR(rotation, kPi / kSqrt2, 1e-2);
    for (const auto& s : path.states) EXPECT_GE(min_eigenvalue(s), -1e-6);
}

TEST(SolveProblemA, RecoversFromPerturbedControls) {
    // Over-rotated start misses the endpoint; the penalty pulls it back.
    const auto rho0 = diag({1.0, 0.0}), rho1 = diag({0.0, 1.0});
    const double a = 1.3 * kPi / 2;
    std::vector<SkewHermitian> xs(20, SkewHermitian(Matrix{{0.0, -a}, {a, 0.0}}));
    std::vector<HermitianMatrix> us(20, HermitianMatrix(2));
    TranscriptionOptions opts;
    opts.max_iterations = 200;
    const auto start = simulate_path(rho0, xs, us);
    ASSERT_GT(frob_norm(start.states.back().matrix() - rho1.matrix()), 0.5);
    const auto path = solve_problem_a(rho0, rho1, 10.0, xs, us, opts);
    EXPECT_TRUE(path.converged);
    EXPECT_LE(path.endpoint_residual, 1e-4);
    EXPECT_NEAR(path.cost, kPi / kSqrt2, 1e-2);
    EXPECT_EQ(path.steps, 20);
    for (const auto& round : path.objective_trace)
        for (std::size_t i = 1; i < round.size(); ++i) EXPECT_LE(round[i], round[i - 1]);
}

TEST(SolveProblemA, RejectsBadInput) {
    EXPECT_THROW(solve_problem_a(diag({1.0, 0.0}), diag({0.0, 2.0}), 1.0), InfeasibleError);
}

TEST(SolveProblemA, RejectsTooFewSteps) {
    TranscriptionOptions opts;
    opts.steps = 1;
    EXPECT_THROW(solve_problem_a(diag({1.0, 0.0}), diag({0.0, 1.0}), 1.0, opts), std::invalid_argument);
}
