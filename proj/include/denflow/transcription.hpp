// Direct transcription of the time-varying problem
//
//   minimize  int_0^1 ||X(t)||_F + eps ||u(t)||_F dt
//   s.t.      rho' = [X, rho] + u,  u in the traceless commutant of rho,
//             rho(0) = rho0, rho(1) = rho1, rho >= 0
//
// on a uniform grid of N exponential-Euler steps
//
//   rho_{k+1} = e^{X_k dt} (rho_k + u_k dt) e^{-X_k dt},  u_k = P_{rho_k}(u_raw_k).
//
// Hermiticity, trace and the commutant constraint hold by construction; the
// endpoint and positivity constraints are penalized, with weights doubled
// between rounds until the endpoint residual meets its tolerance.
#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <thread>
#include <vector>

#include "denflow/geodesic.hpp"
#include "denflow/linalg.hpp"
#include "denflow/tangent.hpp"

namespace denflow {

struct StepResult {
    HermitianMatrix rho_next;
    HermitianMatrix u_used;
};

inline StepResult step(const EigenDecomposition& rho_eig, const HermitianMatrix& rho, const SkewHermitian& x,
                       const HermitianMatrix& u_raw, double dt, const TangentOptions& opts = {}) {
    HermitianMatrix u = project_commutant(rho_eig, u_raw, opts);
    const HermitianMatrix drifted(rho.matrix() + u.matrix() * dt);
    return {conjugate(expm_skew(x * dt), drifted), std::move(u)};
}

inline StepResult step(const HermitianMatrix& rho, const SkewHermitian& x, const HermitianMatrix& u_raw, double dt,
                       const TangentOptions& opts = {}) {
    return step(eig_hermitian(rho), rho, x, u_raw, dt, opts);
}

struct DiscretePath {
    int steps = 0;
    double dt = 0.0;
    std::vector<HermitianMatrix> states;  // rho_0 .. rho_N
    std::vector<SkewHermitian> X;         // X_0 .. X_{N-1}
    std::vector<HermitianMatrix> u;       // projected u_0 .. u_{N-1}
    double cost = 0.0;
    double endpoint_residual = 0.0;
    int rounds = 0;
    bool converged = false;
    /// Penalized objective at every accepted iterate, one list per round.
    std::vector<std::vector<double>> objective_trace;
};

/// sum_k (||X_k||_F + eps ||u_k||_F) dt
inline double discrete_cost(const DiscretePath& path, double epsilon) {
    double s = 0.0;
    for (std::size_t k = 0; k < path.X.size(); ++k)
        s += (frob_norm(path.X[k].matrix()) + epsilon * frob_norm(path.u[k].matrix())) * path.dt;
    return s;
}

/// Rolls out controls from rho0; u_raw entries are projected per step.
inline DiscretePath simulate_path(const HermitianMatrix& rho0, const std::vector<SkewHermitian>& x,
                                  const std::vector<HermitianMatrix>& u_raw, const TangentOptions& opts = {}) {
    if (x.size() != u_raw.size() || x.empty()) throw DimensionError("simulate_path: control sequences must match");
    DiscretePath path;
    path.steps = static_cast<int>(x.size());
    path.dt = 1.0 / path.steps;
    path.states.reserve(x.size() + 1);
    path.states.push_back(rho0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        auto r = step(path.states.back(), x[k], u_raw[k], path.dt, opts);
        path.states.push_back(std::move(r.rho_next));
        path.X.push_back(x[k]);
        path.u.push_back(std::move(r.u_used));
    }
    return path;
}

struct TranscriptionOptions {
    int steps = 50;
    double tol_end = 1e-4;
    int max_rounds = 12;
    double endpoint_weight = 1e4;
    double positivity_weight = 1e4;
    int max_iterations = 60;  // per round
    double fd_step = 1e-6;
    double smoothing = 1e-8;
    double relative_tolerance = 1e-12;
    int lbfgs_history = 8;
    bool parallel = true;
    GeodesicOptions geodesic;
    TangentOptions tangent;
};

namespace detail {

inline double smooth_norm(const Matrix& a, double delta) {
    const double s = frob_norm(a);
    return std::sqrt(s * s + delta * delta) - delta;
}

class TranscriptionObjective {
public:
    TranscriptionObjective(const HermitianMatrix& rho0, const HermitianMatrix& rho1, double epsilon,
                           const TranscriptionOptions& opts)
        : rho0_(rho0), rho1_(rho1), eps_(epsilon), opts_(opts), n_(rho0.size()),
          steps_(static_cast<std::size_t>(opts.steps)), dt_(1.0 / opts.steps) {}

    std::size_t block() const { return 2 * n_ * n_; }
    std::size_t dimension() const { return steps_ * block(); }

    void set_weights(double w_end, double w_pos) {
        w_end_ = w_end;
        w_pos_ = w_pos;
    }

    SkewHermitian control_x(const RealVector& p, std::size_t k) const { return unpack_skew(n_, p.data() + k * block()); }
    HermitianMatrix control_u(const RealVector& p, std::size_t k) const {
        return unpack_hermitian(n_, p.data() + k * block() + n_ * n_);
    }

    struct Trajectory {
        std::vector<HermitianMatrix> states;
        std::vector<EigenDecomposition> eigs;
        RealVector prefix;  // prefix[k]: terms independent of controls k..N-1
        double value = 0.0;
    };

    Trajectory rollout(const RealVector& p) const {
        Trajectory tr;
        tr.states.reserve(steps_ + 1);
        tr.eigs.reserve(steps_ + 1);
        tr.prefix.assign(steps_ + 1, 0.0);
        tr.states.push_back(rho0_);
        tr.eigs.push_back(eig_hermitian(rho0_));
        double acc = 0.0;
        for (std::size_t k = 0; k < steps_; ++k) {
            tr.prefix[k] = acc;
            const auto x = control_x(p, k);
            auto r = step(tr.eigs[k], tr.states[k], x, control_u(p, k), dt_, opts_.tangent);
            acc += control_cost(x, r.u_used);
            tr.states.push_back(std::move(r.rho_next));
            tr.eigs.push_back(eig_hermitian(tr.states.back()));
            acc += positivity_term(tr.eigs.back());
        }
        tr.prefix[steps_] = acc;
        tr.value = acc + endpoint_term(tr.states.back());
        return tr;
    }

    /// Objective when only controls k.. differ from the trajectory's parameters.
    double suffix_value(const Trajectory& base, const RealVector& p, std::size_t k) const {
        double acc = base.prefix[k];
        HermitianMatrix rho = base.states[k];
        EigenDecomposition e = base.eigs[k];
        for (std::size_t j = k; j < steps_; ++j) {
            const auto x = control_x(p, j);
            auto r = step(e, rho, x, control_u(p, j), dt_, opts_.tangent);
            acc += control_cost(x, r.u_used);
            rho = std::move(r.rho_next);
            e = eig_hermitian(rho);
            acc += positivity_term(e);
        }
        return acc + endpoint_term(rho);
    }

    RealVector gradient(const RealVector& p, const Trajectory& base) const {
        RealVector g(p.size());
        auto work = [&](std::size_t begin, std::size_t end) {
            RealVector q = p;
            for (std::size_t i = begin; i < end; ++i) {
                const double h = opts_.fd_step * std::max(1.0, std::abs(p[i]));
                const std::size_t k = i / block();
                q[i] = p[i] + h;
                const double fp = suffix_value(base, q, k);
                q[i] = p[i] - h;
                const double fm = suffix_value(base, q, k);
                q[i] = p[i];
                g[i] = (fp - fm) / (2.0 * h);
            }
        };
        const std::size_t threads =
            opts_.parallel ? std::max<std::size_t>(1, std::thread::hardware_concurrency()) : std::size_t{1};
        if (threads <= 1) {
            work(0, p.size());
            return g;
        }
        std::vector<std::future<void>> jobs;
        const std::size_t chunk = (p.size() + threads - 1) / threads;
        for (std::size_t begin = 0; begin < p.size(); begin += chunk)
            jobs.push_back(std::async(std::launch::async, work, begin, std::min(p.size(), begin + chunk)));
        for (auto& j : jobs) j.get();
        return g;
    }

    double endpoint_residual(const Trajectory& tr) const {
        return frob_norm(tr.states.back().matrix() - rho1_.matrix());
    }

private:
    double control_cost(const SkewHermitian& x, const HermitianMatrix& u) const {
        return (smooth_norm(x.matrix(), opts_.smoothing) + eps_ * smooth_norm(u.matrix(), opts_.smoothing)) * dt_;
    }
    double positivity_term(const EigenDecomposition& e) const {
        const double neg = std::max(0.0, -e.values.front());
        return w_pos_ * neg * neg;
    }
    double endpoint_term(const HermitianMatrix& rho) const {
        const double r = frob_norm(rho.matrix() - rho1_.matrix());
        return w_end_ * r * r;
    }

    HermitianMatrix rho0_, rho1_;
    double eps_;
    TranscriptionOptions opts_;
    std::size_t n_, steps_;
    double dt_;
    double w_end_ = 0.0, w_pos_ = 0.0;
};

inline double dot(const RealVector& a, const RealVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

/// Descent from caller-supplied controls; opts.steps is taken from their length.
inline DiscretePath solve_problem_a(const HermitianMatrix& rho0, const HermitianMatrix& rho1, double epsilon,
                                    const std::vector<SkewHermitian>& x0, const std::vector<HermitianMatrix>& u0,
                                    TranscriptionOptions opts = {}) {
    if (x0.size() != u0.size()) throw DimensionError("solve_problem_a: control sequences must match");
    if (x0.size() < 2) throw std::invalid_argument("solve_problem_a: need at least 2 steps");
    if (rho0.size() != rho1.size()) throw DimensionError("solve_problem_a: dimension mismatch");
    if (std::abs(rho0.trace() - rho1.trace()) > opts.geodesic.trace_tolerance)
        throw InfeasibleError("solve_problem_a: endpoint traces differ");
    opts.steps = static_cast<int>(x0.size());

    detail::TranscriptionObjective objective(rho0, rho1, epsilon, opts);
    RealVector params;
    params.reserve(objective.dimension());
    for (std::size_t k = 0; k < x0.size(); ++k) {
        pack_skew(x0[k], params);
        pack_hermitian(u0[k], params);
    }

    double w_end = opts.endpoint_weight, w_pos = opts.positivity_weight;
    std::vector<std::vector<double>> trace;
    bool converged = false;
    int rounds = 0;
    for (; rounds < opts.max_rounds && !converged;) {
        ++rounds;
        objective.set_weights(w_end, w_pos);
        auto base = objective.rollout(params);
        std::vector<double> round_trace{base.value};

        std::vector<RealVector> s_hist, y_hist;
        RealVector grad = objective.gradient(params, base);
        double alpha0 = 1.0;
        for (int it = 0; it < opts.max_iterations; ++it) {
            if (std::sqrt(detail::dot(grad, grad)) < 1e-12) break;

            // L-BFGS two-loop recursion.
            RealVector dir = grad;
            std::vector<double> a(s_hist.size());
            for (std::size_t m = s_hist.size(); m-- > 0;) {
                a[m] = detail::dot(s_hist[m], dir) / detail::dot(y_hist[m], s_hist[m]);
                for (std::size_t i = 0; i < dir.size(); ++i) dir[i] -= a[m] * y_hist[m][i];
            }
            if (!s_hist.empty()) {
                const double gamma = detail::dot(s_hist.back(), y_hist.back()) / detail::dot(y_hist.back(), y_hist.back());
                for (double& d : dir) d *= gamma;
            } else {
                const double gn = std::sqrt(detail::dot(grad, grad));
                for (double& d : dir) d *= 1e-3 / gn;
            }
            for (std::size_t m = 0; m < s_hist.size(); ++m) {
                const double b = detail::dot(y_hist[m], dir) / detail::dot(y_hist[m], s_hist[m]);
                for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += s_hist[m][i] * (a[m] - b);
            }
            for (double& d : dir) d = -d;
            double slope = detail::dot(grad, dir);
            if (slope >= 0.0) {
                s_hist.clear();
                y_hist.clear();
                const double gn = std::sqrt(detail::dot(grad, grad));
                for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = -grad[i] * 1e-3 / gn;
                slope = detail::dot(grad, dir);
            }

            // Armijo backtracking; only strictly decreasing iterates are accepted.
            double alpha = alpha0;
            bool accepted = false;
            RealVector trial(params.size());
            detail::TranscriptionObjective::Trajectory next;
            for (int ls = 0; ls < 40; ++ls) {
                for (std::size_t i = 0; i < params.size(); ++i) trial[i] = params[i] + alpha * dir[i];
                next = objective.rollout(trial);
                if (next.value <= base.value + 1e-4 * alpha * slope && next.value < base.value) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) break;

            const double decrease = base.value - next.value;
            RealVector next_grad = objective.gradient(trial, next);
            RealVector s(params.size()), y(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                s[i] = trial[i] - params[i];
                y[i] = next_grad[i] - grad[i];
            }
            if (detail::dot(s, y) > 1e-16 * std::sqrt(detail::dot(s, s) * detail::dot(y, y))) {
                s_hist.push_back(std::move(s));
                y_hist.push_back(std::move(y));
                if (static_cast<int>(s_hist.size()) > opts.lbfgs_history) {
                    s_hist.erase(s_hist.begin());
                    y_hist.erase(y_hist.begin());
                }
            }
            params = std::move(trial);
            base = std::move(next);
            grad = std::move(next_grad);
            round_trace.push_back(base.value);
            alpha0 = std::min(1.0, alpha * 2.0);
            if (decrease <= opts.relative_tolerance * std::max(1.0, std::abs(base.value))) break;
        }
        trace.push_back(std::move(round_trace));
        converged = objective.endpoint_residual(base) <= opts.tol_end;
        w_end *= 2.0;
        w_pos *= 2.0;
    }

    std::vector<SkewHermitian> xs;
    std::vector<HermitianMatrix> us;
    for (int k = 0; k < opts.steps; ++k) {
        xs.push_back(objective.control_x(params, k));
        us.push_back(objective.control_u(params, k));
    }
    DiscretePath path = simulate_path(rho0, xs, us, opts.tangent);
    path.cost = discrete_cost(path, epsilon);
    path.endpoint_residual = frob_norm(path.states.back().matrix() - rho1.matrix());
    path.rounds = rounds;
    path.converged = converged;
    path.objective_trace = std::move(trace);
    return path;
}

/// Descent from the constant controls of the closed-form solution, which the
/// exponential-Euler grid reproduces exactly.
inline DiscretePath solve_problem_a(const HermitianMatrix& rho0, const HermitianMatrix& rho1, double epsilon,
                                    const TranscriptionOptions& opts = {}) {
    if (opts.steps < 2) throw std::invalid_argument("solve_problem_a: need at least 2 steps");
    const auto geo = solve_problem_b(rho0, rho1, epsilon, opts.geodesic);
    std::vector<SkewHermitian> xs(static_cast<std::size_t>(opts.steps), geo.X);
    std::vector<HermitianMatrix> us;
    for (int k = 0; k < opts.steps; ++k) us.push_back(conjugate(expm_skew(geo.X * (double(k) / opts.steps)), geo.Z));
    return solve_problem_a(rho0, rho1, epsilon, xs, us, opts);
}

}  // namespace denflow
