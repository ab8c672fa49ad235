// Fitting a constant-control flow
//
//   rho(t) = e^{Xt} V diag(p + t z) V* e^{-Xt}
//
// to noisy samples by minimizing sum_i ||rho(t_i) - sample_i||_F. The
// constraints [rho0, Z] = 0 and tr Z = 0 hold by parametrization; positivity on
// [0, 1] is the pair of endpoint conditions p >= 0, p + z >= 0.
//
// Each iteration reweights the sum of norms into a weighted least-squares
// majorizer (IRLS) and takes one damped Gauss-Newton step on it, with V updated
// multiplicatively, X additively and (p, q = p + z) projected back onto
// {p >= 0, q >= 0, sum p = sum q}. A step is kept only if the smoothed objective
// decreases.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "denflow/geodesic.hpp"
#include "denflow/linalg.hpp"

namespace denflow {

struct MatrixSample {
    double t = 0.0;
    HermitianMatrix value;
};

struct RegularizedModel {
    UnitaryMatrix V;
    RealVector p;
    RealVector z;
    SkewHermitian X;
    double objective = 0.0;
    bool stalled = false;
    int iterations = 0;
    int start = 0;  // index of the winning multi-start
    /// Smoothed objective at every accepted iterate of the winning start.
    std::vector<double> objective_trace;

    std::size_t size() const { return p.size(); }
    HermitianMatrix rho0() const { return conjugate(V, HermitianMatrix::diagonal(p)); }
    HermitianMatrix Z() const { return conjugate(V, HermitianMatrix::diagonal(z)); }
    HermitianMatrix eval(double t) const {
        RealVector d(p.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = p[i] + t * z[i];
        return conjugate(expm_skew(X * t), conjugate(V, HermitianMatrix::diagonal(d)));
    }
};

/// sum_i ||rho(t_i) - sample_i||_F, or the sum of squares when `squared`.
inline double residual(const RegularizedModel& model, const std::vector<MatrixSample>& samples, bool squared = false) {
    if (samples.empty()) throw std::invalid_argument("residual: empty sample set");
    double s = 0.0;
    for (const auto& smp : samples) {
        if (smp.value.size() != model.size()) throw DimensionError("residual: sample dimension mismatch");
        const double r = frob_norm(model.eval(smp.t).matrix() - smp.value.matrix());
        s += squared ? r * r : r;
    }
    return s;
}

struct RegularizationOptions {
    int seeds = 5;
    int max_iters = 5000;
    double relative_tolerance = 1e-8;
    double smoothing = 1e-8;
    bool squared = false;
    std::uint64_t seed = 0;
    double perturbation = 0.05;
    double fd_step = 1e-6;
    double stationarity = 1e-5;
    bool parallel = true;
    GeodesicOptions geodesic;
};

/// Projects (p, q) onto {p >= 0, q >= 0, sum p = sum q} in the Euclidean metric:
/// p = max(p - nu, 0), q = max(q + nu, 0) with nu found by bisection.
inline void project_endpoints(RealVector& p, RealVector& q) {
    const std::size_t n = p.size();
    auto gap = [&](double nu) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::max(q[i] + nu, 0.0) - std::max(p[i] - nu, 0.0);
        return s;
    };
    double bound = 1.0;
    for (std::size_t i = 0; i < n; ++i) bound = std::max({bound, std::abs(p[i]), std::abs(q[i])});
    double lo = -2.0 * bound, hi = 2.0 * bound;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (gap(mid) < 0.0 ? lo : hi) = mid;
    }
    const double nu = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::max(p[i] - nu, 0.0);
        q[i] = std::max(q[i] + nu, 0.0);
    }
    // Absorb the bisection remainder in the largest entry of the heavier side.
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sp += p[i];
        sq += q[i];
    }
    RealVector& heavy = sq > sp ? q : p;
    auto it = std::max_element(heavy.begin(), heavy.end());
    *it = std::max(0.0, *it - std::abs(sq - sp));
}

/// Samples e^{Xt}(rho0 + Zt)e^{-Xt} + w(t) with Z sharing rho0's eigenbasis;
/// z[i] pairs with the i-th smallest eigenvalue of rho0. Noise entries are
/// independent and uniform in [-noise_amp, noise_amp]; off-diagonal imaginary
/// parts are drawn only when `complex_noise` is set.
inline std::vector<MatrixSample> synth_noisy_path(const HermitianMatrix& rho0, const SkewHermitian& x,
                                                  const RealVector& z, const RealVector& times, double noise_amp,
                                                  std::uint64_t seed, bool complex_noise = false) {
    const std::size_t n = rho0.size();
    if (x.size() != n || z.size() != n) throw DimensionError("synth_noisy_path: dimension mismatch");
    const auto e = eig_hermitian(rho0);
    const HermitianMatrix zm = conjugate(e.vectors, HermitianMatrix::diagonal(z));
    std::mt19937_64 gen(seed);
    auto uniform = [&] {
        const double unit = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        return noise_amp * (2.0 * unit - 1.0);
    };
    std::vector<MatrixSample> out;
    out.reserve(times.size());
    for (double t : times) {
        Matrix m = conjugate(expm_skew(x * t), HermitianMatrix(rho0.matrix() + zm.matrix() * t)).matrix();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                Complex w(uniform(), 0.0);
                if (i != j && complex_noise) w.imag(uniform());
                m(i, j) += w;
                if (i != j) m(j, i) += std::conj(w);
            }
        out.push_back({t, HermitianMatrix(m)});
    }
    return out;
}

namespace detail {

struct FitState {
    Matrix V;
    Matrix X;  // skew-Hermitian
    RealVector p, q;
};

class RegularizationFit {
public:
    RegularizationFit(const std::vector<MatrixSample>& samples, const RegularizationOptions& opts)
        : samples_(samples), opts_(opts), n_(samples.front().value.size()) {}

    std::size_t params() const { return 2 * n_ * n_ + 2 * n_; }
    std::size_t rows() const { return samples_.size() * n_ * n_; }

    Matrix model(const FitState& s, double t) const {
        Matrix d(n_);
        for (std::size_t i = 0; i < n_; ++i) d(i, i) = s.p[i] + t * (s.q[i] - s.p[i]);
        const Matrix q = expm_skew(SkewHermitian(s.X * t)).matrix() * s.V;
        return q * d * q.adjoint();
    }

    RealVector norms(const FitState& s) const {
        RealVector r(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i)
            r[i] = frob_norm(model(s, samples_[i].t) - samples_[i].value.matrix());
        return r;
    }

    double smoothed(const RealVector& norms) const {
        double f = 0.0;
        const double d = opts_.smoothing;
        for (double s : norms) f += opts_.squared ? s * s : std::sqrt(s * s + d * d) - d;
        return f;
    }

    RealVector weights(const RealVector& norms) const {
        RealVector w(norms.size(), 1.0);
        if (!opts_.squared)
            for (std::size_t i = 0; i < norms.size(); ++i)
                w[i] = 0.5 / std::sqrt(norms[i] * norms[i] + opts_.smoothing * opts_.smoothing);
        return w;
    }

    // Local coordinates around s: V e^A, X + S, p + dp, q + dq.
    FitState displaced(const FitState& s, const double* theta) const {
        const std::size_t nn = n_ * n_;
        FitState out{s.V * expm_skew(unpack_skew(n_, theta)).matrix(), s.X + unpack_skew(n_, theta + nn).matrix(), s.p,
                     s.q};
        for (std::size_t i = 0; i < n_; ++i) {
            out.p[i] += theta[2 * nn + i];
            out.q[i] += theta[2 * nn + n_ + i];
        }
        return out;
    }

    // Weighted residual vector; off-diagonal entries scaled so its norm is the
    // weighted Frobenius norm.
    RealVector weighted_residuals(const FitState& s, const RealVector& w) const {
        RealVector r;
        r.reserve(rows());
        const double root2 = std::sqrt(2.0);
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const Matrix d = model(s, samples_[i].t) - samples_[i].value.matrix();
            const double sw = std::sqrt(w[i]);
            for (std::size_t a = 0; a < n_; ++a) r.push_back(sw * d(a, a).real());
            for (std::size_t a = 0; a < n_; ++a)
                for (std::size_t b = a + 1; b < n_; ++b) {
                    r.push_back(sw * root2 * d(a, b).real());
                    r.push_back(sw * root2 * d(a, b).imag());
                }
        }
        return r;
    }

    // Column-major Jacobian by central differences.
    std::vector<RealVector> jacobian(const FitState& s, const RealVector& w) const {
        std::vector<RealVector> cols(params());
        RealVector theta(params(), 0.0);
        for (std::size_t j = 0; j < params(); ++j) {
            const double h = opts_.fd_step * std::max(1.0, j >= 2 * n_ * n_ ? std::abs(base_value(s, j)) : 0.0);
            theta[j] = h;
            const RealVector plus = weighted_residuals(displaced(s, theta.data()), w);
            theta[j] = -h;
            const RealVector minus = weighted_residuals(displaced(s, theta.data()), w);
            theta[j] = 0.0;
            cols[j].resize(plus.size());
            for (std::size_t i = 0; i < plus.size(); ++i) cols[j][i] = (plus[i] - minus[i]) / (2.0 * h);
        }
        return cols;
    }

    void project(FitState& s) const { project_endpoints(s.p, s.q); }

    struct Outcome {
        FitState state;
        double smoothed = 0.0;
        bool stalled = false;
        int iterations = 0;
        std::vector<double> trace;
    };

    Outcome run(FitState s) const {
        project(s);
        RealVector nr = norms(s);
        double f = smoothed(nr);
        Outcome out;
        out.trace.push_back(f);
        double lambda = 1e-3;
        const std::size_t m = params();
        for (int it = 0; it < opts_.max_iters; ++it) {
            out.iterations = it + 1;
            const RealVector w = weights(nr);
            const RealVector r = weighted_residuals(s, w);
            const auto J = jacobian(s, w);
            DenseSystem h(m);
            RealVector g(m, 0.0);
            for (std::size_t a = 0; a < m; ++a) {
                for (std::size_t k = 0; k < r.size(); ++k) g[a] += J[a][k] * r[k];
                for (std::size_t b = a; b < m; ++b) {
                    double v = 0.0;
                    for (std::size_t k = 0; k < r.size(); ++k) v += J[a][k] * J[b][k];
                    h(a, b) = h(b, a) = v;
                }
            }
            double hmax = 0.0;
            for (std::size_t a = 0; a < m; ++a) hmax = std::max(hmax, h(a, a));

            bool accepted = false;
            for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
                DenseSystem damped = h;
                for (std::size_t a = 0; a < m; ++a) damped(a, a) += lambda * (h(a, a) + 1e-10 * hmax + 1e-300);
                RealVector step = g;
                for (double& v : step) v = -v;
                if (!damped.solve(step)) {
                    lambda *= 4.0;
                    continue;
                }
                FitState trial = displaced(s, step.data());
                project(trial);
                const RealVector tn = norms(trial);
                const double tf = smoothed(tn);
                if (tf < f) {
                    accepted = true;
                    const double decrease = f - tf;
                    s = std::move(trial);
                    nr = tn;
                    f = tf;
                    out.trace.push_back(f);
                    lambda = std::max(lambda / 3.0, 1e-12);
                    if (decrease < opts_.relative_tolerance * std::max(f, std::numeric_limits<double>::min())) {
                        out.state = std::move(s);
                        out.smoothed = f;
                        return out;
                    }
                } else {
                    lambda *= 4.0;
                }
            }
            if (!accepted) {
                // No decrease at all: fine at a stationary point, a stall otherwise.
                out.stalled = projected_gradient_norm(s, g) > opts_.stationarity * std::max(1.0, f);
                break;
            }
        }
        out.state = std::move(s);
        out.smoothed = f;
        return out;
    }

private:
    // Small dense symmetric solver (Gaussian elimination, partial pivoting).
    class DenseSystem {
    public:
        explicit DenseSystem(std::size_t n) : n_(n), a_(n * n, 0.0) {}
        double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
        double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
        bool solve(RealVector& b) {
            for (std::size_t c = 0; c < n_; ++c) {
                std::size_t piv = c;
                for (std::size_t r = c + 1; r < n_; ++r)
                    if (std::abs((*this)(r, c)) > std::abs((*this)(piv, c))) piv = r;
                if (!(std::abs((*this)(piv, c)) > 0.0)) return false;
                if (piv != c) {
                    for (std::size_t k = 0; k < n_; ++k) std::swap((*this)(c, k), (*this)(piv, k));
                    std::swap(b[c], b[piv]);
                }
                for (std::size_t r = c + 1; r < n_; ++r) {
                    const double f = (*this)(r, c) / (*this)(c, c);
                    for (std::size_t k = c; k < n_; ++k) (*this)(r, k) -= f * (*this)(c, k);
                    b[r] -= f * b[c];
                }
            }
            for (std::size_t c = n_; c-- > 0;) {
                for (std::size_t k = c + 1; k < n_; ++k) b[c] -= (*this)(c, k) * b[k];
                b[c] /= (*this)(c, c);
            }
            for (double v : b)
                if (!std::isfinite(v)) return false;
            return true;
        }

    private:
        std::size_t n_;
        std::vector<double> a_;
    };

    double base_value(const FitState& s, std::size_t j) const {
        const std::size_t k = j - 2 * n_ * n_;
        return k < n_ ? s.p[k] : s.q[k - n_];
    }

    // g is half the gradient of the majorizer, which equals half the gradient
    // of the smoothed objective at the current point.
    double projected_gradient_norm(const FitState& s, const RealVector& g) const {
        const std::size_t nn = 2 * n_ * n_;
        double acc = 0.0;
        for (std::size_t j = 0; j < nn; ++j) acc += 4.0 * g[j] * g[j];
        RealVector p = s.p, q = s.q;
        for (std::size_t i = 0; i < n_; ++i) {
            p[i] -= 2.0 * g[nn + i];
            q[i] -= 2.0 * g[nn + n_ + i];
        }
        project_endpoints(p, q);
        for (std::size_t i = 0; i < n_; ++i) {
            acc += (p[i] - s.p[i]) * (p[i] - s.p[i]);
            acc += (q[i] - s.q[i]) * (q[i] - s.q[i]);
        }
        return std::sqrt(acc);
    }

    const std::vector<MatrixSample>& samples_;
    RegularizationOptions opts_;
    std::size_t n_;
};

}  // namespace detail

inline RegularizedModel solve_regularization(const std::vector<MatrixSample>& samples,
                                             const RegularizationOptions& opts = {}) {
    if (samples.size() < 3) throw std::invalid_argument("solve_regularization: need at least 3 samples");
    const std::size_t n = samples.front().value.size();
    bool real = true;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].value.size() != n) throw DimensionError("solve_regularization: sample dimension mismatch");
        if (i > 0 && !(samples[i].t > samples[i - 1].t))
            throw std::invalid_argument("solve_regularization: times must be strictly increasing");
        real = real && is_real(samples[i].value.matrix(), 0.0);
    }
    if (opts.seeds < 1) throw std::invalid_argument("solve_regularization: need at least one start");

    // Eigenvalue drift: least-squares line through each sorted eigenvalue.
    std::vector<EigenDecomposition> eigs;
    for (const auto& s : samples) eigs.push_back(eig_hermitian(s.value));
    RealVector p(n), q(n);
    {
        double mt = 0.0;
        for (const auto& s : samples) mt += s.t;
        mt /= samples.size();
        double stt = 0.0;
        for (const auto& s : samples) stt += (s.t - mt) * (s.t - mt);
        for (std::size_t k = 0; k < n; ++k) {
            double ml = 0.0, stl = 0.0;
            for (const auto& e : eigs) ml += e.values[k];
            ml /= samples.size();
            for (std::size_t i = 0; i < samples.size(); ++i) stl += (samples[i].t - mt) * (eigs[i].values[k] - ml);
            const double slope = stl / stt;
            p[k] = ml - slope * mt;
            q[k] = p[k] + slope;
        }
    }

    // Rotation guesses: first-to-last frame alignment, and the mean of the
    // consecutive alignments (robust to total turns beyond a quarter).
    const double span = samples.back().t - samples.front().t;
    const Matrix x_end = minimal_rotation(eigs.front().vectors, eigs.back().vectors, eigs.back().values, opts.geodesic)
                             .matrix() *
                         (1.0 / span);
    Matrix x_chain(n);
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        const double dt = samples[i + 1].t - samples[i].t;
        x_chain = x_chain + minimal_rotation(eigs[i].vectors, eigs[i + 1].vectors, eigs[i + 1].values, opts.geodesic)
                                    .matrix() *
                                (1.0 / (dt * (samples.size() - 1)));
    }
    auto start_from = [&](const Matrix& x) {
        const Matrix v = expm_skew(SkewHermitian(x * -samples.front().t)).matrix() * eigs.front().vectors.matrix();
        return detail::FitState{v, x, p, q};
    };
    const std::vector<detail::FitState> bases{start_from(x_end), start_from(x_chain)};

    detail::RegularizationFit fit(samples, opts);
    auto run_start = [&](int s) {
        detail::FitState st = bases[static_cast<std::size_t>(s) % bases.size()];
        if (s >= static_cast<int>(bases.size())) {
            std::mt19937_64 gen(opts.seed + static_cast<std::uint64_t>(s));
            std::uniform_real_distribution<double> u(-opts.perturbation, opts.perturbation);
            auto perturb_skew = [&] {
                Matrix a(n);
                for (std::size_t i = 0; i < n; ++i) {
                    if (!real) a(i, i) = Complex(0.0, u(gen));
                    for (std::size_t j = i + 1; j < n; ++j) {
                        a(i, j) = Complex(u(gen), real ? 0.0 : u(gen));
                        a(j, i) = -std::conj(a(i, j));
                    }
                }
                return a;
            };
            st.V = st.V * expm_skew(SkewHermitian(perturb_skew())).matrix();
            st.X = st.X + perturb_skew();
            for (std::size_t i = 0; i < n; ++i) {
                st.p[i] += u(gen);
                st.q[i] += u(gen);
            }
        }
        return fit.run(std::move(st));
    };

    std::vector<detail::RegularizationFit::Outcome> outcomes(static_cast<std::size_t>(opts.seeds));
    if (opts.parallel && std::thread::hardware_concurrency() > 1) {
        std::vector<std::future<detail::RegularizationFit::Outcome>> jobs;
        for (int s = 0; s < opts.seeds; ++s) jobs.push_back(std::async(std::launch::async, run_start, s));
        for (int s = 0; s < opts.seeds; ++s) outcomes[s] = jobs[s].get();
    } else {
        for (int s = 0; s < opts.seeds; ++s) outcomes[s] = run_start(s);
    }
    std::size_t best = 0;
    for (std::size_t s = 1; s < outcomes.size(); ++s)
        if (outcomes[s].smoothed < outcomes[best].smoothed) best = s;

    auto& o = outcomes[best];
    RegularizedModel model;
    // A multiple of the identity in X never changes the path; drop it.
    const Complex shift = o.state.X.trace() / static_cast<double>(n);
    model.X = SkewHermitian(o.state.X - Matrix::identity(n) * shift);
    model.V = UnitaryMatrix(o.state.V, 1e-8);
    model.p = o.state.p;
    model.z.resize(n);
    for (std::size_t i = 0; i < n; ++i) model.z[i] = o.state.q[i] - o.state.p[i];
    model.stalled = o.stalled;
    model.iterations = o.iterations;
    model.start = static_cast<int>(best);
    model.objective_trace = std::move(o.trace);
    model.objective = residual(model, samples, opts.squared);
    return model;
}

}  // namespace denflow
