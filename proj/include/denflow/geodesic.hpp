// Constant-control interpolation between equal-trace PSD matrices:
//
//   minimize ||X||_F + eps ||Z||_F
//   s.t.     e^X (rho0 + Z) e^{-X} = rho1,  [rho0, Z] = 0,  trace(Z) = 0,
//
// with path rho(t) = e^{Xt} (rho0 + Z t) e^{-Xt}.
//
// Because Z commutes with rho0, rho0 + Z is diagonal in an eigenbasis of rho0
// and its spectrum must be a permutation of the spectrum of rho1. The solver
// enumerates those spectral matchings and, for each one, searches the residual
// gauge freedom (unitaries commuting with the matched spectra) for the
// shortest rotation generator.
#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "denflow/assignment.hpp"
#include "denflow/linalg.hpp"

namespace denflow {

class InfeasibleError : public Error {
public:
    using Error::Error;
};

struct CostBreakdown {
    double rotation = 0.0;  // ||X||_F
    double scaling = 0.0;   // ||Z||_F
    double total = 0.0;     // rotation + eps * scaling
};

inline CostBreakdown path_cost(const SkewHermitian& x, const HermitianMatrix& z, double epsilon) {
    const double r = frob_norm(x.matrix());
    const double s = frob_norm(z.matrix());
    return {r, s, r + epsilon * s};
}

struct GeodesicOptions {
    std::size_t max_enum = 7;          // exhaustive matching search up to this n
    double trace_tolerance = 1e-8;
    double psd_tolerance = 1e-9;
    double degeneracy = 1e-8;          // relative tie threshold for eigenvalues
    int descent_rounds = 3;
    int scan_points = 12;              // coarse scan before golden-section refinement
    double line_tolerance = 1e-7;
    std::size_t max_sign_enum = 12;    // +-1 gauge enumeration for real inputs
    int local_search_rounds = 10;      // 2-swap rounds when n > max_enum
};

struct GeodesicSolution {
    SkewHermitian X;
    HermitianMatrix Z;
    std::vector<int> permutation;  // eigenvalue i of rho0 (ascending) -> eigenvalue permutation[i] of rho1
    double epsilon = 0.0;
    double cost_rotation = 0.0;
    double cost_scaling = 0.0;
    double cost_total = 0.0;
};

// ---------------------------------------------------------------------------
// Gauge optimization
// ---------------------------------------------------------------------------

namespace detail {

enum class GeneratorKind { Phase, Real, Imag };

/// One-parameter subgroup s -> e^{sA} acting on rows (left) or columns (right).
struct Generator {
    std::size_t j = 0, k = 0;
    GeneratorKind kind = GeneratorKind::Phase;
    bool left = true;
};

inline std::array<Complex, 4> generator_block(const Generator& g, double s) {
    const double c = std::cos(s), sn = std::sin(s);
    switch (g.kind) {
        case GeneratorKind::Phase: return {std::polar(1.0, s), 0.0, 0.0, 1.0};
        case GeneratorKind::Real: return {c, sn, -sn, c};
        case GeneratorKind::Imag: return {c, Complex(0.0, sn), Complex(0.0, sn), c};
    }
    return {1.0, 0.0, 0.0, 1.0};
}

inline void apply_generator(Matrix& m, const Generator& g, double s) {
    const auto [ejj, ejk, ekj, ekk] = generator_block(g, s);
    const std::size_t n = m.size();
    if (g.kind == GeneratorKind::Phase) {
        if (g.left)
            for (std::size_t c = 0; c < n; ++c) m(g.j, c) *= ejj;
        else
            for (std::size_t r = 0; r < n; ++r) m(r, g.j) *= ejj;
        return;
    }
    if (g.left) {
        for (std::size_t c = 0; c < n; ++c) {
            const Complex mj = m(g.j, c), mk = m(g.k, c);
            m(g.j, c) = ejj * mj + ejk * mk;
            m(g.k, c) = ekj * mj + ekk * mk;
        }
    } else {
        for (std::size_t r = 0; r < n; ++r) {
            const Complex mj = m(r, g.j), mk = m(r, g.k);
            m(r, g.j) = mj * ejj + mk * ekj;
            m(r, g.k) = mj * ejk + mk * ekk;
        }
    }
}

inline void add_block_generators(const std::vector<std::size_t>& block, bool left, bool with_phases,
                                 std::vector<Generator>& out) {
    if (with_phases)
        for (std::size_t j : block) out.push_back({j, j, GeneratorKind::Phase, left});
    for (std::size_t a = 0; a < block.size(); ++a)
        for (std::size_t b = a + 1; b < block.size(); ++b) {
            out.push_back({block[a], block[b], GeneratorKind::Real, left});
            out.push_back({block[a], block[b], GeneratorKind::Imag, left});
        }
}

/// Groups consecutive indices of a sorted spectrum into blocks of equal values.
inline std::vector<std::vector<std::size_t>> equal_value_blocks(const RealVector& values, double degeneracy) {
    double scale = 0.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    const double tol = degeneracy * std::max(scale, 1e-300);
    std::vector<std::vector<std::size_t>> blocks;
    std::vector<bool> taken(values.size(), false);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (taken[i]) continue;
        std::vector<std::size_t> block{i};
        taken[i] = true;
        for (std::size_t j = i + 1; j < values.size(); ++j)
            if (!taken[j] && std::abs(values[j] - values[i]) <= tol) {
                block.push_back(j);
                taken[j] = true;
            }
        blocks.push_back(std::move(block));
    }
    return blocks;
}

/// Unitary polar factor of a small square matrix; identity when near-singular.
inline Matrix polar_factor(const Matrix& c) {
    const std::size_t m = c.size();
    const auto eig = eig_hermitian(HermitianMatrix(c.adjoint() * c));
    if (eig.values.front() < 1e-16) return Matrix::identity(m);
    RealVector inv_sqrt(m);
    for (std::size_t k = 0; k < m; ++k) inv_sqrt[k] = 1.0 / std::sqrt(eig.values[k]);
    return c * reconstruct(eig.vectors.matrix(), inv_sqrt);
}

struct Gauge {
    Matrix theta;  // commutes with the target spectrum (left factor)
    Matrix g;      // commutes with the source spectrum (right factor)
    double norm = std::numeric_limits<double>::infinity();
};

class GaugeSearch {
public:
    GaugeSearch(const Matrix& u0p, const Matrix& u1, std::vector<std::vector<std::size_t>> left_blocks,
                std::vector<std::vector<std::size_t>> right_blocks, bool real_inputs, const GeodesicOptions& opts)
        : u0p_adj_(u0p.adjoint()),
          u1_(u1),
          left_blocks_(std::move(left_blocks)),
          right_blocks_(std::move(right_blocks)),
          real_(real_inputs),
          opts_(opts),
          n_(u0p.size()) {
        for (const auto& b : left_blocks_) add_block_generators(b, true, true, generators_);
        for (const auto& b : right_blocks_)
            if (b.size() > 1) add_block_generators(b, false, true, generators_);
    }

    double objective(const Matrix& theta, const Matrix& g) const { return log_norm(u1_ * theta * g * u0p_adj_); }

    Gauge run() const {
        std::vector<Matrix> starts;
        starts.push_back(polar_start(u0p_adj_.adjoint()));
        starts.push_back(Matrix::identity(n_));
        if (real_ && n_ <= opts_.max_sign_enum) starts.push_back(best_sign_pattern());

        Gauge best;
        for (const auto& theta0 : starts) {
            Gauge cur{theta0, Matrix::identity(n_), objective(theta0, Matrix::identity(n_))};
            descend(cur);
            if (cur.norm < best.norm - 1e-12) best = std::move(cur);
        }
        return best;
    }

private:
    Matrix polar_start(const Matrix& u0p) const {
        const Matrix overlap = u1_.adjoint() * u0p;
        Matrix theta = Matrix::identity(n_);
        for (const auto& block : left_blocks_) {
            const std::size_t m = block.size();
            Matrix c(m);
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b) c(a, b) = overlap(block[a], block[b]);
            const Matrix p = polar_factor(c);
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b) theta(block[a], block[b]) = p(a, b);
        }
        return theta;
    }

    Matrix best_sign_pattern() const {
        Matrix best = Matrix::identity(n_);
        double best_norm = std::numeric_limits<double>::infinity();
        const std::size_t patterns = std::size_t{1} << n_;
        for (std::size_t mask = 0; mask < patterns; ++mask) {
            Matrix d = Matrix::identity(n_);
            for (std::size_t i = 0; i < n_; ++i)
                if (mask & (std::size_t{1} << i)) d(i, i) = -1.0;
            const double f = objective(d, Matrix::identity(n_));
            if (f < best_norm - 1e-12) {
                best_norm = f;
                best = d;
            }
        }
        return best;
    }

    double eval_along(const Gauge& cur, const Generator& gen, double s) const {
        if (gen.left) {
            Matrix theta = cur.theta;
            apply_generator(theta, gen, s);
            return objective(theta, cur.g);
        }
        Matrix g = cur.g;
        apply_generator(g, gen, s);
        return objective(cur.theta, g);
    }

    void descend(Gauge& cur) const {
        const double two_pi = 2.0 * kPi;
        const int points = std::max(opts_.scan_points, 4);
        const double h = two_pi / points;
        const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int round = 0; round < opts_.descent_rounds; ++round) {
            const double before = cur.norm;
            for (const auto& gen : generators_) {
                double s_best = 0.0, f_best = cur.norm;
                for (int i = 0; i < points; ++i) {
                    const double s = -kPi + two_pi * (i + 1) / points;
                    if (s == 0.0) continue;
                    const double f = eval_along(cur, gen, s);
                    if (f < f_best) {
                        f_best = f;
                        s_best = s;
                    }
                }
                double a = s_best - h, b = s_best + h;
                double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
                double fc = eval_along(cur, gen, c), fd = eval_along(cur, gen, d);
                while (b - a > opts_.line_tolerance) {
                    if (fc < fd) {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - inv_phi * (b - a);
                        fc = eval_along(cur, gen, c);
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + inv_phi * (b - a);
                        fd = eval_along(cur, gen, d);
                    }
                }
                const double s_line = 0.5 * (a + b);
                const double f_line = eval_along(cur, gen, s_line);
                if (f_line < f_best) {
                    f_best = f_line;
                    s_best = s_line;
                }
                if (f_best < cur.norm - 1e-14) {
                    apply_generator(gen.left ? cur.theta : cur.g, gen, s_best);
                    cur.norm = objective(cur.theta, cur.g);
                }
            }
            if (before - cur.norm < 1e-12) break;
        }
    }

    Matrix u0p_adj_;
    Matrix u1_;
    std::vector<std::vector<std::size_t>> left_blocks_, right_blocks_;
    bool real_;
    GeodesicOptions opts_;
    std::size_t n_;
    std::vector<Generator> generators_;
};

}  // namespace detail

/// Shortest generator X with e^X = U1 Theta U0p*, over unitaries Theta that
/// commute with diag(spectrum). Columns of U0p and U1 must pair equal entries
/// of the (ascending) spectrum.
inline SkewHermitian minimal_rotation(const UnitaryMatrix& u0p, const UnitaryMatrix& u1, const RealVector& spectrum,
                                      const GeodesicOptions& opts = {}) {
    if (u0p.size() != u1.size() || spectrum.size() != u0p.size())
        throw DimensionError("minimal_rotation: dimension mismatch");
    const bool real = is_real(u0p.matrix(), 1e-14) && is_real(u1.matrix(), 1e-14);
    detail::GaugeSearch search(u0p.matrix(), u1.matrix(), detail::equal_value_blocks(spectrum, opts.degeneracy), {},
                               real, opts);
    const auto gauge = search.run();
    return logm_unitary_resolved(UnitaryMatrix(u1.matrix() * gauge.theta * u0p.matrix().adjoint(), 1e-8));
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

namespace detail {

class GeodesicSolver {
public:
    GeodesicSolver(const HermitianMatrix& rho0, const HermitianMatrix& rho1, double epsilon,
                   const GeodesicOptions& opts)
        : eps_(epsilon), opts_(opts), n_(rho0.size()) {
        if (rho0.size() != rho1.size()) throw DimensionError("solve_problem_b: endpoint dimensions differ");
        if (!(epsilon >= 0.0)) throw std::invalid_argument("solve_problem_b: epsilon must be >= 0");
        const double tr0 = rho0.trace(), tr1 = rho1.trace();
        if (std::abs(tr0 - tr1) > opts.trace_tolerance * std::max(1.0, std::abs(tr0))) {
            std::ostringstream os;
            os.precision(17);
            os << "endpoints have different traces (" << tr0 << " vs " << tr1 << ")";
            throw InfeasibleError(os.str());
        }
        e0_ = eig_hermitian(rho0);
        e1_ = eig_hermitian(rho1);
        const double scale = std::max({1.0, std::abs(e0_.values.back()), std::abs(e1_.values.back())});
        if (e0_.values.front() < -opts.psd_tolerance * scale || e1_.values.front() < -opts.psd_tolerance * scale)
            throw InfeasibleError("endpoints must be positive semidefinite");
        real_ = is_real(rho0.matrix(), 1e-14 * scale) && is_real(rho1.matrix(), 1e-14 * scale);
        lambda_blocks_ = equal_value_blocks(e0_.values, opts.degeneracy);
        mu_blocks_ = equal_value_blocks(e1_.values, opts.degeneracy);
        lambda_group_.assign(n_, 0);
        mu_group_.assign(n_, 0);
        for (std::size_t b = 0; b < lambda_blocks_.size(); ++b)
            for (std::size_t i : lambda_blocks_[b]) lambda_group_[i] = static_cast<int>(b);
        for (std::size_t b = 0; b < mu_blocks_.size(); ++b)
            for (std::size_t j : mu_blocks_[b]) mu_group_[j] = static_cast<int>(b);
    }

    GeodesicSolution solve() {
        std::vector<int> perm(n_);
        std::iota(perm.begin(), perm.end(), 0);
        if (n_ <= opts_.max_enum) {
            std::set<std::vector<int>> seen;
            do {
                if (!seen.insert(canonical_key(perm)).second) continue;
                consider(perm);
            } while (std::next_permutation(perm.begin(), perm.end()));
        } else {
            local_search();
        }
        return std::move(*best_);
    }

private:
    // Two matchings are equivalent when every eigenvalue of rho0 lands in the same
    // block of equal rho1 eigenvalues, up to reordering within a block of equal
    // rho0 eigenvalues.
    std::vector<int> canonical_key(const std::vector<int>& perm) const {
        std::vector<int> key(n_);
        for (const auto& block : lambda_blocks_) {
            std::vector<int> groups;
            for (std::size_t i : block) groups.push_back(mu_group_[perm[i]]);
            std::sort(groups.begin(), groups.end());
            for (std::size_t a = 0; a < block.size(); ++a) key[block[a]] = groups[a];
        }
        return key;
    }

    double scaling_norm(const std::vector<int>& perm) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double z = e1_.values[perm[i]] - e0_.values[i];
            s += z * z;
        }
        return std::sqrt(s);
    }

    bool better(const GeodesicSolution& a, const GeodesicSolution& b) const {
        if (a.cost_total < b.cost_total - 1e-9) return true;
        if (a.cost_total > b.cost_total + 1e-9) return false;
        return a.cost_scaling < b.cost_scaling - 1e-9;
    }

    bool consider(const std::vector<int>& perm) {
        if (best_ && eps_ * scaling_norm(perm) > best_->cost_total + 1e-9) return false;
        auto candidate = evaluate(perm);
        if (!best_ || better(candidate, *best_)) {
            best_ = std::move(candidate);
            return true;
        }
        return false;
    }

    GeodesicSolution evaluate(const std::vector<int>& perm) const {
        // Paired index j runs over rho1 eigenvalues; source column is inv[j].
        std::vector<std::size_t> inv(n_);
        for (std::size_t i = 0; i < n_; ++i) inv[perm[i]] = i;

        const Matrix& u0 = e0_.vectors.matrix();
        Matrix u0p(n_);
        RealVector lambda_paired(n_), z_paired(n_);
        for (std::size_t j = 0; j < n_; ++j) {
            for (std::size_t r = 0; r < n_; ++r) u0p(r, j) = u0(r, inv[j]);
            lambda_paired[j] = e0_.values[inv[j]];
            z_paired[j] = e1_.values[j] - lambda_paired[j];
        }

        std::vector<std::vector<std::size_t>> right_blocks;
        for (const auto& block : lambda_blocks_) {
            if (block.size() < 2) continue;
            std::vector<std::size_t> paired;
            for (std::size_t i : block) paired.push_back(static_cast<std::size_t>(perm[i]));
            std::sort(paired.begin(), paired.end());
            right_blocks.push_back(std::move(paired));
        }

        GaugeSearch search(u0p, e1_.vectors.matrix(), mu_blocks_, right_blocks, real_, opts_);
        const Gauge gauge = search.run();

        // e^X = U1 Theta G U0p*;  rho0 + Z is diagonal in U0p G*.
        const Matrix rotation = e1_.vectors.matrix() * gauge.theta * gauge.g * u0p.adjoint();
        SkewHermitian x = logm_unitary_resolved(UnitaryMatrix(rotation, 1e-8));
        const Matrix basis = u0p * gauge.g.adjoint();
        HermitianMatrix z(reconstruct(basis, z_paired));

        GeodesicSolution sol;
        sol.X = std::move(x);
        sol.Z = std::move(z);
        sol.permutation = perm;
        sol.epsilon = eps_;
        const auto c = path_cost(sol.X, sol.Z, eps_);
        sol.cost_rotation = c.rotation;
        sol.cost_scaling = c.scaling;
        sol.cost_total = c.total;
        return sol;
    }

    void local_search() {
        std::vector<std::vector<double>> cost(n_, std::vector<double>(n_));
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) cost[i][j] = std::abs(e0_.values[i] - e1_.values[j]);
        std::vector<int> perm = solve_assignment(cost);
        consider(perm);
        for (int round = 0; round < opts_.local_search_rounds; ++round) {
            bool improved = false;
            for (std::size_t a = 0; a + 1 < n_; ++a)
                for (std::size_t b = a + 1; b < n_; ++b) {
                    if (mu_group_[perm[a]] == mu_group_[perm[b]] || lambda_group_[a] == lambda_group_[b]) continue;
                    std::swap(perm[a], perm[b]);
                    if (consider(perm))
                        improved = true;
                    else
                        std::swap(perm[a], perm[b]);
                }
            if (!improved) break;
        }
    }

    double eps_;
    GeodesicOptions opts_;
    std::size_t n_;
    bool real_ = false;
    EigenDecomposition e0_, e1_;
    std::vector<std::vector<std::size_t>> lambda_blocks_, mu_blocks_;
    std::vector<int> lambda_group_, mu_group_;
    std::optional<GeodesicSolution> best_;
};

}  // namespace detail

inline GeodesicSolution solve_problem_b(const HermitianMatrix& rho0, const HermitianMatrix& rho1, double epsilon,
                                        const GeodesicOptions& opts = {}) {
    return detail::GeodesicSolver(rho0, rho1, epsilon, opts).solve();
}

struct PathPoint {
    HermitianMatrix rho;
    bool extrapolated = false;  // t outside [0, 1]; positivity is not guaranteed
};

/// e^{Xt} (rho0 + Z t) e^{-Xt}.
inline PathPoint eval_path(const GeodesicSolution& sol, const HermitianMatrix& rho0, double t) {
    rho0.matrix().check_same(sol.X.matrix());
    const HermitianMatrix drifted(rho0.matrix() + sol.Z.matrix() * t);
    return {conjugate(expm_skew(sol.X * t), drifted), t < 0.0 || t > 1.0};
}

struct SolutionDiagnostics {
    double commutation = 0.0;        // ||[rho0, Z]||_F
    double trace_z = 0.0;            // |trace Z|
    double endpoint_residual = 0.0;  // ||e^X (rho0 + Z) e^{-X} - rho1||_F
    double min_path_eigenvalue = 0.0;
};

inline SolutionDiagnostics diagnose(const GeodesicSolution& sol, const HermitianMatrix& rho0,
                                    const HermitianMatrix& rho1, int samples = 101) {
    SolutionDiagnostics d;
    d.commutation = frob_norm(commutator(rho0.matrix(), sol.Z.matrix()));
    d.trace_z = std::abs(sol.Z.trace());
    d.endpoint_residual = frob_norm(eval_path(sol, rho0, 1.0).rho.matrix() - rho1.matrix());
    d.min_path_eigenvalue = std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples; ++k) {
        const double t = samples > 1 ? static_cast<double>(k) / (samples - 1) : 0.0;
        d.min_path_eigenvalue = std::min(d.min_path_eigenvalue, min_eigenvalue(eval_path(sol, rho0, t).rho));
    }
    return d;
}

}  // namespace denflow
