// Orthogonal split of a Hermitian tangent direction at rho into a rotation
// part [X, rho] and a part u that commutes with rho.
#pragma once

#include "denflow/linalg.hpp"

namespace denflow {

struct TangentOptions {
    /// Eigenvalues closer than degeneracy * max|lambda| are treated as equal.
    double degeneracy = 1e-8;
};

struct TangentSplit {
    SkewHermitian X;       // minimal-norm generator with [X, rho] = rot
    HermitianMatrix rot;   // component in the rotation subspace
    HermitianMatrix u;     // traceless component commuting with rho
    double trace_part = 0; // trace(T)/n, stripped before the split
};

namespace detail {

inline bool eigen_equal(double a, double b, double scale, const TangentOptions& opts) {
    return std::abs(a - b) <= opts.degeneracy * scale;
}

inline double spectral_scale(const RealVector& values) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace detail

/// Split using a precomputed eigendecomposition of rho.
inline TangentSplit split_tangent(const EigenDecomposition& rho_eig, const HermitianMatrix& direction,
                                  const TangentOptions& opts = {}) {
    const std::size_t n = direction.size();
    if (rho_eig.values.size() != n) throw DimensionError("split_tangent: dimension mismatch");

    const double trace_part = direction.trace() / static_cast<double>(n);
    const Matrix& v = rho_eig.vectors.matrix();
    const Matrix vt = v.adjoint();
    Matrix local = vt * direction.matrix() * v;
    for (std::size_t k = 0; k < n; ++k) local(k, k) -= trace_part;

    const auto& lambda = rho_eig.values;
    const double scale = detail::spectral_scale(lambda);

    Matrix x_local(n), rot_local(n), u_local(n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            if (detail::eigen_equal(lambda[k], lambda[l], scale, opts)) {
                u_local(k, l) = local(k, l);
            } else {
                rot_local(k, l) = local(k, l);
                x_local(k, l) = local(k, l) / (lambda[l] - lambda[k]);
            }
        }

    return {SkewHermitian(v * x_local * vt), HermitianMatrix(v * rot_local * vt), HermitianMatrix(v * u_local * vt),
            trace_part};
}

inline TangentSplit split_tangent(const HermitianMatrix& rho, const HermitianMatrix& direction,
                                  const TangentOptions& opts = {}) {
    rho.matrix().check_same(direction.matrix());
    return split_tangent(eig_hermitian(rho), direction, opts);
}

/// Orthogonal projection onto the traceless commutant of rho.
inline HermitianMatrix project_commutant(const EigenDecomposition& rho_eig, const HermitianMatrix& direction,
                                         const TangentOptions& opts = {}) {
    const auto split = split_tangent(rho_eig, direction, opts);
    const std::size_t n = direction.size();
    const double tr = split.u.trace() / static_cast<double>(n);
    if (tr == 0.0) return split.u;
    return HermitianMatrix(split.u.matrix() - Matrix::identity(n) * tr);
}

inline HermitianMatrix project_commutant(const HermitianMatrix& rho, const HermitianMatrix& direction,
                                         const TangentOptions& opts = {}) {
    rho.matrix().check_same(direction.matrix());
    return project_commutant(eig_hermitian(rho), direction, opts);
}

/// e^{Xt} rho0 e^{-Xt}: rotates eigenvectors, leaves the spectrum unchanged.
inline HermitianMatrix rotation_flow(const HermitianMatrix& rho0, const SkewHermitian& x, double t) {
    rho0.matrix().check_same(x.matrix());
    if (t == 0.0) return rho0;
    return conjugate(expm_skew(x * t), rho0);
}

}  // namespace denflow
