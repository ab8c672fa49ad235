#pragma once

#include <random>

#include "denflow/linalg.hpp"

namespace denflow::testing {

inline Matrix random_matrix(std::size_t n, std::mt19937_64& rng, bool complex_entries = true) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = Complex(normal(rng), complex_entries ? normal(rng) : 0.0);
    return m;
}

inline HermitianMatrix random_hermitian(std::size_t n, std::mt19937_64& rng, bool complex_entries = true) {
    return HermitianMatrix(random_matrix(n, rng, complex_entries));
}

inline SkewHermitian random_skew(std::size_t n, std::mt19937_64& rng, bool complex_entries = true) {
    return SkewHermitian(random_matrix(n, rng, complex_entries));
}

/// Random PSD matrix B B* / trace, scaled to the given trace.
inline HermitianMatrix random_psd(std::size_t n, std::mt19937_64& rng, bool complex_entries = true,
                                  double trace = 1.0) {
    const Matrix b = random_matrix(n, rng, complex_entries);
    Matrix p = b * b.adjoint();
    const double tr = p.trace().real();
    return HermitianMatrix(p * (trace / tr));
}

/// Random unitary e^X with spectral radius of X below `radius`.
inline SkewHermitian random_skew_with_radius(std::size_t n, std::mt19937_64& rng, double radius) {
    const SkewHermitian x = random_skew(n, rng);
    const auto e = eig_hermitian(HermitianMatrix(x.matrix() * Complex(0.0, -1.0)));
    const double r = std::max(std::abs(e.values.front()), std::abs(e.values.back()));
    std::uniform_real_distribution<double> frac(0.1, 1.0);
    return x * (radius * frac(rng) / r);
}

}  // namespace denflow::testing
