// Independent reference computations used only by tests.
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "denflow/linalg.hpp"

namespace denflow::oracle {

/// Exhaustive constant-control interpolation cost for real endpoints with
/// simple spectra: every spectral matching, every +-1 column sign pattern and a
/// uniform phase grid (step `grid_degrees`) over the diagonal gauge, followed
/// by a shrinking pattern search from the best grid point.
struct BruteForceResult {
    double total = std::numeric_limits<double>::infinity();
    double rotation = 0.0;
    double scaling = 0.0;
    std::vector<int> permutation;
};

inline BruteForceResult brute_force_interpolation(const HermitianMatrix& rho0, const HermitianMatrix& rho1,
                                                  double epsilon, double grid_degrees) {
    const std::size_t n = rho0.size();
    const auto e0 = eig_hermitian(rho0);
    const auto e1 = eig_hermitian(rho1);
    const Matrix& u1 = e1.vectors.matrix();

    BruteForceResult best;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        double zz = 0.0;
        Matrix u0p(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = e1.values[perm[i]] - e0.values[i];
            zz += z * z;
            for (std::size_t r = 0; r < n; ++r) u0p(r, perm[i]) = e0.vectors(r, i);
        }
        const double scaling = std::sqrt(zz);
        const Matrix u0p_adj = u0p.adjoint();

        auto rotation_norm = [&](const std::vector<double>& phases) {
            Matrix m = u1;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < n; ++c) m(r, c) *= std::polar(1.0, phases[c]);
            return log_norm(m * u0p_adj);
        };

        double best_rot = std::numeric_limits<double>::infinity();
        std::vector<double> best_phases(n, 0.0);
        auto visit = [&](const std::vector<double>& ph) {
            const double f = rotation_norm(ph);
            if (f < best_rot) {
                best_rot = f;
                best_phases = ph;
            }
        };

        // Sign patterns (phases 0 / pi).
        for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
            std::vector<double> ph(n);
            for (std::size_t i = 0; i < n; ++i) ph[i] = (mask >> i) & 1 ? kPi : 0.0;
            visit(ph);
        }

        // Uniform grid.
        const double step = grid_degrees * kPi / 180.0;
        const int points = static_cast<int>(std::round(360.0 / grid_degrees));
        std::vector<int> idx(n, 0);
        while (true) {
            std::vector<double> ph(n);
            for (std::size_t i = 0; i < n; ++i) ph[i] = -kPi + step * idx[i];
            visit(ph);
            std::size_t k = 0;
            while (k < n && ++idx[k] == points) idx[k++] = 0;
            if (k == n) break;
        }

        // Pattern search polish.
        double h = step;
        while (h > 1e-9) {
            bool moved = false;
            for (std::size_t i = 0; i < n; ++i)
                for (double dir : {-1.0, 1.0}) {
                    auto ph = best_phases;
                    ph[i] += dir * h;
                    const double before = best_rot;
                    visit(ph);
                    if (best_rot < before) moved = true;
                }
            if (!moved) h *= 0.5;
        }

        const double total = best_rot + epsilon * scaling;
        if (total < best.total) best = {total, best_rot, scaling, perm};
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace denflow::oracle
