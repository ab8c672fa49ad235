// Dense complex linear algebra for small Hermitian / skew-Hermitian / unitary
// matrices: cyclic Jacobi eigensolver, exponential of skew-Hermitian matrices,
// principal logarithm of unitaries, commutators and Frobenius geometry.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace denflow {

using Complex = std::complex<double>;
using RealVector = std::vector<double>;
using ComplexVector = std::vector<Complex>;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Input violates a structural requirement (not Hermitian, not unitary, ...).
class StructureError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// An eigenphase of a unitary sits on the branch cut of the principal log.
class BranchAmbiguity : public Error {
public:
    explicit BranchAmbiguity(double phase)
        : Error(make_message(phase)), phase_(phase) {}
    double phase() const noexcept { return phase_; }

private:
    static std::string make_message(double phase) {
        std::ostringstream os;
        os.precision(17);
        os << "eigenphase " << phase << " lies on the branch cut at -pi";
        return os.str();
    }
    double phase_;
};

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Square dense complex matrix, row-major.
class Matrix {
public:
    Matrix() = default;
    explicit Matrix(std::size_t n) : n_(n), data_(n * n) {}
    Matrix(std::initializer_list<std::initializer_list<Complex>> rows) : n_(rows.size()), data_(n_ * n_) {
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != n_) throw DimensionError("Matrix: initializer rows must form a square");
            std::size_t j = 0;
            for (const auto& v : row) (*this)(i, j++) = v;
            ++i;
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(const RealVector& d) {
        Matrix m(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t size() const noexcept { return n_; }

    Complex& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
    const Complex& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }

    const std::vector<Complex>& data() const noexcept { return data_; }

    Matrix adjoint() const {
        Matrix r(n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) r(j, i) = std::conj((*this)(i, j));
        return r;
    }

    Complex trace() const {
        Complex s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += (*this)(i, i);
        return s;
    }

    Matrix& operator+=(const Matrix& o) {
        check_same(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_same(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    Matrix& operator*=(Complex s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator-(Matrix a) { return a *= -1.0; }
    friend Matrix operator*(Matrix a, Complex s) { return a *= s; }
    friend Matrix operator*(Complex s, Matrix a) { return a *= s; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        a.check_same(b);
        const std::size_t n = a.n_;
        Matrix r(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) {
                const Complex aik = a(i, k);
                if (aik == Complex{}) continue;
                for (std::size_t j = 0; j < n; ++j) r(i, j) += aik * b(k, j);
            }
        return r;
    }

    ComplexVector column(std::size_t j) const {
        ComplexVector c(n_);
        for (std::size_t i = 0; i < n_; ++i) c[i] = (*this)(i, j);
        return c;
    }

    void check_same(const Matrix& o) const {
        if (o.n_ != n_) throw DimensionError("matrix dimension mismatch");
    }

private:
    std::size_t n_ = 0;
    std::vector<Complex> data_;
};

inline double frob_norm(const Matrix& a) {
    double s = 0.0;
    for (const auto& v : a.data()) s += std::norm(v);
    return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (const auto& v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

inline bool is_real(const Matrix& a, double tol = 0.0) {
    return std::all_of(a.data().begin(), a.data().end(), [tol](const Complex& v) { return std::abs(v.imag()) <= tol; });
}

// ---------------------------------------------------------------------------
// Strong types
// ---------------------------------------------------------------------------

/// Hermitian matrix. Construction symmetrizes: A <- (A + A*)/2.
class HermitianMatrix {
public:
    HermitianMatrix() = default;
    explicit HermitianMatrix(const Matrix& a) : m_(0.5 * (a + a.adjoint())) {}
    explicit HermitianMatrix(std::size_t n) : m_(n) {}

    /// Rejects inputs whose anti-Hermitian part exceeds tol * max(1, ||A||_F).
    static HermitianMatrix checked(const Matrix& a, double tol = 1e-9) {
        const double dev = frob_norm(a - a.adjoint()) * 0.5;
        if (dev > tol * std::max(1.0, frob_norm(a))) {
            std::ostringstream os;
            os << "matrix is not Hermitian (anti-Hermitian part " << dev << ")";
            throw StructureError(os.str());
        }
        return HermitianMatrix(a);
    }

    static HermitianMatrix diagonal(const RealVector& d) { return HermitianMatrix(Matrix::diagonal(d)); }
    static HermitianMatrix identity(std::size_t n) { return HermitianMatrix(Matrix::identity(n)); }

    std::size_t size() const noexcept { return m_.size(); }
    const Matrix& matrix() const noexcept { return m_; }
    operator const Matrix&() const noexcept { return m_; }
    const Complex& operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
    double trace() const { return m_.trace().real(); }

private:
    Matrix m_;
};

/// Skew-Hermitian matrix. Construction projects: A <- (A - A*)/2.
class SkewHermitian {
public:
    SkewHermitian() = default;
    explicit SkewHermitian(const Matrix& a) : m_(0.5 * (a - a.adjoint())) {}
    explicit SkewHermitian(std::size_t n) : m_(n) {}

    static SkewHermitian checked(const Matrix& a, double tol = 1e-9) {
        const double dev = frob_norm(a + a.adjoint()) * 0.5;
        if (dev > tol * std::max(1.0, frob_norm(a))) {
            std::ostringstream os;
            os << "matrix is not skew-Hermitian (Hermitian part " << dev << ")";
            throw StructureError(os.str());
        }
        return SkewHermitian(a);
    }

    std::size_t size() const noexcept { return m_.size(); }
    const Matrix& matrix() const noexcept { return m_; }
    operator const Matrix&() const noexcept { return m_; }
    const Complex& operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }

    friend SkewHermitian operator*(const SkewHermitian& x, double s) { return SkewHermitian(x.m_ * s); }
    friend SkewHermitian operator*(double s, const SkewHermitian& x) { return SkewHermitian(x.m_ * s); }
    friend SkewHermitian operator+(const SkewHermitian& a, const SkewHermitian& b) { return SkewHermitian(a.m_ + b.m_); }

private:
    Matrix m_;
};

/// Unitary matrix; ||Q*Q - I||_F is checked on construction.
class UnitaryMatrix {
public:
    UnitaryMatrix() = default;
    explicit UnitaryMatrix(Matrix q, double tol = 1e-10) : m_(std::move(q)) {
        const double dev = frob_norm(m_.adjoint() * m_ - Matrix::identity(m_.size()));
        if (dev > tol) {
            std::ostringstream os;
            os << "matrix is not unitary (||Q*Q - I||_F = " << dev << ")";
            throw StructureError(os.str());
        }
    }
    static UnitaryMatrix identity(std::size_t n) { return UnitaryMatrix(Matrix::identity(n)); }

    std::size_t size() const noexcept { return m_.size(); }
    const Matrix& matrix() const noexcept { return m_; }
    operator const Matrix&() const noexcept { return m_; }
    const Complex& operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
    UnitaryMatrix adjoint() const { return UnitaryMatrix(m_.adjoint()); }

private:
    Matrix m_;
};

// ---------------------------------------------------------------------------
// Products and inner products
// ---------------------------------------------------------------------------

/// [A, B] = AB - BA.
inline Matrix commutator(const Matrix& a, const Matrix& b) {
    a.check_same(b);
    return a * b - b * a;
}

/// [X, rho] for X skew-Hermitian and rho Hermitian is Hermitian and traceless.
inline HermitianMatrix commutator(const SkewHermitian& x, const HermitianMatrix& rho) {
    return HermitianMatrix(commutator(x.matrix(), rho.matrix()));
}

/// Re trace(A* B).
inline double frob_inner(const Matrix& a, const Matrix& b) {
    a.check_same(b);
    double s = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) s += (std::conj(a.data()[k]) * b.data()[k]).real();
    return s;
}

/// Q A Q*.
inline Matrix conjugate(const Matrix& q, const Matrix& a) { return q * a * q.adjoint(); }

inline HermitianMatrix conjugate(const UnitaryMatrix& q, const HermitianMatrix& a) {
    return HermitianMatrix(conjugate(q.matrix(), a.matrix()));
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition (cyclic complex Jacobi)
// ---------------------------------------------------------------------------

struct EigenOptions {
    int max_sweeps = 100;
    double tolerance = 1e-12;  // stop when off(A) <= tolerance * ||A||_F
};

struct EigenDecomposition {
    RealVector values;     // ascending
    UnitaryMatrix vectors; // column k pairs with values[k]
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) s += std::norm(a(i, j));
    return std::sqrt(s);
}

// Rotate columns p, q of m by the 2x2 block g = [[gpp, gpq], [gqp, gqq]].
inline void rotate_columns(Matrix& m, std::size_t p, std::size_t q, Complex gpp, Complex gpq, Complex gqp,
                           Complex gqq) {
    for (std::size_t k = 0; k < m.size(); ++k) {
        const Complex mp = m(k, p), mq = m(k, q);
        m(k, p) = mp * gpp + mq * gqp;
        m(k, q) = mp * gpq + mq * gqq;
    }
}

inline void rotate_rows_adjoint(Matrix& m, std::size_t p, std::size_t q, Complex gpp, Complex gpq, Complex gqp,
                                Complex gqq) {
    for (std::size_t k = 0; k < m.size(); ++k) {
        const Complex mp = m(p, k), mq = m(q, k);
        m(p, k) = std::conj(gpp) * mp + std::conj(gqp) * mq;
        m(q, k) = std::conj(gpq) * mp + std::conj(gqq) * mq;
    }
}

// Largest-magnitude component made real positive; ties go to the lowest index.
inline void fix_column_phase(Matrix& v, std::size_t col) {
    const std::size_t n = v.size();
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, std::abs(v(i, col)));
    if (best == 0.0) return;
    std::size_t pivot = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(v(i, col)) >= best * (1.0 - 1e-9)) {
            pivot = i;
            break;
        }
    const Complex phase = std::conj(v(pivot, col)) / std::abs(v(pivot, col));
    for (std::size_t i = 0; i < n; ++i) v(i, col) *= phase;
    v(pivot, col) = std::abs(v(pivot, col));
}

}  // namespace detail

inline EigenDecomposition eig_hermitian(const HermitianMatrix& input, const EigenOptions& opts = {}) {
    const std::size_t n = input.size();
    Matrix a = input.matrix();
    Matrix v = Matrix::identity(n);
    const double threshold = opts.tolerance * frob_norm(a);

    bool converged = false;
    double off = detail::off_diagonal_norm(a);
    for (int sweep = 0; sweep <= opts.max_sweeps; ++sweep) {
        if (off <= threshold) {
            converged = true;
            break;
        }
        if (sweep == opts.max_sweeps) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const Complex b = a(p, q);
                const double absb = std::abs(b);
                if (absb == 0.0) continue;
                // Phase-align the pair to a real symmetric 2x2 block, then apply
                // the classical Jacobi rotation.
                const Complex e = std::conj(b) / absb;
                const double app = a(p, p).real(), aqq = a(q, q).real();
                const double theta = (aqq - app) / (2.0 * absb);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const Complex gpp = c, gpq = s, gqp = -s * e, gqq = c * e;
                detail::rotate_columns(a, p, q, gpp, gpq, gqp, gqq);
                detail::rotate_rows_adjoint(a, p, q, gpp, gpq, gqp, gqq);
                detail::rotate_columns(v, p, q, gpp, gpq, gqp, gqq);
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                a(p, p) = a(p, p).real();
                a(q, q) = a(q, q).real();
            }
        off = detail::off_diagonal_norm(a);
    }
    if (!converged) {
        std::ostringstream os;
        os << "Jacobi eigensolver did not converge after " << opts.max_sweeps
           << " sweeps (off-diagonal residual " << off << ")";
        throw ConvergenceError(os.str(), off);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i).real() < a(j, j).real(); });

    RealVector values(n);
    Matrix vectors(n);
    for (std::size_t k = 0; k < n; ++k) {
        values[k] = a(order[k], order[k]).real();
        for (std::size_t i = 0; i < n; ++i) vectors(i, k) = v(i, order[k]);
        detail::fix_column_phase(vectors, k);
    }
    return {std::move(values), UnitaryMatrix(std::move(vectors), 1e-8)};
}

/// V diag(values) V*.
inline Matrix reconstruct(const Matrix& vectors, const RealVector& values) {
    const std::size_t n = vectors.size();
    Matrix r(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            Complex s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += vectors(i, k) * values[k] * std::conj(vectors(j, k));
            r(i, j) = s;
        }
    return r;
}

inline Matrix reconstruct(const Matrix& vectors, const ComplexVector& values) {
    const std::size_t n = vectors.size();
    Matrix r(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            Complex s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += vectors(i, k) * values[k] * std::conj(vectors(j, k));
            r(i, j) = s;
        }
    return r;
}

inline double min_eigenvalue(const HermitianMatrix& a) { return eig_hermitian(a).values.front(); }

// ---------------------------------------------------------------------------
// Exponential and logarithm on the unitary group
// ---------------------------------------------------------------------------

/// e^X = W diag(e^{i theta}) W* where -iX = W diag(theta) W*.
inline UnitaryMatrix expm_skew(const SkewHermitian& x) {
    const auto eig = eig_hermitian(HermitianMatrix(x.matrix() * Complex(0.0, -1.0)));
    ComplexVector phases(eig.values.size());
    for (std::size_t k = 0; k < phases.size(); ++k) phases[k] = std::polar(1.0, eig.values[k]);
    return UnitaryMatrix(reconstruct(eig.vectors, phases), 1e-9);
}

struct UnitaryEigen {
    RealVector phases;  // in (-pi, pi]
    Matrix vectors;
};

/// Spectral decomposition of a unitary matrix. A generic real combination of
/// its Hermitian and anti-Hermitian parts is diagonalized, and clusters of
/// near-equal eigenvalues are split with the orthogonal combination.
inline UnitaryEigen eig_unitary(const Matrix& q) {
    const std::size_t n = q.size();
    const double gamma = 0.6180339887498949;
    const Matrix qa = q.adjoint();
    const Matrix cos_part = 0.5 * (q + qa);
    const Matrix sin_part = (q - qa) * Complex(0.0, -0.5);
    const Matrix mix = std::cos(gamma) * cos_part + std::sin(gamma) * sin_part;
    const Matrix ortho = -std::sin(gamma) * cos_part + std::cos(gamma) * sin_part;

    auto eig = eig_hermitian(HermitianMatrix(mix));
    Matrix w = eig.vectors.matrix();

    const double cluster_gap = 1e-5;
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && eig.values[end] - eig.values[end - 1] < cluster_gap) ++end;
        const std::size_t m = end - start;
        if (m > 1) {
            Matrix restricted(m);
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b) {
                    Complex s = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < n; ++j)
                            s += std::conj(w(i, start + a)) * ortho(i, j) * w(j, start + b);
                    restricted(a, b) = s;
                }
            const auto sub = eig_hermitian(HermitianMatrix(restricted));
            Matrix block(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t b = 0; b < m; ++b) {
                    Complex s = 0.0;
                    for (std::size_t a = 0; a < m; ++a) s += w(i, start + a) * sub.vectors(a, b);
                    block(i, b) = s;
                }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t b = 0; b < m; ++b) w(i, start + b) = block(i, b);
        }
        start = end;
    }

    RealVector phases(n);
    for (std::size_t k = 0; k < n; ++k) {
        Complex rq = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) rq += std::conj(w(i, k)) * q(i, j) * w(j, k);
        phases[k] = std::arg(rq);
    }
    return {std::move(phases), std::move(w)};
}

/// Frobenius norm of the principal logarithm, sqrt(sum theta_k^2). Insensitive
/// to the branch choice at -1.
inline double log_norm(const Matrix& q) {
    const auto e = eig_unitary(q);
    double s = 0.0;
    for (double t : e.phases) s += t * t;
    return std::sqrt(s);
}

struct LogOptions {
    double branch_tolerance = 1e-8;
};

/// Principal logarithm with eigenphases in (-pi, pi].
inline SkewHermitian logm_unitary(const UnitaryMatrix& q, const LogOptions& opts = {}) {
    const auto e = eig_unitary(q.matrix());
    ComplexVector iphases(e.phases.size());
    for (std::size_t k = 0; k < e.phases.size(); ++k) {
        if (e.phases[k] < -kPi + opts.branch_tolerance) throw BranchAmbiguity(e.phases[k]);
        iphases[k] = Complex(0.0, e.phases[k]);
    }
    return SkewHermitian(reconstruct(e.vectors, iphases));
}

/// Logarithm that resolves a -1 eigenvalue by rotating the whole spectrum by a
/// small phase before taking the principal branch. Eigenphases at the cut are
/// mapped to +pi. Still throws if the perturbation keeps landing on the cut.
inline SkewHermitian logm_unitary_resolved(const UnitaryMatrix& q, const LogOptions& opts = {}) {
    try {
        return logm_unitary(q, opts);
    } catch (const BranchAmbiguity&) {
    }
    double delta = 1e-6;
    for (int attempt = 0; attempt < 4; ++attempt, delta *= 7.0) {
        try {
            const UnitaryMatrix shifted(q.matrix() * std::polar(1.0, -delta), 1e-9);
            const auto l = logm_unitary(shifted, opts);
            return SkewHermitian(l.matrix() + Matrix::identity(q.size()) * Complex(0.0, delta));
        } catch (const BranchAmbiguity& e) {
            if (attempt == 3) throw;
        }
    }
    throw BranchAmbiguity(-kPi);
}

// ---------------------------------------------------------------------------
// Real-parameter packing (n^2 reals for either Hermitian or skew-Hermitian)
// ---------------------------------------------------------------------------

inline void pack_hermitian(const Matrix& h, RealVector& out) {
    const std::size_t n = h.size();
    for (std::size_t i = 0; i < n; ++i) out.push_back(h(i, i).real());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            out.push_back(h(i, j).real());
            out.push_back(h(i, j).imag());
        }
}

inline HermitianMatrix unpack_hermitian(std::size_t n, const double* p) {
    Matrix h(n);
    for (std::size_t i = 0; i < n; ++i) h(i, i) = *p++;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            h(i, j) = Complex(p[0], p[1]);
            h(j, i) = std::conj(h(i, j));
            p += 2;
        }
    return HermitianMatrix(h);
}

inline void pack_skew(const Matrix& x, RealVector& out) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out.push_back(x(i, i).imag());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            out.push_back(x(i, j).real());
            out.push_back(x(i, j).imag());
        }
}

inline SkewHermitian unpack_skew(std::size_t n, const double* p) {
    Matrix x(n);
    for (std::size_t i = 0; i < n; ++i) x(i, i) = Complex(0.0, *p++);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            x(i, j) = Complex(p[0], p[1]);
            x(j, i) = -std::conj(x(i, j));
            p += 2;
        }
    return SkewHermitian(x);
}

}  // namespace denflow
