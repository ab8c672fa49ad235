// File formats: JSON documents for matrices, solutions and models, CSV for
// sampled paths. Every reader validates its schema and throws SchemaError.
#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "denflow/geodesic.hpp"
#include "denflow/linalg.hpp"
#include "denflow/regularize.hpp"
#include "denflow/tangent.hpp"
#include "denflow/transcription.hpp"

namespace denflow::io {

using json = nlohmann::ordered_json;

class IoError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

inline void write_json_file(const std::string& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

// ---- matrices ---------------------------------------------------------------

/// {n, re, im?, meta}; im is omitted when every imaginary part is zero.
inline json matrix_to_json(const Matrix& m, const json& meta = json::object()) {
    const std::size_t n = m.size();
    json re = json::array(), im = json::array();
    bool complex = false;
    for (std::size_t i = 0; i < n; ++i) {
        json rr = json::array(), ir = json::array();
        for (std::size_t j = 0; j < n; ++j) {
            rr.push_back(m(i, j).real());
            ir.push_back(m(i, j).imag());
            complex = complex || m(i, j).imag() != 0.0;
        }
        re.push_back(std::move(rr));
        im.push_back(std::move(ir));
    }
    json doc = {{"n", n}, {"re", std::move(re)}};
    if (complex) doc["im"] = std::move(im);
    doc["meta"] = meta;
    return doc;
}

namespace detail {

inline const json& require(const json& doc, const char* key, const std::string& where) {
    if (!doc.is_object() || !doc.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
    return doc.at(key);
}

inline double require_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw SchemaError(where + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaError(where + ": non-finite number");
    return d;
}

inline RealVector require_vector(const json& v, const std::string& where, std::size_t expected = 0) {
    if (!v.is_array()) throw SchemaError(where + ": expected an array");
    if (expected && v.size() != expected) throw SchemaError(where + ": wrong length");
    RealVector out;
    for (const auto& x : v) out.push_back(require_number(x, where));
    return out;
}

inline std::vector<RealVector> require_square(const json& v, std::size_t n, const std::string& where) {
    if (!v.is_array() || v.size() != n) throw SchemaError(where + ": expected " + std::to_string(n) + " rows");
    std::vector<RealVector> rows;
    for (const auto& row : v) rows.push_back(require_vector(row, where, n));
    return rows;
}

}  // namespace detail

inline Matrix matrix_from_json(const json& doc, const std::string& where = "matrix") {
    const json& nj = detail::require(doc, "n", where);
    if (!nj.is_number_integer() || nj.get<long long>() <= 0) throw SchemaError(where + ": n must be a positive integer");
    const auto n = static_cast<std::size_t>(nj.get<long long>());
    const auto re = detail::require_square(detail::require(doc, "re", where), n, where + ".re");
    std::vector<RealVector> im;
    if (doc.contains("im") && !doc.at("im").is_null()) im = detail::require_square(doc.at("im"), n, where + ".im");
    if (doc.contains("meta") && !doc.at("meta").is_object()) throw SchemaError(where + ": meta must be an object");
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = Complex(re[i][j], im.empty() ? 0.0 : im[i][j]);
    return m;
}

inline HermitianMatrix hermitian_from_json(const json& doc, const std::string& where = "matrix", double tol = 1e-9) {
    try {
        return HermitianMatrix::checked(matrix_from_json(doc, where), tol);
    } catch (const StructureError& e) {
        throw SchemaError(where + ": " + e.what());
    }
}

inline SkewHermitian skew_from_json(const json& doc, const std::string& where = "matrix", double tol = 1e-9) {
    try {
        return SkewHermitian::checked(matrix_from_json(doc, where), tol);
    } catch (const StructureError& e) {
        throw SchemaError(where + ": " + e.what());
    }
}

inline UnitaryMatrix unitary_from_json(const json& doc, const std::string& where = "matrix") {
    try {
        return UnitaryMatrix(matrix_from_json(doc, where), 1e-8);
    } catch (const StructureError& e) {
        throw SchemaError(where + ": " + e.what());
    }
}

inline HermitianMatrix read_hermitian(const std::string& path) { return hermitian_from_json(read_json_file(path), path); }
inline SkewHermitian read_skew(const std::string& path) { return skew_from_json(read_json_file(path), path); }

// ---- glyphs -----------------------------------------------------------------

/// Eigenpairs at one time: eigenvalues ascending, unit eigenvectors.
inline json glyph_record(double t, const HermitianMatrix& rho) {
    const auto e = eig_hermitian(rho);
    json axes = json::array();
    for (std::size_t k = 0; k < e.values.size(); ++k) {
        json re = json::array(), im = json::array();
        for (std::size_t i = 0; i < rho.size(); ++i) {
            re.push_back(e.vectors(i, k).real());
            im.push_back(e.vectors(i, k).imag());
        }
        axes.push_back({{"eigenvalue", e.values[k]}, {"vector", {{"re", std::move(re)}, {"im", std::move(im)}}}});
    }
    return {{"t", t}, {"axes", std::move(axes)}};
}

/// sum_k eigenvalue_k v_k v_k*
inline Matrix glyph_matrix(const json& record) {
    const json& axes = detail::require(record, "axes", "glyph");
    if (!axes.is_array() || axes.empty()) throw SchemaError("glyph: axes must be a non-empty array");
    const std::size_t n = axes.size();
    Matrix m(n);
    double last = -std::numeric_limits<double>::infinity();
    for (const auto& ax : axes) {
        const double lambda = detail::require_number(detail::require(ax, "eigenvalue", "glyph"), "glyph.eigenvalue");
        if (lambda < last) throw SchemaError("glyph: eigenvalues must be ascending");
        last = lambda;
        const json& v = detail::require(ax, "vector", "glyph");
        const auto re = detail::require_vector(detail::require(v, "re", "glyph.vector"), "glyph.vector.re", n);
        const auto im = detail::require_vector(detail::require(v, "im", "glyph.vector"), "glyph.vector.im", n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                m(i, j) += lambda * Complex(re[i], im[i]) * std::conj(Complex(re[j], im[j]));
    }
    return m;
}

// ---- sampled paths ----------------------------------------------------------

struct PathRow {
    double t = 0.0;
    HermitianMatrix rho;
};

inline std::string path_csv(const std::vector<PathRow>& rows) {
    if (rows.empty()) return {};
    const std::size_t n = rows.front().rho.size();
    std::ostringstream os;
    os << "t";
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            os << ",re_" << i << '_' << j;
            if (i != j) os << ",im_" << i << '_' << j;
        }
    for (std::size_t k = 0; k < n; ++k) os << ",eig_" << k;
    os << ",min_eig,trace\n";
    for (const auto& r : rows) {
        const auto vals = eig_hermitian(r.rho).values;
        os << format_double(r.t);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                os << ',' << format_double(r.rho(i, j).real());
                if (i != j) os << ',' << format_double(r.rho(i, j).imag());
            }
        for (double v : vals) os << ',' << format_double(v);
        os << ',' << format_double(vals.front()) << ',' << format_double(r.rho.trace()) << '\n';
    }
    return os.str();
}

inline json path_json(const std::vector<PathRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        const auto vals = eig_hermitian(r.rho).values;
        out.push_back({{"t", r.t},
                       {"matrix", matrix_to_json(r.rho.matrix())},
                       {"eigenvalues", vals},
                       {"min_eig", vals.front()},
                       {"trace", r.rho.trace()}});
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<RealVector> rows;
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ls(s);
        while (std::getline(ls, cell, ',')) out.push_back(cell);
        return out;
    };
    if (!std::getline(in, line)) throw SchemaError("csv: missing header");
    table.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != table.header.size()) throw SchemaError("csv: ragged row");
        RealVector row;
        for (const auto& c : cells) {
            double v = 0.0;
            const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
            if (r.ec != std::errc() || r.ptr != c.data() + c.size()) throw SchemaError("csv: bad number '" + c + "'");
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

// ---- solutions --------------------------------------------------------------

inline json solution_to_json(const GeodesicSolution& sol, const SolutionDiagnostics& diag) {
    return {{"epsilon", sol.epsilon},
            {"X", matrix_to_json(sol.X.matrix(), {{"kind", "skew-hermitian"}})},
            {"Z", matrix_to_json(sol.Z.matrix(), {{"kind", "hermitian"}})},
            {"permutation", sol.permutation},
            {"cost", {{"rotation", sol.cost_rotation}, {"scaling", sol.cost_scaling}, {"total", sol.cost_total}}},
            {"diagnostics",
             {{"commutation", diag.commutation},
              {"trace_z", diag.trace_z},
              {"endpoint_residual", diag.endpoint_residual},
              {"min_path_eigenvalue", diag.min_path_eigenvalue}}}};
}

inline GeodesicSolution solution_from_json(const json& doc) {
    GeodesicSolution sol;
    sol.epsilon = detail::require_number(detail::require(doc, "epsilon", "solution"), "solution.epsilon");
    sol.X = skew_from_json(detail::require(doc, "X", "solution"), "solution.X");
    sol.Z = hermitian_from_json(detail::require(doc, "Z", "solution"), "solution.Z");
    const json& perm = detail::require(doc, "permutation", "solution");
    if (!perm.is_array() || perm.size() != sol.X.size()) throw SchemaError("solution.permutation: wrong length");
    for (const auto& p : perm) {
        if (!p.is_number_integer()) throw SchemaError("solution.permutation: expected integers");
        sol.permutation.push_back(p.get<int>());
    }
    const json& cost = detail::require(doc, "cost", "solution");
    sol.cost_rotation = detail::require_number(detail::require(cost, "rotation", "solution.cost"), "solution.cost");
    sol.cost_scaling = detail::require_number(detail::require(cost, "scaling", "solution.cost"), "solution.cost");
    sol.cost_total = detail::require_number(detail::require(cost, "total", "solution.cost"), "solution.cost");
    detail::require(doc, "diagnostics", "solution");
    return sol;
}

inline json discrete_path_to_json(const DiscretePath& path, double epsilon) {
    json steps = json::array();
    for (int k = 0; k <= path.steps; ++k) {
        json s = {{"k", k}, {"t", k * path.dt}, {"rho", matrix_to_json(path.states[k].matrix())}};
        if (k < path.steps) {
            s["X"] = matrix_to_json(path.X[k].matrix());
            s["u"] = matrix_to_json(path.u[k].matrix());
        }
        steps.push_back(std::move(s));
    }
    return {{"epsilon", epsilon}, {"steps", path.steps}, {"dt", path.dt}, {"states", std::move(steps)}};
}

inline json path_report(const DiscretePath& path, double epsilon, double closed_form_cost) {
    double rotation = 0.0, scaling = 0.0, commutation = 0.0;
    for (int k = 0; k < path.steps; ++k) {
        rotation += frob_norm(path.X[k].matrix()) * path.dt;
        scaling += frob_norm(path.u[k].matrix()) * path.dt;
        commutation = std::max(commutation, frob_norm(commutator(path.u[k].matrix(), path.states[k].matrix())));
    }
    return {{"epsilon", epsilon},
            {"steps", path.steps},
            {"cost", path.cost},
            {"rotation_cost", rotation},
            {"scaling_cost", scaling},
            {"closed_form_cost", closed_form_cost},
            {"endpoint_residual", path.endpoint_residual},
            {"max_commutation", commutation},
            {"rounds", path.rounds},
            {"converged", path.converged},
            {"objective_trace", path.objective_trace}};
}

// ---- regularization ---------------------------------------------------------

inline json model_to_json(const RegularizedModel& m, bool squared) {
    return {{"V", matrix_to_json(m.V.matrix(), {{"kind", "unitary"}})},
            {"p", m.p},
            {"z", m.z},
            {"X", matrix_to_json(m.X.matrix(), {{"kind", "skew-hermitian"}})},
            {"rho0", matrix_to_json(m.rho0().matrix(), {{"kind", "hermitian"}})},
            {"Z", matrix_to_json(m.Z().matrix(), {{"kind", "hermitian"}})},
            {"objective", m.objective},
            {"squared", squared},
            {"stalled", m.stalled},
            {"iterations", m.iterations},
            {"start", m.start},
            {"objective_trace", m.objective_trace}};
}

inline RegularizedModel model_from_json(const json& doc) {
    RegularizedModel m;
    m.V = unitary_from_json(detail::require(doc, "V", "model"), "model.V");
    const std::size_t n = m.V.size();
    m.p = detail::require_vector(detail::require(doc, "p", "model"), "model.p", n);
    m.z = detail::require_vector(detail::require(doc, "z", "model"), "model.z", n);
    m.X = skew_from_json(detail::require(doc, "X", "model"), "model.X");
    if (m.X.size() != n) throw SchemaError("model.X: dimension mismatch");
    m.objective = detail::require_number(detail::require(doc, "objective", "model"), "model.objective");
    const json& st = detail::require(doc, "stalled", "model");
    if (!st.is_boolean()) throw SchemaError("model.stalled: expected a boolean");
    m.stalled = st.get<bool>();
    return m;
}

inline json dataset_to_json(const std::vector<MatrixSample>& samples) {
    json out = json::array();
    for (const auto& s : samples) out.push_back({{"t", s.t}, {"matrix", matrix_to_json(s.value.matrix())}});
    return out;
}

inline std::vector<MatrixSample> dataset_from_json(const json& doc) {
    if (!doc.is_array()) throw SchemaError("dataset: expected an array of {t, matrix}");
    std::vector<MatrixSample> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::string where = "dataset[" + std::to_string(i) + "]";
        const double t = detail::require_number(detail::require(doc[i], "t", where), where + ".t");
        out.push_back({t, hermitian_from_json(detail::require(doc[i], "matrix", where), where + ".matrix")});
    }
    return out;
}

inline std::string fit_csv(const RegularizedModel& m, const std::vector<MatrixSample>& samples) {
    std::ostringstream os;
    os << "t,misfit\n";
    for (const auto& s : samples)
        os << format_double(s.t) << ',' << format_double(frob_norm(m.eval(s.t).matrix() - s.value.matrix())) << '\n';
    return os.str();
}

// ---- tangent decomposition --------------------------------------------------

inline json decomposition_to_json(const HermitianMatrix& rho, const HermitianMatrix& direction, const TangentSplit& s) {
    const std::size_t n = rho.size();
    const Matrix recon = s.rot.matrix() + s.u.matrix() + Matrix::identity(n) * s.trace_part;
    return {{"X", matrix_to_json(s.X.matrix(), {{"kind", "skew-hermitian"}})},
            {"rotation", matrix_to_json(s.rot.matrix(), {{"kind", "hermitian"}})},
            {"u", matrix_to_json(s.u.matrix(), {{"kind", "hermitian"}})},
            {"trace_part", s.trace_part},
            {"orthogonality_residual", std::abs(frob_inner(s.rot, s.u))},
            {"commutation_residual", frob_norm(commutator(s.u.matrix(), rho.matrix()))},
            {"reconstruction_residual", frob_norm(recon - direction.matrix())},
            {"generator_residual", frob_norm(commutator(s.X, rho).matrix() - s.rot.matrix())}};
}

}  // namespace denflow::io
