#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqlqg/ccr.hpp"
#include "cqlqg/luenberger.hpp"
#include "cqlqg/optimality.hpp"
#include "cqlqg/systems.hpp"

// Model-file ingestion and report emission.  Models are JSON documents with
// matrices as row-major nested arrays; a plant is given either by explicit
// state-space matrices or by energy/coupling parameters (never both), and the
// same exclusivity applies to the optional controller section.

namespace cqlqg {

using Json = nlohmann::ordered_json;

struct Tolerances {
    double pr = kPrTol;
    double rtol = kDefaultRtol;
    double hurwitz_margin = kDefaultHurwitzMargin;
};

struct ModelFile {
    Index n = 0, m1 = 0, m2 = 0, p1 = 0, p2 = 0, r = 0;
    CcrAlgebra algebra;
    QuantumPlant plant;
    Matrix d;  // controller feedthrough, p2 x m2
    std::optional<QuantumController> controller;
    bool controller_parameterized = false;
    Tolerances tol;
    std::optional<uint64_t> seed;
    std::vector<std::string> warnings;
    Json raw;
    std::string digest;

    LuenbergerGains controller_gains() const {
        if (!controller) throw ValidationError("controller: section required for this command");
        return LuenbergerGains{controller->b, controller->e};
    }
};

namespace io_detail {

inline std::string fnv1a_hex(const std::string& bytes) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline const Json& field(const Json& j, const std::string& key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(path + "." + key + ": missing");
    return *it;
}

inline Index int_field(const Json& j, const std::string& key, const std::string& path) {
    const Json& v = field(j, key, path);
    if (!v.is_number_integer())
        throw ValidationError(path + "." + key + ": expected an integer");
    return v.get<Index>();
}

inline Matrix parse_matrix(const Json& j, Index rows, Index cols, const std::string& path) {
    if (!j.is_array())
        throw ValidationError(path + ": expected an array of rows");
    if (static_cast<Index>(j.size()) != rows)
        throw ValidationError(path + ": expected " + std::to_string(rows) + " rows, got " +
                              std::to_string(j.size()));
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const Json& row = j[static_cast<size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            throw ValidationError(path + "[" + std::to_string(i) + "]: expected " +
                                  std::to_string(cols) + " entries");
        for (Index k = 0; k < cols; ++k) {
            const Json& v = row[static_cast<size_t>(k)];
            if (!v.is_number())
                throw ValidationError(path + "[" + std::to_string(i) + "][" +
                                      std::to_string(k) + "]: expected a number");
            m(i, k) = v.get<double>();
            if (!std::isfinite(m(i, k)))
                throw ValidationError(path + "[" + std::to_string(i) + "][" +
                                      std::to_string(k) + "]: entry is not finite");
        }
    }
    return m;
}

inline Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix read_feedthrough(const Json& section, const std::string& path, Index p, Index m,
                               const Matrix& j_channels, const char* pairs_key,
                               const char* explicit_key) {
    Matrix d;
    const bool has_pairs = section.contains(pairs_key);
    const bool has_explicit = section.contains(explicit_key);
    if (has_pairs && has_explicit)
        throw ValidationError(path + ": give either " + pairs_key + " or " + explicit_key);
    if (has_pairs) {
        std::vector<Index> pairs;
        for (const Json& v : section[pairs_key]) {
            if (!v.is_number_integer())
                throw ValidationError(path + "." + pairs_key + ": expected integers");
            pairs.push_back(v.get<Index>());
        }
        d = feedthrough_from_pairs(pairs, p, m);
    } else if (has_explicit) {
        d = parse_matrix(section[explicit_key], p, m, path + "." + explicit_key);
    } else {
        d = canonical_feedthrough(p, m);
    }
    try {
        validate_feedthrough(d, j_channels, explicit_key);
    } catch (const BadFeedthrough& e) {
        throw ValidationError(path + "." + explicit_key + ": " + e.what());
    }
    return d;
}

inline Matrix projected(const Matrix& m, bool antisym, const std::string& path,
                        std::vector<std::string>& warnings) {
    const Matrix kept = antisym ? antisymmetric_part(m) : symmetric_part(m);
    const double defect = (m - kept).norm();
    if (defect > 1e-12 * unit_floor(m.norm()))
        warnings.push_back(path + ": discarded " + (antisym ? "symmetric" : "antisymmetric") +
                           " part of norm " + std::to_string(defect));
    return kept;
}

}  // namespace io_detail

inline ModelFile ingest_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string bytes = buffer.str();

    ModelFile model;
    model.digest = io_detail::fnv1a_hex(bytes);
    try {
        model.raw = Json::parse(bytes);
    } catch (const Json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    const Json& doc = model.raw;
    using io_detail::field;
    using io_detail::int_field;
    using io_detail::parse_matrix;

    const Json& dims = field(doc, "dims", "model");
    model.n = int_field(dims, "n", "dims");
    model.m1 = int_field(dims, "m1", "dims");
    model.m2 = int_field(dims, "m2", "dims");
    model.p1 = int_field(dims, "p1", "dims");
    model.p2 = int_field(dims, "p2", "dims");
    model.r = int_field(dims, "r", "dims");
    if (model.n <= 0 || model.n % 2 != 0)
        throw ValidationError("dims.n: must be even and positive, got " + std::to_string(model.n));
    if (model.r < 0) throw ValidationError("dims.r: must be nonnegative");
    try {
        model.algebra = build_ccr_algebra(model.m1, model.m2, model.p1, model.p2);
    } catch (const Error& e) {
        throw ValidationError(std::string("dims: ") + e.what());
    }

    const Json& plant = field(doc, "plant", "model");
    const Matrix theta1 = io_detail::projected(
        parse_matrix(field(plant, "Theta1", "plant"), model.n, model.n, "plant.Theta1"),
        /*antisym=*/true, "plant.Theta1", model.warnings);
    if (!Eigen::FullPivLU<Matrix>(theta1).isInvertible())
        throw ValidationError("plant.Theta1: must be nonsingular");
    const Matrix d_plant = io_detail::read_feedthrough(plant, "plant", model.p1, model.m1,
                                                       model.algebra.J1, "D_pairs", "D");

    const Json& weights = field(doc, "weights", "model");
    const Matrix f = parse_matrix(field(weights, "F", "weights"), model.r, model.n, "weights.F");
    const Matrix g = parse_matrix(field(weights, "G", "weights"), model.r, model.p2, "weights.G");
    if (Eigen::ColPivHouseholderQR<Matrix>(g).rank() != model.p2)
        throw ValidationError("weights.G: must have full column rank p2");

    const bool plant_explicit = plant.contains("A");
    const bool plant_params = plant.contains("R1");
    if (plant_explicit == plant_params)
        throw ValidationError("plant: give exactly one of {A,B,C,E} or {R1,M1,L1}");
    if (plant_explicit) {
        model.plant.A = parse_matrix(field(plant, "A", "plant"), model.n, model.n, "plant.A");
        model.plant.B = parse_matrix(field(plant, "B", "plant"), model.n, model.m1, "plant.B");
        model.plant.C = parse_matrix(field(plant, "C", "plant"), model.p1, model.n, "plant.C");
        model.plant.E = parse_matrix(field(plant, "E", "plant"), model.n, model.p2, "plant.E");
        model.plant.Theta1 = theta1;
        model.plant.D = d_plant;
        model.plant.F = f;
        model.plant.G = g;
        model.plant.tildeJ1 = d_plant * model.algebra.J1 * d_plant.transpose();
    } else {
        EnergyCouplingParams par;
        par.R = io_detail::projected(
            parse_matrix(field(plant, "R1", "plant"), model.n, model.n, "plant.R1"),
            /*antisym=*/false, "plant.R1", model.warnings);
        par.M = parse_matrix(field(plant, "M1", "plant"), model.m1, model.n, "plant.M1");
        par.L = parse_matrix(field(plant, "L1", "plant"), model.p2, model.n, "plant.L1");
        model.plant = plant_from_params(par, theta1, d_plant, f, g, model.algebra);
    }

    if (doc.contains("controller") && !doc["controller"].is_null()) {
        const Json& ctrl = doc["controller"];
        model.d = io_detail::read_feedthrough(ctrl, "controller", model.p2, model.m2,
                                              model.algebra.J2, "d_pairs", "d");
        const bool ctrl_explicit = ctrl.contains("a");
        const bool ctrl_params = ctrl.contains("R2");
        if (ctrl_explicit == ctrl_params)
            throw ValidationError("controller: give exactly one of {a,b,c,e,Theta2} or {R2,b,e}");
        QuantumController qc;
        if (ctrl_explicit) {
            qc.a = parse_matrix(field(ctrl, "a", "controller"), model.n, model.n, "controller.a");
            qc.b = parse_matrix(field(ctrl, "b", "controller"), model.n, model.m2, "controller.b");
            qc.c = parse_matrix(field(ctrl, "c", "controller"), model.p2, model.n, "controller.c");
            qc.e = parse_matrix(field(ctrl, "e", "controller"), model.n, model.p1, "controller.e");
            qc.Theta2 = io_detail::projected(
                parse_matrix(field(ctrl, "Theta2", "controller"), model.n, model.n,
                             "controller.Theta2"),
                /*antisym=*/true, "controller.Theta2", model.warnings);
            qc.d = model.d;
            qc.tildeJ2 = model.d * model.algebra.J2 * model.d.transpose();
        } else {
            const Matrix r2 = io_detail::projected(
                parse_matrix(field(ctrl, "R2", "controller"), model.n, model.n, "controller.R2"),
                /*antisym=*/false, "controller.R2", model.warnings);
            const Matrix b =
                parse_matrix(field(ctrl, "b", "controller"), model.n, model.m2, "controller.b");
            const Matrix e =
                parse_matrix(field(ctrl, "e", "controller"), model.n, model.p1, "controller.e");
            Matrix theta2 = -theta1;
            if (ctrl.contains("Theta2"))
                theta2 = io_detail::projected(
                    parse_matrix(ctrl["Theta2"], model.n, model.n, "controller.Theta2"),
                    /*antisym=*/true, "controller.Theta2", model.warnings);
            qc = controller_from_rbe(r2, b, e, theta2, model.d, model.algebra);
            model.controller_parameterized = true;
        }
        model.controller = std::move(qc);
    } else {
        model.d = canonical_feedthrough(model.p2, model.m2);
    }

    if (doc.contains("tolerances")) {
        const Json& t = doc["tolerances"];
        if (t.contains("pr")) model.tol.pr = t["pr"].get<double>();
        if (t.contains("rtol")) model.tol.rtol = t["rtol"].get<double>();
        if (t.contains("hurwitz_margin"))
            model.tol.hurwitz_margin = t["hurwitz_margin"].get<double>();
        if (model.tol.pr <= 0 || model.tol.rtol <= 0 || model.tol.hurwitz_margin <= 0)
            throw ValidationError("tolerances: must be positive");
    }
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_integer())
            throw ValidationError("seed: expected an integer");
        model.seed = doc["seed"].get<uint64_t>();
    }
    return model;
}

// Full model document with the controller section replaced by an explicit
// controller; the result is re-ingestible.
inline Json model_with_controller(const ModelFile& model, const QuantumController& ctrl) {
    Json doc = model.raw;
    Json section;
    section["a"] = io_detail::matrix_to_json(ctrl.a);
    section["b"] = io_detail::matrix_to_json(ctrl.b);
    section["c"] = io_detail::matrix_to_json(ctrl.c);
    section["e"] = io_detail::matrix_to_json(ctrl.e);
    section["Theta2"] = io_detail::matrix_to_json(ctrl.Theta2);
    section["d"] = io_detail::matrix_to_json(ctrl.d);
    doc["controller"] = std::move(section);
    return doc;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
}

inline std::string iteration_log_csv(const std::vector<IterationRecord>& history) {
    std::string csv = "iter,L,V,f_norm,Rb_norm,Re_norm\n";
    char row[256];
    for (const IterationRecord& rec : history) {
        std::snprintf(row, sizeof(row), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", rec.iter,
                      rec.lagrangian, rec.cost, rec.f_norm, rec.rb_norm, rec.re_norm);
        csv += row;
    }
    return csv;
}

}  // namespace cqlqg
