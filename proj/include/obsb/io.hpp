#ifndef OBSB_IO_HPP
#define OBSB_IO_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsb/ergodicity.hpp"
#include "obsb/errors.hpp"
#include "obsb/harness.hpp"
#include "obsb/operator.hpp"
#include "obsb/perturbation.hpp"
#include "obsb/space.hpp"

namespace obsb {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Spaces and elements
// ---------------------------------------------------------------------------

inline json to_json(const SpaceDescriptor& s) {
    switch (s.kind) {
        case SpaceKind::Classical: return {{"kind", "classical"}, {"n", s.n}};
        case SpaceKind::PCone: return {{"kind", "pcone"}, {"d", s.n}, {"p", s.p}};
        case SpaceKind::Quantum: return {{"kind", "quantum"}, {"d", s.n}};
    }
    throw malformed_error("unknown space kind");
}

inline SpaceDescriptor space_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
        throw malformed_error("space: object with string field 'kind' required");
    std::string kind = j["kind"];
    auto dim_of = [&](const char* primary, const char* alt) {
        if (j.contains(primary)) return j[primary].get<int>();
        if (j.contains(alt)) return j[alt].get<int>();
        throw malformed_error("space: missing dimension field for kind '" + kind + "'");
    };
    try {
        if (kind == "classical") return SpaceDescriptor::classical(dim_of("n", "d"));
        if (kind == "pcone") {
            if (!j.contains("p")) throw malformed_error("pcone space: field 'p' required");
            return SpaceDescriptor::pcone(dim_of("d", "n"), j["p"].get<double>());
        }
        if (kind == "quantum") return SpaceDescriptor::quantum(dim_of("d", "n"));
    } catch (const precondition_error& e) {
        throw malformed_error(std::string("space: ") + e.what());
    }
    throw malformed_error("space: unknown kind '" + kind + "'");
}

inline json to_json(const Element& x) {
    json j;
    j["space"] = to_json(x.space);
    j["coords"] = std::vector<double>(x.coords.data(), x.coords.data() + x.coords.size());
    return j;
}

namespace detail {
inline Eigen::MatrixXd matrix_from_json(const json& rows, const std::string& what) {
    if (!rows.is_array() || rows.empty())
        throw malformed_error(what + ": non-empty array of rows required");
    const auto r = rows.size();
    const auto c = rows[0].is_array() ? rows[0].size() : 0;
    if (c == 0) throw malformed_error(what + ": rows must be non-empty arrays");
    Eigen::MatrixXd M(static_cast<int>(r), static_cast<int>(c));
    for (std::size_t i = 0; i < r; ++i) {
        if (!rows[i].is_array() || rows[i].size() != c)
            throw malformed_error(what + ": ragged rows");
        for (std::size_t j = 0; j < c; ++j) M(static_cast<int>(i), static_cast<int>(j)) = rows[i][j].get<double>();
    }
    return M;
}
} // namespace detail

inline Element element_from_json(const json& j) {
    if (!j.is_object() || !j.contains("space"))
        throw malformed_error("element: object with 'space' required");
    SpaceDescriptor s = space_from_json(j["space"]);
    if (j.contains("coords")) {
        auto v = j["coords"].get<std::vector<double>>();
        Eigen::VectorXd c = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<int>(v.size()));
        return make_element(s, c);
    }
    if (j.contains("matrix_re")) {
        if (s.kind != SpaceKind::Quantum)
            throw malformed_error("element: matrix form only valid for quantum spaces");
        Eigen::MatrixXd re = detail::matrix_from_json(j["matrix_re"], "element matrix_re");
        Eigen::MatrixXd im = j.contains("matrix_im")
                                 ? detail::matrix_from_json(j["matrix_im"], "element matrix_im")
                                 : Eigen::MatrixXd::Zero(re.rows(), re.cols()).eval();
        if (re.rows() != s.n || re.cols() != s.n || im.rows() != s.n || im.cols() != s.n)
            throw malformed_error("element: matrix shape does not match the space");
        Eigen::MatrixXcd M = re.cast<std::complex<double>>() +
                             std::complex<double>(0, 1) * im.cast<std::complex<double>>();
        try {
            return make_element(s, encode_hermitian(M));
        } catch (const malformed_error& e) {
            throw malformed_error(std::string("element: ") + e.what());
        }
    }
    throw malformed_error("element: 'coords' or 'matrix_re' required");
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

inline json to_json(const MarkovOperator& T) {
    json j;
    j["space"] = to_json(T.space);
    json rows = json::array();
    for (int i = 0; i < T.matrix.rows(); ++i) {
        json row = json::array();
        for (int c = 0; c < T.matrix.cols(); ++c) row.push_back(T.matrix(i, c));
        rows.push_back(row);
    }
    j["matrix"] = rows;
    j["validated"] = T.validated;
    j["cp_certified"] = T.cp_certified;
    json report = json::array();
    for (const auto& v : T.validation_report)
        report.push_back({{"kind", v.kind}, {"magnitude", v.magnitude}, {"witness", v.witness}});
    j["validation_report"] = report;
    return j;
}

inline MarkovOperator operator_from_json(const json& j, int samples = 64, std::uint64_t seed = 0) {
    if (!j.is_object() || !j.contains("space"))
        throw malformed_error("operator: object with 'space' required");
    SpaceDescriptor s = space_from_json(j["space"]);
    if (j.contains("kraus")) {
        if (s.kind != SpaceKind::Quantum)
            throw malformed_error("operator: 'kraus' form only valid for quantum spaces");
        std::vector<Eigen::MatrixXcd> kraus;
        for (const auto& kj : j["kraus"]) {
            Eigen::MatrixXd re = detail::matrix_from_json(kj["re"], "kraus re");
            Eigen::MatrixXd im = kj.contains("im")
                                     ? detail::matrix_from_json(kj["im"], "kraus im")
                                     : Eigen::MatrixXd::Zero(re.rows(), re.cols()).eval();
            if (re.rows() != s.n || re.cols() != s.n || im.rows() != s.n || im.cols() != s.n)
                throw malformed_error("operator: kraus shape does not match the space");
            kraus.push_back(re.cast<std::complex<double>>() +
                            std::complex<double>(0, 1) * im.cast<std::complex<double>>());
        }
        if (kraus.empty()) throw malformed_error("operator: empty kraus set");
        return channel_from_kraus(kraus, s, samples, seed);
    }
    if (!j.contains("matrix")) throw malformed_error("operator: 'matrix' or 'kraus' required");
    Eigen::MatrixXd M = detail::matrix_from_json(j["matrix"], "operator matrix");
    const int dim = s.ambient_dim();
    if (M.rows() != dim || M.cols() != dim)
        throw malformed_error("operator: matrix shape does not match the space " + s.name());
    return validate_markov(M, s, samples, seed);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json to_json(const DeltaEstimate& d) {
    json j;
    j["value"] = d.value;
    j["certified"] = d.certified;
    j["method"] = d.method;
    j["secondary"] = d.secondary;
    j["witness_u"] = to_json(d.witness_u);
    j["witness_v"] = to_json(d.witness_v);
    return j;
}

inline json to_json(const Envelope& env) {
    json j;
    j["C"] = env.C;
    j["alpha"] = std::isinf(env.alpha) ? json("inf") : json(env.alpha);
    j["n_tilde"] = env.n_tilde;
    return j;
}

inline json to_json(const ErgodicityReport& r) {
    json j;
    j["classification"] = to_string(r.classification);
    j["n0"] = r.n0 ? json(*r.n0) : json();
    j["rho"] = r.rho ? json(*r.rho) : json();
    j["mean_n0"] = r.mean_n0 ? json(*r.mean_n0) : json();
    j["mean_rho"] = r.mean_rho ? json(*r.mean_rho) : json();
    j["envelope"] = to_json(r.envelope);
    j["fixed_point"] = r.fixed_point ? to_json(*r.fixed_point) : json();
    j["fixed_point_residual"] = r.fixed_point_residual;
    j["n_max_searched"] = r.n_max_searched;
    j["envelope_max_slack"] =
        std::isinf(r.envelope_max_slack) ? json() : json(r.envelope_max_slack);
    j["delta_certified"] = r.delta_certified;
    j["attested_delta_upper"] = r.attested_delta_upper ? json(*r.attested_delta_upper) : json();
    j["fitted_C"] = r.fitted_C ? json(*r.fitted_C) : json();
    j["fitted_alpha"] = r.fitted_alpha ? json(*r.fitted_alpha) : json();
    json trace = json::array();
    for (const auto& t : r.trace)
        trace.push_back({{"n", t.n},
                         {"delta_Tn", t.delta_Tn},
                         {"delta_An", t.delta_An},
                         {"norm_gap", t.norm_gap}});
    j["trace"] = trace;
    return j;
}

inline json to_json(const PerturbationReport& r) {
    json j;
    j["space"] = to_json(r.space);
    j["m"] = r.m;
    j["delta_Tm"] = r.delta_Tm;
    j["delta_certified"] = r.delta_certified;
    j["attested_delta_upper"] = r.attested_delta_upper ? json(*r.attested_delta_upper) : json();
    j["delta_bounds_available"] = r.delta_bounds_available;
    j["rate_bounds_available"] = r.rate_bounds_available;
    j["envelope"] = to_json(r.envelope);
    j["norm_TS"] = r.norm_TS;
    j["norm_TmSm"] = r.norm_TmSm;
    j["max_power_gap"] = r.max_power_gap;
    j["horizon"] = r.horizon;
    j["actual_trajectory"] = r.actual_trajectory;
    j["eq1"] = r.bound_eq1;
    j["eq8"] = r.bound_eq8;
    j["eq12"] = r.bound_eq12;
    if (r.rate_bounds_available) {
        j["eq5"] = r.bound_eq5;
        j["eq6"] = r.bound_eq6;
    }
    if (r.delta_bounds_available) {
        j["eq7"] = r.bound_eq7;
        j["eq9"] = r.bound_eq9;
        j["eq14"] = r.bound_eq14;
        j["eq14_trivial_headroom"] = r.eq14_trivial_headroom;
        if (r.transfer_verdict == "Applies") j["per62"] = r.bound_per62;
    }
    j["x0"] = r.x0 ? to_json(*r.x0) : json();
    j["z0"] = r.z0 ? to_json(*r.z0) : json();
    j["fp_residual_T"] = r.fp_residual_T;
    j["fp_residual_S"] = r.fp_residual_S;
    j["stationary_available"] = r.stationary_available;
    if (r.stationary_available) {
        j["actual_stationary"] = r.actual_stationary;
        j["actual_stationary_lo"] = r.actual_stationary_lo;
        j["actual_stationary_hi"] = r.actual_stationary_hi;
    }
    j["transfer_verdict"] = r.transfer_verdict;
    j["transfer_margin"] = r.transfer_margin;
    j["tightness"] = r.tightness;
    return j;
}

// Per-n plotting table. Fixed header: n,actual,eq1,eq8,eq12. Missing bounds
// print as empty cells.
inline std::string perturbation_csv(const PerturbationReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "n,actual,eq1,eq8,eq12\n";
    for (int n = 1; n <= r.horizon; ++n) {
        out << n << "," << r.actual_trajectory[n - 1] << ",";
        if (static_cast<int>(r.bound_eq1.size()) >= n) out << r.bound_eq1[n - 1];
        out << ",";
        if (static_cast<int>(r.bound_eq8.size()) >= n) out << r.bound_eq8[n - 1];
        out << ",";
        if (static_cast<int>(r.bound_eq12.size()) >= n) out << r.bound_eq12[n - 1];
        out << "\n";
    }
    return out.str();
}

inline json to_json(const SuiteResult& s) {
    json j;
    json recs = json::array();
    for (const auto& r : s.records)
        recs.push_back({{"name", r.name},
                        {"trials", r.trials},
                        {"failures", r.failures},
                        {"worst_slack",
                         std::isinf(r.worst_slack) ? json() : json(r.worst_slack)},
                        {"witness", r.witness}});
    j["records"] = recs;
    j["rejected_draws"] = s.rejected_draws;
    j["all_pass"] = s.all_pass();
    return j;
}

inline json to_json(const TightnessTable& t) {
    json j;
    json rows = json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"space", r.space},
                        {"magnitude", r.magnitude},
                        {"trial", r.trial},
                        {"m", r.m},
                        {"delta_Tm", r.delta_Tm},
                        {"norm_TS", r.norm_TS},
                        {"bound_eq6", r.bound_eq6},
                        {"bound_eq9", r.bound_eq9},
                        {"bound_eq12_inf", r.bound_eq12_inf},
                        {"bound_per62", r.bound_per62},
                        {"actual", r.actual},
                        {"ratio_eq6", r.ratio_eq6},
                        {"ratio_eq9", r.ratio_eq9},
                        {"ratio_eq12_inf", r.ratio_eq12_inf},
                        {"ratio_per62", r.ratio_per62},
                        {"max_ratio_all", r.max_ratio_all},
                        {"transfer_verdict", r.transfer_verdict}});
    j["rows"] = rows;
    json summary = json::array();
    for (const auto& s : t.summary)
        summary.push_back({{"magnitude", s.magnitude},
                           {"count", s.count},
                           {"median_ratio_eq6", s.median_ratio_eq6},
                           {"median_ratio_eq9", s.median_ratio_eq9},
                           {"median_ratio_eq12_inf", s.median_ratio_eq12_inf},
                           {"median_ratio_per62", s.median_ratio_per62}});
    j["summary"] = summary;
    j["rejected_draws"] = t.rejected_draws;
    j["skipped_slots"] = t.skipped_slots;
    return j;
}

inline std::string tightness_csv(const TightnessTable& t) {
    std::ostringstream out;
    out.precision(17);
    out << "space,magnitude,trial,m,delta_Tm,norm_TS,bound_eq6,bound_eq9,bound_eq12_inf,"
           "bound_per62,actual,ratio_eq6,ratio_eq9,ratio_eq12_inf,ratio_per62,max_ratio_all,"
           "transfer_verdict\n";
    for (const auto& r : t.rows)
        out << r.space << "," << r.magnitude << "," << r.trial << "," << r.m << ","
            << r.delta_Tm << "," << r.norm_TS << "," << r.bound_eq6 << "," << r.bound_eq9 << ","
            << r.bound_eq12_inf << "," << r.bound_per62 << "," << r.actual << ","
            << r.ratio_eq6 << "," << r.ratio_eq9 << "," << r.ratio_eq12_inf << ","
            << r.ratio_per62 << "," << r.max_ratio_all << "," << r.transfer_verdict << "\n";
    return out.str();
}

inline json to_json(const std::vector<DensityRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows)
        arr.push_back({{"family", r.family},
                       {"epsilon", r.epsilon},
                       {"trial", r.trial},
                       {"delta_eps", r.delta_eps},
                       {"cap", r.cap},
                       {"norm_diff", r.norm_diff},
                       {"classification", r.classification},
                       {"openness_radius", r.openness_radius_val}});
    return arr;
}

inline std::string density_csv(const std::vector<DensityRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "family,epsilon,trial,delta_eps,cap,norm_diff,classification,openness_radius\n";
    for (const auto& r : rows)
        out << r.family << "," << r.epsilon << "," << r.trial << "," << r.delta_eps << ","
            << r.cap << "," << r.norm_diff << "," << r.classification << ","
            << r.openness_radius_val << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

inline json to_json(const ExperimentConfig& c) {
    json j;
    j["space"] = to_json(c.space);
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["perturbation_magnitudes"] = c.perturbation_magnitudes;
    j["n_max"] = c.n_max;
    j["horizon"] = c.horizon;
    j["output_path"] = c.output_path;
    j["delta_budget"] = c.delta_budget;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw malformed_error("config: object required");
    ExperimentConfig c;
    if (j.contains("space")) c.space = space_from_json(j["space"]);
    if (j.contains("trials")) c.trials = j["trials"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("perturbation_magnitudes"))
        c.perturbation_magnitudes = j["perturbation_magnitudes"].get<std::vector<double>>();
    if (j.contains("n_max")) c.n_max = j["n_max"].get<int>();
    if (j.contains("horizon")) c.horizon = j["horizon"].get<int>();
    if (j.contains("output_path")) c.output_path = j["output_path"].get<std::string>();
    if (j.contains("delta_budget")) c.delta_budget = j["delta_budget"].get<int>();
    try {
        c.validate();
    } catch (const precondition_error& e) {
        throw malformed_error(std::string("config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw malformed_error("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw malformed_error("parse error in " + path + ": " + e.what());
    }
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw malformed_error("cannot open file for writing: " + path);
    out << text;
}

} // namespace obsb

#endif
