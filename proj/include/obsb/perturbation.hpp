#ifndef OBSB_PERTURBATION_HPP
#define OBSB_PERTURBATION_HPP

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "obsb/ergodicity.hpp"
#include "obsb/errors.hpp"
#include "obsb/operator.hpp"

namespace obsb {

// ---------------------------------------------------------------------------
// Rate-based bounds, driven by a geometric envelope (C, alpha, n_tilde).
// ---------------------------------------------------------------------------

namespace detail {
inline void check_rate_inputs(const Envelope& env, double norm_TS, double dist_xz) {
    if (!(env.alpha > 0.0)) throw precondition_error("rate bound: alpha > 0 required");
    if (!(env.C > 0.0)) throw precondition_error("rate bound: C > 0 required");
    if (norm_TS < 0.0 || dist_xz < 0.0) throw precondition_error("rate bound: negative norm input");
}
inline double exp_neg(double alpha, double n) {
    return std::isinf(alpha) ? (n > 0.0 ? 0.0 : 1.0) : std::exp(-alpha * n);
}
} // namespace detail

// Trajectory bound on ||T^n x - S^n z||: the trivial regime up to n_tilde,
// then the geometric tail.
inline double rate_bound_trajectory(const Envelope& env, double norm_TS, double dist_xz, int n) {
    detail::check_rate_inputs(env, norm_TS, dist_xz);
    if (n < 1) throw precondition_error("rate bound: n >= 1 required");
    if (n <= env.n_tilde) return dist_xz + n * norm_TS;
    double q = detail::exp_neg(env.alpha, 1.0);
    double qn = detail::exp_neg(env.alpha, n);
    double qt = detail::exp_neg(env.alpha, env.n_tilde);
    return env.C * qn * dist_xz + (env.n_tilde + env.C * (qt - qn) / (1.0 - q)) * norm_TS;
}

// Uniform-in-n trajectory bound.
inline double rate_bound_sup(const Envelope& env, double norm_TS, double dist_xz) {
    detail::check_rate_inputs(env, norm_TS, dist_xz);
    double q = detail::exp_neg(env.alpha, 1.0);
    double qt = detail::exp_neg(env.alpha, env.n_tilde);
    return dist_xz + (env.n_tilde + env.C * qt / (1.0 - q)) * norm_TS;
}

// Stationary bound on ||T_{x0} - S_{z0}|| (both chains asymptotically stable).
inline double rate_bound_stationary(const Envelope& env, double norm_TS) {
    detail::check_rate_inputs(env, norm_TS, 0.0);
    double q = detail::exp_neg(env.alpha, 1.0);
    double qt = detail::exp_neg(env.alpha, env.n_tilde);
    return (env.n_tilde + env.C * qt / (1.0 - q)) * norm_TS;
}

// ---------------------------------------------------------------------------
// Coefficient-based bounds, driven by a certified delta(T^m) < 1.
// ---------------------------------------------------------------------------

namespace detail {
inline void check_delta_input(double delta_m) {
    if (!(delta_m >= 0.0 && delta_m < 1.0))
        throw precondition_error("delta-based bound requires certified delta(T^m) in [0,1)");
}
} // namespace detail

// sup_k ||T^{km} x - S^{km} z||.
inline double contraction_bound_cycle(double delta_m, double dist_xz, double norm_TmSm) {
    detail::check_delta_input(delta_m);
    return delta_m * dist_xz + norm_TmSm / (1.0 - delta_m);
}

// Two-case trajectory bound with a single delta(T^m) prefactor. Weaker than
// the floor-based bound for large n; emitted verbatim so both can be compared.
inline double contraction_bound_trajectory(int m, double delta_m, double dist_xz,
                                           double max_power_gap, double norm_TmSm, int n) {
    detail::check_delta_input(delta_m);
    if (m < 1 || n < 1) throw precondition_error("bound: m >= 1 and n >= 1 required");
    if (n < m) return dist_xz + max_power_gap;
    return delta_m * (dist_xz + max_power_gap) + norm_TmSm / (1.0 - delta_m);
}

// Stationary bound ||T_{x0} - S_{z0}|| <= ||T^m - S^m|| / (1 - delta(T^m)).
inline double contraction_bound_stationary(double delta_m, double norm_TmSm) {
    detail::check_delta_input(delta_m);
    return norm_TmSm / (1.0 - delta_m);
}

// Trajectory bound with the full geometric ladder delta(T^m)^{floor(n/m)}.
inline double floor_bound_trajectory(int m, double delta_m, double dist_xz,
                                     double max_power_gap, double norm_TmSm, int n) {
    detail::check_delta_input(delta_m);
    if (m < 1 || n < 1) throw precondition_error("bound: m >= 1 and n >= 1 required");
    double dk = std::pow(delta_m, static_cast<double>(n / m));
    return dk * (dist_xz + max_power_gap) + (1.0 - dk) / (1.0 - delta_m) * norm_TmSm;
}

// Uniform-in-n bound; the leading term sup_n delta^{floor(n/m)} equals 1 for
// m > 1 (attained at n < m) and delta itself for m = 1.
inline double floor_bound_sup(int m, double delta_m, double norm_TS) {
    detail::check_delta_input(delta_m);
    if (m < 1) throw precondition_error("bound: m >= 1 required");
    double head = (m > 1) ? 1.0 : delta_m;
    return head + m * norm_TS / (1.0 - delta_m);
}

// Stationary-point displacement bound for the contraction-transfer theorem.
inline double transfer_bound(double delta_m, double norm_TmSm) {
    detail::check_delta_input(delta_m);
    if (!(norm_TmSm < 1.0 - delta_m))
        throw precondition_error("transfer bound requires ||S^m - T^m|| < 1 - delta(T^m)");
    return norm_TmSm / (1.0 - delta_m - norm_TmSm);
}

// ---------------------------------------------------------------------------
// Neumann inverse of (I - S^m) on the null space of f.
// ---------------------------------------------------------------------------

// y = sum_n S^{mn} x, truncated when rho^{N+1} ||x|| / (1 - rho) <= tol.
// Caller certifies rho < 1 with ||S^m y|| <= rho ||y|| on the null space
// (typically rho = delta(T^m) + ||S^m - T^m||).
inline Element neumann_inverse_on_N(const MarkovOperator& S, int m, const Element& x,
                                    double rho, double tol = 1e-10) {
    if (!S.validated) throw precondition_error("neumann_inverse_on_N: operator not validated");
    if (m < 1) throw precondition_error("neumann_inverse_on_N: m >= 1 required");
    if (!(rho >= 0.0 && rho < 1.0))
        throw precondition_error("neumann_inverse_on_N: certified rho < 1 required");
    double fx = functional_f(x);
    if (std::abs(fx) > 1e-9)
        throw precondition_error("neumann_inverse_on_N: f(x) = 0 required, got " + std::to_string(fx));

    Eigen::MatrixXd Sm = Eigen::MatrixXd::Identity(S.matrix.rows(), S.matrix.cols());
    for (int i = 0; i < m; ++i) Sm = Sm * S.matrix;

    double nx = base_norm(x);
    Eigen::VectorXd term = x.coords;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.coords.size());
    double tail = (nx > 0.0) ? nx / (1.0 - rho) : 0.0;
    int n = 0;
    while (true) {
        acc += term;
        tail *= rho;
        ++n;
        if (tail <= tol || nx == 0.0) break;
        if (n > 1000000)
            throw numerical_error("neumann_inverse_on_N: series truncation budget exceeded");
        term = Sm * term;
    }
    Element y{S.space, acc};
    double residual = base_norm(Element{S.space, (y.coords - Sm * y.coords) - x.coords});
    if (residual > tol * (1.0 + rho) + 1e-12)
        throw numerical_error("neumann_inverse_on_N: residual " + std::to_string(residual) +
                              " exceeds tolerance");
    if (base_norm(y) > nx / (1.0 - rho) + tol)
        throw numerical_error("neumann_inverse_on_N: series norm exceeds ||x||/(1-rho)");
    return y;
}

// ---------------------------------------------------------------------------
// Contraction transfer: S inherits asymptotic stability from T.
// ---------------------------------------------------------------------------

struct TransferResult {
    bool applies = false;
    double margin = 0.0;  // ||S^m - T^m|| - (1 - delta(T^m)); negative when it applies
    std::optional<Element> z0;
    double bound = 0.0;   // bound on ||x0 - z0||
    double actual = 0.0;  // base_norm(x0 - z0)
    double norm_TmSm = 0.0;
    double rho = 1.0;     // delta(T^m) + ||S^m - T^m||
};

inline TransferResult stability_transfer(const MarkovOperator& T, const MarkovOperator& S, int m,
                                         const Element& x0, double delta_m, double tol = 1e-12) {
    if (!T.validated || !S.validated)
        throw precondition_error("stability_transfer: operators not validated");
    if (T.space != S.space) throw malformed_error("stability_transfer: space mismatch");
    detail::check_delta_input(delta_m);
    if (m < 1) throw precondition_error("stability_transfer: m >= 1 required");

    const int dim = T.space.ambient_dim();
    Eigen::MatrixXd Tm = Eigen::MatrixXd::Identity(dim, dim), Sm = Tm;
    for (int i = 0; i < m; ++i) {
        Tm = Tm * T.matrix;
        Sm = Sm * S.matrix;
    }
    TransferResult res;
    res.norm_TmSm = operator_norm(Sm - Tm, T.space).value;
    res.margin = res.norm_TmSm - (1.0 - delta_m);
    res.rho = delta_m + res.norm_TmSm;
    if (!(res.norm_TmSm < 1.0 - delta_m) || res.rho >= 1.0) {
        res.applies = false;
        return res;
    }
    res.applies = true;

    // z0 = lim S^{mN} x0; the certified contraction factor rho on the null
    // space gives the a-priori tail bound rho^k ||S^m x0 - x0|| / (1 - rho).
    Eigen::VectorXd z = x0.coords;
    double r0 = base_norm(Element{T.space, Sm * z - z});
    double tail = (r0 > 0.0) ? r0 / (1.0 - res.rho) : 0.0;
    int iters = 0;
    while (tail > tol && iters < 100000) {
        z = Sm * z;
        tail *= res.rho;
        ++iters;
    }
    res.z0 = Element{T.space, z};
    res.bound = transfer_bound(delta_m, res.norm_TmSm);
    res.actual = base_norm(Element{T.space, x0.coords - z});
    return res;
}

// ---------------------------------------------------------------------------
// Full report for a pair (T, S).
// ---------------------------------------------------------------------------

struct TightnessOptions {
    std::optional<int> m;
    int horizon = 16;
    ClassifyOptions classify_opts = [] {
        ClassifyOptions c;
        c.n_check = 0;      // the report re-verifies trajectories itself
        c.trace_limit = 0;
        return c;
    }();
    std::optional<double> delta_upper;  // attested delta(T^m) off the classical space
    int start_budget = 8;               // extreme starts per trajectory rollout
    std::uint64_t seed = 777;
    double fp_tol = 1e-10;
};

struct PerturbationReport {
    SpaceDescriptor space;
    int m = 1;
    double delta_Tm = 1.0;
    bool delta_certified = false;
    std::optional<double> attested_delta_upper;
    bool delta_bounds_available = false;
    bool rate_bounds_available = false;
    Envelope envelope;
    double norm_TS = 0.0;
    double norm_TmSm = 0.0;
    double max_power_gap = 0.0;  // max_{0<i<m} ||T^i - S^i||
    int horizon = 0;

    std::vector<double> actual_trajectory;  // n = 1..horizon, max over starts with x = z
    std::vector<double> bound_eq1, bound_eq8, bound_eq12;
    double bound_eq5 = 0.0, bound_eq6 = 0.0, bound_eq7 = 0.0, bound_eq9 = 0.0, bound_eq14 = 0.0;
    double bound_per62 = 0.0;
    bool eq14_trivial_headroom = false;

    std::optional<Element> x0, z0;
    double fp_residual_T = 0.0, fp_residual_S = 0.0;
    double actual_stationary = 0.0;
    double actual_stationary_lo = 0.0, actual_stationary_hi = 0.0;
    bool stationary_available = false;

    std::string transfer_verdict = "DoesNotApply";
    double transfer_margin = 0.0;

    std::map<std::string, double> tightness;  // actual / bound, 0/0 -> 1
};

namespace detail {
inline double ratio(double actual, double bound) {
    if (bound == 0.0) return actual == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return actual / bound;
}
} // namespace detail

inline PerturbationReport tightness_report(const MarkovOperator& T, const MarkovOperator& S,
                                           const TightnessOptions& opts = {}) {
    if (T.space != S.space) throw malformed_error("tightness_report: operator space mismatch");
    if (!T.validated || !S.validated)
        throw precondition_error("tightness_report: operators not validated");

    PerturbationReport rep;
    rep.space = T.space;
    rep.horizon = opts.horizon;
    rep.attested_delta_upper = opts.delta_upper;

    ClassifyOptions copts = opts.classify_opts;
    if (opts.delta_upper && !copts.delta_upper) {
        copts.delta_upper = opts.delta_upper;
        copts.attest_power = opts.m.value_or(1);
    }
    ErgodicityReport erg = classify(T, copts);
    rep.m = opts.m.value_or(erg.n0.value_or(1));
    if (rep.m < 1) throw precondition_error("tightness_report: m >= 1 required");

    const int top = std::max(rep.m, opts.horizon);
    auto Tpow = power_list(T.matrix, top);
    auto Spow = power_list(S.matrix, top);

    rep.norm_TS = operator_norm(T.matrix - S.matrix, T.space).value;
    rep.norm_TmSm = operator_norm(Tpow[rep.m] - Spow[rep.m], T.space).value;
    for (int i = 1; i < rep.m; ++i)
        rep.max_power_gap =
            std::max(rep.max_power_gap, operator_norm(Tpow[i] - Spow[i], T.space).value);

    // delta(T^m): certified by enumeration on the classical space, attested
    // upper bound elsewhere; a sampled lower bound must not feed 1/(1-delta).
    if (T.space.kind == SpaceKind::Classical) {
        rep.delta_Tm = delta_of_matrix(Tpow[rep.m], T.space).value;
        rep.delta_certified = true;
    } else if (opts.delta_upper) {
        rep.delta_Tm = *opts.delta_upper;
        rep.delta_certified = false;
    } else {
        throw certification_error(
            "tightness_report: delta(T^m) not certified; supply an attested upper bound");
    }
    rep.delta_bounds_available = rep.delta_Tm < 1.0 - 1e-12;

    rep.rate_bounds_available =
        erg.classification == Classification::UniformlyAsymptoticallyStable;
    if (rep.rate_bounds_available) rep.envelope = erg.envelope;

    // Actual trajectory distances, x = z over extreme starts.
    auto starts = extreme_points(T.space, opts.start_budget, opts.seed);
    rep.actual_trajectory.assign(opts.horizon, 0.0);
    for (const auto& u : starts) {
        Eigen::VectorXd xt = u.coords, zt = u.coords;
        for (int n = 1; n <= opts.horizon; ++n) {
            xt = T.matrix * xt;
            zt = S.matrix * zt;
            rep.actual_trajectory[n - 1] =
                std::max(rep.actual_trajectory[n - 1], base_norm(Element{T.space, xt - zt}));
        }
    }

    // Bounds (x = z starts, so dist_xz = 0).
    if (rep.rate_bounds_available) {
        for (int n = 1; n <= opts.horizon; ++n)
            rep.bound_eq1.push_back(rate_bound_trajectory(rep.envelope, rep.norm_TS, 0.0, n));
        rep.bound_eq5 = rate_bound_sup(rep.envelope, rep.norm_TS, 0.0);
        rep.bound_eq6 = rate_bound_stationary(rep.envelope, rep.norm_TS);
    }
    if (rep.delta_bounds_available) {
        for (int n = 1; n <= opts.horizon; ++n) {
            rep.bound_eq8.push_back(contraction_bound_trajectory(
                rep.m, rep.delta_Tm, 0.0, rep.max_power_gap, rep.norm_TmSm, n));
            rep.bound_eq12.push_back(floor_bound_trajectory(
                rep.m, rep.delta_Tm, 0.0, rep.max_power_gap, rep.norm_TmSm, n));
        }
        rep.bound_eq7 = contraction_bound_cycle(rep.delta_Tm, 0.0, rep.norm_TmSm);
        rep.bound_eq9 = contraction_bound_stationary(rep.delta_Tm, rep.norm_TmSm);
        rep.bound_eq14 = floor_bound_sup(rep.m, rep.delta_Tm, rep.norm_TS);
        rep.eq14_trivial_headroom = (rep.m > 1);
    }

    // Stationary points, computed independently for each chain.
    if (erg.fixed_point) {
        rep.x0 = erg.fixed_point;
        rep.fp_residual_T = erg.fixed_point_residual;
    } else {
        try {
            rep.x0 = fixed_point(T, opts.fp_tol);
            rep.fp_residual_T =
                base_norm(Element{T.space, T.matrix * rep.x0->coords - rep.x0->coords});
        } catch (const numerical_error&) {
        }
    }
    try {
        Element z0 = fixed_point(S, opts.fp_tol);
        rep.z0 = z0;
        rep.fp_residual_S = base_norm(Element{T.space, S.matrix * z0.coords - z0.coords});
    } catch (const numerical_error&) {
    }
    if (rep.x0 && rep.z0) {
        rep.stationary_available = true;
        rep.actual_stationary = base_norm(Element{T.space, rep.x0->coords - rep.z0->coords});
        double pad = (rep.fp_residual_T > opts.fp_tol || rep.fp_residual_S > opts.fp_tol)
                         ? 2.0 * opts.fp_tol
                         : 0.0;
        rep.actual_stationary_lo = std::max(0.0, rep.actual_stationary - pad);
        rep.actual_stationary_hi = rep.actual_stationary + pad;
    }

    // Transfer verdict.
    if (rep.delta_bounds_available && rep.x0) {
        TransferResult tr = stability_transfer(T, S, rep.m, *rep.x0, rep.delta_Tm);
        rep.transfer_verdict = tr.applies ? "Applies" : "DoesNotApply";
        rep.transfer_margin = tr.margin;
        if (tr.applies) {
            rep.bound_per62 = tr.bound;
            if (!rep.z0) rep.z0 = tr.z0;
        }
    }

    // Tightness ratios.
    double traj_sup = 0.0;
    for (double a : rep.actual_trajectory) traj_sup = std::max(traj_sup, a);
    auto per_n_ratio = [&](const std::vector<double>& bounds) {
        double r = 0.0;
        bool any = false;
        for (int n = 1; n <= opts.horizon && n <= static_cast<int>(bounds.size()); ++n) {
            r = std::max(r, detail::ratio(rep.actual_trajectory[n - 1], bounds[n - 1]));
            any = true;
        }
        return any ? r : 1.0;
    };
    if (rep.rate_bounds_available) {
        rep.tightness["eq1"] = per_n_ratio(rep.bound_eq1);
        rep.tightness["eq5"] = detail::ratio(traj_sup, rep.bound_eq5);
        if (rep.stationary_available)
            rep.tightness["eq6"] = detail::ratio(rep.actual_stationary, rep.bound_eq6);
    }
    if (rep.delta_bounds_available) {
        double cycle_sup = 0.0;
        bool any_cycle = false;
        for (int n = rep.m; n <= opts.horizon; n += rep.m) {
            cycle_sup = std::max(cycle_sup, rep.actual_trajectory[n - 1]);
            any_cycle = true;
        }
        if (any_cycle) rep.tightness["eq7"] = detail::ratio(cycle_sup, rep.bound_eq7);
        rep.tightness["eq8"] = per_n_ratio(rep.bound_eq8);
        rep.tightness["eq12"] = per_n_ratio(rep.bound_eq12);
        rep.tightness["eq14"] = detail::ratio(traj_sup, rep.bound_eq14);
        if (rep.stationary_available) {
            rep.tightness["eq9"] = detail::ratio(rep.actual_stationary, rep.bound_eq9);
            if (rep.transfer_verdict == "Applies")
                rep.tightness["per62"] = detail::ratio(rep.actual_stationary, rep.bound_per62);
        }
    }
    return rep;
}

} // namespace obsb

#endif
