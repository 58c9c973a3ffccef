#ifndef OBSB_ERGODICITY_HPP
#define OBSB_ERGODICITY_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "obsb/errors.hpp"
#include "obsb/operator.hpp"

namespace obsb {

enum class Classification { UniformlyAsymptoticallyStable, UniformlyMeanErgodicOnly, Undetermined };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::UniformlyAsymptoticallyStable: return "UniformlyAsymptoticallyStable";
        case Classification::UniformlyMeanErgodicOnly: return "UniformlyMeanErgodicOnly";
        case Classification::Undetermined: return "Undetermined";
    }
    return "?";
}

struct TraceRow {
    int n = 0;
    double delta_Tn = -1.0;  // -1 when not evaluated at this n
    double delta_An = -1.0;
    double norm_gap = -1.0;  // ||T^n - T_{x0}|| when a fixed point is known
};

// Geometric decay certificate ||T^n - T_{x0}|| <= C e^{-alpha n}.
struct Envelope {
    double C = 1.0;
    double alpha = 0.0;  // +inf when rho = 0 (rank-one power reached exactly)
    int n_tilde = 0;     // smallest n >= 0 with C e^{-alpha n} <= 1
};

struct ErgodicityReport {
    Classification classification = Classification::Undetermined;
    std::optional<int> n0;
    std::optional<double> rho;
    std::optional<int> mean_n0;
    std::optional<double> mean_rho;
    Envelope envelope;
    std::optional<Element> fixed_point;
    double fixed_point_residual = std::numeric_limits<double>::infinity();
    int n_max_searched = 0;
    double envelope_max_slack = -std::numeric_limits<double>::infinity();  // observed - bound
    // least-squares fit of log||T^n - T_{x0}|| against n, reporting only,
    // never fed into any bound
    std::optional<double> fitted_C, fitted_alpha;
    bool delta_certified = false;
    std::optional<double> attested_delta_upper;
    std::vector<TraceRow> trace;
};

struct ClassifyOptions {
    int n_max = 512;
    double threshold = 1.0 - 1e-6;  // "delta < 1" decided conservatively
    int n_check = 256;              // envelope verification horizon
    int delta_budget = 64;
    int delta_iters = 500;
    std::uint64_t seed = 12345;
    double fp_tol = 1e-10;
    int fp_iter_max = 64;
    // Attested analytic upper bound on delta(T^attest_power); required to
    // certify contraction off the classical space.
    std::optional<double> delta_upper;
    int attest_power = 1;
    int trace_limit = 64;
};

// Smallest n0 <= n_max with delta(T^{n0}) <= threshold. Absent does not
// prove non-ergodicity, it only bounds the searched horizon.
inline std::optional<std::pair<int, double>> find_contractive_power(
    const MarkovOperator& T, int n_max, double threshold = 1.0 - 1e-6,
    int budget = 64, std::uint64_t seed = 12345, int iters = 500) {
    if (!T.validated) throw precondition_error("find_contractive_power: operator not validated");
    if (n_max < 1) throw precondition_error("find_contractive_power: n_max >= 1 required");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw precondition_error("find_contractive_power: threshold in (0,1) required");
    const int dim = T.space.ambient_dim();
    Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(dim, dim);
    for (int n = 1; n <= n_max; ++n) {
        pw = pw * T.matrix;
        double d = delta_of_matrix(pw, T.space, budget, derive_seed(seed, n, "pow"), iters).value;
        if (d <= threshold) return std::make_pair(n, std::min(d, 1.0));
    }
    return std::nullopt;
}

// Smallest n0 <= n_max with delta(A_{n0}(T)) <= threshold.
inline std::optional<std::pair<int, double>> find_mean_contractive(
    const MarkovOperator& T, int n_max, double threshold = 1.0 - 1e-6,
    int budget = 64, std::uint64_t seed = 12345, int iters = 500) {
    if (!T.validated) throw precondition_error("find_mean_contractive: operator not validated");
    if (n_max < 1) throw precondition_error("find_mean_contractive: n_max >= 1 required");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw precondition_error("find_mean_contractive: threshold in (0,1) required");
    const int dim = T.space.ambient_dim();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd cur = Eigen::MatrixXd::Identity(dim, dim);
    for (int n = 1; n <= n_max; ++n) {
        sum += cur;
        cur = cur * T.matrix;
        Eigen::MatrixXd avg = sum / static_cast<double>(n);
        double d = delta_of_matrix(avg, T.space, budget, derive_seed(seed, n, "avg"), iters).value;
        if (d <= threshold) return std::make_pair(n, std::min(d, 1.0));
    }
    return std::nullopt;
}

// (C, alpha, n_tilde) from delta(T^{n0}) <= rho via submultiplicativity:
//   ||T^n - T_{x0}|| <= 2 delta(T^n) <= 2 rho^{floor(n/n0)} <= (2/rho) e^{-alpha n},
// alpha = ln(1/rho)/n0. The 2/rho prefactor keeps the envelope certified for
// every n >= 0, not just asymptotically.
inline Envelope geometric_envelope(int n0, double rho) {
    if (n0 < 1) throw precondition_error("geometric_envelope: n0 >= 1 required");
    if (!(rho >= 0.0 && rho < 1.0)) throw precondition_error("geometric_envelope: rho in [0,1) required");
    Envelope env;
    if (rho == 0.0) {
        env.C = 1.0;
        env.alpha = std::numeric_limits<double>::infinity();
        env.n_tilde = n0;
        return env;
    }
    env.C = 2.0 / rho;
    env.alpha = std::log(1.0 / rho) / n0;
    int nt = static_cast<int>(std::ceil(std::log(env.C) / env.alpha - 1e-12));
    while (env.C * std::exp(-env.alpha * nt) > 1.0) ++nt;
    while (nt > 0 && env.C * std::exp(-env.alpha * (nt - 1)) <= 1.0) --nt;
    env.n_tilde = nt;
    return env;
}

inline double envelope_at(const Envelope& env, int n) {
    if (std::isinf(env.alpha)) return n >= 1 ? 0.0 : env.C;
    return env.C * std::exp(-env.alpha * n);
}

// Fixed point x0 in the base with ||T x0 - x0|| <= tol. Cesaro-doubling
// iteration from the barycenter, falling back to the stationary linear
// system on the affine slice f(x) = 1.
inline Element fixed_point(const MarkovOperator& T, double tol = 1e-10, int iter_max = 64) {
    if (!T.validated) throw precondition_error("fixed_point: operator not validated");
    const int dim = T.space.ambient_dim();
    Element x = barycenter(T.space);
    auto residual_of = [&](const Element& e) {
        return base_norm(Element{T.space, T.matrix * e.coords - e.coords});
    };

    int applications = 0;
    for (int k = 0; k <= 6 && applications < iter_max; ++k) {
        const int len = 1 << k;  // apply A_{2^k}
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
        Eigen::VectorXd cur = x.coords;
        for (int i = 0; i < len; ++i) {
            acc += cur;
            if (i + 1 < len) cur = T.matrix * cur;
        }
        x.coords = acc / static_cast<double>(len);
        ++applications;
        if (residual_of(x) <= tol && cone_contains(x, 1e-8)) return x;
    }

    // Stationary solve: (T - I) x = 0, f(x) = 1, least squares.
    Eigen::MatrixXd B(dim + 1, dim);
    B.topRows(dim) = T.matrix - Eigen::MatrixXd::Identity(dim, dim);
    B.bottomRows(1) = f_row(T.space);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim + 1);
    rhs(dim) = 1.0;
    Eigen::VectorXd sol = B.colPivHouseholderQr().solve(rhs);
    Element cand{T.space, sol};
    if (residual_of(cand) <= tol && cone_contains(cand, 1e-8)) return cand;
    if (residual_of(cand) < residual_of(x) && cone_contains(cand, 1e-8)) x = cand;
    if (residual_of(x) <= tol && cone_contains(x, 1e-8)) return x;
    throw numerical_error("fixed_point: no certified fixed point (best residual " +
                          std::to_string(std::min(residual_of(x), residual_of(cand))) + ")");
}

namespace detail {

inline double gap_to_rank_one(const Eigen::MatrixXd& pw, const Element& x0,
                              const SpaceDescriptor& space, int budget, std::uint64_t seed) {
    Eigen::MatrixXd diff = pw - x0.coords * f_row(space);
    return operator_norm(diff, space, budget, seed).value;
}

} // namespace detail

// Runs the contraction searches and assembles the classification verdict
// with its certificate (envelope, fixed point, per-n trace).
inline ErgodicityReport classify(const MarkovOperator& T, const ClassifyOptions& opts = {}) {
    if (!T.validated) throw precondition_error("classify: operator not validated");
    ErgodicityReport rep;
    rep.n_max_searched = opts.n_max;
    rep.delta_certified = (T.space.kind == SpaceKind::Classical);
    rep.attested_delta_upper = opts.delta_upper;

    const int dim = T.space.ambient_dim();
    const int trace_n = std::min(opts.n_max, opts.trace_limit);

    // Per-n trace of both coefficients for plotting.
    {
        Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(dim, dim);
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::MatrixXd cur = Eigen::MatrixXd::Identity(dim, dim);
        for (int n = 1; n <= trace_n; ++n) {
            pw = pw * T.matrix;
            sum += cur;
            cur = cur * T.matrix;
            TraceRow row;
            row.n = n;
            row.delta_Tn =
                delta_of_matrix(pw, T.space, opts.delta_budget, derive_seed(opts.seed, n, "trpow"),
                                opts.delta_iters).value;
            row.delta_An =
                delta_of_matrix(sum / static_cast<double>(n), T.space, opts.delta_budget,
                                derive_seed(opts.seed, n, "travg"), opts.delta_iters).value;
            rep.trace.push_back(row);
        }
    }

    // Contraction certificate: exact enumeration on the classical space,
    // attested upper bound elsewhere. A sampled lower bound can only refute.
    std::optional<std::pair<int, double>> contractive;
    if (T.space.kind == SpaceKind::Classical) {
        contractive = find_contractive_power(T, opts.n_max, opts.threshold, opts.delta_budget,
                                             opts.seed, opts.delta_iters);
    } else if (opts.delta_upper && *opts.delta_upper <= opts.threshold) {
        contractive = std::make_pair(opts.attest_power, *opts.delta_upper);
    }

    if (contractive) {
        auto [n0, rho] = *contractive;
        rep.classification = Classification::UniformlyAsymptoticallyStable;
        rep.n0 = n0;
        rep.rho = rho;
        rep.envelope = geometric_envelope(n0, rho);
        rep.fixed_point = fixed_point(T, opts.fp_tol, opts.fp_iter_max);
        rep.fixed_point_residual = base_norm(
            Element{T.space, T.matrix * rep.fixed_point->coords - rep.fixed_point->coords});

        // Empirical envelope verification from n_tilde up to n_check.
        if (opts.n_check > 0) {
            double sn = 0, sg = 0, snn = 0, sng = 0;
            int fit_count = 0;
            Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(dim, dim);
            for (int n = 1; n <= opts.n_check; ++n) {
                pw = pw * T.matrix;
                if (n < rep.envelope.n_tilde) continue;
                double gap = detail::gap_to_rank_one(pw, *rep.fixed_point, T.space,
                                                     opts.delta_budget,
                                                     derive_seed(opts.seed, n, "gap"));
                rep.envelope_max_slack =
                    std::max(rep.envelope_max_slack, gap - envelope_at(rep.envelope, n));
                if (static_cast<std::size_t>(n) <= rep.trace.size())
                    rep.trace[n - 1].norm_gap = gap;
                if (gap > 1e-300) {
                    double lg = std::log(gap);
                    sn += n; sg += lg; snn += static_cast<double>(n) * n; sng += n * lg;
                    ++fit_count;
                }
            }
            // fitted decay log(gap) ~ log(C) - alpha n, for reporting only
            if (fit_count >= 2) {
                double det = fit_count * snn - sn * sn;
                if (std::abs(det) > 1e-12) {
                    double slope = (fit_count * sng - sn * sg) / det;
                    double intercept = (sg - slope * sn) / fit_count;
                    rep.fitted_alpha = -slope;
                    rep.fitted_C = std::exp(intercept);
                }
            }
        }
        return rep;
    }

    std::optional<std::pair<int, double>> mean_contractive;
    if (T.space.kind == SpaceKind::Classical) {
        mean_contractive = find_mean_contractive(T, opts.n_max, opts.threshold, opts.delta_budget,
                                                 opts.seed, opts.delta_iters);
    }
    if (mean_contractive) {
        auto [n0, rho] = *mean_contractive;
        rep.classification = Classification::UniformlyMeanErgodicOnly;
        rep.mean_n0 = n0;
        rep.mean_rho = rho;
        rep.fixed_point = fixed_point(T, opts.fp_tol, opts.fp_iter_max);
        rep.fixed_point_residual = base_norm(
            Element{T.space, T.matrix * rep.fixed_point->coords - rep.fixed_point->coords});

        // Tail check: ||A_n - T_{x0}|| at the end of the horizon stays below
        // its value at n0 (convergence at checked points, not monotonicity).
        if (opts.n_check > 0) {
            Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
            Eigen::MatrixXd cur = Eigen::MatrixXd::Identity(dim, dim);
            for (int n = 1; n <= opts.n_check; ++n) {
                sum += cur;
                cur = cur * T.matrix;
                if (static_cast<std::size_t>(n) <= rep.trace.size()) {
                    Eigen::MatrixXd avg = sum / static_cast<double>(n);
                    rep.trace[n - 1].norm_gap = detail::gap_to_rank_one(
                        avg, *rep.fixed_point, T.space, opts.delta_budget,
                        derive_seed(opts.seed, n, "mgap"));
                }
            }
        }
        return rep;
    }

    rep.classification = Classification::Undetermined;
    return rep;
}

// Radius r = 2 (1 - delta(M_n(T))) / (n + 1) built on the shifted average
// M_n = (1/n) sum_{k=1}^{n} T^k, whose coefficient is (n+1)/2-Lipschitz in T:
// every Markov H within r of T has delta(M_n(H)) < 1 and is therefore
// uniformly mean ergodic.
inline Eigen::MatrixXd shifted_cesaro(const MarkovOperator& T, int n) {
    if (!T.validated) throw precondition_error("shifted_cesaro: operator not validated");
    if (n < 1) throw precondition_error("shifted_cesaro: n >= 1 required");
    const int dim = T.space.ambient_dim();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd cur = Eigen::MatrixXd::Identity(dim, dim);
    for (int k = 1; k <= n; ++k) {
        cur = cur * T.matrix;
        sum += cur;
    }
    return sum / static_cast<double>(n);
}

inline double openness_radius(const MarkovOperator& T, int n,
                              std::optional<double> delta_upper = std::nullopt,
                              int budget = 64, std::uint64_t seed = 12345) {
    if (!T.validated) throw precondition_error("openness_radius: operator not validated");
    if (n < 1) throw precondition_error("openness_radius: n >= 1 required");
    double d;
    if (T.space.kind == SpaceKind::Classical) {
        d = delta_of_matrix(shifted_cesaro(T, n), T.space, budget, seed).value;
    } else if (delta_upper) {
        d = *delta_upper;
    } else {
        throw certification_error(
            "openness_radius: certified delta(A_n(T)) unavailable off the classical space; "
            "supply an attested upper bound");
    }
    if (d >= 1.0 - 1e-12)
        throw precondition_error("openness_radius: delta(A_n(T)) must be certified < 1");
    return 2.0 * (1.0 - d) / (n + 1);
}

} // namespace obsb

#endif
