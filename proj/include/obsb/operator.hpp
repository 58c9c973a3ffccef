#ifndef OBSB_OPERATOR_HPP
#define OBSB_OPERATOR_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "obsb/errors.hpp"
#include "obsb/optim.hpp"
#include "obsb/rng.hpp"
#include "obsb/space.hpp"

namespace obsb {

struct Violation {
    std::string kind;   // "shape", "functional", "negativity", "cone"
    double magnitude = 0.0;
    std::string witness;
};

// A Markov operator in canonical coordinates: f o T = f and T maps the base
// into itself. `validated` records whether the checks passed; violations are
// data, not errors.
struct MarkovOperator {
    SpaceDescriptor space;
    Eigen::MatrixXd matrix;
    bool validated = false;
    bool cp_certified = false;  // built from a verified Kraus set
    std::vector<Violation> validation_report;
};

inline Element apply(const MarkovOperator& T, const Element& x) {
    if (x.space != T.space) throw malformed_error("apply: element/operator space mismatch");
    return {T.space, T.matrix * x.coords};
}

inline MarkovOperator validate_markov(const Eigen::MatrixXd& M, const SpaceDescriptor& space,
                                      int samples = 64, std::uint64_t seed = 0,
                                      double tol = 1e-9) {
    const int dim = space.ambient_dim();
    if (M.rows() != dim || M.cols() != dim)
        throw malformed_error("operator matrix must be " + std::to_string(dim) + "x" +
                              std::to_string(dim) + " for " + space.name());
    if (!M.allFinite()) throw malformed_error("operator matrix has non-finite entries");

    MarkovOperator op{space, M, true, false, {}};

    // f o T = f, checked exactly through the matrix.
    Eigen::RowVectorXd phi = f_row(space);
    Eigen::RowVectorXd residual = phi * M - phi;
    double fres = residual.cwiseAbs().maxCoeff();
    if (fres > tol) {
        int worst = 0;
        residual.cwiseAbs().maxCoeff(&worst);
        op.validated = false;
        op.validation_report.push_back({"functional", fres, "column " + std::to_string(worst)});
    }

    // Positivity: entrywise for classical, sampled extreme points otherwise.
    if (space.kind == SpaceKind::Classical) {
        for (int j = 0; j < dim; ++j)
            for (int i = 0; i < dim; ++i)
                if (M(i, j) < -1e-12) {
                    op.validated = false;
                    op.validation_report.push_back(
                        {"negativity", -M(i, j),
                         "entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")"});
                }
    } else {
        auto pts = extreme_points(space, samples, seed);
        for (std::size_t k = 0; k < pts.size(); ++k) {
            Element img{space, M * pts[k].coords};
            if (!cone_contains(img, 1e-8)) {
                double viol = 0.0;
                if (space.kind == SpaceKind::Quantum)
                    viol = -hermitian_eigenvalues(space, img.coords).minCoeff();
                else
                    viol = detail::pnorm(img.coords.tail(space.n), space.p) - img.coords(0);
                op.validated = false;
                op.validation_report.push_back({"cone", viol, "extreme point " + std::to_string(k)});
            }
        }
    }
    return op;
}

// Assembles a quantum channel from a Kraus set. Completeness sum K^dag K = I
// is verified; the channel is tagged cp_certified on success.
inline MarkovOperator channel_from_kraus(const std::vector<Eigen::MatrixXcd>& kraus,
                                         const SpaceDescriptor& space,
                                         int samples = 64, std::uint64_t seed = 0) {
    if (space.kind != SpaceKind::Quantum)
        throw precondition_error("channel_from_kraus: quantum space required");
    const int d = space.n;
    if (kraus.empty()) throw malformed_error("empty Kraus set");
    Eigen::MatrixXcd completeness = Eigen::MatrixXcd::Zero(d, d);
    for (const auto& K : kraus) {
        if (K.rows() != d || K.cols() != d) throw malformed_error("Kraus operator has wrong shape");
        completeness += K.adjoint() * K;
    }
    double cres = (completeness - Eigen::MatrixXcd::Identity(d, d)).cwiseAbs().maxCoeff();

    const auto& basis = hermitian_basis(d);
    Eigen::MatrixXd M(d * d, d * d);
    for (int j = 0; j < d * d; ++j) {
        Eigen::MatrixXcd img = Eigen::MatrixXcd::Zero(d, d);
        for (const auto& K : kraus) img += K * basis[j] * K.adjoint();
        M.col(j) = encode_hermitian(img);
    }
    MarkovOperator op = validate_markov(M, space, samples, seed);
    if (cres > 1e-9) {
        op.validated = false;
        op.validation_report.push_back({"kraus_completeness", cres, "sum K^dag K != I"});
    } else {
        op.cp_certified = true;
    }
    return op;
}

// T^n by repeated squaring and A_n = (1/n) sum_{k=0}^{n-1} T^k.
// A_1 = T^0 = I by the k = 0 convention.
inline std::pair<MarkovOperator, MarkovOperator> power_and_cesaro(const MarkovOperator& T, int n,
                                                                 int samples = 16,
                                                                 std::uint64_t seed = 0) {
    if (n < 1) throw precondition_error("power_and_cesaro: n >= 1 required");
    if (!T.validated) throw precondition_error("power_and_cesaro: operator not validated");
    const int dim = T.space.ambient_dim();

    Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd base = T.matrix;
    int e = n;
    while (e > 0) {  // drift re-checked only at the end
        if (e & 1) pw = pw * base;
        e >>= 1;
        if (e > 0) base = base * base;
    }

    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd cur = Eigen::MatrixXd::Identity(dim, dim);
    for (int k = 0; k < n; ++k) {
        avg += cur;
        if (k + 1 < n) cur = cur * T.matrix;
    }
    avg /= static_cast<double>(n);

    MarkovOperator Tn = validate_markov(pw, T.space, samples, seed);
    MarkovOperator An = validate_markov(avg, T.space, samples, seed);
    Tn.cp_certified = T.cp_certified;
    An.cp_certified = T.cp_certified;
    return {Tn, An};
}

// T^0 .. T^n_max, multiplied incrementally (minimal-power searches need
// every intermediate power anyway).
inline std::vector<Eigen::MatrixXd> power_list(const Eigen::MatrixXd& M, int n_max) {
    std::vector<Eigen::MatrixXd> pw;
    pw.reserve(n_max + 1);
    pw.push_back(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
    for (int k = 1; k <= n_max; ++k) pw.push_back(pw.back() * M);
    return pw;
}

struct NormEstimate {
    double value = 0.0;
    bool certified = false;  // exact vertex enumeration (classical only)
    Element witness;
};

// Operator norm induced by the base norm: sup over extreme points u of the
// base of ||A u||. Exact on the classical space (max column l1); a witnessed
// lower bound elsewhere.
inline NormEstimate operator_norm(const Eigen::MatrixXd& A, const SpaceDescriptor& space,
                                  int budget = 64, std::uint64_t seed = 1, int iters = 500) {
    const int dim = space.ambient_dim();
    if (A.rows() != dim || A.cols() != dim)
        throw malformed_error("operator_norm: matrix shape mismatch for " + space.name());

    if (space.kind == SpaceKind::Classical) {
        double best = 0.0;
        int best_j = 0;
        for (int j = 0; j < dim; ++j) {
            double v = A.col(j).lpNorm<1>();
            if (v > best + 1e-15) { best = v; best_j = j; }
        }
        Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
        w(best_j) = 1.0;
        return {best, true, Element{space, w}};
    }

    auto objective = [&](const std::vector<Eigen::VectorXd>& params) {
        Element u = extreme_from_param(space, params[0]);
        return base_norm(Element{space, A * u.coords});
    };
    // warm starts: canonical extreme points
    std::vector<std::vector<Eigen::VectorXd>> warm;
    auto pts = extreme_points(space, std::max(4, budget / 4), derive_seed(seed, 0, "norm_pts"));
    double best_pt = -1.0;
    Element best_e = pts.front();
    for (const auto& e : pts) {
        double v = base_norm(Element{space, A * e.coords});
        if (v > best_pt) { best_pt = v; best_e = e; }
    }
    if (space.kind == SpaceKind::PCone) {
        for (int i = 0; i < space.n && static_cast<int>(warm.size()) < 8; ++i) {
            Eigen::VectorXd t = Eigen::VectorXd::Zero(space.n);
            t(i) = 1.0;
            warm.push_back({t});
            warm.push_back({-t});
        }
    } else {
        for (int i = 0; i < space.n && static_cast<int>(warm.size()) < 8; ++i) {
            Eigen::VectorXd t = Eigen::VectorXd::Zero(2 * space.n);
            t(i) = 1.0;
            warm.push_back({t});
        }
    }
    auto res = multistart_maximize(objective, {extreme_param_dim(space)}, warm, budget, iters, seed);
    if (res.value >= best_pt)
        return {res.value, false, extreme_from_param(space, res.params[0])};
    return {best_pt, false, best_e};
}

struct DeltaEstimate {
    double value = 0.0;
    bool certified = false;
    Element witness_u, witness_v;  // base pair achieving the reported value
    std::string method;            // "vertex_enumeration" or "multistart_optimization"
    double secondary = 0.0;        // null-space sampling estimate, never above value + tol
};

// Ergodicity coefficient of an arbitrary matrix on the space, through the
// pair form (1/2) sup_{u,v in base} ||A(u - v)||. For Markov operators this
// is the Dobrushin coefficient; for differences of Markov operators it is
// the natural extension to the null space of f.
inline DeltaEstimate delta_of_matrix(const Eigen::MatrixXd& A, const SpaceDescriptor& space,
                                     int budget = 64, std::uint64_t seed = 1, int iters = 500) {
    const int dim = space.ambient_dim();
    if (A.rows() != dim || A.cols() != dim)
        throw malformed_error("delta: matrix shape mismatch for " + space.name());

    DeltaEstimate est;
    if (space.kind == SpaceKind::Classical) {
        double best = 0.0;
        int bi = 0, bj = (dim > 1) ? 1 : 0;
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j) {
                double v = 0.5 * (A.col(i) - A.col(j)).lpNorm<1>();
                if (v > best + 1e-15) { best = v; bi = i; bj = j; }  // lowest index pair wins ties
            }
        Eigen::VectorXd u = Eigen::VectorXd::Zero(dim), v = Eigen::VectorXd::Zero(dim);
        u(bi) = 1.0;
        v(bj) = 1.0;
        est.value = best;
        est.certified = true;
        est.witness_u = {space, u};
        est.witness_v = {space, v};
        est.method = "vertex_enumeration";
    } else {
        const int pd = extreme_param_dim(space);
        auto objective = [&](const std::vector<Eigen::VectorXd>& params) {
            Element u = extreme_from_param(space, params[0]);
            Element v = extreme_from_param(space, params[1]);
            return 0.5 * base_norm(Element{space, A * (u.coords - v.coords)});
        };
        // seed pairs from sampled extreme points
        auto pts = extreme_points(space, std::max(4, budget / 2), derive_seed(seed, 1, "delta_pts"));
        double best_pt = 0.0;
        std::size_t pi = 0, pj = (pts.size() > 1) ? 1 : 0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j) {
                double v = 0.5 * base_norm(Element{space, A * (pts[i].coords - pts[j].coords)});
                if (v > best_pt) { best_pt = v; pi = i; pj = j; }
            }
        auto res = multistart_maximize(objective, {pd, pd}, {}, budget, iters, seed);
        if (res.value > best_pt) {
            est.value = res.value;
            est.witness_u = extreme_from_param(space, res.params[0]);
            est.witness_v = extreme_from_param(space, res.params[1]);
        } else {
            est.value = best_pt;
            est.witness_u = pts[pi];
            est.witness_v = pts[pj];
        }
        est.certified = false;
        est.method = "multistart_optimization";
    }
    return est;
}

inline DeltaEstimate dobrushin_delta(const MarkovOperator& T, int budget = 64,
                                     std::uint64_t seed = 1, int iters = 500) {
    if (!T.validated) throw precondition_error("dobrushin_delta: operator not validated");
    DeltaEstimate est = delta_of_matrix(T.matrix, T.space, budget, seed, iters);
    est.value = std::min(std::max(est.value, 0.0), 1.0 + 1e-9);

    // Secondary estimator straight from the null-space ratio sup ||Tx||/||x||.
    Rng rng(derive_seed(seed, 2, "delta_null"));
    double secondary = 0.0;
    const int dim = T.space.ambient_dim();
    Eigen::RowVectorXd phi = f_row(T.space);
    double phi_nsq = phi.squaredNorm();
    for (int k = 0; k < 32; ++k) {
        Eigen::VectorXd x = rng.normal_vector(dim);
        x -= phi.transpose() * (phi.dot(x) / phi_nsq);  // project onto N
        double nx = base_norm(Element{T.space, x});
        if (nx < 1e-12) continue;
        secondary = std::max(secondary, base_norm(Element{T.space, T.matrix * x}) / nx);
    }
    // ratio at the witness difference
    Eigen::VectorXd w = est.witness_u.coords - est.witness_v.coords;
    double nw = base_norm(Element{T.space, w});
    if (nw > 1e-12)
        secondary = std::max(secondary, base_norm(Element{T.space, T.matrix * w}) / nw);
    est.secondary = secondary;
    if (!est.certified && secondary > est.value) est.value = std::min(secondary, 1.0 + 1e-9);
    return est;
}

// Rank-one map x -> f(x) y onto a base point y. Its coefficient is zero.
inline MarkovOperator rank_one(const Element& y, double tol = 1e-9) {
    check_element(y);
    if (!cone_contains(y, tol) || std::abs(functional_f(y) - 1.0) > tol)
        throw precondition_error("rank_one: y must lie in the base");
    Eigen::MatrixXd M = y.coords * f_row(y.space);
    MarkovOperator op = validate_markov(M, y.space);
    if (y.space.kind == SpaceKind::Quantum) op.cp_certified = true;  // x -> tr(x) y is CP
    return op;
}

// The contraction-forcing mixture (1 - eps/2) T + (eps/2) T_phi for a fixed
// point phi of T. Guarantees delta <= 1 - eps/2 and ||T - mixture|| < eps.
inline MarkovOperator mixture_with_fixed_point(const MarkovOperator& T, const Element& phi,
                                               double eps) {
    if (!(eps > 0.0 && eps < 2.0)) throw precondition_error("mixture: eps in (0, 2) required");
    if (!T.validated) throw precondition_error("mixture: operator not validated");
    double residual = base_norm(Element{T.space, T.matrix * phi.coords - phi.coords});
    if (residual > 1e-8)
        throw precondition_error("mixture: phi is not a fixed point of T (residual " +
                                 std::to_string(residual) + ")");
    MarkovOperator proj = rank_one(phi);
    Eigen::MatrixXd M = (1.0 - eps / 2.0) * T.matrix + (eps / 2.0) * proj.matrix;
    MarkovOperator op = validate_markov(M, T.space);
    op.cp_certified = T.cp_certified && proj.cp_certified;
    return op;
}

} // namespace obsb

#endif
