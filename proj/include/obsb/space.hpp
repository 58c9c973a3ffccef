#ifndef OBSB_SPACE_HPP
#define OBSB_SPACE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "obsb/errors.hpp"
#include "obsb/rng.hpp"

namespace obsb {

// Three concrete ordered Banach spaces with a base:
//   Classical : R^n, cone R^n_+, base = probability simplex, f = coordinate sum.
//   PCone     : R^{d+1}, cone {(x0, xh) : x0 >= ||xh||_p}, f = x0.
//   Quantum   : Hermitian d x d matrices in real coordinates, cone = PSD,
//               base = density matrices, f = trace.
enum class SpaceKind { Classical, PCone, Quantum };

struct SpaceDescriptor {
    SpaceKind kind = SpaceKind::Classical;
    int n = 1;       // state count (classical), tail dimension (pcone), Hilbert dimension (quantum)
    double p = 2.0;  // pcone exponent, 1 < p < inf

    static SpaceDescriptor classical(int states) {
        if (states < 1) throw precondition_error("classical space needs n >= 1");
        return {SpaceKind::Classical, states, 2.0};
    }
    static SpaceDescriptor pcone(int tail_dim, double exponent) {
        if (tail_dim < 1) throw precondition_error("pcone space needs d >= 1");
        if (!(exponent > 1.0) || !std::isfinite(exponent))
            throw precondition_error("pcone exponent must satisfy 1 < p < inf");
        return {SpaceKind::PCone, tail_dim, exponent};
    }
    static SpaceDescriptor quantum(int hilbert_dim) {
        if (hilbert_dim < 1) throw precondition_error("quantum space needs d >= 1");
        return {SpaceKind::Quantum, hilbert_dim, 2.0};
    }

    int ambient_dim() const {
        switch (kind) {
            case SpaceKind::Classical: return n;
            case SpaceKind::PCone: return n + 1;
            case SpaceKind::Quantum: return n * n;
        }
        return 0;
    }

    bool operator==(const SpaceDescriptor& o) const {
        if (kind != o.kind || n != o.n) return false;
        if (kind == SpaceKind::PCone) return p == o.p;
        return true;
    }
    bool operator!=(const SpaceDescriptor& o) const { return !(*this == o); }

    std::string name() const {
        switch (kind) {
            case SpaceKind::Classical: return "classical(n=" + std::to_string(n) + ")";
            case SpaceKind::PCone: return "pcone(d=" + std::to_string(n) + ",p=" + std::to_string(p) + ")";
            case SpaceKind::Quantum: return "quantum(d=" + std::to_string(n) + ")";
        }
        return "?";
    }
};

struct Element {
    SpaceDescriptor space;
    Eigen::VectorXd coords;
};

inline void check_element(const Element& x) {
    if (x.coords.size() != x.space.ambient_dim())
        throw malformed_error("element coordinate dimension " + std::to_string(x.coords.size()) +
                              " does not match space " + x.space.name());
    if (!x.coords.allFinite()) throw malformed_error("element has non-finite coordinates");
}

inline Element make_element(const SpaceDescriptor& s, Eigen::VectorXd c) {
    Element e{s, std::move(c)};
    check_element(e);
    return e;
}

inline Element operator+(const Element& a, const Element& b) {
    if (a.space != b.space) throw malformed_error("element space mismatch");
    return {a.space, a.coords + b.coords};
}
inline Element operator-(const Element& a, const Element& b) {
    if (a.space != b.space) throw malformed_error("element space mismatch");
    return {a.space, a.coords - b.coords};
}
inline Element operator*(double c, const Element& x) { return {x.space, c * x.coords}; }

// ---------------------------------------------------------------------------
// Hermitian coordinate basis for the quantum space.
//
// Fixed order (documented, all orthonormal under <A,B> = tr(A B)):
//   index 0                : I / sqrt(d)
//   then, for each pair (j,k) with j < k in lexicographic order:
//       (E_jk + E_kj) / sqrt(2)            (symmetric)
//       (-i E_jk + i E_kj) / sqrt(2)       (antisymmetric)
//   then, for l = 1..d-1:
//       (sum_{j<l} E_jj - l E_ll) / sqrt(l(l+1))   (diagonal)
// ---------------------------------------------------------------------------
inline const std::vector<Eigen::MatrixXcd>& hermitian_basis(int d) {
    static std::map<int, std::vector<Eigen::MatrixXcd>> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(d);
    if (it != cache.end()) return it->second;

    using Mat = Eigen::MatrixXcd;
    const std::complex<double> im(0.0, 1.0);
    std::vector<Mat> basis;
    basis.reserve(static_cast<std::size_t>(d) * d);
    basis.push_back(Mat::Identity(d, d) / std::sqrt(static_cast<double>(d)));
    for (int j = 0; j < d; ++j) {
        for (int k = j + 1; k < d; ++k) {
            Mat sym = Mat::Zero(d, d);
            sym(j, k) = 1.0 / std::sqrt(2.0);
            sym(k, j) = 1.0 / std::sqrt(2.0);
            basis.push_back(sym);
            Mat asym = Mat::Zero(d, d);
            asym(j, k) = -im / std::sqrt(2.0);
            asym(k, j) = im / std::sqrt(2.0);
            basis.push_back(asym);
        }
    }
    for (int l = 1; l < d; ++l) {
        Mat diag = Mat::Zero(d, d);
        for (int j = 0; j < l; ++j) diag(j, j) = 1.0;
        diag(l, l) = -static_cast<double>(l);
        diag /= std::sqrt(static_cast<double>(l) * (l + 1));
        basis.push_back(diag);
    }
    auto [ins, ok] = cache.emplace(d, std::move(basis));
    (void)ok;
    return ins->second;
}

inline Eigen::VectorXd encode_hermitian(const Eigen::MatrixXcd& M) {
    const int d = static_cast<int>(M.rows());
    if (M.cols() != d) throw malformed_error("encode_hermitian: matrix not square");
    if ((M - M.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, M.cwiseAbs().maxCoeff()))
        throw malformed_error("encode_hermitian: matrix not Hermitian");
    const auto& basis = hermitian_basis(d);
    Eigen::VectorXd c(d * d);
    for (int k = 0; k < d * d; ++k) c(k) = (basis[k] * M).trace().real();
    return c;
}

inline Eigen::MatrixXcd decode_hermitian(const SpaceDescriptor& s, const Eigen::VectorXd& c) {
    const int d = s.n;
    const auto& basis = hermitian_basis(d);
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(d, d);
    for (int k = 0; k < d * d; ++k) M += c(k) * basis[k];
    return M;
}

inline Eigen::VectorXd hermitian_eigenvalues(const SpaceDescriptor& s, const Eigen::VectorXd& c) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(decode_hermitian(s, c), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

// Row vector phi with f(x) = phi . coords.
inline Eigen::RowVectorXd f_row(const SpaceDescriptor& s) {
    Eigen::RowVectorXd phi = Eigen::RowVectorXd::Zero(s.ambient_dim());
    switch (s.kind) {
        case SpaceKind::Classical: phi.setOnes(); break;
        case SpaceKind::PCone: phi(0) = 1.0; break;
        case SpaceKind::Quantum: phi(0) = std::sqrt(static_cast<double>(s.n)); break;
    }
    return phi;
}

inline double functional_f(const Element& x) {
    check_element(x);
    return f_row(x.space).dot(x.coords);
}

namespace detail {

inline double pnorm(const Eigen::VectorXd& v, double p) {
    if (v.size() == 0) return 0.0;
    double m = v.cwiseAbs().maxCoeff();
    if (m == 0.0) return 0.0;
    // scaled to dodge overflow for large p
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i) s += std::pow(std::abs(v(i)) / m, p);
    return m * std::pow(s, 1.0 / p);
}

// Gradient of ||v||_p at v != 0 (a valid subgradient everywhere with 0 at 0).
inline Eigen::VectorXd pnorm_subgrad(const Eigen::VectorXd& v, double p) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(v.size());
    double nv = pnorm(v, p);
    if (nv == 0.0) return g;
    for (int i = 0; i < v.size(); ++i) {
        double a = std::abs(v(i)) / nv;
        g(i) = (v(i) >= 0 ? 1.0 : -1.0) * std::pow(a, p - 1.0);
    }
    return g;
}

struct PConeSolve {
    double objective;      // g* = min_y max(||y||_p, x0 + ||y - xh||_p)
    Eigen::VectorXd yhat;  // argmin
    double lower_bound;    // provable optimum used as Polyak target
};

// Minimizes g(y) = max(||y||_p, x0 + ||y - xh||_p) over y in R^d.
// The base-norm decomposition value is then 2 g* - x0.
//
// A triangle-inequality argument pins the optimum exactly:
//   g >= (||y|| + x0 + ||xh - y||)/2 >= (x0 + ||xh||_p)/2, g >= x0 at y = xh,
//   g >= 0, and each of the three lower bounds is attained on the segment
//   [0, xh]. Subgradient descent (Polyak step toward that bound) plus a
//   ternary polish along the segment reaches it to full precision.
inline PConeSolve pcone_min_decomposition(double x0, const Eigen::VectorXd& xh, double p,
                                          int iter_cap = 10000, double tol = 1e-8) {
    const int d = static_cast<int>(xh.size());
    const double nxh = pnorm(xh, p);
    const double lower = std::max({0.0, x0, (x0 + nxh) / 2.0});
    auto g = [&](const Eigen::VectorXd& y) {
        return std::max(pnorm(y, p), x0 + pnorm(y - xh, p));
    };

    Eigen::VectorXd best_y = Eigen::VectorXd::Zero(d);
    double best = g(best_y);

    // Deterministic restarts: 0, xh, xh/2, and axis points.
    std::vector<Eigen::VectorXd> starts;
    starts.push_back(Eigen::VectorXd::Zero(d));
    starts.push_back(xh);
    starts.push_back(0.5 * xh);
    double r = std::max(nxh, std::abs(x0));
    for (int i = 0; i < d && static_cast<int>(starts.size()) < 20; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
        e(i) = r;
        starts.push_back(e);
        if (static_cast<int>(starts.size()) < 20) starts.push_back(-e);
    }

    const int per_start = std::max(1, iter_cap / std::max<int>(1, static_cast<int>(starts.size())));
    for (const auto& s0 : starts) {
        Eigen::VectorXd y = s0;
        double gy = g(y);
        if (gy < best) { best = gy; best_y = y; }
        for (int it = 0; it < per_start && gy - lower > tol * 0.01; ++it) {
            double a = pnorm(y, p);
            double b = x0 + pnorm(y - xh, p);
            Eigen::VectorXd sub = (a >= b) ? pnorm_subgrad(y, p) : pnorm_subgrad(y - xh, p);
            double nsq = sub.squaredNorm();
            if (nsq < 1e-30) break;
            double step = (gy - lower) / nsq;  // Polyak step, lower == optimum
            y -= step * sub;
            gy = g(y);
            if (gy < best) { best = gy; best_y = y; }
        }
    }

    // Ternary polish along [0, xh]; the optimum always lies on this segment.
    if (nxh > 0.0) {
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            double m1 = lo + (hi - lo) / 3.0;
            double m2 = hi - (hi - lo) / 3.0;
            if (g(m1 * xh) <= g(m2 * xh)) hi = m2; else lo = m1;
        }
        double s = 0.5 * (lo + hi);
        Eigen::VectorXd y = s * xh;
        double gy = g(y);
        if (gy < best) { best = gy; best_y = y; }
        // endpoints, exactly
        if (g(xh) < best) { best = g(xh); best_y = xh; }
        Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
        if (g(z) < best) { best = g(z); best_y = z; }
    }

    if (best - lower > 1e-6)
        throw numerical_error("pcone base-norm solver did not converge: best objective " +
                              std::to_string(best) + ", certified lower bound " + std::to_string(lower));
    return {best, best_y, lower};
}

} // namespace detail

inline bool cone_contains(const Element& x, double tol = 1e-9) {
    check_element(x);
    switch (x.space.kind) {
        case SpaceKind::Classical:
            return x.coords.minCoeff() >= -tol;
        case SpaceKind::PCone: {
            Eigen::VectorXd tail = x.coords.tail(x.space.n);
            return x.coords(0) >= detail::pnorm(tail, x.space.p) - tol;
        }
        case SpaceKind::Quantum:
            return hermitian_eigenvalues(x.space, x.coords).minCoeff() >= -tol;
    }
    return false;
}

inline bool in_base(const Element& x, double tol = 1e-9) {
    return cone_contains(x, tol) && std::abs(functional_f(x) - 1.0) <= tol;
}

// Base norm ||x||_K = min{ f(y) + f(z) : x = y - z, y, z in the cone }.
// Classical: l1. Quantum: trace norm. PCone: convex decomposition minimum.
inline double base_norm(const Element& x) {
    check_element(x);
    switch (x.space.kind) {
        case SpaceKind::Classical:
            return x.coords.lpNorm<1>();
        case SpaceKind::PCone: {
            double x0 = x.coords(0);
            Eigen::VectorXd xh = x.coords.tail(x.space.n);
            auto sol = detail::pcone_min_decomposition(x0, xh, x.space.p);
            return std::max(0.0, 2.0 * sol.objective - x0);
        }
        case SpaceKind::Quantum:
            return hermitian_eigenvalues(x.space, x.coords).cwiseAbs().sum();
    }
    return 0.0;
}

// x = y - z with y, z in the cone and f(y) + f(z) = ||x||.
inline std::pair<Element, Element> jordan_decompose(const Element& x) {
    check_element(x);
    switch (x.space.kind) {
        case SpaceKind::Classical: {
            Eigen::VectorXd y = x.coords.cwiseMax(0.0);
            Eigen::VectorXd z = (-x.coords).cwiseMax(0.0);
            return {Element{x.space, y}, Element{x.space, z}};
        }
        case SpaceKind::PCone: {
            double x0 = x.coords(0);
            Eigen::VectorXd xh = x.coords.tail(x.space.n);
            auto sol = detail::pcone_min_decomposition(x0, xh, x.space.p);
            double y0 = std::max(detail::pnorm(sol.yhat, x.space.p),
                                 x0 + detail::pnorm(sol.yhat - xh, x.space.p));
            Eigen::VectorXd y(x.space.ambient_dim()), z(x.space.ambient_dim());
            y(0) = y0;
            y.tail(x.space.n) = sol.yhat;
            z = y - x.coords;
            return {Element{x.space, y}, Element{x.space, z}};
        }
        case SpaceKind::Quantum: {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(decode_hermitian(x.space, x.coords));
            const int d = x.space.n;
            Eigen::MatrixXcd pos = Eigen::MatrixXcd::Zero(d, d), neg = Eigen::MatrixXcd::Zero(d, d);
            for (int i = 0; i < d; ++i) {
                double lam = es.eigenvalues()(i);
                Eigen::MatrixXcd proj = es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
                if (lam >= 0) pos += lam * proj; else neg -= lam * proj;
            }
            return {Element{x.space, encode_hermitian(pos)}, Element{x.space, encode_hermitian(neg)}};
        }
    }
    throw malformed_error("unknown space kind");
}

struct BasePairSplit {
    Element u;     // in the base
    Element v;     // in the base
    double scale;  // ||x|| / 2, so x = scale * (u - v)
};

// For x with f(x) = 0 and x != 0: x = (||x||/2)(u - v) with u, v in the base.
inline BasePairSplit base_pair_decompose(const Element& x, double tol = 1e-9) {
    check_element(x);
    double fx = functional_f(x);
    if (std::abs(fx) > tol)
        throw precondition_error("base_pair_decompose requires f(x) = 0, got f(x) = " + std::to_string(fx));
    auto [y, z] = jordan_decompose(x);
    double fy = functional_f(y), fz = functional_f(z);
    if (fy <= tol || fz <= tol)
        throw precondition_error("base_pair_decompose: degenerate input x = 0");
    return {Element{x.space, y.coords / fy}, Element{x.space, z.coords / fz}, 0.5 * (fy + fz)};
}

// Barycenter of the base: uniform vector / (1, 0) / maximally mixed state.
inline Element barycenter(const SpaceDescriptor& s) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(s.ambient_dim());
    switch (s.kind) {
        case SpaceKind::Classical: c.setConstant(1.0 / s.n); break;
        case SpaceKind::PCone: c(0) = 1.0; break;
        case SpaceKind::Quantum: c(0) = 1.0 / std::sqrt(static_cast<double>(s.n)); break;
    }
    return {s, c};
}

inline Element random_base_point(const SpaceDescriptor& s, Rng& rng) {
    switch (s.kind) {
        case SpaceKind::Classical:
            return {s, rng.dirichlet(s.n)};
        case SpaceKind::PCone: {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(s.ambient_dim());
            c(0) = 1.0;
            Eigen::VectorXd t = rng.normal_vector(s.n);
            double nt = detail::pnorm(t, s.p);
            double radius = std::pow(rng.u01(), 1.0 / s.n);
            if (nt > 0) c.tail(s.n) = radius * t / nt;
            return {s, c};
        }
        case SpaceKind::Quantum: {
            // Mixture of a few random pure states.
            const int d = s.n;
            Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(d, d);
            Eigen::VectorXd w = rng.dirichlet(d);
            for (int k = 0; k < d; ++k) {
                Eigen::VectorXcd psi(d);
                for (int i = 0; i < d; ++i) psi(i) = std::complex<double>(rng.normal(), rng.normal());
                psi.normalize();
                rho += w(k) * (psi * psi.adjoint());
            }
            return {s, encode_hermitian(rho)};
        }
    }
    throw malformed_error("unknown space kind");
}

inline Element random_pure_point(const SpaceDescriptor& s, Rng& rng) {
    // Extreme point of the base.
    switch (s.kind) {
        case SpaceKind::Classical: {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(s.n);
            c(static_cast<int>(rng.below(s.n))) = 1.0;
            return {s, c};
        }
        case SpaceKind::PCone: {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(s.ambient_dim());
            c(0) = 1.0;
            Eigen::VectorXd t = rng.normal_vector(s.n);
            double nt = detail::pnorm(t, s.p);
            if (nt > 0) c.tail(s.n) = t / nt; else c(1) = 1.0;
            return {s, c};
        }
        case SpaceKind::Quantum: {
            Eigen::VectorXcd psi(s.n);
            for (int i = 0; i < s.n; ++i) psi(i) = std::complex<double>(rng.normal(), rng.normal());
            psi.normalize();
            return {s, encode_hermitian(psi * psi.adjoint())};
        }
    }
    throw malformed_error("unknown space kind");
}

// Extreme points of the base used to evaluate suprema over the base.
// Classical: all n vertices (budget ignored). PCone: the 2d axis points plus
// `budget` seeded unit-sphere points. Quantum: the d computational basis
// states plus `budget` seeded pure states.
inline std::vector<Element> extreme_points(const SpaceDescriptor& s, int budget, std::uint64_t seed) {
    if (budget < 1) throw precondition_error("extreme_points: budget >= 1 required");
    std::vector<Element> pts;
    Rng rng(derive_seed(seed, 0, "extreme_points"));
    switch (s.kind) {
        case SpaceKind::Classical:
            for (int i = 0; i < s.n; ++i) {
                Eigen::VectorXd c = Eigen::VectorXd::Zero(s.n);
                c(i) = 1.0;
                pts.push_back({s, c});
            }
            return pts;
        case SpaceKind::PCone: {
            for (int i = 0; i < s.n; ++i) {
                for (double sign : {1.0, -1.0}) {
                    Eigen::VectorXd c = Eigen::VectorXd::Zero(s.ambient_dim());
                    c(0) = 1.0;
                    c(1 + i) = sign;
                    pts.push_back({s, c});
                }
            }
            for (int k = 0; k < budget; ++k) pts.push_back(random_pure_point(s, rng));
            return pts;
        }
        case SpaceKind::Quantum: {
            const int d = s.n;
            for (int i = 0; i < d; ++i) {
                Eigen::MatrixXcd proj = Eigen::MatrixXcd::Zero(d, d);
                proj(i, i) = 1.0;
                pts.push_back({s, encode_hermitian(proj)});
            }
            for (int k = 0; k < budget; ++k) pts.push_back(random_pure_point(s, rng));
            return pts;
        }
    }
    throw malformed_error("unknown space kind");
}

} // namespace obsb

#endif
