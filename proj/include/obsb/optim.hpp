#ifndef OBSB_OPTIM_HPP
#define OBSB_OPTIM_HPP

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "obsb/rng.hpp"
#include "obsb/space.hpp"

namespace obsb {

// Smooth parameterization of base extreme points, for suprema that have no
// closed form off the classical space.
//   PCone   : theta in R^d   -> (1, theta / ||theta||_p)
//   Quantum : theta in R^2d  -> pure state psi psi^dagger, psi ~ theta
inline int extreme_param_dim(const SpaceDescriptor& s) {
    switch (s.kind) {
        case SpaceKind::Classical: return s.n;
        case SpaceKind::PCone: return s.n;
        case SpaceKind::Quantum: return 2 * s.n;
    }
    return 0;
}

inline Element extreme_from_param(const SpaceDescriptor& s, const Eigen::VectorXd& theta) {
    switch (s.kind) {
        case SpaceKind::Classical: {
            // softmax onto the simplex; vertices are reachable in the limit
            Eigen::VectorXd e = (theta.array() - theta.maxCoeff()).exp();
            return {s, e / e.sum()};
        }
        case SpaceKind::PCone: {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(s.ambient_dim());
            c(0) = 1.0;
            double nt = detail::pnorm(theta, s.p);
            if (nt > 1e-14) c.tail(s.n) = theta / nt; else c(1) = 1.0;
            return {s, c};
        }
        case SpaceKind::Quantum: {
            Eigen::VectorXcd psi(s.n);
            for (int i = 0; i < s.n; ++i) psi(i) = std::complex<double>(theta(i), theta(s.n + i));
            double nrm = psi.norm();
            if (nrm < 1e-14) { psi.setZero(); psi(0) = 1.0; } else psi /= nrm;
            return {s, encode_hermitian(psi * psi.adjoint())};
        }
    }
    throw malformed_error("unknown space kind");
}

struct MultistartResult {
    double value = 0.0;
    std::vector<Eigen::VectorXd> params;  // one block per argument
};

// Derivative-free multistart hill climb: gaussian proposals with a step
// radius that shrinks on rejection. Deterministic per (seed, restart index);
// ties resolved toward the lowest restart index.
inline MultistartResult multistart_maximize(
    const std::function<double(const std::vector<Eigen::VectorXd>&)>& objective,
    const std::vector<int>& block_dims,
    const std::vector<std::vector<Eigen::VectorXd>>& warm_starts,
    int restarts, int iters, std::uint64_t seed) {
    MultistartResult best;
    best.value = -std::numeric_limits<double>::infinity();

    const int total_restarts = restarts + static_cast<int>(warm_starts.size());
    for (int r = 0; r < total_restarts; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r), "multistart"));
        std::vector<Eigen::VectorXd> x;
        if (r < static_cast<int>(warm_starts.size())) {
            x = warm_starts[r];
        } else {
            for (int dim : block_dims) x.push_back(rng.normal_vector(dim));
        }
        double fx = objective(x);
        double radius = 1.0;
        for (int it = 0; it < iters; ++it) {
            std::vector<Eigen::VectorXd> y = x;
            for (auto& blk : y) blk += radius * rng.normal_vector(static_cast<int>(blk.size()));
            double fy = objective(y);
            if (fy > fx) {
                x = std::move(y);
                fx = fy;
                radius = std::min(1.0, radius * 1.3);
            } else {
                radius *= 0.85;
                if (radius < 1e-12) break;
            }
        }
        if (fx > best.value) {
            best.value = fx;
            best.params = x;
        }
    }
    return best;
}

} // namespace obsb

#endif
