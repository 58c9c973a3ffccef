#ifndef OBSB_RNG_HPP
#define OBSB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace obsb {

// splitmix64 step. Used both as the PRNG core and for sub-seed derivation,
// so that results are bit-identical across platforms (the standard library
// distributions are implementation-defined).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic sub-seed for (seed, trial index, role tag).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t trial, std::string_view role) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= trial * 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    s ^= hash_tag(role);
    std::uint64_t c = splitmix64(s);
    return a ^ (b << 1) ^ c;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = u01(), u2 = u01();
        while (u1 <= 1e-300) u1 = u01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd normal_vector(int n) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    // Symmetric Dirichlet(alpha) over the k-simplex.
    Eigen::VectorXd dirichlet(int k, double alpha = 1.0) {
        Eigen::VectorXd v(k);
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
            v(i) = gamma_draw(alpha);
            sum += v(i);
        }
        if (sum <= 0.0) {
            v.setConstant(1.0 / k);
            return v;
        }
        return v / sum;
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[i], p[j]);
        }
        return p;
    }

private:
    double gamma_draw(double alpha) {
        if (alpha == 1.0) {
            double u = u01();
            while (u <= 1e-300) u = u01();
            return -std::log(u);
        }
        // Marsaglia-Tsang, boosted for alpha < 1.
        if (alpha < 1.0) {
            double u = u01();
            while (u <= 1e-300) u = u01();
            return gamma_draw(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        double d = alpha - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = u01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 1e-300 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace obsb

#endif
