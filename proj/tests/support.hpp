#pragma once

// Test-side oracles written independently of the library's algorithms, and
// seeded generators for property tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lumpbound/lumpbound.hpp"

namespace testing_support {

using lumpbound::Distribution;
using lumpbound::LumpingMap;
using lumpbound::RateMatrix;
using lumpbound::StateFunction;

using Dense = std::vector<std::vector<double>>;

inline Dense dense_of(const RateMatrix& q) {
    Dense d(q.size(), std::vector<double>(q.size()));
    for (std::size_t x = 0; x < q.size(); ++x)
        for (std::size_t y = 0; y < q.size(); ++y) d[x][y] = q(x, y);
    return d;
}

/// Solves pi Q = 0, sum pi = 1 by Gaussian elimination with partial pivoting
/// in long double on the transposed system with the last row set to ones.
inline std::vector<double> gauss_stationary(const RateMatrix& q) {
    const std::size_t n = q.size();
    std::vector<std::vector<long double>> a(n, std::vector<long double>(n + 1, 0.0L));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) a[r][c] = (r + 1 == n) ? 1.0L : q(c, r);
        a[r][n] = (r + 1 == n) ? 1.0L : 0.0L;
    }
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        if (a[col][col] == 0.0L) throw std::runtime_error("singular stationary system");
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const long double factor = a[r][col] / a[col][col];
            for (std::size_t c = col; c <= n; ++c) a[r][c] -= factor * a[col][c];
        }
    }
    std::vector<double> pi(n);
    for (std::size_t i = 0; i < n; ++i) pi[i] = static_cast<double>(a[i][n] / a[i][i]);
    return pi;
}

/// e^{tQ} by Eigen's scaling-and-squaring Pade exponential.
inline Eigen::MatrixXd expm(const RateMatrix& q, double t) {
    const auto n = static_cast<Eigen::Index>(q.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index x = 0; x < n; ++x)
        for (Eigen::Index y = 0; y < n; ++y)
            m(x, y) = t * q(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    return m.exp();
}

inline double expm_expectation(const Distribution& pi0, const RateMatrix& q, const StateFunction& f, double t) {
    const auto e = expm(q, t);
    double s = 0.0;
    for (std::size_t x = 0; x < q.size(); ++x)
        for (std::size_t y = 0; y < q.size(); ++y)
            s += pi0.mass()[x] * e(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) * f[y];
    return s;
}

/// The lower rate operator straight from its definition: for every coarse
/// x-hat, the min over x in its block of sum_yhat g(yhat) sum_{y in block} Q(x, y).
inline std::vector<double> brute_lower_rate(const RateMatrix& q, const LumpingMap& lumping,
                                            const std::vector<double>& g) {
    const std::size_t n = q.size();
    const std::size_t nh = lumping.coarse_size();
    std::vector<double> out(nh, std::numeric_limits<double>::infinity());
    for (std::size_t x = 0; x < n; ++x) {
        double s = 0.0;
        for (std::size_t y = 0; y < n; ++y) s += g[lumping(y)] * q(x, y);
        out[lumping(x)] = std::min(out[lumping(x)], s);
    }
    return out;
}

/// Block-weighted lumped matrix from its definition.
inline Dense brute_lumped_matrix(const RateMatrix& q, const LumpingMap& lumping, const std::vector<double>& pi) {
    const std::size_t nh = lumping.coarse_size();
    Dense out(nh, std::vector<double>(nh, 0.0));
    std::vector<double> mass(nh, 0.0);
    for (std::size_t x = 0; x < q.size(); ++x) mass[lumping(x)] += pi[x];
    for (std::size_t x = 0; x < q.size(); ++x)
        for (std::size_t y = 0; y < q.size(); ++y) out[lumping(x)][lumping(y)] += pi[x] / mass[lumping(x)] * q(x, y);
    return out;
}

/// n steps of g <- g + (t/n) brute_lower_rate(g).
inline std::vector<double> brute_euler(const RateMatrix& q, const LumpingMap& lumping, std::vector<double> g, double t,
                                       std::size_t n) {
    const double d = t / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto qg = brute_lower_rate(q, lumping, g);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d * qg[i];
    }
    return g;
}

/// Seeded generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::size_t size(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::uint64_t seed() { return rng_(); }

    std::vector<double> values(std::size_t n, double lo = -1.0, double hi = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = real(lo, hi);
        return v;
    }

    lumpbound::Model model(std::size_t max_states = 8) {
        lumpbound::RandomModelSpec s;
        s.states = size(2, max_states);
        s.lumped_states = size(1, s.states);
        s.density = real(0.1, 0.8);
        s.seed = seed();
        return lumpbound::random_model(s);
    }

    StateFunction coarse_function(const LumpingMap& lumping) {
        return {lumping.coarse(), values(lumping.coarse_size())};
    }

    std::vector<double> positive_distribution(std::size_t n) {
        auto v = values(n, 0.01, 1.0);
        double s = 0.0;
        for (double x : v) s += x;
        for (auto& x : v) x /= s;
        return v;
    }

private:
    std::mt19937_64 rng_;
};

/// The 3-state chain with rows (-2,1,1), (1,-3,2), (1,1,-2).
inline RateMatrix q3() {
    return lumpbound::validate_rate_matrix(Dense{{-2, 1, 1}, {1, -3, 2}, {1, 1, -2}}, lumpbound::StateSpace::numbered(3));
}

inline RateMatrix q2() {
    return lumpbound::validate_rate_matrix(Dense{{-1, 1}, {2, -2}}, lumpbound::StateSpace::numbered(2));
}

/// Blocks {0,1} -> "A", {2} -> "B" on q3's space.
inline LumpingMap q3_blocks(const RateMatrix& q) { return lumpbound::build_lumping({"A", "A", "B"}, q.space()); }

/// Silences library warnings for the lifetime of the object.
struct QuietWarnings {
    lumpbound::WarningSink old = lumpbound::set_warning_sink(nullptr);
    ~QuietWarnings() { lumpbound::set_warning_sink(old); }
};

}  // namespace testing_support
