#pragma once

// The imprecise CTMC induced by a lumping: its lower transition rate
// operator, the skeleton (I + delta Q_lower), the lower transition operator
// over t, and the lumped rate matrices Q_pi whose lower envelope it is.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lumpbound/chain.hpp"
#include "lumpbound/lumping.hpp"

namespace lumpbound {

/// Lower transition rate operator of the lumped chain.
///
///   [Q_lower g](xh) = min_{x in block(xh)} sum_{yh} g(yh) * B(x, yh),
///   B(x, yh)        = sum_{y in block(yh)} Q(x, y).
///
/// B is precomputed in fine-index order. Its own-block column is stored as
/// the negative sum of the other columns so each row sums to zero in the
/// same order used by the evaluation.
class LowerRateOperator {
public:
    LowerRateOperator(RateMatrix source, LumpingMap lumping) : source_(std::move(source)), map_(std::move(lumping)) {
        require_same_space(source_.space(), map_.fine(), "rate matrix and lumping use different fine spaces");
        const auto n = static_cast<Eigen::Index>(map_.fine_size());
        const auto nh = static_cast<Eigen::Index>(map_.coarse_size());
        block_sums_ = Matrix::Zero(n, nh);
        for (Eigen::Index x = 0; x < n; ++x) {
            const auto own = static_cast<Eigen::Index>(map_(static_cast<std::size_t>(x)));
            for (Eigen::Index b = 0; b < nh; ++b) {
                if (b == own) continue;
                double s = 0.0;
                for (auto y : map_.block(static_cast<std::size_t>(b))) s += source_(static_cast<std::size_t>(x), y);
                block_sums_(x, b) = s;
            }
            double off = 0.0;
            for (Eigen::Index b = 0; b < nh; ++b) {
                if (b != own) off += block_sums_(x, b);
            }
            block_sums_(x, own) = -off;
        }
    }

    [[nodiscard]] const RateMatrix& source() const noexcept { return source_; }
    [[nodiscard]] const LumpingMap& lumping() const noexcept { return map_; }
    [[nodiscard]] const SpacePtr& coarse() const noexcept { return map_.coarse(); }
    /// N x N-hat matrix of block row sums B(x, yh).
    [[nodiscard]] const Matrix& block_row_sums() const noexcept { return block_sums_; }
    [[nodiscard]] std::size_t fine_size() const noexcept { return map_.fine_size(); }
    [[nodiscard]] std::size_t coarse_size() const noexcept { return map_.coarse_size(); }

    /// sum_{yh} g(yh) B(x, yh) for fine x, with g on the coarse space.
    [[nodiscard]] double row_value(std::size_t x, std::span<const double> g) const {
        const auto xi = static_cast<Eigen::Index>(x);
        const auto own = map_(x);
        const double gown = g[own];
        double s = 0.0;
        for (std::size_t b = 0; b < g.size(); ++b) {
            if (b != own) s += block_sums_(xi, static_cast<Eigen::Index>(b)) * (g[b] - gown);
        }
        return s;
    }

    /// out = Q_lower g. When `argmin` is non-null it receives, per coarse
    /// state, the fine state attaining the minimum (lowest index on ties).
    void apply_into(std::span<const double> g, std::span<double> out, std::vector<std::size_t>* argmin = nullptr) const {
        if (argmin) argmin->assign(coarse_size(), 0);
        for (std::size_t b = 0; b < coarse_size(); ++b) {
            const auto& block = map_.block(b);
            double best = row_value(block.front(), g);
            std::size_t best_x = block.front();
            for (std::size_t i = 1; i < block.size(); ++i) {
                const double v = row_value(block[i], g);
#ifdef LUMPBOUND_MUTATE_ENVELOPE
                // Deliberately broken envelope (max instead of min) for the
                // mutation build of the verification suite.
                if (v > best) {
#else
                if (v < best) {
#endif
                    best = v;
                    best_x = block[i];
                }
            }
            out[b] = best;
            if (argmin) (*argmin)[b] = best_x;
        }
    }

    [[nodiscard]] StateFunction apply(const StateFunction& g) const {
        require_same_space(g.space(), coarse(), "function is not defined on the coarse space");
        std::vector<double> out(coarse_size());
        apply_into(g.values(), out);
        return {coarse(), std::move(out)};
    }

    /// Applies the operator and also reports the minimizing fine states.
    [[nodiscard]] std::pair<StateFunction, std::vector<std::size_t>> apply_with_argmin(const StateFunction& g) const {
        require_same_space(g.space(), coarse(), "function is not defined on the coarse space");
        std::vector<double> out(coarse_size());
        std::vector<std::size_t> arg;
        apply_into(g.values(), out, &arg);
        return {StateFunction(coarse(), std::move(out)), std::move(arg)};
    }

    /// g <- g + delta * Q_lower g, using `scratch` of coarse size.
    void skeleton_step(std::vector<double>& g, std::vector<double>& scratch, double delta) const {
        apply_into(g, scratch);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta * scratch[i];
    }

private:
    RateMatrix source_;
    LumpingMap map_;
    Matrix block_sums_;
};

[[nodiscard]] inline LowerRateOperator lower_rate_operator(const RateMatrix& q, const LumpingMap& lumping) {
    return {q, lumping};
}

[[nodiscard]] inline StateFunction apply_lower_rate(const LowerRateOperator& op, const StateFunction& g) {
    return op.apply(g);
}

struct OperatorNormReport {
    double lower_op_norm = 0.0;  // ||Q_lower||
    double source_norm = 0.0;    // ||Q||
    double max_diag_rate = 0.0;  // max |Q(x,x)|
};

/// ||Q_lower|| = 2 max_{xh} -[Q_lower 1_{xh}](xh), evaluated on indicators.
[[nodiscard]] inline OperatorNormReport lower_rate_norm(const LowerRateOperator& op) {
    OperatorNormReport r;
    r.source_norm = rate_matrix_norm(op.source());
    r.max_diag_rate = op.source().max_exit_rate();
    std::vector<double> out(op.coarse_size());
    double worst = 0.0;
    for (std::size_t b = 0; b < op.coarse_size(); ++b) {
        std::vector<double> ind(op.coarse_size(), 0.0);
        ind[b] = 1.0;
        op.apply_into(ind, out);
        worst = std::max(worst, -out[b]);
    }
    // Grouping by blocks can round one ulp past the exit rate it never exceeds exactly.
    worst = std::min(worst, r.max_diag_rate);
    r.lower_op_norm = 2.0 * worst;
    return r;
}

/// Upper reachability: xh -> yh whenever -[Q_lower(-1_{yh})](xh) > 0.
[[nodiscard]] inline bool lower_operator_irreducible(const LowerRateOperator& op) {
    const auto nh = op.coarse_size();
    std::vector<std::vector<char>> edge(nh, std::vector<char>(nh, 0));
    std::vector<double> out(nh);
    for (std::size_t target = 0; target < nh; ++target) {
        std::vector<double> neg(nh, 0.0);
        neg[target] = -1.0;
        op.apply_into(neg, out);
        for (std::size_t from = 0; from < nh; ++from) edge[from][target] = (from != target && -out[from] > 0.0);
    }
    return detail::strongly_connected(nh, [&](std::size_t a, std::size_t b) { return edge[a][b] != 0; });
}

struct LowerTransitionResult {
    StateFunction values;
    std::size_t steps = 0;
    double error_budget = 0.0;
};

/// (I + (t/n) Q_lower)^n g for a fixed n (no error guarantee attached).
[[nodiscard]] inline StateFunction lower_transition_euler(const LowerRateOperator& op, const StateFunction& g, double t,
                                                          std::size_t steps) {
    require_same_space(g.space(), op.coarse(), "function is not defined on the coarse space");
    if (steps == 0 || t == 0.0) return g;
    const double delta = t / static_cast<double>(steps);
    std::vector<double> h(g.values().begin(), g.values().end());
    std::vector<double> scratch(h.size());
    for (std::size_t i = 0; i < steps; ++i) op.skeleton_step(h, scratch, delta);
    return {op.coarse(), std::move(h)};
}

/// Number of uniform steps that certifies sup-norm error <= eps:
/// n = max(ceil(2 t ||Q_lower||), ceil(t^2 ||Q_lower||^2 max(||g||,1) / eps), 1).
[[nodiscard]] inline double lower_transition_step_count(double t, double lower_norm, double g_norm, double eps) {
    const double by_stability = std::ceil(2.0 * t * lower_norm);
    const double by_accuracy = std::ceil(t * t * lower_norm * lower_norm * std::max(g_norm, 1.0) / eps);
    return std::max({by_stability, by_accuracy, 1.0});
}

inline constexpr double default_operation_cap = 1e8;

/// Approximates the lower transition operator over t applied to g with
/// guaranteed ||h - T_lower_t g|| <= eps, on a uniform grid (delta ||Q_lower|| <= 1/2).
/// Throws OverBudget when steps * N * N-hat would exceed `operation_cap`.
[[nodiscard]] inline LowerTransitionResult lower_transition_apply(const LowerRateOperator& op, const StateFunction& g,
                                                                  double t, double eps,
                                                                  double operation_cap = default_operation_cap) {
    require_same_space(g.space(), op.coarse(), "function is not defined on the coarse space");
    if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "time must be finite and >= 0");
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be > 0");
    const double norm = lower_rate_norm(op).lower_op_norm;
    if (t == 0.0 || g.is_constant() || norm == 0.0) return {g, 0, 0.0};

    const double steps = lower_transition_step_count(t, norm, g.max_abs(), eps);
    const double work = steps * static_cast<double>(op.fine_size()) * static_cast<double>(op.coarse_size());
    if (!(work <= operation_cap)) {
        throw Error(ErrorKind::OverBudget, "lower transition needs " + std::to_string(steps) + " steps (" +
                                               std::to_string(work) + " operations, cap " +
                                               std::to_string(operation_cap) + ")");
    }
    const auto n = static_cast<std::size_t>(steps);
    return {lower_transition_euler(op, g, t, n), n, eps};
}

/// Poisson-mixture lower bound on a marginal expectation.
///
/// With P = I + Q/rate on the fine space and rate >= max |Q(x,x)|, monotonicity
/// of P gives P^k (g o Lambda) >= (P_lower^k g) o Lambda where
/// P_lower = I + Q_lower/rate, so
///   E f(X_t) >= sum_{k<=K} Pois(k; rate t) pi_hat P_lower^k g + tail * min(0, min g)
/// for every f >= g o Lambda. `value` is that bound; `estimate` is the
/// truncated mixture renormalized by its mass.
struct UniformizedBound {
    double value = 0.0;
    double estimate = 0.0;
    std::size_t terms = 0;
    double rate = 0.0;
    double tail_bound = 0.0;
};

[[nodiscard]] inline UniformizedBound uniformized_lower_bound(const LowerRateOperator& op, const Distribution& pi_hat,
                                                              const StateFunction& g, double t, double rate,
                                                              double tail_target) {
    require_same_space(g.space(), op.coarse(), "function is not defined on the coarse space");
    require_same_space(pi_hat.space(), op.coarse(), "distribution is not defined on the coarse space");
    if (!(rate >= op.source().max_exit_rate()) || !(rate > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "uniformization rate must be positive and >= max |Q(x,x)|");
    }
    UniformizedBound r;
    r.rate = rate;
    if (t == 0.0 || g.is_constant()) {
        r.value = r.estimate = pi_hat.expectation(g);
        r.terms = 1;
        return r;
    }
    const auto pw = detail::poisson_weights(rate * t, tail_target);
    std::vector<double> h(g.values().begin(), g.values().end());
    std::vector<double> scratch(h.size());
    const double delta = 1.0 / rate;
    double sum = 0.0;
    double mass = 0.0;
    for (std::size_t k = 0; k < pw.weights.size(); ++k) {
        if (k > 0) op.skeleton_step(h, scratch, delta);
        sum += pw.weights[k] * detail::dot(pi_hat.mass(), h);
        mass += pw.weights[k];
    }
    r.terms = pw.weights.size();
    r.tail_bound = pw.tail_bound;
    r.value = sum + std::min(0.0, g.min()) * pw.tail_bound;
    r.estimate = sum / mass;
    return r;
}

/// Q_pi(xh, yh) = sum_{x in block(xh)} [pi(x) / pi(block(xh))] B(x, yh).
[[nodiscard]] inline RateMatrix lumped_rate_matrix(const RateMatrix& q, const LumpingMap& lumping, const Distribution& pi) {
    require_same_space(q.space(), lumping.fine(), "rate matrix and lumping use different fine spaces");
    require_same_space(pi.space(), lumping.fine(), "distribution is not defined on the fine space");
    if (!pi.is_positive()) {
        throw Error(ErrorKind::NonPositiveDistribution, "lumped rate matrix needs a strictly positive distribution");
    }
    const LowerRateOperator op(q, lumping);
    const auto& b = op.block_row_sums();
    const auto nh = static_cast<Eigen::Index>(lumping.coarse_size());
    Matrix out = Matrix::Zero(nh, nh);
    for (Eigen::Index xh = 0; xh < nh; ++xh) {
        const auto& block = lumping.block(static_cast<std::size_t>(xh));
        double total = 0.0;
        for (auto x : block) total += pi[x];
        for (auto x : block) {
            const double w = pi[x] / total;
            for (Eigen::Index yh = 0; yh < nh; ++yh) out(xh, yh) += w * b(static_cast<Eigen::Index>(x), yh);
        }
    }
    return validate_rate_matrix(out, lumping.coarse());
}

/// Raised when some Q_pi g falls below Q_lower g.
class EnvelopeViolationError : public Error {
public:
    EnvelopeViolationError(std::vector<double> witness_pi, std::size_t coarse_state, double q_pi_value,
                           double lower_value)
        : Error(ErrorKind::EnvelopeViolation,
                "[Q_pi g](" + std::to_string(coarse_state) + ") = " + std::to_string(q_pi_value) +
                    " is below [Q_lower g] = " + std::to_string(lower_value),
                coarse_state),
          pi_(std::move(witness_pi)), coarse_state_(coarse_state), q_pi_value_(q_pi_value),
          lower_value_(lower_value) {}

    [[nodiscard]] const std::vector<double>& witness_pi() const noexcept { return pi_; }
    [[nodiscard]] std::size_t coarse_state() const noexcept { return coarse_state_; }
    [[nodiscard]] double q_pi_value() const noexcept { return q_pi_value_; }
    [[nodiscard]] double lower_value() const noexcept { return lower_value_; }

private:
    std::vector<double> pi_;
    std::size_t coarse_state_;
    double q_pi_value_;
    double lower_value_;
};

struct EnvelopeReport {
    std::size_t samples = 0;
    std::size_t candidates = 0;
    double min_margin = std::numeric_limits<double>::infinity();  // min of [Q_pi g] - [Q_lower g]
    double attainment_gap = 0.0;  // max_xh (best candidate value - [Q_lower g](xh))
    double concentration = 0.0;   // n of the concentration sequence
    bool attained = false;        // attainment_gap <= attainment_tolerance
};

inline constexpr double envelope_dominance_slack = 1e-12;
inline constexpr double envelope_attainment_tolerance = 1e-6;

/// Samples positive pi, checks [Q_pi g] >= [Q_lower g] - 1e-12 everywhere, and
/// checks that concentration candidates (weight 1 - (m-1)/(m n) on one block
/// member) reach [Q_lower g] within 1e-6.
[[nodiscard]] inline EnvelopeReport envelope_check(const RateMatrix& q, const LumpingMap& lumping, const StateFunction& g,
                                                   std::size_t samples, std::uint64_t seed) {
    if (samples < 1) throw Error(ErrorKind::InvalidArgument, "envelope check needs at least one sample");
    const LowerRateOperator op(q, lumping);
    const auto lower = op.apply(g);
    const auto n = lumping.fine_size();
    const auto nh = lumping.coarse_size();

    EnvelopeReport report;
    auto check = [&](const std::vector<double>& pi, std::vector<double>* best) {
        const auto qpi = lumped_rate_matrix(q, lumping, Distribution(lumping.fine(), pi));
        const auto v = apply_rate(qpi, g);
        for (std::size_t xh = 0; xh < nh; ++xh) {
            const double margin = v[xh] - lower[xh];
            report.min_margin = std::min(report.min_margin, margin);
            if (margin < -envelope_dominance_slack) throw EnvelopeViolationError(pi, xh, v[xh], lower[xh]);
            if (best) (*best)[xh] = std::min((*best)[xh], v[xh]);
        }
    };

    std::vector<double> best(nh, std::numeric_limits<double>::infinity());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> draw(0.01, 1.0);
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<double> pi(n);
        double total = 0.0;
        for (auto& p : pi) total += (p = draw(rng));
        for (auto& p : pi) p /= total;
        check(pi, &best);
        ++report.samples;
    }

    // The in-block weights deviate from a vertex by at most 1/n, and the
    // per-state row values spread by at most 2 ||Q|| ||g||, so this n keeps the
    // candidate within the attainment tolerance.
    const double concentration = 1e6 * std::max(1.0, 2.0 * rate_matrix_norm(q) * g.max_abs());
    report.concentration = concentration;
    for (std::size_t xh = 0; xh < nh; ++xh) {
        const auto& block = lumping.block(xh);
        const auto m = static_cast<double>(block.size());
        for (auto star : block) {
            std::vector<double> pi(n);
            for (std::size_t b = 0; b < nh; ++b) {
                const auto& other = lumping.block(b);
                for (auto x : other) pi[x] = 1.0 / static_cast<double>(other.size());
            }
            if (block.size() > 1) {
                for (auto x : block) pi[x] = 1.0 / (m * concentration);
                pi[star] = 1.0 - (m - 1.0) / (m * concentration);
            }
            double total = 0.0;
            for (double p : pi) total += p;
            for (auto& p : pi) p /= total;
            check(pi, &best);
            ++report.candidates;
        }
    }
    for (std::size_t xh = 0; xh < nh; ++xh) {
        report.attainment_gap = std::max(report.attainment_gap, best[xh] - lower[xh]);
    }
    report.attained = report.attainment_gap <= envelope_attainment_tolerance;
    return report;
}

}  // namespace lumpbound
