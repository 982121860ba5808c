#pragma once

// Guaranteed bounds on marginal and limit expectations of a large CTMC,
// computed on the lumped state space, plus oracle-backed bracketing checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lumpbound/chain.hpp"
#include "lumpbound/imprecise.hpp"
#include "lumpbound/lumping.hpp"

namespace lumpbound {

enum class BoundKind { marginal, limit };

[[nodiscard]] inline std::string_view to_string(BoundKind k) { return k == BoundKind::marginal ? "marginal" : "limit"; }

/// Lower/upper bound pair with the diagnostics of the run that produced it.
struct BoundResult {
    double lower = 0.0;
    double upper = 0.0;
    BoundKind kind = BoundKind::marginal;

    /// Un-widened values: pi_hat h for marginal runs (before subtracting the
    /// error budget), equal to lower/upper for limit runs.
    double lower_estimate = 0.0;
    double upper_estimate = 0.0;

    std::size_t steps = 0;          // marginal: grid steps or Poisson terms; limit: iterations (max of both runs)
    double error_budget = 0.0;
    double convergence_gap = 0.0;   // limit only: max g - min g at termination
    double delta = 0.0;             // limit only
    double time_horizon = 0.0;      // marginal only
    bool converged = true;
    std::string method;             // "exact", "grid", "uniformized", "skeleton"
    double max_decrease = 0.0;      // largest drop of a recorded min-sequence
    double initial_perturbation = 0.0;

    std::vector<double> lower_trace;  // min g_n from f_hat_L, when tracing
    std::vector<double> upper_trace;  // -min g_n from -f_hat_U, when tracing

    [[nodiscard]] double width() const { return upper - lower; }
};

/// A positive, irreducible CTMC together with a lumping of its state space.
class LumpedModel {
public:
    LumpedModel(RateMatrix q, Distribution pi0, LumpingMap lumping)
        : op_(validated(q, pi0, lumping)), pi0_(std::move(pi0)), pi0_hat_(lump_distribution(pi0_, op_.lumping())) {}

    /// Builds a model from a possibly non-positive initial distribution by
    /// mixing it with the uniform distribution at `weight`.
    [[nodiscard]] static LumpedModel with_smoothed_initial(RateMatrix q, const Distribution& pi0, LumpingMap lumping,
                                                           double weight = 1e-9) {
        auto [smoothed, perturbation] = smooth_distribution(pi0, weight);
        LumpedModel m(std::move(q), std::move(smoothed), std::move(lumping));
        m.perturbation_ = perturbation;
        return m;
    }

    [[nodiscard]] const RateMatrix& rates() const noexcept { return op_.source(); }
    [[nodiscard]] const LumpingMap& lumping() const noexcept { return op_.lumping(); }
    [[nodiscard]] const Distribution& initial() const noexcept { return pi0_; }
    [[nodiscard]] const Distribution& lumped_initial() const noexcept { return pi0_hat_; }
    [[nodiscard]] const LowerRateOperator& lower_operator() const noexcept { return op_; }
    [[nodiscard]] double initial_perturbation() const noexcept { return perturbation_; }

private:
    static LowerRateOperator validated(const RateMatrix& q, const Distribution& pi0, const LumpingMap& lumping) {
        require_same_space(q.space(), pi0.space(), "initial distribution and rate matrix use different spaces");
        if (!is_irreducible(q)) throw Error(ErrorKind::NotIrreducible, "the rate matrix is not irreducible");
        if (!pi0.is_positive()) {
            throw Error(ErrorKind::NonPositiveDistribution, "the initial distribution must be strictly positive");
        }
        return {q, lumping};
    }

    LowerRateOperator op_;
    Distribution pi0_;
    Distribution pi0_hat_;
    double perturbation_ = 0.0;
};

enum class MarginalMethod {
    automatic,    // grid when it fits in `uniformization_work`, else uniformized
    grid,         // certified uniform grid for the lower transition operator
    uniformized,  // Poisson-mixture lower bound
};

struct MarginalSettings {
    double eps = 1e-6;
    MarginalMethod method = MarginalMethod::automatic;
    /// Forces the grid route to this many steps; the reported budget is then
    /// the certified bound t^2 ||Q_lower||^2 max(||g||,1) / n.
    std::optional<std::size_t> grid_steps;
    double operation_cap = default_operation_cap;
    /// Work (steps * N * N-hat) spent on the uniformized route; the
    /// uniformization rate is raised to use it.
    double uniformization_work = 1e6;
    std::optional<double> uniformization_rate;
};

namespace detail {

struct OneSided {
    double bound = 0.0;
    double estimate = 0.0;
    std::size_t steps = 0;
    double budget = 0.0;
};

// Lower bound on pi_hat T_lower_t g via the certified grid.
inline OneSided grid_side(const LumpedModel& m, const StateFunction& g, double t, const MarginalSettings& s) {
    const auto& op = m.lower_operator();
    const auto& pi = m.lumped_initial();
    if (s.grid_steps) {
        const double norm = lower_rate_norm(op).lower_op_norm;
        const auto n = std::max<std::size_t>(*s.grid_steps, 1);
        const auto h = lower_transition_euler(op, g, t, n);
        const double budget = (t == 0.0 || g.is_constant() || norm == 0.0)
                                  ? 0.0
                                  : t * t * norm * norm * std::max(g.max_abs(), 1.0) / static_cast<double>(n);
        const double est = pi.expectation(h);
        return {est - budget, est, n, budget};
    }
    const auto r = lower_transition_apply(op, g, t, s.eps, s.operation_cap);
    const double est = pi.expectation(r.values);
    return {est - r.error_budget, est, r.steps, r.error_budget};
}

inline double uniformization_rate_for(const LumpedModel& m, double t, const MarginalSettings& s) {
    const double base = m.rates().max_exit_rate();
    if (s.uniformization_rate) return std::max(*s.uniformization_rate, base);
    const double per_step = static_cast<double>(m.lumping().fine_size() * m.lumping().coarse_size());
    return std::max(base, s.uniformization_work / (per_step * std::max(t, 1e-300)));
}

inline OneSided uniformized_side(const LumpedModel& m, const StateFunction& g, double t, double rate,
                                 const MarginalSettings& s) {
    const double tail_target = s.eps / std::max(1.0, 2.0 * g.max_abs());
    const auto r = uniformized_lower_bound(m.lower_operator(), m.lumped_initial(), g, t, rate, tail_target);
    const double budget = (t == 0.0 || g.is_constant()) ? 0.0 : s.eps;
    return {r.value, r.estimate, r.terms, budget};
}

}  // namespace detail

/// Bounds [lower, upper] on E f(X_t) = pi0 T_t f. f need not be lumpable: the
/// block-wise min and max envelopes of f are propagated instead.
[[nodiscard]] inline BoundResult marginal_bounds(const LumpedModel& m, const StateFunction& f, double t,
                                                 const MarginalSettings& settings = {}) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "time must be finite and >= 0");
    if (!(settings.eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be > 0");
    const auto pair = lump_function_bounds(f, m.lumping());
    const auto neg_upper = -pair.upper;

    BoundResult r;
    r.kind = BoundKind::marginal;
    r.time_horizon = t;
    r.initial_perturbation = m.initial_perturbation();

    if (t == 0.0) {
        r.lower = r.lower_estimate = m.lumped_initial().expectation(pair.lower);
        r.upper = r.upper_estimate = m.lumped_initial().expectation(pair.upper);
        r.method = "exact";
        return r;
    }

    auto method = settings.method;
    if (settings.grid_steps) method = MarginalMethod::grid;
    const double rate = detail::uniformization_rate_for(m, t, settings);
    if (method == MarginalMethod::automatic) {
        const double norm = lower_rate_norm(m.lower_operator()).lower_op_norm;
        const double g_norm = std::max(pair.lower.max_abs(), pair.upper.max_abs());
        const double work = lower_transition_step_count(t, norm, g_norm, settings.eps) *
                            static_cast<double>(m.lumping().fine_size() * m.lumping().coarse_size());
        const double allowance = std::min(settings.operation_cap, settings.uniformization_work);
        method = work <= allowance ? MarginalMethod::grid : MarginalMethod::uniformized;
    }

    detail::OneSided lo;
    detail::OneSided hi;
    if (method == MarginalMethod::grid) {
        lo = detail::grid_side(m, pair.lower, t, settings);
        hi = detail::grid_side(m, neg_upper, t, settings);
        r.method = "grid";
    } else {
        lo = detail::uniformized_side(m, pair.lower, t, rate, settings);
        hi = detail::uniformized_side(m, neg_upper, t, rate, settings);
        r.method = "uniformized";
    }
    r.lower = lo.bound;
    r.upper = -hi.bound;
    r.lower_estimate = lo.estimate;
    r.upper_estimate = -hi.estimate;
    r.steps = std::max(lo.steps, hi.steps);
    r.error_budget = std::max(lo.budget, hi.budget);
    return r;
}

struct LimitSettings {
    std::optional<double> delta;  // default 0.1 / max |Q(x,x)|
    double tol = 1e-10;
    std::size_t max_iter = 1'000'000;
    bool trace = false;
};

[[nodiscard]] inline double default_delta(const RateMatrix& q) {
    const double rate = q.max_exit_rate();
    return rate > 0.0 ? 0.1 / rate : 1.0;
}

namespace detail {

struct SkeletonRun {
    double min_value = 0.0;
    double gap = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double max_decrease = 0.0;
    std::vector<double> trace;
};

// g <- g + delta Q_lower g until min g stalls (rise < tol for 10 consecutive
// iterations) and max g - min g < max(sqrt(tol), 1e-6).
inline SkeletonRun run_skeleton(const LowerRateOperator& op, const StateFunction& start, double delta,
                                const LimitSettings& s) {
    SkeletonRun run;
    std::vector<double> g(start.values().begin(), start.values().end());
    std::vector<double> scratch(g.size());
    double lo = detail::min_of(g);
    double hi = detail::max_of(g);
    if (s.trace) run.trace.push_back(lo);
    if (lo == hi) return {lo, 0.0, 0, true, 0.0, std::move(run.trace)};

    const double gap_threshold = std::max(std::sqrt(s.tol), 1e-6);
    std::size_t stalled = 0;
    while (run.iterations < s.max_iter) {
        op.skeleton_step(g, scratch, delta);
        ++run.iterations;
        const double new_lo = detail::min_of(g);
        hi = detail::max_of(g);
        run.max_decrease = std::max(run.max_decrease, lo - new_lo);
        stalled = (new_lo - lo < s.tol) ? stalled + 1 : 0;
        lo = new_lo;
        if (s.trace) run.trace.push_back(lo);
        if (stalled >= 10 && hi - lo < gap_threshold) {
            run.converged = true;
            break;
        }
    }
    run.min_value = lo;
    run.gap = hi - lo;
    return run;
}

}  // namespace detail

/// Bounds on the limit expectation pi_inf f from the skeleton iteration on the
/// lumped space. Valid at every iteration count, so an unconverged run still
/// returns bounds (flagged converged = false).
[[nodiscard]] inline BoundResult limit_bounds(const LumpedModel& m, const StateFunction& f,
                                              const LimitSettings& settings = {}) {
    const double delta = settings.delta.value_or(default_delta(m.rates()));
    if (!(delta > 0.0)) throw Error(ErrorKind::InvalidArgument, "delta must be > 0");
    if (!(delta * m.rates().max_exit_rate() < 1.0)) {
        throw Error(ErrorKind::DeltaTooLarge, "delta * max |Q(x,x)| must be < 1 (delta = " + std::to_string(delta) + ")");
    }
    const auto pair = lump_function_bounds(f, m.lumping());
    const auto lo = detail::run_skeleton(m.lower_operator(), pair.lower, delta, settings);
    auto hi = detail::run_skeleton(m.lower_operator(), -pair.upper, delta, settings);

    BoundResult r;
    r.kind = BoundKind::limit;
    r.method = "skeleton";
    r.delta = delta;
    r.lower = r.lower_estimate = lo.min_value;
    r.upper = r.upper_estimate = -hi.min_value;
    r.steps = std::max(lo.iterations, hi.iterations);
    r.converged = lo.converged && hi.converged;
    r.convergence_gap = std::max(lo.gap, hi.gap);
    r.max_decrease = std::max(lo.max_decrease, hi.max_decrease);
    r.initial_perturbation = m.initial_perturbation();
    if (settings.trace) {
        r.lower_trace = lo.trace;
        r.upper_trace.reserve(hi.trace.size());
        for (double v : hi.trace) r.upper_trace.push_back(-v);
    }
    return r;
}

/// One limit_bounds run per delta.
[[nodiscard]] inline std::vector<BoundResult> delta_sweep(const LumpedModel& m, const StateFunction& f,
                                                          const std::vector<double>& deltas, double tol,
                                                          std::size_t max_iter) {
    std::vector<BoundResult> rows;
    rows.reserve(deltas.size());
    for (double d : deltas) rows.push_back(limit_bounds(m, f, LimitSettings{d, tol, max_iter, false}));
    return rows;
}

struct VerifySettings {
    MarginalSettings marginal;
    LimitSettings limit;
    double oracle_eps = 1e-10;     // uniformization accuracy of the exact marginal value
    double limit_slack = 1e-8;     // allowance on the stationary-solve value
    std::size_t marginal_cap = 2000;
    std::size_t stationary_cap = 500;
};

struct VerificationReport {
    BoundResult bounds;
    double exact = 0.0;
    double slack = 0.0;
    bool pass = false;
};

/// Computes the exact value with the chain_core oracles and checks that the
/// bounds bracket it: lower - slack <= exact <= upper + slack.
[[nodiscard]] inline VerificationReport verify_bracketing(const LumpedModel& m, const StateFunction& f, BoundKind mode,
                                                          double t, const VerifySettings& s = {}) {
    const auto n = m.rates().size();
    VerificationReport rep;
    if (mode == BoundKind::marginal) {
        if (n > s.marginal_cap) {
            throw Error(ErrorKind::OracleCapExceeded, std::to_string(n) + " states exceed the marginal oracle cap " +
                                                          std::to_string(s.marginal_cap));
        }
        rep.bounds = marginal_bounds(m, f, t, s.marginal);
        rep.exact = marginal_expectation(m.initial(), m.rates(), f, t, s.oracle_eps);
        rep.slack = rep.bounds.error_budget + s.oracle_eps * std::max(1.0, f.max_abs());
    } else {
        if (n > s.stationary_cap) {
            throw Error(ErrorKind::OracleCapExceeded, std::to_string(n) + " states exceed the stationary oracle cap " +
                                                          std::to_string(s.stationary_cap));
        }
        rep.bounds = limit_bounds(m, f, s.limit);
        rep.exact = stationary_distribution(m.rates()).expectation(f);
        rep.slack = rep.bounds.error_budget + s.limit_slack;
    }
    rep.pass = rep.bounds.lower - rep.slack <= rep.exact && rep.exact <= rep.bounds.upper + rep.slack;
    return rep;
}

}  // namespace lumpbound
