#pragma once

// Exact finite-state CTMC primitives: state spaces, functions, distributions,
// rate matrices, uniformization, stationary solve and skeleton iteration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lumpbound/error.hpp"

namespace lumpbound {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ordered finite set of labelled states. Index i and labels()[i] are a fixed
/// bijection for the lifetime of the object.
class StateSpace {
public:
    explicit StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
        if (labels_.empty()) {
            throw Error(ErrorKind::InvalidArgument, "state space must contain at least one state");
        }
        index_.reserve(labels_.size());
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (!index_.emplace(labels_[i], i).second) {
                throw Error(ErrorKind::InvalidArgument, "duplicate state label '" + labels_[i] + "'", i);
            }
        }
    }

    [[nodiscard]] static std::shared_ptr<const StateSpace> make(std::vector<std::string> labels) {
        return std::make_shared<const StateSpace>(std::move(labels));
    }

    /// States labelled prefix0, prefix1, ...
    [[nodiscard]] static std::shared_ptr<const StateSpace> numbered(std::size_t n,
                                                                    const std::string& prefix = "s") {
        std::vector<std::string> labels;
        labels.reserve(n);
        for (std::size_t i = 0; i < n; ++i) labels.push_back(prefix + std::to_string(i));
        return make(std::move(labels));
    }

    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
    [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }
    [[nodiscard]] const std::string& label(std::size_t i) const { return labels_.at(i); }

    [[nodiscard]] std::optional<std::size_t> index_of(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    friend bool operator==(const StateSpace& a, const StateSpace& b) { return a.labels_ == b.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

using SpacePtr = std::shared_ptr<const StateSpace>;

[[nodiscard]] inline bool same_space(const SpacePtr& a, const SpacePtr& b) {
    return a == b || (a && b && *a == *b);
}

inline void require_same_space(const SpacePtr& a, const SpacePtr& b, const char* what) {
    if (!same_space(a, b)) throw Error(ErrorKind::SpaceMismatch, what);
}

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw Error(ErrorKind::NonFinite, std::string(what) + " has a non-finite entry", i);
        }
    }
}

inline double min_of(std::span<const double> v) { return *std::min_element(v.begin(), v.end()); }
inline double max_of(std::span<const double> v) { return *std::max_element(v.begin(), v.end()); }

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline bool is_constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace detail

/// Real-valued function on a state space.
class StateFunction {
public:
    StateFunction(SpacePtr space, std::vector<double> values)
        : space_(std::move(space)), values_(std::move(values)) {
        if (!space_) throw Error(ErrorKind::InvalidArgument, "state function needs a state space");
        if (values_.size() != space_->size()) {
            throw Error(ErrorKind::InvalidArgument, "state function length " + std::to_string(values_.size()) +
                                                        " does not match state space size " +
                                                        std::to_string(space_->size()));
        }
        detail::require_finite(values_, "state function");
    }

    [[nodiscard]] static StateFunction constant(SpacePtr space, double c) {
        const auto n = space->size();
        return {std::move(space), std::vector<double>(n, c)};
    }

    [[nodiscard]] static StateFunction indicator(SpacePtr space, std::size_t state) {
        std::vector<double> v(space->size(), 0.0);
        v.at(state) = 1.0;
        return {std::move(space), std::move(v)};
    }

    [[nodiscard]] const SpacePtr& space() const noexcept { return space_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }

    [[nodiscard]] double min() const { return detail::min_of(values_); }
    [[nodiscard]] double max() const { return detail::max_of(values_); }
    [[nodiscard]] double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }
    [[nodiscard]] bool is_constant() const { return detail::is_constant(values_); }

    [[nodiscard]] StateFunction operator-() const {
        std::vector<double> v(values_.size());
        std::transform(values_.begin(), values_.end(), v.begin(), [](double x) { return -x; });
        return {space_, std::move(v)};
    }

    /// a*f + b, componentwise.
    [[nodiscard]] StateFunction affine(double a, double b) const {
        std::vector<double> v(values_.size());
        std::transform(values_.begin(), values_.end(), v.begin(), [&](double x) { return a * x + b; });
        return {space_, std::move(v)};
    }

    friend bool operator==(const StateFunction& a, const StateFunction& b) {
        return same_space(a.space_, b.space_) && a.values_ == b.values_;
    }

private:
    SpacePtr space_;
    std::vector<double> values_;
};

/// Probability distribution on a state space.
class Distribution {
public:
    static constexpr double sum_tolerance = 1e-12;

    Distribution(SpacePtr space, std::vector<double> mass) : space_(std::move(space)), mass_(std::move(mass)) {
        if (!space_) throw Error(ErrorKind::InvalidArgument, "distribution needs a state space");
        if (mass_.size() != space_->size()) {
            throw Error(ErrorKind::InvalidDistribution, "distribution length does not match state space size");
        }
        detail::require_finite(mass_, "distribution");
        double total = 0.0;
        for (std::size_t i = 0; i < mass_.size(); ++i) {
            if (mass_[i] < 0.0) {
                throw Error(ErrorKind::InvalidDistribution, "negative probability mass", i);
            }
            total += mass_[i];
        }
        if (std::abs(total - 1.0) > sum_tolerance) {
            throw Error(ErrorKind::InvalidDistribution,
                        "probability mass sums to " + std::to_string(total) + ", expected 1");
        }
    }

    [[nodiscard]] static Distribution uniform(SpacePtr space) {
        const auto n = space->size();
        return {std::move(space), std::vector<double>(n, 1.0 / static_cast<double>(n))};
    }

    [[nodiscard]] const SpacePtr& space() const noexcept { return space_; }
    [[nodiscard]] std::size_t size() const noexcept { return mass_.size(); }
    [[nodiscard]] std::span<const double> mass() const noexcept { return mass_; }
    [[nodiscard]] double operator[](std::size_t i) const { return mass_[i]; }

    [[nodiscard]] bool is_positive() const {
        return std::all_of(mass_.begin(), mass_.end(), [](double p) { return p > 0.0; });
    }

    [[nodiscard]] double expectation(const StateFunction& f) const {
        require_same_space(space_, f.space(), "distribution and function live on different state spaces");
        return detail::dot(mass_, f.values());
    }

private:
    SpacePtr space_;
    std::vector<double> mass_;
};

/// Mixes `pi` with the uniform distribution at `weight`, making every entry
/// strictly positive. Returns the smoothed distribution and the sup-norm size
/// of the perturbation.
[[nodiscard]] inline std::pair<Distribution, double> smooth_distribution(const Distribution& pi,
                                                                         double weight = 1e-9) {
    if (!(weight > 0.0 && weight < 1.0)) throw Error(ErrorKind::InvalidArgument, "smoothing weight must be in (0,1)");
    const auto n = static_cast<double>(pi.size());
    std::vector<double> mixed(pi.size());
    double perturbation = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        mixed[i] = (1.0 - weight) * pi[i] + weight / n;
        perturbation = std::max(perturbation, std::abs(mixed[i] - pi[i]));
    }
    return {Distribution(pi.space(), std::move(mixed)), perturbation};
}

class RateMatrix;
RateMatrix validate_rate_matrix(const Matrix& raw, SpacePtr space);

/// Transition rate matrix: off-diagonal entries >= 0, rows summing to zero.
/// Only obtainable through validate_rate_matrix, so every instance is valid.
class RateMatrix {
public:
    [[nodiscard]] const SpacePtr& space() const noexcept { return space_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
    [[nodiscard]] const Matrix& entries() const noexcept { return entries_; }
    [[nodiscard]] double operator()(std::size_t x, std::size_t y) const {
        return entries_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    }

    /// max over x of |Q(x,x)|
    [[nodiscard]] double max_exit_rate() const {
        double m = 0.0;
        for (Eigen::Index i = 0; i < entries_.rows(); ++i) m = std::max(m, std::abs(entries_(i, i)));
        return m;
    }

    friend bool operator==(const RateMatrix& a, const RateMatrix& b) {
        return same_space(a.space_, b.space_) && a.entries_ == b.entries_;
    }

private:
    RateMatrix(SpacePtr space, Matrix entries) : space_(std::move(space)), entries_(std::move(entries)) {}
    friend RateMatrix validate_rate_matrix(const Matrix& raw, SpacePtr space);

    SpacePtr space_;
    Matrix entries_;
};

/// Validates a raw generator. Off-diagonals in [-1e-12, 0) are clamped to 0;
/// the diagonal is replaced by the negative off-diagonal row sum so that the
/// stored rows sum to zero in the library's fixed summation order.
inline RateMatrix validate_rate_matrix(const Matrix& raw, SpacePtr space) {
    constexpr double negative_slack = 1e-12;
    constexpr double row_sum_rel_tol = 1e-9;
    if (!space) throw Error(ErrorKind::InvalidArgument, "rate matrix needs a state space");
    const auto n = static_cast<Eigen::Index>(space->size());
    if (raw.rows() != n || raw.cols() != n) {
        throw Error(ErrorKind::InvalidArgument, "rate matrix must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    Matrix q = raw;
    for (Eigen::Index x = 0; x < n; ++x) {
        double row_sum = 0.0;
        double magnitude = 0.0;
        for (Eigen::Index y = 0; y < n; ++y) {
            const double v = q(x, y);
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::NonFinite, "rate matrix has a non-finite entry", static_cast<std::size_t>(x),
                            static_cast<std::size_t>(y));
            }
            if (x != y && v < 0.0) {
                if (v < -negative_slack) {
                    throw Error(ErrorKind::NegativeOffDiagonal,
                                "negative off-diagonal rate at (" + std::to_string(x) + "," + std::to_string(y) + ")",
                                static_cast<std::size_t>(x), static_cast<std::size_t>(y));
                }
                q(x, y) = 0.0;
            }
            row_sum += v;
            magnitude = std::max(magnitude, std::abs(v));
        }
        if (std::abs(row_sum) > row_sum_rel_tol * std::max(1.0, magnitude)) {
            throw Error(ErrorKind::RowSumViolation,
                        "row " + std::to_string(x) + " sums to " + std::to_string(row_sum),
                        static_cast<std::size_t>(x));
        }
        double off = 0.0;
        for (Eigen::Index y = 0; y < n; ++y) {
            if (y != x) off += q(x, y);
        }
        q(x, x) = -off;
    }
    return RateMatrix(std::move(space), std::move(q));
}

[[nodiscard]] inline RateMatrix validate_rate_matrix(const std::vector<std::vector<double>>& rows, SpacePtr space) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix raw(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n) {
            throw Error(ErrorKind::InvalidArgument, "rate matrix must be square");
        }
        for (Eigen::Index j = 0; j < n; ++j) raw(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return validate_rate_matrix(raw, std::move(space));
}

/// ||Q|| = 2 max |Q(x,x)|, the operator norm induced by the sup norm.
[[nodiscard]] inline double rate_matrix_norm(const RateMatrix& q) { return 2.0 * q.max_exit_rate(); }

/// [Q g](x) evaluated as sum_{y != x} Q(x,y) (g(y) - g(x)), which equals
/// sum_y Q(x,y) g(y) because rows sum to zero and is exactly 0 on constants.
inline void apply_rate_into(const RateMatrix& q, std::span<const double> g, std::span<double> out) {
    const auto& m = q.entries();
    const auto n = m.rows();
    for (Eigen::Index x = 0; x < n; ++x) {
        const double gx = g[static_cast<std::size_t>(x)];
        double s = 0.0;
        for (Eigen::Index y = 0; y < n; ++y) {
            if (y != x) s += m(x, y) * (g[static_cast<std::size_t>(y)] - gx);
        }
        out[static_cast<std::size_t>(x)] = s;
    }
}

[[nodiscard]] inline StateFunction apply_rate(const RateMatrix& q, const StateFunction& g) {
    require_same_space(q.space(), g.space(), "rate matrix and function live on different state spaces");
    std::vector<double> out(g.size());
    apply_rate_into(q, g.values(), out);
    return {g.space(), std::move(out)};
}

/// Transition matrix with a sup-norm error budget.
class TransitionMatrix {
public:
    TransitionMatrix(SpacePtr space, Matrix entries, double error_budget)
        : space_(std::move(space)), entries_(std::move(entries)), error_budget_(error_budget) {}

    [[nodiscard]] const SpacePtr& space() const noexcept { return space_; }
    [[nodiscard]] const Matrix& entries() const noexcept { return entries_; }
    [[nodiscard]] double error_budget() const noexcept { return error_budget_; }
    [[nodiscard]] double operator()(std::size_t x, std::size_t y) const {
        return entries_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    }

private:
    SpacePtr space_;
    Matrix entries_;
    double error_budget_;
};

namespace detail {

/// Truncated Poisson(lambda) weights w_0..w_K together with a rigorous upper
/// bound on the omitted mass sum_{k>K} w_k (geometric majorant of the tail,
/// valid once K + 2 > lambda).
struct PoissonWeights {
    std::vector<double> weights;
    double tail_bound = 0.0;
};

inline PoissonWeights poisson_weights(double lambda, double tail_target) {
    PoissonWeights out;
    if (lambda <= 0.0) {
        out.weights = {1.0};
        return out;
    }
    const double log_lambda = std::log(lambda);
    auto weight = [&](std::size_t k) {
        const auto kd = static_cast<double>(k);
        return std::exp(kd * log_lambda - lambda - std::lgamma(kd + 1.0));
    };
    for (std::size_t k = 0;; ++k) {
        out.weights.push_back(weight(k));
        const auto next = static_cast<double>(k + 2);
        if (next > lambda) {
            const double bound = weight(k + 1) / (1.0 - lambda / next);
            if (bound <= tail_target) {
                out.tail_bound = bound;
                return out;
            }
        }
    }
}

/// Strong connectivity of a directed graph on n nodes given by `edge(x, y)`.
template <typename EdgePredicate>
bool strongly_connected(std::size_t n, EdgePredicate&& edge) {
    auto reaches_all = [&](bool reversed) {
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            const auto x = stack.back();
            stack.pop_back();
            for (std::size_t y = 0; y < n; ++y) {
                if (seen[y] || y == x) continue;
                if (reversed ? edge(y, x) : edge(x, y)) {
                    seen[y] = 1;
                    ++count;
                    stack.push_back(y);
                }
            }
        }
        return count == n;
    };
    return reaches_all(false) && reaches_all(true);
}

}  // namespace detail

/// e^{tQ} by uniformization, sup-norm error <= eps.
[[nodiscard]] inline TransitionMatrix transition_matrix(const RateMatrix& q, double t, double eps) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "time must be finite and >= 0");
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be > 0");
    const auto n = static_cast<Eigen::Index>(q.size());
    const double rate = q.max_exit_rate();
    if (t == 0.0 || rate == 0.0) return {q.space(), Matrix::Identity(n, n), 0.0};

    const Matrix p = Matrix::Identity(n, n) + q.entries() / rate;
    const auto pw = detail::poisson_weights(rate * t, eps);
    Matrix power = Matrix::Identity(n, n);
    Matrix sum = pw.weights[0] * power;
    for (std::size_t k = 1; k < pw.weights.size(); ++k) {
        power = power * p;
        sum += pw.weights[k] * power;
    }
    return {q.space(), std::move(sum), eps};
}

/// pi0 T_t f by uniformization on the vector T_t f; |error| <= eps * ||f||.
[[nodiscard]] inline double marginal_expectation(const Distribution& pi0, const RateMatrix& q, const StateFunction& f,
                                                 double t, double eps) {
    require_same_space(pi0.space(), q.space(), "distribution and rate matrix live on different state spaces");
    require_same_space(f.space(), q.space(), "function and rate matrix live on different state spaces");
    if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "time must be finite and >= 0");
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be > 0");
    if (f.is_constant()) return f[0];
    const double rate = q.max_exit_rate();
    if (t == 0.0 || rate == 0.0) return pi0.expectation(f);

    const auto pw = detail::poisson_weights(rate * t, eps);
    std::vector<double> u(f.values().begin(), f.values().end());
    std::vector<double> qu(u.size());
    double result = pw.weights[0] * detail::dot(pi0.mass(), u);
    for (std::size_t k = 1; k < pw.weights.size(); ++k) {
        apply_rate_into(q, u, qu);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += qu[i] / rate;
        result += pw.weights[k] * detail::dot(pi0.mass(), u);
    }
    return result;
}

/// True iff every state is accessible from every other state.
[[nodiscard]] inline bool is_irreducible(const RateMatrix& q) {
    return detail::strongly_connected(q.size(), [&](std::size_t x, std::size_t y) { return q(x, y) > 0.0; });
}

/// Unique pi with pi Q = 0 and sum pi = 1, via a dense solve in which the
/// last balance equation is replaced by the normalization.
[[nodiscard]] inline Distribution stationary_distribution(const RateMatrix& q) {
    if (!is_irreducible(q)) throw Error(ErrorKind::NotIrreducible, "stationary distribution needs an irreducible Q");
    const auto n = static_cast<Eigen::Index>(q.size());
    if (n == 1) return {q.space(), {1.0}};

    Eigen::MatrixXd a = q.entries().transpose();
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    Eigen::VectorXd pi = lu.solve(b);
    pi += lu.solve(b - a * pi);  // one step of iterative refinement

    const double scale = std::max(1.0, rate_matrix_norm(q));
    std::vector<double> mass(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (pi(i) < -1e-12) {
            throw Error(ErrorKind::InvalidDistribution, "stationary solve produced a negative probability",
                        static_cast<std::size_t>(i));
        }
        mass[static_cast<std::size_t>(i)] = std::max(pi(i), 0.0);
    }
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    for (auto& m : mass) m /= total;

    const Eigen::Map<const Eigen::RowVectorXd> row(mass.data(), n);
    const double residual = (row * q.entries()).cwiseAbs().maxCoeff();
    if (residual > 1e-10 * scale) {
        throw Error(ErrorKind::InvalidDistribution,
                    "stationary residual " + std::to_string(residual) + " exceeds 1e-10*||Q||");
    }
    return {q.space(), std::move(mass)};
}

/// Outcome of iterating g <- (I + delta Q) g.
struct SkeletonResult {
    double value = 0.0;           // min g at termination (lower bound on pi_inf f)
    double upper = 0.0;           // max g at termination
    std::size_t iterations = 0;
    bool converged = false;
    double gap = 0.0;             // max g - min g
    double max_decrease = 0.0;    // largest observed drop of min g (0 when monotone)
};

/// Power iteration of the precise skeleton I + delta Q. The min-sequence is
/// non-decreasing and converges to pi_inf f. Stops once min g has risen by
/// less than tol for 10 consecutive iterations and max g - min g < tol.
[[nodiscard]] inline SkeletonResult skeleton_limit_oracle(const RateMatrix& q, const StateFunction& f, double delta,
                                                          double tol, std::size_t max_iter) {
    require_same_space(q.space(), f.space(), "rate matrix and function live on different state spaces");
    if (!(delta > 0.0)) throw Error(ErrorKind::InvalidArgument, "delta must be > 0");
    if (!(delta * rate_matrix_norm(q) < 2.0)) {
        throw Error(ErrorKind::DeltaTooLarge, "delta * ||Q|| must be < 2");
    }
    if (!is_irreducible(q)) throw Error(ErrorKind::NotIrreducible, "skeleton oracle needs an irreducible Q");

    std::vector<double> g(f.values().begin(), f.values().end());
    std::vector<double> qg(g.size());
    SkeletonResult r;
    double lo = detail::min_of(g);
    double hi = detail::max_of(g);
    if (lo == hi) return {lo, hi, 0, true, 0.0, 0.0};

    std::size_t stalled = 0;
    while (r.iterations < max_iter) {
        apply_rate_into(q, g, qg);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta * qg[i];
        ++r.iterations;
        const double new_lo = detail::min_of(g);
        hi = detail::max_of(g);
        r.max_decrease = std::max(r.max_decrease, lo - new_lo);
        stalled = (new_lo - lo < tol) ? stalled + 1 : 0;
        lo = new_lo;
        if (stalled >= 10 && hi - lo < tol) {
            r.converged = true;
            break;
        }
    }
    r.value = lo;
    r.upper = hi;
    r.gap = hi - lo;
    return r;
}

}  // namespace lumpbound
