#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lumpbound/chain.hpp"

namespace lumpbound {

/// Surjective map from fine states onto coarse states, with the inverse
/// blocks precomputed. Coarse states are ordered by first appearance in the
/// fine-state order.
class LumpingMap {
public:
    /// assignment[x] is the coarse index of fine state x.
    LumpingMap(SpacePtr fine, SpacePtr coarse, std::vector<std::size_t> assignment)
        : fine_(std::move(fine)), coarse_(std::move(coarse)), assignment_(std::move(assignment)) {
        if (!fine_ || !coarse_) throw Error(ErrorKind::InvalidArgument, "lumping needs fine and coarse spaces");
        if (assignment_.size() != fine_->size()) {
            throw Error(ErrorKind::InvalidArgument, "assignment length does not match the fine space");
        }
        blocks_.resize(coarse_->size());
        for (std::size_t x = 0; x < assignment_.size(); ++x) {
            if (assignment_[x] >= coarse_->size()) {
                throw Error(ErrorKind::InvalidArgument, "assignment points outside the coarse space", x);
            }
            blocks_[assignment_[x]].push_back(x);
        }
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            if (blocks_[b].empty()) {
                throw Error(ErrorKind::InvalidArgument, "lumping is not surjective: coarse state '" +
                                                            coarse_->label(b) + "' has no fine states", b);
            }
        }
    }

    [[nodiscard]] static LumpingMap identity(const SpacePtr& space) {
        std::vector<std::size_t> a(space->size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = i;
        return {space, space, std::move(a)};
    }

    [[nodiscard]] const SpacePtr& fine() const noexcept { return fine_; }
    [[nodiscard]] const SpacePtr& coarse() const noexcept { return coarse_; }
    [[nodiscard]] std::size_t fine_size() const noexcept { return fine_->size(); }
    [[nodiscard]] std::size_t coarse_size() const noexcept { return coarse_->size(); }
    [[nodiscard]] const std::vector<std::size_t>& assignment() const noexcept { return assignment_; }
    [[nodiscard]] std::size_t operator()(std::size_t x) const { return assignment_.at(x); }
    [[nodiscard]] const std::vector<std::vector<std::size_t>>& blocks() const noexcept { return blocks_; }
    [[nodiscard]] const std::vector<std::size_t>& block(std::size_t coarse_state) const {
        return blocks_.at(coarse_state);
    }
    [[nodiscard]] bool is_identity() const noexcept { return coarse_size() == fine_size(); }

private:
    SpacePtr fine_;
    SpacePtr coarse_;
    std::vector<std::size_t> assignment_;
    std::vector<std::vector<std::size_t>> blocks_;
};

/// Builds a lumping from per-fine-state coarse labels, listed in fine order.
[[nodiscard]] inline LumpingMap build_lumping(const std::vector<std::string>& coarse_labels, const SpacePtr& fine) {
    if (!fine || fine->size() == 0) throw Error(ErrorKind::EmptyCoarseSpace, "empty fine state space");
    if (coarse_labels.size() != fine->size()) {
        const auto missing = std::min(coarse_labels.size(), fine->size() - 1);
        throw Error(ErrorKind::MissingAssignment, "no coarse label for fine state '" + fine->label(missing) + "'",
                    missing);
    }
    std::vector<std::string> order;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::size_t> assignment(fine->size());
    for (std::size_t x = 0; x < coarse_labels.size(); ++x) {
        auto [it, inserted] = index.emplace(coarse_labels[x], order.size());
        if (inserted) order.push_back(coarse_labels[x]);
        assignment[x] = it->second;
    }
    if (order.empty()) throw Error(ErrorKind::EmptyCoarseSpace, "lumping has no coarse states");
    if (order.size() == 1 && fine->size() > 1) {
        warn("lumping maps every state onto a single coarse state");
    } else if (order.size() == fine->size() && fine->size() > 1) {
        warn("lumping is one-to-one; the lumped chain is the original chain");
    }
    return {fine, StateSpace::make(std::move(order)), std::move(assignment)};
}

/// Builds a lumping from a fine-label to coarse-label mapping.
[[nodiscard]] inline LumpingMap build_lumping(const std::map<std::string, std::string>& mapping, const SpacePtr& fine) {
    if (!fine || fine->size() == 0) throw Error(ErrorKind::EmptyCoarseSpace, "empty fine state space");
    std::vector<std::string> labels;
    labels.reserve(fine->size());
    for (std::size_t x = 0; x < fine->size(); ++x) {
        auto it = mapping.find(fine->label(x));
        if (it == mapping.end()) {
            throw Error(ErrorKind::MissingAssignment, "no coarse label for fine state '" + fine->label(x) + "'", x);
        }
        labels.push_back(it->second);
    }
    return build_lumping(labels, fine);
}

/// f-hat with f(x) = f-hat(Lambda(x)), or nullopt when f is not constant on
/// some block. With tolerance 0 the comparison is exact equality.
[[nodiscard]] inline std::optional<StateFunction> try_lump_function(const StateFunction& f, const LumpingMap& lumping,
                                                                    double tolerance = 0.0) {
    require_same_space(f.space(), lumping.fine(), "function is not defined on the fine space");
    std::vector<double> out(lumping.coarse_size());
    for (std::size_t b = 0; b < lumping.coarse_size(); ++b) {
        const auto& block = lumping.block(b);
        const double ref = f[block.front()];
        for (auto x : block) {
            if (std::abs(f[x] - ref) > tolerance) return std::nullopt;
        }
        out[b] = ref;
    }
    return StateFunction(lumping.coarse(), std::move(out));
}

/// Block-wise min and max envelopes of a fine function.
struct LumpedFunctionPair {
    StateFunction lower;
    StateFunction upper;
    std::optional<StateFunction> exact;  // present iff lower == upper

    [[nodiscard]] bool lumpable() const noexcept { return exact.has_value(); }
};

[[nodiscard]] inline LumpedFunctionPair lump_function_bounds(const StateFunction& f, const LumpingMap& lumping) {
    require_same_space(f.space(), lumping.fine(), "function is not defined on the fine space");
    std::vector<double> lo(lumping.coarse_size());
    std::vector<double> hi(lumping.coarse_size());
    for (std::size_t b = 0; b < lumping.coarse_size(); ++b) {
        const auto& block = lumping.block(b);
        lo[b] = hi[b] = f[block.front()];
        for (auto x : block) {
            lo[b] = std::min(lo[b], f[x]);
            hi[b] = std::max(hi[b], f[x]);
        }
    }
    const bool equal = lo == hi;
    LumpedFunctionPair pair{StateFunction(lumping.coarse(), std::move(lo)), StateFunction(lumping.coarse(), std::move(hi)),
                            std::nullopt};
    if (equal) pair.exact = pair.lower;
    return pair;
}

/// x -> g(Lambda(x))
[[nodiscard]] inline StateFunction expand_function(const StateFunction& g, const LumpingMap& lumping) {
    require_same_space(g.space(), lumping.coarse(), "function is not defined on the coarse space");
    std::vector<double> out(lumping.fine_size());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = g[lumping(x)];
    return {lumping.fine(), std::move(out)};
}

/// Block sums of pi0.
[[nodiscard]] inline Distribution lump_distribution(const Distribution& pi0, const LumpingMap& lumping) {
    require_same_space(pi0.space(), lumping.fine(), "distribution is not defined on the fine space");
    std::vector<double> out(lumping.coarse_size(), 0.0);
    for (std::size_t b = 0; b < lumping.coarse_size(); ++b) {
        for (auto x : lumping.block(b)) out[b] += pi0[x];
    }
    if (out.size() == 1) out[0] = 1.0;
    return {lumping.coarse(), std::move(out)};
}

}  // namespace lumpbound
