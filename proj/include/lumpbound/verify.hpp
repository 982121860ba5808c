#pragma once

// Randomized soundness suites: bracketing of marginal and limit bounds,
// monotonicity of the skeleton iteration, envelope dominance, norm lemmas.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lumpbound/chain.hpp"
#include "lumpbound/imprecise.hpp"
#include "lumpbound/inference.hpp"
#include "lumpbound/lumping.hpp"
#include "lumpbound/models.hpp"
#include "lumpbound/report.hpp"

namespace lumpbound {

struct RandomCaseOptions {
    std::size_t max_states = 8;
    std::vector<std::size_t> coarse_sizes{2, 3, 4};
    double rate_lo = 0.1;
    double rate_hi = 5.0;
    bool identity_lumping = false;
};

/// Draws N-hat from `coarse_sizes`, N from [max(N-hat + 1, 4), max_states]
/// and an edge density from [0.2, 0.6], then delegates to random_model.
[[nodiscard]] inline Model random_lumped_case(std::uint64_t seed, const RandomCaseOptions& opts = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_coarse(0, opts.coarse_sizes.size() - 1);
    const auto nh = opts.coarse_sizes[pick_coarse(rng)];
    const auto min_n = std::max<std::size_t>(nh + 1, 4);
    std::uniform_int_distribution<std::size_t> pick_n(std::min(min_n, opts.max_states), opts.max_states);
    const auto n = pick_n(rng);
    std::uniform_real_distribution<double> pick_density(0.2, 0.6);
    RandomModelSpec spec;
    spec.states = n;
    spec.lumped_states = opts.identity_lumping ? n : std::min(nh, n);
    spec.rate_lo = opts.rate_lo;
    spec.rate_hi = opts.rate_hi;
    spec.density = pick_density(rng);
    spec.seed = rng();
    return random_model(spec);
}

[[nodiscard]] inline LumpedModel to_lumped(const Model& m) { return {m.rates, m.initial, m.lumping}; }

struct SuiteCounts {
    std::size_t models = 0;
    std::vector<double> times;
    std::size_t collapse_models = 0;
    std::size_t envelope_triples = 0;
    std::size_t envelope_samples = 0;

    [[nodiscard]] static SuiteCounts quick() { return {20, {0.1, 1.0}, 5, 10, 10}; }
    [[nodiscard]] static SuiteCounts full() { return {200, {0.1, 1.0, 10.0}, 50, 50, 50}; }
};

struct CheckOutcome {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    std::string first_failure;
    nlohmann::json witness;  // null unless a failure was recorded

    [[nodiscard]] bool pass() const { return failures == 0; }
};

struct SuiteReport {
    std::vector<CheckOutcome> checks;
    [[nodiscard]] bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.pass(); });
    }
};

namespace detail {

inline void record_failure(CheckOutcome& out, const std::string& what, nlohmann::json witness) {
    if (out.failures++ == 0) {
        out.first_failure = what;
        out.witness = std::move(witness);
    }
}

inline nlohmann::json case_witness(const Model& m, std::uint64_t seed, const std::string& function) {
    return {{"seed", seed}, {"function", function}, {"model", model_to_json(m, RateFormat::dense)}};
}

}  // namespace detail

inline constexpr double monotonicity_slack = 1e-12;

/// Runs every randomized suite with the given counts and base seed.
[[nodiscard]] inline SuiteReport run_verification_suite(const SuiteCounts& counts, std::uint64_t seed) {
    SuiteReport report;
    CheckOutcome marginal{"marginal_bracketing"};
    CheckOutcome limit{"limit_bracketing"};
    CheckOutcome monotone{"limit_monotonicity"};
    CheckOutcome collapse{"precise_collapse"};
    CheckOutcome envelope{"envelope_dominance"};
    CheckOutcome norms{"norm_lemmas"};

    VerifySettings vs;
    vs.marginal.eps = 1e-6;
    vs.limit.tol = 1e-10;
    vs.limit.max_iter = 1'000'000;
    vs.limit.trace = true;

    for (std::size_t i = 0; i < counts.models; ++i) {
        const std::uint64_t case_seed = seed * 1'000'003ULL + i;
        const auto model = random_lumped_case(case_seed);
        const auto lumped = to_lumped(model);
        for (const auto& [name, f] : model.functions) {
            for (double t : counts.times) {
                ++marginal.cases;
                const auto rep = verify_bracketing(lumped, f, BoundKind::marginal, t, vs);
                if (!rep.pass) {
                    auto w = detail::case_witness(model, case_seed, name);
                    w["t"] = t;
                    w["bounds"] = to_json(rep.bounds);
                    w["exact"] = rep.exact;
                    detail::record_failure(marginal, "marginal bounds miss the exact value (seed " +
                                                         std::to_string(case_seed) + ", " + name + ")", std::move(w));
                }
            }
            ++limit.cases;
            ++monotone.cases;
            const auto rep = verify_bracketing(lumped, f, BoundKind::limit, 0.0, vs);
            if (!rep.pass) {
                auto w = detail::case_witness(model, case_seed, name);
                w["bounds"] = to_json(rep.bounds);
                w["exact"] = rep.exact;
                detail::record_failure(limit, "limit bounds miss the exact value (seed " + std::to_string(case_seed) +
                                                  ", " + name + ")", std::move(w));
            }
            bool ok = rep.bounds.max_decrease <= monotonicity_slack;
            for (std::size_t n : {1u, 10u, 100u}) {
                if (n < rep.bounds.lower_trace.size() && n < rep.bounds.upper_trace.size()) {
                    ok = ok && rep.bounds.lower_trace[n] <= rep.exact + vs.limit_slack &&
                         rep.exact <= rep.bounds.upper_trace[n] + vs.limit_slack;
                }
            }
            if (!ok) {
                auto w = detail::case_witness(model, case_seed, name);
                w["bounds"] = to_json(rep.bounds);
                detail::record_failure(monotone, "min-sequence not monotone or truncated bounds miss (seed " +
                                                     std::to_string(case_seed) + ")", std::move(w));
            }
        }
        ++norms.cases;
        const auto nr = lower_rate_norm(lumped.lower_operator());
        const auto id_nr = lower_rate_norm(LowerRateOperator(model.rates, LumpingMap::identity(model.space())));
        if (!(nr.lower_op_norm <= nr.source_norm) || id_nr.lower_op_norm != id_nr.source_norm ||
            nr.source_norm != 2.0 * model.rates.max_exit_rate()) {
            detail::record_failure(norms, "norm lemma violated (seed " + std::to_string(case_seed) + ")",
                                   detail::case_witness(model, case_seed, ""));
        }
    }

    RandomCaseOptions identity;
    identity.identity_lumping = true;
    for (std::size_t i = 0; i < counts.collapse_models; ++i) {
        const std::uint64_t case_seed = seed * 2'000'003ULL + i;
        const auto model = random_lumped_case(case_seed, identity);
        const auto lumped = to_lumped(model);
        const auto& f = model.function("general");
        ++collapse.cases;
        const auto m = verify_bracketing(lumped, f, BoundKind::marginal, 1.0, vs);
        const auto l = verify_bracketing(lumped, f, BoundKind::limit, 0.0, vs);
        const bool ok = m.pass && l.pass && m.bounds.width() <= 2.0 * m.bounds.error_budget &&
                        l.bounds.width() <= 10.0 * vs.limit_slack;
        if (!ok) {
            auto w = detail::case_witness(model, case_seed, "general");
            w["marginal"] = to_json(m.bounds);
            w["limit"] = to_json(l.bounds);
            detail::record_failure(collapse, "identity lumping does not collapse (seed " + std::to_string(case_seed) + ")",
                                   std::move(w));
        }
    }

    for (std::size_t i = 0; i < counts.envelope_triples; ++i) {
        const std::uint64_t case_seed = seed * 3'000'017ULL + i;
        const auto model = random_lumped_case(case_seed);
        std::mt19937_64 rng(case_seed);
        std::uniform_real_distribution<double> value(-1.0, 1.0);
        std::vector<double> g(model.lumping.coarse_size());
        for (auto& v : g) v = value(rng);
        const StateFunction gf(model.lumping.coarse(), g);
        ++envelope.cases;
        try {
            const auto rep = envelope_check(model.rates, model.lumping, gf, counts.envelope_samples, case_seed);
            if (!rep.attained) {
                auto w = detail::case_witness(model, case_seed, "");
                w["g"] = g;
                w["attainment_gap"] = rep.attainment_gap;
                detail::record_failure(envelope, "concentration candidates do not reach the envelope (seed " +
                                                     std::to_string(case_seed) + ")", std::move(w));
            }
        } catch (const EnvelopeViolationError& e) {
            auto w = detail::case_witness(model, case_seed, "");
            w["g"] = g;
            w["pi"] = e.witness_pi();
            w["coarse_state"] = e.coarse_state();
            w["q_pi_value"] = e.q_pi_value();
            w["lower_value"] = e.lower_value();
            detail::record_failure(envelope, e.what(), std::move(w));
        }
    }

    report.checks = {marginal, limit, monotone, collapse, envelope, norms};
    return report;
}

}  // namespace lumpbound
