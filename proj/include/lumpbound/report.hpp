#pragma once

#include <string>

#include <json.hpp>

#include "lumpbound/imprecise.hpp"
#include "lumpbound/inference.hpp"

namespace lumpbound {

inline constexpr const char* version = "0.3.0";

[[nodiscard]] inline nlohmann::json to_json(const BoundResult& r) {
    nlohmann::json j{
        {"kind", std::string(to_string(r.kind))},
        {"lower", r.lower},
        {"upper", r.upper},
        {"width", r.width()},
        {"method", r.method},
        {"lower_estimate", r.lower_estimate},
        {"upper_estimate", r.upper_estimate},
        {"error_budget", r.error_budget},
        {"converged", r.converged},
    };
    if (r.kind == BoundKind::marginal) {
        j["time_horizon"] = r.time_horizon;
        j["steps"] = r.steps;
    } else {
        j["delta"] = r.delta;
        j["iterations"] = r.steps;
        j["convergence_gap"] = r.convergence_gap;
        j["max_decrease"] = r.max_decrease;
    }
    if (r.initial_perturbation != 0.0) j["initial_perturbation"] = r.initial_perturbation;
    if (!r.lower_trace.empty()) {
        j["trace"] = {{"lower", r.lower_trace}, {"upper", r.upper_trace}};
    }
    return j;
}

/// N, N-hat, ||Q||, ||Q_lower||
[[nodiscard]] inline nlohmann::json model_digest(const LumpedModel& m) {
    const auto norms = lower_rate_norm(m.lower_operator());
    return {{"states", m.lumping().fine_size()},
            {"lumped_states", m.lumping().coarse_size()},
            {"rate_norm", norms.source_norm},
            {"lower_rate_norm", norms.lower_op_norm}};
}

}  // namespace lumpbound
