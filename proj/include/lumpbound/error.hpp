#pragma once

#include <cstddef>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace lumpbound {

enum class ErrorKind {
    InvalidArgument,
    NonFinite,
    NegativeOffDiagonal,
    RowSumViolation,
    NotIrreducible,
    DeltaTooLarge,
    SpaceMismatch,
    MissingAssignment,
    EmptyCoarseSpace,
    NonPositiveDistribution,
    InvalidDistribution,
    OverBudget,
    OracleCapExceeded,
    EnvelopeViolation,
    StateSpaceTooLarge,
    ParseError,
    ValidationError,
    IoError,
};

[[nodiscard]] inline std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::NegativeOffDiagonal: return "NegativeOffDiagonal";
        case ErrorKind::RowSumViolation: return "RowSumViolation";
        case ErrorKind::NotIrreducible: return "NotIrreducible";
        case ErrorKind::DeltaTooLarge: return "DeltaTooLarge";
        case ErrorKind::SpaceMismatch: return "SpaceMismatch";
        case ErrorKind::MissingAssignment: return "MissingAssignment";
        case ErrorKind::EmptyCoarseSpace: return "EmptyCoarseSpace";
        case ErrorKind::NonPositiveDistribution: return "NonPositiveDistribution";
        case ErrorKind::InvalidDistribution: return "InvalidDistribution";
        case ErrorKind::OverBudget: return "OverBudget";
        case ErrorKind::OracleCapExceeded: return "OracleCapExceeded";
        case ErrorKind::EnvelopeViolation: return "EnvelopeViolation";
        case ErrorKind::StateSpaceTooLarge: return "StateSpaceTooLarge";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ValidationError: return "ValidationError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

/// Base exception for every failure raised by the library.
///
/// `state()` and `other_state()` carry the offending state indices for the
/// errors that name one (e.g. RowSumViolation(x), NegativeOffDiagonal(x,y)).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message,
          std::optional<std::size_t> state = std::nullopt,
          std::optional<std::size_t> other_state = std::nullopt)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind), state_(state), other_state_(other_state) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::optional<std::size_t> state() const noexcept { return state_; }
    [[nodiscard]] std::optional<std::size_t> other_state() const noexcept { return other_state_; }

private:
    ErrorKind kind_;
    std::optional<std::size_t> state_;
    std::optional<std::size_t> other_state_;
};

// Warnings (defaults applied, degenerate lumpings) go through a replaceable
// sink so tests and the CLI can capture them.
using WarningSink = std::function<void(std::string_view)>;

namespace detail {
inline WarningSink& warning_sink() {
    static WarningSink sink = [](std::string_view msg) {
        std::cerr << "lumpbound: warning: " << msg << '\n';
    };
    return sink;
}
}  // namespace detail

inline WarningSink set_warning_sink(WarningSink sink) {
    return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void warn(std::string_view msg) {
    if (auto& sink = detail::warning_sink()) sink(msg);
}

}  // namespace lumpbound
