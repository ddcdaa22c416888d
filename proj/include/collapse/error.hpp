#pragma once

#include <stdexcept>
#include <string>

namespace collapse {

enum class ErrorKind {
    invalid_parameter,
    grid_too_coarse,
    under_resolved,
    norm_divergence,
    invariant_violation,
    quadrature_failure,
    unsupported_order,
    config,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_parameter: return "invalid parameter";
        case ErrorKind::grid_too_coarse: return "grid too coarse";
        case ErrorKind::under_resolved: return "under-resolved kernel";
        case ErrorKind::norm_divergence: return "norm divergence";
        case ErrorKind::invariant_violation: return "invariant violation";
        case ErrorKind::quadrature_failure: return "quadrature failure";
        case ErrorKind::unsupported_order: return "unsupported order";
        case ErrorKind::config: return "config error";
    }
    return "error";
}

/// Every failure raised by the library carries one of the kinds above so the
/// experiment runner can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

}  // namespace collapse
