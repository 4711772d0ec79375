#pragma once

#include <stdexcept>
#include <string>

namespace lidalign {

// Argument/contract violations (shape mismatch, k too large, empty batch...).
class invalid_argument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numeric contract violations (zero neighbor distance, degenerate estimator,
// non-finite loss component).
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor file I/O failures, with a machine-checkable failure kind.
class io_error : public std::runtime_error {
public:
    enum class kind {
        open_failed,
        bad_magic,
        bad_version,
        bad_shape,
        truncated,
        trailing_data,
        non_finite,
    };

    io_error(kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
    kind what_kind() const { return kind_; }

private:
    kind kind_;
};

} // namespace lidalign
