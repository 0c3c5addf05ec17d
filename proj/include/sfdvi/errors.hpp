#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfdvi {

using Vec = std::vector<double>;

/// Operand sizes do not agree with the object they are applied to.
class DimensionError : public std::invalid_argument {
public:
    DimensionError(const std::string& what, std::size_t expected, std::size_t got)
        : std::invalid_argument(what + ": expected dimension " + std::to_string(expected) + ", got " +
                                std::to_string(got)),
          expected_(expected),
          got_(got) {}

    std::size_t expected() const noexcept { return expected_; }
    std::size_t got() const noexcept { return got_; }

private:
    std::size_t expected_;
    std::size_t got_;
};

/// An iterative method ran out of budget or produced a non-finite value.
/// `residual` is the last measured progress indicator (NaN if not applicable).
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double residual, long iterations = -1)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    long iterations() const noexcept { return iterations_; }

private:
    double residual_;
    long iterations_;
};

inline void require_dim(const char* what, std::size_t expected, std::size_t got) {
    if (expected != got) throw DimensionError(what, expected, got);
}

}  // namespace sfdvi
