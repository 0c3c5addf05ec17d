#pragma once

// Data-parallel inner loops shared by the integrator, the projections and
// the Monte-Carlo reductions. Every kernel has a scalar reference
// implementation; vectorized variants are selected once at startup from the
// host CPU features (override with SFDVI_ISA=scalar|avx2|neon).

#include <cstddef>
#include <span>
#include <string_view>

namespace sfdvi::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
    Isa isa;
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// sum_i (a[i] - b[i])^2
    double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// out[i] = min(max(v[i], lo[i]), hi[i])
    void (*clamp)(const double* v, const double* lo, const double* hi, double* out, std::size_t n);
    /// out[i] = max(v[i], 0)
    void (*relu)(const double* v, double* out, std::size_t n);
};

namespace scalar {
const KernelTable& table();
}
#if defined(SFDVI_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif
#if defined(SFDVI_HAVE_NEON)
namespace neon {
const KernelTable& table();
}
#endif

/// True when the variant was compiled in and the running CPU supports it.
bool available(Isa isa);

/// Table for a specific variant. Throws std::invalid_argument if unavailable.
const KernelTable& table(Isa isa);

/// The table chosen at first use; stable for the life of the process.
const KernelTable& active();

std::string_view name(Isa isa);

// Convenience wrappers over the active table.

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
    return active().sum_sq_diff(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void clamp(std::span<const double> v, std::span<const double> lo, std::span<const double> hi,
                  std::span<double> out) {
    active().clamp(v.data(), lo.data(), hi.data(), out.data(), v.size());
}

inline void relu(std::span<const double> v, std::span<double> out) {
    active().relu(v.data(), out.data(), v.size());
}

}  // namespace sfdvi::kernels
