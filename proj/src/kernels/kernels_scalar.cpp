#include "sfdvi/kernels.hpp"

#include <algorithm>

namespace sfdvi::kernels::scalar {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void clamp(const double* v, const double* lo, const double* hi, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(v[i], lo[i]), hi[i]);
}

void relu(const double* v, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::max(v[i], 0.0);
}

}  // namespace

const KernelTable& table() {
    static const KernelTable t{Isa::scalar, &dot, &sum_sq_diff, &axpy, &clamp, &relu};
    return t;
}

}  // namespace sfdvi::kernels::scalar
