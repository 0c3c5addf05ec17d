#include "sfdvi/kernels.hpp"

#include <arm_neon.h>

namespace sfdvi::kernels::neon {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double s = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
        acc = vfmaq_f64(acc, d, d);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void clamp(const double* v, const double* lo, const double* hi, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t r = vmaxq_f64(vld1q_f64(v + i), vld1q_f64(lo + i));
        vst1q_f64(out + i, vminq_f64(r, vld1q_f64(hi + i)));
    }
    for (; i < n; ++i) {
        const double r = v[i] < lo[i] ? lo[i] : v[i];
        out[i] = hi[i] < r ? hi[i] : r;
    }
}

void relu(const double* v, double* out, std::size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmaxq_f64(vld1q_f64(v + i), zero));
    for (; i < n; ++i) out[i] = v[i] < 0.0 ? 0.0 : v[i];
}

}  // namespace

const KernelTable& table() {
    static const KernelTable t{Isa::neon, &dot, &sum_sq_diff, &axpy, &clamp, &relu};
    return t;
}

}  // namespace sfdvi::kernels::neon
