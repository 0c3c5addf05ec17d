#include "sfdvi/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace sfdvi::kernels {

bool available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(SFDVI_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(SFDVI_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& table(Isa isa) {
    if (!available(isa)) {
        throw std::invalid_argument("kernel variant not available on this host: " + std::string(name(isa)));
    }
    switch (isa) {
#if defined(SFDVI_HAVE_AVX2)
        case Isa::avx2:
            return avx2::table();
#endif
#if defined(SFDVI_HAVE_NEON)
        case Isa::neon:
            return neon::table();
#endif
        default:
            return scalar::table();
    }
}

std::string_view name(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
        case Isa::neon:
            return "neon";
    }
    return "unknown";
}

namespace {

const KernelTable& select() {
    if (const char* env = std::getenv("SFDVI_ISA")) {
        const std::string want(env);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
            if (want == name(isa) && available(isa)) return table(isa);
        }
    }
    if (available(Isa::avx2)) return table(Isa::avx2);
    if (available(Isa::neon)) return table(Isa::neon);
    return scalar::table();
}

}  // namespace

const KernelTable& active() {
    static const KernelTable& t = select();
    return t;
}

}  // namespace sfdvi::kernels
