#include <atomic>
#include <cstdlib>
#include <string>

#include "wmseg/error.hpp"
#include "wmseg/simd/kernels.hpp"

namespace wmseg::simd {
namespace {

bool cpu_has_avx2() {
#if defined(WMSEG_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Level initial_level() {
    if (const char* env = std::getenv("WMSEG_SIMD"); env && std::string(env) == "scalar") return Level::scalar;
    return detected_level();
}

std::atomic<Level>& current() {
    static std::atomic<Level> level{initial_level()};
    return level;
}

} // namespace

std::string_view to_string(Level level) { return level == Level::avx2 ? "avx2" : "scalar"; }

Level detected_level() {
    static const Level level = cpu_has_avx2() ? Level::avx2 : Level::scalar;
    return level;
}

Level active_level() { return current().load(std::memory_order_relaxed); }

void set_level(Level level) {
    if (level == Level::avx2 && detected_level() != Level::avx2) {
        throw Error("simd.unsupported", "AVX2 kernels are not available on this machine/build");
    }
    current().store(level, std::memory_order_relaxed);
}

const KernelTable& table(Level level) {
#if defined(WMSEG_HAVE_AVX2)
    if (level == Level::avx2) return detail::avx2_table;
#endif
    (void)level;
    return detail::scalar_table;
}

const KernelTable& kernels() { return table(active_level()); }

} // namespace wmseg::simd
