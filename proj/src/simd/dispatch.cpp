// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "vedit/simd/kernels.hpp"

namespace vedit::simd {

#if defined(VEDIT_HAVE_AVX2)
const Kernels* avx2_table() noexcept;
#endif

namespace {

bool cpu_has_avx2() noexcept {
#if defined(VEDIT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Kernels* initial() noexcept {
    if (const char* env = std::getenv("VEDIT_SIMD"); env != nullptr && std::string_view(env) == "scalar") {
        return &scalar();
    }
    if (const Kernels* k = avx2()) return k;
    return &scalar();
}

std::atomic<const Kernels*>& current() noexcept {
    static std::atomic<const Kernels*> table{initial()};
    return table;
}

}  // namespace

const Kernels* avx2() noexcept {
#if defined(VEDIT_HAVE_AVX2)
    static const bool supported = cpu_has_avx2();
    return supported ? avx2_table() : nullptr;
#else
    return nullptr;
#endif
}

const Kernels& active() noexcept { return *current().load(std::memory_order_acquire); }

std::vector<const Kernels*> available() {
    std::vector<const Kernels*> out{&scalar()};
    if (const Kernels* k = avx2()) out.push_back(k);
    return out;
}

bool select(std::string_view name) noexcept {
    for (const Kernels* k : {&scalar(), avx2()}) {
        if (k != nullptr && name == k->name) {
            current().store(k, std::memory_order_release);
            return true;
        }
    }
    return false;
}

}  // namespace vedit::simd
