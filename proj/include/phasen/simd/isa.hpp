#pragma once

#include <optional>
#include <string_view>

namespace phasen::simd {

enum class Isa { kScalar = 0, kAvx2 = 1, kAvx512 = 2 };

/// Widest instruction set both compiled in and supported by the running CPU.
Isa detected_isa();

/// The ISA used by default dispatch. Honours the PHASEN_SIMD environment
/// variable (scalar|avx2|avx512), capped at detected_isa().
Isa active_isa();

bool isa_available(Isa isa);

std::string_view isa_name(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

}  // namespace phasen::simd
