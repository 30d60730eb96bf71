#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cmdprox::text {

// Shortest decimal string that parses back to the exact same double.
std::string format_double(double v);

// Strict parse; throws std::invalid_argument on trailing garbage.
double parse_double(std::string_view s);

// Fixed 12-significant-digit rendering for CSV output.
std::string format_sig12(double v);

std::uint64_t fnv1a64(std::string_view s);
std::string fnv1a64_hex(std::string_view s);

}  // namespace cmdprox::text
