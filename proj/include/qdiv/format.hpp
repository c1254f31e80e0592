#pragma once

#include <string>

namespace qdiv {

/// Shortest-safe text for a double: 17 significant digits, locale-free,
/// parses back to the identical value.
std::string format_double(double value);

/// Fixed-point text with the given number of decimals.
std::string format_fixed(double value, int decimals);

}  // namespace qdiv
