#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace strokecast::csv {

// Plain comma split; the formats here never quote fields.
std::vector<std::string> split(std::string_view line);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

// Fixed six decimals, the canonical on-disk float format.
std::string fixed6(double v);

// The value a fixed6 string parses back to.
double canonical6(double v);

// Round-trip-exact formatting for report numbers.
std::string exact(double v);

std::string trim_cr(std::string line);

}  // namespace strokecast::csv
