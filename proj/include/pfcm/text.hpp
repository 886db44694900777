#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pfcm {

// shortest round-trip decimal representation
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);
std::optional<bool> parse_bool(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace pfcm
