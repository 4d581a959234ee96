#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nrl::text {

// Shortest representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace nrl::text
