#pragma once

#include <string>

namespace fdboot {

// 17 significant digits ("%.17g"); round-trips
// every finite double exactly.
std::string format_double(double value);

}  // namespace fdboot
