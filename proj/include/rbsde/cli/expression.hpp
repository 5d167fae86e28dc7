#pragma once

#include <functional>
#include <string>

namespace rbsde::cli {

/// A compiled expression over time t and Brownian value B.
using Expression = std::function<double(double t, double b)>;

/// Parses the small vocabulary used in config files: numbers, t, B, + - * / ^,
/// parentheses, and max(a,b), min(a,b), pos(x), abs(x), exp(x), log(x),
/// sqrt(x), sin(x), cos(x), tanh(x).
/// Throws rbsde::Error(InvalidConfig) with the offending position on bad input.
Expression parse_expression(const std::string& text);

}  // namespace rbsde::cli
