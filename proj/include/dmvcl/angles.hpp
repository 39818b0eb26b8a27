#pragma once

#include <cmath>

#include "dmvcl/errors.hpp"

namespace dmvcl {

/// Wraps an angle to the half-open interval (-pi, pi].
inline double wrap_angle(double theta) {
    if (std::isnan(theta)) {
        throw NumericalError("wrap_angle: NaN input");
    }
    const double two_pi = 2.0 * M_PI;
    double wrapped = std::fmod(theta, two_pi);
    if (wrapped <= -M_PI) {
        wrapped += two_pi;
    } else if (wrapped > M_PI) {
        wrapped -= two_pi;
    }
    return wrapped;
}

}  // namespace dmvcl
