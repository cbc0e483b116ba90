#pragma once

#include <numbers>

namespace nvodmr::constants {

inline constexpr double pi = std::numbers::pi;

/// Speed of light in vacuum [m/s].
inline constexpr double speed_of_light = 299'792'458.0;

/// Vacuum permeability [H/m].
inline constexpr double mu0 = 4.0e-7 * pi;

/// Resistivity of annealed copper at room temperature [Ohm m].
inline constexpr double copper_resistivity = 1.68e-8;

}  // namespace nvodmr::constants
