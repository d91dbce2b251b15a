#pragma once

#include "lfi/limits.hpp"
#include "lfi/training.hpp"

#include <string>
#include <vector>

namespace lfi {

/// Log-log plot of the median expected MSE against training sample size,
/// one polyline per loss, individual seeds as dots.
std::string sweep_svg(const std::vector<SweepRow>& rows);

/// Contours of several p-value maps on shared axes. Each map gets its own
/// stroke colour and a legend entry named after its estimator, with the method
/// appended when two maps share an estimator. Each level is one path,
/// distinguished by dash pattern.
std::string contours_svg(const std::vector<PValueMap>& maps, const std::vector<double>& levels);

}  // namespace lfi
