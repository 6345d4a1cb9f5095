#include "mmpp/grid.hpp"

#include "mmpp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmpp {

EvalGrid::EvalGrid(double horizon, int size) : horizon_(horizon) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw DomainError("grid horizon must be finite and positive");
    }
    if (size < 2) {
        throw DomainError("grid needs at least 2 points, got " + std::to_string(size));
    }
    spacing_ = horizon / (size - 1);
    points_.resize(size);
    for (int g = 0; g < size; ++g) points_[g] = g * spacing_;
    points_[size - 1] = horizon;  // exact endpoint
    weights_ = Eigen::VectorXd::Constant(size, spacing_);
    weights_[0] = weights_[size - 1] = 0.5 * spacing_;
}

EvalGrid::Bracket EvalGrid::locate(double t) const {
    const int last = size() - 1;
    if (t <= 0.0) return {0, 0.0};
    if (t >= horizon_) return {last - 1, 1.0};
    int lo = std::min(static_cast<int>(t / spacing_), last - 1);
    // guard against rounding pushing t just outside the chosen cell
    if (t < points_[lo]) --lo;
    else if (lo + 1 < last && t >= points_[lo + 1]) ++lo;
    const double frac = (t - points_[lo]) / (points_[lo + 1] - points_[lo]);
    return {lo, std::clamp(frac, 0.0, 1.0)};
}

double EvalGrid::interpolate(const GridFunction& f, double t) const {
    const auto [lo, frac] = locate(t);
    return (1.0 - frac) * f[lo] + frac * f[lo + 1];
}

double EvalGrid::interpolate(const GridSurface& f, double s, double t) const {
    const auto [i, a] = locate(s);
    const auto [j, b] = locate(t);
    return (1.0 - a) * ((1.0 - b) * f(i, j) + b * f(i, j + 1)) +
           a * ((1.0 - b) * f(i + 1, j) + b * f(i + 1, j + 1));
}

double integrate(const GridFunction& f, const EvalGrid& grid) {
    return grid.weights().dot(f);
}

} // namespace mmpp
