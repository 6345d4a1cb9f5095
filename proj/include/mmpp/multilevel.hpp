#pragma once

#include "mmpp/es_single.hpp"

#include <vector>

namespace mmpp {

/// Day-level (Y) and residual (Z) covariance surfaces, indexed r * R + r'.
struct NuisanceParams {
    int marks = 0;
    std::vector<GridSurface> gamma_y;
    std::vector<GridSurface> gamma_z;

    const GridSurface& y(int r, int r2) const { return gamma_y[r * marks + r2]; }
    const GridSurface& z(int r, int r2) const { return gamma_z[r * marks + r2]; }
};

/// Ratios fed to the logs are clamped to [kRatioFloor, 1 / kRatioFloor].
inline constexpr double kRatioFloor = 1e-6;

/// Gamma_y = log(C / D), Gamma_z = log(A D / (B C)) from the four estimators,
/// then averaged with the transposed (r', r) surface.
/// Throws InsufficientDataError when an estimator surface is identically zero.
NuisanceParams nuisance_from_estimators(const FourEstimators& est);
NuisanceParams estimate_nuisance(const SequenceMatrix& matrix, const EvalGrid& grid,
                                 const KernelConfig& cfg);

struct MultilevelConfig {
    FitConfig fit;
    /// Bandwidth of the nuisance estimators; 0 means 0.1 * T.
    double nuisance_bandwidth = 0.0;
};

struct MultilevelFit {
    NuisanceParams nuisance;
    /// Single-level fit on the pooled rows: mu-tilde and Gamma-tilde.
    FittedModel aggregated;
    /// Back-adjusted means, (c, r) -> c * R + r.
    std::vector<GridFunction> means;
    int slots = 1;

    const GridFunction& mean(int c, int r) const { return means[c * aggregated.marks() + r]; }
};

/// mu-hat = mu-tilde - Gamma_y(t,t)/2 - Gamma_z(t,t)/2 - log m.
/// The pooled rows carry m times the per-slot intensity, so log m is part of mu-tilde.
GridFunction back_adjust(const GridFunction& pooled_mean, const GridSurface& gamma_y,
                         const GridSurface& gamma_z, int slots);

/// Requires m >= 2.
MultilevelFit fit_multilevel(const SequenceMatrix& matrix, const MultilevelConfig& cfg);

struct Membership {
    PosteriorMatrix posterior;
    std::vector<int> labels;  // 1-based, ties to the lower index
};

Membership predict_membership(const FittedModel& model, const SequenceMatrix& matrix);
/// New data may have a different slot count m'; pooled means shift by log(m' / m).
Membership predict_membership(const MultilevelFit& fit, const SequenceMatrix& matrix);

} // namespace mmpp
