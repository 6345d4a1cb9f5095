#pragma once

#include <Eigen/Dense>

namespace mmpp {

/// Real-valued function sampled on an EvalGrid.
using GridFunction = Eigen::VectorXd;
/// Real-valued function on [0,T]^2 sampled on the product grid; rows index s, columns t.
using GridSurface = Eigen::MatrixXd;

/// Uniform grid 0 = t_0 < ... < t_{G-1} = T. Every nonparametric curve and
/// surface in the library lives on one of these.
class EvalGrid {
public:
    EvalGrid(double horizon, int size);

    double horizon() const noexcept { return horizon_; }
    int size() const noexcept { return static_cast<int>(points_.size()); }
    double spacing() const noexcept { return spacing_; }
    double operator[](int g) const { return points_[g]; }
    const Eigen::VectorXd& points() const noexcept { return points_; }
    /// Trapezoid-rule weights; they sum to T.
    const Eigen::VectorXd& weights() const noexcept { return weights_; }

    /// Cell containing t: t = (1 - frac) * t_lo + frac * t_{lo+1}, lo in [0, G-2].
    struct Bracket {
        int lo;
        double frac;
    };
    Bracket locate(double t) const;

    double interpolate(const GridFunction& f, double t) const;
    double interpolate(const GridSurface& f, double s, double t) const;

    bool operator==(const EvalGrid& other) const noexcept {
        return horizon_ == other.horizon_ && size() == other.size();
    }

private:
    double horizon_;
    double spacing_;
    Eigen::VectorXd points_;
    Eigen::VectorXd weights_;
};

/// Trapezoid integral of f over [0, T].
double integrate(const GridFunction& f, const EvalGrid& grid);

} // namespace mmpp
