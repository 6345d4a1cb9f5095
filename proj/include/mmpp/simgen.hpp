#pragma once

#include "mmpp/events.hpp"
#include "mmpp/grid.hpp"
#include "mmpp/metrics.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mmpp {

inline constexpr int kFourierTerms = 50;

/// (-1)^{k+1} (k+1)^{-2}
double zeta(int k);

/// Uniform draws behind one cluster's X process. Vectors are indexed by mark;
/// coefficient vectors have kFourierTerms + 1 entries (k = 0..50) and
/// `tilde[r][0]` is unused. `cross[r * R + r2](k-1, k2-1)` pairs term k of
/// mark r with term k2 of mark r2 and is the transpose of the (r2, r) matrix.
struct ClusterSpecX {
    int marks = 0;
    std::vector<Eigen::VectorXd> cos_coef;  // U(-1, 1)
    std::vector<Eigen::VectorXd> sin_coef;  // U(-1, 1)
    std::vector<Eigen::VectorXd> tilde;     // U(0, 0.3)
    std::vector<Eigen::MatrixXd> cross;     // U(-1, 1)

    /// All draws zero: mean 1, covariance 0.
    static ClusterSpecX zero(int marks);
};

std::vector<ClusterSpecX> gen_cluster_specs(int clusters, int marks, std::uint64_t seed);

/// 1 + sum_k zeta_k (Z_k cos(k pi t) + Z'_k sin(k pi t))
GridFunction cluster_mean(const ClusterSpecX& spec, int r, const EvalGrid& grid);
/// Same mark: sum_k Z~_k |zeta_k| psi_k(s) psi_k(t) with psi_k(t) = sin(k pi t + pi Z~_k).
/// Cross marks: sum_{k,k'} Z^_{k,k'} sqrt(Z~^r_k Z~^{r'}_{k'} |zeta_k zeta_k'|) psi^r_k(s) psi^{r'}_{k'}(t).
GridSurface cluster_covariance(const ClusterSpecX& spec, int r, int r2, const EvalGrid& grid);

/// Day-level and residual effects: Y~ on {1, sin 2 pi t}, Z on the four
/// quarter-window indicators times 2 sin 4 pi t, Y_j = a Y~_j + b Y~_{j-1}.
struct DayResidualSpec {
    double y_variance = 0.2;
    double z_variance = 0.05;
    double ar_current = 0.8;
    double ar_previous = 0.6;
};

double y_basis(int k, double t);
/// Indicator of the k-th quarter of [0, 2] (first one closed) times 2 sin(4 pi t).
double z_basis(int k, double t);

/// Pointwise Var[Y_j(t)] (j > 1; equal to Var[Y~(t)] when the AR weights square-sum to 1)
/// and Var[Z(t)].
GridFunction y_variance_curve(const DayResidualSpec& spec, const EvalGrid& grid);
GridFunction z_variance_curve(const DayResidualSpec& spec, const EvalGrid& grid);

/// y[j * R + r] for the m days; z[j * R + r] for one account.
struct DayResidual {
    std::vector<GridFunction> y;
    std::vector<GridFunction> z;
};

DayResidual gen_day_residual(int slots, int marks, const EvalGrid& grid, std::uint64_t seed,
                             const DayResidualSpec& spec = {});
GridFunction z_residual(const DayResidualSpec& spec, const EvalGrid& grid, std::mt19937_64& engine);

/// Poisson process with intensity exp(Lambda), Lambda linear between grid
/// nodes, by cellwise thinning. Throws NumericalError when exp(Lambda) > 1e12.
std::vector<double> sample_lgcp(const GridFunction& log_intensity, const EvalGrid& grid,
                                std::mt19937_64& engine);
std::vector<double> sample_lgcp(const GridFunction& log_intensity, const EvalGrid& grid,
                                std::uint64_t seed);

struct SimConfig {
    int clusters = 2;
    int per_cluster = 100;
    int slots = 1;
    int marks = 2;
    double horizon = 2.0;
    int grid_size = 201;
    DayResidualSpec residual;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Generative curves kept for diagnostics; (c, r) -> c * R + r, (c, r, r') -> (c * R + r) * R + r'.
struct GroundTruth {
    EvalGrid grid{2.0, 2};
    Eigen::VectorXd weights;
    std::vector<GridFunction> means;
    std::vector<GridSurface> covariances;
    /// Diagonal of the covariance X is actually drawn from (after PSD repair).
    std::vector<GridFunction> sampled_variances;
    GridFunction y_variance;
    GridFunction z_variance;
    int marks = 0;
    int slots = 1;

    /// sum_c pi_c exp(mu + (Var X + Var Y + Var Z) / 2); Y and Z only when m > 1.
    /// `sampled` selects the repaired X variance instead of the constructed one.
    GridFunction marginal_intensity(int r, bool sampled = true) const;
};

struct LabeledDataset {
    SequenceMatrix data;
    LabelVector labels;  // 1-based, cluster-major
    GroundTruth truth;
};

/// Accounts are cluster-major: the first per_cluster belong to cluster 1.
/// m = 1 uses X only; m > 1 adds the day effects Y and the residuals Z.
LabeledDataset simulate_dataset(const SimConfig& cfg);
/// Same with explicit cluster specs (one per cluster).
LabeledDataset simulate_dataset(const SimConfig& cfg, const std::vector<ClusterSpecX>& specs);

} // namespace mmpp
