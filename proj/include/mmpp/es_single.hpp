#pragma once

#include "mmpp/events.hpp"
#include "mmpp/fpca.hpp"
#include "mmpp/grid.hpp"
#include "mmpp/kernel_stats.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mmpp {

/// Mixing weights plus per-cluster mean curves and cross-covariance surfaces
/// of the latent log-intensity.
struct MixtureParams {
    int clusters = 0;
    int marks = 0;
    Eigen::VectorXd weights;
    std::vector<GridFunction> means;       // (c, r)     -> c * R + r
    std::vector<GridSurface> covariances;  // (c, r, r') -> (c * R + r) * R + r'

    MixtureParams() = default;
    MixtureParams(int clusters, int marks, int grid_size);

    GridFunction& mean(int c, int r) { return means[c * marks + r]; }
    const GridFunction& mean(int c, int r) const { return means[c * marks + r]; }
    GridSurface& covariance(int c, int r, int r2) { return covariances[(c * marks + r) * marks + r2]; }
    const GridSurface& covariance(int c, int r, int r2) const {
        return covariances[(c * marks + r) * marks + r2];
    }
};

/// n x C responsibilities; rows on the simplex.
using PosteriorMatrix = Eigen::MatrixXd;

/// rho(t) = exp(mu(t) + Gamma(t, t) / 2)
GridFunction first_order_intensity(const GridFunction& mean, const GridFunction& variance);
/// rho^{r,r'}(s, t) = rho^r(s) rho^{r'}(t) exp(Gamma^{r,r'}(s, t))
GridSurface second_order_intensity(const GridFunction& rho_s, const GridFunction& rho_t,
                                   const GridSurface& gamma);

/// Berman-Turner nodes for one sequence: events merged with the grid.
/// `counts[u]` is the number of events sitting on node u (0 for dummy nodes);
/// coincident events and grid points share one node.
struct QuadratureScheme {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::vector<int> counts;

    /// y_u = Delta_u / v_u
    double response(std::size_t u) const { return counts[u] / weights[u]; }
};

QuadratureScheme build_quadrature(std::span<const double> events, const EvalGrid& grid);

/// One scheme per mark.
using AccountQuadrature = std::vector<QuadratureScheme>;
AccountQuadrature build_quadrature(const MarkSplitSequence& row, const EvalGrid& grid);

/// Latent log-intensities are clamped to this range on the grid before use.
inline constexpr double kLogIntensityClamp = 30.0;

/// log of the quadrature-approximated Poisson likelihood:
/// sum_r sum_u v_u [y_u X^r(u) - exp X^r(u)], with X linearly interpolated
/// between grid values. `path[r]` is the path of mark r on the grid.
double loglik_pp_hat(const AccountQuadrature& scheme, std::span<const GridFunction> path,
                     const EvalGrid& grid);

/// Sampling-ready form of one cluster: means, truncated bases, score covariance.
struct ClusterModel {
    std::vector<GridFunction> means;
    std::vector<FpcaBasis> bases;
    ScoreCovariance sigma;
};

/// Pointwise variance of the paths drawn from (bases, sigma) for mark r.
GridFunction sampled_variance(std::span<const FpcaBasis> bases, const ScoreCovariance& sigma, int r);

/// Means of the sampled paths: mu + (Gamma(t,t) - sampled variance) / 2, so that
/// exp(mean + variance / 2) of the truncated process equals exp(mu + Gamma(t,t) / 2).
std::vector<GridFunction> sampling_means(const MixtureParams& params, int cluster,
                                         std::span<const FpcaBasis> bases,
                                         const ScoreCovariance& sigma);

ClusterModel build_cluster_model(const MixtureParams& params, int cluster, const EvalGrid& grid,
                                 double energy);

/// log of (1/Q) sum_q exp(loglik_pp_hat) over Q paths drawn with `seed`.
double mc_likelihood(const AccountQuadrature& scheme, const ClusterModel& cluster,
                     const EvalGrid& grid, int samples, std::uint64_t seed);

/// Quadrature of every account arranged for batched evaluation: grid-node
/// weights and event interpolation loads as n x G matrices per mark, plus the
/// off-grid event nodes.
class QuadratureTable {
public:
    QuadratureTable(std::span<const MarkSplitSequence> rows, const EvalGrid& grid);

    int accounts() const noexcept { return accounts_; }
    int marks() const noexcept { return static_cast<int>(grid_weights_.size()); }

    struct OffGridNode {
        int lo;
        double frac;
        double weight;
    };

    const Eigen::MatrixXd& grid_weights(int r) const { return grid_weights_[r]; }
    const Eigen::MatrixXd& event_loads(int r) const { return event_loads_[r]; }
    std::span<const OffGridNode> off_grid(int account, int r) const;

private:
    int accounts_;
    std::vector<Eigen::MatrixXd> grid_weights_;
    std::vector<Eigen::MatrixXd> event_loads_;
    std::vector<std::vector<OffGridNode>> off_grid_;   // per mark, grouped by account
    std::vector<std::vector<std::size_t>> offsets_;    // per mark, size n + 1
};

/// Paths of one cluster for all Q draws, clamped; paths[r] is G x Q.
LatentPathSample cluster_paths(const ClusterModel& cluster, const Eigen::MatrixXd& draws);

/// n x C matrix of log f-hat(S_i | c). `draws` is a (R G) x Q standard normal
/// matrix shared by all clusters; column q yields path q. OpenMP-parallel over accounts.
/// A non-empty `accounts` restricts the rows to those accounts, in that order.
Eigen::MatrixXd cluster_loglik(const QuadratureTable& table,
                               std::span<const ClusterModel> clusters,
                               const Eigen::MatrixXd& draws,
                               std::span<const int> accounts = {});

namespace serial {
/// Reference: literal per-account, per-path quadrature sums.
Eigen::MatrixXd cluster_loglik(std::span<const AccountQuadrature> schemes,
                               std::span<const ClusterModel> clusters,
                               const Eigen::MatrixXd& draws, const EvalGrid& grid);
} // namespace serial

/// Row-wise softmax of log(pi_c) + loglik(i, c). Throws DomainError naming
/// the account when every cluster gives -inf.
PosteriorMatrix posterior_from_loglik(const Eigen::MatrixXd& loglik, const Eigen::VectorXd& weights);

/// sum_i log sum_c pi_c f-hat(S_i | c)
double observed_loglik(const Eigen::MatrixXd& loglik, const Eigen::VectorXd& weights);

/// Full E-step: build cluster models, draw Q paths per cluster from `seed`,
/// return responsibilities.
PosteriorMatrix e_step(const QuadratureTable& table, const MixtureParams& params,
                       const EvalGrid& grid, double energy, int samples, std::uint64_t seed);

/// Floors applied to the expected kernel sums before logs, and the Gamma range.
inline constexpr double kStatFloor = 1e-12;
inline constexpr double kCovarianceClamp = 10.0;

/// Closed-form S-step: pi from mean responsibilities, Gamma from the log ratio
/// of expected pair and point sums, then mu from the point sums and Gamma's
/// diagonal. Grid points where an expected sum falls below kStatFloor are
/// masked and filled from the nearest unmasked point.
/// Throws DegenerateClusterError when a cluster's total responsibility < 1e-8.
MixtureParams s_step(const PosteriorMatrix& posterior, const StatsTable& stats);

/// Index of the best candidate; ties go to the larger bandwidth.
/// NaN counts as -inf.
std::size_t select_bandwidth(std::span<const double> bandwidths, std::span<const double> logliks);

/// Hard k-means (k-means++ seeding, best of `restarts`) on the rows of `features`.
/// Returns 0-based labels.
std::vector<int> kmeans(const Eigen::MatrixXd& features, int clusters, int restarts,
                        std::uint64_t seed);

struct FitConfig {
    int clusters = 2;
    /// Absolute bandwidths; empty means {0.05, 0.1, 0.2, 0.4} * T / 2.
    std::vector<double> bandwidths;
    KernelFamily kernel = KernelFamily::epanechnikov;
    int grid_size = 51;
    int mc_samples = 500;
    double energy = 0.95;
    double tolerance = 1e-4;
    int max_iterations = 200;
    /// Restart 0 starts from k-means, later ones from random responsibilities.
    int restarts = 1;
    int kmeans_restarts = 10;
    /// Bandwidths are scored by the likelihood of held-out accounts over this
    /// many folds; 0 scores on the fitting accounts themselves.
    int selection_folds = 5;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<double> resolved_bandwidths(double horizon) const;
};

struct TraceEntry {
    int iteration;
    double loglik;
    double max_delta;
    double bandwidth;
};

/// FPCA state of one cluster at the final parameters.
struct ClusterBasis {
    std::vector<FpcaBasis> bases;
    ScoreCovariance sigma;
};

struct FittedModel {
    EvalGrid grid{1.0, 2};
    MixtureParams params;
    PosteriorMatrix posterior;
    double bandwidth = 0.0;
    KernelFamily kernel = KernelFamily::epanechnikov;
    std::vector<ClusterBasis> fpca;
    std::vector<TraceEntry> trace;
    double loglik = 0.0;
    double bic = 0.0;
    std::uint64_t seed = 0;
    /// Seed of the standard normal draws behind every path of the final E-step.
    std::uint64_t path_seed = 0;
    int mc_samples = 0;
    double energy = 0.95;
    int restart = 0;
    bool converged = false;

    int clusters() const noexcept { return params.clusters; }
    int marks() const noexcept { return params.marks; }
};

/// k = (C - 1) + sum_{c,r} p^r_c + sum_c P_c (P_c + 1) / 2 with P_c = sum_r p^r_c.
int effective_parameters(const FittedModel& model);
/// -2 loglik + k log n
double bic_value(double loglik, int parameters, int accounts);
double bic(const FittedModel& model);

/// Seed of the shared standard normal draws for a given restart.
std::uint64_t path_seed_for(std::uint64_t seed, int restart);

/// Single-level learner on m = 1 data.
FittedModel fit(const SequenceMatrix& matrix, const FitConfig& cfg);

/// Learner on explicit account rows (also used on pooled rows).
FittedModel fit_rows(std::span<const MarkSplitSequence> rows, double horizon,
                     const FitConfig& cfg);

/// One ES run from a given initial posterior, with precomputed tables.
/// `stats` holds one table per bandwidth candidate, ascending.
FittedModel fit_from(const PosteriorMatrix& initial, std::span<const StatsTable> stats,
                     const QuadratureTable& quadrature, const EvalGrid& grid,
                     const FitConfig& cfg, std::uint64_t path_seed);

/// Responsibilities of (possibly unseen) accounts under frozen parameters,
/// using the same path draws as the fit's final E-step. `mean_shift` is added
/// to every mean curve.
PosteriorMatrix predict_posterior(const FittedModel& model,
                                  std::span<const MarkSplitSequence> rows,
                                  double mean_shift = 0.0);

} // namespace mmpp
