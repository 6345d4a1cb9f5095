#pragma once

#include "mmpp/events.hpp"
#include "mmpp/grid.hpp"

#include <span>
#include <vector>

namespace mmpp {

enum class KernelFamily { epanechnikov, gaussian };

/// Smoothing kernel K_h(u) = K(u / h) / h on the window [0, T].
struct KernelConfig {
    KernelFamily kernel = KernelFamily::epanechnikov;
    double bandwidth = 0.1;
    double horizon = 1.0;

    /// Requires 0 < h < T / 2.
    void validate() const;
    /// |u| beyond which K_h(u) is treated as zero.
    double support() const noexcept;
};

double kernel_weight(double offset, const KernelConfig& cfg);

/// g(x; h) = integral over [0, T] of K_h(x - t) dt; 1 in the interior, >= 1/2 at the ends.
double edge_correction(double x, const KernelConfig& cfg);
GridFunction edge_correction(const EvalGrid& grid, const KernelConfig& cfg);

/// Per-account second-order statistic a_i^{r,r'}(s, t), all mark pairs.
struct PairStat {
    int marks = 0;
    std::vector<GridSurface> surfaces;  // index r * marks + r'

    const GridSurface& at(int r, int r2) const { return surfaces[r * marks + r2]; }
};

/// Per-account first-order statistic b_i^r(t), all marks.
struct PointStat {
    std::vector<GridFunction> curves;
};

/// a_i via the separable form: product of marginal kernel sums minus the
/// self-pair diagonal for same-mark pairs. Marks are 0-based in the result.
PairStat pair_stat(const MarkSplitSequence& row, int accounts, const EvalGrid& grid,
                   const KernelConfig& cfg);
PointStat point_stat(const MarkSplitSequence& row, int accounts, const EvalGrid& grid,
                     const KernelConfig& cfg);

/// Kernel estimates of the second-order intensity for the four pair types:
/// same account and slot (A), same account across slots (B), same slot across
/// accounts (C), and across both (D).
struct FourEstimators {
    int marks = 0;
    std::vector<GridSurface> same_cell, same_account, same_slot, disjoint;

    const GridSurface& a(int r, int r2) const { return same_cell[r * marks + r2]; }
    const GridSurface& b(int r, int r2) const { return same_account[r * marks + r2]; }
    const GridSurface& c(int r, int r2) const { return same_slot[r * marks + r2]; }
    const GridSurface& d(int r, int r2) const { return disjoint[r * marks + r2]; }
};

/// Requires n >= 2 and m >= 2. Cross-account and cross-slot sums come from
/// products of marginal totals, never from the literal quadruple loop.
FourEstimators four_estimators(const SequenceMatrix& matrix, const EvalGrid& grid,
                               const KernelConfig& cfg);

/// Edge-corrected kernel column of one event: values[k] = K_h(t_{first+k} - u) / g(t_{first+k}).
struct KernelColumn {
    int first = 0;
    std::vector<double> values;
};

/// Precomputed first- and second-order statistics of all accounts for one
/// bandwidth. Second-order sums are kept in factored form (marginals plus
/// per-event columns) so memory is O(n R G + events * support).
class StatsTable {
public:
    StatsTable() = default;
    StatsTable(KernelConfig cfg, int accounts, int marks, std::vector<Eigen::MatrixXd> points,
               std::vector<std::vector<std::vector<KernelColumn>>> columns);

    const KernelConfig& config() const noexcept { return cfg_; }
    int accounts() const noexcept { return accounts_; }
    int marks() const noexcept { return marks_; }
    /// n x G matrix whose row i is b_i^r.
    const Eigen::MatrixXd& points(int r) const { return points_[r]; }
    const std::vector<KernelColumn>& columns(int account, int r) const {
        return columns_[account][r];
    }

    /// sum_i w_i b_i^r
    GridFunction weighted_point(std::span<const double> weights, int r) const;
    /// sum_i w_i a_i^{r,r'}
    GridSurface weighted_pair(std::span<const double> weights, int r, int r2) const;

private:
    KernelConfig cfg_{};
    int accounts_ = 0;
    int marks_ = 0;
    std::vector<Eigen::MatrixXd> points_;
    std::vector<std::vector<std::vector<KernelColumn>>> columns_;
};

/// OpenMP-parallel over accounts.
StatsTable precompute_stats(std::span<const MarkSplitSequence> rows, const EvalGrid& grid,
                            const KernelConfig& cfg);

/// Serial reference versions of the parallel kernels above; same results.
namespace serial {
StatsTable precompute_stats(std::span<const MarkSplitSequence> rows, const EvalGrid& grid,
                            const KernelConfig& cfg);
FourEstimators four_estimators(const SequenceMatrix& matrix, const EvalGrid& grid,
                               const KernelConfig& cfg);
} // namespace serial

} // namespace mmpp
