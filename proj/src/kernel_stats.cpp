#include "mmpp/kernel_stats.hpp"

#include "mmpp/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace mmpp {

namespace {

constexpr double kGaussianRadius = 8.0;  // in units of h; tail mass < 1e-15
constexpr int kQuadratureOrder = 64;

double epanechnikov_cdf(double u) {
    if (u <= -1.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return 0.25 * (2.0 + 3.0 * u - u * u * u);
}

struct GaussLegendre {
    std::array<double, kQuadratureOrder> nodes{};
    std::array<double, kQuadratureOrder> weights{};

    GaussLegendre() {
        constexpr int n = kQuadratureOrder;
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double step = p1 / dp;
                x -= step;
                if (std::abs(step) < 1e-15) break;
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

const GaussLegendre& gauss_legendre() {
    static const GaussLegendre rule;
    return rule;
}

KernelColumn kernel_column(double u, const EvalGrid& grid, const KernelConfig& cfg,
                           const GridFunction& edge) {
    const double radius = cfg.support();
    const int last = grid.size() - 1;
    const int first = std::max(0, static_cast<int>(std::ceil((u - radius) / grid.spacing())));
    const int stop = std::min(last, static_cast<int>(std::floor((u + radius) / grid.spacing())));
    KernelColumn col;
    col.first = first;
    if (stop >= first) {
        col.values.resize(stop - first + 1);
        for (int g = first; g <= stop; ++g) {
            col.values[g - first] = kernel_weight(grid[g] - u, cfg) / edge[g];
        }
    }
    return col;
}

void add_column(GridFunction& target, const KernelColumn& col, double scale) {
    for (std::size_t k = 0; k < col.values.size(); ++k) target[col.first + k] += scale * col.values[k];
}

void add_column_outer(GridSurface& target, const KernelColumn& col, double scale) {
    const auto len = static_cast<Eigen::Index>(col.values.size());
    if (len == 0) return;
    Eigen::Map<const Eigen::VectorXd> v(col.values.data(), len);
    target.block(col.first, col.first, len, len).noalias() += scale * v * v.transpose();
}

void check_estimator_dims(const SequenceMatrix& matrix) {
    if (matrix.accounts() < 2 || matrix.slots() < 2) {
        throw DomainError("four estimators need n >= 2 and m >= 2 (got n=" +
                          std::to_string(matrix.accounts()) +
                          ", m=" + std::to_string(matrix.slots()) + ")");
    }
}

// Per mark: stacked cell sums (row i*m + j), self-pair correction sum.
struct CellSums {
    std::vector<Eigen::MatrixXd> cells;
    std::vector<GridSurface> self_pairs;
};

FourEstimators assemble_estimators(const CellSums& sums, int n, int m, int marks, bool parallel) {
    const int G = static_cast<int>(sums.cells[0].cols());
    std::vector<Eigen::MatrixXd> rows(marks, Eigen::MatrixXd::Zero(n, G));
    std::vector<Eigen::MatrixXd> cols(marks, Eigen::MatrixXd::Zero(m, G));
    std::vector<Eigen::VectorXd> totals(marks);
    for (int r = 0; r < marks; ++r) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) {
                rows[r].row(i) += sums.cells[r].row(i * m + j);
                cols[r].row(j) += sums.cells[r].row(i * m + j);
            }
        }
        totals[r] = rows[r].colwise().sum().transpose();
    }
    FourEstimators est;
    est.marks = marks;
    const std::size_t pairs = static_cast<std::size_t>(marks) * marks;
    est.same_cell.resize(pairs);
    est.same_account.resize(pairs);
    est.same_slot.resize(pairs);
    est.disjoint.resize(pairs);
    const double nd = n, md = m;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int p = 0; p < marks * marks; ++p) {
        const int r = p / marks, r2 = p % marks;
        GridSurface cell = sums.cells[r].transpose() * sums.cells[r2];
        GridSurface row = rows[r].transpose() * rows[r2];
        GridSurface col = cols[r].transpose() * cols[r2];
        GridSurface all = totals[r] * totals[r2].transpose();
        GridSurface within = cell;
        if (r == r2) within -= sums.self_pairs[r];
        est.same_cell[p] = within / (nd * md);
        est.same_account[p] = (row - cell) / (nd * md * (md - 1.0));
        est.same_slot[p] = (col - cell) / (nd * (nd - 1.0) * md);
        est.disjoint[p] = (all - row - col + cell) / (nd * (nd - 1.0) * md * (md - 1.0));
    }
    return est;
}

} // namespace

void KernelConfig::validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw DomainError("bandwidth must be positive");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw DomainError("window length must be positive");
    }
    if (!(bandwidth < 0.5 * horizon)) {
        throw DomainError("bandwidth " + std::to_string(bandwidth) + " must be below T/2 = " +
                          std::to_string(0.5 * horizon));
    }
}

double KernelConfig::support() const noexcept {
    return kernel == KernelFamily::epanechnikov ? bandwidth : kGaussianRadius * bandwidth;
}

double kernel_weight(double offset, const KernelConfig& cfg) {
    const double u = offset / cfg.bandwidth;
    switch (cfg.kernel) {
    case KernelFamily::epanechnikov:
        return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) / cfg.bandwidth : 0.0;
    case KernelFamily::gaussian:
        if (std::abs(u) > kGaussianRadius) return 0.0;
        return std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * cfg.bandwidth);
    }
    return 0.0;
}

double edge_correction(double x, const KernelConfig& cfg) {
    const double h = cfg.bandwidth;
    if (cfg.kernel == KernelFamily::epanechnikov) {
        return epanechnikov_cdf(x / h) - epanechnikov_cdf((x - cfg.horizon) / h);
    }
    // integrate K_h(x - t) over the part of [0, T] where the kernel lives
    const double lo = std::max(0.0, x - cfg.support());
    const double hi = std::min(cfg.horizon, x + cfg.support());
    if (hi <= lo) return 0.0;
    const auto& rule = gauss_legendre();
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    double total = 0.0;
    for (int k = 0; k < kQuadratureOrder; ++k) {
        total += rule.weights[k] * kernel_weight(x - (mid + half * rule.nodes[k]), cfg);
    }
    return std::min(1.0, total * half);
}

GridFunction edge_correction(const EvalGrid& grid, const KernelConfig& cfg) {
    GridFunction g(grid.size());
    for (int k = 0; k < grid.size(); ++k) g[k] = edge_correction(grid[k], cfg);
    return g;
}

PointStat point_stat(const MarkSplitSequence& row, int accounts, const EvalGrid& grid,
                     const KernelConfig& cfg) {
    cfg.validate();
    const GridFunction edge = edge_correction(grid, cfg);
    PointStat stat;
    for (const auto& times : row.times) {
        GridFunction b = GridFunction::Zero(grid.size());
        for (double u : times) add_column(b, kernel_column(u, grid, cfg, edge), 1.0 / accounts);
        stat.curves.push_back(std::move(b));
    }
    return stat;
}

PairStat pair_stat(const MarkSplitSequence& row, int accounts, const EvalGrid& grid,
                   const KernelConfig& cfg) {
    cfg.validate();
    const GridFunction edge = edge_correction(grid, cfg);
    const int R = row.marks();
    const int G = grid.size();
    std::vector<GridFunction> marginal(R, GridFunction::Zero(G));
    std::vector<GridSurface> diagonal(R, GridSurface::Zero(G, G));
    for (int r = 0; r < R; ++r) {
        for (double u : row.times[r]) {
            const auto col = kernel_column(u, grid, cfg, edge);
            add_column(marginal[r], col, 1.0);
            add_column_outer(diagonal[r], col, 1.0);
        }
    }
    PairStat stat;
    stat.marks = R;
    for (int r = 0; r < R; ++r) {
        for (int r2 = 0; r2 < R; ++r2) {
            GridSurface a = marginal[r] * marginal[r2].transpose();
            if (r == r2) a -= diagonal[r];
            stat.surfaces.push_back(a / accounts);
        }
    }
    return stat;
}

StatsTable::StatsTable(KernelConfig cfg, int accounts, int marks,
                       std::vector<Eigen::MatrixXd> points,
                       std::vector<std::vector<std::vector<KernelColumn>>> columns)
    : cfg_(cfg), accounts_(accounts), marks_(marks), points_(std::move(points)),
      columns_(std::move(columns)) {}

GridFunction StatsTable::weighted_point(std::span<const double> weights, int r) const {
    Eigen::Map<const Eigen::VectorXd> w(weights.data(), accounts_);
    return points_[r].transpose() * w;
}

GridSurface StatsTable::weighted_pair(std::span<const double> weights, int r, int r2) const {
    Eigen::Map<const Eigen::VectorXd> w(weights.data(), accounts_);
    const double n = accounts_;
    GridSurface out = n * (points_[r].transpose() * w.asDiagonal() * points_[r2]);
    if (r == r2) {
        for (int i = 0; i < accounts_; ++i) {
            if (weights[i] == 0.0) continue;
            for (const auto& col : columns_[i][r]) add_column_outer(out, col, -weights[i] / n);
        }
    }
    return out;
}

namespace {

template <bool Parallel>
StatsTable build_stats(std::span<const MarkSplitSequence> rows, const EvalGrid& grid,
                       const KernelConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(rows.size());
    if (n < 1) throw DomainError("statistics need at least one account");
    const int R = rows[0].marks();
    const GridFunction edge = edge_correction(grid, cfg);
    std::vector<Eigen::MatrixXd> points(R, Eigen::MatrixXd::Zero(n, grid.size()));
    std::vector<std::vector<std::vector<KernelColumn>>> columns(n);
    for (const auto& row : rows) {
        if (row.marks() != R) throw DomainError("rows disagree on the mark count");
    }
#pragma omp parallel for schedule(dynamic, 8) if (Parallel)
    for (int i = 0; i < n; ++i) {
        columns[i].resize(R);
        for (int r = 0; r < R; ++r) {
            auto& cols = columns[i][r];
            cols.reserve(rows[i].times[r].size());
            for (double u : rows[i].times[r]) {
                cols.push_back(kernel_column(u, grid, cfg, edge));
                const auto& col = cols.back();
                for (std::size_t k = 0; k < col.values.size(); ++k) {
                    points[r](i, col.first + k) += col.values[k] / n;
                }
            }
        }
    }
    return StatsTable(cfg, n, R, std::move(points), std::move(columns));
}

} // namespace

StatsTable precompute_stats(std::span<const MarkSplitSequence> rows, const EvalGrid& grid,
                            const KernelConfig& cfg) {
    return build_stats<true>(rows, grid, cfg);
}

FourEstimators four_estimators(const SequenceMatrix& matrix, const EvalGrid& grid,
                               const KernelConfig& cfg) {
    cfg.validate();
    check_estimator_dims(matrix);
    const int n = matrix.accounts(), m = matrix.slots(), R = matrix.marks();
    const GridFunction edge = edge_correction(grid, cfg);
    CellSums sums;
    sums.cells.assign(R, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * m, grid.size()));
    // per-account partial self-pair sums, reduced afterwards in account order
    std::vector<std::vector<GridSurface>> self_parts(
        n, std::vector<GridSurface>(R, GridSurface::Zero(grid.size(), grid.size())));
#pragma omp parallel for schedule(dynamic, 4)
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            for (const auto& e : matrix.entry(i, j)) {
                const auto col = kernel_column(e.time, grid, cfg, edge);
                auto& cells = sums.cells[e.mark - 1];
                const auto row = static_cast<Eigen::Index>(i) * m + j;
                for (std::size_t k = 0; k < col.values.size(); ++k) {
                    cells(row, col.first + k) += col.values[k];
                }
                add_column_outer(self_parts[i][e.mark - 1], col, 1.0);
            }
        }
    }
    sums.self_pairs.assign(R, GridSurface::Zero(grid.size(), grid.size()));
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < R; ++r) sums.self_pairs[r] += self_parts[i][r];
    }
    return assemble_estimators(sums, n, m, R, true);
}

namespace serial {

StatsTable precompute_stats(std::span<const MarkSplitSequence> rows, const EvalGrid& grid,
                            const KernelConfig& cfg) {
    return build_stats<false>(rows, grid, cfg);
}

FourEstimators four_estimators(const SequenceMatrix& matrix, const EvalGrid& grid,
                               const KernelConfig& cfg) {
    cfg.validate();
    check_estimator_dims(matrix);
    const int n = matrix.accounts(), m = matrix.slots(), R = matrix.marks();
    const int G = grid.size();
    const GridFunction edge = edge_correction(grid, cfg);
    CellSums sums;
    sums.cells.assign(R, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * m, G));
    sums.self_pairs.assign(R, GridSurface::Zero(G, G));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            for (const auto& e : matrix.entry(i, j)) {
                const int r = e.mark - 1;
                for (int s = 0; s < G; ++s) {
                    const double ks = kernel_weight(grid[s] - e.time, cfg) / edge[s];
                    if (ks == 0.0) continue;
                    sums.cells[r](static_cast<Eigen::Index>(i) * m + j, s) += ks;
                    for (int t = 0; t < G; ++t) {
                        sums.self_pairs[r](s, t) += ks * kernel_weight(grid[t] - e.time, cfg) / edge[t];
                    }
                }
            }
        }
    }
    return assemble_estimators(sums, n, m, R, false);
}

} // namespace serial

} // namespace mmpp
