#pragma once

#include "mmpp/grid.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mmpp {

/// Karhunen-Loeve basis of one covariance surface: eigenvalues in descending
/// order (clipped at 0) and eigenfunctions as columns, orthonormal under the
/// trapezoid inner product on the grid.
struct FpcaBasis {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenfunctions;  // G x p

    int rank() const noexcept { return static_cast<int>(eigenvalues.size()); }
};

/// Discretized Fredholm problem via the symmetric form W^{1/2} Gamma W^{1/2}.
/// Throws DomainError if gamma is not symmetric within 1e-8 (relative to max(1, |gamma|)).
FpcaBasis eigendecompose(const GridSurface& gamma, const EvalGrid& grid);

/// Smallest leading rank whose eigenvalues carry `energy` of the total;
/// at least one component. `energy` in (0, 1].
FpcaBasis truncate(const FpcaBasis& basis, double energy);

/// Covariance of the stacked scores (xi^1, ..., xi^R).
struct ScoreCovariance {
    std::vector<int> offsets;  // block r spans [offsets[r], offsets[r + 1])
    Eigen::MatrixXd matrix;
    bool repaired = false;     // negative eigenvalues were clipped

    int dimension() const noexcept { return static_cast<int>(matrix.rows()); }
    Eigen::MatrixXd block(int r, int r2) const {
        return matrix.block(offsets[r], offsets[r2], offsets[r + 1] - offsets[r],
                            offsets[r2 + 1] - offsets[r2]);
    }
};

/// Diagonal blocks diag(eta^r); off-diagonal blocks are the double trapezoid
/// projections of the cross surfaces on the marginal eigenfunctions.
/// `cross` is indexed r * R + r2; entries with r == r2 are ignored.
/// Eigenvalues below zero are clipped (the blocks then stop being exactly diagonal).
ScoreCovariance assemble_score_cov(std::span<const GridSurface> cross,
                                   std::span<const FpcaBasis> bases, const EvalGrid& grid);

/// Symmetric square root V sqrt(L) V'. Throws DomainError when the matrix has
/// an eigenvalue below -1e-8 * max(1, largest).
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& sigma);

/// Q sampled latent paths; paths[r] is G x Q.
struct LatentPathSample {
    std::vector<Eigen::MatrixXd> paths;

    int marks() const noexcept { return static_cast<int>(paths.size()); }
    int count() const noexcept { return paths.empty() ? 0 : static_cast<int>(paths[0].cols()); }
};

/// rows x cols iid N(0, 1); column q comes from its own stream keyed by (seed, q),
/// so columns can be drawn in parallel without changing the result.
Eigen::MatrixXd standard_normal_draws(int rows, int cols, std::uint64_t seed);

/// Paths mean^r + Phi^r xi^r with xi = sqrt(Sigma) z, using the leading
/// sigma.dimension() rows of `draws`.
LatentPathSample paths_from_draws(std::span<const GridFunction> means,
                                  const ScoreCovariance& sigma,
                                  std::span<const FpcaBasis> bases,
                                  const Eigen::MatrixXd& draws);

LatentPathSample sample_paths(std::span<const GridFunction> means, const ScoreCovariance& sigma,
                              std::span<const FpcaBasis> bases, int count, std::uint64_t seed);

} // namespace mmpp
