#include "mmpp/fpca.hpp"

#include "mmpp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace mmpp {

FpcaBasis eigendecompose(const GridSurface& gamma, const EvalGrid& grid) {
    const int G = grid.size();
    if (gamma.rows() != G || gamma.cols() != G) {
        throw DomainError("covariance surface does not match the grid");
    }
    const double scale = std::max(1.0, gamma.cwiseAbs().maxCoeff());
    const double asym = (gamma - gamma.transpose()).cwiseAbs().maxCoeff();
    if (!(asym <= 1e-8 * scale)) {
        throw DomainError("covariance surface is not symmetric (max asymmetry " +
                          std::to_string(asym) + ")");
    }
    const Eigen::VectorXd root_w = grid.weights().cwiseSqrt();
    const Eigen::MatrixXd weighted =
        root_w.asDiagonal() * (0.5 * (gamma + gamma.transpose())) * root_w.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(weighted);
    if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed");

    FpcaBasis basis;
    basis.eigenvalues.resize(G);
    basis.eigenfunctions.resize(G, G);
    for (int k = 0; k < G; ++k) {
        const int src = G - 1 - k;  // solver returns ascending order
        basis.eigenvalues[k] = std::max(0.0, solver.eigenvalues()[src]);
        Eigen::VectorXd phi = solver.eigenvectors().col(src).cwiseQuotient(root_w);
        Eigen::Index peak = 0;
        phi.cwiseAbs().maxCoeff(&peak);
        if (phi[peak] < 0.0) phi = -phi;
        basis.eigenfunctions.col(k) = phi;
    }
    return basis;
}

FpcaBasis truncate(const FpcaBasis& basis, double energy) {
    if (!(energy > 0.0 && energy <= 1.0)) throw DomainError("energy must lie in (0, 1]");
    if (basis.rank() < 1) throw DomainError("empty basis");
    const double total = basis.eigenvalues.sum();
    int keep = 1;
    if (total > 0.0) {
        const double target = energy * total * (1.0 - 1e-12);
        double cumulative = 0.0;
        for (keep = 1; keep <= basis.rank(); ++keep) {
            cumulative += basis.eigenvalues[keep - 1];
            if (cumulative >= target) break;
        }
        keep = std::min(keep, basis.rank());
    }
    FpcaBasis out;
    out.eigenvalues = basis.eigenvalues.head(keep);
    out.eigenfunctions = basis.eigenfunctions.leftCols(keep);
    return out;
}

ScoreCovariance assemble_score_cov(std::span<const GridSurface> cross,
                                   std::span<const FpcaBasis> bases, const EvalGrid& grid) {
    const int R = static_cast<int>(bases.size());
    if (R < 1) throw DomainError("no bases given");
    if (cross.size() != static_cast<std::size_t>(R) * R) {
        throw DomainError("expected R * R cross surfaces");
    }
    ScoreCovariance sigma;
    sigma.offsets.assign(R + 1, 0);
    for (int r = 0; r < R; ++r) {
        if (bases[r].eigenfunctions.rows() != grid.size()) {
            throw DomainError("basis does not match the grid");
        }
        sigma.offsets[r + 1] = sigma.offsets[r] + bases[r].rank();
    }
    const int P = sigma.offsets[R];
    sigma.matrix = Eigen::MatrixXd::Zero(P, P);
    const auto& w = grid.weights();
    for (int r = 0; r < R; ++r) {
        const int pr = bases[r].rank();
        sigma.matrix.block(sigma.offsets[r], sigma.offsets[r], pr, pr) =
            bases[r].eigenvalues.asDiagonal();
        for (int r2 = r + 1; r2 < R; ++r2) {
            const GridSurface& gamma = cross[r * R + r2];
            if (gamma.rows() != grid.size() || gamma.cols() != grid.size()) {
                throw DomainError("cross surface does not match the grid");
            }
            const Eigen::MatrixXd left = bases[r].eigenfunctions.transpose() * w.asDiagonal();
            const Eigen::MatrixXd right = w.asDiagonal() * bases[r2].eigenfunctions;
            const Eigen::MatrixXd block = left * gamma * right;
            sigma.matrix.block(sigma.offsets[r], sigma.offsets[r2], pr, bases[r2].rank()) = block;
            sigma.matrix.block(sigma.offsets[r2], sigma.offsets[r], bases[r2].rank(), pr) =
                block.transpose();
        }
    }
    if (R > 1) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma.matrix);
        if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed");
        const auto& values = solver.eigenvalues();
        const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
        if (values.minCoeff() < -1e-12 * scale) {
            const Eigen::VectorXd clipped = values.cwiseMax(0.0);
            Eigen::MatrixXd repaired =
                solver.eigenvectors() * clipped.asDiagonal() * solver.eigenvectors().transpose();
            sigma.matrix = 0.5 * (repaired + repaired.transpose());
            sigma.repaired = true;
        }
    }
    return sigma;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& sigma) {
    if (sigma.size() == 0) return sigma;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
    if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    const auto& values = solver.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    if (values.minCoeff() < -1e-8 * scale) {
        throw DomainError("score covariance is not positive semidefinite (min eigenvalue " +
                          std::to_string(values.minCoeff()) + ")");
    }
    const Eigen::VectorXd roots = values.cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

Eigen::MatrixXd standard_normal_draws(int rows, int cols, std::uint64_t seed) {
    Eigen::MatrixXd z(rows, cols);
#pragma omp parallel for schedule(static)
    for (int q = 0; q < cols; ++q) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(q), 0x9e3779b9u};
        std::mt19937_64 engine(seq);
        std::normal_distribution<double> normal;
        for (int k = 0; k < rows; ++k) z(k, q) = normal(engine);
    }
    return z;
}

LatentPathSample paths_from_draws(std::span<const GridFunction> means,
                                  const ScoreCovariance& sigma,
                                  std::span<const FpcaBasis> bases,
                                  const Eigen::MatrixXd& draws) {
    const int R = static_cast<int>(bases.size());
    if (static_cast<int>(means.size()) != R || static_cast<int>(sigma.offsets.size()) != R + 1) {
        throw DomainError("means, bases and score covariance disagree on the mark count");
    }
    if (draws.rows() < sigma.dimension()) throw DomainError("not enough standard normal rows");
    const Eigen::MatrixXd scores =
        symmetric_sqrt(sigma.matrix) * draws.topRows(sigma.dimension());
    LatentPathSample sample;
    sample.paths.reserve(R);
    for (int r = 0; r < R; ++r) {
        const int pr = bases[r].rank();
        Eigen::MatrixXd x = bases[r].eigenfunctions * scores.middleRows(sigma.offsets[r], pr);
        x.colwise() += means[r];
        sample.paths.push_back(std::move(x));
    }
    return sample;
}

LatentPathSample sample_paths(std::span<const GridFunction> means, const ScoreCovariance& sigma,
                              std::span<const FpcaBasis> bases, int count, std::uint64_t seed) {
    if (count < 1) throw DomainError("path count must be >= 1");
    return paths_from_draws(means, sigma, bases,
                            standard_normal_draws(sigma.dimension(), count, seed));
}

} // namespace mmpp
