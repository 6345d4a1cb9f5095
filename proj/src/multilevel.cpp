#include "mmpp/multilevel.hpp"

#include "mmpp/errors.hpp"
#include "mmpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmpp {

namespace {

double clamped_log_ratio(double num, double den) {
    double ratio;
    if (num <= 0.0 && den <= 0.0) {
        ratio = 1.0;
    } else if (den <= 0.0) {
        ratio = 1.0 / kRatioFloor;
    } else {
        ratio = std::clamp(num / den, kRatioFloor, 1.0 / kRatioFloor);
    }
    return std::log(ratio);
}

void require_nonzero(const GridSurface& s, char name, int r, int r2) {
    if (s.cwiseAbs().maxCoeff() > 0.0) return;
    throw InsufficientDataError(std::string("estimator ") + name + " is identically zero for marks (" +
                                std::to_string(r + 1) + ", " + std::to_string(r2 + 1) + ")");
}

} // namespace

NuisanceParams nuisance_from_estimators(const FourEstimators& est) {
    const int R = est.marks;
    for (int r = 0; r < R; ++r) {
        for (int r2 = 0; r2 < R; ++r2) {
            require_nonzero(est.a(r, r2), 'A', r, r2);
            require_nonzero(est.b(r, r2), 'B', r, r2);
            require_nonzero(est.c(r, r2), 'C', r, r2);
            require_nonzero(est.d(r, r2), 'D', r, r2);
        }
    }
    const auto G = est.a(0, 0).rows();
    std::vector<GridSurface> raw_y(R * R), raw_z(R * R);
#pragma omp parallel for
    for (int k = 0; k < R * R; ++k) {
        const int r = k / R, r2 = k % R;
        const auto &A = est.a(r, r2), &B = est.b(r, r2), &C = est.c(r, r2), &D = est.d(r, r2);
        GridSurface y(G, G), z(G, G);
        for (Eigen::Index t = 0; t < G; ++t) {
            for (Eigen::Index s = 0; s < G; ++s) {
                y(s, t) = clamped_log_ratio(C(s, t), D(s, t));
                z(s, t) = clamped_log_ratio(A(s, t) * D(s, t), B(s, t) * C(s, t));
            }
        }
        raw_y[k] = std::move(y);
        raw_z[k] = std::move(z);
    }
    NuisanceParams out;
    out.marks = R;
    out.gamma_y.resize(R * R);
    out.gamma_z.resize(R * R);
    for (int r = 0; r < R; ++r) {
        for (int r2 = 0; r2 < R; ++r2) {
            out.gamma_y[r * R + r2] = 0.5 * (raw_y[r * R + r2] + raw_y[r2 * R + r].transpose());
            out.gamma_z[r * R + r2] = 0.5 * (raw_z[r * R + r2] + raw_z[r2 * R + r].transpose());
        }
    }
    return out;
}

NuisanceParams estimate_nuisance(const SequenceMatrix& matrix, const EvalGrid& grid,
                                 const KernelConfig& cfg) {
    return nuisance_from_estimators(four_estimators(matrix, grid, cfg));
}

GridFunction back_adjust(const GridFunction& pooled_mean, const GridSurface& gamma_y,
                         const GridSurface& gamma_z, int slots) {
    return pooled_mean - 0.5 * gamma_y.diagonal() - 0.5 * gamma_z.diagonal() -
           GridFunction::Constant(pooled_mean.size(), std::log(static_cast<double>(slots)));
}

MultilevelFit fit_multilevel(const SequenceMatrix& matrix, const MultilevelConfig& cfg) {
    const int m = matrix.slots();
    if (m < 2) {
        throw DomainError("multi-level fit needs m >= 2 (got m=" + std::to_string(m) +
                          "); use the single-level learner");
    }
    cfg.fit.validate();
    const double T = matrix.horizon();
    const EvalGrid grid(T, cfg.fit.grid_size);
    const KernelConfig kcfg{cfg.fit.kernel,
                            cfg.nuisance_bandwidth > 0.0 ? cfg.nuisance_bandwidth : 0.1 * T, T};

    MultilevelFit out;
    out.slots = m;
    out.nuisance = estimate_nuisance(matrix, grid, kcfg);
    const auto rows = account_rows(matrix);
    out.aggregated = fit_rows(rows, T, cfg.fit);
    const int R = matrix.marks();
    for (int c = 0; c < out.aggregated.clusters(); ++c) {
        for (int r = 0; r < R; ++r) {
            out.means.push_back(back_adjust(out.aggregated.params.mean(c, r),
                                            out.nuisance.y(r, r), out.nuisance.z(r, r), m));
        }
    }
    return out;
}

Membership predict_membership(const FittedModel& model, const SequenceMatrix& matrix) {
    if (matrix.marks() != model.marks()) {
        throw DomainError("data has " + std::to_string(matrix.marks()) + " marks, model has " +
                          std::to_string(model.marks()));
    }
    const auto rows = account_rows(matrix);
    Membership out;
    out.posterior = predict_posterior(model, rows);
    out.labels = argmax_labels(out.posterior);
    return out;
}

Membership predict_membership(const MultilevelFit& fit, const SequenceMatrix& matrix) {
    const FittedModel& model = fit.aggregated;
    if (matrix.marks() != model.marks()) {
        throw DomainError("data has " + std::to_string(matrix.marks()) + " marks, model has " +
                          std::to_string(model.marks()));
    }
    const auto rows = account_rows(matrix);
    const double shift =
        std::log(static_cast<double>(matrix.slots()) / static_cast<double>(fit.slots));
    Membership out;
    out.posterior = predict_posterior(model, rows, shift);
    out.labels = argmax_labels(out.posterior);
    return out;
}

} // namespace mmpp
