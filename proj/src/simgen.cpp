#include "mmpp/simgen.hpp"

#include "mmpp/errors.hpp"
#include "mmpp/fpca.hpp"
#include "mmpp/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mmpp {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kIntensityCeiling = 1e12;

enum : std::uint64_t { kSpecStream = 1, kDayStream, kPathStream, kEventStream };

double round_time(double t, double horizon) {
    return std::clamp(std::round(t * 1e9) / 1e9, 1e-9, horizon);
}

Eigen::VectorXd uniform_vector(std::mt19937_64& engine, int size, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd v(size);
    for (int k = 0; k < size; ++k) v[k] = u(engine);
    return v;
}

// psi_k(t) for k = 1..50 as columns of a G x 50 matrix.
Eigen::MatrixXd phase_sines(const Eigen::VectorXd& tilde, const EvalGrid& grid) {
    Eigen::MatrixXd psi(grid.size(), kFourierTerms);
    for (int k = 1; k <= kFourierTerms; ++k) {
        for (int g = 0; g < grid.size(); ++g) psi(g, k - 1) = std::sin(k * kPi * grid[g] + kPi * tilde[k]);
    }
    return psi;
}

Eigen::VectorXd term_scales(const Eigen::VectorXd& tilde) {
    Eigen::VectorXd w(kFourierTerms);
    for (int k = 1; k <= kFourierTerms; ++k) w[k - 1] = std::sqrt(tilde[k] * std::abs(zeta(k)));
    return w;
}

} // namespace

double zeta(int k) {
    const double mag = 1.0 / ((k + 1.0) * (k + 1.0));
    return k % 2 == 0 ? -mag : mag;
}

ClusterSpecX ClusterSpecX::zero(int marks) {
    ClusterSpecX s;
    s.marks = marks;
    s.cos_coef.assign(marks, Eigen::VectorXd::Zero(kFourierTerms + 1));
    s.sin_coef.assign(marks, Eigen::VectorXd::Zero(kFourierTerms + 1));
    s.tilde.assign(marks, Eigen::VectorXd::Zero(kFourierTerms + 1));
    s.cross.assign(static_cast<std::size_t>(marks) * marks,
                   Eigen::MatrixXd::Zero(kFourierTerms, kFourierTerms));
    return s;
}

std::vector<ClusterSpecX> gen_cluster_specs(int clusters, int marks, std::uint64_t seed) {
    if (clusters < 1 || marks < 1) throw DomainError("need C >= 1 and R >= 1");
    std::mt19937_64 engine(derive_seed(seed, {kSpecStream}));
    std::vector<ClusterSpecX> specs;
    for (int c = 0; c < clusters; ++c) {
        ClusterSpecX s = ClusterSpecX::zero(marks);
        for (int r = 0; r < marks; ++r) {
            s.cos_coef[r] = uniform_vector(engine, kFourierTerms + 1, -1.0, 1.0);
            s.sin_coef[r] = uniform_vector(engine, kFourierTerms + 1, -1.0, 1.0);
            s.tilde[r] = uniform_vector(engine, kFourierTerms + 1, 0.0, 0.3);
            s.tilde[r][0] = 0.0;
        }
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int r = 0; r < marks; ++r) {
            for (int r2 = r + 1; r2 < marks; ++r2) {
                Eigen::MatrixXd z(kFourierTerms, kFourierTerms);
                for (int k2 = 0; k2 < kFourierTerms; ++k2) {
                    for (int k = 0; k < kFourierTerms; ++k) z(k, k2) = u(engine);
                }
                s.cross[r2 * marks + r] = z.transpose();
                s.cross[r * marks + r2] = std::move(z);
            }
        }
        specs.push_back(std::move(s));
    }
    return specs;
}

GridFunction cluster_mean(const ClusterSpecX& spec, int r, const EvalGrid& grid) {
    GridFunction mu = GridFunction::Ones(grid.size());
    for (int g = 0; g < grid.size(); ++g) {
        const double t = grid[g];
        for (int k = 0; k <= kFourierTerms; ++k) {
            mu[g] += zeta(k) * (spec.cos_coef[r][k] * std::cos(k * kPi * t) +
                                spec.sin_coef[r][k] * std::sin(k * kPi * t));
        }
    }
    return mu;
}

GridSurface cluster_covariance(const ClusterSpecX& spec, int r, int r2, const EvalGrid& grid) {
    const Eigen::MatrixXd psi_s = phase_sines(spec.tilde[r], grid);
    if (r == r2) {
        Eigen::VectorXd lambda(kFourierTerms);
        for (int k = 1; k <= kFourierTerms; ++k) lambda[k - 1] = spec.tilde[r][k] * std::abs(zeta(k));
        GridSurface gamma = psi_s * lambda.asDiagonal() * psi_s.transpose();
        return 0.5 * (gamma + gamma.transpose());
    }
    const Eigen::MatrixXd psi_t = phase_sines(spec.tilde[r2], grid);
    const Eigen::MatrixXd coupling = term_scales(spec.tilde[r]).asDiagonal() *
                                     spec.cross[r * spec.marks + r2] *
                                     term_scales(spec.tilde[r2]).asDiagonal();
    return psi_s * coupling * psi_t.transpose();
}

double y_basis(int k, double t) { return k == 0 ? 1.0 : std::sin(2.0 * kPi * t); }

double z_basis(int k, double t) {
    const bool inside = k == 0 ? (t >= 0.0 && t <= 0.5) : (t > 0.5 * k && t <= 0.5 * (k + 1));
    return inside ? 2.0 * std::sin(4.0 * kPi * t) : 0.0;
}

GridFunction y_variance_curve(const DayResidualSpec& spec, const EvalGrid& grid) {
    const double scale = spec.ar_current * spec.ar_current + spec.ar_previous * spec.ar_previous;
    GridFunction v(grid.size());
    for (int g = 0; g < grid.size(); ++g) {
        const double s = y_basis(1, grid[g]);
        v[g] = scale * spec.y_variance * (1.0 + s * s);
    }
    return v;
}

GridFunction z_variance_curve(const DayResidualSpec& spec, const EvalGrid& grid) {
    GridFunction v(grid.size());
    for (int g = 0; g < grid.size(); ++g) {
        double total = 0.0;
        for (int k = 0; k < 4; ++k) total += z_basis(k, grid[g]) * z_basis(k, grid[g]);
        v[g] = spec.z_variance * total;
    }
    return v;
}

GridFunction z_residual(const DayResidualSpec& spec, const EvalGrid& grid, std::mt19937_64& engine) {
    std::normal_distribution<double> normal(0.0, std::sqrt(spec.z_variance));
    double xi[4];
    for (double& x : xi) x = normal(engine);
    GridFunction z(grid.size());
    for (int g = 0; g < grid.size(); ++g) {
        z[g] = 0.0;
        for (int k = 0; k < 4; ++k) z[g] += xi[k] * z_basis(k, grid[g]);
    }
    return z;
}

DayResidual gen_day_residual(int slots, int marks, const EvalGrid& grid, std::uint64_t seed,
                             const DayResidualSpec& spec) {
    if (slots < 1 || marks < 1) throw DomainError("need m >= 1 and R >= 1");
    std::mt19937_64 engine(derive_seed(seed, {kDayStream}));
    std::normal_distribution<double> normal(0.0, std::sqrt(spec.y_variance));
    const int G = grid.size();
    std::vector<GridFunction> raw;
    for (int j = 0; j < slots; ++j) {
        for (int r = 0; r < marks; ++r) {
            const double a = normal(engine), b = normal(engine);
            GridFunction y(G);
            for (int g = 0; g < G; ++g) y[g] = a * y_basis(0, grid[g]) + b * y_basis(1, grid[g]);
            raw.push_back(std::move(y));
        }
    }
    DayResidual out;
    for (int j = 0; j < slots; ++j) {
        for (int r = 0; r < marks; ++r) {
            if (j == 0) {
                out.y.push_back(raw[r]);
            } else {
                out.y.push_back(spec.ar_current * raw[j * marks + r] +
                                spec.ar_previous * raw[(j - 1) * marks + r]);
            }
        }
    }
    std::mt19937_64 cell(derive_seed(seed, {kDayStream, 1}));
    for (int k = 0; k < slots * marks; ++k) out.z.push_back(z_residual(spec, grid, cell));
    return out;
}

std::vector<double> sample_lgcp(const GridFunction& log_intensity, const EvalGrid& grid,
                                std::mt19937_64& engine) {
    if (log_intensity.size() != grid.size()) throw DomainError("log-intensity is not on the grid");
    if (!log_intensity.allFinite()) throw DomainError("log-intensity must be finite");
    const double ceiling = std::log(kIntensityCeiling);
    if (log_intensity.maxCoeff() > ceiling) {
        throw NumericalError("intensity exceeds 1e12; parameters are running away");
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> times;
    for (int g = 0; g + 1 < grid.size(); ++g) {
        const double a = log_intensity[g], b = log_intensity[g + 1];
        const double peak = std::max(a, b);
        const double t0 = grid[g], width = grid[g + 1] - t0;
        std::poisson_distribution<long> count(std::exp(peak) * width);
        const long proposals = count(engine);
        for (long p = 0; p < proposals; ++p) {
            const double frac = unit(engine);
            const double keep = std::exp(a + frac * (b - a) - peak);
            if (unit(engine) < keep) times.push_back(t0 + frac * width);
        }
    }
    std::sort(times.begin(), times.end());
    return times;
}

std::vector<double> sample_lgcp(const GridFunction& log_intensity, const EvalGrid& grid,
                                std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    return sample_lgcp(log_intensity, grid, engine);
}

void SimConfig::validate() const {
    if (clusters < 1) throw DomainError("clusters must be >= 1");
    if (per_cluster < 1) throw DomainError("accounts per cluster must be >= 1");
    if (slots < 1) throw DomainError("days must be >= 1");
    if (marks < 1) throw DomainError("marks must be >= 1");
    if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
    if (grid_size < 3) throw DomainError("grid size must be >= 3");
    if (residual.y_variance < 0.0 || residual.z_variance < 0.0) {
        throw DomainError("variances must be non-negative");
    }
}

GridFunction GroundTruth::marginal_intensity(int r, bool sampled) const {
    GridFunction rho = GridFunction::Zero(grid.size());
    const int C = static_cast<int>(weights.size());
    for (int c = 0; c < C; ++c) {
        GridFunction v = sampled ? sampled_variances[c * marks + r]
                                 : GridFunction(covariances[(c * marks + r) * marks + r].diagonal());
        if (slots > 1) v += y_variance + z_variance;
        rho += weights[c] * (means[c * marks + r] + 0.5 * v).array().exp().matrix();
    }
    return rho;
}

LabeledDataset simulate_dataset(const SimConfig& cfg) {
    cfg.validate();
    return simulate_dataset(cfg, gen_cluster_specs(cfg.clusters, cfg.marks, cfg.seed));
}

LabeledDataset simulate_dataset(const SimConfig& cfg, const std::vector<ClusterSpecX>& specs) {
    cfg.validate();
    if (static_cast<int>(specs.size()) != cfg.clusters) throw DomainError("one spec per cluster");
    const int C = cfg.clusters, R = cfg.marks, m = cfg.slots;
    const int n = C * cfg.per_cluster;
    const EvalGrid grid(cfg.horizon, cfg.grid_size);
    const int G = grid.size();

    GroundTruth truth;
    truth.grid = grid;
    truth.marks = R;
    truth.slots = m;
    truth.weights = Eigen::VectorXd::Constant(C, 1.0 / C);
    truth.y_variance = y_variance_curve(cfg.residual, grid);
    truth.z_variance = z_variance_curve(cfg.residual, grid);

    // X paths: KL sampling from the constructed covariance grids
    std::vector<Eigen::MatrixXd> x_paths(static_cast<std::size_t>(C) * R);
    for (int c = 0; c < C; ++c) {
        if (specs[c].marks != R) throw DomainError("spec mark count differs from R");
        std::vector<GridFunction> means;
        std::vector<FpcaBasis> bases;
        std::vector<GridSurface> cross;
        for (int r = 0; r < R; ++r) {
            means.push_back(cluster_mean(specs[c], r, grid));
            for (int r2 = 0; r2 < R; ++r2) cross.push_back(cluster_covariance(specs[c], r, r2, grid));
        }
        for (int r = 0; r < R; ++r) bases.push_back(truncate(eigendecompose(cross[r * R + r], grid), 1.0));
        const ScoreCovariance sigma = assemble_score_cov(cross, bases, grid);

        Eigen::MatrixXd draws(sigma.dimension(), cfg.per_cluster);
#pragma omp parallel for
        for (int k = 0; k < cfg.per_cluster; ++k) {
            const int account = c * cfg.per_cluster + k;
            std::mt19937_64 engine(derive_seed(cfg.seed, {kPathStream, static_cast<std::uint64_t>(account)}));
            std::normal_distribution<double> normal;
            for (int d = 0; d < sigma.dimension(); ++d) draws(d, k) = normal(engine);
        }
        auto sample = paths_from_draws(means, sigma, bases, draws);
        for (int r = 0; r < R; ++r) {
            x_paths[c * R + r] = std::move(sample.paths[r]);
            GridFunction var = GridFunction::Zero(G);
            const int lo = sigma.offsets[r], p = sigma.offsets[r + 1] - lo;
            const Eigen::MatrixXd block = sigma.matrix.block(lo, lo, p, p);
            const Eigen::MatrixXd& phi = bases[r].eigenfunctions;
            var = (phi * block).cwiseProduct(phi).rowwise().sum();
            truth.sampled_variances.push_back(std::move(var));
            truth.means.push_back(means[r]);
        }
        for (auto& s : cross) truth.covariances.push_back(std::move(s));
    }

    const DayResidual days = m > 1 ? gen_day_residual(m, R, grid, cfg.seed, cfg.residual) : DayResidual{};
    std::vector<EventList> entries(static_cast<std::size_t>(n) * m);
    LabelVector labels(n);
    std::vector<std::string> failures(n);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        const int c = i / cfg.per_cluster, k = i % cfg.per_cluster;
        labels[i] = c + 1;
        std::mt19937_64 engine(derive_seed(cfg.seed, {kEventStream, static_cast<std::uint64_t>(i)}));
        try {
            for (int j = 0; j < m; ++j) {
                EventList& entry = entries[static_cast<std::size_t>(i) * m + j];
                for (int r = 0; r < R; ++r) {
                    GridFunction lambda = x_paths[c * R + r].col(k);
                    if (m > 1) lambda += days.y[j * R + r] + z_residual(cfg.residual, grid, engine);
                    for (double t : sample_lgcp(lambda, grid, engine)) {
                        entry.push_back({round_time(t, cfg.horizon), r + 1});
                    }
                }
            }
        } catch (const NumericalError& e) {
            failures[i] = e.what();
        }
    }
    for (int i = 0; i < n; ++i) {
        if (!failures[i].empty()) throw NumericalError("account " + std::to_string(i) + ": " + failures[i]);
    }
    return LabeledDataset{SequenceMatrix({n, m, R, cfg.horizon}, std::move(entries)), std::move(labels),
                          std::move(truth)};
}

} // namespace mmpp
