#include "mmpp/es_single.hpp"

#include "mmpp/errors.hpp"
#include "mmpp/seeding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <string>

namespace mmpp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kAccountBlock = 16;

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& values) {
    const double peak = values.maxCoeff();
    if (!std::isfinite(peak)) return peak;
    return peak + std::log((values.array() - peak).exp().sum());
}

GridFunction clamp_path(const GridFunction& path) {
    return path.cwiseMax(-kLogIntensityClamp).cwiseMin(kLogIntensityClamp);
}

// Replace masked entries by the value of the nearest unmasked entry
// (4-neighbour breadth-first order, sources visited row-major).
void fill_masked(GridSurface& values, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& valid) {
    const int rows = static_cast<int>(values.rows()), cols = static_cast<int>(values.cols());
    if (valid.all()) return;
    if (!valid.any()) {
        values.setZero();
        return;
    }
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> seen = valid;
    std::deque<std::pair<int, int>> queue;
    for (int s = 0; s < rows; ++s) {
        for (int t = 0; t < cols; ++t) {
            if (valid(s, t)) queue.emplace_back(s, t);
        }
    }
    constexpr int ds[4] = {-1, 1, 0, 0};
    constexpr int dt[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const auto [s, t] = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
            const int s2 = s + ds[k], t2 = t + dt[k];
            if (s2 < 0 || s2 >= rows || t2 < 0 || t2 >= cols || seen(s2, t2)) continue;
            seen(s2, t2) = true;
            values(s2, t2) = values(s, t);
            queue.emplace_back(s2, t2);
        }
    }
}

PosteriorMatrix one_hot(const std::vector<int>& labels, int clusters) {
    PosteriorMatrix w = PosteriorMatrix::Zero(static_cast<Eigen::Index>(labels.size()), clusters);
    for (std::size_t i = 0; i < labels.size(); ++i) w(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    return w;
}

PosteriorMatrix random_responsibilities(int accounts, int clusters, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::exponential_distribution<double> expo(1.0);
    PosteriorMatrix w(accounts, clusters);
    for (int i = 0; i < accounts; ++i) {
        for (int c = 0; c < clusters; ++c) w(i, c) = expo(engine);
        w.row(i) /= w.row(i).sum();
    }
    return w;
}

} // namespace

MixtureParams::MixtureParams(int clusters_, int marks_, int grid_size)
    : clusters(clusters_), marks(marks_),
      weights(Eigen::VectorXd::Constant(clusters_, 1.0 / clusters_)),
      means(static_cast<std::size_t>(clusters_) * marks_, GridFunction::Zero(grid_size)),
      covariances(static_cast<std::size_t>(clusters_) * marks_ * marks_,
                  GridSurface::Zero(grid_size, grid_size)) {}

GridFunction first_order_intensity(const GridFunction& mean, const GridFunction& variance) {
    if (mean.size() != variance.size()) throw DomainError("curves do not share a grid");
    return (mean + 0.5 * variance).array().exp().matrix();
}

GridSurface second_order_intensity(const GridFunction& rho_s, const GridFunction& rho_t,
                                   const GridSurface& gamma) {
    if (gamma.rows() != rho_s.size() || gamma.cols() != rho_t.size()) {
        throw DomainError("surface does not match the curves");
    }
    return (rho_s * rho_t.transpose()).cwiseProduct(gamma.array().exp().matrix());
}

QuadratureScheme build_quadrature(std::span<const double> events, const EvalGrid& grid) {
    const double tol = 1e-12 * grid.horizon();
    struct Node {
        double time;
        int count;
        bool on_grid;
    };
    std::vector<Node> merged;
    merged.reserve(grid.size() + events.size());
    std::size_t k = 0;
    for (int g = 0; g < grid.size(); ++g) {
        const double tg = grid[g];
        for (; k < events.size() && events[k] < tg - tol; ++k) {
            if (!merged.empty() && !merged.back().on_grid && merged.back().time == events[k]) {
                ++merged.back().count;
            } else {
                merged.push_back({events[k], 1, false});
            }
        }
        Node node{tg, 0, true};
        for (; k < events.size() && events[k] <= tg + tol; ++k) ++node.count;
        merged.push_back(node);
    }
    if (k != events.size()) throw DomainError("event time outside the quadrature window");

    QuadratureScheme scheme;
    const std::size_t count = merged.size();
    scheme.nodes.resize(count);
    scheme.weights.resize(count);
    scheme.counts.resize(count);
    for (std::size_t u = 0; u < count; ++u) {
        const double left = u > 0 ? merged[u].time - merged[u - 1].time : 0.0;
        const double right = u + 1 < count ? merged[u + 1].time - merged[u].time : 0.0;
        scheme.nodes[u] = merged[u].time;
        scheme.weights[u] = 0.5 * (left + right);
        scheme.counts[u] = merged[u].count;
    }
    return scheme;
}

AccountQuadrature build_quadrature(const MarkSplitSequence& row, const EvalGrid& grid) {
    AccountQuadrature schemes;
    schemes.reserve(row.times.size());
    for (const auto& times : row.times) schemes.push_back(build_quadrature(times, grid));
    return schemes;
}

double loglik_pp_hat(const AccountQuadrature& scheme, std::span<const GridFunction> path,
                     const EvalGrid& grid) {
    if (scheme.size() != path.size()) throw DomainError("path and scheme disagree on marks");
    double total = 0.0;
    for (std::size_t r = 0; r < scheme.size(); ++r) {
        const GridFunction x = clamp_path(path[r]);
        const auto& s = scheme[r];
        for (std::size_t u = 0; u < s.nodes.size(); ++u) {
            const double xu = grid.interpolate(x, s.nodes[u]);
            total += s.weights[u] * (s.response(u) * xu - std::exp(xu));
        }
    }
    return total;
}

GridFunction sampled_variance(std::span<const FpcaBasis> bases, const ScoreCovariance& sigma, int r) {
    const int lo = sigma.offsets[r], p = sigma.offsets[r + 1] - lo;
    const Eigen::MatrixXd& phi = bases[r].eigenfunctions;
    return (phi * sigma.matrix.block(lo, lo, p, p)).cwiseProduct(phi).rowwise().sum();
}

std::vector<GridFunction> sampling_means(const MixtureParams& params, int cluster,
                                         std::span<const FpcaBasis> bases,
                                         const ScoreCovariance& sigma) {
    std::vector<GridFunction> means;
    for (int r = 0; r < params.marks; ++r) {
        means.push_back(params.mean(cluster, r) +
                        0.5 * (GridFunction(params.covariance(cluster, r, r).diagonal()) -
                               sampled_variance(bases, sigma, r)));
    }
    return means;
}

ClusterModel build_cluster_model(const MixtureParams& params, int cluster, const EvalGrid& grid,
                                 double energy) {
    const int R = params.marks;
    ClusterModel model;
    std::vector<GridSurface> cross;
    cross.reserve(static_cast<std::size_t>(R) * R);
    for (int r = 0; r < R; ++r) {
        model.bases.push_back(truncate(eigendecompose(params.covariance(cluster, r, r), grid), energy));
        for (int r2 = 0; r2 < R; ++r2) cross.push_back(params.covariance(cluster, r, r2));
    }
    model.sigma = assemble_score_cov(cross, model.bases, grid);
    model.means = sampling_means(params, cluster, model.bases, model.sigma);
    return model;
}

LatentPathSample cluster_paths(const ClusterModel& cluster, const Eigen::MatrixXd& draws) {
    LatentPathSample sample = paths_from_draws(cluster.means, cluster.sigma, cluster.bases, draws);
    for (auto& x : sample.paths) x = x.cwiseMax(-kLogIntensityClamp).cwiseMin(kLogIntensityClamp);
    return sample;
}

double mc_likelihood(const AccountQuadrature& scheme, const ClusterModel& cluster,
                     const EvalGrid& grid, int samples, std::uint64_t seed) {
    if (samples < 1) throw DomainError("Monte Carlo sample size must be >= 1");
    const int R = static_cast<int>(cluster.means.size());
    const auto sample =
        cluster_paths(cluster, standard_normal_draws(R * grid.size(), samples, seed));
    Eigen::RowVectorXd values(samples);
    std::vector<GridFunction> path(R);
    for (int q = 0; q < samples; ++q) {
        for (int r = 0; r < R; ++r) path[r] = sample.paths[r].col(q);
        values[q] = loglik_pp_hat(scheme, path, grid);
    }
    return log_sum_exp(values) - std::log(static_cast<double>(samples));
}

QuadratureTable::QuadratureTable(std::span<const MarkSplitSequence> rows, const EvalGrid& grid)
    : accounts_(static_cast<int>(rows.size())) {
    if (rows.empty()) throw DomainError("no accounts");
    const int R = rows[0].marks();
    const int G = grid.size();
    grid_weights_.assign(R, Eigen::MatrixXd::Zero(accounts_, G));
    event_loads_.assign(R, Eigen::MatrixXd::Zero(accounts_, G));
    off_grid_.resize(R);
    offsets_.assign(R, std::vector<std::size_t>(accounts_ + 1, 0));
    for (int i = 0; i < accounts_; ++i) {
        if (rows[i].marks() != R) throw DomainError("rows disagree on the mark count");
        for (int r = 0; r < R; ++r) {
            const auto scheme = build_quadrature(rows[i].times[r], grid);
            int g = 0;
            for (std::size_t u = 0; u < scheme.nodes.size(); ++u) {
                const double t = scheme.nodes[u];
                if (g < G && t == grid[g]) {
                    grid_weights_[r](i, g) = scheme.weights[u];
                    event_loads_[r](i, g) += scheme.counts[u];
                    ++g;
                    continue;
                }
                const auto [lo, frac] = grid.locate(t);
                off_grid_[r].push_back({lo, frac, scheme.weights[u]});
                event_loads_[r](i, lo) += scheme.counts[u] * (1.0 - frac);
                event_loads_[r](i, lo + 1) += scheme.counts[u] * frac;
            }
            offsets_[r][i + 1] = off_grid_[r].size();
        }
    }
}

std::span<const QuadratureTable::OffGridNode> QuadratureTable::off_grid(int account, int r) const {
    const auto begin = offsets_[r][account], end = offsets_[r][account + 1];
    return {off_grid_[r].data() + begin, end - begin};
}

Eigen::MatrixXd cluster_loglik(const QuadratureTable& table,
                               std::span<const ClusterModel> clusters,
                               const Eigen::MatrixXd& draws, std::span<const int> accounts) {
    std::vector<int> all;
    if (accounts.empty()) {
        all.resize(table.accounts());
        for (int i = 0; i < table.accounts(); ++i) all[i] = i;
        accounts = all;
    }
    const int n = static_cast<int>(accounts.size());
    const int R = table.marks();
    const int C = static_cast<int>(clusters.size());
    const int Q = static_cast<int>(draws.cols());
    const double log_q = std::log(static_cast<double>(Q));
    Eigen::MatrixXd out(n, C);
    const int blocks = (n + kAccountBlock - 1) / kAccountBlock;
    for (int c = 0; c < C; ++c) {
        const auto sample = cluster_paths(clusters[c], draws);
        // Q x G layouts so one grid column is contiguous across paths
        std::vector<Eigen::MatrixXd> xt(R), et(R);
        for (int r = 0; r < R; ++r) {
            xt[r] = sample.paths[r].transpose();
            et[r] = xt[r].array().exp().matrix();
        }
#pragma omp parallel for schedule(dynamic)
        for (int b = 0; b < blocks; ++b) {
            const int first = b * kAccountBlock;
            const int len = std::min(kAccountBlock, n - first);
            const auto rows = accounts.subspan(first, len);
            Eigen::MatrixXd ll = Eigen::MatrixXd::Zero(len, Q);
            for (int r = 0; r < R; ++r) {
                ll.noalias() += table.event_loads(r)(rows, Eigen::all) * xt[r].transpose();
                ll.noalias() -= table.grid_weights(r)(rows, Eigen::all) * et[r].transpose();
                for (int k = 0; k < len; ++k) {
                    for (const auto& node : table.off_grid(rows[k], r)) {
                        ll.row(k).array() -=
                            node.weight * ((1.0 - node.frac) * xt[r].col(node.lo).array() +
                                           node.frac * xt[r].col(node.lo + 1).array())
                                              .exp()
                                              .transpose();
                    }
                }
            }
            for (int k = 0; k < len; ++k) out(first + k, c) = log_sum_exp(ll.row(k)) - log_q;
        }
    }
    return out;
}

namespace serial {

Eigen::MatrixXd cluster_loglik(std::span<const AccountQuadrature> schemes,
                               std::span<const ClusterModel> clusters,
                               const Eigen::MatrixXd& draws, const EvalGrid& grid) {
    const int n = static_cast<int>(schemes.size());
    const int C = static_cast<int>(clusters.size());
    const int Q = static_cast<int>(draws.cols());
    Eigen::MatrixXd out(n, C);
    for (int c = 0; c < C; ++c) {
        const auto sample = cluster_paths(clusters[c], draws);
        const int R = sample.marks();
        std::vector<GridFunction> path(R);
        for (int i = 0; i < n; ++i) {
            Eigen::RowVectorXd values(Q);
            for (int q = 0; q < Q; ++q) {
                for (int r = 0; r < R; ++r) path[r] = sample.paths[r].col(q);
                values[q] = loglik_pp_hat(schemes[i], path, grid);
            }
            out(i, c) = log_sum_exp(values) - std::log(static_cast<double>(Q));
        }
    }
    return out;
}

} // namespace serial

PosteriorMatrix posterior_from_loglik(const Eigen::MatrixXd& loglik, const Eigen::VectorXd& weights) {
    const auto n = loglik.rows(), C = loglik.cols();
    if (weights.size() != C) throw DomainError("weight count does not match cluster count");
    PosteriorMatrix post(n, C);
    const Eigen::RowVectorXd log_w = weights.array().log().matrix().transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd a = log_w + loglik.row(i);
        for (Eigen::Index c = 0; c < C; ++c) {
            if (std::isnan(a[c])) a[c] = kNegInf;
        }
        const double peak = a.maxCoeff();
        if (!std::isfinite(peak)) {
            throw DomainError("account " + std::to_string(i) +
                              " has zero likelihood under every cluster");
        }
        Eigen::RowVectorXd p = (a.array() - peak).exp().matrix();
        post.row(i) = p / p.sum();
    }
    return post;
}

double observed_loglik(const Eigen::MatrixXd& loglik, const Eigen::VectorXd& weights) {
    const Eigen::RowVectorXd log_w = weights.array().log().matrix().transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < loglik.rows(); ++i) {
        total += log_sum_exp(log_w + loglik.row(i));
    }
    return total;
}

PosteriorMatrix e_step(const QuadratureTable& table, const MixtureParams& params,
                       const EvalGrid& grid, double energy, int samples, std::uint64_t seed) {
    if (samples < 1) throw DomainError("Monte Carlo sample size must be >= 1");
    std::vector<ClusterModel> clusters;
    for (int c = 0; c < params.clusters; ++c) {
        clusters.push_back(build_cluster_model(params, c, grid, energy));
    }
    const auto draws = standard_normal_draws(params.marks * grid.size(), samples, seed);
    return posterior_from_loglik(cluster_loglik(table, clusters, draws), params.weights);
}

MixtureParams s_step(const PosteriorMatrix& posterior, const StatsTable& stats) {
    const int n = stats.accounts();
    const int R = stats.marks();
    const int C = static_cast<int>(posterior.cols());
    if (posterior.rows() != n) throw DomainError("posterior rows do not match the accounts");
    const int G = static_cast<int>(stats.points(0).cols());
    MixtureParams params(C, R, G);
    for (int c = 0; c < C; ++c) {
        const double total = posterior.col(c).sum();
        if (!(total >= 1e-8)) {
            throw DegenerateClusterError(
                "cluster " + std::to_string(c + 1) + " lost all responsibility", c);
        }
        params.weights[c] = total / n;
    }

    std::vector<std::vector<double>> weights(C);
    std::vector<GridFunction> expected_point(static_cast<std::size_t>(C) * R);
    for (int c = 0; c < C; ++c) {
        weights[c].assign(posterior.col(c).data(), posterior.col(c).data() + n);
        for (int r = 0; r < R; ++r) expected_point[c * R + r] = stats.weighted_point(weights[c], r);
    }

    // (c, r <= r2) triples
    std::vector<std::array<int, 3>> jobs;
    for (int c = 0; c < C; ++c) {
        for (int r = 0; r < R; ++r) {
            for (int r2 = r; r2 < R; ++r2) jobs.push_back({c, r, r2});
        }
    }
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        const auto [c, r, r2] = jobs[k];
        GridSurface pair = stats.weighted_pair(weights[c], r, r2);
        if (r == r2) pair = 0.5 * (pair + pair.transpose()).eval();
        const GridFunction& bs = expected_point[c * R + r];
        const GridFunction& bt = expected_point[c * R + r2];
        const double pi = params.weights[c];
        GridSurface gamma(G, G);
        Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid(G, G);
        for (int t = 0; t < G; ++t) {
            for (int s = 0; s < G; ++s) {
                const bool ok = pair(s, t) >= kStatFloor && bs[s] >= kStatFloor && bt[t] >= kStatFloor;
                valid(s, t) = ok;
                gamma(s, t) = ok ? std::clamp(std::log(pi * pair(s, t) / (bs[s] * bt[t])),
                                              -kCovarianceClamp, kCovarianceClamp)
                                 : 0.0;
            }
        }
        fill_masked(gamma, valid);
        if (r == r2) {
            params.covariance(c, r, r) = 0.5 * (gamma + gamma.transpose());
        } else {
            params.covariance(c, r2, r) = gamma.transpose();
            params.covariance(c, r, r2) = std::move(gamma);
        }
    }

    for (int c = 0; c < C; ++c) {
        const double pi = params.weights[c];
        for (int r = 0; r < R; ++r) {
            const GridFunction b = expected_point[c * R + r].cwiseMax(kStatFloor);
            params.mean(c, r) = (b / pi).array().log().matrix() -
                                0.5 * params.covariance(c, r, r).diagonal();
        }
    }
    return params;
}

std::size_t select_bandwidth(std::span<const double> bandwidths, std::span<const double> logliks) {
    if (bandwidths.empty() || bandwidths.size() != logliks.size()) {
        throw DomainError("bandwidth candidates and likelihoods must be non-empty and aligned");
    }
    auto value = [&](std::size_t k) { return std::isnan(logliks[k]) ? kNegInf : logliks[k]; };
    std::size_t best = 0;
    for (std::size_t k = 1; k < bandwidths.size(); ++k) {
        const double a = value(k), b = value(best);
        const double tol = std::isfinite(b) ? 1e-12 * std::max(1.0, std::abs(b)) : 0.0;
        if (a > b + tol || (std::abs(a - b) <= tol && bandwidths[k] > bandwidths[best]) ||
            (a == b && bandwidths[k] > bandwidths[best])) {
            best = k;
        }
    }
    return best;
}

std::vector<int> kmeans(const Eigen::MatrixXd& features, int clusters, int restarts,
                        std::uint64_t seed) {
    const int n = static_cast<int>(features.rows());
    if (clusters < 1 || clusters > n) {
        throw DomainError("k-means needs 1 <= C <= n (C=" + std::to_string(clusters) + ")");
    }
    std::mt19937_64 engine(seed);
    std::vector<int> best_labels(n, 0);
    double best_inertia = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < std::max(1, restarts); ++rep) {
        Eigen::MatrixXd centers(clusters, features.cols());
        std::uniform_int_distribution<int> pick(0, n - 1);
        centers.row(0) = features.row(pick(engine));
        Eigen::VectorXd d2 = (features.rowwise() - centers.row(0)).rowwise().squaredNorm();
        for (int c = 1; c < clusters; ++c) {
            const double total = d2.sum();
            int chosen = pick(engine);
            if (total > 0.0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double target = u(engine);
                for (chosen = 0; chosen < n - 1; ++chosen) {
                    target -= d2[chosen];
                    if (target <= 0.0) break;
                }
            }
            centers.row(c) = features.row(chosen);
            d2 = d2.cwiseMin((features.rowwise() - centers.row(c)).rowwise().squaredNorm());
        }
        std::vector<int> labels(n, -1);
        double inertia = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            bool changed = false;
            inertia = 0.0;
            Eigen::VectorXd dist(n);
            for (int i = 0; i < n; ++i) {
                Eigen::Index arg = 0;
                dist[i] = (centers.rowwise() - features.row(i)).rowwise().squaredNorm().minCoeff(&arg);
                if (labels[i] != static_cast<int>(arg)) {
                    labels[i] = static_cast<int>(arg);
                    changed = true;
                }
                inertia += dist[i];
            }
            if (!changed && iter > 0) break;
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters, features.cols());
            std::vector<int> sizes(clusters, 0);
            for (int i = 0; i < n; ++i) {
                sums.row(labels[i]) += features.row(i);
                ++sizes[labels[i]];
            }
            for (int c = 0; c < clusters; ++c) {
                if (sizes[c] > 0) {
                    centers.row(c) = sums.row(c) / sizes[c];
                } else {
                    Eigen::Index far = 0;
                    dist.maxCoeff(&far);
                    centers.row(c) = features.row(far);
                    dist[far] = 0.0;
                }
            }
        }
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_labels = labels;
        }
    }
    return best_labels;
}

void FitConfig::validate() const {
    if (clusters < 1) throw DomainError("cluster count must be >= 1");
    if (grid_size < 3) throw DomainError("grid size must be >= 3");
    if (mc_samples < 1) throw DomainError("Monte Carlo sample size must be >= 1");
    if (!(energy > 0.0 && energy <= 1.0)) throw DomainError("energy must lie in (0, 1]");
    if (!(tolerance > 0.0)) throw DomainError("tolerance must be positive");
    if (max_iterations < 1) throw DomainError("max iterations must be >= 1");
    if (restarts < 1) throw DomainError("restarts must be >= 1");
    if (kmeans_restarts < 1) throw DomainError("k-means restarts must be >= 1");
    if (selection_folds < 0 || selection_folds == 1) throw DomainError("selection folds must be 0 or >= 2");
    for (double h : bandwidths) {
        if (!(h > 0.0)) throw DomainError("bandwidths must be positive");
    }
}

std::vector<double> FitConfig::resolved_bandwidths(double horizon) const {
    std::vector<double> hs = bandwidths;
    if (hs.empty()) {
        for (double f : {0.05, 0.1, 0.2, 0.4}) hs.push_back(f * horizon / 2.0);
    }
    std::sort(hs.begin(), hs.end());
    hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
    return hs;
}

int effective_parameters(const FittedModel& model) {
    int k = model.clusters() - 1;
    for (const auto& cluster : model.fpca) {
        int total_rank = 0;
        for (const auto& basis : cluster.bases) total_rank += basis.rank();
        k += total_rank + total_rank * (total_rank + 1) / 2;
    }
    return k;
}

double bic_value(double loglik, int parameters, int accounts) {
    return -2.0 * loglik + parameters * std::log(static_cast<double>(accounts));
}

double bic(const FittedModel& model) {
    return bic_value(model.loglik, effective_parameters(model),
                     static_cast<int>(model.posterior.rows()));
}

std::uint64_t path_seed_for(std::uint64_t seed, int restart) {
    return derive_seed(seed, {0x70617468ULL, static_cast<std::uint64_t>(restart)});
}

namespace {

std::vector<ClusterModel> cluster_models(const MixtureParams& params, const EvalGrid& grid,
                                         double energy) {
    std::vector<ClusterModel> clusters;
    for (int c = 0; c < params.clusters; ++c) {
        clusters.push_back(build_cluster_model(params, c, grid, energy));
    }
    return clusters;
}

std::vector<std::vector<int>> account_folds(int accounts, int folds, std::uint64_t seed) {
    std::vector<int> order(accounts);
    for (int i = 0; i < accounts; ++i) order[i] = i;
    std::mt19937_64 engine(derive_seed(seed, {0x666f6c64ULL}));
    std::shuffle(order.begin(), order.end(), engine);
    std::vector<std::vector<int>> out(folds);
    for (int j = 0; j < accounts; ++j) out[j % folds].push_back(order[j]);
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

// Sum over folds of the observed log-likelihood of the held-out accounts under
// the S-step solution of the remaining ones.
double held_out_loglik(const PosteriorMatrix& posterior, const StatsTable& stats,
                       const QuadratureTable& quadrature, const EvalGrid& grid, double energy,
                       const Eigen::MatrixXd& draws, const std::vector<std::vector<int>>& folds) {
    const auto n = posterior.rows();
    double total = 0.0;
    for (const auto& fold : folds) {
        PosteriorMatrix train = posterior;
        for (int i : fold) train.row(i).setZero();
        MixtureParams params;
        try {
            params = s_step(train, stats);
        } catch (const DegenerateClusterError&) {
            return kNegInf;
        }
        params.weights = train.colwise().sum().transpose() / static_cast<double>(n - fold.size());
        const auto clusters = cluster_models(params, grid, energy);
        total += observed_loglik(cluster_loglik(quadrature, clusters, draws, fold), params.weights);
    }
    return total;
}

} // namespace

FittedModel fit_from(const PosteriorMatrix& initial, std::span<const StatsTable> stats,
                     const QuadratureTable& quadrature, const EvalGrid& grid,
                     const FitConfig& cfg, std::uint64_t path_seed) {
    if (stats.empty()) throw DomainError("no bandwidth candidates");
    const int R = stats[0].marks();
    const int n = stats[0].accounts();
    const Eigen::MatrixXd draws = standard_normal_draws(R * grid.size(), cfg.mc_samples, path_seed);
    std::vector<double> hs;
    for (const auto& table : stats) hs.push_back(table.config().bandwidth);
    const bool held_out = stats.size() > 1 && cfg.selection_folds >= 2 && n >= 2 * cfg.selection_folds;
    const auto folds = held_out ? account_folds(n, cfg.selection_folds, cfg.seed)
                                : std::vector<std::vector<int>>{};

    FittedModel model;
    model.grid = grid;
    model.kernel = stats[0].config().kernel;
    model.seed = cfg.seed;
    model.path_seed = path_seed;
    model.mc_samples = cfg.mc_samples;
    model.energy = cfg.energy;

    PosteriorMatrix posterior = initial;
    std::vector<ClusterModel> chosen_clusters;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        std::size_t k = 0;
        MixtureParams params;
        std::vector<ClusterModel> clusters;
        Eigen::MatrixXd ll;
        if (held_out) {
            std::vector<double> scores;
            for (const auto& table : stats) {
                scores.push_back(held_out_loglik(posterior, table, quadrature, grid, cfg.energy, draws, folds));
            }
            k = select_bandwidth(hs, scores);
            params = s_step(posterior, stats[k]);
            clusters = cluster_models(params, grid, cfg.energy);
            ll = cluster_loglik(quadrature, clusters, draws);
        } else {
            std::vector<MixtureParams> candidates;
            std::vector<std::vector<ClusterModel>> candidate_clusters;
            std::vector<Eigen::MatrixXd> candidate_loglik;
            std::vector<double> totals;
            for (const auto& table : stats) {
                candidates.push_back(s_step(posterior, table));
                candidate_clusters.push_back(cluster_models(candidates.back(), grid, cfg.energy));
                candidate_loglik.push_back(cluster_loglik(quadrature, candidate_clusters.back(), draws));
                totals.push_back(observed_loglik(candidate_loglik.back(), candidates.back().weights));
            }
            k = select_bandwidth(hs, totals);
            params = std::move(candidates[k]);
            clusters = std::move(candidate_clusters[k]);
            ll = std::move(candidate_loglik[k]);
        }
        const double total = observed_loglik(ll, params.weights);
        PosteriorMatrix next = posterior_from_loglik(ll, params.weights);
        const double delta = (next - posterior).cwiseAbs().maxCoeff();
        model.trace.push_back({it, total, delta, hs[k]});
        posterior = std::move(next);
        model.params = std::move(params);
        model.bandwidth = hs[k];
        model.loglik = total;
        chosen_clusters = std::move(clusters);
        if (delta < cfg.tolerance) {
            model.converged = true;
            break;
        }
    }
    model.posterior = std::move(posterior);
    for (auto& cluster : chosen_clusters) {
        model.fpca.push_back({std::move(cluster.bases), std::move(cluster.sigma)});
    }
    model.bic = bic(model);
    return model;
}

FittedModel fit_rows(std::span<const MarkSplitSequence> rows, double horizon,
                     const FitConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(rows.size());
    if (n < cfg.clusters) throw DomainError("fewer accounts than clusters");
    const EvalGrid grid(horizon, cfg.grid_size);
    std::vector<StatsTable> stats;
    for (double h : cfg.resolved_bandwidths(horizon)) {
        stats.push_back(precompute_stats(rows, grid, KernelConfig{cfg.kernel, h, horizon}));
    }
    const QuadratureTable quadrature(rows, grid);

    const StatsTable& middle = stats[stats.size() / 2];
    const int R = middle.marks();
    Eigen::MatrixXd features(n, static_cast<Eigen::Index>(R) * grid.size());
    for (int r = 0; r < R; ++r) features.middleCols(r * grid.size(), grid.size()) = middle.points(r);

    std::optional<FittedModel> best;
    std::optional<DegenerateClusterError> failure;
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        const std::uint64_t init_seed = derive_seed(cfg.seed, {0x696e6974ULL, static_cast<std::uint64_t>(restart)});
        const PosteriorMatrix initial =
            restart == 0 ? one_hot(kmeans(features, cfg.clusters, cfg.kmeans_restarts, init_seed),
                                   cfg.clusters)
                         : random_responsibilities(n, cfg.clusters, init_seed);
        try {
            FittedModel model =
                fit_from(initial, stats, quadrature, grid, cfg, path_seed_for(cfg.seed, restart));
            model.restart = restart;
            if (!best || model.loglik > best->loglik) best = std::move(model);
        } catch (const DegenerateClusterError& e) {
            failure = e;
        }
    }
    if (!best) throw *failure;
    return std::move(*best);
}

FittedModel fit(const SequenceMatrix& matrix, const FitConfig& cfg) {
    if (matrix.slots() != 1) {
        throw DomainError("single-level fit needs m = 1 (got m=" + std::to_string(matrix.slots()) +
                          "); use the multi-level learner");
    }
    const auto rows = account_rows(matrix);
    return fit_rows(rows, matrix.horizon(), cfg);
}

PosteriorMatrix predict_posterior(const FittedModel& model,
                                  std::span<const MarkSplitSequence> rows, double mean_shift) {
    for (const auto& row : rows) {
        if (row.marks() != model.marks()) {
            throw DomainError("account rows have " + std::to_string(row.marks()) +
                              " marks, model has " + std::to_string(model.marks()));
        }
    }
    const QuadratureTable table(rows, model.grid);
    std::vector<ClusterModel> clusters;
    for (int c = 0; c < model.clusters(); ++c) {
        ClusterModel cluster;
        cluster.bases = model.fpca[c].bases;
        cluster.sigma = model.fpca[c].sigma;
        cluster.means = sampling_means(model.params, c, cluster.bases, cluster.sigma);
        for (auto& mean : cluster.means) mean.array() += mean_shift;
        clusters.push_back(std::move(cluster));
    }
    const auto draws = standard_normal_draws(model.marks() * model.grid.size(), model.mc_samples,
                                             model.path_seed);
    return posterior_from_loglik(cluster_loglik(table, clusters, draws), model.params.weights);
}

} // namespace mmpp
