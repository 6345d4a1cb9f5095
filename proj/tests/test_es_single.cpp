#include "doctest.h"
#include "oracles.hpp"

#include "mmpp/errors.hpp"
#include "mmpp/es_single.hpp"
#include "mmpp/metrics.hpp"
#include "mmpp/simgen.hpp"

#include <random>

using namespace mmpp;

namespace {

SequenceMatrix homogeneous(int n, int marks, double log_rate, std::uint64_t seed, double T = 2.0) {
    EvalGrid grid(T, 11);
    GridFunction level = GridFunction::Constant(grid.size(), log_rate);
    std::mt19937_64 rng(seed);
    std::vector<EventList> entries;
    for (int i = 0; i < n; ++i) {
        EventList list;
        for (int r = 1; r <= marks; ++r) {
            for (double t : sample_lgcp(level, grid, rng)) list.push_back({t, r});
        }
        entries.push_back(list);
    }
    return SequenceMatrix({n, 1, marks, T}, entries);
}

PosteriorMatrix random_posterior(int n, int C, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> e(1.0);
    PosteriorMatrix w(n, C);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < C; ++c) w(i, c) = e(rng);
        w.row(i) /= w.row(i).sum();
    }
    return w;
}

MixtureParams flat_params(int C, int R, int G, double mu, double var) {
    MixtureParams p(C, R, G);
    p.weights = Eigen::VectorXd::Constant(C, 1.0 / C);
    for (int c = 0; c < C; ++c) {
        for (int r = 0; r < R; ++r) {
            p.mean(c, r) = GridFunction::Constant(G, mu);
            for (int r2 = 0; r2 < R; ++r2) p.covariance(c, r, r2) = GridSurface::Constant(G, G, r == r2 ? var : 0.0);
        }
    }
    return p;
}

FitConfig quick_config(int C, std::uint64_t seed) {
    FitConfig cfg;
    cfg.clusters = C;
    cfg.seed = seed;
    cfg.mc_samples = 60;
    cfg.grid_size = 31;
    cfg.max_iterations = 6;
    return cfg;
}

}  // namespace

TEST_CASE("first- and second-order intensities") {
    EvalGrid grid(2.0, 21);
    const int G = grid.size();
    CHECK((first_order_intensity(GridFunction::Zero(G), GridFunction::Zero(G)).array() - 1.0).abs().maxCoeff() ==
          0.0);
    CHECK(first_order_intensity(GridFunction::Ones(G), GridFunction::Constant(G, 2.0))(4) ==
          doctest::Approx(7.389056098930650).epsilon(1e-14));
    GridFunction mu = grid.points().array().sin();
    auto rho = first_order_intensity(mu, GridFunction::Constant(G, 0.5));
    for (int g = 0; g < G; ++g) CHECK(rho(g) == doctest::Approx(std::exp(std::sin(grid[g]) + 0.25)).epsilon(1e-14));

    GridFunction a = GridFunction::LinSpaced(G, 0.5, 1.5), b = GridFunction::LinSpaced(G, 2.0, 1.0);
    CHECK((second_order_intensity(a, b, GridSurface::Zero(G, G)) - a * b.transpose()).cwiseAbs().maxCoeff() == 0.0);
    auto two = second_order_intensity(GridFunction::Ones(G), GridFunction::Ones(G),
                                      GridSurface::Constant(G, G, std::log(2.0)));
    CHECK((two.array() - 2.0).abs().maxCoeff() < 1e-15);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    GridSurface gamma(G, G);
    for (int s = 0; s < G; ++s) {
        for (int t = 0; t < G; ++t) gamma(s, t) = u(rng);
    }
    auto surface = second_order_intensity(a, b, gamma);
    for (int s = 0; s < G; ++s) {
        for (int t = 0; t < G; ++t) CHECK(std::abs(surface(s, t) - a(s) * b(t) * std::exp(gamma(s, t))) < 1e-12);
    }

    // inverting the mean update recovers mu
    GridFunction var = GridFunction::LinSpaced(G, 0.1, 0.9);
    GridFunction back = first_order_intensity(mu, var).array().log() - var.array() / 2;
    CHECK((back - mu).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("quadrature construction") {
    SUBCASE("grid only") {
        auto q = build_quadrature(std::vector<double>{}, EvalGrid(2.0, 3));
        CHECK(q.nodes == std::vector<double>{0.0, 1.0, 2.0});
        CHECK(q.weights == std::vector<double>{0.5, 1.0, 0.5});
        CHECK(q.counts == std::vector<int>{0, 0, 0});
    }
    SUBCASE("event on a grid node merges") {
        auto q = build_quadrature(std::vector<double>{1.0}, EvalGrid(2.0, 3));
        CHECK(q.nodes.size() == 3);
        CHECK(q.counts[1] == 1);
        CHECK(q.response(1) == doctest::Approx(1.0));
    }
    SUBCASE("off-grid events") {
        auto q = build_quadrature(std::vector<double>{0.4, 1.3}, EvalGrid(2.0, 5));
        double total = 0.0;
        for (double v : q.weights) {
            CHECK(v > 0.0);
            total += v;
        }
        CHECK(std::abs(total - 2.0) < 1e-12);
        int events = 0;
        for (std::size_t u = 0; u < q.nodes.size(); ++u) {
            const bool is_event = q.nodes[u] == 0.4 || q.nodes[u] == 1.3;
            CHECK(q.counts[u] == (is_event ? 1 : 0));
            events += q.counts[u];
        }
        CHECK(events == 2);
        CHECK(std::is_sorted(q.nodes.begin(), q.nodes.end()));
    }
    SUBCASE("weights sum to T for random event sets") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> ev;
            for (int k = 0; k < trial; ++k) ev.push_back(std::uniform_real_distribution<double>(1e-6, 3.0)(rng));
            std::sort(ev.begin(), ev.end());
            auto q = build_quadrature(ev, EvalGrid(3.0, 7 + trial));
            double total = 0.0;
            for (double v : q.weights) total += v;
            CHECK(std::abs(total - 3.0) < 1e-9);
        }
    }
}

TEST_CASE("quadrature log-likelihood") {
    EvalGrid grid(2.0, 51);
    std::vector<GridFunction> zero = {GridFunction::Zero(51)};
    CHECK(loglik_pp_hat(build_quadrature(MarkSplitSequence{{{}}}, grid), zero, grid) == doctest::Approx(-2.0));
    CHECK(loglik_pp_hat(build_quadrature(MarkSplitSequence{{{1.0}}}, grid), zero, grid) == doctest::Approx(-2.0));

    std::vector<double> events = {0.13, 0.5, 0.77, 1.234567, 1.9, 2.0};
    for (double mu : {-1.0, 0.3, 1.7}) {
        std::vector<GridFunction> flat = {GridFunction::Constant(51, mu)};
        const double exact = events.size() * mu - 2.0 * std::exp(mu);
        CHECK(std::abs(loglik_pp_hat(build_quadrature(MarkSplitSequence{{events}}, grid), flat, grid) - exact) <
              1e-6);
    }
}

TEST_CASE("Monte Carlo likelihood") {
    EvalGrid grid(2.0, 51);
    const auto scheme = build_quadrature(MarkSplitSequence{{{0.3, 0.9, 1.6}}}, grid);

    SUBCASE("deterministic path") {
        auto params = flat_params(1, 1, 51, 0.4, 0.0);
        auto cluster = build_cluster_model(params, 0, grid, 0.95);
        std::vector<GridFunction> mean = {GridFunction::Constant(51, 0.4)};
        const double exact = loglik_pp_hat(scheme, mean, grid);
        for (int Q : {1, 7, 100}) CHECK(mc_likelihood(scheme, cluster, grid, Q, 5) == doctest::Approx(exact).epsilon(1e-12));
    }
    SUBCASE("single draw") {
        auto params = flat_params(1, 1, 51, 0.0, 0.2);
        auto cluster = build_cluster_model(params, 0, grid, 0.95);
        auto sample = cluster_paths(cluster, standard_normal_draws(51, 1, 77));
        std::vector<GridFunction> path = {sample.paths[0].col(0)};
        CHECK(mc_likelihood(scheme, cluster, grid, 1, 77) == doctest::Approx(loglik_pp_hat(scheme, path, grid)).epsilon(1e-12));
    }
    SUBCASE("Gauss-Hermite reference") {
        const double sigma2 = 0.15;
        auto params = flat_params(1, 1, 51, 0.0, sigma2);
        auto cluster = build_cluster_model(params, 0, grid, 0.95);
        const double ref = oracle::log_mixed_poisson(3, 2.0, 0.0, sigma2);
        const double est = mc_likelihood(scheme, cluster, grid, 40000, 11);
        CHECK(std::abs(est - ref) < 0.01);
    }
}

TEST_CASE("posterior from log-likelihoods") {
    Eigen::MatrixXd ll(1, 2);
    ll << 0.0, std::log(3.0);
    auto w = posterior_from_loglik(ll, Eigen::Vector2d(0.5, 0.5));
    CHECK(w(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(w(0, 1) == doctest::Approx(0.75).epsilon(1e-14));

    Eigen::MatrixXd bad(3, 2);
    bad << 0, 0, -INFINITY, -INFINITY, 1, 2;
    try {
        posterior_from_loglik(bad, Eigen::Vector2d(0.5, 0.5));
        FAIL("expected an error");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }

    std::mt19937_64 rng(9);
    std::normal_distribution<double> z(0.0, 300.0);
    Eigen::MatrixXd big(200, 4);
    for (int i = 0; i < 200; ++i) {
        for (int c = 0; c < 4; ++c) big(i, c) = z(rng);
    }
    auto p = posterior_from_loglik(big, Eigen::Vector4d(0.1, 0.2, 0.3, 0.4));
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
}

TEST_CASE("E-step special cases") {
    auto data = homogeneous(12, 2, 1.0, 3);
    auto rows = account_rows(data);
    EvalGrid grid(2.0, 31);
    QuadratureTable table(rows, grid);

    auto one = flat_params(1, 2, 31, 1.0, 0.1);
    auto w1 = e_step(table, one, grid, 0.95, 50, 1);
    CHECK((w1.array() - 1.0).abs().maxCoeff() == 0.0);

    auto twin = flat_params(2, 2, 31, 1.0, 0.1);
    twin.weights = Eigen::Vector2d(0.3, 0.7);
    auto w2 = e_step(table, twin, grid, 0.95, 50, 1);
    for (int i = 0; i < w2.rows(); ++i) {
        CHECK(w2(i, 0) == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(w2(i, 1) == doctest::Approx(0.7).epsilon(1e-12));
    }
}

TEST_CASE("batched and literal cluster likelihoods agree") {
    SimConfig sim;
    sim.per_cluster = 8;
    sim.seed = 6;
    auto ds = simulate_dataset(sim);
    auto rows = account_rows(ds.data);
    EvalGrid grid(2.0, 26);
    auto stats = precompute_stats(rows, grid, KernelConfig{KernelFamily::epanechnikov, 0.4, 2.0});
    auto params = s_step(random_posterior(16, 2, 1), stats);
    std::vector<ClusterModel> clusters = {build_cluster_model(params, 0, grid, 0.95),
                                          build_cluster_model(params, 1, grid, 0.95)};
    auto draws = standard_normal_draws(2 * grid.size(), 40, 8);
    QuadratureTable table(rows, grid);
    std::vector<AccountQuadrature> schemes;
    for (const auto& row : rows) schemes.push_back(build_quadrature(row, grid));
    auto fast = cluster_loglik(table, clusters, draws);
    auto slow = serial::cluster_loglik(schemes, clusters, draws, grid);
    CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-9);

    std::vector<int> subset = {5, 2, 11};
    auto part = cluster_loglik(table, clusters, draws, subset);
    for (int k = 0; k < 3; ++k) CHECK((part.row(k) - fast.row(subset[k])).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("S-step closed forms") {
    SimConfig sim;
    sim.per_cluster = 3;
    sim.seed = 2;
    auto ds = simulate_dataset(sim);
    auto rows = account_rows(ds.data);
    const int n = static_cast<int>(rows.size());
    EvalGrid grid(2.0, 21);
    const double h = 0.5;
    auto stats = precompute_stats(rows, grid, KernelConfig{KernelFamily::epanechnikov, h, 2.0});

    SUBCASE("weights from hard labels") {
        PosteriorMatrix w = PosteriorMatrix::Zero(n, 2);
        for (int i = 0; i < n; ++i) w(i, i % 2) = 1.0;
        auto p = s_step(w, stats);
        CHECK(p.weights(0) == doctest::Approx(0.5));
        CHECK(p.weights(1) == doctest::Approx(0.5));
    }
    SUBCASE("recovers the log ratio computed from direct sums") {
        auto w = random_posterior(n, 2, 5);
        auto p = s_step(w, stats);
        for (int c = 0; c < 2; ++c) {
            const double pi = w.col(c).mean();
            for (int r = 0; r < 2; ++r) {
                GridFunction eb = GridFunction::Zero(21);
                for (int i = 0; i < n; ++i) {
                    for (int g = 0; g < 21; ++g) {
                        double s = 0;
                        for (double u : rows[i].times[r]) s += oracle::epanechnikov(grid[g] - u, h);
                        eb(g) += w(i, c) * s / (n * oracle::edge_numeric(grid[g], h, 2.0));
                    }
                }
                for (int r2 = 0; r2 < 2; ++r2) {
                    GridFunction eb2 = GridFunction::Zero(21);
                    for (int i = 0; i < n; ++i) {
                        for (int g = 0; g < 21; ++g) {
                            double s = 0;
                            for (double u : rows[i].times[r2]) s += oracle::epanechnikov(grid[g] - u, h);
                            eb2(g) += w(i, c) * s / (n * oracle::edge_numeric(grid[g], h, 2.0));
                        }
                    }
                    for (int s = 0; s < 21; s += 4) {
                        for (int t = 0; t < 21; t += 4) {
                            double ea = 0;
                            for (int i = 0; i < n; ++i) {
                                ea += w(i, c) * oracle::pair_direct(rows[i].times[r], rows[i].times[r2], r == r2, n,
                                                                    grid[s], grid[t], h, 2.0);
                            }
                            if (ea < kStatFloor) continue;
                            const double gamma = std::log(pi * ea / (eb(s) * eb2(t)));
                            if (std::abs(gamma) >= kCovarianceClamp) continue;
                            CHECK(std::abs(p.covariance(c, r, r2)(s, t) - gamma) < 1e-10);
                        }
                    }
                }
                for (int g = 0; g < 21; ++g) {
                    const double mu = std::log(eb(g) / pi) - p.covariance(c, r, r)(g, g) / 2;
                    CHECK(std::abs(p.mean(c, r)(g) - mu) < 1e-10);
                }
            }
        }
    }
    SUBCASE("degenerate cluster") {
        PosteriorMatrix w = PosteriorMatrix::Zero(n, 2);
        w.col(0).setOnes();
        CHECK_THROWS_AS(s_step(w, stats), DegenerateClusterError);
    }
    SUBCASE("symmetry of the solution") {
        auto p = s_step(random_posterior(n, 3, 8), stats);
        for (int c = 0; c < 3; ++c) {
            CHECK(p.covariance(c, 0, 1) == p.covariance(c, 1, 0).transpose());
            CHECK(p.covariance(c, 0, 0) == p.covariance(c, 0, 0).transpose());
        }
        CHECK(std::abs(p.weights.sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("S-step solves the expected estimating equations") {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SimConfig sim;
        sim.per_cluster = 10;
        sim.seed = seed;
        auto ds = simulate_dataset(sim);
        auto rows = account_rows(ds.data);
        const int n = static_cast<int>(rows.size());
        EvalGrid grid(2.0, 31);
        auto stats = precompute_stats(rows, grid, KernelConfig{KernelFamily::epanechnikov, 0.1 + 0.15 * (seed - 1), 2.0});
        auto w = random_posterior(n, 3, seed);
        auto p = s_step(w, stats);
        std::vector<double> col(n);
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < n; ++i) col[i] = w(i, c);
            worst = std::max(worst, std::abs(w.col(c).sum() / n - p.weights(c)));
            const double pi = p.weights(c);
            for (int r = 0; r < 2; ++r) {
                const GridFunction eb = stats.weighted_point(col, r);
                const GridFunction rho = (p.mean(c, r).array() + p.covariance(c, r, r).diagonal().array() / 2).exp();
                for (int g = 0; g < grid.size(); ++g) {
                    if (eb(g) < kStatFloor) continue;
                    worst = std::max(worst, std::abs(eb(g) - pi * rho(g)));
                }
                for (int r2 = 0; r2 < 2; ++r2) {
                    const GridSurface ea = stats.weighted_pair(col, r, r2);
                    const GridFunction eb2 = stats.weighted_point(col, r2);
                    const GridFunction rho2 =
                        (p.mean(c, r2).array() + p.covariance(c, r2, r2).diagonal().array() / 2).exp();
                    for (int s = 0; s < grid.size(); ++s) {
                        for (int t = 0; t < grid.size(); ++t) {
                            const double gamma = p.covariance(c, r, r2)(s, t);
                            if (ea(s, t) < kStatFloor || eb(s) < kStatFloor || eb2(t) < kStatFloor) continue;
                            if (std::abs(gamma) >= kCovarianceClamp) continue;
                            worst = std::max(worst, std::abs(ea(s, t) - pi * rho(s) * rho2(t) * std::exp(gamma)));
                        }
                    }
                }
            }
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("homogeneous data: S-step recovers a flat process") {
    EvalGrid grid(2.0, 51);
    const double h = 0.4;
    GridFunction mu_sum = GridFunction::Zero(51);
    GridSurface gamma_sum = GridSurface::Zero(51, 51);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto data = homogeneous(200, 1, 1.0, 100 + seed);
        auto rows = account_rows(data);
        auto stats = precompute_stats(rows, grid, KernelConfig{KernelFamily::epanechnikov, h, 2.0});
        auto p = s_step(PosteriorMatrix::Ones(200, 1), stats);
        mu_sum += p.mean(0, 0);
        gamma_sum += p.covariance(0, 0, 0);
    }
    // interior: at least one bandwidth from either end
    CHECK((mu_sum.segment(10, 31).array() / 10 - 1.0).abs().maxCoeff() < 0.1);
    CHECK((gamma_sum.block(10, 10, 31, 31) / 10).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("bandwidth selection rule") {
    std::vector<double> one = {0.2}, one_ll = {-5.0};
    CHECK(select_bandwidth(one, one_ll) == 0);
    std::vector<double> hs = {0.1, 0.2, 0.4}, tie = {-3.0, -3.0, -4.0};
    CHECK(select_bandwidth(hs, tie) == 1);
    std::vector<double> with_nan = {NAN, -10.0, NAN};
    CHECK(select_bandwidth(hs, with_nan) == 1);
}

TEST_CASE("parameter count and BIC arithmetic") {
    auto model_with = [](int C, int rank) {
        FittedModel m;
        m.params = MixtureParams(C, 2, 5);
        for (int c = 0; c < C; ++c) {
            ClusterBasis b;
            for (int r = 0; r < 2; ++r) {
                FpcaBasis f;
                f.eigenvalues = Eigen::VectorXd::Ones(rank);
                f.eigenfunctions = Eigen::MatrixXd::Zero(5, rank);
                b.bases.push_back(f);
            }
            m.fpca.push_back(b);
        }
        return m;
    };
    int prev = 0;
    for (int C = 1; C <= 5; ++C) {
        const int k = effective_parameters(model_with(C, 2));
        CHECK(k == (C - 1) + C * (4 + 4 * 5 / 2));
        CHECK(k > prev);
        prev = k;
    }
    const double l = -123.4;
    const int k = 17;
    CHECK(bic_value(4 * l, k, 400) - 4 * (-2 * l) ==
          doctest::Approx(k * std::log(100.0) + k * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("k-means separates obvious groups") {
    Eigen::MatrixXd x(40, 2);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0, 0.1);
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = (i < 20 ? 0.0 : 5.0) + z(rng);
        x(i, 1) = z(rng);
    }
    auto labels = kmeans(x, 2, 5, 3);
    LabelVector pred, truth;
    for (int i = 0; i < 40; ++i) {
        pred.push_back(labels[i] + 1);
        truth.push_back(i < 20 ? 1 : 2);
    }
    CHECK(purity(pred, truth) == 1.0);
}

TEST_CASE("fit with one cluster") {
    auto data = homogeneous(30, 2, 1.0, 4);
    auto model = fit(data, quick_config(1, 4));
    CHECK(model.params.weights.size() == 1);
    CHECK(model.params.weights(0) == 1.0);
    CHECK((model.posterior.array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(!model.trace.empty());
}

TEST_CASE("fit bookkeeping and determinism") {
    SimConfig sim;
    sim.per_cluster = 20;
    sim.seed = 3;
    auto ds = simulate_dataset(sim);
    auto cfg = quick_config(2, 3);
    auto a = fit(ds.data, cfg);
    auto b = fit(ds.data, cfg);
    CHECK(a.posterior == b.posterior);
    CHECK(a.loglik == b.loglik);
    for (std::size_t k = 0; k < a.params.means.size(); ++k) CHECK(a.params.means[k] == b.params.means[k]);
    CHECK(a.trace.size() == b.trace.size());
    CHECK((a.posterior.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(a.bic == doctest::Approx(bic(a)));
    for (std::size_t k = 0; k < a.trace.size(); ++k) CHECK(a.trace[k].iteration == int(k) + 1);

    // the stored posterior belongs to the stored parameters
    auto rows = account_rows(ds.data);
    auto again = predict_posterior(a, rows);
    CHECK((again - a.posterior).cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(fit(simulate_dataset([] {
                            SimConfig s;
                            s.per_cluster = 3;
                            s.slots = 2;
                            return s;
                        }())
                            .data,
                        cfg),
                    DomainError);
}

TEST_CASE("relabelling the initial posterior permutes the result") {
    SimConfig sim;
    sim.per_cluster = 20;
    sim.seed = 8;
    auto ds = simulate_dataset(sim);
    auto rows = account_rows(ds.data);
    auto cfg = quick_config(2, 8);
    EvalGrid grid(2.0, cfg.grid_size);
    std::vector<StatsTable> stats;
    for (double h : cfg.resolved_bandwidths(2.0)) {
        stats.push_back(precompute_stats(rows, grid, KernelConfig{cfg.kernel, h, 2.0}));
    }
    QuadratureTable table(rows, grid);
    auto init = random_posterior(40, 2, 2);
    PosteriorMatrix swapped(40, 2);
    swapped << init.col(1), init.col(0);
    auto a = fit_from(init, stats, table, grid, cfg, 99);
    auto b = fit_from(swapped, stats, table, grid, cfg, 99);
    CHECK(a.params.weights(0) == doctest::Approx(b.params.weights(1)).epsilon(1e-12));
    for (int r = 0; r < 2; ++r) {
        CHECK((a.params.mean(0, r) - b.params.mean(1, r)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((a.params.covariance(1, r, 1) - b.params.covariance(0, r, 1)).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK((a.posterior.col(0) - b.posterior.col(1)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("configuration validation") {
    FitConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.clusters = 0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = cfg;
    bad.selection_folds = 1;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = cfg;
    bad.mc_samples = 0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    auto hs = cfg.resolved_bandwidths(2.0);
    CHECK(hs == std::vector<double>{0.05, 0.1, 0.2, 0.4});
}
