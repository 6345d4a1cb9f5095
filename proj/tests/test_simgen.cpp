#include "doctest.h"
#include "oracles.hpp"

#include "mmpp/errors.hpp"
#include "mmpp/kernel_stats.hpp"
#include "mmpp/simgen.hpp"

#include <random>

using namespace mmpp;

TEST_CASE("decay weights") {
    CHECK(zeta(0) == -1.0);
    CHECK(zeta(1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(zeta(2) == doctest::Approx(-1.0 / 9).epsilon(1e-15));
    for (int k = 0; k <= kFourierTerms; ++k) CHECK(std::abs(zeta(k)) == doctest::Approx(1.0 / ((k + 1.0) * (k + 1.0))));
}

TEST_CASE("cluster spec draws stay in their supports") {
    auto specs = gen_cluster_specs(3, 2, 5);
    REQUIRE(specs.size() == 3);
    for (const auto& s : specs) {
        for (int r = 0; r < 2; ++r) {
            CHECK(s.cos_coef[r].size() == kFourierTerms + 1);
            CHECK(s.cos_coef[r].cwiseAbs().maxCoeff() <= 1.0);
            CHECK(s.sin_coef[r].cwiseAbs().maxCoeff() <= 1.0);
            CHECK(s.tilde[r].tail(kFourierTerms).minCoeff() >= 0.0);
            CHECK(s.tilde[r].tail(kFourierTerms).maxCoeff() <= 0.3);
            for (int r2 = 0; r2 < 2; ++r2) {
                CHECK(s.cross[r * 2 + r2].cwiseAbs().maxCoeff() <= 1.0);
                CHECK(s.cross[r * 2 + r2] == s.cross[r2 * 2 + r].transpose());
            }
        }
    }
    auto again = gen_cluster_specs(3, 2, 5);
    CHECK(again[2].cross[1] == specs[2].cross[1]);
}

TEST_CASE("zero draws give a unit mean and no covariance") {
    EvalGrid grid(2.0, 41);
    auto spec = ClusterSpecX::zero(2);
    CHECK((cluster_mean(spec, 0, grid).array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(cluster_covariance(spec, 0, 0, grid).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cluster_covariance(spec, 0, 1, grid).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generated covariances are symmetric and PSD") {
    EvalGrid grid(2.0, 101);
    for (const auto& spec : gen_cluster_specs(2, 2, 9)) {
        for (int r = 0; r < 2; ++r) {
            GridSurface g = cluster_covariance(spec, r, r, grid);
            CHECK((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
            CHECK(es.eigenvalues().minCoeff() >= -1e-10);
        }
        CHECK((cluster_covariance(spec, 0, 1, grid) - cluster_covariance(spec, 1, 0, grid).transpose())
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

TEST_CASE("same-mark covariance matches the series written out") {
    EvalGrid grid(2.0, 21);
    auto spec = gen_cluster_specs(1, 1, 3)[0];
    GridSurface g = cluster_covariance(spec, 0, 0, grid);
    for (int s = 0; s < 21; s += 5) {
        for (int t = 0; t < 21; t += 4) {
            double ref = 0.0;
            for (int k = 1; k <= kFourierTerms; ++k) {
                const double tk = spec.tilde[0](k);
                ref += tk * std::abs(zeta(k)) * std::sin(k * oracle::kPi * grid[s] + oracle::kPi * tk) *
                       std::sin(k * oracle::kPi * grid[t] + oracle::kPi * tk);
            }
            CHECK(g(s, t) == doctest::Approx(ref).epsilon(1e-12));
        }
    }
}

TEST_CASE("day effects") {
    EvalGrid grid(2.0, 21);
    DayResidualSpec spec;
    CHECK(spec.ar_current * spec.ar_current + spec.ar_previous * spec.ar_previous == doctest::Approx(1.0));
    auto one = gen_day_residual(1, 1, grid, 4, spec);
    auto two = gen_day_residual(2, 1, grid, 4, spec);
    CHECK(one.y[0] == two.y[0]);
    CHECK(one.y.size() == 1);
    CHECK(one.z.size() == 1);

    const int N = 20000;
    const int g = 3;  // t = 0.3
    double s0 = 0, s1 = 0, s00 = 0, s11 = 0, s01 = 0;
    for (int k = 0; k < N; ++k) {
        auto d = gen_day_residual(3, 1, grid, 1000 + k, spec);
        const double a = d.y[1](g), b = d.y[2](g);
        s0 += a;
        s1 += b;
        s00 += a * a;
        s11 += b * b;
        s01 += a * b;
    }
    const double var0 = s00 / N - (s0 / N) * (s0 / N);
    const double var1 = s11 / N - (s1 / N) * (s1 / N);
    const double cov = s01 / N - (s0 / N) * (s1 / N);
    const double expected = y_variance_curve(spec, grid)(g);
    CHECK(expected == doctest::Approx(0.2 * (1.0 + std::pow(std::sin(2 * oracle::kPi * 0.3), 2))).epsilon(1e-12));
    CHECK(std::abs(var0 / expected - 1.0) < 0.05);
    CHECK(std::abs(var1 / expected - 1.0) < 0.05);
    CHECK(std::abs(cov / (0.48 * expected) - 1.0) < 0.05);
}

TEST_CASE("residual basis") {
    CHECK(z_basis(0, 0.1) == doctest::Approx(2.0 * std::sin(0.4 * oracle::kPi)));
    CHECK(z_basis(0, 0.6) == 0.0);
    CHECK(z_basis(1, 0.6) == doctest::Approx(2.0 * std::sin(4 * oracle::kPi * 0.6)));
    CHECK(z_basis(3, 1.9) == doctest::Approx(2.0 * std::sin(4 * oracle::kPi * 1.9)));
    CHECK(z_basis(2, 1.9) == 0.0);
    CHECK(y_basis(0, 1.3) == 1.0);
    CHECK(y_basis(1, 0.125) == doctest::Approx(std::sin(oracle::kPi / 4)));
}

TEST_CASE("constant-rate sampler moments") {
    EvalGrid grid(2.0, 21);
    GridFunction level = GridFunction::Constant(21, std::log(5.0));
    std::mt19937_64 rng(77);
    const int N = 20000;
    double sum = 0, sq = 0;
    for (int k = 0; k < N; ++k) {
        const double c = static_cast<double>(sample_lgcp(level, grid, rng).size());
        sum += c;
        sq += c * c;
    }
    const double mean = sum / N, var = (sq - N * mean * mean) / (N - 1);
    CHECK(std::abs(mean - 10.0) < 0.15);
    CHECK(std::abs(var - 10.0) < 0.5);
}

TEST_CASE("vanishing intensity and overflow") {
    EvalGrid grid(2.0, 21);
    GridFunction low = GridFunction::Constant(21, -30.0);
    std::mt19937_64 rng(1);
    std::size_t events = 0;
    for (int k = 0; k < 10000; ++k) events += sample_lgcp(low, grid, rng).size();
    CHECK(events == 0);
    GridFunction high = GridFunction::Constant(21, 40.0);
    CHECK_THROWS_AS(sample_lgcp(high, grid, rng), NumericalError);
    GridFunction nan = GridFunction::Constant(21, std::nan(""));
    CHECK_THROWS_AS(sample_lgcp(nan, grid, rng), DomainError);
    CHECK(sample_lgcp(GridFunction::Constant(21, 1.0), grid, std::uint64_t{5}) ==
          sample_lgcp(GridFunction::Constant(21, 1.0), grid, std::uint64_t{5}));
}

TEST_CASE("time rescaling gives unit exponential gaps") {
    EvalGrid grid(2.0, 41);
    GridFunction level(41);
    for (int g = 0; g < 41; ++g) level(g) = 1.0 + std::sin(oracle::kPi * grid[g]);
    // exact integral of exp of a piecewise-linear function
    auto cumulative = [&](double t) {
        double total = 0.0;
        for (int g = 0; g + 1 < 41; ++g) {
            const double a = grid[g], b = std::min(grid[g + 1], t);
            if (b <= a) break;
            const double slope = (level(g + 1) - level(g)) / (grid[g + 1] - grid[g]);
            const double fa = level(g), fb = level(g) + slope * (b - a);
            total += std::abs(slope) < 1e-14 ? std::exp(fa) * (b - a) : (std::exp(fb) - std::exp(fa)) / slope;
        }
        return total;
    };
    // Replicates are laid end to end so gaps crossing a window boundary are not censored.
    const double whole = cumulative(2.0);
    std::mt19937_64 rng(2024);
    std::vector<double> gaps;
    double prev = 0.0;
    for (int rep = 0; rep < 2000; ++rep) {
        for (double t : sample_lgcp(level, grid, rng)) {
            const double c = rep * whole + cumulative(t);
            gaps.push_back(c - prev);
            prev = c;
        }
    }
    const double d = oracle::ks_statistic(gaps, [](double x) { return 1.0 - std::exp(-x); });
    CHECK(oracle::ks_pvalue(d, gaps.size()) > 0.01);
}

TEST_CASE("dataset with flat unit log-intensity") {
    SimConfig cfg;
    cfg.clusters = 1;
    cfg.per_cluster = 5000;
    cfg.marks = 1;
    cfg.seed = 3;
    auto ds = simulate_dataset(cfg, {ClusterSpecX::zero(1)});
    const double mean = static_cast<double>(ds.data.event_count()) / 5000;
    CHECK(std::abs(mean - 2.0 * std::exp(1.0)) < 0.1);
}

TEST_CASE("labels, determinism, validation") {
    SimConfig cfg;
    cfg.clusters = 3;
    cfg.per_cluster = 7;
    cfg.seed = 12;
    auto a = simulate_dataset(cfg);
    auto b = simulate_dataset(cfg);
    REQUIRE(a.labels.size() == 21);
    for (int c = 1; c <= 3; ++c) CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 7);
    CHECK(a.labels == b.labels);
    for (int i = 0; i < 21; ++i) CHECK(a.data.entry(i, 0) == b.data.entry(i, 0));
    const int R = a.truth.marks;
    for (int c = 0; c < 3; ++c) {
        for (int r = 0; r < R; ++r) {
            for (int r2 = 0; r2 < R; ++r2) {
                const auto& g = a.truth.covariances[(c * R + r) * R + r2];
                const auto& gt = a.truth.covariances[(c * R + r2) * R + r];
                CHECK((g - gt.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }

    auto bad = cfg;
    bad.slots = 0;
    CHECK_THROWS_AS(simulate_dataset(bad), DomainError);
}

TEST_CASE("pooled counts scale with the number of days") {
    SimConfig one;
    one.per_cluster = 200;
    one.seed = 6;
    one.residual.y_variance = 0.0;
    one.residual.z_variance = 0.0;
    auto specs = gen_cluster_specs(2, 2, 6);
    auto base = simulate_dataset(one, specs);
    SimConfig many = one;
    many.slots = 20;
    auto pooled = simulate_dataset(many, specs);
    const double ratio = static_cast<double>(pooled.data.event_count()) / base.data.event_count();
    CHECK(std::abs(ratio / 20.0 - 1.0) < 0.1);
}

TEST_CASE("kernel estimate of the marginal intensity matches the generative curve") {
    // Day effects are shared by every account, so with a handful of days their
    // realized average dominates; they are checked on their own above.
    SimConfig cfg;
    cfg.per_cluster = 1000;
    cfg.slots = 20;
    cfg.residual.y_variance = 0.0;
    cfg.seed = 2;
    auto ds = simulate_dataset(cfg);
    KernelConfig kcfg{KernelFamily::epanechnikov, 0.2, 2.0};
    const int cells = ds.data.accounts() * ds.data.slots();
    EvalGrid fine(2.0, 51);
    for (int r = 0; r < 2; ++r) {
        GridFunction est = GridFunction::Zero(51);
        for (int i = 0; i < ds.data.accounts(); ++i) {
            for (int j = 0; j < ds.data.slots(); ++j) {
                est += point_stat(split_by_mark(ds.data.entry(i, j), 2), cells, fine, kcfg).curves[r];
            }
        }
        const GridFunction truth = ds.truth.marginal_intensity(r);
        EvalGrid coarse = ds.truth.grid;
        double worst = 0.0;
        for (int g = 5; g <= 45; ++g) {
            const double t = fine[g];
            worst = std::max(worst, std::abs(est(g) / coarse.interpolate(truth, t) - 1.0));
        }
        CHECK(worst < 0.15);
    }
}
