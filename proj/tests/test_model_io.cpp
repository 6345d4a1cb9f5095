#include "doctest.h"

#include "mmpp/errors.hpp"
#include "mmpp/model_io.hpp"
#include "mmpp/simgen.hpp"

#include "json.hpp"

#include <cstring>
#include <sstream>

using namespace mmpp;

namespace {

FitConfig small_config(std::uint64_t seed) {
    FitConfig cfg;
    cfg.seed = seed;
    cfg.grid_size = 31;
    cfg.mc_samples = 60;
    cfg.max_iterations = 4;
    cfg.bandwidths = {0.4};
    return cfg;
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

void check_same(const FittedModel& a, const FittedModel& b) {
    CHECK(a.grid == b.grid);
    CHECK(a.clusters() == b.clusters());
    CHECK(a.marks() == b.marks());
    CHECK(same_bits(a.params.weights, b.params.weights));
    for (std::size_t k = 0; k < a.params.means.size(); ++k) CHECK(same_bits(a.params.means[k], b.params.means[k]));
    for (std::size_t k = 0; k < a.params.covariances.size(); ++k) {
        CHECK(same_bits(a.params.covariances[k], b.params.covariances[k]));
    }
    CHECK(same_bits(a.posterior, b.posterior));
    CHECK(a.bandwidth == b.bandwidth);
    CHECK(a.loglik == b.loglik);
    CHECK(a.bic == b.bic);
    CHECK(a.seed == b.seed);
    CHECK(a.path_seed == b.path_seed);
    CHECK(a.mc_samples == b.mc_samples);
    CHECK(a.trace.size() == b.trace.size());
    REQUIRE(a.fpca.size() == b.fpca.size());
    for (std::size_t c = 0; c < a.fpca.size(); ++c) {
        CHECK(same_bits(a.fpca[c].sigma.matrix, b.fpca[c].sigma.matrix));
        CHECK(a.fpca[c].sigma.offsets == b.fpca[c].sigma.offsets);
        for (std::size_t r = 0; r < a.fpca[c].bases.size(); ++r) {
            CHECK(same_bits(a.fpca[c].bases[r].eigenfunctions, b.fpca[c].bases[r].eigenfunctions));
            CHECK(same_bits(a.fpca[c].bases[r].eigenvalues, b.fpca[c].bases[r].eigenvalues));
        }
    }
}

const FittedModel& fitted() {
    static const FittedModel model = [] {
        SimConfig sc;
        sc.per_cluster = 40;
        sc.seed = 8;
        auto cfg = small_config(8);
        return fit(simulate_dataset(sc).data, cfg);
    }();
    return model;
}

std::string saved(const FittedModel& m) {
    std::ostringstream out;
    save_model(out, m);
    return out.str();
}

std::string load_error(const std::string& text) {
    std::istringstream in(text);
    try {
        load_model(in);
    } catch (const FormatError& e) {
        return e.what();
    }
    return "no error";
}

} // namespace

TEST_CASE("single-level model round trip is bit exact") {
    const std::string text = saved(fitted());
    std::istringstream in(text);
    auto stored = load_model(in);
    REQUIRE(std::holds_alternative<FittedModel>(stored));
    check_same(fitted(), base_model(stored));
    CHECK(saved(base_model(stored)) == text);
}

TEST_CASE("multi-level model round trip is bit exact") {
    SimConfig sc;
    sc.per_cluster = 20;
    sc.slots = 3;
    sc.seed = 4;
    MultilevelConfig cfg{small_config(4), 0.0};
    const MultilevelFit fit = fit_multilevel(simulate_dataset(sc).data, cfg);
    std::ostringstream out;
    save_model(out, fit);
    std::istringstream in(out.str());
    auto stored = load_model(in);
    REQUIRE(std::holds_alternative<MultilevelFit>(stored));
    const auto& back = std::get<MultilevelFit>(stored);
    check_same(fit.aggregated, back.aggregated);
    CHECK(back.slots == 3);
    for (std::size_t k = 0; k < fit.means.size(); ++k) CHECK(same_bits(fit.means[k], back.means[k]));
    for (std::size_t k = 0; k < fit.nuisance.gamma_y.size(); ++k) {
        CHECK(same_bits(fit.nuisance.gamma_y[k], back.nuisance.gamma_y[k]));
        CHECK(same_bits(fit.nuisance.gamma_z[k], back.nuisance.gamma_z[k]));
    }
    std::ostringstream again;
    save_model(again, back);
    CHECK(again.str() == out.str());
}

TEST_CASE("corrupt model files") {
    const std::string text = saved(fitted());
    const std::string truncated = load_error(text.substr(0, text.size() / 2));
    CHECK(truncated.find("byte") != std::string::npos);

    auto j = nlohmann::json::parse(text);
    j["model"].erase("bandwidth");
    CHECK(load_error(j.dump()).find("bandwidth") != std::string::npos);

    j = nlohmann::json::parse(text);
    j["version"] = 99;
    CHECK(load_error(j.dump()).find("version") != std::string::npos);

    j = nlohmann::json::parse(text);
    j["model"]["weights"] = {1.0};
    CHECK(load_error(j.dump()) != "no error");

    j = nlohmann::json::parse(text);
    j["model"]["kernel"] = "triangle";
    CHECK(load_error(j.dump()).find("triangle") != std::string::npos);

    CHECK(load_error("") != "no error");
    CHECK(load_error("[1, 2]") != "no error");
}
