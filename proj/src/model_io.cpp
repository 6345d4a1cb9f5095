#include "mmpp/model_io.hpp"

#include "mmpp/errors.hpp"

#include "json.hpp"

#include <istream>
#include <iterator>
#include <ostream>
#include <string>

namespace mmpp {

using nlohmann::json;

namespace {

json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

template <class T>
json list(const std::vector<T>& items) {
    json out = json::array();
    for (const auto& item : items) out.push_back(to_json(item));
    return out;
}

const char* kernel_name(KernelFamily k) {
    return k == KernelFamily::gaussian ? "gaussian" : "epanechnikov";
}

json model_json(const FittedModel& model) {
    json j;
    j["grid"] = {{"horizon", model.grid.horizon()}, {"size", model.grid.size()}};
    j["clusters"] = model.clusters();
    j["marks"] = model.marks();
    j["weights"] = to_json(model.params.weights);
    j["means"] = list(model.params.means);
    j["covariances"] = list(model.params.covariances);
    j["posterior"] = to_json(model.posterior);
    j["bandwidth"] = model.bandwidth;
    j["kernel"] = kernel_name(model.kernel);
    json fpca = json::array();
    for (const auto& cluster : model.fpca) {
        json bases = json::array();
        for (const auto& b : cluster.bases) {
            bases.push_back({{"eigenvalues", to_json(b.eigenvalues)},
                             {"eigenfunctions", to_json(b.eigenfunctions)}});
        }
        fpca.push_back({{"bases", std::move(bases)},
                        {"offsets", cluster.sigma.offsets},
                        {"sigma", to_json(cluster.sigma.matrix)},
                        {"repaired", cluster.sigma.repaired}});
    }
    j["fpca"] = std::move(fpca);
    json trace = json::array();
    for (const auto& t : model.trace) {
        trace.push_back({{"iteration", t.iteration},
                         {"loglik", t.loglik},
                         {"max_delta", t.max_delta},
                         {"bandwidth", t.bandwidth}});
    }
    j["trace"] = std::move(trace);
    j["loglik"] = model.loglik;
    j["bic"] = model.bic;
    j["seed"] = model.seed;
    j["path_seed"] = model.path_seed;
    j["mc_samples"] = model.mc_samples;
    j["energy"] = model.energy;
    j["restart"] = model.restart;
    j["converged"] = model.converged;
    return j;
}

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw FormatError(std::string("model file: missing key '") + key + "'");
    }
    return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return field(j, key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("model file: bad value for key '") + key + "'");
    }
}

Eigen::MatrixXd matrix_from(const json& j, const char* what) {
    if (!j.is_array()) throw FormatError(std::string("model file: '") + what + "' is not a matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[i];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw FormatError(std::string("model file: ragged rows in '") + what + "'");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!row[c].is_number()) throw FormatError(std::string("model file: non-number in '") + what + "'");
            m(i, c) = row[c].get<double>();
        }
    }
    return m;
}

Eigen::VectorXd vector_from(const json& j, const char* what) {
    if (!j.is_array()) throw FormatError(std::string("model file: '") + what + "' is not a vector");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw FormatError(std::string("model file: non-number in '") + what + "'");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

template <class T, class F>
std::vector<T> list_from(const json& j, const char* what, F convert) {
    if (!j.is_array()) throw FormatError(std::string("model file: '") + what + "' is not a list");
    std::vector<T> out;
    for (const auto& item : j) out.push_back(convert(item, what));
    return out;
}

FittedModel model_from(const json& j) {
    FittedModel model;
    const json& grid = field(j, "grid");
    const double horizon = get<double>(grid, "horizon");
    const int size = get<int>(grid, "size");
    try {
        model.grid = EvalGrid(horizon, size);
    } catch (const std::exception& e) {
        throw FormatError(std::string("model file: bad grid: ") + e.what());
    }
    const int C = get<int>(j, "clusters");
    const int R = get<int>(j, "marks");
    if (C < 1 || R < 1) throw FormatError("model file: clusters and marks must be positive");
    model.params = MixtureParams(C, R, size);
    model.params.weights = vector_from(field(j, "weights"), "weights");
    model.params.means = list_from<GridFunction>(field(j, "means"), "means", vector_from);
    model.params.covariances =
        list_from<GridSurface>(field(j, "covariances"), "covariances", matrix_from);
    if (model.params.weights.size() != C ||
        model.params.means.size() != static_cast<std::size_t>(C) * R ||
        model.params.covariances.size() != static_cast<std::size_t>(C) * R * R) {
        throw FormatError("model file: parameter counts do not match clusters and marks");
    }
    for (const auto& mu : model.params.means) {
        if (mu.size() != size) throw FormatError("model file: mean curve off the grid");
    }
    for (const auto& g : model.params.covariances) {
        if (g.rows() != size || g.cols() != size) throw FormatError("model file: surface off the grid");
    }
    model.posterior = matrix_from(field(j, "posterior"), "posterior");
    model.bandwidth = get<double>(j, "bandwidth");
    const auto kernel = get<std::string>(j, "kernel");
    if (kernel == "epanechnikov") {
        model.kernel = KernelFamily::epanechnikov;
    } else if (kernel == "gaussian") {
        model.kernel = KernelFamily::gaussian;
    } else {
        throw FormatError("model file: unknown kernel '" + kernel + "'");
    }
    const json& fpca = field(j, "fpca");
    if (!fpca.is_array() || fpca.size() != static_cast<std::size_t>(C)) {
        throw FormatError("model file: 'fpca' needs one entry per cluster");
    }
    for (const auto& entry : fpca) {
        ClusterBasis cb;
        const json& bases = field(entry, "bases");
        if (!bases.is_array() || bases.size() != static_cast<std::size_t>(R)) {
            throw FormatError("model file: 'bases' needs one entry per mark");
        }
        for (const auto& b : bases) {
            FpcaBasis basis{vector_from(field(b, "eigenvalues"), "eigenvalues"),
                            matrix_from(field(b, "eigenfunctions"), "eigenfunctions")};
            if (basis.eigenfunctions.rows() != size ||
                basis.eigenfunctions.cols() != basis.eigenvalues.size()) {
                throw FormatError("model file: eigenfunctions do not match the grid or rank");
            }
            cb.bases.push_back(std::move(basis));
        }
        cb.sigma.offsets = get<std::vector<int>>(entry, "offsets");
        cb.sigma.matrix = matrix_from(field(entry, "sigma"), "sigma");
        cb.sigma.repaired = get<bool>(entry, "repaired");
        if (cb.sigma.offsets.size() != static_cast<std::size_t>(R) + 1 ||
            cb.sigma.offsets.back() != cb.sigma.matrix.rows() ||
            cb.sigma.matrix.rows() != cb.sigma.matrix.cols()) {
            throw FormatError("model file: score covariance does not match the bases");
        }
        model.fpca.push_back(std::move(cb));
    }
    for (const auto& t : field(j, "trace")) {
        model.trace.push_back({get<int>(t, "iteration"), get<double>(t, "loglik"),
                               get<double>(t, "max_delta"), get<double>(t, "bandwidth")});
    }
    model.loglik = get<double>(j, "loglik");
    model.bic = get<double>(j, "bic");
    model.seed = get<std::uint64_t>(j, "seed");
    model.path_seed = get<std::uint64_t>(j, "path_seed");
    model.mc_samples = get<int>(j, "mc_samples");
    model.energy = get<double>(j, "energy");
    model.restart = get<int>(j, "restart");
    model.converged = get<bool>(j, "converged");
    if (model.mc_samples < 1) throw FormatError("model file: mc_samples must be >= 1");
    return model;
}

void write(std::ostream& out, const json& j) {
    out << j.dump(1) << '\n';
    if (!out) throw std::runtime_error("cannot write model file");
}

} // namespace

void save_model(std::ostream& out, const FittedModel& model) {
    json j;
    j["format"] = "mmpp-model";
    j["version"] = kModelFormatVersion;
    j["kind"] = "single";
    j["model"] = model_json(model);
    write(out, j);
}

void save_model(std::ostream& out, const MultilevelFit& fit) {
    json j;
    j["format"] = "mmpp-model";
    j["version"] = kModelFormatVersion;
    j["kind"] = "multilevel";
    j["model"] = model_json(fit.aggregated);
    j["slots"] = fit.slots;
    j["adjusted_means"] = list(fit.means);
    j["nuisance"] = {{"gamma_y", list(fit.nuisance.gamma_y)}, {"gamma_z", list(fit.nuisance.gamma_z)}};
    write(out, j);
}

StoredModel load_model(std::istream& in) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError("model file: malformed JSON at byte " + std::to_string(e.byte));
    }
    if (get<std::string>(j, "format") != "mmpp-model") throw FormatError("model file: not an mmpp model");
    const int version = get<int>(j, "version");
    if (version != kModelFormatVersion) {
        throw FormatError("model file: unsupported version " + std::to_string(version));
    }
    const auto kind = get<std::string>(j, "kind");
    FittedModel model = model_from(field(j, "model"));
    if (kind == "single") return model;
    if (kind != "multilevel") throw FormatError("model file: unknown kind '" + kind + "'");

    MultilevelFit fit;
    const int R = model.marks();
    const int G = model.grid.size();
    fit.slots = get<int>(j, "slots");
    fit.means = list_from<GridFunction>(field(j, "adjusted_means"), "adjusted_means", vector_from);
    const json& nuisance = field(j, "nuisance");
    fit.nuisance.marks = R;
    fit.nuisance.gamma_y = list_from<GridSurface>(field(nuisance, "gamma_y"), "gamma_y", matrix_from);
    fit.nuisance.gamma_z = list_from<GridSurface>(field(nuisance, "gamma_z"), "gamma_z", matrix_from);
    if (fit.slots < 1 || fit.means.size() != model.params.means.size() ||
        fit.nuisance.gamma_y.size() != static_cast<std::size_t>(R) * R ||
        fit.nuisance.gamma_z.size() != static_cast<std::size_t>(R) * R) {
        throw FormatError("model file: multi-level section does not match the model");
    }
    for (const auto& s : fit.nuisance.gamma_y) {
        if (s.rows() != G || s.cols() != G) throw FormatError("model file: nuisance surface off the grid");
    }
    for (const auto& s : fit.nuisance.gamma_z) {
        if (s.rows() != G || s.cols() != G) throw FormatError("model file: nuisance surface off the grid");
    }
    fit.aggregated = std::move(model);
    return fit;
}

const FittedModel& base_model(const StoredModel& stored) {
    if (const auto* single = std::get_if<FittedModel>(&stored)) return *single;
    return std::get<MultilevelFit>(stored).aggregated;
}

} // namespace mmpp
