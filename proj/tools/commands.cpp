#include "commands.hpp"

#include "mmpp/errors.hpp"
#include "mmpp/es_single.hpp"
#include "mmpp/events.hpp"
#include "mmpp/metrics.hpp"
#include "mmpp/model_io.hpp"
#include "mmpp/multilevel.hpp"
#include "mmpp/seeding.hpp"
#include "mmpp/simgen.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace mmpp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& text) { std::cerr << "[mmpp] " << text << '\n'; }

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input file '" + path + "'");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write output file '" + path + "'");
    return out;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

void close_checked(std::ofstream& out, const std::string& path) {
    out.close();
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::string shortest(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

SequenceMatrix read_events(const std::string& path) {
    auto in = open_in(path);
    return load_events(in);
}

LabelVector read_labels(const std::string& path, int accounts) {
    auto in = open_in(path);
    LabelVector labels(accounts, 0);
    std::vector<bool> seen(accounts, false);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        int account = -1, cluster = 0;
        std::string rest;
        if (!(fields >> account >> cluster) || (fields >> rest)) {
            throw ParseError(path + ": expected account<TAB>cluster", lineno);
        }
        if (account < 0 || account >= accounts || seen[account]) {
            throw DomainError(path + ": line " + std::to_string(lineno) + ": bad or repeated account " +
                              std::to_string(account));
        }
        seen[account] = true;
        labels[account] = cluster;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw DomainError(path + ": labels do not cover every account");
    }
    return labels;
}

FitConfig single_config(const FitOptions& opt, int clusters, std::uint64_t seed) {
    FitConfig cfg;
    cfg.clusters = clusters;
    cfg.bandwidths = opt.bandwidths;
    cfg.mc_samples = opt.mc_samples;
    cfg.grid_size = opt.grid_size;
    cfg.energy = opt.energy;
    cfg.tolerance = opt.tolerance;
    cfg.max_iterations = opt.max_iterations;
    cfg.restarts = opt.restarts;
    cfg.selection_folds = opt.selection_folds;
    cfg.seed = seed;
    return cfg;
}

struct Outcome {
    int clusters = 0;
    StoredModel model;
};

StoredModel fit_any(const SequenceMatrix& data, int clusters, const FitOptions& opt, std::uint64_t seed) {
    if (data.slots() == 1) return fit(data, single_config(opt, clusters, seed));
    MultilevelConfig cfg;
    cfg.fit = single_config(opt, clusters, seed);
    cfg.nuisance_bandwidth = opt.nuisance_bandwidth;
    return fit_multilevel(data, cfg);
}

struct Sweep {
    json entries = json::array();
    std::optional<Outcome> best;
};

Sweep sweep_clusters(const SequenceMatrix& data, const FitOptions& opt, std::uint64_t seed) {
    Sweep sweep;
    std::optional<std::string> last_failure;
    for (int c = opt.min_clusters; c <= opt.max_clusters; ++c) {
        try {
            StoredModel model = fit_any(data, c, opt, seed);
            const FittedModel& base = base_model(model);
            log_line("C=" + std::to_string(c) + " loglik=" + shortest(base.loglik) +
                     " bic=" + shortest(base.bic) + " iterations=" + std::to_string(base.trace.size()));
            sweep.entries.push_back({{"clusters", c},
                                     {"status", "ok"},
                                     {"loglik", base.loglik},
                                     {"bic", base.bic},
                                     {"parameters", effective_parameters(base)},
                                     {"bandwidth", base.bandwidth},
                                     {"iterations", base.trace.size()},
                                     {"converged", base.converged}});
            if (!sweep.best || base.bic < base_model(sweep.best->model).bic) {
                sweep.best = Outcome{c, std::move(model)};
            }
        } catch (const DegenerateClusterError& e) {
            log_line("C=" + std::to_string(c) + " failed: " + e.what());
            sweep.entries.push_back({{"clusters", c}, {"status", "degenerate"}, {"message", e.what()}});
            last_failure = e.what();
        }
    }
    if (!sweep.best) {
        throw DegenerateClusterError("every cluster count failed; last error: " + last_failure.value_or(""), -1);
    }
    return sweep;
}

void write_json(const json& j, const std::string& path) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    close_checked(out, path);
}

void write_model(const StoredModel& model, const std::string& path) {
    auto out = open_out(path);
    std::visit([&](const auto& m) { save_model(out, m); }, model);
    close_checked(out, path);
}

LabelVector labels_for(const StoredModel& model) { return argmax_labels(base_model(model).posterior); }

Membership predict_any(const StoredModel& model, const SequenceMatrix& data) {
    if (data.horizon() != base_model(model).grid.horizon()) {
        throw DomainError("data horizon " + shortest(data.horizon()) + " differs from the model's " +
                          shortest(base_model(model).grid.horizon()));
    }
    return std::visit([&](const auto& m) { return predict_membership(m, data); }, model);
}

void write_curve(const std::string& path, const EvalGrid& grid, const GridFunction& values) {
    auto out = open_out(path);
    out << "t,value\n";
    for (int g = 0; g < grid.size(); ++g) out << shortest(grid[g]) << ',' << shortest(values[g]) << '\n';
    close_checked(out, path);
}

} // namespace

std::pair<int, int> parse_cluster_range(const std::string& text) {
    auto parse = [&](std::string_view s) {
        int v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) {
            throw DomainError("bad cluster count '" + text + "'");
        }
        return v;
    };
    const auto dots = text.find("..");
    const int lo = parse(std::string_view(text).substr(0, dots));
    const int hi = dots == std::string::npos ? lo : parse(std::string_view(text).substr(dots + 2));
    if (lo < 1 || hi < lo) throw DomainError("cluster range must satisfy 1 <= min <= max");
    return {lo, hi};
}

void run_simulate(const SimulateOptions& opt) {
    SimConfig cfg;
    cfg.clusters = opt.clusters;
    cfg.per_cluster = opt.per_cluster;
    cfg.slots = opt.days;
    cfg.marks = opt.marks;
    cfg.horizon = opt.horizon;
    cfg.grid_size = opt.grid_size;
    cfg.residual.y_variance = opt.y_variance;
    cfg.residual.z_variance = opt.z_variance;
    cfg.seed = opt.seed;
    const LabeledDataset ds = simulate_dataset(cfg);

    ensure_dir(opt.out_dir);
    const std::string events = (fs::path(opt.out_dir) / "events.txt").string();
    const std::string labels = (fs::path(opt.out_dir) / "labels.tsv").string();
    const std::string truth = (fs::path(opt.out_dir) / "truth.json").string();
    {
        auto out = open_out(events);
        write_events(out, ds.data);
        close_checked(out, events);
    }
    {
        auto out = open_out(labels);
        for (std::size_t i = 0; i < ds.labels.size(); ++i) out << i << '\t' << ds.labels[i] << '\n';
        close_checked(out, labels);
    }
    const GroundTruth& t = ds.truth;
    json j;
    j["grid"] = {{"horizon", t.grid.horizon()}, {"size", t.grid.size()}};
    j["clusters"] = cfg.clusters;
    j["marks"] = cfg.marks;
    j["slots"] = cfg.slots;
    j["seed"] = cfg.seed;
    json means = json::array(), variances = json::array(), sampled = json::array();
    for (int c = 0; c < cfg.clusters; ++c) {
        for (int r = 0; r < cfg.marks; ++r) {
            const auto& mu = t.means[c * cfg.marks + r];
            means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
            const GridFunction d = t.covariances[(c * cfg.marks + r) * cfg.marks + r].diagonal();
            variances.push_back(std::vector<double>(d.data(), d.data() + d.size()));
            const auto& s = t.sampled_variances[c * cfg.marks + r];
            sampled.push_back(std::vector<double>(s.data(), s.data() + s.size()));
        }
    }
    j["means"] = std::move(means);
    j["x_variance"] = std::move(variances);
    j["x_variance_sampled"] = std::move(sampled);
    j["y_variance"] = std::vector<double>(t.y_variance.data(), t.y_variance.data() + t.y_variance.size());
    j["z_variance"] = std::vector<double>(t.z_variance.data(), t.z_variance.data() + t.z_variance.size());
    write_json(j, truth);
    log_line("wrote " + std::to_string(ds.data.accounts()) + " accounts, " +
             std::to_string(ds.data.event_count()) + " events to " + opt.out_dir);
}

void run_fit(const FitCommand& cmd) {
    const SequenceMatrix data = read_events(cmd.input);
    log_line("loaded n=" + std::to_string(data.accounts()) + " m=" + std::to_string(data.slots()) +
             " R=" + std::to_string(data.marks()) + " events=" + std::to_string(data.event_count()));
    Sweep sweep = sweep_clusters(data, cmd.fit, cmd.fit.seed);
    const FittedModel& best = base_model(sweep.best->model);
    if (!cmd.model_out.empty()) write_model(sweep.best->model, cmd.model_out);
    if (!cmd.report_out.empty()) {
        json report = {{"command", "fit"},
                       {"accounts", data.accounts()},
                       {"slots", data.slots()},
                       {"marks", data.marks()},
                       {"seed", cmd.fit.seed},
                       {"cluster_range", {cmd.fit.min_clusters, cmd.fit.max_clusters}},
                       {"sweep", sweep.entries},
                       {"selected_clusters", sweep.best->clusters},
                       {"bic", best.bic},
                       {"loglik", best.loglik},
                       {"bandwidth", best.bandwidth}};
        write_json(report, cmd.report_out);
    }
    log_line("selected C=" + std::to_string(sweep.best->clusters));
}

void run_evaluate(const EvaluateCommand& cmd) {
    const SequenceMatrix data = read_events(cmd.input);
    const int n = data.accounts();
    json report;
    if (!cmd.truth.empty()) {
        const LabelVector truth = read_labels(cmd.truth, n);
        LabelVector predicted;
        int clusters = 0;
        if (!cmd.model.empty()) {
            auto in = open_in(cmd.model);
            const StoredModel model = load_model(in);
            const auto& base = base_model(model);
            if (base.posterior.rows() != n) {
                throw DomainError("model was fitted on " + std::to_string(base.posterior.rows()) +
                                  " accounts, data has " + std::to_string(n));
            }
            predicted = labels_for(model);
            clusters = base.clusters();
        } else {
            Sweep sweep = sweep_clusters(data, cmd.fit, cmd.fit.seed);
            predicted = labels_for(sweep.best->model);
            clusters = sweep.best->clusters;
        }
        report = {{"metric", "purity"},
                  {"value", purity(predicted, truth)},
                  {"K", 1},
                  {"seeds", {cmd.fit.seed}},
                  {"clusters", clusters},
                  {"accounts", n}};
    } else {
        if (cmd.trials < 2) throw DomainError("consistency needs --trials >= 2");
        if (!(cmd.train_fraction > 0.0 && cmd.train_fraction < 1.0)) {
            throw DomainError("--train-fraction must lie in (0, 1)");
        }
        const int train_size = static_cast<int>(std::lround(cmd.train_fraction * n));
        if (train_size < cmd.fit.max_clusters || train_size >= n) {
            throw DomainError("train/test split leaves an empty fold");
        }
        std::vector<Trial> trials;
        json seeds = json::array();
        for (int k = 0; k < cmd.trials; ++k) {
            const std::uint64_t trial_seed = derive_seed(cmd.fit.seed, {static_cast<std::uint64_t>(k)});
            seeds.push_back(trial_seed);
            std::vector<int> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::mt19937_64 engine(trial_seed);
            std::shuffle(order.begin(), order.end(), engine);
            std::vector<int> train(order.begin(), order.begin() + train_size);
            std::vector<int> test(order.begin() + train_size, order.end());
            std::sort(train.begin(), train.end());
            std::sort(test.begin(), test.end());

            FitOptions opt = cmd.fit;
            opt.max_clusters = opt.min_clusters;
            const StoredModel model = fit_any(data.select_accounts(train), opt.min_clusters, opt, trial_seed);
            const LabelVector train_labels = labels_for(model);
            const Membership held_out = predict_any(model, data.select_accounts(test));
            Trial trial;
            trial.test = test;
            trial.labels.assign(n, 0);
            for (std::size_t a = 0; a < train.size(); ++a) trial.labels[train[a]] = train_labels[a];
            for (std::size_t a = 0; a < test.size(); ++a) trial.labels[test[a]] = held_out.labels[a];
            trials.push_back(std::move(trial));
            log_line("trial " + std::to_string(k + 1) + "/" + std::to_string(cmd.trials) + " done");
        }
        report = {{"metric", "consistency"},
                  {"value", clustering_consistency(trials)},
                  {"K", cmd.trials},
                  {"seeds", seeds},
                  {"clusters", cmd.fit.min_clusters},
                  {"accounts", n}};
    }
    log_line(report["metric"].get<std::string>() + " = " + shortest(report["value"].get<double>()));
    if (!cmd.report_out.empty()) {
        write_json(report, cmd.report_out);
    } else {
        std::cout << report.dump(2) << '\n';
    }
}

void run_predict(const PredictCommand& cmd) {
    auto in = open_in(cmd.model);
    const StoredModel model = load_model(in);
    const SequenceMatrix data = read_events(cmd.input);
    const Membership result = predict_any(model, data);
    std::ostringstream text;
    text << "account\tlabel";
    for (Eigen::Index c = 0; c < result.posterior.cols(); ++c) text << "\tp" << c + 1;
    text << '\n';
    for (Eigen::Index i = 0; i < result.posterior.rows(); ++i) {
        text << i << '\t' << result.labels[i];
        for (Eigen::Index c = 0; c < result.posterior.cols(); ++c) text << '\t' << shortest(result.posterior(i, c));
        text << '\n';
    }
    if (cmd.out.empty()) {
        std::cout << text.str();
    } else {
        auto out = open_out(cmd.out);
        out << text.str();
        close_checked(out, cmd.out);
    }
}

void run_export(const ExportCommand& cmd) {
    auto in = open_in(cmd.model);
    const StoredModel model = load_model(in);
    const FittedModel& base = base_model(model);
    const auto* multi = std::get_if<MultilevelFit>(&model);
    ensure_dir(cmd.out_dir);
    const fs::path dir(cmd.out_dir);
    for (int c = 0; c < base.clusters(); ++c) {
        for (int r = 0; r < base.marks(); ++r) {
            const std::string tag = "c" + std::to_string(c + 1) + "_r" + std::to_string(r + 1);
            const GridFunction& mu = multi ? multi->mean(c, r) : base.params.mean(c, r);
            write_curve((dir / ("mean_" + tag + ".csv")).string(), base.grid, mu);
            write_curve((dir / ("gamma_diag_" + tag + ".csv")).string(), base.grid,
                        base.params.covariance(c, r, r).diagonal());
        }
    }
    if (!cmd.sweep_reports.empty()) {
        std::map<int, int> counts;
        for (const auto& path : cmd.sweep_reports) {
            auto report_in = open_in(path);
            json report;
            try {
                report = json::parse(report_in);
                const auto range = report.at("cluster_range");
                for (int c = range.at(0).get<int>(); c <= range.at(1).get<int>(); ++c) counts.try_emplace(c, 0);
                ++counts[report.at("selected_clusters").get<int>()];
            } catch (const json::exception& e) {
                throw FormatError(path + ": not a fit report (" + e.what() + ")");
            }
        }
        const std::string path = (dir / "cluster_histogram.csv").string();
        auto out = open_out(path);
        out << "clusters,count\n";
        for (const auto& [c, k] : counts) out << c << ',' << k << '\n';
        close_checked(out, path);
    }
    log_line("exported " + std::to_string(2 * base.clusters() * base.marks()) + " curves to " + cmd.out_dir);
}

} // namespace mmpp::cli
