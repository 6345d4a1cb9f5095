#include "commands.hpp"

#include "mmpp/errors.hpp"

#include "CLI11.hpp"

#include <omp.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace {

using namespace mmpp;
using namespace mmpp::cli;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Expands `--config FILE` into ordinary flags. A flag given on the command
// line wins over the same key in the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<long>(i));
            break;
        }
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::set<std::string> given;
    for (const auto& a : args) {
        if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos
                                                                                            : a.find('=') - 2));
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path + ": line " + std::to_string(lineno) + ": expected key=value", lineno);
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(path + ": line " + std::to_string(lineno) + ": empty key", lineno);
        if (given.count(key)) continue;
        args.push_back("--" + key);
        args.push_back(value);
    }
    return args;
}

void add_fit_options(CLI::App* cmd, FitOptions& opt, std::string& clusters) {
    cmd->add_option("--clusters", clusters, "cluster count C, or a range like 2..6 swept by BIC")
        ->capture_default_str();
    cmd->add_option("--bandwidths", opt.bandwidths,
                    "kernel bandwidth candidates (default: 0.05 0.1 0.2 0.4 times T/2)")
        ->delimiter(',');
    cmd->add_option("--mc-samples", opt.mc_samples, "Monte Carlo paths per cluster")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    cmd->add_option("--grid", opt.grid_size, "evaluation grid size G")
        ->check(CLI::Range(3, 100000))
        ->capture_default_str();
    cmd->add_option("--energy", opt.energy, "FPCA energy threshold")
        ->check(CLI::Range(1e-6, 1.0))
        ->capture_default_str();
    cmd->add_option("--tol", opt.tolerance, "stop when the largest posterior change falls below this")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--max-iter", opt.max_iterations, "iteration cap")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    cmd->add_option("--restarts", opt.restarts, "independent initializations")
        ->check(CLI::Range(1, 10000))
        ->capture_default_str();
    cmd->add_option("--folds", opt.selection_folds,
                    "held-out folds for bandwidth selection (0 scores on the fitting accounts)")
        ->check(CLI::Range(0, 1000))
        ->capture_default_str();
    cmd->add_option("--nuisance-bandwidth", opt.nuisance_bandwidth,
                    "bandwidth for the day and residual covariance estimators (0 means T/10)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--seed", opt.seed, "master random seed")->required();
}

void add_threads(CLI::App* cmd, int& threads) {
    cmd->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 4096))->capture_default_str();
}

int run(int argc, char** argv) {
    std::vector<std::string> raw(argv + 1, argv + argc);
    std::vector<std::string> args = expand_config(std::move(raw));

    CLI::App app{"Clustering of multi-type event sequences with marked log-Gaussian Cox process mixtures", "mmpp"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every command");
    int threads = 1;

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "generate a labelled synthetic dataset");
    simulate->add_option("--clusters", sim.clusters, "number of clusters")
        ->check(CLI::Range(1, 1000))
        ->capture_default_str();
    simulate->add_option("--n-per", sim.per_cluster, "accounts per cluster")
        ->check(CLI::Range(1, 10000000))
        ->capture_default_str();
    simulate->add_option("--days", sim.days, "time slots per account")
        ->check(CLI::Range(1, 100000))
        ->capture_default_str();
    simulate->add_option("--marks", sim.marks, "event types")->check(CLI::Range(1, 1000))->capture_default_str();
    simulate->add_option("--horizon", sim.horizon, "window length T")->check(CLI::PositiveNumber)->capture_default_str();
    simulate->add_option("--grid", sim.grid_size, "simulation grid size")
        ->check(CLI::Range(3, 100000))
        ->capture_default_str();
    simulate->add_option("--y-variance", sim.y_variance, "day-level score variance")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    simulate->add_option("--z-variance", sim.z_variance, "residual score variance")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    simulate->add_option("--seed", sim.seed, "master random seed")->required();
    simulate->add_option("--out", sim.out_dir, "output directory")->required();
    add_threads(simulate, threads);

    FitCommand fit_cmd;
    std::string fit_clusters = "2";
    auto* fit = app.add_subcommand("fit", "fit the mixture model (multi-level when the data has several slots)");
    fit->add_option("--input", fit_cmd.input, "event file")->required();
    fit->add_option("--model-out", fit_cmd.model_out, "fitted model file")->required();
    fit->add_option("--report-out", fit_cmd.report_out, "JSON report with the BIC sweep");
    add_fit_options(fit, fit_cmd.fit, fit_clusters);
    add_threads(fit, threads);

    EvaluateCommand eval_cmd;
    std::string eval_clusters = "2";
    auto* evaluate = app.add_subcommand(
        "evaluate", "purity against truth labels, or cross-trial clustering consistency without them");
    evaluate->add_option("--input", eval_cmd.input, "event file")->required();
    evaluate->add_option("--truth", eval_cmd.truth, "labels file (account<TAB>cluster)");
    evaluate->add_option("--model", eval_cmd.model, "score this model's posterior instead of refitting");
    evaluate->add_option("--trials", eval_cmd.trials, "number of train/test trials K")
        ->check(CLI::Range(2, 100000))
        ->capture_default_str();
    evaluate->add_option("--train-fraction", eval_cmd.train_fraction, "share of accounts used for training")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    evaluate->add_option("--report-out", eval_cmd.report_out, "JSON metrics report (stdout when omitted)");
    add_fit_options(evaluate, eval_cmd.fit, eval_clusters);
    add_threads(evaluate, threads);

    PredictCommand pred_cmd;
    auto* predict = app.add_subcommand("predict", "cluster memberships of new accounts under a fitted model");
    predict->add_option("--model", pred_cmd.model, "fitted model file")->required();
    predict->add_option("--input", pred_cmd.input, "event file")->required();
    predict->add_option("--out", pred_cmd.out, "TSV output (stdout when omitted)");
    add_threads(predict, threads);

    ExportCommand export_cmd;
    auto* export_curves = app.add_subcommand("export-curves", "write mean and variance curves as CSV");
    export_curves->add_option("--model", export_cmd.model, "fitted model file")->required();
    export_curves->add_option("--out", export_cmd.out_dir, "output directory")->required();
    export_curves->add_option("--sweep-report", export_cmd.sweep_reports,
                              "fit reports whose selected cluster counts feed a histogram");
    add_threads(export_curves, threads);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    omp_set_num_threads(threads);

    if (*simulate) {
        run_simulate(sim);
    } else if (*fit) {
        std::tie(fit_cmd.fit.min_clusters, fit_cmd.fit.max_clusters) = parse_cluster_range(fit_clusters);
        run_fit(fit_cmd);
    } else if (*evaluate) {
        std::tie(eval_cmd.fit.min_clusters, eval_cmd.fit.max_clusters) = parse_cluster_range(eval_clusters);
        run_evaluate(eval_cmd);
    } else if (*predict) {
        run_predict(pred_cmd);
    } else if (*export_curves) {
        run_export(export_cmd);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const mmpp::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const mmpp::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const mmpp::FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const mmpp::DegenerateClusterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const mmpp::InsufficientDataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const mmpp::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
