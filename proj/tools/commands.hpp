#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmpp::cli {

/// Failure of a file operation; maps to exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulateOptions {
    int clusters = 2;
    int per_cluster = 100;
    int days = 1;
    int marks = 2;
    double horizon = 2.0;
    int grid_size = 201;
    double y_variance = 0.2;
    double z_variance = 0.05;
    std::uint64_t seed = 0;
    std::string out_dir;
};

/// Shared by fit, evaluate and predict.
struct FitOptions {
    int min_clusters = 2;
    int max_clusters = 2;
    std::vector<double> bandwidths;
    int mc_samples = 500;
    int grid_size = 51;
    double energy = 0.95;
    double tolerance = 1e-4;
    int max_iterations = 200;
    int restarts = 1;
    int selection_folds = 5;
    double nuisance_bandwidth = 0.0;
    std::uint64_t seed = 0;
};

struct FitCommand {
    FitOptions fit;
    std::string input;
    std::string model_out;
    std::string report_out;
};

struct EvaluateCommand {
    FitOptions fit;
    std::string input;
    std::string truth;      // labels file; empty -> consistency protocol
    std::string model;      // optional: score this model's posterior instead of refitting
    int trials = 10;
    double train_fraction = 0.8;
    std::string report_out;
};

struct PredictCommand {
    std::string model;
    std::string input;
    std::string out;
};

struct ExportCommand {
    std::string model;
    std::string out_dir;
    std::vector<std::string> sweep_reports;
};

/// "2" or "2..6".
std::pair<int, int> parse_cluster_range(const std::string& text);

void run_simulate(const SimulateOptions& opt);
void run_fit(const FitCommand& cmd);
void run_evaluate(const EvaluateCommand& cmd);
void run_predict(const PredictCommand& cmd);
void run_export(const ExportCommand& cmd);

} // namespace mmpp::cli
