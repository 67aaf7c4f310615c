#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hev/coordinator.hpp"

namespace hev {

// Scores of each setting vector on the first principal component of the
// column-standardized setting matrix. Constant columns are ignored. The
// component is signed so that its largest-magnitude loading is positive.
// Throws DegenerateCovariance when every column is constant, InvalidArgument
// for fewer than two settings or ragged rows.
std::vector<double> pca_project(const std::vector<std::vector<double>>& settings);

// Leading eigenpair of a symmetric matrix by cyclic Jacobi rotations.
struct Eigenpair {
    double value = 0.0;
    std::vector<double> vector;
};
Eigenpair leading_eigenpair(std::vector<std::vector<double>> symmetric);

// Percentage |y_best - y_worst| ||x_best|| / (y_best ||x_best - x_worst||) * 100.
// Throws IdenticalSettings when x_best == x_worst, InvalidArgument when y_best == 0.
double sensitivity_level(double y_best, double y_worst, const std::vector<double>& x_best,
                         const std::vector<double>& x_worst);

// First episode (1-based) whose trailing 10-episode mean reward lies within
// `band` of the final trailing mean. Empty input gives 0.
std::size_t convergence_episode(const std::vector<double>& rewards, std::size_t window = 10, double band = 0.02);

enum class SweepDimension { CriticDepth, LearningRates, PolicyNoise };

std::string_view to_string(SweepDimension dimension);
SweepDimension sweep_dimension_from_string(std::string_view name);

struct SweepGroup {
    std::string label;
    AgentConfig agent;
    std::vector<double> settings;  // the hyperparameters this dimension varies
};

// Critic depths 2-7; five actor/critic learning-rate pairs; three OU
// (decay, sigma) pairs. Other fields come from `base`.
std::vector<SweepGroup> default_sweep_groups(SweepDimension dimension, const AgentConfig& base);

struct SweepOptions {
    CoordinatorConfig coordinator;  // agent configs are replaced per group
    EnvironmentConfig environment;
    std::array<PhaseSpec, 4> phases;
    DriveCycle eval_cycle;
    std::size_t episodes = 100;
    std::vector<std::uint64_t> seeds{1};
};

enum class Indicator { ComputationTime, ConvergenceEpisodes, FuelEconomy };
inline constexpr std::array<Indicator, 3> kIndicators{Indicator::ComputationTime, Indicator::ConvergenceEpisodes,
                                                      Indicator::FuelEconomy};
std::string_view to_string(Indicator indicator);

// Seed-averaged indicators of one group; non-converged groups failed to train.
struct GroupResult {
    std::string label;
    std::vector<double> settings;
    bool converged = true;
    double computation_time = 0.0;     // s
    double convergence_episodes = 0.0;
    double fuel_economy = 0.0;         // L/100 km

    double indicator(Indicator which) const;
};

struct SweepLog {
    SweepDimension dimension = SweepDimension::CriticDepth;
    std::vector<GroupResult> groups;

    void write(std::ostream& out) const;
    static SweepLog read(std::istream& in);
};

SweepLog run_sweep(SweepDimension dimension, const std::vector<SweepGroup>& groups, const SweepOptions& options);

struct IndicatorSummary {
    Indicator indicator = Indicator::ComputationTime;
    std::string best_label, worst_label;
    double best = 0.0, worst = 0.0;
    // Empty with fewer than two groups, equal best and worst values, or best and
    // worst settings that share a projection (mirror-image settings can).
    std::optional<double> level;
};

struct DimensionSummary {
    SweepDimension dimension = SweepDimension::CriticDepth;
    std::array<IndicatorSummary, 3> indicators;
    double max_level() const;
};

// Best is the lowest value of each indicator. Settings are projected with
// pca_project over the converged groups.
DimensionSummary summarize(const SweepLog& log);

// Importance table over several dimensions, ranked by their largest level.
void write_importance_report(std::ostream& out, std::vector<DimensionSummary> summaries);

}  // namespace hev
