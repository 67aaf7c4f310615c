#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hev/baselines.hpp"
#include "hev/coordinator.hpp"

namespace hev {

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr int kReportSchema = 1;

// |end - initial| / initial * 100. Throws ZeroInitialSoc.
double soc_error(double soc_initial, double soc_end);
// (baseline - candidate) / baseline * 100, negative when the candidate is
// worse. Throws ZeroBaseline.
double fuel_saving(double baseline_fuel, double candidate_fuel);

enum class ControllerKind { RuleBased, Ecms, SingleAgent, MultiAgent };

std::string_view to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(std::string_view name);
inline bool is_learning(ControllerKind kind) {
    return kind == ControllerKind::SingleAgent || kind == ControllerKind::MultiAgent;
}

struct ExperimentConfig {
    // Empty paths select the built-in defaults.
    std::filesystem::path plant_file;
    std::filesystem::path maps_dir;
    std::filesystem::path cycles_dir;

    std::array<PhaseWindow, 4> phases = default_phase_windows();
    std::size_t ramp_seconds = 3;
    // "learning" is the composite cycle in phase order; other names are
    // standard traces (artemis_rural, rts95, udds, wltp) or trace files.
    std::vector<std::string> eval_cycles{"learning"};

    std::vector<ControllerKind> controllers{ControllerKind::RuleBased, ControllerKind::SingleAgent,
                                            ControllerKind::MultiAgent};
    ControllerKind baseline = ControllerKind::RuleBased;

    RewardWeights weights;
    double relevance_ratio = 0.2;
    AgentConfig agent;
    double single_u_mot2 = 1.0;
    ObservationScale observation;
    SocBoundPolicy soc_policy = SocBoundPolicy::Terminate;
    double training_soc = 0.28;

    EcmsConfig ecms;
    double rule_soc_low = 0.30, rule_soc_high = 0.32;

    std::vector<double> initial_soc{0.25, 0.28, 0.30};
    std::size_t episodes = 100;
    std::vector<std::uint64_t> seeds{1};
    std::filesystem::path output_dir = "runs/default";

    // Throws Config.
    void validate() const;

    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;
    // FNV-1a of the canonical JSON dump.
    std::uint64_t hash() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Resolved inputs shared by every run of one configuration.
struct ExperimentSetup {
    EnvironmentConfig environment;
    std::array<PhaseSpec, 4> phases;
    std::vector<std::pair<std::string, DriveCycle>> eval_cycles;
    CoordinatorConfig coordinator_base;

    CoordinatorConfig coordinator(ControllerKind kind) const;
};

ExperimentSetup prepare(const ExperimentConfig& config);

struct ComparisonRow {
    std::string cycle;
    double soc_initial = 0.0;
    std::string method;
    double soc_end = 0.0;  // seed mean
    double soc_error = 0.0;
    std::optional<double> fuel;  // L/100 km, seed mean
    std::optional<double> saving;  // against the configured baseline
};

void write_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows);

struct RunOptions {
    bool train = true;      // false: load checkpoints from output_dir/checkpoints
    bool write_files = true;
};

struct ExperimentResult {
    std::vector<ComparisonRow> rows;
    // Keyed by "<method>_seed<n>".
    std::map<std::string, LearningHistory> histories;
};

// Trains the learning controllers, evaluates every controller on each
// (cycle, initial SoC) pair with exploration off, and writes comparison.tsv,
// learning/*.tsv, traces/*.tsv, checkpoints/ and manifest.json.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace hev
