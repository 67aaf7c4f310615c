#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hev {

enum class CycleSource { ArtemisRural, RTS95, UDDS, WLTP, Composite, Custom };

std::string_view to_string(CycleSource source);
CycleSource cycle_source_from_string(std::string_view name);

struct DriveCycle {
    std::string name;
    std::vector<double> speeds;  // m/s, 1 s spacing
    CycleSource source = CycleSource::Custom;
    std::string provenance;

    std::size_t size() const { return speeds.size(); }
    double duration() const { return static_cast<double>(speeds.size()); }
    // Forward difference; zero on the last sample.
    double acceleration(std::size_t t) const;
    // Distance covered by stepping every sample for 1 s at its speed.
    double distance() const;
};

inline constexpr double kDefaultAccelLimit = 5.0;  // m/s^2

// Throws NonPositiveDuration, VelocityOutOfRange.
void validate_cycle(const DriveCycle& cycle, double accel_limit = kDefaultAccelLimit);

// Trace format: one velocity per line (';' and ',' also separate samples).
// Optional header lines: "# units: kmh|mps", "# name: ...", "# provenance: ...".
DriveCycle parse_cycle(std::string_view text, std::string default_name = "custom",
                       double accel_limit = kDefaultAccelLimit);
DriveCycle load_cycle(const std::filesystem::path& path, double accel_limit = kDefaultAccelLimit);

enum class PhaseLabel { Phase1, Phase2, Phase3, Phase4 };

struct PhaseSpec {
    DriveCycle source;
    std::size_t start = 0;  // inclusive
    std::size_t end = 0;    // exclusive
    PhaseLabel label = PhaseLabel::Phase1;

    void validate() const;
};

// Seed-determined permutation of the four phases, uniform over all 24 orders.
std::array<std::size_t, 4> learning_cycle_order(std::uint64_t seed);

// Concatenates the phases in the given order, inserting `ramp_seconds` linearly
// interpolated samples at each of the three junctions.
DriveCycle compose_cycle(const std::array<PhaseSpec, 4>& phases, const std::array<std::size_t, 4>& order,
                         std::size_t ramp_seconds = 3);

DriveCycle build_learning_cycle(const std::array<PhaseSpec, 4>& phases, std::uint64_t seed,
                                std::size_t ramp_seconds = 3);

// Standard traces shipped under data/cycles.
struct CycleLibrary {
    DriveCycle artemis_rural, rts95, udds, wltp;

    static CycleLibrary load(const std::filesystem::path& directory);
    const DriveCycle& get(CycleSource source) const;
};

// A phase as a second-range of a standard trace.
struct PhaseWindow {
    CycleSource source = CycleSource::ArtemisRural;
    std::size_t start = 0, end = 0;
};

// Phase 1 low-speed Artemis Rural, Phase 2 the peak acceleration of RTS95,
// Phase 3 medium-speed UDDS, Phase 4 high-speed WLTP.
std::array<PhaseWindow, 4> default_phase_windows();
std::array<PhaseSpec, 4> phase_specs(const CycleLibrary& library, const std::array<PhaseWindow, 4>& windows);
std::array<PhaseSpec, 4> default_phase_specs(const CycleLibrary& library);

}  // namespace hev
