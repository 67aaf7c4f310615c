#include "hev/drive_cycle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hev/error.hpp"
#include "hev/rng.hpp"

namespace hev {

std::string_view to_string(CycleSource source) {
    switch (source) {
        case CycleSource::ArtemisRural: return "ArtemisRural";
        case CycleSource::RTS95: return "RTS95";
        case CycleSource::UDDS: return "UDDS";
        case CycleSource::WLTP: return "WLTP";
        case CycleSource::Composite: return "Composite";
        case CycleSource::Custom: return "Custom";
    }
    return "Custom";
}

CycleSource cycle_source_from_string(std::string_view name) {
    for (auto s : {CycleSource::ArtemisRural, CycleSource::RTS95, CycleSource::UDDS, CycleSource::WLTP,
                   CycleSource::Composite, CycleSource::Custom})
        if (to_string(s) == name) return s;
    return CycleSource::Custom;
}

double DriveCycle::acceleration(std::size_t t) const {
    if (t + 1 >= speeds.size()) return 0.0;
    return speeds[t + 1] - speeds[t];
}

double DriveCycle::distance() const {
    double d = 0.0;
    for (double v : speeds) d += v;
    return d;
}

void validate_cycle(const DriveCycle& cycle, double accel_limit) {
    if (cycle.speeds.size() < 2)
        throw Error(ErrorKind::NonPositiveDuration, "cycle '" + cycle.name + "' has fewer than 2 samples");
    for (std::size_t t = 0; t < cycle.speeds.size(); ++t) {
        const double v = cycle.speeds[t];
        if (!std::isfinite(v) || v < 0.0)
            throw Error(ErrorKind::VelocityOutOfRange,
                        "cycle '" + cycle.name + "' sample " + std::to_string(t) + " is negative or non-finite");
        if (std::abs(cycle.acceleration(t)) > accel_limit)
            throw Error(ErrorKind::VelocityOutOfRange,
                        "cycle '" + cycle.name + "' acceleration at " + std::to_string(t) + " exceeds limit");
    }
}

DriveCycle parse_cycle(std::string_view text, std::string default_name, double accel_limit) {
    DriveCycle cycle;
    cycle.name = std::move(default_name);
    bool kmh = false;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (line[first] == '#') {
            const auto colon = line.find(':', first);
            if (colon == std::string::npos) continue;
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(first + 1, colon - first - 1));
            const std::string value = trim(line.substr(colon + 1));
            if (key == "units") {
                if (value == "kmh")
                    kmh = true;
                else if (value == "mps")
                    kmh = false;
                else
                    throw Error(ErrorKind::ParseError, "unknown units '" + value + "'");
            } else if (key == "name") {
                cycle.name = value;
                cycle.source = cycle_source_from_string(value);
            } else if (key == "provenance") {
                cycle.provenance = value;
            }
            continue;
        }
        std::replace(line.begin(), line.end(), ';', ' ');
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        std::string tok;
        while (row >> tok) {
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad sample '" + tok + "'");
            cycle.speeds.push_back(kmh ? v / 3.6 : v);
        }
    }
    validate_cycle(cycle, accel_limit);
    return cycle;
}

DriveCycle load_cycle(const std::filesystem::path& path, double accel_limit) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open cycle file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_cycle(ss.str(), path.stem().string(), accel_limit);
}

void PhaseSpec::validate() const {
    if (!(start < end) || end > source.size())
        throw Error(ErrorKind::InvalidArgument, "phase window [" + std::to_string(start) + ", " +
                                                    std::to_string(end) + ") invalid for cycle '" +
                                                    source.name + "'");
}

std::array<std::size_t, 4> learning_cycle_order(std::uint64_t seed) {
    Rng rng(seed);
    std::array<std::size_t, 4> order{0, 1, 2, 3};
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    return order;
}

DriveCycle compose_cycle(const std::array<PhaseSpec, 4>& phases, const std::array<std::size_t, 4>& order,
                         std::size_t ramp_seconds) {
    DriveCycle out;
    out.source = CycleSource::Composite;
    out.name = "learning";
    std::ostringstream prov;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const PhaseSpec& ph = phases.at(order[k]);
        ph.validate();
        if (k > 0) {
            const double a = out.speeds.back();
            const double b = ph.source.speeds[ph.start];
            for (std::size_t r = 1; r <= ramp_seconds; ++r)
                out.speeds.push_back(a + (b - a) * static_cast<double>(r) / static_cast<double>(ramp_seconds + 1));
            prov << " | ";
        }
        out.speeds.insert(out.speeds.end(), ph.source.speeds.begin() + static_cast<std::ptrdiff_t>(ph.start),
                          ph.source.speeds.begin() + static_cast<std::ptrdiff_t>(ph.end));
        prov << "Phase" << (static_cast<int>(ph.label) + 1) << ':' << to_string(ph.source.source) << '['
             << ph.start << ',' << ph.end << ')';
    }
    out.provenance = prov.str();
    return out;
}

DriveCycle build_learning_cycle(const std::array<PhaseSpec, 4>& phases, std::uint64_t seed,
                                std::size_t ramp_seconds) {
    return compose_cycle(phases, learning_cycle_order(seed), ramp_seconds);
}

CycleLibrary CycleLibrary::load(const std::filesystem::path& dir) {
    return {load_cycle(dir / "artemis_rural.txt"), load_cycle(dir / "rts95.txt"), load_cycle(dir / "udds.txt"),
            load_cycle(dir / "wltp.txt")};
}

const DriveCycle& CycleLibrary::get(CycleSource source) const {
    switch (source) {
        case CycleSource::ArtemisRural: return artemis_rural;
        case CycleSource::RTS95: return rts95;
        case CycleSource::UDDS: return udds;
        case CycleSource::WLTP: return wltp;
        default: throw Error(ErrorKind::InvalidArgument, "no standard trace for this source");
    }
}

std::array<PhaseWindow, 4> default_phase_windows() {
    // Chosen from each trace's speed envelope (s): Artemis Rural 0-80
    // (6-12 m/s), RTS95 30-110 (peak 3.8 m/s^2 at t=49), UDDS 40-120
    // (9-13 m/s), WLTP 1560-1640 (32-35 m/s).
    return {PhaseWindow{CycleSource::ArtemisRural, 0, 80}, PhaseWindow{CycleSource::RTS95, 30, 110},
            PhaseWindow{CycleSource::UDDS, 40, 120}, PhaseWindow{CycleSource::WLTP, 1560, 1640}};
}

std::array<PhaseSpec, 4> phase_specs(const CycleLibrary& lib, const std::array<PhaseWindow, 4>& windows) {
    std::array<PhaseSpec, 4> specs;
    for (std::size_t k = 0; k < 4; ++k) {
        specs[k] = PhaseSpec{lib.get(windows[k].source), windows[k].start, windows[k].end, static_cast<PhaseLabel>(k)};
        specs[k].validate();
    }
    return specs;
}

std::array<PhaseSpec, 4> default_phase_specs(const CycleLibrary& lib) { return phase_specs(lib, default_phase_windows()); }

}  // namespace hev
