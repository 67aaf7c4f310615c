#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "hev/error.hpp"
#include "hev/experiment.hpp"
#include "hev/sensitivity.hpp"

namespace {

using namespace hev;
namespace fs = std::filesystem;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> episodes;
    std::optional<double> relevance_ratio;
    std::vector<double> initial_soc;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "Experiment JSON file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Root seed, replaces the seed list");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--episodes", f.episodes, "Training episodes");
    cmd->add_option("--relevance-ratio", f.relevance_ratio, "Hand-shaking relevance ratio in [0, 1]");
    cmd->add_option("--initial-soc", f.initial_soc, "Comma-separated initial SoC values")->delimiter(',');
}

ExperimentConfig resolve_config(const CommonFlags& f) {
    auto c = f.config.empty() ? ExperimentConfig{} : load_experiment_config(f.config);
    if (f.seed) c.seeds = {*f.seed};
    if (!f.out.empty()) c.output_dir = f.out;
    if (f.episodes) c.episodes = *f.episodes;
    if (f.relevance_ratio) c.relevance_ratio = *f.relevance_ratio;
    if (!f.initial_soc.empty()) c.initial_soc = f.initial_soc;
    return c;
}

void print_rows(const std::vector<ComparisonRow>& rows) { write_comparison(std::cout, rows); }

std::string cpu_model() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("model name", 0) == 0) return line.substr(line.find(':') + 2);
    return "unknown";
}

void cycles_inspect(const std::vector<std::string>& names, const std::string& dir) {
    const auto library = CycleLibrary::load(dir.empty() ? fs::path(HEV_CLI_DATA_DIR) / "cycles" : fs::path(dir));
    std::vector<DriveCycle> cycles;
    if (names.empty()) {
        for (auto s : {CycleSource::ArtemisRural, CycleSource::RTS95, CycleSource::UDDS, CycleSource::WLTP})
            cycles.push_back(library.get(s));
    }
    for (const auto& n : names) {
        const auto source = cycle_source_from_string(n);
        cycles.push_back(source == CycleSource::Custom ? load_cycle(n) : library.get(source));
    }
    std::cout << "name\tsource\tduration_s\tdistance_km\tmean_speed_kmh\tmax_speed_kmh\tmax_accel_ms2\n";
    for (const auto& c : cycles) {
        validate_cycle(c);
        double vmax = 0.0, amax = 0.0;
        for (std::size_t t = 0; t < c.size(); ++t) {
            vmax = std::max(vmax, c.speeds[t]);
            amax = std::max(amax, std::abs(c.acceleration(t)));
        }
        fmt::print(std::cout, "{}\t{}\t{:.0f}\t{:.3f}\t{:.2f}\t{:.2f}\t{:.3f}\n", c.name, to_string(c.source),
                   c.duration(), c.distance() / 1000.0, c.distance() / c.duration() * 3.6, vmax * 3.6, amax);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Multi-agent DDPG energy management for a multi-mode hybrid powertrain"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, baseline_flags, sweep_flags;
    auto* train = app.add_subcommand("train", "Train the learning controllers and write the comparison report");
    add_common(train, train_flags);
    auto* eval = app.add_subcommand("eval", "Evaluate from checkpoints saved by train in the same --out");
    add_common(eval, eval_flags);
    auto* baseline = app.add_subcommand("baseline", "Evaluate the rule-based and ECMS controllers only");
    add_common(baseline, baseline_flags);

    auto* sweep = app.add_subcommand("sweep", "Run one hyperparameter sweep dimension");
    add_common(sweep, sweep_flags);
    std::string dimension;
    sweep->add_option("--dimension", dimension, "critic-depth, learning-rates or policy-noise")->required();

    auto* sens = app.add_subcommand("sensitivity", "Rank sweep dimensions from their logs");
    std::vector<std::string> logs;
    std::string report_out;
    sens->add_option("logs", logs, "Sweep log files")->required()->check(CLI::ExistingFile);
    sens->add_option("--out", report_out, "Write the report here instead of stdout");

    auto* cycles = app.add_subcommand("cycles", "Drive-cycle utilities");
    cycles->require_subcommand(1);
    auto* inspect = cycles->add_subcommand("inspect", "Summarize standard traces or trace files");
    std::vector<std::string> cycle_names;
    std::string cycles_dir;
    inspect->add_option("cycles", cycle_names, "Standard trace names or trace files");
    inspect->add_option("--cycles-dir", cycles_dir, "Directory holding the standard traces");

    CLI11_PARSE(app, argc, argv);

    if (*train) {
        const auto r = run_experiment(resolve_config(train_flags));
        print_rows(r.rows);
    } else if (*eval) {
        const auto r = run_experiment(resolve_config(eval_flags), RunOptions{.train = false});
        print_rows(r.rows);
    } else if (*baseline) {
        auto c = resolve_config(baseline_flags);
        c.controllers = {ControllerKind::RuleBased, ControllerKind::Ecms};
        if (is_learning(c.baseline)) c.baseline = ControllerKind::RuleBased;
        print_rows(run_experiment(c).rows);
    } else if (*sweep) {
        const auto c = resolve_config(sweep_flags);
        const auto setup = prepare(c);
        const auto dim = sweep_dimension_from_string(dimension);
        SweepOptions opt;
        opt.coordinator = setup.coordinator(ControllerKind::MultiAgent);
        opt.environment = setup.environment;
        opt.phases = setup.phases;
        opt.eval_cycle = setup.eval_cycles.front().second;
        opt.episodes = c.episodes;
        opt.seeds = c.seeds;
        const auto log = run_sweep(dim, default_sweep_groups(dim, c.agent), opt);
        fs::create_directories(c.output_dir);
        const auto path = c.output_dir / fmt::format("sweep_{}.tsv", to_string(dim));
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
        log.write(out);
        nlohmann::json host{{"version", kVersion},
                            {"config_hash", fmt::format("{:016x}", c.hash())},
                            {"dimension", to_string(dim)},
                            {"cpu", cpu_model()},
                            {"hardware_threads", std::thread::hardware_concurrency()}};
        std::ofstream(c.output_dir / fmt::format("sweep_{}_host.json", to_string(dim))) << host.dump(2) << "\n";
        log.write(std::cout);
    } else if (*sens) {
        std::vector<DimensionSummary> summaries;
        for (const auto& p : logs) {
            std::ifstream in(p);
            summaries.push_back(summarize(SweepLog::read(in)));
        }
        if (report_out.empty()) {
            write_importance_report(std::cout, summaries);
        } else {
            std::ofstream out(report_out, std::ios::binary);
            if (!out) throw Error(ErrorKind::Io, "cannot write " + report_out);
            write_importance_report(out, summaries);
        }
    } else if (*inspect) {
        cycles_inspect(cycle_names, cycles_dir);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const hev::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: Internal: {}\n", e.what());
        return 3;
    }
}
