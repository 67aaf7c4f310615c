#include "hev/experiment.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "hev/error.hpp"
#include "hev/rng.hpp"

#ifndef HEV_DEFAULT_DATA_DIR
#define HEV_DEFAULT_DATA_DIR "data"
#endif

namespace hev {

double soc_error(double soc_initial, double soc_end) {
    if (soc_initial == 0.0) throw Error(ErrorKind::ZeroInitialSoc, "SoC error needs a non-zero initial SoC");
    return std::abs(soc_end - soc_initial) / soc_initial * 100.0;
}

double fuel_saving(double baseline, double candidate) {
    if (baseline == 0.0) throw Error(ErrorKind::ZeroBaseline, "fuel saving needs a non-zero baseline");
    return (baseline - candidate) / baseline * 100.0;
}

std::string_view to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::RuleBased: return "rule_based";
        case ControllerKind::Ecms: return "ecms";
        case ControllerKind::SingleAgent: return "single_agent";
        case ControllerKind::MultiAgent: return "multi_agent";
    }
    return "unknown";
}

ControllerKind controller_kind_from_string(std::string_view name) {
    for (auto k : {ControllerKind::RuleBased, ControllerKind::Ecms, ControllerKind::SingleAgent,
                   ControllerKind::MultiAgent})
        if (to_string(k) == name) return k;
    throw Error(ErrorKind::Config, fmt::format("unknown controller '{}'", name));
}

namespace {

using nlohmann::json;

std::string_view cadence_name(UpdateCadence c) { return c == UpdateCadence::PerStep ? "per_step" : "per_episode"; }

UpdateCadence cadence_from(const std::string& s) {
    if (s == "per_step") return UpdateCadence::PerStep;
    if (s == "per_episode") return UpdateCadence::PerEpisode;
    throw Error(ErrorKind::Config, "cadence must be per_step or per_episode");
}

json agent_json(const AgentConfig& a) {
    return {{"gamma", a.gamma},
            {"batch_size", a.batch_size},
            {"buffer_capacity", a.buffer_capacity},
            {"actor_lr", a.actor_lr},
            {"critic_lr", a.critic_lr},
            {"l2", a.l2},
            {"tau", a.tau},
            {"ou_decay", a.ou_decay},
            {"ou_sigma", a.ou_sigma},
            {"noise_anneal_episodes", a.noise_anneal_episodes},
            {"actor_layers", a.actor_layers},
            {"critic_layers", a.critic_layers},
            {"hidden_width", a.hidden_width},
            {"final_layer_init", a.final_layer_init},
            {"warmup_steps", a.warmup_steps},
            {"cadence", cadence_name(a.cadence)}};
}

template <typename T>
void read(const json& j, const char* key, T& field) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, fmt::format("config key '{}': {}", key, e.what()));
    }
}

AgentConfig agent_from(const json& j, AgentConfig a) {
    read(j, "gamma", a.gamma);
    read(j, "batch_size", a.batch_size);
    read(j, "buffer_capacity", a.buffer_capacity);
    read(j, "actor_lr", a.actor_lr);
    read(j, "critic_lr", a.critic_lr);
    read(j, "l2", a.l2);
    read(j, "tau", a.tau);
    read(j, "ou_decay", a.ou_decay);
    read(j, "ou_sigma", a.ou_sigma);
    read(j, "noise_anneal_episodes", a.noise_anneal_episodes);
    read(j, "actor_layers", a.actor_layers);
    read(j, "critic_layers", a.critic_layers);
    read(j, "hidden_width", a.hidden_width);
    read(j, "final_layer_init", a.final_layer_init);
    read(j, "warmup_steps", a.warmup_steps);
    if (j.contains("cadence")) a.cadence = cadence_from(j.at("cadence").get<std::string>());
    return a;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::string soc_tag(double soc) { return fmt::format("{:.2f}", soc); }

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw Error(ErrorKind::Config, "seed list is empty");
    if (controllers.empty()) throw Error(ErrorKind::Config, "no controllers requested");
    if (initial_soc.empty()) throw Error(ErrorKind::Config, "initial SoC list is empty");
    if (eval_cycles.empty()) throw Error(ErrorKind::Config, "no evaluation cycles");
    if (std::find(controllers.begin(), controllers.end(), baseline) == controllers.end())
        throw Error(ErrorKind::Config, fmt::format("baseline {} is not among the controllers", to_string(baseline)));
    std::set<ControllerKind> unique(controllers.begin(), controllers.end());
    if (unique.size() != controllers.size()) throw Error(ErrorKind::Config, "controller listed twice");
    for (const auto& f : {plant_file, maps_dir, cycles_dir})
        if (!f.empty() && !std::filesystem::exists(f)) throw Error(ErrorKind::Config, "missing path " + f.string());
    if (!(rule_soc_low < rule_soc_high)) throw Error(ErrorKind::Config, "rule-based band needs soc_low < soc_high");
    if (!(observation.t_dem_scale > 0.0 && observation.soc_scale > 0.0))
        throw Error(ErrorKind::Config, "observation scales must be positive");
    ecms.validate();
    HandshakeConfig{relevance_ratio}.validate();
    agent.validate();
    if (!(weights.power_weight > 0.0)) throw Error(ErrorKind::Config, "power weight must be positive");
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base) {
    if (!j.is_object()) throw Error(ErrorKind::Config, "experiment config must be a JSON object");
    ExperimentConfig c;
    std::string s;
    if (j.contains("plant_file")) c.plant_file = resolve(base, j.at("plant_file").get<std::string>());
    if (j.contains("maps_dir")) c.maps_dir = resolve(base, j.at("maps_dir").get<std::string>());
    if (j.contains("cycles_dir")) c.cycles_dir = resolve(base, j.at("cycles_dir").get<std::string>());
    if (j.contains("learning_cycle")) {
        const auto& lc = j.at("learning_cycle");
        read(lc, "ramp_seconds", c.ramp_seconds);
        if (lc.contains("phases")) {
            const auto& ph = lc.at("phases");
            if (!ph.is_array() || ph.size() != 4) throw Error(ErrorKind::Config, "learning cycle needs four phases");
            for (std::size_t k = 0; k < 4; ++k) {
                const auto name = ph[k].at("source").get<std::string>();
                c.phases[k].source = cycle_source_from_string(name);
                if (c.phases[k].source == CycleSource::Custom || c.phases[k].source == CycleSource::Composite)
                    throw Error(ErrorKind::Config, "phase source must be a standard trace, got " + name);
                read(ph[k], "start", c.phases[k].start);
                read(ph[k], "end", c.phases[k].end);
            }
        }
    }
    read(j, "eval_cycles", c.eval_cycles);
    if (j.contains("controllers")) {
        c.controllers.clear();
        for (const auto& n : j.at("controllers")) c.controllers.push_back(controller_kind_from_string(n.get<std::string>()));
    }
    if (j.contains("baseline")) c.baseline = controller_kind_from_string(j.at("baseline").get<std::string>());
    if (j.contains("reward")) {
        const auto& r = j.at("reward");
        read(r, "power_weight_per_kw", c.weights.power_weight);
        read(r, "soc_weight", c.weights.soc_weight_active);
        if (r.contains("soc_ref") && !r.at("soc_ref").is_null()) c.weights.soc_ref = r.at("soc_ref").get<double>();
    }
    read(j, "relevance_ratio", c.relevance_ratio);
    if (j.contains("agent")) c.agent = agent_from(j.at("agent"), c.agent);
    read(j, "single_u_mot2", c.single_u_mot2);
    if (j.contains("observation")) {
        const auto& o = j.at("observation");
        read(o, "t_dem_scale", c.observation.t_dem_scale);
        read(o, "soc_center", c.observation.soc_center);
        read(o, "soc_scale", c.observation.soc_scale);
    }
    if (j.contains("soc_policy")) {
        s = j.at("soc_policy").get<std::string>();
        if (s == "terminate") c.soc_policy = SocBoundPolicy::Terminate;
        else if (s == "clamp") c.soc_policy = SocBoundPolicy::Clamp;
        else throw Error(ErrorKind::Config, "soc_policy must be terminate or clamp");
    }
    read(j, "training_soc", c.training_soc);
    if (j.contains("ecms")) {
        const auto& e = j.at("ecms");
        read(e, "equivalence_factor", c.ecms.equivalence_factor);
        read(e, "u_mot1_levels", c.ecms.u_mot1_levels);
        read(e, "u_mot2_levels", c.ecms.u_mot2_levels);
    }
    if (j.contains("rule_based")) {
        read(j.at("rule_based"), "soc_low", c.rule_soc_low);
        read(j.at("rule_based"), "soc_high", c.rule_soc_high);
    }
    read(j, "initial_soc", c.initial_soc);
    read(j, "episodes", c.episodes);
    read(j, "seeds", c.seeds);
    if (j.contains("output_dir")) c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
    return c;
}

json ExperimentConfig::to_json() const {
    json phases_json = json::array();
    for (const auto& p : phases)
        phases_json.push_back({{"source", to_string(p.source)}, {"start", p.start}, {"end", p.end}});
    json ctrl = json::array();
    for (auto k : controllers) ctrl.push_back(to_string(k));
    return {{"plant_file", plant_file.generic_string()},
            {"maps_dir", maps_dir.generic_string()},
            {"cycles_dir", cycles_dir.generic_string()},
            {"learning_cycle", {{"phases", phases_json}, {"ramp_seconds", ramp_seconds}}},
            {"eval_cycles", eval_cycles},
            {"controllers", ctrl},
            {"baseline", to_string(baseline)},
            {"reward",
             {{"power_weight_per_kw", weights.power_weight},
              {"soc_weight", weights.soc_weight_active},
              {"soc_ref", weights.soc_ref ? json(*weights.soc_ref) : json(nullptr)}}},
            {"relevance_ratio", relevance_ratio},
            {"agent", agent_json(agent)},
            {"single_u_mot2", single_u_mot2},
            {"observation",
             {{"t_dem_scale", observation.t_dem_scale},
              {"soc_center", observation.soc_center},
              {"soc_scale", observation.soc_scale}}},
            {"soc_policy", soc_policy == SocBoundPolicy::Terminate ? "terminate" : "clamp"},
            {"training_soc", training_soc},
            {"ecms",
             {{"equivalence_factor", ecms.equivalence_factor},
              {"u_mot1_levels", ecms.u_mot1_levels},
              {"u_mot2_levels", ecms.u_mot2_levels}}},
            {"rule_based", {{"soc_low", rule_soc_low}, {"soc_high", rule_soc_high}}},
            {"initial_soc", initial_soc},
            {"episodes", episodes},
            {"seeds", seeds},
            {"output_dir", output_dir.generic_string()}};
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json().dump()); }

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, fmt::format("{}: {}", path.string(), e.what()));
    }
    try {
        return ExperimentConfig::from_json(j, path.parent_path());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, fmt::format("{}: {}", path.string(), e.what()));
    }
}

CoordinatorConfig ExperimentSetup::coordinator(ControllerKind kind) const {
    if (!is_learning(kind)) throw Error(ErrorKind::InvalidArgument, "not a learning controller");
    auto c = coordinator_base;
    c.mode = kind == ControllerKind::SingleAgent ? AgentMode::Single : AgentMode::Multi;
    return c;
}

ExperimentSetup prepare(const ExperimentConfig& config) {
    config.validate();
    ExperimentSetup s;
    auto& env = s.environment;
    if (!config.plant_file.empty()) env.params = load_plant_parameters(config.plant_file);
    env.maps = std::make_shared<const PowertrainMaps>(
        config.maps_dir.empty() ? synthetic_maps(env.params)
                                : load_maps(config.maps_dir / "engine_fuel.txt", config.maps_dir / "mg1_efficiency.txt",
                                            config.maps_dir / "mg2_efficiency.txt"));
    env.scale = config.observation;
    env.soc_policy = config.soc_policy;

    const auto cycles_dir =
        config.cycles_dir.empty() ? std::filesystem::path(HEV_DEFAULT_DATA_DIR) / "cycles" : config.cycles_dir;
    const auto library = CycleLibrary::load(cycles_dir);
    s.phases = phase_specs(library, config.phases);
    for (const auto& name : config.eval_cycles) {
        DriveCycle cycle;
        if (name == "learning") {
            cycle = compose_cycle(s.phases, {0, 1, 2, 3}, config.ramp_seconds);
            cycle.name = "learning";
        } else if (name == "artemis_rural") {
            cycle = library.artemis_rural;
        } else if (name == "rts95") {
            cycle = library.rts95;
        } else if (name == "udds") {
            cycle = library.udds;
        } else if (name == "wltp") {
            cycle = library.wltp;
        } else {
            cycle = load_cycle(name);
        }
        validate_cycle(cycle);
        s.eval_cycles.emplace_back(name == "learning" ? name : std::filesystem::path(name).stem().string(), cycle);
    }

    auto& c = s.coordinator_base;
    c.weights = config.weights;
    c.handshake.relevance_ratio = config.relevance_ratio;
    c.agent1 = config.agent;
    c.agent2 = config.agent;
    c.single_u_mot2 = config.single_u_mot2;
    c.soc_initial = config.training_soc;
    c.validate();
    return s;
}

void write_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << "cycle\tinitial_soc\tmethod\tend_soc\tsoc_error_pct\tfuel_l_per_100km\tsaving_pct\n";
    for (const auto& r : rows) {
        fmt::print(out, "{}\t{:.2f}\t{}\t{:.4f}\t{:.2f}\t{}\t{}\n", r.cycle, r.soc_initial, r.method, r.soc_end,
                   r.soc_error, r.fuel ? fmt::format("{:.3f}", *r.fuel) : "-",
                   r.saving ? fmt::format("{:.2f}", *r.saving) : "-");
    }
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    const auto setup = prepare(config);
    const auto& env_config = setup.environment;
    const auto out_dir = config.output_dir;
    std::vector<std::string> files;
    auto emit = [&](const std::filesystem::path& rel, const std::string& text) {
        if (!options.write_files) return;
        write_file(out_dir / rel, text);
        files.push_back(rel.generic_string());
    };

    ExperimentResult result;
    // coordinators[kind][seed index]
    std::map<ControllerKind, std::vector<std::unique_ptr<Coordinator>>> learners;
    for (auto kind : config.controllers) {
        if (!is_learning(kind)) continue;
        for (const auto seed : config.seeds) {
            auto co = std::make_unique<Coordinator>(setup.coordinator(kind), seed);
            const auto tag = fmt::format("{}_seed{}", to_string(kind), seed);
            const auto ckpt = std::filesystem::path("checkpoints") / tag;
            if (options.train) {
                auto history = co->train(setup.phases, env_config, config.episodes);
                std::ostringstream text;
                history.write(text);
                emit(std::filesystem::path("learning") / (tag + ".tsv"), text.str());
                if (options.write_files) co->save(out_dir / ckpt);
                result.histories.emplace(tag, std::move(history));
            } else {
                co->load(out_dir / ckpt);
            }
            learners[kind].push_back(std::move(co));
        }
    }

    const auto rule_config = [&] {
        EmsEnvironment probe(env_config);
        auto rc = default_rule_based_config(env_config.params, *probe.config().maps);
        rc.soc_low = config.rule_soc_low;
        rc.soc_high = config.rule_soc_high;
        return rc;
    }();

    for (const auto& [cycle_name, cycle] : setup.eval_cycles) {
        for (const double soc0 : config.initial_soc) {
            std::vector<ComparisonRow> block;
            for (auto kind : config.controllers) {
                std::vector<EpisodeMetrics> metrics;
                auto record = [&](const RolloutResult& r, const std::string& tag) {
                    metrics.push_back(r.metrics);
                    std::ostringstream text;
                    write_trace(text, r.trace);
                    emit(std::filesystem::path("traces") /
                             fmt::format("{}_soc{}_{}.tsv", cycle_name, soc_tag(soc0), tag),
                         text.str());
                };
                auto traced = env_config;
                traced.record_trace = true;
                EmsEnvironment env(traced);
                if (kind == ControllerKind::RuleBased) {
                    RuleBasedController rb(rule_config, env_config.params);
                    record(rollout(env, rb, cycle, soc0), std::string(to_string(kind)));
                } else if (kind == ControllerKind::Ecms) {
                    EcmsController ecms(config.ecms);
                    record(rollout(env, ecms, cycle, soc0), std::string(to_string(kind)));
                } else {
                    auto& cos = learners.at(kind);
                    for (std::size_t i = 0; i < cos.size(); ++i) {
                        PolicyController policy(*cos[i]);
                        record(rollout(env, policy, cycle, soc0),
                               fmt::format("{}_seed{}", to_string(kind), config.seeds[i]));
                    }
                }
                ComparisonRow row;
                row.cycle = cycle_name;
                row.soc_initial = soc0;
                row.method = std::string(to_string(kind));
                double fuel_sum = 0.0;
                bool fuel_ok = true;
                for (const auto& m : metrics) {
                    row.soc_end += m.soc_end / static_cast<double>(metrics.size());
                    if (m.fuel_l_per_100km) fuel_sum += *m.fuel_l_per_100km;
                    else fuel_ok = false;
                }
                row.soc_error = soc_error(soc0, row.soc_end);
                if (fuel_ok) row.fuel = fuel_sum / static_cast<double>(metrics.size());
                block.push_back(row);
            }
            const auto base = std::find_if(block.begin(), block.end(), [&](const ComparisonRow& r) {
                return r.method == to_string(config.baseline);
            });
            for (auto& r : block)
                if (base->fuel && r.fuel && *base->fuel > 0.0) r.saving = fuel_saving(*base->fuel, *r.fuel);
            result.rows.insert(result.rows.end(), block.begin(), block.end());
        }
    }

    std::ostringstream table;
    write_comparison(table, result.rows);
    emit("comparison.tsv", table.str());

    if (options.write_files) {
        nlohmann::json manifest{{"version", kVersion},
                                {"report_schema", kReportSchema},
                                {"config_hash", fmt::format("{:016x}", config.hash())},
                                {"config", config.to_json()},
                                {"seeds", config.seeds},
                                {"trained", options.train},
                                {"files", files}};
        write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
    }
    return result;
}

}  // namespace hev
