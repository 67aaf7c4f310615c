#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hev/error.hpp"
#include "hev/experiment.hpp"
#include "test_support.hpp"

namespace hev {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("hev_experiment_" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentConfig toy_config(const fs::path& out) {
    ExperimentConfig c;
    c.cycles_dir = test::data_dir() / "cycles";
    c.phases = {PhaseWindow{CycleSource::ArtemisRural, 0, 12}, PhaseWindow{CycleSource::RTS95, 30, 42},
                PhaseWindow{CycleSource::UDDS, 40, 52}, PhaseWindow{CycleSource::WLTP, 1560, 1572}};
    c.controllers = {ControllerKind::RuleBased, ControllerKind::Ecms, ControllerKind::SingleAgent,
                     ControllerKind::MultiAgent};
    c.agent.hidden_width = 8;
    c.agent.batch_size = 4;
    c.agent.warmup_steps = 8;
    c.agent.buffer_capacity = 500;
    c.ecms.u_mot1_levels = 3;
    c.ecms.u_mot2_levels = 3;
    c.initial_soc = {0.25, 0.30};
    c.episodes = 2;
    c.seeds = {3, 4};
    c.output_dir = out;
    return c;
}

TEST(Metrics, SocErrorMatchesPublishedRows) {
    EXPECT_NEAR(soc_error(0.25, 0.241), 3.60, 0.005);
    EXPECT_NEAR(soc_error(0.25, 0.246), 1.60, 0.005);
    EXPECT_NEAR(soc_error(0.30, 0.328), 9.33, 0.005);
}

TEST(Metrics, SocErrorIsSymmetricAroundStart) {
    EXPECT_NEAR(soc_error(0.28, 0.30), soc_error(0.28, 0.26), 1e-12);
    EXPECT_DOUBLE_EQ(soc_error(0.28, 0.28), 0.0);
}

TEST(Metrics, FuelSavingMatchesPublishedRows) {
    EXPECT_NEAR(fuel_saving(5.779, 4.419), 23.53, 0.005);
    EXPECT_NEAR(fuel_saving(4.324, 4.155), 3.91, 0.005);
}

TEST(Metrics, FuelSavingIsSigned) {
    EXPECT_LT(fuel_saving(4.0, 5.0), 0.0);
    EXPECT_DOUBLE_EQ(fuel_saving(4.0, 4.0), 0.0);
}

TEST(Metrics, ZeroDenominatorsThrow) {
    EXPECT_THROW(soc_error(0.0, 0.2), Error);
    EXPECT_THROW(fuel_saving(0.0, 1.0), Error);
    try {
        soc_error(0.0, 0.2);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ZeroInitialSoc);
    }
    try {
        fuel_saving(0.0, 1.0);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ZeroBaseline);
    }
}

TEST(ControllerKindNames, RoundTrip) {
    for (auto k : {ControllerKind::RuleBased, ControllerKind::Ecms, ControllerKind::SingleAgent,
                   ControllerKind::MultiAgent})
        EXPECT_EQ(controller_kind_from_string(to_string(k)), k);
    EXPECT_THROW(controller_kind_from_string("fuzzy"), Error);
}

TEST(ExperimentConfigJson, RoundTripPreservesHash) {
    auto c = toy_config("out");
    c.weights.power_weight = 5e-4;
    c.observation.soc_scale = 0.05;
    c.soc_policy = SocBoundPolicy::Clamp;
    c.agent.cadence = UpdateCadence::PerEpisode;
    const auto back = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
    EXPECT_EQ(back.hash(), c.hash());
}

TEST(ExperimentConfigJson, HashChangesWithAnyField) {
    const auto a = toy_config("out");
    auto b = a;
    b.relevance_ratio = 0.6;
    auto c = a;
    c.seeds.push_back(9);
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
}

TEST(ExperimentConfigJson, RelativePathsResolveAgainstBase) {
    const auto c = ExperimentConfig::from_json({{"cycles_dir", "cycles"}, {"output_dir", "/abs/out"}}, "/cfg");
    EXPECT_EQ(c.cycles_dir, fs::path("/cfg/cycles"));
    EXPECT_EQ(c.output_dir, fs::path("/abs/out"));
}

TEST(ExperimentConfigJson, RejectsBadInput) {
    using nlohmann::json;
    EXPECT_THROW(ExperimentConfig::from_json(json::array()), Error);
    EXPECT_THROW(ExperimentConfig::from_json({{"episodes", "many"}}), Error);
    EXPECT_THROW(ExperimentConfig::from_json({{"controllers", {"fuzzy"}}}), Error);
    EXPECT_THROW(ExperimentConfig::from_json({{"soc_policy", "ignore"}}), Error);
    EXPECT_THROW(ExperimentConfig::from_json({{"learning_cycle", {{"phases", json::array()}}}}), Error);
}

TEST(ExperimentConfigValidate, CatchesInconsistencies) {
    auto c = toy_config("out");
    c.seeds.clear();
    EXPECT_THROW(c.validate(), Error);
    c = toy_config("out");
    c.baseline = ControllerKind::Ecms;
    c.controllers = {ControllerKind::RuleBased};
    EXPECT_THROW(c.validate(), Error);
    c = toy_config("out");
    c.controllers.push_back(ControllerKind::RuleBased);
    EXPECT_THROW(c.validate(), Error);
    c = toy_config("out");
    c.rule_soc_low = 0.4;
    EXPECT_THROW(c.validate(), Error);
    c = toy_config("out");
    c.relevance_ratio = 1.5;
    EXPECT_THROW(c.validate(), Error);
    c = toy_config("out");
    c.cycles_dir = "/nonexistent/cycles";
    EXPECT_THROW(c.validate(), Error);
}

TEST(LoadExperimentConfig, MissingAndMalformedFiles) {
    const auto dir = scratch("load");
    fs::create_directories(dir);
    try {
        load_experiment_config(dir / "none.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
    std::ofstream(dir / "bad.json") << "{ not json";
    try {
        load_experiment_config(dir / "bad.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    }
}

TEST(Prepare, LearningCycleConcatenatesPhasesWithRamps) {
    auto c = toy_config("out");
    c.eval_cycles = {"learning", "udds"};
    const auto s = prepare(c);
    ASSERT_EQ(s.eval_cycles.size(), 2u);
    EXPECT_EQ(s.eval_cycles[0].first, "learning");
    EXPECT_EQ(s.eval_cycles[0].second.size(), 4u * 12u + 3u * c.ramp_seconds);
    EXPECT_EQ(s.eval_cycles[1].first, "udds");
    EXPECT_EQ(s.coordinator(ControllerKind::SingleAgent).mode, AgentMode::Single);
    EXPECT_EQ(s.coordinator(ControllerKind::MultiAgent).mode, AgentMode::Multi);
    EXPECT_THROW(s.coordinator(ControllerKind::Ecms), Error);
}

TEST(Prepare, DefaultLearningCycleLength) {
    ExperimentConfig c;
    c.cycles_dir = test::data_dir() / "cycles";
    const auto s = prepare(c);
    const auto n = s.eval_cycles[0].second.size();
    EXPECT_GE(n, 200u);
    EXPECT_LE(n, 400u);
}

TEST(WriteComparison, GoldenLayout) {
    std::vector<ComparisonRow> rows(2);
    rows[0] = {"learning", 0.25, "rule_based", 0.292, 16.8, 5.779, std::nullopt};
    rows[1] = {"learning", 0.25, "multi_agent", 0.241, 3.6, 4.419, 23.534};
    std::ostringstream out;
    write_comparison(out, rows);
    EXPECT_EQ(out.str(),
              "cycle\tinitial_soc\tmethod\tend_soc\tsoc_error_pct\tfuel_l_per_100km\tsaving_pct\n"
              "learning\t0.25\trule_based\t0.2920\t16.80\t5.779\t-\n"
              "learning\t0.25\tmulti_agent\t0.2410\t3.60\t4.419\t23.53\n");
}

TEST(RunExperiment, ToyRunProducesEveryArtifact) {
    const auto out = scratch("toy");
    const auto c = toy_config(out);
    const auto r = run_experiment(c);
    EXPECT_EQ(r.rows.size(), 4u * 2u);
    EXPECT_EQ(r.histories.size(), 4u);
    for (const auto& row : r.rows) {
        EXPECT_TRUE(row.fuel.has_value());
        if (row.method == "rule_based") EXPECT_DOUBLE_EQ(*row.saving, 0.0);
        EXPECT_NEAR(row.soc_error, soc_error(row.soc_initial, row.soc_end), 1e-12);
    }
    EXPECT_TRUE(fs::exists(out / "comparison.tsv"));
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_TRUE(fs::exists(out / "learning" / "multi_agent_seed3.tsv"));
    EXPECT_TRUE(fs::exists(out / "traces" / "learning_soc0.25_single_agent_seed4.tsv"));
    EXPECT_TRUE(fs::exists(out / "traces" / "learning_soc0.30_ecms.tsv"));
    EXPECT_TRUE(fs::is_directory(out / "checkpoints" / "multi_agent_seed4"));
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(manifest.at("config_hash").get<std::string>().size(), 16u);
    EXPECT_EQ(manifest.at("version"), std::string(kVersion));
}

TEST(RunExperiment, RepeatedRunsAreByteIdentical) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    auto ca = toy_config(a), cb = toy_config(b);
    ca.controllers = cb.controllers = {ControllerKind::RuleBased, ControllerKind::MultiAgent};
    run_experiment(ca);
    run_experiment(cb);
    for (const auto* f : {"comparison.tsv", "learning/multi_agent_seed3.tsv", "learning/multi_agent_seed4.tsv",
                          "traces/learning_soc0.25_multi_agent_seed3.tsv"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(RunExperiment, EvaluationFromCheckpointsMatchesTraining) {
    const auto out = scratch("ckpt");
    auto c = toy_config(out);
    c.controllers = {ControllerKind::RuleBased, ControllerKind::SingleAgent};
    run_experiment(c);
    const auto trained = slurp(out / "comparison.tsv");
    const auto r = run_experiment(c, RunOptions{.train = false});
    EXPECT_TRUE(r.histories.empty());
    EXPECT_EQ(slurp(out / "comparison.tsv"), trained);
}

TEST(RunExperiment, MissingCheckpointsThrow) {
    auto c = toy_config(scratch("nockpt"));
    EXPECT_THROW(run_experiment(c, RunOptions{.train = false}), Error);
}

}  // namespace
}  // namespace hev
