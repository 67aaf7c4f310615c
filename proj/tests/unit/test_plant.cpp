#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "hev/error.hpp"
#include "hev/plant.hpp"
#include "plant_oracle.hpp"
#include "test_support.hpp"

using namespace hev;
using hev::test::rel_err;

using hev::test::oracle_lookup;

TEST(Demand, RollingResistanceOnlyAtStandstill) {
    PlantParameters p;
    const auto d = compute_demand(0.0, 0.0, p);
    EXPECT_DOUBLE_EQ(d.force, p.mass * p.gravity * p.rolling_coeff);
    EXPECT_DOUBLE_EQ(d.power, 0.0);
    EXPECT_DOUBLE_EQ(d.torque, p.mass * p.gravity * p.rolling_coeff * p.wheel_radius);
}

TEST(Demand, CruiseWithAccelerationMatchesHandValues) {
    PlantParameters p;
    const auto d = compute_demand(20.0, 0.5, p);
    // 1800*9.81*0.012 + 0.5*1.205*2.3*0.30*400 + 1800*0.5
    EXPECT_NEAR(d.force, 211.896 + 166.29 + 900.0, 1e-9);
    EXPECT_NEAR(d.force, 1278.19, 0.01);
    EXPECT_NEAR(d.power, 25563.7, 0.1);
}

TEST(Demand, InertialTermIsLinear) {
    PlantParameters p;
    EXPECT_NEAR(compute_demand(10.0, 1.0, p).force - compute_demand(10.0, 0.0, p).force, p.mass, 1e-9);
}

TEST(MapLookup, NodeCentreAndClamp) {
    EfficiencyMap m;
    m.kind = EfficiencyMap::Kind::FuelRate;
    m.speed_grid = {1000, 2000, 3000};
    m.torque_grid = {0, 50};
    m.values = {1, 2, 4, 3, 5, 9};
    m.validate();
    EXPECT_DOUBLE_EQ(map_lookup(m, 2000, 50), 5.0);
    EXPECT_DOUBLE_EQ(map_lookup(m, 1500, 25), (1 + 2 + 3 + 5) / 4.0);
    EXPECT_DOUBLE_EQ(map_lookup(m, 500, 25), map_lookup(m, 1000, 25));
    EXPECT_DOUBLE_EQ(map_lookup(m, 9000, 80), 9.0);
    EXPECT_DOUBLE_EQ(map_lookup(m, 2500, -10), 3.0);
}

TEST(MapLookup, RejectsNonMonotoneGrid) {
    EXPECT_THROW(parse_map("0 1000 900\n0 1 1\n", EfficiencyMap::Kind::FuelRate), Error);
    EXPECT_THROW(parse_map("0 1000 2000\n0 1.2 0.9\n", EfficiencyMap::Kind::Efficiency), Error);
    EXPECT_THROW(parse_map("0 1000 2000\n0 1\n", EfficiencyMap::Kind::FuelRate), Error);
}

TEST(MapFormat, RoundTripIsExact) {
    const auto m = synthetic_motor_map(280.0, 7000.0, true);
    const auto back = parse_map(format_map(m), EfficiencyMap::Kind::Efficiency);
    EXPECT_EQ(back.speed_grid, m.speed_grid);
    EXPECT_EQ(back.torque_grid, m.torque_grid);
    EXPECT_EQ(back.values, m.values);
}

TEST(MapFormat, ShippedMapsMatchGenerator) {
    const PlantParameters p;
    const auto shipped = load_maps(hev::test::data_dir() / "maps/engine_fuel.txt",
                                   hev::test::data_dir() / "maps/mg1_efficiency.txt",
                                   hev::test::data_dir() / "maps/mg2_efficiency.txt");
    const auto gen = synthetic_maps(p);
    EXPECT_EQ(shipped.engine_fuel.values, gen.engine_fuel.values);
    EXPECT_EQ(shipped.mg1_efficiency.values, gen.mg1_efficiency.values);
    EXPECT_EQ(shipped.mg2_efficiency.values, gen.mg2_efficiency.values);
}

TEST(SyntheticMaps, EnginePeakEfficiencyNear36Percent) {
    const PlantParameters p;
    const auto m = synthetic_engine_map(p);
    double best = 0.0;
    for (std::size_t i = 0; i < m.torque_grid.size(); ++i)
        for (std::size_t j = 0; j < m.speed_grid.size(); ++j) {
            const double pw = m.torque_grid[i] * m.speed_grid[j] * kRpmToRadPerSec;
            if (m.at(i, j) > 0) best = std::max(best, pw / (m.at(i, j) * p.fuel_heat_value * 1000.0));
        }
    EXPECT_GT(best, 0.33);
    EXPECT_LT(best, 0.38);
    const auto mot = synthetic_motor_map(280.0, 7000.0, true);
    EXPECT_DOUBLE_EQ(*std::max_element(mot.values.begin(), mot.values.end()), 0.95);
}

TEST(Battery, OpenCircuit) {
    PlantParameters p;
    const auto b = battery_step(0.0, 0.5, p);
    EXPECT_EQ(b.current, 0.0);
    EXPECT_EQ(b.soc_next, 0.5);
    EXPECT_EQ(b.loss, 0.0);
}

TEST(Battery, ClosedFormCurrent) {
    PlantParameters p;
    const double i = battery_current(35e3, p);
    const double expected = (350.0 - std::sqrt(350.0 * 350.0 - 4 * 0.15 * 35e3)) / (2 * 0.15);
    EXPECT_NEAR(i, expected, 1e-12);
    EXPECT_NEAR(i, 104.698, 1e-3);
    EXPECT_LT(rel_err(p.batt_ocv * i - p.batt_resistance * i * i, 35e3), 1e-9);
}

TEST(Battery, OneAmpereHourPerCapacityDrainsFullCharge) {
    PlantParameters p;
    p.soc_min = 0.0;
    double soc = 1.0;
    const double per_step = 54.3 / (p.batt_capacity * 3600.0);
    for (int k = 0; k < 3600; ++k) soc -= per_step;
    EXPECT_NEAR(1.0 - soc, 1.0, 1e-9);
}

TEST(Battery, PowerAboveCircuitMaximumIsInfeasible) {
    PlantParameters p;
    const double pmax = p.batt_ocv * p.batt_ocv / (4 * p.batt_resistance);
    EXPECT_NO_THROW(battery_current(pmax, p));
    try {
        battery_current(pmax * 1.001, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::PowerInfeasible);
    }
}

TEST(Battery, SocBoundsSignal) {
    PlantParameters p;
    try {
        battery_step(50e3, 0.1000001, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SocOutOfBounds);
    }
}

TEST(Battery, CurrentSignDrivesSocMonotonically) {
    PlantParameters p;
    for (double pw : {-30e3, -1e3, 1e3, 30e3}) {
        const auto b = battery_step(pw, 0.5, p);
        if (pw > 0) EXPECT_LT(b.soc_next, 0.5);
        else EXPECT_GT(b.soc_next, 0.5);
    }
}

TEST(Actuation, DemandMetByMg2StaysSeries) {
    PlantParameters p;
    const auto d = compute_demand(10.0, 0.2, p);
    const auto c = resolve_actuation(0.4, 1.0, d.torque, 10.0, p);
    EXPECT_EQ(c.t_gb, 0.0);
    EXPECT_EQ(c.mode, Mode::Series);
    EXPECT_DOUBLE_EQ(c.u_eng, 0.4 * p.t_mot1_max / p.t_eng_max);
    EXPECT_DOUBLE_EQ(c.t_mot2, d.torque / p.final_ratio_mg2);
}

TEST(Actuation, ShortfallClosesClutch) {
    PlantParameters p;
    const double v = 15.0;
    const auto d = compute_demand(v, 1.0, p);
    const double needed = d.torque / p.final_ratio_mg2;
    const double u2 = (needed - 40.0) / p.t_mot2_max;
    const auto c = resolve_actuation(0.2, u2, d.torque, v, p);
    EXPECT_EQ(c.mode, Mode::Parallel);
    EXPECT_NEAR(c.t_gb, 40.0 * p.final_ratio_mg2 / p.gear_ratio_mg1, 1e-9);
    EXPECT_NEAR(c.t_eng, c.t_gb + 0.2 * p.t_mot1_max, 1e-9);
    EXPECT_NEAR(c.u_eng, (0.2 * p.t_mot1_max + c.t_gb) / p.t_eng_max, 1e-12);
    // Wheel torque balance.
    EXPECT_NEAR(c.t_mot2 * p.final_ratio_mg2 + c.t_gb * p.gear_ratio_mg1, d.torque, 1e-9);
}

TEST(Actuation, ShortfallThroughMg2Ratio) {
    PlantParameters p;
    p.shortfall_path = ShortfallPath::ThroughMg2Ratio;
    const double v = 15.0;
    const auto d = compute_demand(v, 1.0, p);
    const double u2 = (d.torque / p.final_ratio_mg2 - 40.0) / p.t_mot2_max;
    EXPECT_NEAR(resolve_actuation(0.0, u2, d.torque, v, p).t_gb, 40.0, 1e-9);
}

TEST(Actuation, RegenerativeBrakingChargesBattery) {
    PlantParameters p;
    const double v = 12.0;
    const auto d = compute_demand(v, -1.0, p);
    ASSERT_LT(d.torque, 0.0);
    const auto c = resolve_actuation(0.3, 0.5, d.torque, v, p);
    EXPECT_EQ(c.mode, Mode::Series);
    EXPECT_DOUBLE_EQ(c.u_eng, 0.3 * p.t_mot1_max / p.t_eng_max);
    EXPECT_DOUBLE_EQ(c.t_mot2, d.torque / p.final_ratio_mg2);
    EXPECT_EQ(c.t_brake, 0.0);
    const auto maps = synthetic_maps(p);
    PowertrainState s;
    s.soc = 0.5;
    const auto n = energy_flow_step(s, resolve_actuation(0.0, 0.0, d.torque, v, p), v, p, maps);
    EXPECT_LT(n.p_batt, 0.0);
    EXPECT_GT(n.soc, 0.5);
}

TEST(Actuation, HardBrakingSpillsToFrictionBrakes) {
    PlantParameters p;
    const double v = 25.0;
    const auto d = compute_demand(v, -4.0, p);
    const auto c = resolve_actuation(0.0, 0.0, d.torque, v, p);
    EXPECT_LT(c.t_brake, 0.0);
    EXPECT_NEAR(c.t_mot2 * p.final_ratio_mg2 + c.t_brake, d.torque, 1e-9);
    EXPECT_LE(-c.t_mot2 * p.mg2_speed(v) * kRpmToRadPerSec, p.p_batt_charge_max * (1 + 1e-12));
}

TEST(Actuation, ModeFollowsGearboxTorque) {
    PlantParameters p;
    for (double v : {0.0, 5.0, 12.0, 25.0, 35.0})
        for (double a : {-2.0, 0.0, 0.8, 2.0})
            for (double u2 : {-1.0, -0.2, 0.0, 0.3, 1.0}) {
                const auto d = compute_demand(v, a, p);
                const auto c = resolve_actuation(0.5, u2, d.torque, v, p);
                EXPECT_EQ(c.t_gb > 0.0, c.mode == Mode::Parallel);
                EXPECT_GE(c.u_eng, 0.0);
                EXPECT_LE(c.u_eng, 1.0);
                EXPECT_LE(c.t_eng, p.t_eng_max + 1e-9);
            }
}

TEST(Actuation, OutOfRangeActionIsClampedAndFlagged) {
    PlantParameters p;
    const auto c = resolve_actuation(1.7, -3.0, 100.0, 10.0, p);
    EXPECT_TRUE(c.action_clamped);
    EXPECT_EQ(c.u_mot1, 1.0);
    EXPECT_EQ(c.u_mot2, -1.0);
}

TEST(EnergyFlow, NullActuationAtStandstillIdles) {
    PlantParameters p;
    const auto maps = synthetic_maps(p);
    PowertrainState s;
    s.soc = 0.4;
    const auto c = resolve_actuation(0.0, 0.0, 0.0, 0.0, p);
    const auto n = energy_flow_step(s, c, 0.0, p, maps);
    EXPECT_EQ(n.p_mot1, 0.0);
    EXPECT_EQ(n.p_mot2, 0.0);
    EXPECT_EQ(n.p_batt, 0.0);
    EXPECT_EQ(n.p_eng, 0.0);
    EXPECT_EQ(n.soc, 0.4);
    EXPECT_DOUBLE_EQ(n.fuel_rate, map_lookup(maps.engine_fuel, p.n_idle, 0.0));
    EXPECT_GT(n.fuel_rate, 0.0);
}

TEST(EnergyFlow, SeriesModeIdentities) {
    PlantParameters p;
    const auto maps = synthetic_maps(p);
    for (double v : {3.0, 8.0, 16.0})
        for (double a : {0.0, 0.5}) {
            const auto d = compute_demand(v, a, p);
            const auto c = resolve_actuation(0.6, 1.0, d.torque, v, p);
            ASSERT_EQ(c.mode, Mode::Series);
            PowertrainState s;
            s.soc = 0.5;
            const auto n = energy_flow_step(s, c, v, p, maps);
            EXPECT_EQ(n.n_eng, n.n_mot1);
            EXPECT_LT(rel_err(n.t_mot2 * n.n_mot2 * kRpmToRadPerSec, d.power), 1e-9);
        }
}

TEST(EnergyFlow, LossBookkeeping) {
    PlantParameters p;
    const auto maps = synthetic_maps(p);
    for (double u1 : {0.0, 0.5, 1.0})
        for (double u2 : {0.0, 0.4, 1.0}) {
            const double v = 18.0;
            const auto d = compute_demand(v, 0.7, p);
            PowertrainState s;
            s.soc = 0.5;
            const auto n = energy_flow_step(s, resolve_actuation(u1, u2, d.torque, v, p), v, p, maps);
            const double mech = n.t_eng * n.n_eng * kRpmToRadPerSec;
            EXPECT_LT(rel_err(n.loss_eng, n.fuel_rate * p.fuel_heat_value * 1000.0 - mech), 1e-9);
            EXPECT_LT(rel_err(n.loss_batt, p.batt_resistance * n.i_batt * n.i_batt) , 1e-9);
            EXPECT_EQ(n.p_loss, n.loss_eng + n.loss_batt);
            EXPECT_GE(n.loss_eng, 0.0);
        }
}

TEST(EnergyFlow, MatchesStraightLineOracle) {
    PlantParameters p;
    const auto maps = synthetic_maps(p);
    const double v = 15.0, a = 0.3, u1 = 0.5, u2 = 0.1;
    PowertrainState s;
    s.soc = 0.45;
    s.fuel_used = 12.0;
    const auto n = energy_flow_step(s, resolve_actuation(u1, u2, compute_demand(v, a, p).torque, v, p), v, p, maps);

    // Chain the equations by hand.
    const double pi = std::numbers::pi;
    const double f = 1800 * 9.81 * 0.012 + 0.5 * 1.205 * 2.3 * 0.30 * v * v + 1800 * a;
    const double t_dem = f * 0.32;
    const double t2 = std::min(u2 * 280.0, t_dem / 8.0);
    const double t_gb = (t_dem / 8.0 - t2) * 8.0 / 3.0;
    const double t1 = u1 * 120.0;
    const double t_eng = t1 + t_gb;
    ASSERT_GT(t_gb, 0.0);
    const double n_eng = v / 0.32 * 3.0 * 30.0 / pi;
    const double n2 = v / 0.32 * 8.0 * 30.0 / pi;
    const double p1 = t1 * n_eng * pi / 30.0 * oracle_lookup(maps.mg1_efficiency, n_eng, t1);
    const double p2 = t2 * n2 * pi / 30.0 / oracle_lookup(maps.mg2_efficiency, n2, t2);
    const double pb = p2 - p1;
    const double i = (350.0 - std::sqrt(350.0 * 350.0 - 4 * 0.15 * pb)) / 0.3;
    const double mf = oracle_lookup(maps.engine_fuel, n_eng, t_eng);
    const double loss_eng = mf * 43.5e3 - t_eng * n_eng * pi / 30.0;

    EXPECT_EQ(n.mode, Mode::Parallel);
    EXPECT_LT(rel_err(n.n_eng, n_eng), 1e-12);
    EXPECT_LT(rel_err(n.p_mot1, p1), 1e-12);
    EXPECT_LT(rel_err(n.p_mot2, p2), 1e-12);
    EXPECT_LT(rel_err(n.i_batt, i), 1e-9);
    EXPECT_LT(rel_err(n.soc, 0.45 - i / (54.3 * 3600.0)), 1e-12);
    EXPECT_LT(rel_err(n.fuel_rate, mf), 1e-12);
    EXPECT_LT(rel_err(n.fuel_used, 12.0 + mf), 1e-12);
    EXPECT_LT(rel_err(n.loss_eng, loss_eng), 1e-9);
    EXPECT_LT(rel_err(n.p_loss, loss_eng + 0.15 * i * i), 1e-9);
}

TEST(EnergyFlow, Deterministic) {
    PlantParameters p;
    const auto maps = synthetic_maps(p);
    PowertrainState s;
    s.soc = 0.3;
    const auto c = resolve_actuation(0.3, 0.2, 400.0, 14.0, p);
    const auto a = energy_flow_step(s, c, 14.0, p, maps);
    const auto b = energy_flow_step(s, c, 14.0, p, maps);
    for (auto f : {&PowertrainState::soc, &PowertrainState::fuel_used, &PowertrainState::p_batt,
                   &PowertrainState::p_loss, &PowertrainState::fuel_rate, &PowertrainState::i_batt})
        EXPECT_EQ(std::memcmp(&(a.*f), &(b.*f), sizeof(double)), 0);
}

TEST(PlantParameters, JsonRoundTripAndValidation) {
    PlantParameters p;
    p.mass = 1500;
    p.shortfall_path = ShortfallPath::ThroughMg2Ratio;
    const auto back = plant_parameters_from_json(to_json(p));
    EXPECT_EQ(back.mass, 1500);
    EXPECT_EQ(back.shortfall_path, ShortfallPath::ThroughMg2Ratio);
    auto j = to_json(p);
    j["soc_min"] = 0.95;
    EXPECT_THROW(plant_parameters_from_json(j), Error);
    j = to_json(p);
    j["batt_resistance_ohm"] = -1.0;
    EXPECT_THROW(plant_parameters_from_json(j), Error);
}

TEST(PlantParameters, ShippedDefaultsMatchCompiledDefaults) {
    const auto loaded = load_plant_parameters(hev::test::data_dir() / "params/default_plant.json");
    EXPECT_EQ(to_json(loaded), to_json(PlantParameters{}));
}
