#include "hev/sensitivity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "hev/error.hpp"

namespace hev {

Eigenpair leading_eigenpair(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    for (const auto& row : a)
        if (row.size() != n) throw Error(ErrorKind::InvalidArgument, "eigen-decomposition needs a square matrix");
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "empty matrix");
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (a[i][i] > a[best][best]) best = i;
    Eigenpair e;
    e.value = a[best][best];
    for (std::size_t k = 0; k < n; ++k) e.vector.push_back(v[k][best]);
    return e;
}

std::vector<double> pca_project(const std::vector<std::vector<double>>& x) {
    if (x.size() < 2) throw Error(ErrorKind::InvalidArgument, "PCA needs at least two settings");
    const std::size_t m = x.size(), d = x.front().size();
    for (const auto& row : x)
        if (row.size() != d) throw Error(ErrorKind::InvalidArgument, "settings have different lengths");

    std::vector<std::vector<double>> z(m);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& row : x) mean += row[j];
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (const auto& row : x) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(m);
        if (!(var > 0.0)) continue;
        const double sd = std::sqrt(var);
        for (std::size_t i = 0; i < m; ++i) z[i].push_back((x[i][j] - mean) / sd);
    }
    const std::size_t k = z.front().size();
    if (k == 0) throw Error(ErrorKind::DegenerateCovariance, "all settings are identical");

    std::vector<std::vector<double>> cov(k, std::vector<double>(k, 0.0));
    for (const auto& row : z)
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) cov[a][b] += row[a] * row[b] / static_cast<double>(m);
    auto pc = leading_eigenpair(cov);

    std::size_t lead = 0;
    for (std::size_t a = 1; a < k; ++a)
        if (std::abs(pc.vector[a]) > std::abs(pc.vector[lead]) + 1e-12) lead = a;
    if (pc.vector[lead] < 0.0)
        for (auto& c : pc.vector) c = -c;

    std::vector<double> scores(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t a = 0; a < k; ++a) scores[i] += z[i][a] * pc.vector[a];
    return scores;
}

double sensitivity_level(double y_best, double y_worst, const std::vector<double>& x_best,
                         const std::vector<double>& x_worst) {
    if (x_best.size() != x_worst.size()) throw Error(ErrorKind::InvalidArgument, "setting vectors differ in length");
    if (y_best == 0.0) throw Error(ErrorKind::InvalidArgument, "best indicator value is zero");
    double nb = 0.0, nd = 0.0;
    for (std::size_t i = 0; i < x_best.size(); ++i) {
        nb += x_best[i] * x_best[i];
        nd += (x_best[i] - x_worst[i]) * (x_best[i] - x_worst[i]);
    }
    if (nd == 0.0) throw Error(ErrorKind::IdenticalSettings, "best and worst settings coincide");
    return std::abs(y_best - y_worst) * std::sqrt(nb) / (y_best * std::sqrt(nd)) * 100.0;
}

std::size_t convergence_episode(const std::vector<double>& r, std::size_t window, double band) {
    if (r.empty()) return 0;
    window = std::max<std::size_t>(1, window);
    auto trailing = [&](std::size_t e) {
        const std::size_t lo = e + 1 >= window ? e + 1 - window : 0;
        double s = 0.0;
        for (std::size_t i = lo; i <= e; ++i) s += r[i];
        return s / static_cast<double>(e + 1 - lo);
    };
    const double final_mean = trailing(r.size() - 1);
    for (std::size_t e = std::min(window, r.size()) - 1; e < r.size(); ++e)
        if (std::abs(trailing(e) - final_mean) <= band * std::abs(final_mean)) return e + 1;
    return r.size();
}

std::string_view to_string(SweepDimension d) {
    switch (d) {
        case SweepDimension::CriticDepth: return "critic-depth";
        case SweepDimension::LearningRates: return "learning-rates";
        case SweepDimension::PolicyNoise: return "policy-noise";
    }
    return "unknown";
}

SweepDimension sweep_dimension_from_string(std::string_view name) {
    for (auto d : {SweepDimension::CriticDepth, SweepDimension::LearningRates, SweepDimension::PolicyNoise})
        if (to_string(d) == name) return d;
    throw Error(ErrorKind::Config, fmt::format("unknown sweep dimension '{}'", name));
}

std::vector<SweepGroup> default_sweep_groups(SweepDimension dimension, const AgentConfig& base) {
    std::vector<SweepGroup> groups;
    switch (dimension) {
        case SweepDimension::CriticDepth:
            for (std::size_t depth = 2; depth <= 7; ++depth) {
                SweepGroup g{fmt::format("1.{}", depth - 1), base, {static_cast<double>(depth)}};
                g.agent.critic_layers = depth;
                groups.push_back(g);
            }
            break;
        case SweepDimension::LearningRates: {
            const std::array<std::pair<double, double>, 5> rates{
                {{1e-4, 1e-4}, {1e-3, 1e-3}, {1e-4, 1e-3}, {1e-3, 1e-4}, {1e-5, 1e-5}}};
            for (std::size_t i = 0; i < rates.size(); ++i) {
                SweepGroup g{fmt::format("2.{}", i + 1), base, {rates[i].first, rates[i].second}};
                g.agent.actor_lr = rates[i].first;
                g.agent.critic_lr = rates[i].second;
                groups.push_back(g);
            }
            break;
        }
        case SweepDimension::PolicyNoise: {
            const std::array<std::pair<double, double>, 3> noise{{{1e-4, 0.2}, {1e-4, 0.5}, {1e-3, 0.2}}};
            for (std::size_t i = 0; i < noise.size(); ++i) {
                SweepGroup g{fmt::format("3.{}", i + 1), base, {noise[i].first, noise[i].second}};
                g.agent.ou_decay = noise[i].first;
                g.agent.ou_sigma = noise[i].second;
                groups.push_back(g);
            }
            break;
        }
    }
    return groups;
}

std::string_view to_string(Indicator i) {
    switch (i) {
        case Indicator::ComputationTime: return "CT";
        case Indicator::ConvergenceEpisodes: return "CE";
        case Indicator::FuelEconomy: return "FE";
    }
    return "?";
}

double GroupResult::indicator(Indicator which) const {
    switch (which) {
        case Indicator::ComputationTime: return computation_time;
        case Indicator::ConvergenceEpisodes: return convergence_episodes;
        case Indicator::FuelEconomy: return fuel_economy;
    }
    return 0.0;
}

void SweepLog::write(std::ostream& out) const {
    fmt::print(out, "# dimension {}\n", to_string(dimension));
    out << "group\tconverged\tcomputation_time_s\tconvergence_episodes\tfuel_l_per_100km\tsettings\n";
    for (const auto& g : groups) {
        fmt::print(out, "{}\t{}\t{:a}\t{:a}\t{:a}\t", g.label, g.converged ? 1 : 0, g.computation_time,
                   g.convergence_episodes, g.fuel_economy);
        for (std::size_t i = 0; i < g.settings.size(); ++i) fmt::print(out, "{}{:a}", i ? "," : "", g.settings[i]);
        out << '\n';
    }
}

SweepLog SweepLog::read(std::istream& in) {
    SweepLog log;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# dimension ", 0) != 0)
        throw Error(ErrorKind::ParseError, "sweep log lacks its dimension line");
    log.dimension = sweep_dimension_from_string(line.substr(12));
    std::getline(in, line);
    auto number = [](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty()) throw Error(ErrorKind::ParseError, "bad number '" + s + "' in sweep log");
        return v;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
        if (cols.size() == 5) cols.emplace_back();
        if (cols.size() != 6) throw Error(ErrorKind::ParseError, "sweep log row needs 6 columns");
        GroupResult g;
        g.label = cols[0];
        g.converged = cols[1] == "1";
        g.computation_time = number(cols[2]);
        g.convergence_episodes = number(cols[3]);
        g.fuel_economy = number(cols[4]);
        std::stringstream st(cols[5]);
        for (std::string c; std::getline(st, c, ',');) g.settings.push_back(number(c));
        log.groups.push_back(std::move(g));
    }
    return log;
}

SweepLog run_sweep(SweepDimension dimension, const std::vector<SweepGroup>& groups, const SweepOptions& options) {
    if (options.seeds.empty()) throw Error(ErrorKind::Config, "sweep needs at least one seed");
    SweepLog log;
    log.dimension = dimension;
    for (const auto& group : groups) {
        GroupResult result;
        result.label = group.label;
        result.settings = group.settings;
        const double n = static_cast<double>(options.seeds.size());
        for (const auto seed : options.seeds) {
            auto config = options.coordinator;
            config.agent1 = group.agent;
            config.agent2 = group.agent;
            try {
                Coordinator coordinator(config, seed);
                const auto start = std::chrono::steady_clock::now();
                const auto history = coordinator.train(options.phases, options.environment, options.episodes);
                const auto stop = std::chrono::steady_clock::now();
                std::vector<double> reward;
                for (const auto& e : history.episodes)
                    reward.push_back(config.mode == AgentMode::Multi ? 0.5 * (e.reward_agent_1 + e.reward_agent_2)
                                                                     : e.reward_agent_1);
                const auto eval = coordinator.evaluate(options.eval_cycle, options.environment, config.soc_initial);
                if (!eval.metrics.fuel_l_per_100km) throw Error(ErrorKind::InvalidArgument, "evaluation cycle covers no distance");
                result.computation_time += std::chrono::duration<double>(stop - start).count() / n;
                result.convergence_episodes += static_cast<double>(convergence_episode(reward)) / n;
                result.fuel_economy += *eval.metrics.fuel_l_per_100km / n;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::NonFiniteLoss && e.kind() != ErrorKind::PowerInfeasible) throw;
                result.converged = false;
            }
        }
        log.groups.push_back(std::move(result));
    }
    return log;
}

double DimensionSummary::max_level() const {
    double m = 0.0;
    for (const auto& i : indicators)
        if (i.level) m = std::max(m, *i.level);
    return m;
}

DimensionSummary summarize(const SweepLog& log) {
    DimensionSummary summary;
    summary.dimension = log.dimension;
    std::vector<const GroupResult*> ok;
    for (const auto& g : log.groups)
        if (g.converged) ok.push_back(&g);

    std::vector<double> scores;
    bool distinct = false;
    for (const auto* g : ok)
        if (g->settings != ok.front()->settings) distinct = true;
    if (ok.size() >= 2 && distinct) scores = pca_project([&] {
        std::vector<std::vector<double>> x;
        for (const auto* g : ok) x.push_back(g->settings);
        return x;
    }());

    for (std::size_t k = 0; k < kIndicators.size(); ++k) {
        auto& s = summary.indicators[k];
        s.indicator = kIndicators[k];
        if (ok.empty()) continue;
        std::size_t best = 0, worst = 0;
        for (std::size_t i = 1; i < ok.size(); ++i) {
            if (ok[i]->indicator(s.indicator) < ok[best]->indicator(s.indicator)) best = i;
            if (ok[i]->indicator(s.indicator) > ok[worst]->indicator(s.indicator)) worst = i;
        }
        s.best_label = ok[best]->label;
        s.worst_label = ok[worst]->label;
        s.best = ok[best]->indicator(s.indicator);
        s.worst = ok[worst]->indicator(s.indicator);
        if (best == worst) continue;
        if (ok[best]->settings == ok[worst]->settings)
            throw Error(ErrorKind::IdenticalSettings,
                        fmt::format("groups {} and {} share their settings", s.best_label, s.worst_label));
        double scale = 0.0;
        for (double v : scores) scale = std::max(scale, std::abs(v));
        if (std::abs(scores[best] - scores[worst]) > 1e-12 * scale) s.level = sensitivity_level(s.best, s.worst, {scores[best]}, {scores[worst]});
    }
    return summary;
}

void write_importance_report(std::ostream& out, std::vector<DimensionSummary> summaries) {
    std::stable_sort(summaries.begin(), summaries.end(),
                     [](const DimensionSummary& a, const DimensionSummary& b) { return a.max_level() > b.max_level(); });
    out << "rank\tdimension\trow\tCT\tCE\tFE\n";
    std::size_t rank = 0;
    for (const auto& s : summaries) {
        ++rank;
        auto row = [&](std::string_view name, auto field) {
            fmt::print(out, "{}\t{}\t{}", rank, to_string(s.dimension), name);
            for (const auto& i : s.indicators) {
                const auto cell = field(i);
                out << '\t' << cell;
            }
            out << '\n';
        };
        row("worst", [](const IndicatorSummary& i) { return i.worst_label.empty() ? std::string("-") : fmt::format("{:.6g} ({})", i.worst, i.worst_label); });
        row("best", [](const IndicatorSummary& i) { return i.best_label.empty() ? std::string("-") : fmt::format("{:.6g} ({})", i.best, i.best_label); });
        row("level_pct", [](const IndicatorSummary& i) { return i.level ? fmt::format("{:.6g}", *i.level) : std::string("-"); });
    }
}

}  // namespace hev
