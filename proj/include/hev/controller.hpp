#pragma once

#include <vector>

#include "hev/environment.hpp"

namespace hev {

// Anything that picks an action from the current environment state.
class Controller {
public:
    virtual ~Controller() = default;
    virtual void reset() {}
    virtual Action decide(const EmsEnvironment& env) = 0;
};

struct RolloutResult {
    EpisodeMetrics metrics;
    std::vector<StepOutcome> outcomes;
    std::vector<TraceRow> trace;
};

// Runs one full episode from reset to done.
RolloutResult rollout(EmsEnvironment& env, Controller& controller, const DriveCycle& cycle, double soc_initial,
                      bool keep_outcomes = false);

}  // namespace hev
