#include "hev/controller.hpp"

namespace hev {

RolloutResult rollout(EmsEnvironment& env, Controller& controller, const DriveCycle& cycle, double soc_initial,
                      bool keep_outcomes) {
    RolloutResult result;
    controller.reset();
    env.reset(cycle, soc_initial);
    while (!env.done()) {
        auto out = env.step(controller.decide(env));
        if (keep_outcomes) result.outcomes.push_back(std::move(out));
    }
    result.metrics = env.finalize();
    result.trace = env.trace();
    return result;
}

}  // namespace hev
