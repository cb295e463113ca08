#pragma once

#include "east/rng.hpp"
#include "east/scenario.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace east {

struct bandit_config {
    std::vector<double> means;
    std::vector<double> stddevs;
    int horizon = 50;
    uint64_t seed = 0;

    // throws error(invalid_config)
    void validate() const;
    size_t n_arms() const { return means.size(); }
};

struct reward {
    double value = 0.0;
    size_t arm = 0;
    int timestep = 0;
};

// Gaussian multi-armed bandit. Not thread-safe; use one instance per run.
class bandit_env {
public:
    explicit bandit_env(bandit_config config);

    reward pull(size_t arm);

    const bandit_config & config() const { return config_; }
    int timestep() const { return timestep_; }

private:
    bandit_config config_;
    rng rng_;
    int timestep_ = 0;
};

// "Result: You received 101.28 points." (or "dollars." for slot machines)
std::string feedback_text(const reward & r, scenario_kind scenario);

// Two-decimal fixed formatting, rounding the shortest round-trip decimal
// form of the value half-to-even.
std::string format_two_decimals(double value);

} // namespace east
