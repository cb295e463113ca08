#pragma once

#include "east/backend.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace east {

// Empirical action distribution over the parseable completions of one prompt.
struct action_distribution {
    std::vector<size_t> counts;   // per arm
    std::vector<double> probs;    // counts / n_valid; empty when all_invalid()
    double entropy_nats = 0.0;    // 0 ln 0 := 0
    size_t n_valid = 0;
    size_t n_total = 0;

    bool all_invalid() const { return n_valid == 0; }
};

// -sum p ln p over arms with nonzero count
double entropy_from_counts(std::span<const size_t> counts);

action_distribution distribution_from_counts(std::vector<size_t> counts, size_t n_total);

double valid_fraction(const action_distribution & dist);

struct policy_sample {
    action_distribution dist;
    std::vector<std::string> completions;
    std::vector<std::optional<size_t>> parsed;   // per completion
};

// Draws m completions (seeds derived per completion from params.seed),
// parses them and tallies the valid ones.
policy_sample sample_policy(const backend & model, const transcript & t, const sampling_params & params,
                            const std::optional<steering_spec> & steering, size_t m, size_t n_arms = 2);

action_distribution estimate_distribution(const backend & model, const transcript & t, const sampling_params & params,
                                          const std::optional<steering_spec> & steering, size_t m, size_t n_arms = 2);

// Draws an arm from the multiset of valid actions (probability counts / n_valid).
// Throws error(all_invalid) when nothing parsed.
size_t select_action(const action_distribution & dist, uint64_t seed);

struct selection {
    size_t arm = 0;
    size_t completion_index = 0;  // which completion carries the executed action
};

// Same draw as select_action(); also names the completion to append.
selection select_completion(const policy_sample & sample, uint64_t seed);

} // namespace east
