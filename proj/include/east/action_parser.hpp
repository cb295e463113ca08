#pragma once

#include "east/scenario.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace east {

struct parsed_action {
    size_t arm = 0;          // 0-based
    size_t span_begin = 0;   // byte offsets of the entity mention, e.g. "Button 2"
    size_t span_end = 0;

    bool operator==(const parsed_action &) const = default;
};

// Extracts the executed arm from a completion.
//
// The decision is read from the last line whose first non-blank characters
// are "Action:" (any case); inside it the last "<entity> <n>" mention wins.
// Without an Action line the whole completion is searched the same way.
// Returns nullopt (an invalid completion) when no mention is found or n is
// outside [1, n_arms]. Throws error(malformed_utf8) on invalid UTF-8.
std::optional<parsed_action> parse_action(std::string_view completion, scenario_kind scenario, size_t n_arms);

struct batch_parse {
    std::vector<size_t> valid_actions;        // parsed arms, duplicates kept, input order
    std::vector<std::optional<size_t>> per_completion;
    size_t n_invalid = 0;
};

batch_parse parse_batch(std::span<const std::string> completions, scenario_kind scenario, size_t n_arms);

bool is_valid_utf8(std::string_view bytes);

} // namespace east
