#pragma once

#include <string_view>

namespace east {

enum class scenario_kind : unsigned char {
    buttons = 0,
    slot_machines = 1,
};

std::string_view to_string(scenario_kind kind);
scenario_kind parse_scenario(std::string_view name);

// entity the agent names in its Action line ("Button", "Slot Machine")
std::string_view entity_name(scenario_kind kind);

} // namespace east
