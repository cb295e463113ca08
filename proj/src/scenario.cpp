#include "east/scenario.hpp"

#include "east/error.hpp"

#include <string>

namespace east {

std::string_view to_string(scenario_kind kind) {
    return kind == scenario_kind::buttons ? "buttons" : "slot_machines";
}

scenario_kind parse_scenario(std::string_view name) {
    if (name == "buttons") {
        return scenario_kind::buttons;
    }
    if (name == "slot_machines") {
        return scenario_kind::slot_machines;
    }
    throw error(errc::invalid_config, "unknown scenario '" + std::string(name) + "'");
}

std::string_view entity_name(scenario_kind kind) {
    return kind == scenario_kind::buttons ? "Button" : "Slot Machine";
}

} // namespace east
