#pragma once

#include "east/scenario.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace east {

// Task description shown to the agent, byte-identical to prompts/<scenario>.txt.
std::string_view render_system_prompt(scenario_kind scenario);

struct turn {
    std::string completion;
    std::string feedback;

    bool operator==(const turn &) const = default;
};

enum class chat_role { user, assistant };

std::string_view to_string(chat_role role);
chat_role parse_role(std::string_view name);

struct chat_message {
    chat_role role;
    std::string text;

    bool operator==(const chat_message &) const = default;
};

// The agent's entire observable state: P_0 followed by (completion, feedback)
// pairs. Value type; append_turn() never mutates its argument.
struct transcript {
    scenario_kind scenario = scenario_kind::buttons;
    std::string system_text;
    std::vector<turn> turns;
    int horizon = 50;

    static transcript start(scenario_kind scenario, int horizon = 50);

    bool operator==(const transcript &) const = default;
};

// throws error(horizon_exceeded) when the transcript already holds `horizon` turns
transcript append_turn(const transcript & t, std::string completion, std::string feedback);

// user(system text), then assistant/user pairs; 1 + 2 * turns messages
std::vector<chat_message> to_chat_messages(const transcript & t);

nlohmann::json to_json(const transcript & t);
transcript transcript_from_json(const nlohmann::json & j);

std::string serialize(const transcript & t);
transcript deserialize_transcript(std::string_view text);

// one transcript per line
void save_transcripts(const std::vector<transcript> & ts, const std::string & path);
std::vector<transcript> load_transcripts(const std::string & path);

} // namespace east
