#include "east/prompting.hpp"

#include "east/error.hpp"
#include "prompt_fixtures.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace east {

std::string_view render_system_prompt(scenario_kind scenario) {
    if (scenario == scenario_kind::buttons) {
        return {reinterpret_cast<const char *>(fixtures::buttons_txt), sizeof(fixtures::buttons_txt)};
    }
    return {reinterpret_cast<const char *>(fixtures::slot_machines_txt), sizeof(fixtures::slot_machines_txt)};
}

std::string_view to_string(chat_role role) {
    return role == chat_role::user ? "user" : "assistant";
}

chat_role parse_role(std::string_view name) {
    if (name == "user") {
        return chat_role::user;
    }
    if (name == "assistant") {
        return chat_role::assistant;
    }
    throw error(errc::bad_request, "unknown role '" + std::string(name) + "'");
}

transcript transcript::start(scenario_kind scenario, int horizon) {
    transcript t;
    t.scenario = scenario;
    t.system_text = std::string(render_system_prompt(scenario));
    t.horizon = horizon;
    return t;
}

transcript append_turn(const transcript & t, std::string completion, std::string feedback) {
    if (static_cast<int>(t.turns.size()) >= t.horizon) {
        throw error(errc::horizon_exceeded, "transcript: horizon of " + std::to_string(t.horizon) + " turns reached");
    }
    transcript next = t;
    next.turns.push_back({std::move(completion), std::move(feedback)});
    return next;
}

std::vector<chat_message> to_chat_messages(const transcript & t) {
    std::vector<chat_message> out;
    out.reserve(1 + 2 * t.turns.size());
    out.push_back({chat_role::user, t.system_text});
    for (const auto & tr : t.turns) {
        out.push_back({chat_role::assistant, tr.completion});
        out.push_back({chat_role::user, tr.feedback});
    }
    return out;
}

nlohmann::json to_json(const transcript & t) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto & tr : t.turns) {
        turns.push_back({{"completion", tr.completion}, {"feedback", tr.feedback}});
    }
    return {
        {"scenario", to_string(t.scenario)},
        {"horizon", t.horizon},
        {"system_text", t.system_text},
        {"turns", std::move(turns)},
    };
}

transcript transcript_from_json(const nlohmann::json & j) {
    try {
        transcript t;
        t.scenario = parse_scenario(j.at("scenario").get<std::string>());
        t.horizon = j.at("horizon").get<int>();
        t.system_text = j.at("system_text").get<std::string>();
        for (const auto & tr : j.at("turns")) {
            t.turns.push_back({tr.at("completion").get<std::string>(), tr.at("feedback").get<std::string>()});
        }
        if (t.system_text.empty()) {
            throw error(errc::bad_request, "transcript: empty system text");
        }
        return t;
    } catch (const nlohmann::json::exception & e) {
        throw error(errc::bad_request, std::string("transcript: ") + e.what());
    }
}

std::string serialize(const transcript & t) {
    return to_json(t).dump();
}

transcript deserialize_transcript(std::string_view text) {
    try {
        return transcript_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error & e) {
        throw error(errc::bad_request, std::string("transcript: ") + e.what());
    }
}

void save_transcripts(const std::vector<transcript> & ts, const std::string & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw error(errc::io, "cannot write " + path);
    }
    for (const auto & t : ts) {
        out << serialize(t) << '\n';
    }
}

std::vector<transcript> load_transcripts(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error(errc::io, "cannot read " + path);
    }
    std::vector<transcript> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(deserialize_transcript(line));
        }
    }
    return out;
}

} // namespace east
