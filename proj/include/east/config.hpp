#pragma once

#include "east/analysis.hpp"
#include "east/backend.hpp"
#include "east/bandit.hpp"
#include "east/experiment.hpp"
#include "east/remote_backend.hpp"
#include "east/scenario.hpp"
#include "east/scripted_backend.hpp"
#include "east/toy_transformer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace east {

// The complete key tree with default values. A config file may only set keys
// that appear here.
nlohmann::json default_config();

// Defaults, then the file (if any), then each "dotted.key=value" override.
// Values are parsed as JSON when they parse, otherwise taken as strings.
// Throws error(invalid_config) on unknown keys or type changes.
nlohmann::json load_config(const std::optional<std::filesystem::path> & path,
                           const std::vector<std::string> & overrides = {});

void apply_override(nlohmann::json & tree, std::string_view assignment);

struct backend_settings {
    std::string kind = "toy";   // toy | scripted | remote
    toy_config toy;
    scripted_config scripted;
    remote_config remote;
};

struct experiment_config {
    scenario_kind scenario = scenario_kind::buttons;
    bandit_config bandit;
    size_t runs = 65;
    size_t m = 25;
    sampling_params sampling;

    int layer = 4;
    double multiplier = 2.0;
    std::string vector;                 // steering vector file, empty = unsteered
    std::vector<int> capture_layers;    // empty = {layer}

    std::string eval_prompts;           // transcript JSONL; empty = sample from eval_run_dirs
    std::vector<std::string> eval_run_dirs;
    size_t n_prompts = 100;
    sweep_grid grid;
    std::string vector_dir;             // per-layer vectors for sweep-layers
    std::string control_vector;

    size_t trace_s = 20;
    size_t trace_target_arm = 0;
    std::string trace_prompt;           // transcript JSONL (first entry); empty = fresh transcript

    std::vector<double> sweep_temperatures;
    size_t sweep_runs = 20;

    std::string corpus_a;
    std::string corpus_b;
    std::string stopwords;
    size_t min_word_length = 3;

    backend_settings backend;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    plot_format format = plot_format::csv;
};

// Typed view of a loaded tree; throws error(invalid_config) with the key path.
experiment_config parse_config(const nlohmann::json & tree);

std::unique_ptr<backend> make_backend(const backend_settings & settings);

} // namespace east
