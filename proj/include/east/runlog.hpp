#pragma once

#include "east/backend.hpp"
#include "east/bandit.hpp"
#include "east/prompting.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace east {

inline constexpr int runlog_schema_version = 1;

struct step_record {
    int t = 0;
    size_t chosen_action = 0;
    size_t chosen_completion = 0;   // index into completions
    double reward = 0.0;
    std::string feedback;
    std::vector<size_t> counts;
    size_t n_valid = 0;
    size_t n_total = 0;
    double entropy_nats = 0.0;
    std::vector<std::string> completions;
    std::optional<uint64_t> activation_offset;  // byte offset of the row in each sidecar
    uint64_t sampling_seed = 0;

    bool operator==(const step_record &) const = default;
};

// Completions drawn at the step that ended a run because none parsed.
struct terminal_attempt {
    int t = 0;
    size_t n_total = 0;
    std::vector<std::string> completions;

    bool operator==(const terminal_attempt &) const = default;
};

struct run_log {
    std::string run_id;
    scenario_kind scenario = scenario_kind::buttons;
    bandit_config bandit;
    std::string backend_id;
    nlohmann::json steering;        // null, or {layer, multiplier, vector_sha256, control}
    sampling_params params;
    size_t m = 25;
    uint64_t seed = 0;              // run master seed
    std::vector<step_record> steps;
    std::string termination = "horizon";   // horizon | all_invalid | transport_error
    std::string termination_detail;
    std::optional<terminal_attempt> terminal;

    bool operator==(const run_log & o) const;
};

// header record first, then one record per step
std::string to_jsonl(const run_log & log);
run_log runlog_from_jsonl(std::string_view text);

void write_runlog(const run_log & log, const std::filesystem::path & path);
run_log read_runlog(const std::filesystem::path & path);

// P_t: the prompt the agent saw before acting at step t (1-based; t may be
// steps.size() + 1 for the prompt after the last step)
transcript transcript_at(const run_log & log, int t);

// Activation sidecar (little-endian): "EACT", u32 version = 1, u32 dim, then
// rows of dim x f32.
inline constexpr uint32_t sidecar_format_version = 1;
inline constexpr uint64_t sidecar_header_bytes = 12;

class sidecar_writer {
public:
    sidecar_writer(const std::filesystem::path & path, size_t dim);
    // returns the byte offset of the row
    uint64_t append(std::span<const float> row);
    size_t dim() const { return dim_; }

private:
    std::ofstream out_;
    size_t dim_;
    uint64_t next_offset_ = sidecar_header_bytes;
};

struct sidecar {
    size_t dim = 0;
    std::vector<float> data;  // rows back to back

    std::span<const float> row_at_offset(uint64_t offset) const;
    size_t n_rows() const { return dim == 0 ? 0 : data.size() / dim; }
};

sidecar read_sidecar(const std::filesystem::path & path);

} // namespace east
