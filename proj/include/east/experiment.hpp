#pragma once

#include "east/backend.hpp"
#include "east/bandit.hpp"
#include "east/policy.hpp"
#include "east/runlog.hpp"
#include "east/steering.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace east {

// Seed fan-out for one run with master seed s:
//   bandit rewards      derive_seed(s, stream::env)
//   sampling at step t  derive_seed(s, stream::step, t), then per completion i
//                       derive_seed(that, stream::completion, i)
//   executed action     derive_seed(s, stream::select, t)
// Run k of a batch with master seed S uses s = derive_seed(S, stream::run, k).

struct interaction_options {
    size_t m = 25;
    std::vector<int> capture_layers;   // prompt activations recorded per step
};

struct run_result {
    run_log log;
    // activations[layer index][step index] for every recorded step
    std::vector<std::vector<std::vector<float>>> activations;
};

// One agent-environment interaction of up to bandit.horizon steps. Ends early
// when no completion parses (termination "all_invalid") or on a transport
// failure (termination "transport_error", partial log kept).
run_result run_interaction(const bandit_config & bandit, scenario_kind scenario, const backend & model,
                           const sampling_params & params, const std::optional<steering_spec> & steering,
                           uint64_t seed, const interaction_options & options = {});

// n_runs interactions without capture, run k seeded derive_seed(seed, stream::run, k)
std::vector<run_log> run_batch(size_t n_runs, const bandit_config & bandit, scenario_kind scenario,
                               const backend & model, const sampling_params & params,
                               const std::optional<steering_spec> & steering, size_t m, uint64_t seed, int jobs = 0);

struct collected_dataset {
    std::vector<run_log> logs;
    std::vector<activation_dataset> datasets;   // one per capture layer
    size_t n_excluded = 0;                       // steps without a defined entropy
    size_t dim = 0;                              // activation width, 0 if unknown
};

// K interactions with activation capture, run in parallel with `jobs` threads
collected_dataset collect_dataset(size_t n_runs, const bandit_config & bandit, scenario_kind scenario,
                                  const backend & model, const sampling_params & params,
                                  const interaction_options & options, uint64_t seed, int jobs = 0,
                                  const std::optional<steering_spec> & steering = std::nullopt);

// Writes runs/run_<k>.jsonl and activations_L<l>.eact, filling activation offsets.
void write_collection(collected_dataset & c, const std::vector<int> & layers, const std::filesystem::path & dir);

// runs/run_<k>.jsonl for every log
void write_runs(const std::vector<run_log> & logs, const std::filesystem::path & dir);
// Reads run_<k>.jsonl files in index order from dir/runs, or from dir itself
// when it has no runs/ subdirectory.
std::vector<run_log> read_runs(const std::filesystem::path & dir);

// Rebuilds a layer's dataset from run logs and their sidecar
activation_dataset dataset_from_logs(const std::vector<run_log> & logs, const sidecar & activations, int layer);

struct sweep_grid {
    std::vector<int> layers;
    std::vector<double> multipliers;
    std::vector<double> temperatures;
    size_t m_eval = 15;

    void validate() const;
};

struct eval_row {
    std::string kind;        // baseline | steer | control | temperature
    int layer = 0;           // 0 when unsteered
    double beta = 0.0;
    double temperature = 1.0;
    double mean_entropy = 0.0;   // over prompts with at least one valid completion; NaN if none
    double valid_fraction = 0.0;

    bool operator==(const eval_row &) const = default;
};

struct eval_options {
    sampling_params params;    // temperature of steered rows; seed of the evaluation
    size_t n_arms = 2;
    bool include_baseline = true;
    bool include_temperatures = true;
    std::string steer_kind = "steer";
};

// Mean action entropy and valid fraction of every grid cell over the prompt
// set. Prompt j uses the same sampling seed in every cell, so a beta = 0 row
// reproduces the baseline row exactly. `vectors` maps layer to vector; a
// single vector is reused for every grid layer.
std::vector<eval_row> eval_steering(const std::vector<transcript> & prompts, const backend & model,
                                    const sweep_grid & grid, const std::map<int, steering_vector> & vectors,
                                    const eval_options & options);

// one prompt set cell: mean entropy and valid fraction
eval_row eval_cell(const std::vector<transcript> & prompts, const backend & model, const sampling_params & params,
                   const std::optional<steering_spec> & steering, size_t m_eval, size_t n_arms);

// Evaluation prompts from random steps of logged interactions: each draw picks
// a group uniformly, a run uniformly within it, then a step uniformly.
std::vector<transcript> sample_eval_prompts(const std::vector<std::vector<run_log>> & groups, size_t n, uint64_t seed);

struct trace_point {
    std::string token;
    double probability = 0.0;   // of the target arm among valid parses; NaN if none
    size_t n_valid = 0;
};

struct action_trace {
    std::string completion;
    std::vector<trace_point> points;
};

// Generates one completion token by token; after each token, s continuations
// are drawn from that prefix and parsed.
action_trace action_probability_trace(const backend & model, const transcript & t, const sampling_params & params,
                                      size_t s, size_t target_arm,
                                      const std::optional<steering_spec> & steering = std::nullopt,
                                      size_t n_arms = 2);

struct temperature_result {
    double temperature = 0.0;
    std::vector<run_log> logs;
    double validity_rate = 0.0;        // valid / sampled completions, terminal attempts included
    double mean_entropy = 0.0;         // over recorded steps
    size_t completed_runs = 0;         // runs reaching the horizon
};

std::vector<temperature_result> temperature_sweep(const bandit_config & bandit, scenario_kind scenario,
                                                  const backend & model, const sampling_params & params,
                                                  const std::vector<double> & temperatures, size_t n_runs, size_t m,
                                                  uint64_t seed, int jobs = 0);

} // namespace east
