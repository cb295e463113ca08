#pragma once

#include "east/backend.hpp"
#include "east/scenario.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace east {

struct activation_sample {
    std::vector<float> activation;  // z_t^k, last prompt token at the dataset layer
    double entropy_nats = 0.0;      // h_t^k
};

struct activation_run {
    std::vector<activation_sample> samples;  // timestep order
};

struct activation_dataset {
    std::vector<activation_run> runs;
    int layer = 0;
    scenario_kind scenario = scenario_kind::buttons;

    size_t dim() const;
    size_t n_samples() const;
    // throws error(empty_dataset | dim_mismatch | bad_request)
    void validate() const;
    // sha256 over a canonical little-endian encoding of every run
    std::string hash() const;
};

// Entropy-weighted, run-centred average of activations:
//
//   u = (1/Z) sum_k sum_t h_t^k (z_t^k - mean_t'(z_t'^k)),   Z = sum_k sum_t h_t^k
//
// Accumulates in double. Every sum is taken over its terms sorted by value
// with Neumaier compensation, so the result is bit-identical under any
// reordering of runs or of samples within a run. The vector is not
// renormalised.
struct steering_vector {
    std::vector<double> values;
    int layer = 0;
    scenario_kind source_scenario = scenario_kind::buttons;
    double normalizer = 0.0;  // Z
    bool control = false;     // feature-shuffled copy
    nlohmann::json metadata = nlohmann::json::object();

    size_t dim() const { return values.size(); }
    steering_spec to_spec(double multiplier, std::optional<int> layer_override = std::nullopt) const;
};

// OpenMP over runs, deterministic merge
steering_vector compute_steering_vector(const activation_dataset & dataset);
// single-threaded reference with the same arithmetic
steering_vector compute_steering_vector_serial(const activation_dataset & dataset);

// seeded uniform permutation of the features
steering_vector shuffle_features(const steering_vector & v, uint64_t seed);

// Binary layout (little-endian): "EAST", u32 version = 1, u32 dim, u32 layer,
// u8 scenario, u8 control, f64 Z, dim x f32 values, u32 n + n bytes of JSON
// metadata. Values are stored as f32.
inline constexpr uint32_t vector_format_version = 1;

void save_vector(const steering_vector & v, const std::filesystem::path & path);
// throws error(bad_magic | version_mismatch | truncated | dim_mismatch)
steering_vector load_vector(const std::filesystem::path & path, std::optional<size_t> expected_dim = std::nullopt);

// values rounded to the stored f32 precision
steering_vector quantized(const steering_vector & v);

// order-independent compensated sum (sorts a copy of the terms)
double canonical_sum(std::vector<double> terms);

} // namespace east
