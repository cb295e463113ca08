#pragma once

#include "east/prompting.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace east {

struct sampling_params {
    double temperature = 1.0;       // 0 = greedy argmax, ties to the smallest token
    int max_new_tokens = 256;
    uint64_t seed = 0;
    std::optional<std::string> stop_text;  // end-of-sequence always stops too

    void validate() const;
};

enum class position_kind : unsigned char { prompt_last, generated };

struct activation_vector {
    std::vector<float> values;
    int layer = 0;
    position_kind position = position_kind::prompt_last;
    int generated_index = 0;  // meaningful for position_kind::generated

    size_t dim() const { return values.size(); }
};

// z_hat = z + multiplier * vector at `layer`, for generated positions only
struct steering_spec {
    activation_vector vector;
    double multiplier = 0.0;
    int layer = 0;
};

enum class finish_reason { stop, max_tokens };

std::string_view to_string(finish_reason r);

struct generation_result {
    std::string text;
    int n_tokens = 0;
    finish_reason finished = finish_reason::stop;
    std::optional<std::vector<std::string>> token_texts;
};

// Uniform model interface. Implementations are shareable across threads for
// concurrent const calls; each call owns its own sampling state and cache.
//
// Layers are numbered 1..n_layers(); layer l names the residual stream output
// of block l (the input of block l + 1).
class backend {
public:
    virtual ~backend() = default;

    virtual std::string id() const = 0;
    virtual int n_layers() const = 0;
    // 0 when not known locally (remote backends)
    virtual size_t hidden_dim() const = 0;

    // `assistant_prefix` is teacher-forced as the start of the completion;
    // it counts as generated text and is returned as part of the result.
    virtual generation_result generate(const transcript & t, const sampling_params & params,
                                       const std::optional<steering_spec> & steering,
                                       std::string_view assistant_prefix = {}) const = 0;

    // n independent completions; completion i uses seed
    // derive_seed(params.seed, stream::completion, i)
    virtual std::vector<generation_result> generate_n(const transcript & t, const sampling_params & params,
                                                      const std::optional<steering_spec> & steering, size_t n,
                                                      std::string_view assistant_prefix = {}) const;

    virtual activation_vector capture_prompt_activation(const transcript & t, int layer) const = 0;

    // softmax(logits / temperature) for the first completion token; temperature > 0
    virtual std::vector<double> next_token_distribution(const transcript & t, const sampling_params & params) const = 0;
};

// throws error(layer_range) / error(dim_mismatch)
void check_layer(const backend & b, int layer);
void check_steering(const backend & b, const steering_spec & s);

sampling_params completion_params(const sampling_params & base, size_t index);

std::vector<double> softmax_tempered(std::span<const double> logits, double temperature);

double shannon_entropy(std::span<const double> probs);

} // namespace east
