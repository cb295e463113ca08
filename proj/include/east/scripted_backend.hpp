#pragma once

#include "east/backend.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace east {

// Stand-in model for two-armed tasks whose action probabilities respond to
// steering by construction:
//
//   logit(P)  = g0 + slope * turns(P) + dot(w, multiplier * u)
//   p(arm 1)  = logistic(logit(P) / temperature)
//
// Activations are a(P) = hash_unit(P) + entropy_scale * H(P) * e, where
// hash_unit is a seeded unit vector derived from the transcript text, H is
// the unsteered action entropy at temperature 1 and e the entropy direction.
struct scripted_config {
    size_t hidden = 64;
    int n_layers = 8;
    uint64_t seed = 0;
    double g0 = 0.0;
    double slope = 0.0;
    std::vector<double> w;                  // empty = w_along_direction * entropy direction
    double w_along_direction = 0.0;
    std::vector<double> entropy_direction;  // empty = seeded random unit vector
    double entropy_scale = 1.0;
    double invalid_prob = 0.0;              // weight of a template without an action
    std::optional<size_t> forced_arm;
    std::string thought = "Thought: I will weigh the results I have seen so far before deciding.";

    void validate() const;
};

class scripted_backend final : public backend {
public:
    explicit scripted_backend(scripted_config config = {});

    std::string id() const override;
    int n_layers() const override { return config_.n_layers; }
    size_t hidden_dim() const override { return config_.hidden; }
    const scripted_config & config() const { return config_; }
    const std::vector<double> & entropy_direction() const { return direction_; }
    const std::vector<double> & w() const { return w_; }

    generation_result generate(const transcript & t, const sampling_params & params,
                               const std::optional<steering_spec> & steering,
                               std::string_view assistant_prefix = {}) const override;

    activation_vector capture_prompt_activation(const transcript & t, int layer) const override;

    // over the two action tokens ("1", "2") at the decision point
    std::vector<double> next_token_distribution(const transcript & t, const sampling_params & params) const override;

    double logit(const transcript & t, const std::optional<steering_spec> & steering) const;
    // probability of arm index 1 among valid completions
    double p_arm1(const transcript & t, const std::optional<steering_spec> & steering, double temperature = 1.0) const;

    // full text of the template for an arm, or of the invalid template
    std::string render_template(scenario_kind scenario, std::optional<size_t> arm) const;
    static std::vector<std::string> split_tokens(std::string_view text);

private:
    scripted_config config_;
    std::vector<double> w_;
    std::vector<double> direction_;
};

} // namespace east
