#include "east/scripted_backend.hpp"

#include "east/error.hpp"
#include "east/hash.hpp"
#include "east/rng.hpp"

#include <cmath>
#include <sstream>

namespace east {

void scripted_config::validate() const {
    if (hidden == 0 || n_layers < 1) {
        throw error(errc::invalid_config, "scripted backend: hidden and n_layers must be positive");
    }
    if (!w.empty() && w.size() != hidden) {
        throw error(errc::invalid_config, "scripted backend: w must have hidden entries");
    }
    if (!entropy_direction.empty() && entropy_direction.size() != hidden) {
        throw error(errc::invalid_config, "scripted backend: entropy_direction must have hidden entries");
    }
    if (!std::isfinite(w_along_direction)) {
        throw error(errc::invalid_config, "scripted backend: w_along_direction must be finite");
    }
    if (!(invalid_prob >= 0.0 && invalid_prob <= 1.0)) {
        throw error(errc::invalid_config, "scripted backend: invalid_prob must lie in [0, 1]");
    }
    if (forced_arm && *forced_arm > 1) {
        throw error(errc::invalid_config, "scripted backend: forced_arm must be 0 or 1");
    }
}

namespace {

std::vector<double> random_unit(uint64_t seed, size_t d) {
    rng r(seed);
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto & x : v) {
        x = r.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto & x : v) {
        x /= norm;
    }
    return v;
}

double logistic(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

double binary_entropy(double p) {
    double h = 0.0;
    if (p > 0.0) {
        h -= p * std::log(p);
    }
    if (p < 1.0) {
        h -= (1.0 - p) * std::log(1.0 - p);
    }
    return h;
}

} // namespace

scripted_backend::scripted_backend(scripted_config config) : config_(std::move(config)) {
    config_.validate();
    direction_ = config_.entropy_direction.empty()
        ? random_unit(derive_seed(config_.seed, fnv1a64("entropy_direction")), config_.hidden)
        : config_.entropy_direction;
    w_ = config_.w;
    if (w_.empty()) {
        for (double x : direction_) {
            w_.push_back(config_.w_along_direction * x);
        }
    }
}

std::string scripted_backend::id() const {
    std::ostringstream os;
    os << "scripted(seed=" << config_.seed << ",hidden=" << config_.hidden << ",g0=" << config_.g0
       << ",slope=" << config_.slope << ")";
    return os.str();
}

double scripted_backend::logit(const transcript & t, const std::optional<steering_spec> & steering) const {
    double x = config_.g0 + config_.slope * static_cast<double>(t.turns.size());
    if (steering) {
        double dot = 0.0;
        for (size_t i = 0; i < w_.size(); ++i) {
            dot += w_[i] * static_cast<double>(steering->vector.values[i]);
        }
        x += steering->multiplier * dot;
    }
    return x;
}

double scripted_backend::p_arm1(const transcript & t, const std::optional<steering_spec> & steering,
                                double temperature) const {
    if (config_.forced_arm) {
        return *config_.forced_arm == 1 ? 1.0 : 0.0;
    }
    const double x = logit(t, steering);
    if (temperature == 0.0) {
        return x > 0.0 ? 1.0 : 0.0;
    }
    return logistic(x / temperature);
}

std::string scripted_backend::render_template(scenario_kind scenario, std::optional<size_t> arm) const {
    std::string out = config_.thought + "\n";
    if (arm) {
        out += "Action: I choose " + std::string(entity_name(scenario)) + " " + std::to_string(*arm + 1) + ".";
    } else {
        out += "Action: I am not sure what to do.";
    }
    return out;
}

std::vector<std::string> scripted_backend::split_tokens(std::string_view text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\n') {
            ++j;
        }
        while (j < text.size() && (text[j] == ' ' || text[j] == '\n')) {
            ++j;
        }
        out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

generation_result scripted_backend::generate(const transcript & t, const sampling_params & params,
                                             const std::optional<steering_spec> & steering,
                                             std::string_view assistant_prefix) const {
    params.validate();
    if (steering) {
        check_steering(*this, *steering);
    }
    const double p1 = p_arm1(t, steering, params.temperature);
    const double q = config_.invalid_prob;

    struct candidate {
        std::optional<size_t> arm;
        double weight;
        std::string text;
    };
    std::vector<candidate> cands = {
        {0, (1.0 - q) * (1.0 - p1), render_template(t.scenario, 0)},
        {1, (1.0 - q) * p1, render_template(t.scenario, 1)},
        {std::nullopt, q, render_template(t.scenario, std::nullopt)},
    };

    // only templates that extend the forced prefix remain possible
    double total = 0.0;
    for (auto & c : cands) {
        if (!c.text.starts_with(assistant_prefix)) {
            c.weight = 0.0;
        }
        total += c.weight;
    }

    std::string text(assistant_prefix);
    if (total > 0.0) {
        rng r(params.seed);
        const double u = r.uniform() * total;
        double acc = 0.0;
        const candidate * chosen = nullptr;
        for (const auto & c : cands) {
            if (c.weight <= 0.0) {
                continue;
            }
            acc += c.weight;
            chosen = &c;
            if (u < acc) {
                break;
            }
        }
        text = chosen->text;
    }

    generation_result out;
    out.finished = finish_reason::stop;
    auto prefix_tokens = split_tokens(assistant_prefix);
    auto rest = split_tokens(std::string_view(text).substr(assistant_prefix.size()));
    std::vector<std::string> tokens = prefix_tokens;
    int produced = 0;
    for (auto & tok : rest) {
        if (produced >= params.max_new_tokens) {
            out.finished = finish_reason::max_tokens;
            break;
        }
        tokens.push_back(std::move(tok));
        ++produced;
        if (params.stop_text) {
            std::string so_far;
            for (const auto & s : tokens) {
                so_far += s;
            }
            if (so_far.find(*params.stop_text, assistant_prefix.size()) != std::string::npos) {
                break;
            }
        }
    }
    for (const auto & s : tokens) {
        out.text += s;
    }
    out.n_tokens = static_cast<int>(tokens.size());
    out.token_texts = std::move(tokens);
    return out;
}

activation_vector scripted_backend::capture_prompt_activation(const transcript & t, int layer) const {
    check_layer(*this, layer);
    auto base = random_unit(derive_seed(config_.seed, fnv1a64(serialize(t))), config_.hidden);
    const double h = binary_entropy(p_arm1(t, std::nullopt, 1.0));
    activation_vector out;
    out.layer = layer;
    out.values.resize(config_.hidden);
    for (size_t i = 0; i < config_.hidden; ++i) {
        out.values[i] = static_cast<float>(base[i] + config_.entropy_scale * h * direction_[i]);
    }
    return out;
}

std::vector<double> scripted_backend::next_token_distribution(const transcript & t, const sampling_params & params) const {
    if (!(params.temperature > 0.0)) {
        throw error(errc::bad_request, "next_token_distribution: temperature must be > 0");
    }
    const double p1 = p_arm1(t, std::nullopt, params.temperature);
    return {1.0 - p1, p1};
}

} // namespace east
