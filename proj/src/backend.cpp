#include "east/backend.hpp"

#include "east/error.hpp"
#include "east/rng.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace east {

void sampling_params::validate() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw error(errc::invalid_config, "sampling: temperature must be >= 0");
    }
    if (max_new_tokens < 1) {
        throw error(errc::invalid_config, "sampling: max_new_tokens must be >= 1");
    }
    if (stop_text && stop_text->empty()) {
        throw error(errc::invalid_config, "sampling: empty stop text");
    }
}

std::string_view to_string(finish_reason r) {
    return r == finish_reason::stop ? "stop" : "max_tokens";
}

sampling_params completion_params(const sampling_params & base, size_t index) {
    sampling_params p = base;
    p.seed = derive_seed(base.seed, stream::completion, index);
    return p;
}

std::vector<generation_result> backend::generate_n(const transcript & t, const sampling_params & params,
                                                   const std::optional<steering_spec> & steering, size_t n,
                                                   std::string_view assistant_prefix) const {
    std::vector<generation_result> out(n);
    std::exception_ptr failure;
    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) {
        try {
            out[i] = generate(t, completion_params(params, static_cast<size_t>(i)), steering, assistant_prefix);
        } catch (...) {
#pragma omp critical(east_generate_n_failure)
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

void check_layer(const backend & b, int layer) {
    // a backend reporting no depth validates remotely
    if (b.n_layers() <= 0) {
        return;
    }
    if (layer < 1 || layer > b.n_layers()) {
        throw error(errc::layer_range, "layer " + std::to_string(layer) + " outside [1, " +
                                           std::to_string(b.n_layers()) + "]");
    }
}

void check_steering(const backend & b, const steering_spec & s) {
    check_layer(b, s.layer);
    if (b.hidden_dim() != 0 && s.vector.dim() != b.hidden_dim()) {
        throw error(errc::dim_mismatch, "steering vector has dim " + std::to_string(s.vector.dim()) +
                                            ", backend hidden dim is " + std::to_string(b.hidden_dim()));
    }
    if (!std::isfinite(s.multiplier)) {
        throw error(errc::bad_request, "steering multiplier must be finite");
    }
    for (float v : s.vector.values) {
        if (!std::isfinite(v)) {
            throw error(errc::bad_request, "steering vector has non-finite entries");
        }
    }
}

std::vector<double> softmax_tempered(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw error(errc::bad_request, "softmax: temperature must be > 0 (use greedy decoding for 0)");
    }
    std::vector<double> p(logits.size());
    if (logits.empty()) {
        return p;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - mx) / temperature);
        z += p[i];
    }
    for (double & v : p) {
        v /= z;
    }
    return p;
}

double shannon_entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

} // namespace east
