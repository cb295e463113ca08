#include "east/toy_transformer.hpp"

#include "east/error.hpp"
#include "east/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

namespace east {

void toy_config::validate() const {
    if (n_layers < 1 || hidden == 0 || n_heads == 0 || hidden % n_heads != 0 || context < 2 || ffn_mult == 0) {
        throw error(errc::invalid_config, "toy transformer: inconsistent shape");
    }
    if (!(init_std >= 0.0f) || !std::isfinite(init_std)) {
        throw error(errc::invalid_config, "toy transformer: init_std must be finite and >= 0");
    }
}

namespace {

std::vector<float> normal_block(rng & r, size_t n, float stddev) {
    std::vector<float> out(n);
    for (auto & v : out) {
        v = static_cast<float>(r.normal() * stddev);
    }
    return out;
}

} // namespace

toy_transformer::toy_transformer(toy_config config) : config_(config) {
    config_.validate();
    const size_t d = config_.hidden;
    const size_t f = config_.hidden * config_.ffn_mult;
    const float s = config_.init_std;
    rng r(derive_seed(config_.seed, stream::weights));

    tok_emb_ = normal_block(r, vocab_size * d, s);
    pos_emb_ = normal_block(r, config_.context * d, s);
    layers_.resize(static_cast<size_t>(config_.n_layers));
    for (auto & l : layers_) {
        l.ln1_g.assign(d, 1.0f);
        l.ln1_b.assign(d, 0.0f);
        l.wq = normal_block(r, d * d, s);
        l.wk = normal_block(r, d * d, s);
        l.wv = normal_block(r, d * d, s);
        l.wo = normal_block(r, d * d, s);
        l.ln2_g.assign(d, 1.0f);
        l.ln2_b.assign(d, 0.0f);
        l.w1 = normal_block(r, f * d, s);
        l.b1.assign(f, 0.0f);
        l.w2 = normal_block(r, d * f, s);
        l.b2.assign(d, 0.0f);
    }
    lnf_g_.assign(d, 1.0f);
    lnf_b_.assign(d, 0.0f);
    unembed_ = normal_block(r, vocab_size * d, s);
}

std::string toy_transformer::id() const {
    std::ostringstream os;
    os << "toy(seed=" << config_.seed << ",layers=" << config_.n_layers << ",hidden=" << config_.hidden
       << ",heads=" << config_.n_heads << ",context=" << config_.context << ")";
    return os.str();
}

std::string toy_transformer::chat_template(const transcript & t) {
    std::string out;
    for (const auto & m : to_chat_messages(t)) {
        out += m.role == chat_role::user ? "USER: " : "ASSISTANT: ";
        out += m.text;
        out += '\n';
    }
    out += "ASSISTANT: ";
    return out;
}

std::vector<int> toy_transformer::tokenize(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        out.push_back(static_cast<int>(c));
    }
    return out;
}

std::vector<int> toy_transformer::prompt_tokens(const transcript & t, size_t reserve_new) const {
    if (reserve_new >= config_.context) {
        throw error(errc::bad_request, "toy transformer: generation budget exceeds the context window");
    }
    auto tokens = tokenize(chat_template(t));
    // keep the most recent tokens
    const size_t keep = config_.context - reserve_new;
    if (tokens.size() > keep) {
        tokens.erase(tokens.begin(), tokens.end() - static_cast<long>(keep));
    }
    return tokens;
}

toy_transformer::cache toy_transformer::new_cache() const {
    cache c;
    const size_t L = layers_.size();
    const size_t reserve = config_.context * config_.hidden;
    c.keys.resize(L);
    c.values.resize(L);
    c.hidden.resize(L + 1);
    for (size_t l = 0; l < L; ++l) {
        c.keys[l].reserve(reserve);
        c.values[l].reserve(reserve);
    }
    for (auto & h : c.hidden) {
        h.reserve(reserve);
    }
    return c;
}

void toy_transformer::matvec(std::span<const float> w, size_t rows, size_t cols, std::span<const float> x,
                             std::span<float> y) const {
    if (serial_kernels_) {
        kernels::matvec_serial(w, rows, cols, x, y);
    } else {
        kernels::matvec_omp(w, rows, cols, x, y);
    }
}

std::vector<double> toy_transformer::step(cache & c, int token, const steering_spec * inject,
                                          std::vector<float> * pre_hook, bool want_logits) const {
    const size_t d = config_.hidden;
    const size_t f = d * config_.ffn_mult;
    const size_t H = config_.n_heads;
    const size_t dh = d / H;
    const size_t pos = c.n_pos;
    if (pos >= config_.context) {
        throw error(errc::bad_request, "toy transformer: context window exhausted");
    }
    if (token < 0 || token >= vocab_size) {
        throw error(errc::bad_request, "toy transformer: token out of range");
    }

    std::vector<float> x(d), h(d), q(d), k(d), v(d), att(d), proj(d), ff(f);
    for (size_t i = 0; i < d; ++i) {
        x[i] = tok_emb_[static_cast<size_t>(token) * d + i] + pos_emb_[pos * d + i];
    }
    c.hidden[0].insert(c.hidden[0].end(), x.begin(), x.end());

    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<float> scores(pos + 1);
    for (size_t li = 0; li < layers_.size(); ++li) {
        const auto & L = layers_[li];
        kernels::layer_norm(x, L.ln1_g, L.ln1_b, h);
        matvec(L.wq, d, d, h, q);
        matvec(L.wk, d, d, h, k);
        matvec(L.wv, d, d, h, v);
        c.keys[li].insert(c.keys[li].end(), k.begin(), k.end());
        c.values[li].insert(c.values[li].end(), v.begin(), v.end());

        const float * keys = c.keys[li].data();
        const float * vals = c.values[li].data();
        for (size_t head = 0; head < H; ++head) {
            const size_t off = head * dh;
            float mx = -INFINITY;
            for (size_t p = 0; p <= pos; ++p) {
                float s = 0.0f;
                for (size_t j = 0; j < dh; ++j) {
                    s += q[off + j] * keys[p * d + off + j];
                }
                scores[p] = s * scale;
                mx = std::max(mx, scores[p]);
            }
            float z = 0.0f;
            for (size_t p = 0; p <= pos; ++p) {
                scores[p] = std::exp(scores[p] - mx);
                z += scores[p];
            }
            for (size_t j = 0; j < dh; ++j) {
                att[off + j] = 0.0f;
            }
            for (size_t p = 0; p <= pos; ++p) {
                const float a = scores[p] / z;
                for (size_t j = 0; j < dh; ++j) {
                    att[off + j] += a * vals[p * d + off + j];
                }
            }
        }
        matvec(L.wo, d, d, att, proj);
        for (size_t i = 0; i < d; ++i) {
            x[i] += proj[i];
        }

        kernels::layer_norm(x, L.ln2_g, L.ln2_b, h);
        matvec(L.w1, f, d, h, ff);
        for (size_t i = 0; i < f; ++i) {
            ff[i] += L.b1[i];
        }
        kernels::gelu_inplace(ff);
        matvec(L.w2, d, f, ff, proj);
        for (size_t i = 0; i < d; ++i) {
            x[i] += proj[i] + L.b2[i];
        }

        const int layer = static_cast<int>(li) + 1;
        if (inject != nullptr && inject->layer == layer) {
            if (pre_hook != nullptr) {
                *pre_hook = x;
            }
            for (size_t i = 0; i < d; ++i) {
                const auto delta = static_cast<float>(inject->multiplier * static_cast<double>(inject->vector.values[i]));
                if (delta != 0.0f) {
                    x[i] += delta;
                }
            }
        }
        c.hidden[layer].insert(c.hidden[layer].end(), x.begin(), x.end());
    }
    ++c.n_pos;

    if (!want_logits) {
        return {};
    }
    kernels::layer_norm(x, lnf_g_, lnf_b_, h);
    std::vector<float> logits_f(vocab_size);
    matvec(unembed_, vocab_size, d, h, logits_f);
    return {logits_f.begin(), logits_f.end()};
}

int toy_transformer::sample_token(std::span<const double> logits, double temperature, rng & r) const {
    if (temperature == 0.0) {
        // first maximum = lexicographically smallest token
        return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    const auto probs = softmax_tempered(logits, temperature);
    const double u = r.uniform();
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
            return static_cast<int>(i);
        }
    }
    // rounding left u above the final partial sum
    for (size_t i = probs.size(); i-- > 0;) {
        if (probs[i] > 0.0) {
            return static_cast<int>(i);
        }
    }
    return 0;
}

generation_result toy_transformer::continue_from(cache c, std::vector<double> logits, const sampling_params & params,
                                                 const steering_spec * inject, std::string prefix_text,
                                                 int prefix_tokens) const {
    generation_result out;
    out.text = std::move(prefix_text);
    out.n_tokens = prefix_tokens;
    out.token_texts = std::vector<std::string>();
    for (char ch : out.text) {
        out.token_texts->emplace_back(1, ch);
    }
    rng r(params.seed);
    int produced = 0;
    while (true) {
        const int tok = sample_token(logits, params.temperature, r);
        if (tok == eos_token) {
            out.finished = finish_reason::stop;
            return out;
        }
        out.text.push_back(static_cast<char>(tok));
        out.token_texts->emplace_back(1, static_cast<char>(tok));
        ++out.n_tokens;
        ++produced;
        if (params.stop_text && out.text.ends_with(*params.stop_text)) {
            out.finished = finish_reason::stop;
            return out;
        }
        if (produced >= params.max_new_tokens || c.n_pos >= config_.context) {
            out.finished = finish_reason::max_tokens;
            return out;
        }
        logits = step(c, tok, inject, nullptr, true);
    }
}

generation_result toy_transformer::generate(const transcript & t, const sampling_params & params,
                                            const std::optional<steering_spec> & steering,
                                            std::string_view assistant_prefix) const {
    const uint64_t seed = params.seed;
    return std::move(generate_seeded(t, params, steering, assistant_prefix, std::span(&seed, 1)).front());
}

std::vector<generation_result> toy_transformer::generate_n(const transcript & t, const sampling_params & params,
                                                           const std::optional<steering_spec> & steering, size_t n,
                                                           std::string_view assistant_prefix) const {
    std::vector<uint64_t> seeds(n);
    for (size_t i = 0; i < n; ++i) {
        seeds[i] = completion_params(params, i).seed;
    }
    return generate_seeded(t, params, steering, assistant_prefix, seeds);
}

std::vector<generation_result> toy_transformer::generate_seeded(const transcript & t, const sampling_params & params,
                                                                const std::optional<steering_spec> & steering,
                                                                std::string_view assistant_prefix,
                                                                std::span<const uint64_t> seeds) const {
    params.validate();
    if (steering) {
        check_steering(*this, *steering);
    }
    const steering_spec * inject = steering ? &*steering : nullptr;
    const auto prefix = tokenize(assistant_prefix);
    const auto prompt = prompt_tokens(t, static_cast<size_t>(params.max_new_tokens) + prefix.size());

    // the shared prefill runs once; each completion decodes from a copy
    cache c = new_cache();
    std::vector<double> logits;
    for (size_t i = 0; i < prompt.size(); ++i) {
        logits = step(c, prompt[i], nullptr, nullptr, i + 1 == prompt.size() && prefix.empty());
    }
    for (size_t i = 0; i < prefix.size(); ++i) {
        logits = step(c, prefix[i], inject, nullptr, i + 1 == prefix.size());
    }

    std::vector<generation_result> out(seeds.size());
    std::exception_ptr failure;
    const auto count = static_cast<long>(seeds.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) {
        try {
            sampling_params p = params;
            p.seed = seeds[static_cast<size_t>(i)];
            out[i] = continue_from(c, logits, p, inject, std::string(assistant_prefix), static_cast<int>(prefix.size()));
        } catch (...) {
#pragma omp critical(east_toy_failure)
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

activation_vector toy_transformer::capture_prompt_activation(const transcript & t, int layer) const {
    check_layer(*this, layer);
    const auto prompt = prompt_tokens(t, 0);
    cache c = new_cache();
    for (int tok : prompt) {
        step(c, tok, nullptr, nullptr, false);
    }
    const size_t d = config_.hidden;
    const auto & h = c.hidden[static_cast<size_t>(layer)];
    activation_vector out;
    out.values.assign(h.end() - static_cast<long>(d), h.end());
    out.layer = layer;
    out.position = position_kind::prompt_last;
    return out;
}

std::vector<double> toy_transformer::next_token_distribution(const transcript & t, const sampling_params & params) const {
    const auto prompt = prompt_tokens(t, 1);
    cache c = new_cache();
    std::vector<double> logits;
    for (size_t i = 0; i < prompt.size(); ++i) {
        logits = step(c, prompt[i], nullptr, nullptr, i + 1 == prompt.size());
    }
    return softmax_tempered(logits, params.temperature);
}

toy_transformer::forced_trace toy_transformer::forward_forced(std::span<const int> prompt_tokens,
                                                              std::span<const int> forced_tokens,
                                                              const std::optional<steering_spec> & steering) const {
    if (steering) {
        check_steering(*this, *steering);
    }
    forced_trace tr;
    tr.prompt_len = prompt_tokens.size();
    tr.state = new_cache();
    for (size_t i = 0; i < prompt_tokens.size(); ++i) {
        auto logits = step(tr.state, prompt_tokens[i], nullptr, nullptr, i + 1 == prompt_tokens.size());
        if (i + 1 == prompt_tokens.size()) {
            tr.prompt_logits = std::move(logits);
        }
    }
    const steering_spec * inject = steering ? &*steering : nullptr;
    for (int tok : forced_tokens) {
        std::vector<float> pre;
        tr.logits.push_back(step(tr.state, tok, inject, &pre, true));
        tr.pre_hook.push_back(std::move(pre));
    }
    return tr;
}

} // namespace east
