#pragma once

#include "east/backend.hpp"
#include "east/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace east {

struct toy_config {
    int n_layers = 8;
    size_t hidden = 64;
    size_t n_heads = 4;
    size_t context = 512;
    size_t ffn_mult = 4;
    uint64_t seed = 0;
    float init_std = 0.02f;

    void validate() const;
};

// Untrained decoder-only transformer over bytes: 256 byte tokens plus an
// end token. Pre-norm blocks, learned positional embeddings, weights drawn
// from Normal(0, init_std) with a pinned seed. Exists to exercise injection
// mechanics and the wire protocol; its text is noise.
class toy_transformer final : public backend {
public:
    static constexpr int vocab_size = 257;
    static constexpr int eos_token = 256;

    explicit toy_transformer(toy_config config = {});

    std::string id() const override;
    int n_layers() const override { return config_.n_layers; }
    size_t hidden_dim() const override { return config_.hidden; }
    const toy_config & config() const { return config_; }

    generation_result generate(const transcript & t, const sampling_params & params,
                               const std::optional<steering_spec> & steering,
                               std::string_view assistant_prefix = {}) const override;

    std::vector<generation_result> generate_n(const transcript & t, const sampling_params & params,
                                              const std::optional<steering_spec> & steering, size_t n,
                                              std::string_view assistant_prefix = {}) const override;

    activation_vector capture_prompt_activation(const transcript & t, int layer) const override;

    std::vector<double> next_token_distribution(const transcript & t, const sampling_params & params) const override;

    // "USER: ...\nASSISTANT: ...\n" role prefixes, ending in "ASSISTANT: "
    static std::string chat_template(const transcript & t);
    static std::vector<int> tokenize(std::string_view text);

    // Incremental decoding state. hidden[l][pos] is the residual stream after
    // block l (l = 0 is the embedding), post-injection, exactly what later
    // positions attend through.
    struct cache {
        size_t n_pos = 0;
        std::vector<std::vector<float>> keys;    // [layer-1][pos * d]
        std::vector<std::vector<float>> values;  // [layer-1][pos * d]
        std::vector<std::vector<float>> hidden;  // [layer][pos * d]
    };

    cache new_cache() const;

    // Runs one position through the network and appends it to the cache.
    // When `inject` is set, multiplier * vector is added to the block output
    // of steering.layer before the next block; pre_hook (if non-null)
    // receives that block output before the addition. Returns logits when
    // want_logits is set.
    std::vector<double> step(cache & c, int token, const steering_spec * inject, std::vector<float> * pre_hook,
                             bool want_logits) const;

    // Teacher-forced pass: prompt tokens run unsteered, forced tokens are
    // treated as generated positions. Exposes every layer's activations.
    struct forced_trace {
        size_t prompt_len = 0;
        cache state;
        std::vector<std::vector<float>> pre_hook;   // per forced position, d floats
        std::vector<std::vector<double>> logits;    // per forced position (prediction after it)
        std::vector<double> prompt_logits;          // prediction after the last prompt token
    };

    forced_trace forward_forced(std::span<const int> prompt_tokens, std::span<const int> forced_tokens,
                                const std::optional<steering_spec> & steering) const;

    // serial-kernel reference of step(), used to check the OpenMP path
    void set_serial_kernels(bool serial) { serial_kernels_ = serial; }

private:
    struct layer_weights {
        std::vector<float> ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
    };

    void matvec(std::span<const float> w, size_t rows, size_t cols, std::span<const float> x, std::span<float> y) const;
    std::vector<int> prompt_tokens(const transcript & t, size_t reserve_new) const;
    int sample_token(std::span<const double> logits, double temperature, rng & r) const;

    std::vector<generation_result> generate_seeded(const transcript & t, const sampling_params & params,
                                                   const std::optional<steering_spec> & steering,
                                                   std::string_view assistant_prefix,
                                                   std::span<const uint64_t> seeds) const;

    generation_result continue_from(cache c, std::vector<double> logits, const sampling_params & params,
                                    const steering_spec * inject, std::string prefix_text,
                                    int prefix_tokens) const;

    toy_config config_;
    bool serial_kernels_ = false;
    std::vector<float> tok_emb_, pos_emb_, lnf_g_, lnf_b_, unembed_;
    std::vector<layer_weights> layers_;
};

} // namespace east
