#include "east/action_parser.hpp"
#include "east/backend.hpp"
#include "east/error.hpp"
#include "east/kernels.hpp"
#include "east/policy.hpp"
#include "east/prompting.hpp"
#include "east/rng.hpp"
#include "east/scripted_backend.hpp"
#include "east/toy_transformer.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace east;

namespace {

steering_spec random_spec(uint64_t seed, size_t d, double beta, int layer) {
    rng r(seed);
    steering_spec s;
    s.vector.values.resize(d);
    for (auto & x : s.vector.values) {
        x = static_cast<float>(r.normal());
    }
    s.vector.layer = layer;
    s.multiplier = beta;
    s.layer = layer;
    return s;
}

std::vector<int> random_tokens(rng & r, size_t n) {
    std::vector<int> t(n);
    for (auto & x : t) {
        x = static_cast<int>(r.below(256));
    }
    return t;
}

// the bundled system prompt alone overflows the toy's 512-byte context
transcript short_transcript() {
    auto t = transcript::start(scenario_kind::buttons);
    t.system_text = "Pick a button.";
    t = append_turn(t, "Thought: try one.\nAction: I choose Button 1.", "Result: You received 99.10 points.");
    return t;
}

errc code_of(const std::function<void()> & fn) {
    try {
        fn();
    } catch (const error & e) {
        return e.code();
    }
    return errc::unsupported;
}

} // namespace

TEST_CASE("softmax tempering closed forms") {
    const std::vector<double> a = {0.0, 0.0};
    const auto p = softmax_tempered(a, 1.0);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));
    const std::vector<double> b = {1.0, 0.0};
    const auto q = softmax_tempered(b, 0.5);
    CHECK(std::abs(q[0] - 0.8808) < 1e-4);
    CHECK(std::abs(q[1] - 0.1192) < 1e-4);
    // exact: 1 / (1 + e^-2)
    CHECK(std::abs(q[0] - 1.0 / (1.0 + std::exp(-2.0))) < 1e-15);
    CHECK(code_of([&] { softmax_tempered(b, 0.0); }) == errc::bad_request);
}

TEST_CASE("tempering raises entropy for fixed logits") {
    rng r(8);
    std::vector<double> logits(50);
    for (auto & x : logits) {
        x = 3.0 * r.normal();
    }
    CHECK(shannon_entropy(softmax_tempered(logits, 8.0)) > shannon_entropy(softmax_tempered(logits, 1.0)));
}

TEST_CASE("serial and OpenMP kernels are bit-identical") {
    rng r(1);
    const size_t rows = 256, cols = 300, n = 7;
    std::vector<float> w(rows * cols), x(n * cols), y1(n * rows), y2(n * rows);
    for (auto & v : w) {
        v = static_cast<float>(r.normal());
    }
    for (auto & v : x) {
        v = static_cast<float>(r.normal());
    }
    kernels::matvec_serial(w, rows, cols, std::span(x).first(cols), std::span(y1).first(rows));
    kernels::matvec_omp(w, rows, cols, std::span(x).first(cols), std::span(y2).first(rows));
    CHECK(std::memcmp(y1.data(), y2.data(), rows * sizeof(float)) == 0);
    kernels::matmul_nt_serial(x, n, w, rows, cols, y1);
    kernels::matmul_nt_omp(x, n, w, rows, cols, y2);
    CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(float)) == 0);
    // against a double-precision oracle
    for (size_t rr = 0; rr < rows; rr += 37) {
        double s = 0.0;
        for (size_t c = 0; c < cols; ++c) {
            s += static_cast<double>(w[rr * cols + c]) * x[c];
        }
        CHECK(std::abs(y1[rr] - s) < 1e-3);
    }
}

TEST_CASE("toy: generation is deterministic and zero injections are no-ops") {
    toy_transformer model({.seed = 3});
    const auto t = short_transcript();
    sampling_params p;
    p.max_new_tokens = 24;
    p.seed = 77;
    const auto base = model.generate_n(t, p, std::nullopt, 3);
    const auto again = model.generate_n(t, p, std::nullopt, 3);
    auto zero_beta = random_spec(5, 64, 0.0, 4);
    auto zero_u = random_spec(5, 64, 2.0, 4);
    std::fill(zero_u.vector.values.begin(), zero_u.vector.values.end(), 0.0f);
    const auto with_b0 = model.generate_n(t, p, zero_beta, 3);
    const auto with_u0 = model.generate_n(t, p, zero_u, 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(base[i].text == again[i].text);
        CHECK(base[i].text == with_b0[i].text);
        CHECK(base[i].text == with_u0[i].text);
        REQUIRE(base[i].token_texts);
        CHECK(std::accumulate(base[i].token_texts->begin(), base[i].token_texts->end(), std::string()) ==
              base[i].text);
    }
    // completion i of generate_n is generate() with the derived seed
    CHECK(model.generate(t, completion_params(p, 1), std::nullopt).text == base[1].text);
}

TEST_CASE("toy: injection adds beta*u at generated positions only") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        toy_transformer model({.seed = seed});
        rng r(seed + 100);
        const auto prompt = random_tokens(r, 20);
        const auto forced = random_tokens(r, 6);
        const int layer = 1 + static_cast<int>(seed % 8);
        const auto spec = random_spec(seed, 64, 2.0, layer);
        const auto steered = model.forward_forced(prompt, forced, spec);
        const auto plain = model.forward_forced(prompt, forced, std::nullopt);
        const size_t d = 64;
        for (size_t k = 0; k < forced.size(); ++k) {
            const size_t pos = prompt.size() + k;
            const auto & post = steered.state.hidden[static_cast<size_t>(layer)];
            for (size_t i = 0; i < d; ++i) {
                const double diff = static_cast<double>(post[pos * d + i]) - steered.pre_hook[k][i];
                CHECK(std::abs(diff - 2.0 * spec.vector.values[i]) <= 1e-6);
            }
        }
        for (int l = 0; l <= 8; ++l) {
            const auto & a = steered.state.hidden[static_cast<size_t>(l)];
            const auto & b = plain.state.hidden[static_cast<size_t>(l)];
            // all prompt positions, and every position below the injection layer
            const size_t upto = l < layer ? a.size() : prompt.size() * d;
            CHECK(std::memcmp(a.data(), b.data(), upto * sizeof(float)) == 0);
        }
        CHECK(steered.prompt_logits == plain.prompt_logits);
        CHECK(steered.logits.back() != plain.logits.back());
    }
}

TEST_CASE("toy: injected states persist in the cache") {
    toy_transformer model({.seed = 11});
    rng r(4);
    const auto prompt = random_tokens(r, 12);
    const auto forced = random_tokens(r, 5);
    const auto spec = random_spec(9, 64, 1.5, 4);
    const auto full = model.forward_forced(prompt, forced, spec);

    // replay up to token k, snapshot the cache, then regenerate token k + 1
    for (size_t k = 1; k < forced.size(); ++k) {
        auto c = model.new_cache();
        for (int tok : prompt) {
            model.step(c, tok, nullptr, nullptr, false);
        }
        for (size_t j = 0; j < k; ++j) {
            model.step(c, forced[j], &spec, nullptr, false);
        }
        const auto snapshot = c;
        const size_t d = 64;
        for (size_t j = 0; j < k; ++j) {
            const size_t pos = prompt.size() + j;
            for (size_t i = 0; i < d; ++i) {
                const float post = snapshot.hidden[4][pos * d + i];
                CHECK(post == full.state.hidden[4][pos * d + i]);
                CHECK(std::abs(post - full.pre_hook[j][i] - 1.5 * spec.vector.values[i]) <= 1e-6);
            }
        }
        auto replay = snapshot;
        const auto logits = model.step(replay, forced[k], &spec, nullptr, true);
        CHECK(logits == full.logits[k]);
    }
}

TEST_CASE("toy: greedy steered generation follows the forced-pass argmax") {
    toy_transformer model({.seed = 21});
    const auto t = short_transcript();
    sampling_params p;
    p.temperature = 0.0;
    p.max_new_tokens = 16;
    const auto spec = random_spec(2, 64, 3.0, 4);
    const auto g = model.generate(t, p, spec);
    const auto prompt = toy_transformer::tokenize(toy_transformer::chat_template(t));
    const auto toks = toy_transformer::tokenize(g.text);
    const auto tr = model.forward_forced(prompt, toks, spec);
    auto argmax = [](const std::vector<double> & v) {
        return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    };
    REQUIRE(!toks.empty());
    CHECK(argmax(tr.prompt_logits) == toks[0]);
    for (size_t k = 0; k + 1 < toks.size(); ++k) {
        CHECK(argmax(tr.logits[k]) == toks[k + 1]);
    }
}

TEST_CASE("toy: greedy ties go to the smallest token") {
    toy_transformer model({.seed = 1, .init_std = 0.0f});
    sampling_params p;
    p.temperature = 0.0;
    p.max_new_tokens = 4;
    const auto g = model.generate(short_transcript(), p, std::nullopt);
    CHECK(g.text == std::string(4, '\0'));
}

TEST_CASE("toy: temperature 0 ignores the sampling seed") {
    toy_transformer model({.seed = 2});
    sampling_params p;
    p.temperature = 0.0;
    p.max_new_tokens = 12;
    p.seed = 1;
    const auto a = model.generate(short_transcript(), p, std::nullopt);
    p.seed = 999;
    CHECK(model.generate(short_transcript(), p, std::nullopt).text == a.text);
}

TEST_CASE("toy: serial kernels reproduce the OpenMP path") {
    toy_transformer fast({.hidden = 128, .seed = 5});
    toy_transformer slow({.hidden = 128, .seed = 5});
    slow.set_serial_kernels(true);
    sampling_params p;
    p.max_new_tokens = 10;
    p.seed = 3;
    const auto spec = random_spec(1, 128, 2.0, 4);
    CHECK(fast.generate(short_transcript(), p, spec).text == slow.generate(short_transcript(), p, spec).text);
    const auto a = fast.capture_prompt_activation(short_transcript(), 6);
    const auto b = slow.capture_prompt_activation(short_transcript(), 6);
    CHECK(a.values == b.values);
}

TEST_CASE("toy: capture is deterministic and layer specific") {
    toy_transformer model({.seed = 8});
    const auto t = short_transcript();
    const auto a = model.capture_prompt_activation(t, 2);
    CHECK(a.values == model.capture_prompt_activation(t, 2).values);
    CHECK(a.dim() == 64);
    const auto b = model.capture_prompt_activation(t, 6);
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < 64; ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    CHECK(dot / std::sqrt(na * nb) < 1.0 - 1e-6);
    // capture equals the forward pass over the templated prompt
    const auto tr = model.forward_forced(toy_transformer::tokenize(toy_transformer::chat_template(t)), {}, std::nullopt);
    const auto & h = tr.state.hidden[2];
    CHECK(std::equal(a.values.begin(), a.values.end(), h.end() - 64));
}

TEST_CASE("toy: layer and dimension checks") {
    toy_transformer model;
    const auto t = short_transcript();
    sampling_params p;
    p.max_new_tokens = 2;
    CHECK(code_of([&] { model.capture_prompt_activation(t, 0); }) == errc::layer_range);
    CHECK(code_of([&] { model.capture_prompt_activation(t, 9); }) == errc::layer_range);
    CHECK(code_of([&] { model.generate(t, p, random_spec(1, 64, 1.0, 9)); }) == errc::layer_range);
    CHECK(code_of([&] { model.generate(t, p, random_spec(1, 32, 1.0, 4)); }) == errc::dim_mismatch);
    auto bad = random_spec(1, 64, 1.0, 4);
    bad.vector.values[3] = NAN;
    CHECK(code_of([&] { model.generate(t, p, bad); }) != errc::unsupported);
    p.temperature = 0.0;
    CHECK(code_of([&] { model.next_token_distribution(t, p); }) == errc::bad_request);
}

TEST_CASE("toy: next-token entropy grows with temperature") {
    toy_transformer model({.seed = 4, .init_std = 0.2f});
    const auto t = short_transcript();
    sampling_params p;
    double prev = -1.0;
    for (double tau : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
        p.temperature = tau;
        const auto dist = model.next_token_distribution(t, p);
        CHECK(dist.size() == 257);
        CHECK(std::accumulate(dist.begin(), dist.end(), 0.0) == doctest::Approx(1.0));
        const double h = shannon_entropy(dist);
        CHECK(h > prev);
        prev = h;
    }
}

TEST_CASE("scripted: determinism and template validity") {
    scripted_config cfg;
    cfg.seed = 3;
    cfg.g0 = 0.4;
    cfg.invalid_prob = 0.2;
    scripted_backend model(cfg);
    const auto t = short_transcript();
    sampling_params p;
    p.seed = 12;
    const auto a = model.generate_n(t, p, std::nullopt, 40);
    const auto b = model.generate_n(t, p, std::nullopt, 40);
    size_t invalid = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].text == b[i].text);
        REQUIRE(a[i].token_texts);
        CHECK(std::accumulate(a[i].token_texts->begin(), a[i].token_texts->end(), std::string()) == a[i].text);
        invalid += parse_action(a[i].text, scenario_kind::buttons, 2) ? 0 : 1;
    }
    CHECK(invalid > 0);
    CHECK(invalid < a.size());
    CHECK(model.capture_prompt_activation(t, 3).values == model.capture_prompt_activation(t, 3).values);
}

TEST_CASE("scripted: steering that cancels g0 drives entropy to ln 2") {
    scripted_config cfg;
    cfg.seed = 1;
    cfg.g0 = 2.0;
    scripted_backend probe(cfg);
    // u along e_0, w chosen so that beta * dot(w, u) = -g0 at beta = 2
    steering_spec s;
    s.vector.values.assign(64, 0.0f);
    s.vector.values[0] = 1.0f;
    s.multiplier = 2.0;
    s.layer = 4;
    cfg.w.assign(64, 0.0);
    cfg.w[0] = -1.0;
    scripted_backend model(cfg);
    const auto t = transcript::start(scenario_kind::buttons);
    CHECK(model.p_arm1(t, s) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(model.p_arm1(t, std::nullopt) == doctest::Approx(testing_support::logistic(2.0)));
    sampling_params p;
    p.seed = 5;
    const auto dist = estimate_distribution(model, t, p, s, 4000);
    CHECK(dist.n_valid == 4000);
    CHECK(std::abs(dist.entropy_nats - std::log(2.0)) < 0.005);
    const auto unsteered = estimate_distribution(model, t, p, std::nullopt, 4000);
    CHECK(unsteered.entropy_nats < 0.45);
}

TEST_CASE("scripted: temperature 0 is a step function and forced arms are honoured") {
    scripted_config cfg;
    cfg.g0 = 0.3;
    scripted_backend model(cfg);
    const auto t = transcript::start(scenario_kind::slot_machines);
    CHECK(model.p_arm1(t, std::nullopt, 0.0) == 1.0);
    cfg.forced_arm = 0;
    scripted_backend forced(cfg);
    sampling_params p;
    for (const auto & g : forced.generate_n(t, p, std::nullopt, 10)) {
        const auto a = parse_action(g.text, scenario_kind::slot_machines, 2);
        REQUIRE(a);
        CHECK(a->arm == 0);
    }
}

TEST_CASE("scripted: assistant prefix is honoured") {
    scripted_config cfg;
    cfg.g0 = 0.0;
    scripted_backend model(cfg);
    const auto t = transcript::start(scenario_kind::buttons);
    const auto full = model.render_template(scenario_kind::buttons, 1);
    const auto prefix = full.substr(0, full.size() - 1);   // up to "Button 2"
    sampling_params p;
    for (const auto & g : model.generate_n(t, p, std::nullopt, 20, prefix)) {
        CHECK(g.text.starts_with(prefix));
        const auto a = parse_action(g.text, scenario_kind::buttons, 2);
        REQUIRE(a);
        CHECK(a->arm == 1);
    }
}
