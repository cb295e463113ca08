#include "east/action_parser.hpp"
#include "east/error.hpp"
#include "east/experiment.hpp"
#include "east/runlog.hpp"
#include "east/scripted_backend.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace east;

namespace {

bandit_config two_arms(int horizon) {
    bandit_config b;
    b.means = {100.0, 100.0};
    b.stddevs = {10.0, 10.0};
    b.horizon = horizon;
    return b;
}

run_log scripted_run(uint64_t seed, double invalid_prob = 0.2, int horizon = 12) {
    scripted_config cfg;
    cfg.seed = 4;
    cfg.invalid_prob = invalid_prob;
    cfg.slope = 0.05;
    scripted_backend model(cfg);
    sampling_params p;
    interaction_options opt;
    opt.m = 8;
    return run_interaction(two_arms(horizon), scenario_kind::buttons, model, p, std::nullopt, seed, opt).log;
}

// -sum p ln p over the counts, written out directly
double entropy_of(const std::vector<size_t> & counts) {
    double n = 0.0;
    for (auto c : counts) {
        n += static_cast<double>(c);
    }
    double h = 0.0;
    for (auto c : counts) {
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h -= p * std::log(p);
        }
    }
    return h;
}

errc code_of(const std::function<void()> & f) {
    try {
        f();
    } catch (const error & e) {
        return e.code();
    }
    FAIL("no east::error thrown");
    return errc::io;
}

} // namespace

TEST_CASE("JSONL round trip of a scripted run") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const auto log = scripted_run(seed);
        REQUIRE(!log.steps.empty());
        const auto text = to_jsonl(log);
        CHECK(runlog_from_jsonl(text) == log);
        CHECK(to_jsonl(runlog_from_jsonl(text)) == text);

        const auto dir = testing_support::temp_dir("runlog");
        write_runlog(log, dir / "r.jsonl");
        CHECK(read_runlog(dir / "r.jsonl") == log);
        CHECK(testing_support::slurp(dir / "r.jsonl") == text);
    }
}

TEST_CASE("JSONL carries arbitrary bytes, steering and terminal attempts") {
    run_log log;
    log.run_id = "x";
    log.scenario = scenario_kind::slot_machines;
    log.bandit = two_arms(3);
    log.bandit.seed = 99;
    log.backend_id = "hand";
    log.steering = {{"layer", 3}, {"multiplier", 2.0}, {"vector_sha256", "ab"}, {"control", true}};
    log.params.stop_text = "\n\n";
    log.params.temperature = 0.5;
    step_record s;
    s.t = 1;
    s.chosen_action = 1;
    s.chosen_completion = 1;
    s.reward = -3.25;
    s.feedback = "Result: You received -3.25 dollars.";
    s.counts = {0, 1};
    s.n_valid = 1;
    s.n_total = 3;
    s.completions = {std::string("\xff\xfe bad", 6), "Action: Slot machine 2", std::string("nul\0byte", 8)};
    s.activation_offset = 12;
    s.sampling_seed = 0xFFFFFFFFFFFFFFFFull;
    log.steps.push_back(s);
    log.termination = "all_invalid";
    log.terminal = terminal_attempt{2, 2, {"no action", std::string("\x80", 1)}};

    const auto back = runlog_from_jsonl(to_jsonl(log));
    CHECK(back == log);
    CHECK(back.steps[0].completions[0] == std::string("\xff\xfe bad", 6));
    CHECK(back.steps[0].completions[2].size() == 8);
    CHECK(back.terminal->completions[1] == std::string("\x80", 1));
    // one JSON object per line
    const auto text = to_jsonl(log);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("malformed run logs are rejected") {
    const auto good = to_jsonl(scripted_run(1, 0.0, 3));
    CHECK(code_of([&] { runlog_from_jsonl(""); }) == errc::bad_request);
    CHECK(code_of([&] { runlog_from_jsonl("{not json"); }) == errc::bad_request);
    CHECK(code_of([&] { runlog_from_jsonl("{\"type\":\"other\"}"); }) == errc::bad_request);

    // drop the second step: t jumps from 1 to 3
    std::vector<std::string> lines;
    std::istringstream in(good);
    for (std::string l; std::getline(in, l);) {
        lines.push_back(l);
    }
    REQUIRE(lines.size() == 4);
    CHECK(code_of([&] { runlog_from_jsonl(lines[0] + "\n" + lines[1] + "\n" + lines[3] + "\n"); }) ==
          errc::bad_request);
    // steps alone, no header
    CHECK(code_of([&] { runlog_from_jsonl(lines[1] + "\n"); }) == errc::bad_request);

    auto header = nlohmann::json::parse(lines[0]);
    header["schema_version"] = 7;
    CHECK(code_of([&] { runlog_from_jsonl(header.dump() + "\n"); }) == errc::version_mismatch);

    CHECK(code_of([&] { read_runlog("/nonexistent/east/run.jsonl"); }) == errc::io);
}

TEST_CASE("property: step records are internally consistent") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const auto log = scripted_run(seed, 0.3, 15);
        for (size_t i = 0; i < log.steps.size(); ++i) {
            const auto & s = log.steps[i];
            CHECK(s.t == static_cast<int>(i) + 1);
            CHECK(s.n_total == log.m);
            CHECK(s.completions.size() == s.n_total);
            size_t sum = 0;
            for (auto c : s.counts) {
                sum += c;
            }
            CHECK(sum == s.n_valid);
            REQUIRE(s.n_valid >= 1);
            CHECK(std::abs(s.entropy_nats - entropy_of(s.counts)) <= 1e-9);
            CHECK(s.entropy_nats <= std::log(2.0) + 1e-12);
            CHECK(s.counts.at(s.chosen_action) >= 1);
            const auto parsed = parse_action(s.completions.at(s.chosen_completion), log.scenario, 2);
            REQUIRE(parsed.has_value());
            CHECK(parsed->arm == s.chosen_action);
            // recount from the stored completions
            std::vector<size_t> recount(2, 0);
            for (const auto & c : s.completions) {
                if (auto a = parse_action(c, log.scenario, 2)) {
                    ++recount[a->arm];
                }
            }
            CHECK(recount == s.counts);
            reward r;
            r.value = s.reward;
            r.arm = s.chosen_action;
            r.timestep = s.t;
            CHECK(s.feedback == feedback_text(r, log.scenario));
        }
        if (log.termination == "horizon") {
            CHECK(log.steps.size() == 15);
        }
    }
}

TEST_CASE("transcript_at rebuilds the prompt seen at each step") {
    const auto log = scripted_run(3, 0.0, 6);
    REQUIRE(log.steps.size() == 6);
    const auto p1 = transcript_at(log, 1);
    CHECK(p1.turns.empty());
    CHECK(p1 == transcript::start(log.scenario, 6));
    for (int t = 2; t <= 7; ++t) {
        const auto p = transcript_at(log, t);
        REQUIRE(p.turns.size() == static_cast<size_t>(t - 1));
        const auto & prev = log.steps[static_cast<size_t>(t - 2)];
        CHECK(p.turns.back().completion == prev.completions[prev.chosen_completion]);
        CHECK(p.turns.back().feedback == prev.feedback);
        // prefix property
        const auto q = transcript_at(log, t - 1);
        CHECK(std::equal(q.turns.begin(), q.turns.end(), p.turns.begin()));
    }
    CHECK_THROWS_AS(transcript_at(log, 0), error);
    CHECK_THROWS_AS(transcript_at(log, 8), error);
}

TEST_CASE("all-invalid run ends with a terminal attempt") {
    const auto log = scripted_run(2, 1.0, 10);
    CHECK(log.termination == "all_invalid");
    CHECK(log.steps.empty());
    REQUIRE(log.terminal.has_value());
    CHECK(log.terminal->t == 1);
    CHECK(log.terminal->n_total == 8);
    CHECK(log.terminal->completions.size() == 8);
    CHECK(runlog_from_jsonl(to_jsonl(log)) == log);
}

TEST_CASE("sidecar round trip and offsets") {
    const auto dir = testing_support::temp_dir("sidecar");
    const auto path = dir / "a.eact";
    std::vector<std::vector<float>> rows = {{1.0f, -2.5f, 3.0f}, {0.1f, 1e-30f, -0.0f}, {7, 8, 9}};
    std::vector<uint64_t> offsets;
    {
        sidecar_writer w(path, 3);
        for (const auto & r : rows) {
            offsets.push_back(w.append(r));
        }
        CHECK_THROWS_AS(w.append(std::vector<float>{1.0f}), error);
    }
    CHECK(offsets == std::vector<uint64_t>{12, 24, 36});
    const auto sc = read_sidecar(path);
    CHECK(sc.dim == 3);
    CHECK(sc.n_rows() == 3);
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto r = sc.row_at_offset(offsets[i]);
        REQUIRE(r.size() == 3);
        CHECK(std::memcmp(r.data(), rows[i].data(), 3 * sizeof(float)) == 0);
    }
    CHECK(std::signbit(sc.row_at_offset(24)[2]));
    CHECK_THROWS_AS(sc.row_at_offset(13), error);
    CHECK_THROWS_AS(sc.row_at_offset(48), error);
    CHECK(testing_support::slurp(path).size() == 12 + 9 * 4);
}

TEST_CASE("sidecar corruption is rejected") {
    const auto dir = testing_support::temp_dir("sidecar_bad");
    const auto path = dir / "a.eact";
    {
        sidecar_writer w(path, 2);
        w.append(std::vector<float>{1, 2});
        w.append(std::vector<float>{3, 4});
    }
    const auto good = testing_support::slurp(path);
    const auto write = [&](const std::string & bytes) {
        std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    };
    auto bad = good;
    bad[1] = 'Z';
    write(bad);
    CHECK(code_of([&] { read_sidecar(path); }) == errc::bad_magic);
    bad = good;
    bad[4] = 9;
    write(bad);
    CHECK(code_of([&] { read_sidecar(path); }) == errc::version_mismatch);
    write(good.substr(0, good.size() - 2));
    CHECK(code_of([&] { read_sidecar(path); }) == errc::truncated);
    write(good.substr(0, 7));
    CHECK(code_of([&] { read_sidecar(path); }) == errc::truncated);
    write(good);
    CHECK(read_sidecar(path).n_rows() == 2);
}
