#include "east/analysis.hpp"
#include "east/error.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace east;

namespace {

run_log log_with_actions(const std::vector<size_t> & actions, size_t n_arms = 2) {
    run_log log;
    log.bandit.means.assign(n_arms, 0.0);
    log.bandit.stddevs.assign(n_arms, 10.0);
    log.bandit.horizon = static_cast<int>(std::max<size_t>(actions.size(), 1));
    int t = 1;
    for (size_t a : actions) {
        step_record s;
        s.t = t++;
        s.chosen_action = a;
        s.counts.assign(n_arms, 0);
        s.counts[a] = 1;
        s.n_valid = 1;
        s.n_total = 1;
        s.completions = {"Action: Button " + std::to_string(a + 1)};
        log.steps.push_back(s);
    }
    return log;
}

run_log log_with_entropies(const std::vector<double> & h) {
    auto log = log_with_actions(std::vector<size_t>(h.size(), 0));
    for (size_t i = 0; i < h.size(); ++i) {
        log.steps[i].entropy_nats = h[i];
    }
    return log;
}

stopword_list fixture_stopwords() {
    return load_stopwords(std::filesystem::path(EAST_SOURCE_DIR) / "fixtures" / "stopwords_en.txt");
}

stopword_list no_stopwords() {
    stopword_list s;
    s.id = "none";
    return s;
}

const word_row & row_for(const word_report & r, const std::string & w) {
    for (const auto & row : r.rows) {
        if (row.word == w) {
            return row;
        }
    }
    FAIL("word missing: " << w);
    return r.rows.front();
}

} // namespace

TEST_CASE("cumulative traces: worked examples") {
    const auto tr = cumulative_action_traces({log_with_actions({0, 1, 1, 0})});
    CHECK(tr[0] == std::vector<long>{0, 1, 2, 2});
    const auto ones = cumulative_action_traces({log_with_actions(std::vector<size_t>(50, 1))});
    CHECK(ones[0].back() == 50);
    const auto zeros = cumulative_action_traces({log_with_actions(std::vector<size_t>(50, 0))});
    CHECK(zeros[0] == std::vector<long>(50, 0));
    // short runs keep their own length
    const auto mixed = cumulative_action_traces({log_with_actions({1}), log_with_actions({})});
    CHECK(mixed[0] == std::vector<long>{1});
    CHECK(mixed[1].empty());
}

TEST_CASE("cumulative traces reject non-binary tasks and empty input") {
    CHECK_THROWS_AS(cumulative_action_traces({log_with_actions({0, 2, 1}, 3)}), error);
    CHECK_THROWS_AS(cumulative_action_traces({}), error);
}

TEST_CASE("property: cumulative traces step by 0 or 1") {
    std::mt19937_64 gen(4);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<size_t> a(1 + gen() % 60);
        for (auto & x : a) {
            x = coin(gen) ? 1 : 0;
        }
        const auto tr = cumulative_action_traces({log_with_actions(a)})[0];
        REQUIRE(tr.size() == a.size());
        long prev = 0;
        for (size_t t = 0; t < tr.size(); ++t) {
            CHECK(tr[t] - prev == static_cast<long>(a[t]));
            prev = tr[t];
        }
    }
}

TEST_CASE("entropy over time: identical runs give a zero-width interval") {
    const std::vector<double> h = {0.6, 0.5, 0.1};
    const auto curve = entropy_over_time({log_with_entropies(h), log_with_entropies(h), log_with_entropies(h)});
    REQUIRE(curve.size() == 3);
    for (size_t t = 0; t < 3; ++t) {
        CHECK(curve[t].t == static_cast<int>(t) + 1);
        CHECK(curve[t].n_runs == 3);
        CHECK(curve[t].ci.mean == doctest::Approx(h[t]).epsilon(1e-15));
        CHECK(curve[t].ci.high - curve[t].ci.low == 0.0);
    }
}

TEST_CASE("entropy over time: {0, ln 2} averages to ln 2 / 2") {
    const auto curve = entropy_over_time({log_with_entropies({0.0}), log_with_entropies({std::log(2.0)})});
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].ci.mean == doctest::Approx(0.3466).epsilon(1e-4));
    CHECK(curve[0].ci.mean == std::log(2.0) / 2.0);
    CHECK(curve[0].ci.low >= 0.0);
    CHECK(curve[0].ci.high <= std::log(2.0));
}

TEST_CASE("entropy over time: a decreasing curve is recovered") {
    // run k: h_t = 0.6 / t + d_k with offsets summing to zero
    const std::vector<double> d = {-0.05, 0.0, 0.05, -0.02, 0.02};
    std::vector<run_log> logs;
    for (size_t k = 0; k < d.size(); ++k) {
        std::vector<double> h;
        for (int t = 1; t <= 20; ++t) {
            h.push_back(0.6 / t + d[k] + 0.06);
        }
        logs.push_back(log_with_entropies(h));
    }
    const auto curve = entropy_over_time(logs);
    REQUIRE(curve.size() == 20);
    for (int t = 1; t <= 20; ++t) {
        long double sum = 0;
        for (double dk : d) {
            sum += 0.6 / t + dk + 0.06;
        }
        CHECK(std::abs(curve[t - 1].ci.mean - static_cast<double>(sum / 5)) <= 1e-12);
        CHECK(curve[t - 1].ci.low <= curve[t - 1].ci.mean);
        CHECK(curve[t - 1].ci.high >= curve[t - 1].ci.mean);
        if (t > 1) {
            CHECK(curve[t - 1].ci.mean < curve[t - 2].ci.mean);
        }
    }
}

TEST_CASE("entropy over time: runs of different length") {
    const auto curve = entropy_over_time(std::vector<std::vector<double>>{{0.2, 0.4, 0.6}, {0.4}});
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].n_runs == 2);
    CHECK(curve[0].ci.mean == doctest::Approx(0.3));
    CHECK(curve[2].n_runs == 1);
    CHECK(curve[2].ci.mean == 0.6);
}

TEST_CASE("bootstrap: one resample is deterministic and contains the mean") {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0.0, 0.7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(2 + gen() % 20);
        for (auto & x : v) {
            x = u(gen);
        }
        bootstrap_options o;
        o.n_resamples = 1;
        o.seed = static_cast<uint64_t>(trial);
        const auto a = bootstrap_mean(v, o);
        const auto b = bootstrap_mean(v, o);
        CHECK(a.low == b.low);
        CHECK(a.high == b.high);
        CHECK(a.low <= a.mean);
        CHECK(a.mean <= a.high);
    }
}

TEST_CASE("bootstrap: interval covers the mean of a known population") {
    // values 0..99: mean 49.5, sd of the mean about 2.9
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) {
        v[static_cast<size_t>(i)] = i;
    }
    bootstrap_options o;
    o.seed = 3;
    const auto ci = bootstrap_mean(v, o);
    CHECK(ci.mean == 49.5);
    CHECK(ci.low < 49.5);
    CHECK(ci.high > 49.5);
    // 95% width is about 2 * 1.96 * 2.87
    CHECK(ci.high - ci.low == doctest::Approx(11.3).epsilon(0.15));
    o.confidence = 0.5;
    const auto narrow = bootstrap_mean(v, o);
    CHECK(narrow.high - narrow.low < ci.high - ci.low);
    CHECK_THROWS_AS(bootstrap_mean({}, o), error);
}

TEST_CASE("words: tokenizer") {
    CHECK(tokenize_words("Explore, EXPLOIT! re-try x2y") ==
          std::vector<std::string>{"explore", "exploit", "re", "try", "x", "y"});
    CHECK(tokenize_words("").empty());
    CHECK(tokenize_words("caf\xc3\xa9") == std::vector<std::string>{"caf"});
}

TEST_CASE("words: planted word has the largest ratio") {
    const auto r = word_frequency_report({"explore explore exploit"}, {"exploit"}, fixture_stopwords());
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows.front().word == "explore");
    CHECK(r.total_a == 3);
    CHECK(r.total_b == 1);
    // ((2 + 1) / 3) / ((0 + 1) / 1) and ((1 + 1) / 3) / ((1 + 1) / 1)
    CHECK(row_for(r, "explore").ratio_a_over_b == 1.0);
    CHECK(row_for(r, "exploit").ratio_a_over_b == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(row_for(r, "explore").freq_a == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(row_for(r, "explore").freq_b == 0.0);
    CHECK(r.stopword_list_id.starts_with("stopwords_en.txt@sha256:"));
}

TEST_CASE("words: a word only in b has a small finite ratio") {
    std::vector<std::string> a(1, std::string());
    for (int i = 0; i < 50; ++i) {
        a[0] += "zorp ";
    }
    const auto r = word_frequency_report(a, {"blick blick blick zorp"}, no_stopwords());
    const auto & row = row_for(r, "blick");
    CHECK(std::isfinite(row.ratio_a_over_b));
    // (1 / 50) / (4 / 4)
    CHECK(row.ratio_a_over_b == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(r.rows.back().word == "blick");
}

TEST_CASE("words: symmetric corpora give ratio 1") {
    const std::vector<std::string> c = {"the agent pressed button again", "button pressed", "reward noted"};
    const auto r = word_frequency_report(c, c, fixture_stopwords());
    CHECK(!r.rows.empty());
    for (const auto & row : r.rows) {
        CHECK(row.ratio_a_over_b == 1.0);
        CHECK(row.ratio_b_over_a == 1.0);
        CHECK(row.word.size() >= 3);
        CHECK(!fixture_stopwords().contains(row.word));
    }
}

TEST_CASE("words: stopwords and short words are dropped, empty corpora rejected") {
    const auto sw = fixture_stopwords();
    CHECK(sw.contains("the"));
    const auto r = word_frequency_report({"the an ox zebra"}, {"zebra"}, sw);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].word == "zebra");
    CHECK(r.total_a == 1);
    CHECK_THROWS_AS(word_frequency_report({"the of and"}, {"zebra"}, sw), error);
    CHECK_THROWS_AS(word_frequency_report({"zebra"}, {}, sw), error);
    CHECK_THROWS_AS(load_stopwords("/nonexistent/stopwords.txt"), error);
}

TEST_CASE("property: swapping corpora swaps the ratio columns exactly") {
    std::mt19937_64 gen(10);
    const std::vector<std::string> vocab = {"zorp", "blick", "quax", "frumble", "snark", "glim", "wobble"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> a(3), b(2);
        for (auto * corpus : {&a, &b}) {
            for (auto & doc : *corpus) {
                const size_t n = 1 + gen() % 15;
                for (size_t i = 0; i < n; ++i) {
                    doc += vocab[gen() % vocab.size()] + " ";
                }
            }
        }
        const auto ab = word_frequency_report(a, b, no_stopwords());
        const auto ba = word_frequency_report(b, a, no_stopwords());
        REQUIRE(ab.rows.size() == ba.rows.size());
        for (const auto & row : ab.rows) {
            const auto & other = row_for(ba, row.word);
            CHECK(row.ratio_a_over_b == other.ratio_b_over_a);
            CHECK(row.ratio_b_over_a == other.ratio_a_over_b);
            CHECK(row.count_a == other.count_b);
            CHECK(row.freq_a == other.freq_b);
            // the documented formula, evaluated here
            const double fa = (row.count_a + 1.0) / static_cast<double>(ab.total_a);
            const double fb = (row.count_b + 1.0) / static_cast<double>(ab.total_b);
            CHECK(row.ratio_a_over_b == doctest::Approx(fa / fb).epsilon(1e-14));
            CHECK(row.freq_a >= 0.0);
            CHECK(row.freq_a <= 1.0);
        }
        for (size_t i = 1; i < ab.rows.size(); ++i) {
            CHECK(ab.rows[i].ratio_a_over_b <= ab.rows[i - 1].ratio_a_over_b);
        }
    }
}

TEST_CASE("numbers format to the shortest round-trip form") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2.0) == "2");
    CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_number(42LL) == "42");
    CHECK(std::isnan(parse_number("nan")));
    std::mt19937_64 gen(2);
    for (int i = 0; i < 2000; ++i) {
        const double x = std::bit_cast<double>(gen());
        if (!std::isfinite(x)) {
            continue;
        }
        CHECK(parse_number(format_number(x)) == x);
    }
    CHECK_THROWS_AS(parse_number("1.5x"), error);
    CHECK(parse_plot_format("json") == plot_format::json);
    CHECK(parse_plot_format("csv") == plot_format::csv);
    CHECK_THROWS_AS(parse_plot_format("xml"), error);
}

TEST_CASE("CSV: schema, header comment and quoting") {
    std::vector<eval_row> rows = {{"baseline", 0, 0.0, 1.0, 0.25, 1.0}, {"steer", 16, 2.0, 1.0, 0.5, 0.9},
                                  {"temperature", 0, 0.0, 2.0, 0.6, 0.8}};
    const auto t = eval_table(rows);
    CHECK(t.columns == std::vector<std::string>{"layer", "beta", "mean_entropy", "valid_fraction"});
    CHECK(t.rows.size() == 2);
    const auto csv = to_csv(t);
    CHECK(csv.starts_with("# "));
    CHECK(csv.find("\r\nlayer,beta,mean_entropy,valid_fraction\r\n") != std::string::npos);
    CHECK(csv.find("16,2,0.5,0.9\r\n") != std::string::npos);
    CHECK(temperature_eval_table(rows).rows.size() == 1);

    table q;
    q.description = "quoting";
    q.columns = {"a", "b,c"};
    q.rows = {{"plain", "has \"quotes\""}, {"line\nbreak", ""}, {" lead", "x,y"}};
    const auto text = to_csv(q);
    CHECK(text.find("\"b,c\"") != std::string::npos);
    CHECK(text.find("\"has \"\"quotes\"\"\"") != std::string::npos);
    CHECK(parse_csv(text) == q);
}

TEST_CASE("CSV: round trip through a file, empty table is header only") {
    const auto dir = testing_support::temp_dir("csv");
    const auto curve = entropy_over_time(std::vector<std::vector<double>>{{0.1, 0.3}, {0.2, 0.1}});
    const auto t = entropy_table(curve);
    emit_plot_data(t, dir / "e.csv", plot_format::csv);
    CHECK(read_csv(dir / "e.csv") == t);
    CHECK(parse_number(t.rows[0][2]) == curve[0].ci.mean);

    table empty;
    empty.description = "nothing";
    empty.columns = {"x", "y"};
    emit_plot_data(empty, dir / "empty.csv", plot_format::csv);
    CHECK(testing_support::slurp(dir / "empty.csv") == "# nothing\r\nx,y\r\n");
    CHECK(read_csv(dir / "empty.csv") == empty);
    CHECK_THROWS_AS(parse_csv("# only a comment\r\n"), error);
    CHECK_THROWS_AS(parse_csv("a,b\r\n1\r\n"), error);
}

TEST_CASE("JSON output converts numbers and NaN") {
    table t;
    t.description = "d";
    t.columns = {"word", "value"};
    t.rows = {{"zorp", "1.5"}, {"blick", "nan"}};
    const auto j = to_json(t);
    CHECK(j["description"] == "d");
    CHECK(j["rows"][0]["word"] == "zorp");
    CHECK(j["rows"][0]["value"] == 1.5);
    CHECK(j["rows"][1]["value"].is_null());
    const auto dir = testing_support::temp_dir("json");
    emit_plot_data(t, dir / "t.json", plot_format::json);
    CHECK(nlohmann::json::parse(testing_support::slurp(dir / "t.json")) == j);
}

TEST_CASE("table builders") {
    const auto cum = cumulative_table({{0, 1}, {1}});
    CHECK(cum.columns == std::vector<std::string>{"run", "t", "cumulative"});
    CHECK(cum.rows == std::vector<std::vector<std::string>>{{"0", "1", "0"}, {"0", "2", "1"}, {"1", "1", "1"}});

    action_trace tr;
    tr.completion = "ab";
    tr.points = {{"a", 0.5, 4}, {"b", std::numeric_limits<double>::quiet_NaN(), 0}};
    const auto tt = trace_table(tr);
    CHECK(tt.rows[1] == std::vector<std::string>{"1", "b", "nan", "0"});

    temperature_result r;
    r.temperature = 2.0;
    r.validity_rate = 0.5;
    r.mean_entropy = 0.25;
    r.completed_runs = 3;
    r.logs.resize(4);
    const auto st = temperature_sweep_table({r});
    CHECK(st.rows[0] == std::vector<std::string>{"2", "0.5", "0.25", "3", "4"});

    const auto wr = word_frequency_report({"zorp zorp"}, {"zorp"}, no_stopwords());
    const auto wt = word_table(wr);
    CHECK(wt.columns.front() == "word");
    CHECK(wt.rows.size() == 1);
    CHECK(parse_number(wt.rows[0][5]) == wr.rows[0].ratio_a_over_b);
}

TEST_CASE("chosen completions follow step order") {
    auto a = log_with_actions({0, 1});
    auto b = log_with_actions({1});
    const auto c = chosen_completions({a, b});
    CHECK(c == std::vector<std::string>{"Action: Button 1", "Action: Button 2", "Action: Button 2"});
}
