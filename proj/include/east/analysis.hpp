#pragma once

#include "east/experiment.hpp"
#include "east/runlog.hpp"

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace east {

// trace[k][t-1] = number of arm-1 choices in steps 1..t of run k.
// Throws error(invalid_config) unless every run is a two-arm run.
std::vector<std::vector<long>> cumulative_action_traces(const std::vector<run_log> & logs);

struct bootstrap_options {
    size_t n_resamples = 1000;
    double confidence = 0.95;
    uint64_t seed = 0;
};

struct interval {
    double mean = 0.0;
    double low = 0.0;
    double high = 0.0;
};

// Percentile bootstrap of the mean. The interval is widened to contain the
// point mean when a small resample count would leave it outside.
interval bootstrap_mean(const std::vector<double> & values, const bootstrap_options & options);

struct entropy_point {
    int t = 0;
    size_t n_runs = 0;   // runs that reached step t
    interval ci;
};

// per-timestep mean entropy over the runs that reached that step
std::vector<entropy_point> entropy_over_time(const std::vector<run_log> & logs, const bootstrap_options & options = {});
std::vector<entropy_point> entropy_over_time(const std::vector<std::vector<double>> & per_run,
                                             const bootstrap_options & options = {});

struct stopword_list {
    std::string id;   // file name plus sha256 of its contents
    std::set<std::string, std::less<>> words;

    bool contains(std::string_view w) const { return words.find(w) != words.end(); }
};

stopword_list load_stopwords(const std::filesystem::path & path);

// lowercase ASCII runs of letters; anything else separates words
std::vector<std::string> tokenize_words(std::string_view text);

struct word_row {
    std::string word;
    size_t count_a = 0;
    size_t count_b = 0;
    double freq_a = 0.0;
    double freq_b = 0.0;
    double ratio_a_over_b = 0.0;
    double ratio_b_over_a = 0.0;

    bool operator==(const word_row &) const = default;
};

// Smoothed frequency of a word in a corpus of N kept tokens:
//   f~ = count / N + 1 / N
// ratio_a_over_b = f~_a / f~_b. Rows sorted by ratio_a_over_b descending, then word.
struct word_report {
    std::vector<word_row> rows;
    size_t total_a = 0;
    size_t total_b = 0;
    std::string stopword_list_id;
};

// Throws error(empty_dataset) when a corpus has no word left after filtering.
word_report word_frequency_report(const std::vector<std::string> & corpus_a,
                                  const std::vector<std::string> & corpus_b, const stopword_list & stopwords,
                                  size_t min_length = 3);

// chosen completions of every step, the texts the agent actually committed to
std::vector<std::string> chosen_completions(const std::vector<run_log> & logs);

// Plot-ready table. Cells are kept as text; numbers use the shortest
// round-trip decimal form so a reload reproduces them exactly.
struct table {
    std::string description;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    bool operator==(const table &) const = default;
};

enum class plot_format { csv, json };

plot_format parse_plot_format(std::string_view s);

std::string format_number(double x);
std::string format_number(long long x);
double parse_number(std::string_view s);

// CSV: "# <description>" comment line, a header row, then rows (RFC-4180
// quoting). JSON: {"description", "columns", "rows": [{column: value}]}.
void emit_plot_data(const table & t, const std::filesystem::path & path, plot_format format);
std::string to_csv(const table & t);
table parse_csv(std::string_view text);
table read_csv(const std::filesystem::path & path);
nlohmann::json to_json(const table & t);

// layer,beta,mean_entropy,valid_fraction for the baseline/steer/control rows
table eval_table(const std::vector<eval_row> & rows);
// temperature,mean_entropy,valid_fraction for temperature rows
table temperature_eval_table(const std::vector<eval_row> & rows);
table cumulative_table(const std::vector<std::vector<long>> & traces);
table entropy_table(const std::vector<entropy_point> & curve);
table word_table(const word_report & report);
table trace_table(const action_trace & trace);
table temperature_sweep_table(const std::vector<temperature_result> & results);

} // namespace east
