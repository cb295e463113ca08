#include "east/analysis.hpp"

#include "east/error.hpp"
#include "east/hash.hpp"
#include "east/rng.hpp"
#include "east/steering.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace east {

std::vector<std::vector<long>> cumulative_action_traces(const std::vector<run_log> & logs) {
    if (logs.empty()) {
        throw error(errc::empty_dataset, "cumulative traces: no run logs");
    }
    std::vector<std::vector<long>> out;
    out.reserve(logs.size());
    for (const auto & log : logs) {
        if (log.bandit.n_arms() != 2) {
            throw error(errc::invalid_config, "cumulative traces need a two-arm bandit, run " + log.run_id + " has " +
                                                  std::to_string(log.bandit.n_arms()));
        }
        std::vector<long> trace;
        long sum = 0;
        for (const auto & s : log.steps) {
            sum += static_cast<long>(s.chosen_action);
            trace.push_back(sum);
        }
        out.push_back(std::move(trace));
    }
    return out;
}

namespace {

double mean_of(std::vector<double> v) {
    const double n = static_cast<double>(v.size());
    return canonical_sum(std::move(v)) / n;
}

double quantile_sorted(const std::vector<double> & v, double q) {
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

interval bootstrap_mean(const std::vector<double> & values, const bootstrap_options & options) {
    if (values.empty()) {
        throw error(errc::empty_dataset, "bootstrap: no values");
    }
    if (options.n_resamples < 1 || !(options.confidence > 0.0 && options.confidence < 1.0)) {
        throw error(errc::invalid_config, "bootstrap: need n_resamples >= 1 and confidence in (0, 1)");
    }
    interval out;
    out.mean = mean_of(values);
    rng r(options.seed);
    std::vector<double> means(options.n_resamples);
    std::vector<double> draw(values.size());
    for (auto & m : means) {
        for (auto & d : draw) {
            d = values[r.below(values.size())];
        }
        m = mean_of(draw);
    }
    std::sort(means.begin(), means.end());
    const double alpha = 1.0 - options.confidence;
    out.low = std::min(quantile_sorted(means, alpha / 2.0), out.mean);
    out.high = std::max(quantile_sorted(means, 1.0 - alpha / 2.0), out.mean);
    return out;
}

std::vector<entropy_point> entropy_over_time(const std::vector<std::vector<double>> & per_run,
                                             const bootstrap_options & options) {
    if (per_run.empty()) {
        throw error(errc::empty_dataset, "entropy over time: no runs");
    }
    size_t horizon = 0;
    for (const auto & r : per_run) {
        horizon = std::max(horizon, r.size());
    }
    std::vector<entropy_point> out;
    for (size_t t = 0; t < horizon; ++t) {
        std::vector<double> values;
        for (const auto & r : per_run) {
            if (t < r.size()) {
                values.push_back(r[t]);
            }
        }
        bootstrap_options o = options;
        o.seed = derive_seed(options.seed, stream::bootstrap, t);
        entropy_point p;
        p.t = static_cast<int>(t + 1);
        p.n_runs = values.size();
        p.ci = bootstrap_mean(values, o);
        out.push_back(p);
    }
    return out;
}

std::vector<entropy_point> entropy_over_time(const std::vector<run_log> & logs, const bootstrap_options & options) {
    std::vector<std::vector<double>> per_run;
    for (const auto & log : logs) {
        std::vector<double> h;
        for (const auto & s : log.steps) {
            h.push_back(s.entropy_nats);
        }
        per_run.push_back(std::move(h));
    }
    return entropy_over_time(per_run, options);
}

stopword_list load_stopwords(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error(errc::io, "cannot open stopword list " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    stopword_list out;
    out.id = path.filename().string() + "@sha256:" + sha256_hex(text);
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (!line.empty() && line.front() != '#') {
            std::transform(line.begin(), line.end(), line.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            out.words.insert(line);
        }
    }
    return out;
}

std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

namespace {

std::map<std::string, size_t> count_words(const std::vector<std::string> & corpus, const stopword_list & stopwords,
                                          size_t min_length, size_t & total) {
    std::map<std::string, size_t> counts;
    total = 0;
    for (const auto & text : corpus) {
        for (auto & w : tokenize_words(text)) {
            if (w.size() < min_length || stopwords.contains(w)) {
                continue;
            }
            ++counts[std::move(w)];
            ++total;
        }
    }
    return counts;
}

} // namespace

word_report word_frequency_report(const std::vector<std::string> & corpus_a, const std::vector<std::string> & corpus_b,
                                  const stopword_list & stopwords, size_t min_length) {
    word_report out;
    out.stopword_list_id = stopwords.id;
    const auto a = count_words(corpus_a, stopwords, min_length, out.total_a);
    const auto b = count_words(corpus_b, stopwords, min_length, out.total_b);
    if (out.total_a == 0 || out.total_b == 0) {
        throw error(errc::empty_dataset, "word frequencies: a corpus is empty after filtering");
    }
    std::set<std::string> vocab;
    for (const auto & [w, c] : a) {
        vocab.insert(w);
    }
    for (const auto & [w, c] : b) {
        vocab.insert(w);
    }
    const double na = static_cast<double>(out.total_a);
    const double nb = static_cast<double>(out.total_b);
    for (const auto & w : vocab) {
        word_row row;
        row.word = w;
        if (auto it = a.find(w); it != a.end()) {
            row.count_a = it->second;
        }
        if (auto it = b.find(w); it != b.end()) {
            row.count_b = it->second;
        }
        row.freq_a = static_cast<double>(row.count_a) / na;
        row.freq_b = static_cast<double>(row.count_b) / nb;
        const double sa = static_cast<double>(row.count_a + 1) / na;
        const double sb = static_cast<double>(row.count_b + 1) / nb;
        row.ratio_a_over_b = sa / sb;
        row.ratio_b_over_a = sb / sa;
        out.rows.push_back(std::move(row));
    }
    std::sort(out.rows.begin(), out.rows.end(), [](const word_row & x, const word_row & y) {
        if (x.ratio_a_over_b != y.ratio_a_over_b) {
            return x.ratio_a_over_b > y.ratio_a_over_b;
        }
        return x.word < y.word;
    });
    return out;
}

std::vector<std::string> chosen_completions(const std::vector<run_log> & logs) {
    std::vector<std::string> out;
    for (const auto & log : logs) {
        for (const auto & s : log.steps) {
            out.push_back(s.completions.at(s.chosen_completion));
        }
    }
    return out;
}

plot_format parse_plot_format(std::string_view s) {
    if (s == "csv") {
        return plot_format::csv;
    }
    if (s == "json") {
        return plot_format::json;
    }
    throw error(errc::invalid_config, "unknown plot format '" + std::string(s) + "' (csv|json)");
}

std::string format_number(double x) {
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string format_number(long long x) {
    return std::to_string(x);
}

double parse_number(std::string_view s) {
    if (s == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (s == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    if (s == "-inf") {
        return -std::numeric_limits<double>::infinity();
    }
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw error(errc::bad_request, "not a number: '" + std::string(s) + "'");
    }
    return v;
}

namespace {

std::string csv_field(const std::string & s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

void csv_row(std::string & out, const std::vector<std::string> & fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += csv_field(fields[i]);
    }
    out += "\r\n";
}

} // namespace

std::string to_csv(const table & t) {
    std::string out;
    if (!t.description.empty()) {
        std::string d = t.description;
        std::replace(d.begin(), d.end(), '\n', ' ');
        out += "# " + d + "\r\n";
    }
    csv_row(out, t.columns);
    for (const auto & r : t.rows) {
        if (r.size() != t.columns.size()) {
            throw error(errc::dim_mismatch, "table row width differs from header");
        }
        csv_row(out, r);
    }
    return out;
}

table parse_csv(std::string_view text) {
    table t;
    size_t i = 0;
    while (i < text.size() && text[i] == '#') {
        const size_t eol = text.find('\n', i);
        std::string_view line = text.substr(i, eol == std::string_view::npos ? std::string_view::npos : eol - i);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        line.remove_prefix(std::min<size_t>(line.size(), 2));
        if (!t.description.empty()) {
            t.description += ' ';
        }
        t.description += line;
        i = eol == std::string_view::npos ? text.size() : eol + 1;
    }

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            rec.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            rec.push_back(std::move(field));
            field.clear();
            records.push_back(std::move(rec));
            rec.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) {
        throw error(errc::truncated, "csv: unterminated quoted field");
    }
    if (any || !field.empty()) {
        rec.push_back(std::move(field));
        records.push_back(std::move(rec));
    }
    if (records.empty()) {
        throw error(errc::truncated, "csv: missing header row");
    }
    t.columns = std::move(records.front());
    for (size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.columns.size()) {
            throw error(errc::dim_mismatch, "csv: row " + std::to_string(r) + " has the wrong width");
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

table read_csv(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error(errc::io, "cannot open " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

nlohmann::json to_json(const table & t) {
    auto cell = [](const std::string & s) -> nlohmann::json {
        if (s == "nan") {
            return nullptr;
        }
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (!s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v)) {
            return v;
        }
        return s;
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto & r : t.rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (size_t i = 0; i < t.columns.size(); ++i) {
            obj[t.columns[i]] = cell(r.at(i));
        }
        rows.push_back(std::move(obj));
    }
    return {{"description", t.description}, {"columns", t.columns}, {"rows", std::move(rows)}};
}

void emit_plot_data(const table & t, const std::filesystem::path & path, plot_format format) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw error(errc::io, "cannot write " + path.string());
    }
    if (format == plot_format::csv) {
        out << to_csv(t);
    } else {
        out << to_json(t).dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
    if (!out) {
        throw error(errc::io, "write failed: " + path.string());
    }
}

table eval_table(const std::vector<eval_row> & rows) {
    table t;
    t.description = "layer: injection layer (0 = unsteered); beta: multiplier; mean_entropy: nats over prompts with a "
                    "valid completion; valid_fraction: mean over prompts";
    t.columns = {"layer", "beta", "mean_entropy", "valid_fraction"};
    for (const auto & r : rows) {
        if (r.kind == "temperature") {
            continue;
        }
        t.rows.push_back({format_number(static_cast<long long>(r.layer)), format_number(r.beta),
                          format_number(r.mean_entropy), format_number(r.valid_fraction)});
    }
    return t;
}

table temperature_eval_table(const std::vector<eval_row> & rows) {
    table t;
    t.description = "unsteered sampling at each temperature; mean_entropy in nats";
    t.columns = {"temperature", "mean_entropy", "valid_fraction"};
    for (const auto & r : rows) {
        if (r.kind == "temperature") {
            t.rows.push_back({format_number(r.temperature), format_number(r.mean_entropy),
                              format_number(r.valid_fraction)});
        }
    }
    return t;
}

table cumulative_table(const std::vector<std::vector<long>> & traces) {
    table t;
    t.description = "run: index; t: step; cumulative: arm-1 choices up to step t";
    t.columns = {"run", "t", "cumulative"};
    for (size_t k = 0; k < traces.size(); ++k) {
        for (size_t i = 0; i < traces[k].size(); ++i) {
            t.rows.push_back({format_number(static_cast<long long>(k)), format_number(static_cast<long long>(i + 1)),
                              format_number(static_cast<long long>(traces[k][i]))});
        }
    }
    return t;
}

table entropy_table(const std::vector<entropy_point> & curve) {
    table t;
    t.description = "t: step; mean_entropy in nats over runs reaching t; ci_low/ci_high: percentile bootstrap";
    t.columns = {"t", "n_runs", "mean_entropy", "ci_low", "ci_high"};
    for (const auto & p : curve) {
        t.rows.push_back({format_number(static_cast<long long>(p.t)), format_number(static_cast<long long>(p.n_runs)),
                          format_number(p.ci.mean), format_number(p.ci.low), format_number(p.ci.high)});
    }
    return t;
}

table word_table(const word_report & report) {
    table t;
    t.description = "smoothed ratios (count+1)/N; N_a=" + std::to_string(report.total_a) +
                    " N_b=" + std::to_string(report.total_b) + "; stopwords " + report.stopword_list_id;
    t.columns = {"word", "count_a", "count_b", "freq_a", "freq_b", "ratio_a_over_b", "ratio_b_over_a"};
    for (const auto & r : report.rows) {
        t.rows.push_back({r.word, format_number(static_cast<long long>(r.count_a)),
                          format_number(static_cast<long long>(r.count_b)), format_number(r.freq_a),
                          format_number(r.freq_b), format_number(r.ratio_a_over_b), format_number(r.ratio_b_over_a)});
    }
    return t;
}

table trace_table(const action_trace & trace) {
    table t;
    t.description = "index: generated token; probability of the target arm among valid continuations";
    t.columns = {"index", "token", "probability", "n_valid"};
    for (size_t i = 0; i < trace.points.size(); ++i) {
        const auto & p = trace.points[i];
        t.rows.push_back({format_number(static_cast<long long>(i)), p.token, format_number(p.probability),
                          format_number(static_cast<long long>(p.n_valid))});
    }
    return t;
}

table temperature_sweep_table(const std::vector<temperature_result> & results) {
    table t;
    t.description = "validity_rate: parsed / sampled completions; completed_runs: runs reaching the horizon";
    t.columns = {"temperature", "validity_rate", "mean_entropy", "completed_runs", "n_runs"};
    for (const auto & r : results) {
        t.rows.push_back({format_number(r.temperature), format_number(r.validity_rate), format_number(r.mean_entropy),
                          format_number(static_cast<long long>(r.completed_runs)),
                          format_number(static_cast<long long>(r.logs.size()))});
    }
    return t;
}

} // namespace east
