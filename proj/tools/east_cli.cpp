// east: command-line front end over the library. Each subcommand loads the
// config, runs one library pipeline and writes its outputs plus manifest.json
// under --out.

#include "east/analysis.hpp"
#include "east/config.hpp"
#include "east/error.hpp"
#include "east/experiment.hpp"
#include "east/hash.hpp"
#include "east/log.hpp"
#include "east/prompting.hpp"
#include "east/remote_backend.hpp"
#include "east/steering.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifndef EAST_GIT_DESCRIBE
#define EAST_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct context {
    std::string command;
    std::vector<std::string> argv;
    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    int jobs = 0;
    fs::path out = "out";

    json tree;
    east::experiment_config cfg;
    std::vector<fs::path> outputs;
    std::map<std::string, std::string> inputs;   // path -> sha256
    size_t transport_failures = 0;

    void check_logs(const std::vector<east::run_log> & logs) {
        for (const auto & l : logs) {
            transport_failures += l.termination == "transport_error" ? 1 : 0;
        }
    }

    std::string ext() const { return cfg.format == east::plot_format::csv ? ".csv" : ".json"; }

    void table(const east::table & t, const std::string & stem) {
        const auto path = out / (stem + ext());
        east::emit_plot_data(t, path, cfg.format);
        outputs.push_back(path);
    }

    void input(const fs::path & p) {
        if (fs::is_regular_file(p)) {
            inputs[p.string()] = east::sha256_file(p);
        }
    }
};

void collect_files(const fs::path & p, std::vector<fs::path> & into) {
    if (fs::is_directory(p)) {
        for (const auto & e : fs::recursive_directory_iterator(p)) {
            if (e.is_regular_file()) {
                into.push_back(e.path());
            }
        }
    } else {
        into.push_back(p);
    }
}

void write_manifest(const context & c) {
    std::vector<fs::path> files;
    for (const auto & p : c.outputs) {
        collect_files(p, files);
    }
    std::sort(files.begin(), files.end());
    json outputs = json::object();
    for (const auto & f : files) {
        outputs[fs::relative(f, c.out).generic_string()] = east::sha256_file(f);
    }
    json m = {
        {"command", c.command},
        {"argv", c.argv},
        {"seed", c.seed},
        {"jobs", c.jobs},
        {"config", c.tree},
        {"git_describe", EAST_GIT_DESCRIBE},
        {"inputs", c.inputs},
        {"outputs", outputs},
    };
    std::ofstream f(c.out / "manifest.json");
    f << m.dump(2) << '\n';
    if (!f) {
        throw east::error(east::errc::io, "cannot write manifest");
    }
}

std::optional<east::steering_spec> load_steering(context & c, const std::string & path, size_t dim) {
    if (path.empty()) {
        return std::nullopt;
    }
    c.input(path);
    return east::load_vector(path, dim).to_spec(c.cfg.multiplier, c.cfg.layer);
}

void write_traces(context & c, const std::vector<east::run_log> & logs, const std::string & suffix) {
    if (logs.front().bandit.n_arms() == 2) {
        c.table(east::cumulative_table(east::cumulative_action_traces(logs)), "cumulative" + suffix);
    }
    east::bootstrap_options b;
    b.seed = east::derive_seed(c.seed, east::stream::bootstrap);
    c.table(east::entropy_table(east::entropy_over_time(logs, b)), "entropy" + suffix);
}

void cmd_run(context & c) {
    auto model = east::make_backend(c.cfg.backend);
    const auto steering = load_steering(c, c.cfg.vector, model->hidden_dim());
    const auto logs = east::run_batch(c.cfg.runs, c.cfg.bandit, c.cfg.scenario, *model, c.cfg.sampling, steering,
                                      c.cfg.m, c.seed, c.jobs);
    c.check_logs(logs);
    east::write_runs(logs, c.out);
    c.outputs.push_back(c.out / "runs");
    write_traces(c, logs, "");
}

void cmd_collect(context & c) {
    auto model = east::make_backend(c.cfg.backend);
    const auto steering = load_steering(c, c.cfg.vector, model->hidden_dim());
    east::interaction_options opt{c.cfg.m, c.cfg.capture_layers};
    auto data = east::collect_dataset(c.cfg.runs, c.cfg.bandit, c.cfg.scenario, *model, c.cfg.sampling, opt, c.seed,
                                      c.jobs, steering);
    c.check_logs(data.logs);
    east::write_collection(data, c.cfg.capture_layers, c.out);
    c.outputs.push_back(c.out / "runs");
    json info = {{"n_runs", data.logs.size()}, {"n_excluded", data.n_excluded}, {"layers", json::array()}};
    for (size_t i = 0; i < data.datasets.size(); ++i) {
        const auto & ds = data.datasets[i];
        const auto sidecar = c.out / ("activations_L" + std::to_string(ds.layer) + ".eact");
        if (fs::exists(sidecar)) {
            c.outputs.push_back(sidecar);
        }
        info["layers"].push_back({{"layer", ds.layer},
                                  {"dim", ds.dim()},
                                  {"n_samples", ds.n_samples()},
                                  {"dataset_hash", ds.hash()},
                                  {"sidecar", sidecar.filename().string()}});
    }
    std::ofstream(c.out / "dataset.json") << info.dump(2) << '\n';
    c.outputs.push_back(c.out / "dataset.json");
    write_traces(c, data.logs, "");
}

void cmd_vector(context & c, const fs::path & dataset_dir) {
    const auto logs = east::read_runs(dataset_dir);
    std::vector<std::pair<int, fs::path>> sidecars;
    for (const auto & e : fs::directory_iterator(dataset_dir)) {
        const auto name = e.path().filename().string();
        if (name.starts_with("activations_L") && name.ends_with(".eact")) {
            sidecars.emplace_back(std::stoi(name.substr(13)), e.path());
        }
    }
    if (sidecars.empty()) {
        throw east::error(east::errc::empty_dataset, "no activation sidecar in " + dataset_dir.string());
    }
    std::sort(sidecars.begin(), sidecars.end());
    for (const auto & [layer, path] : sidecars) {
        c.input(path);
        const auto ds = east::dataset_from_logs(logs, east::read_sidecar(path), layer);
        const auto v = east::compute_steering_vector(ds);
        const auto file = c.out / ("vector_L" + std::to_string(layer) + ".east");
        east::save_vector(v, file);
        c.outputs.push_back(file);
    }
}

void cmd_shuffle(context & c, const fs::path & vector_path) {
    c.input(vector_path);
    const auto v = east::load_vector(vector_path);
    const auto file = c.out / (vector_path.stem().string() + "_shuffled.east");
    east::save_vector(east::shuffle_features(v, c.seed), file);
    c.outputs.push_back(file);
}

std::vector<east::transcript> eval_prompts(context & c) {
    std::vector<east::transcript> prompts;
    if (!c.cfg.eval_prompts.empty()) {
        c.input(c.cfg.eval_prompts);
        prompts = east::load_transcripts(c.cfg.eval_prompts);
    } else {
        if (c.cfg.eval_run_dirs.empty()) {
            throw east::error(east::errc::invalid_config, "eval needs eval.prompts or eval.run_dirs");
        }
        std::vector<std::vector<east::run_log>> groups;
        for (const auto & d : c.cfg.eval_run_dirs) {
            groups.push_back(east::read_runs(d));
        }
        prompts = east::sample_eval_prompts(groups, c.cfg.n_prompts, c.seed);
    }
    if (prompts.empty()) {
        throw east::error(east::errc::empty_dataset, "evaluation prompt set is empty");
    }
    const auto path = c.out / "prompts.jsonl";
    east::save_transcripts(prompts, path.string());
    c.outputs.push_back(path);
    return prompts;
}

east::eval_options eval_opts(const context & c) {
    east::eval_options o;
    o.params = c.cfg.sampling;
    o.params.seed = c.seed;
    o.n_arms = c.cfg.bandit.n_arms();
    return o;
}

void cmd_eval(context & c) {
    if (c.cfg.vector.empty()) {
        throw east::error(east::errc::invalid_config, "eval needs steering.vector");
    }
    auto model = east::make_backend(c.cfg.backend);
    const auto prompts = eval_prompts(c);
    c.input(c.cfg.vector);
    std::map<int, east::steering_vector> vectors{{c.cfg.layer, east::load_vector(c.cfg.vector, model->hidden_dim())}};
    const auto rows = east::eval_steering(prompts, *model, c.cfg.grid, vectors, eval_opts(c));
    c.table(east::eval_table(rows), "eval");
    if (!c.cfg.grid.temperatures.empty()) {
        c.table(east::temperature_eval_table(rows), "temperature");
    }
    if (!c.cfg.control_vector.empty()) {
        c.input(c.cfg.control_vector);
        std::map<int, east::steering_vector> control{
            {c.cfg.layer, east::load_vector(c.cfg.control_vector, model->hidden_dim())}};
        auto o = eval_opts(c);
        o.include_temperatures = false;
        o.steer_kind = "control";
        c.table(east::eval_table(east::eval_steering(prompts, *model, c.cfg.grid, control, o)), "control");
    }
}

void cmd_sweep_layers(context & c) {
    if (c.cfg.vector_dir.empty()) {
        throw east::error(east::errc::invalid_config, "sweep-layers needs eval.vector_dir");
    }
    auto model = east::make_backend(c.cfg.backend);
    const auto prompts = eval_prompts(c);
    std::map<int, east::steering_vector> vectors;
    for (int layer : c.cfg.grid.layers) {
        const fs::path p = fs::path(c.cfg.vector_dir) / ("vector_L" + std::to_string(layer) + ".east");
        c.input(p);
        vectors.emplace(layer, east::load_vector(p, model->hidden_dim()));
    }
    auto o = eval_opts(c);
    o.include_temperatures = false;
    c.table(east::eval_table(east::eval_steering(prompts, *model, c.cfg.grid, vectors, o)), "layers");
}

void cmd_sweep_temp(context & c) {
    auto model = east::make_backend(c.cfg.backend);
    const auto results = east::temperature_sweep(c.cfg.bandit, c.cfg.scenario, *model, c.cfg.sampling,
                                                 c.cfg.sweep_temperatures, c.cfg.sweep_runs, c.cfg.m, c.seed, c.jobs);
    c.table(east::temperature_sweep_table(results), "sweep_temp");
    for (const auto & r : results) {
        c.check_logs(r.logs);
        const std::string tag = "_T" + east::format_number(r.temperature);
        east::write_runs(r.logs, c.out / ("T" + east::format_number(r.temperature)));
        c.outputs.push_back(c.out / ("T" + east::format_number(r.temperature)));
        if (r.logs.front().bandit.n_arms() == 2) {
            c.table(east::cumulative_table(east::cumulative_action_traces(r.logs)), "cumulative" + tag);
        }
    }
}

void cmd_trace(context & c) {
    auto model = east::make_backend(c.cfg.backend);
    const auto steering = load_steering(c, c.cfg.vector, model->hidden_dim());
    east::transcript prompt = east::transcript::start(c.cfg.scenario, c.cfg.bandit.horizon);
    if (!c.cfg.trace_prompt.empty()) {
        c.input(c.cfg.trace_prompt);
        const auto all = east::load_transcripts(c.cfg.trace_prompt);
        if (all.empty()) {
            throw east::error(east::errc::empty_dataset, "trace prompt file is empty");
        }
        prompt = all.front();
    }
    auto params = c.cfg.sampling;
    params.seed = c.seed;
    const auto trace = east::action_probability_trace(*model, prompt, params, c.cfg.trace_s, c.cfg.trace_target_arm,
                                                      steering, c.cfg.bandit.n_arms());
    c.table(east::trace_table(trace), "trace");
}

std::vector<std::string> read_corpus(context & c, const fs::path & p) {
    if (fs::is_directory(p)) {
        return east::chosen_completions(east::read_runs(p));
    }
    std::ifstream in(p);
    if (!in) {
        throw east::error(east::errc::io, "cannot open corpus " + p.string());
    }
    c.input(p);
    std::vector<std::string> docs;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            docs.push_back(line);
        }
    }
    return docs;
}

void cmd_words(context & c) {
    if (c.cfg.corpus_a.empty() || c.cfg.corpus_b.empty()) {
        throw east::error(east::errc::invalid_config, "words needs words.corpus_a and words.corpus_b");
    }
    c.input(c.cfg.stopwords);
    const auto stop = east::load_stopwords(c.cfg.stopwords);
    const auto report = east::word_frequency_report(read_corpus(c, c.cfg.corpus_a), read_corpus(c, c.cfg.corpus_b),
                                                    stop, c.cfg.min_word_length);
    c.table(east::word_table(report), "words");
}

void cmd_serve(context & c) {
    auto model = east::make_backend(c.cfg.backend);
    // block the signals before the server threads start so only sigwait sees them
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    east::reference_server server(*model);
    const int port = server.start(c.cfg.serve_host, c.cfg.serve_port);
    std::cout << json{{"host", c.cfg.serve_host}, {"port", port}, {"backend", model->id()}}.dump() << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
}

int fail(east::errc code, const std::string & message) {
    std::cerr << json{{"error", {{"code", east::errc_name(code)}, {"message", message}}}}.dump() << '\n';
    return code == east::errc::invalid_config ? 2 : 1;
}

} // namespace

int main(int argc, char ** argv) {
    east::init_logging();

    CLI::App app{"Entropic activation steering experiments"};
    app.require_subcommand(1, 1);

    context c;
    for (int i = 0; i < argc; ++i) {
        c.argv.emplace_back(argv[i]);
    }
    std::string config_path;
    std::string out = "out";
    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--seed", c.seed, "master seed");
    app.add_option("--jobs", c.jobs, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--out", out, "output directory");
    app.add_option("--set", c.overrides, "override a config key, dotted.key=value (repeatable)");

    std::string dataset_dir;
    std::string vector_path;
    const std::vector<std::string> names = {"run",          "collect",    "vector", "shuffle", "eval", "sweep-temp",
                                            "sweep-layers", "trace",      "words",  "serve-reference"};
    const std::map<std::string, std::string> help = {
        {"run", "run interactions and write run logs"},
        {"collect", "run interactions with activation capture"},
        {"vector", "compute steering vectors from a collected dataset"},
        {"shuffle", "write a feature-shuffled control vector"},
        {"eval", "mean action entropy over an evaluation prompt set"},
        {"sweep-temp", "interactions across sampling temperatures"},
        {"sweep-layers", "evaluation over layers and multipliers"},
        {"trace", "per-token action probability along one completion"},
        {"words", "relative word frequencies of two corpora"},
        {"serve-reference", "serve the configured backend over the wire protocol"},
    };
    for (const auto & n : names) {
        auto * sub = app.add_subcommand(n, help.at(n));
        sub->fallthrough();
        if (n == "vector") {
            sub->add_option("--dataset", dataset_dir, "directory written by collect")->required();
        } else if (n == "shuffle") {
            sub->add_option("--vector", vector_path, "vector file to shuffle")->required();
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        return fail(east::errc::invalid_config, e.what());
    }

    c.command = app.get_subcommands().front()->get_name();
    c.out = out;
    if (!config_path.empty()) {
        c.config_path = config_path;
    }

    try {
        c.tree = east::load_config(c.config_path ? std::optional<fs::path>(*c.config_path) : std::nullopt, c.overrides);
        c.cfg = east::parse_config(c.tree);
    } catch (const east::error & e) {
        return fail(east::errc::invalid_config, e.what());
    }

    try {
        if (c.command != "serve-reference") {
            fs::create_directories(c.out);
        }
        spdlog::info("east {} seed={} out={}", c.command, c.seed, c.out.string());
        if (c.command == "run") {
            cmd_run(c);
        } else if (c.command == "collect") {
            cmd_collect(c);
        } else if (c.command == "vector") {
            cmd_vector(c, dataset_dir);
        } else if (c.command == "shuffle") {
            cmd_shuffle(c, vector_path);
        } else if (c.command == "eval") {
            cmd_eval(c);
        } else if (c.command == "sweep-temp") {
            cmd_sweep_temp(c);
        } else if (c.command == "sweep-layers") {
            cmd_sweep_layers(c);
        } else if (c.command == "trace") {
            cmd_trace(c);
        } else if (c.command == "words") {
            cmd_words(c);
        } else {
            cmd_serve(c);
            return 0;
        }
        std::ofstream(c.out / "config.json") << c.tree.dump(2) << '\n';
        c.outputs.push_back(c.out / "config.json");
        write_manifest(c);
        if (c.transport_failures > 0) {
            // partial logs are already on disk, marked transport_error
            return fail(east::errc::transport,
                        std::to_string(c.transport_failures) + " run(s) aborted by backend transport failures");
        }
    } catch (const east::error & e) {
        return fail(e.code(), e.what());
    } catch (const std::exception & e) {
        return fail(east::errc::io, e.what());
    }
    return 0;
}
