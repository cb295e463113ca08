#include "east/experiment.hpp"

#include "east/action_parser.hpp"
#include "east/error.hpp"
#include "east/hash.hpp"
#include "east/rng.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <limits>

namespace east {

namespace {

nlohmann::json steering_ref(const std::optional<steering_spec> & steering) {
    if (!steering) {
        return nullptr;
    }
    const auto & v = steering->vector.values;
    const std::string_view bytes(reinterpret_cast<const char *>(v.data()), v.size() * sizeof(float));
    return {
        {"layer", steering->layer},
        {"multiplier", steering->multiplier},
        {"dim", v.size()},
        {"vector_sha256", sha256_hex(bytes)},
    };
}

int thread_count(int jobs) {
    return jobs > 0 ? jobs : omp_get_max_threads();
}

template <typename Fn>
void parallel_for(size_t n, int jobs, Fn && fn) {
    std::exception_ptr failure;
    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count(jobs))
    for (long i = 0; i < count; ++i) {
        try {
            fn(static_cast<size_t>(i));
        } catch (...) {
#pragma omp critical(east_experiment_failure)
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace

run_result run_interaction(const bandit_config & bandit, scenario_kind scenario, const backend & model,
                           const sampling_params & params, const std::optional<steering_spec> & steering,
                           uint64_t seed, const interaction_options & options) {
    bandit.validate();
    params.validate();
    if (options.m < 1) {
        throw error(errc::invalid_config, "run_interaction: m must be >= 1");
    }
    if (steering) {
        check_steering(model, *steering);
    }
    for (int layer : options.capture_layers) {
        check_layer(model, layer);
    }

    run_result out;
    run_log & log = out.log;
    log.run_id = "run-" + std::to_string(seed);
    log.scenario = scenario;
    log.bandit = bandit;
    log.bandit.seed = derive_seed(seed, stream::env);
    log.backend_id = model.id();
    log.steering = steering_ref(steering);
    log.params = params;
    log.m = options.m;
    log.seed = seed;
    out.activations.resize(options.capture_layers.size());

    bandit_env env(log.bandit);
    const size_t n_arms = bandit.n_arms();
    transcript prompt = transcript::start(scenario, bandit.horizon);

    try {
        for (int t = 1; t <= bandit.horizon; ++t) {
            std::vector<std::vector<float>> captured;
            for (int layer : options.capture_layers) {
                captured.push_back(model.capture_prompt_activation(prompt, layer).values);
            }

            sampling_params step_params = params;
            step_params.seed = derive_seed(seed, stream::step, static_cast<uint64_t>(t));
            auto sample = sample_policy(model, prompt, step_params, steering, options.m, n_arms);
            if (sample.dist.all_invalid()) {
                log.termination = "all_invalid";
                log.termination_detail = "no completion parsed at step " + std::to_string(t);
                log.terminal = terminal_attempt{t, sample.dist.n_total, std::move(sample.completions)};
                break;
            }

            const auto sel = select_completion(sample, derive_seed(seed, stream::select, static_cast<uint64_t>(t)));
            const auto r = env.pull(sel.arm);

            step_record rec;
            rec.t = t;
            rec.chosen_action = sel.arm;
            rec.chosen_completion = sel.completion_index;
            rec.reward = r.value;
            rec.feedback = feedback_text(r, scenario);
            rec.counts = sample.dist.counts;
            rec.n_valid = sample.dist.n_valid;
            rec.n_total = sample.dist.n_total;
            rec.entropy_nats = sample.dist.entropy_nats;
            rec.sampling_seed = step_params.seed;

            prompt = append_turn(prompt, sample.completions[sel.completion_index], rec.feedback);
            rec.completions = std::move(sample.completions);
            log.steps.push_back(std::move(rec));
            for (size_t li = 0; li < captured.size(); ++li) {
                out.activations[li].push_back(std::move(captured[li]));
            }
        }
    } catch (const error & e) {
        if (e.code() != errc::transport) {
            throw;
        }
        log.termination = "transport_error";
        log.termination_detail = e.what();
    }
    return out;
}

std::vector<run_log> run_batch(size_t n_runs, const bandit_config & bandit, scenario_kind scenario,
                               const backend & model, const sampling_params & params,
                               const std::optional<steering_spec> & steering, size_t m, uint64_t seed, int jobs) {
    if (n_runs < 1) {
        throw error(errc::invalid_config, "run_batch: need at least one run");
    }
    std::vector<run_log> logs(n_runs);
    parallel_for(n_runs, jobs, [&](size_t k) {
        logs[k] = run_interaction(bandit, scenario, model, params, steering, derive_seed(seed, stream::run, k),
                                  {m, {}}).log;
        logs[k].run_id = "run-" + std::to_string(k);
    });
    return logs;
}

collected_dataset collect_dataset(size_t n_runs, const bandit_config & bandit, scenario_kind scenario,
                                  const backend & model, const sampling_params & params,
                                  const interaction_options & options, uint64_t seed, int jobs,
                                  const std::optional<steering_spec> & steering) {
    if (n_runs < 1) {
        throw error(errc::invalid_config, "collect_dataset: need at least one run");
    }
    if (options.capture_layers.empty()) {
        throw error(errc::invalid_config, "collect_dataset: no capture layer");
    }
    std::vector<run_result> results(n_runs);
    parallel_for(n_runs, jobs, [&](size_t k) {
        results[k] = run_interaction(bandit, scenario, model, params, steering,
                                     derive_seed(seed, stream::run, k), options);
        results[k].log.run_id = "run-" + std::to_string(k);
    });

    collected_dataset out;
    out.dim = model.hidden_dim();
    out.datasets.resize(options.capture_layers.size());
    for (size_t li = 0; li < options.capture_layers.size(); ++li) {
        out.datasets[li].layer = options.capture_layers[li];
        out.datasets[li].scenario = scenario;
    }
    for (auto & r : results) {
        if (r.log.terminal) {
            ++out.n_excluded;
        }
        for (size_t li = 0; li < options.capture_layers.size(); ++li) {
            activation_run run;
            for (size_t s = 0; s < r.log.steps.size(); ++s) {
                run.samples.push_back({std::move(r.activations[li][s]), r.log.steps[s].entropy_nats});
            }
            // a run that failed at its first step contributes nothing
            if (!run.samples.empty()) {
                out.datasets[li].runs.push_back(std::move(run));
            }
        }
        out.logs.push_back(std::move(r.log));
    }
    for (const auto & ds : out.datasets) {
        if (ds.n_samples() > 0) {
            out.dim = ds.dim();
        }
    }
    return out;
}

void write_collection(collected_dataset & c, const std::vector<int> & layers, const std::filesystem::path & dir) {
    std::filesystem::create_directories(dir / "runs");
    for (size_t li = 0; li < layers.size(); ++li) {
        const auto & ds = c.datasets.at(li);
        if (c.dim == 0) {
            break;   // nothing captured and the backend did not report a width
        }
        sidecar_writer writer(dir / ("activations_L" + std::to_string(layers[li]) + ".eact"), c.dim);
        size_t run_index = 0;
        for (auto & log : c.logs) {
            if (log.steps.empty()) {
                continue;
            }
            const auto & run = ds.runs.at(run_index++);
            for (size_t s = 0; s < log.steps.size(); ++s) {
                const uint64_t off = writer.append(run.samples.at(s).activation);
                // rows line up across layers, so every sidecar shares offsets
                log.steps[s].activation_offset = off;
            }
        }
    }
    write_runs(c.logs, dir);
}

void write_runs(const std::vector<run_log> & logs, const std::filesystem::path & dir) {
    std::filesystem::create_directories(dir / "runs");
    for (size_t k = 0; k < logs.size(); ++k) {
        write_runlog(logs[k], dir / "runs" / ("run_" + std::to_string(k) + ".jsonl"));
    }
}

std::vector<run_log> read_runs(const std::filesystem::path & dir) {
    const auto root = std::filesystem::is_directory(dir / "runs") ? dir / "runs" : dir;
    if (!std::filesystem::is_directory(root)) {
        throw error(errc::io, "not a directory: " + root.string());
    }
    std::map<size_t, std::filesystem::path> files;
    for (const auto & entry : std::filesystem::directory_iterator(root)) {
        const auto name = entry.path().filename().string();
        if (name.size() > 10 && name.starts_with("run_") && name.ends_with(".jsonl")) {
            const auto digits = name.substr(4, name.size() - 10);
            if (digits.find_first_not_of("0123456789") == std::string::npos) {
                files[std::stoul(digits)] = entry.path();
            }
        }
    }
    if (files.empty()) {
        throw error(errc::empty_dataset, "no run logs in " + root.string());
    }
    std::vector<run_log> out;
    for (const auto & [k, path] : files) {
        out.push_back(read_runlog(path));
    }
    return out;
}

activation_dataset dataset_from_logs(const std::vector<run_log> & logs, const sidecar & activations, int layer) {
    activation_dataset ds;
    ds.layer = layer;
    if (!logs.empty()) {
        ds.scenario = logs.front().scenario;
    }
    for (const auto & log : logs) {
        activation_run run;
        for (const auto & s : log.steps) {
            if (!s.activation_offset) {
                throw error(errc::bad_request, "run log step has no activation offset");
            }
            const auto row = activations.row_at_offset(*s.activation_offset);
            run.samples.push_back({std::vector<float>(row.begin(), row.end()), s.entropy_nats});
        }
        if (!run.samples.empty()) {
            ds.runs.push_back(std::move(run));
        }
    }
    return ds;
}

void sweep_grid::validate() const {
    if (layers.empty() || multipliers.empty()) {
        throw error(errc::invalid_config, "sweep grid: layers and multipliers must be nonempty");
    }
    if (m_eval < 1) {
        throw error(errc::invalid_config, "sweep grid: m_eval must be >= 1");
    }
}

eval_row eval_cell(const std::vector<transcript> & prompts, const backend & model, const sampling_params & params,
                   const std::optional<steering_spec> & steering, size_t m_eval, size_t n_arms) {
    if (prompts.empty()) {
        throw error(errc::invalid_config, "eval: empty prompt set");
    }
    std::vector<action_distribution> dists(prompts.size());
    parallel_for(prompts.size(), 0, [&](size_t j) {
        sampling_params p = params;
        p.seed = derive_seed(params.seed, stream::eval, j);
        dists[j] = estimate_distribution(model, prompts[j], p, steering, m_eval, n_arms);
    });
    double entropy_sum = 0.0;
    size_t entropy_n = 0;
    double valid_sum = 0.0;
    for (const auto & d : dists) {
        valid_sum += valid_fraction(d);
        if (!d.all_invalid()) {
            entropy_sum += d.entropy_nats;
            ++entropy_n;
        }
    }
    eval_row row;
    row.temperature = params.temperature;
    row.mean_entropy = entropy_n > 0 ? entropy_sum / static_cast<double>(entropy_n)
                                     : std::numeric_limits<double>::quiet_NaN();
    row.valid_fraction = valid_sum / static_cast<double>(prompts.size());
    return row;
}

std::vector<eval_row> eval_steering(const std::vector<transcript> & prompts, const backend & model,
                                    const sweep_grid & grid, const std::map<int, steering_vector> & vectors,
                                    const eval_options & options) {
    grid.validate();
    if (vectors.empty()) {
        throw error(errc::invalid_config, "eval: no steering vector");
    }
    std::vector<eval_row> rows;
    if (options.include_baseline) {
        auto row = eval_cell(prompts, model, options.params, std::nullopt, grid.m_eval, options.n_arms);
        row.kind = "baseline";
        rows.push_back(row);
    }
    for (int layer : grid.layers) {
        const steering_vector * v = nullptr;
        if (auto it = vectors.find(layer); it != vectors.end()) {
            v = &it->second;
        } else if (vectors.size() == 1) {
            v = &vectors.begin()->second;
        } else {
            throw error(errc::invalid_config, "eval: no steering vector for layer " + std::to_string(layer));
        }
        for (double beta : grid.multipliers) {
            auto row = eval_cell(prompts, model, options.params, v->to_spec(beta, layer), grid.m_eval, options.n_arms);
            row.kind = options.steer_kind;
            row.layer = layer;
            row.beta = beta;
            rows.push_back(row);
        }
    }
    if (options.include_temperatures) {
        for (double tau : grid.temperatures) {
            sampling_params p = options.params;
            p.temperature = tau;
            auto row = eval_cell(prompts, model, p, std::nullopt, grid.m_eval, options.n_arms);
            row.kind = "temperature";
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<transcript> sample_eval_prompts(const std::vector<std::vector<run_log>> & groups, size_t n, uint64_t seed) {
    std::vector<const std::vector<run_log> *> usable;
    for (const auto & g : groups) {
        bool any = false;
        for (const auto & log : g) {
            any = any || !log.steps.empty();
        }
        if (any) {
            usable.push_back(&g);
        }
    }
    if (usable.empty()) {
        throw error(errc::empty_dataset, "sample_eval_prompts: no logged steps");
    }
    rng r(derive_seed(seed, stream::prompt_set));
    std::vector<transcript> out;
    out.reserve(n);
    while (out.size() < n) {
        const auto & group = *usable[r.below(usable.size())];
        const auto & log = group[r.below(group.size())];
        if (log.steps.empty()) {
            continue;
        }
        const int t = 1 + static_cast<int>(r.below(log.steps.size()));
        out.push_back(transcript_at(log, t));
    }
    return out;
}

action_trace action_probability_trace(const backend & model, const transcript & t, const sampling_params & params,
                                      size_t s, size_t target_arm, const std::optional<steering_spec> & steering,
                                      size_t n_arms) {
    if (s < 1) {
        throw error(errc::invalid_config, "trace: s must be >= 1");
    }
    if (target_arm >= n_arms) {
        throw error(errc::arm_out_of_range, "trace: target arm out of range");
    }
    sampling_params base = params;
    base.seed = derive_seed(params.seed, stream::trace);
    const auto g = model.generate(t, base, steering);

    std::vector<std::string> tokens;
    if (g.token_texts) {
        tokens = *g.token_texts;
    } else {
        for (char c : g.text) {
            tokens.emplace_back(1, c);
        }
    }

    action_trace out;
    out.completion = g.text;
    std::string prefix;
    for (size_t k = 0; k < tokens.size(); ++k) {
        prefix += tokens[k];
        sampling_params p = params;
        p.seed = derive_seed(params.seed, stream::trace, k + 1);
        const auto conts = model.generate_n(t, p, steering, s, prefix);
        size_t valid = 0;
        size_t hits = 0;
        for (const auto & c : conts) {
            if (!is_valid_utf8(c.text)) {
                continue;
            }
            if (auto a = parse_action(c.text, t.scenario, n_arms)) {
                ++valid;
                hits += a->arm == target_arm ? 1 : 0;
            }
        }
        trace_point pt;
        pt.token = tokens[k];
        pt.n_valid = valid;
        pt.probability = valid > 0 ? static_cast<double>(hits) / static_cast<double>(valid)
                                   : std::numeric_limits<double>::quiet_NaN();
        out.points.push_back(std::move(pt));
    }
    return out;
}

std::vector<temperature_result> temperature_sweep(const bandit_config & bandit, scenario_kind scenario,
                                                  const backend & model, const sampling_params & params,
                                                  const std::vector<double> & temperatures, size_t n_runs, size_t m,
                                                  uint64_t seed, int jobs) {
    if (temperatures.empty()) {
        throw error(errc::invalid_config, "temperature sweep: no temperatures");
    }
    std::vector<temperature_result> out;
    for (double tau : temperatures) {
        sampling_params p = params;
        p.temperature = tau;
        temperature_result res;
        res.temperature = tau;
        // the same run seeds at every temperature
        res.logs = run_batch(n_runs, bandit, scenario, model, p, std::nullopt, m, seed, jobs);
        size_t valid = 0;
        size_t total = 0;
        double entropy = 0.0;
        size_t n_steps = 0;
        for (const auto & log : res.logs) {
            for (const auto & s : log.steps) {
                valid += s.n_valid;
                total += s.n_total;
                entropy += s.entropy_nats;
                ++n_steps;
            }
            if (log.terminal) {
                total += log.terminal->n_total;
            }
            if (static_cast<int>(log.steps.size()) == bandit.horizon) {
                ++res.completed_runs;
            }
        }
        res.validity_rate = total > 0 ? static_cast<double>(valid) / static_cast<double>(total) : 0.0;
        res.mean_entropy = n_steps > 0 ? entropy / static_cast<double>(n_steps) : std::numeric_limits<double>::quiet_NaN();
        out.push_back(std::move(res));
    }
    return out;
}

} // namespace east
