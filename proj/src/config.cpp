#include "east/config.hpp"

#include "east/error.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace east {

using nlohmann::json;

json default_config() {
    return json::parse(R"({
  "scenario": "buttons",
  "bandit": {"means": [100.0, 100.0], "stddevs": [10.0, 10.0], "horizon": 50},
  "runs": 65,
  "m": 25,
  "sampling": {"temperature": 1.0, "max_new_tokens": 256},
  "steering": {"layer": 4, "multiplier": 2.0, "vector": ""},
  "collect": {"layers": []},
  "eval": {
    "prompts": "",
    "run_dirs": [],
    "n_prompts": 100,
    "m_eval": 15,
    "layers": [4],
    "multipliers": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
    "temperatures": [0.7, 1.0, 1.5, 2.0, 3.0],
    "vector_dir": "",
    "control_vector": ""
  },
  "trace": {"s": 20, "target_arm": 0, "prompt": ""},
  "sweep_temp": {"temperatures": [0.5, 1.0, 2.0, 4.0, 8.0, 16.0], "runs": 20},
  "words": {"corpus_a": "", "corpus_b": "", "stopwords": "fixtures/stopwords_en.txt", "min_length": 3},
  "backend": {
    "kind": "toy",
    "toy": {"n_layers": 8, "hidden": 64, "n_heads": 4, "context": 512, "ffn_mult": 4, "seed": 0, "init_std": 0.02},
    "scripted": {
      "hidden": 64, "n_layers": 8, "seed": 0, "g0": 0.0, "slope": 0.0, "w": [], "w_along_direction": 0.0, "entropy_direction": [],
      "entropy_scale": 1.0, "invalid_prob": 0.0, "forced_arm": -1,
      "thought": "Thought: I will weigh the results I have seen so far before deciding."
    },
    "remote": {"endpoint": "http://127.0.0.1:8080", "n_layers": 0, "hidden": 0, "timeout_s": 600.0}
  },
  "serve": {"host": "127.0.0.1", "port": 8080},
  "output": {"format": "csv"}
})");
}

namespace {

bool same_kind(const json & a, const json & b) {
    if (a.is_number() && b.is_number()) {
        return true;
    }
    return a.type() == b.type();
}

void merge_into(json & base, const json & patch, const std::string & prefix) {
    if (!patch.is_object()) {
        throw error(errc::invalid_config, "config" + (prefix.empty() ? "" : " key '" + prefix + "'") +
                                              " must be an object");
    }
    for (const auto & [key, value] : patch.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) {
            throw error(errc::invalid_config, "unknown config key '" + path + "'");
        }
        json & slot = base[key];
        if (slot.is_object()) {
            merge_into(slot, value, path);
        } else if (!same_kind(slot, value)) {
            throw error(errc::invalid_config, "config key '" + path + "' expects " + std::string(slot.type_name()) +
                                                  ", got " + value.type_name());
        } else {
            slot = value;
        }
    }
}

} // namespace

void apply_override(json & tree, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw error(errc::invalid_config, "override must look like key=value: '" + std::string(assignment) + "'");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));

    json * target = &tree;
    for (size_t start = 0;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!target->is_object() || !target->contains(part)) {
            throw error(errc::invalid_config, "unknown config key '" + key + "'");
        }
        target = &(*target)[part];
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }

    // string keys take the raw text, so --set steering.vector=123 stays a path
    json value = target->is_string() ? json(text) : json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    if (target->is_object()) {
        merge_into(*target, value, key);
    } else if (!same_kind(*target, value)) {
        throw error(errc::invalid_config, "config key '" + key + "' expects " + std::string(target->type_name()) +
                                              ", got " + value.type_name());
    } else {
        *target = std::move(value);
    }
}

json load_config(const std::optional<std::filesystem::path> & path, const std::vector<std::string> & overrides) {
    json tree = default_config();
    if (path) {
        std::ifstream in(*path);
        if (!in) {
            throw error(errc::invalid_config, "cannot open config " + path->string());
        }
        json file = json::parse(in, nullptr, false);
        if (file.is_discarded()) {
            throw error(errc::invalid_config, "config " + path->string() + " is not valid JSON");
        }
        merge_into(tree, file, "");
    }
    for (const auto & o : overrides) {
        apply_override(tree, o);
    }
    return tree;
}

namespace {

const json & at(const json & tree, const std::string & path) {
    const json * node = &tree;
    size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) {
            throw error(errc::invalid_config, "missing config key '" + path + "'");
        }
        node = &(*node)[part];
        if (dot == std::string::npos) {
            return *node;
        }
        start = dot + 1;
    }
}

[[noreturn]] void bad(const std::string & path, const std::string & what) {
    throw error(errc::invalid_config, "config key '" + path + "': " + what);
}

double get_double(const json & tree, const std::string & path) {
    const auto & v = at(tree, path);
    if (!v.is_number()) {
        bad(path, "expected a number");
    }
    return v.get<double>();
}

int64_t get_int(const json & tree, const std::string & path) {
    const auto & v = at(tree, path);
    if (v.is_number_integer()) {
        return v.get<int64_t>();
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::floor(d) == d && std::abs(d) < 9e15) {
            return static_cast<int64_t>(d);
        }
    }
    bad(path, "expected an integer");
}

size_t get_size(const json & tree, const std::string & path, size_t min = 0) {
    const int64_t v = get_int(tree, path);
    if (v < static_cast<int64_t>(min)) {
        bad(path, "must be >= " + std::to_string(min));
    }
    return static_cast<size_t>(v);
}

uint64_t get_u64(const json & tree, const std::string & path) {
    const auto & v = at(tree, path);
    if (v.is_number_unsigned()) {
        return v.get<uint64_t>();
    }
    return static_cast<uint64_t>(get_size(tree, path));
}

std::string get_string(const json & tree, const std::string & path) {
    const auto & v = at(tree, path);
    if (!v.is_string()) {
        bad(path, "expected a string");
    }
    return v.get<std::string>();
}

std::vector<double> get_doubles(const json & tree, const std::string & path) {
    const auto & v = at(tree, path);
    if (!v.is_array()) {
        bad(path, "expected an array of numbers");
    }
    std::vector<double> out;
    for (const auto & x : v) {
        if (!x.is_number()) {
            bad(path, "expected an array of numbers");
        }
        out.push_back(x.get<double>());
    }
    return out;
}

std::vector<int> get_ints(const json & tree, const std::string & path) {
    std::vector<int> out;
    for (double d : get_doubles(tree, path)) {
        if (std::floor(d) != d || std::abs(d) > 1e6) {
            bad(path, "expected integers");
        }
        out.push_back(static_cast<int>(d));
    }
    return out;
}

std::vector<std::string> get_strings(const json & tree, const std::string & path) {
    const auto & v = at(tree, path);
    if (!v.is_array()) {
        bad(path, "expected an array of strings");
    }
    std::vector<std::string> out;
    for (const auto & x : v) {
        if (!x.is_string()) {
            bad(path, "expected an array of strings");
        }
        out.push_back(x.get<std::string>());
    }
    return out;
}

template <typename Fn>
void checked(const std::string & what, Fn && fn) {
    try {
        fn();
    } catch (const error & e) {
        throw error(errc::invalid_config, what + ": " + e.what());
    }
}

} // namespace

experiment_config parse_config(const json & tree) {
    experiment_config c;
    checked("scenario", [&] { c.scenario = parse_scenario(get_string(tree, "scenario")); });

    c.bandit.means = get_doubles(tree, "bandit.means");
    c.bandit.stddevs = get_doubles(tree, "bandit.stddevs");
    c.bandit.horizon = static_cast<int>(get_size(tree, "bandit.horizon", 1));
    checked("bandit", [&] { c.bandit.validate(); });

    c.runs = get_size(tree, "runs", 1);
    c.m = get_size(tree, "m", 1);
    c.sampling.temperature = get_double(tree, "sampling.temperature");
    c.sampling.max_new_tokens = get_size(tree, "sampling.max_new_tokens", 1);
    checked("sampling", [&] { c.sampling.validate(); });

    c.layer = static_cast<int>(get_int(tree, "steering.layer"));
    c.multiplier = get_double(tree, "steering.multiplier");
    if (!std::isfinite(c.multiplier)) {
        bad("steering.multiplier", "must be finite");
    }
    c.vector = get_string(tree, "steering.vector");
    c.capture_layers = get_ints(tree, "collect.layers");
    if (c.capture_layers.empty()) {
        c.capture_layers = {c.layer};
    }

    c.eval_prompts = get_string(tree, "eval.prompts");
    c.eval_run_dirs = get_strings(tree, "eval.run_dirs");
    c.n_prompts = get_size(tree, "eval.n_prompts", 1);
    c.grid.m_eval = get_size(tree, "eval.m_eval", 1);
    c.grid.layers = get_ints(tree, "eval.layers");
    c.grid.multipliers = get_doubles(tree, "eval.multipliers");
    c.grid.temperatures = get_doubles(tree, "eval.temperatures");
    checked("eval", [&] { c.grid.validate(); });
    for (double t : c.grid.temperatures) {
        if (!(t >= 0.0) || !std::isfinite(t)) {
            bad("eval.temperatures", "temperatures must be finite and >= 0");
        }
    }
    c.vector_dir = get_string(tree, "eval.vector_dir");
    c.control_vector = get_string(tree, "eval.control_vector");

    c.trace_s = get_size(tree, "trace.s", 1);
    c.trace_target_arm = get_size(tree, "trace.target_arm");
    if (c.trace_target_arm >= c.bandit.n_arms()) {
        bad("trace.target_arm", "out of range for the bandit");
    }
    c.trace_prompt = get_string(tree, "trace.prompt");

    c.sweep_temperatures = get_doubles(tree, "sweep_temp.temperatures");
    if (c.sweep_temperatures.empty()) {
        bad("sweep_temp.temperatures", "must be nonempty");
    }
    for (double t : c.sweep_temperatures) {
        if (!(t >= 0.0) || !std::isfinite(t)) {
            bad("sweep_temp.temperatures", "temperatures must be finite and >= 0");
        }
    }
    c.sweep_runs = get_size(tree, "sweep_temp.runs", 1);

    c.corpus_a = get_string(tree, "words.corpus_a");
    c.corpus_b = get_string(tree, "words.corpus_b");
    c.stopwords = get_string(tree, "words.stopwords");
    c.min_word_length = get_size(tree, "words.min_length", 1);

    auto & b = c.backend;
    b.kind = get_string(tree, "backend.kind");
    if (b.kind != "toy" && b.kind != "scripted" && b.kind != "remote") {
        bad("backend.kind", "expected toy, scripted or remote");
    }
    b.toy.n_layers = static_cast<int>(get_size(tree, "backend.toy.n_layers", 1));
    b.toy.hidden = get_size(tree, "backend.toy.hidden", 1);
    b.toy.n_heads = get_size(tree, "backend.toy.n_heads", 1);
    b.toy.context = get_size(tree, "backend.toy.context", 2);
    b.toy.ffn_mult = get_size(tree, "backend.toy.ffn_mult", 1);
    b.toy.seed = get_u64(tree, "backend.toy.seed");
    b.toy.init_std = static_cast<float>(get_double(tree, "backend.toy.init_std"));
    checked("backend.toy", [&] { b.toy.validate(); });

    auto & s = b.scripted;
    s.hidden = get_size(tree, "backend.scripted.hidden", 1);
    s.n_layers = static_cast<int>(get_size(tree, "backend.scripted.n_layers", 1));
    s.seed = get_u64(tree, "backend.scripted.seed");
    s.g0 = get_double(tree, "backend.scripted.g0");
    s.slope = get_double(tree, "backend.scripted.slope");
    s.w = get_doubles(tree, "backend.scripted.w");
    s.w_along_direction = get_double(tree, "backend.scripted.w_along_direction");
    s.entropy_direction = get_doubles(tree, "backend.scripted.entropy_direction");
    s.entropy_scale = get_double(tree, "backend.scripted.entropy_scale");
    s.invalid_prob = get_double(tree, "backend.scripted.invalid_prob");
    const int64_t forced = get_int(tree, "backend.scripted.forced_arm");
    if (forced >= 0) {
        s.forced_arm = static_cast<size_t>(forced);
    }
    s.thought = get_string(tree, "backend.scripted.thought");
    checked("backend.scripted", [&] { s.validate(); });

    b.remote.endpoint = get_string(tree, "backend.remote.endpoint");
    b.remote.n_layers = static_cast<int>(get_size(tree, "backend.remote.n_layers"));
    b.remote.hidden = get_size(tree, "backend.remote.hidden");
    b.remote.timeout_s = get_double(tree, "backend.remote.timeout_s");
    if (!(b.remote.timeout_s > 0.0)) {
        bad("backend.remote.timeout_s", "must be positive");
    }

    c.serve_host = get_string(tree, "serve.host");
    const int64_t port = get_int(tree, "serve.port");
    if (port < 0 || port > 65535) {
        bad("serve.port", "must be in [0, 65535]");
    }
    c.serve_port = static_cast<int>(port);
    checked("output.format", [&] { c.format = parse_plot_format(get_string(tree, "output.format")); });
    return c;
}

std::unique_ptr<backend> make_backend(const backend_settings & settings) {
    if (settings.kind == "toy") {
        return std::make_unique<toy_transformer>(settings.toy);
    }
    if (settings.kind == "scripted") {
        return std::make_unique<scripted_backend>(settings.scripted);
    }
    if (settings.kind == "remote") {
        return std::make_unique<remote_backend>(settings.remote);
    }
    throw error(errc::invalid_config, "unknown backend kind '" + settings.kind + "'");
}

} // namespace east
