#include "east/runlog.hpp"

#include "binary_io.hpp"
#include "east/action_parser.hpp"
#include "east/base64.hpp"
#include "east/error.hpp"

#include <fstream>
#include <sstream>

namespace east {

bool run_log::operator==(const run_log & o) const {
    return run_id == o.run_id && scenario == o.scenario && bandit.means == o.bandit.means &&
           bandit.stddevs == o.bandit.stddevs && bandit.horizon == o.bandit.horizon && bandit.seed == o.bandit.seed &&
           backend_id == o.backend_id && steering == o.steering && params.temperature == o.params.temperature &&
           params.max_new_tokens == o.params.max_new_tokens && params.seed == o.params.seed &&
           params.stop_text == o.params.stop_text && m == o.m && seed == o.seed && steps == o.steps &&
           termination == o.termination && termination_detail == o.termination_detail && terminal == o.terminal;
}

namespace {

// completions may hold arbitrary bytes; invalid UTF-8 travels as base64
nlohmann::json encode_text(const std::string & s) {
    if (is_valid_utf8(s)) {
        return s;
    }
    return {{"b64", base64_encode(s)}};
}

std::string decode_text(const nlohmann::json & j) {
    if (j.is_string()) {
        return j.get<std::string>();
    }
    return base64_decode(j.at("b64").get<std::string>());
}

nlohmann::json encode_texts(const std::vector<std::string> & v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto & s : v) {
        out.push_back(encode_text(s));
    }
    return out;
}

std::vector<std::string> decode_texts(const nlohmann::json & j) {
    std::vector<std::string> out;
    for (const auto & e : j) {
        out.push_back(decode_text(e));
    }
    return out;
}

nlohmann::json header_json(const run_log & log) {
    nlohmann::json params = {
        {"temperature", log.params.temperature},
        {"max_new_tokens", log.params.max_new_tokens},
        {"seed", log.params.seed},
        {"stop_text", log.params.stop_text ? nlohmann::json(*log.params.stop_text) : nlohmann::json(nullptr)},
    };
    nlohmann::json terminal = nullptr;
    if (log.terminal) {
        terminal = {
            {"t", log.terminal->t},
            {"n_total", log.terminal->n_total},
            {"completions", encode_texts(log.terminal->completions)},
        };
    }
    return {
        {"type", "header"},
        {"schema_version", runlog_schema_version},
        {"run_id", log.run_id},
        {"scenario", to_string(log.scenario)},
        {"bandit",
         {{"means", log.bandit.means},
          {"stddevs", log.bandit.stddevs},
          {"horizon", log.bandit.horizon},
          {"seed", log.bandit.seed}}},
        {"backend", log.backend_id},
        {"steering", log.steering},
        {"params", params},
        {"m", log.m},
        {"seed", log.seed},
        {"n_steps", log.steps.size()},
        {"termination", log.termination},
        {"termination_detail", log.termination_detail},
        {"terminal_attempt", terminal},
    };
}

nlohmann::json step_json(const step_record & s) {
    return {
        {"type", "step"},
        {"t", s.t},
        {"chosen_action", s.chosen_action},
        {"chosen_completion", s.chosen_completion},
        {"reward", s.reward},
        {"feedback", s.feedback},
        {"counts", s.counts},
        {"n_valid", s.n_valid},
        {"n_total", s.n_total},
        {"entropy_nats", s.entropy_nats},
        {"completions", encode_texts(s.completions)},
        {"activation_offset", s.activation_offset ? nlohmann::json(*s.activation_offset) : nlohmann::json(nullptr)},
        {"sampling_seed", s.sampling_seed},
    };
}

} // namespace

std::string to_jsonl(const run_log & log) {
    std::string out = header_json(log).dump();
    out += '\n';
    for (const auto & s : log.steps) {
        out += step_json(s).dump();
        out += '\n';
    }
    return out;
}

run_log runlog_from_jsonl(std::string_view text) {
    run_log log;
    std::istringstream in{std::string(text)};
    std::string line;
    bool have_header = false;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto j = nlohmann::json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "header") {
                if (j.at("schema_version").get<int>() != runlog_schema_version) {
                    throw error(errc::version_mismatch, "run log schema version mismatch");
                }
                log.run_id = j.at("run_id").get<std::string>();
                log.scenario = parse_scenario(j.at("scenario").get<std::string>());
                const auto & b = j.at("bandit");
                log.bandit.means = b.at("means").get<std::vector<double>>();
                log.bandit.stddevs = b.at("stddevs").get<std::vector<double>>();
                log.bandit.horizon = b.at("horizon").get<int>();
                log.bandit.seed = b.at("seed").get<uint64_t>();
                log.backend_id = j.at("backend").get<std::string>();
                log.steering = j.at("steering");
                const auto & p = j.at("params");
                log.params.temperature = p.at("temperature").get<double>();
                log.params.max_new_tokens = p.at("max_new_tokens").get<int>();
                log.params.seed = p.at("seed").get<uint64_t>();
                if (!p.at("stop_text").is_null()) {
                    log.params.stop_text = p.at("stop_text").get<std::string>();
                }
                log.m = j.at("m").get<size_t>();
                log.seed = j.at("seed").get<uint64_t>();
                log.termination = j.at("termination").get<std::string>();
                log.termination_detail = j.at("termination_detail").get<std::string>();
                if (const auto & ta = j.at("terminal_attempt"); !ta.is_null()) {
                    log.terminal = terminal_attempt{ta.at("t").get<int>(), ta.at("n_total").get<size_t>(),
                                                    decode_texts(ta.at("completions"))};
                }
                have_header = true;
            } else if (type == "step") {
                step_record s;
                s.t = j.at("t").get<int>();
                s.chosen_action = j.at("chosen_action").get<size_t>();
                s.chosen_completion = j.at("chosen_completion").get<size_t>();
                s.reward = j.at("reward").get<double>();
                s.feedback = j.at("feedback").get<std::string>();
                s.counts = j.at("counts").get<std::vector<size_t>>();
                s.n_valid = j.at("n_valid").get<size_t>();
                s.n_total = j.at("n_total").get<size_t>();
                s.entropy_nats = j.at("entropy_nats").get<double>();
                s.completions = decode_texts(j.at("completions"));
                if (!j.at("activation_offset").is_null()) {
                    s.activation_offset = j.at("activation_offset").get<uint64_t>();
                }
                s.sampling_seed = j.at("sampling_seed").get<uint64_t>();
                log.steps.push_back(std::move(s));
            } else {
                throw error(errc::bad_request, "run log: unknown record type '" + type + "'");
            }
        }
    } catch (const nlohmann::json::exception & e) {
        throw error(errc::bad_request, std::string("run log: ") + e.what());
    }
    if (!have_header) {
        throw error(errc::bad_request, "run log: missing header record");
    }
    for (size_t i = 0; i < log.steps.size(); ++i) {
        if (log.steps[i].t != static_cast<int>(i) + 1) {
            throw error(errc::bad_request, "run log: timesteps are not contiguous from 1");
        }
    }
    return log;
}

void write_runlog(const run_log & log, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw error(errc::io, "cannot write " + path.string());
    }
    out << to_jsonl(log);
    if (!out) {
        throw error(errc::io, "write failed for " + path.string());
    }
}

run_log read_runlog(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error(errc::io, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return runlog_from_jsonl(ss.str());
}

transcript transcript_at(const run_log & log, int t) {
    if (t < 1 || t > static_cast<int>(log.steps.size()) + 1) {
        throw error(errc::bad_request, "transcript_at: step out of range");
    }
    transcript out = transcript::start(log.scenario, log.bandit.horizon);
    for (int i = 0; i + 1 < t; ++i) {
        const auto & s = log.steps[static_cast<size_t>(i)];
        out = append_turn(out, s.completions.at(s.chosen_completion), s.feedback);
    }
    return out;
}

// ---------------------------------------------------------------------------

sidecar_writer::sidecar_writer(const std::filesystem::path & path, size_t dim)
    : out_(path, std::ios::binary), dim_(dim) {
    if (!out_) {
        throw error(errc::io, "cannot write " + path.string());
    }
    out_.write("EACT", 4);
    detail::put<uint32_t>(out_, sidecar_format_version);
    detail::put<uint32_t>(out_, static_cast<uint32_t>(dim));
}

uint64_t sidecar_writer::append(std::span<const float> row) {
    if (row.size() != dim_) {
        throw error(errc::dim_mismatch, "sidecar: row has wrong dimension");
    }
    const uint64_t offset = next_offset_;
    for (float v : row) {
        detail::put<float>(out_, v);
    }
    out_.flush();
    if (!out_) {
        throw error(errc::io, "sidecar: write failed");
    }
    next_offset_ += dim_ * sizeof(float);
    return offset;
}

std::span<const float> sidecar::row_at_offset(uint64_t offset) const {
    if (offset < sidecar_header_bytes || (offset - sidecar_header_bytes) % (dim * sizeof(float)) != 0) {
        throw error(errc::bad_request, "sidecar: offset is not a row boundary");
    }
    const uint64_t row = (offset - sidecar_header_bytes) / (dim * sizeof(float));
    if (row >= n_rows()) {
        throw error(errc::truncated, "sidecar: offset past the end of the file");
    }
    return std::span<const float>(data).subspan(row * dim, dim);
}

sidecar read_sidecar(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error(errc::io, "cannot read " + path.string());
    }
    detail::expect_magic(in, "EACT");
    const auto version = detail::get<uint32_t>(in, "version");
    if (version != sidecar_format_version) {
        throw error(errc::version_mismatch, "sidecar version " + std::to_string(version) + ", expected " +
                                                std::to_string(sidecar_format_version));
    }
    sidecar out;
    out.dim = detail::get<uint32_t>(in, "dim");
    if (out.dim == 0) {
        throw error(errc::bad_request, "sidecar: zero dimension");
    }
    std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (rest.size() % (out.dim * sizeof(float)) != 0) {
        throw error(errc::truncated, "sidecar: partial trailing row");
    }
    out.data.resize(rest.size() / sizeof(float));
    for (size_t i = 0; i < out.data.size(); ++i) {
        float v;
        std::memcpy(&v, rest.data() + i * sizeof(float), sizeof(float));
        out.data[i] = detail::to_le(v);
    }
    return out;
}

} // namespace east
