#include "east/remote_backend.hpp"

#include "east/action_parser.hpp"
#include "east/base64.hpp"
#include "east/error.hpp"

#include <httplib.h>

namespace east {

namespace wire {

nlohmann::json messages_to_json(const transcript & t, std::string_view assistant_prefix) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto & m : to_chat_messages(t)) {
        out.push_back({{"role", to_string(m.role)}, {"text", m.text}});
    }
    if (!assistant_prefix.empty()) {
        out.push_back({{"role", "assistant"}, {"text", assistant_prefix}});
    }
    return out;
}

std::pair<transcript, std::string> messages_from_json(const nlohmann::json & messages) {
    if (!messages.is_array() || messages.empty()) {
        throw error(errc::bad_request, "messages must be a nonempty array");
    }
    std::vector<chat_message> msgs;
    for (const auto & m : messages) {
        msgs.push_back({parse_role(m.at("role").get<std::string>()), m.at("text").get<std::string>()});
    }
    std::string prefix;
    if (msgs.size() % 2 == 0) {
        if (msgs.back().role != chat_role::assistant) {
            throw error(errc::bad_request, "messages must alternate user/assistant starting with user");
        }
        prefix = std::move(msgs.back().text);
        msgs.pop_back();
    }
    transcript t;
    t.horizon = static_cast<int>(msgs.size());
    for (size_t i = 0; i < msgs.size(); ++i) {
        const chat_role expected = (i % 2 == 0) ? chat_role::user : chat_role::assistant;
        if (msgs[i].role != expected) {
            throw error(errc::bad_request, "messages must alternate user/assistant starting with user");
        }
    }
    t.system_text = msgs[0].text;
    if (t.system_text.empty()) {
        throw error(errc::bad_request, "first message must be nonempty");
    }
    for (size_t i = 1; i + 1 < msgs.size(); i += 2) {
        t.turns.push_back({msgs[i].text, msgs[i + 1].text});
    }
    return {std::move(t), std::move(prefix)};
}

nlohmann::json generate_request(const transcript & t, const sampling_params & params,
                                const std::optional<steering_spec> & steering, std::string_view assistant_prefix) {
    nlohmann::json body = {
        {"messages", messages_to_json(t, assistant_prefix)},
        {"temperature", params.temperature},
        {"max_new_tokens", params.max_new_tokens},
        {"seed", params.seed},
        {"steering", nullptr},
    };
    if (steering) {
        body["steering"] = {
            {"layer", steering->layer},
            {"multiplier", steering->multiplier},
            {"vector", steering->vector.values},
        };
    }
    return body;
}

nlohmann::json activation_request(const transcript & t, int layer) {
    return {{"messages", messages_to_json(t)}, {"layer", layer}};
}

std::string_view wire_code(errc code) {
    switch (code) {
        case errc::dim_mismatch: return "DIM_MISMATCH";
        case errc::layer_range:  return "LAYER_RANGE";
        default:                 return "BAD_REQUEST";
    }
}

nlohmann::json error_body(errc code, const std::string & message) {
    return {{"error", {{"code", wire_code(code)}, {"message", message}}}};
}

} // namespace wire

remote_backend::remote_backend(remote_config config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw error(errc::invalid_config, "remote backend: empty endpoint");
    }
}

nlohmann::json remote_backend::post(const std::string & path, const nlohmann::json & body) const {
    httplib::Client client(config_.endpoint);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        throw error(errc::transport, "remote backend: " + path + " failed: " + httplib::to_string(res.error()));
    }
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error & e) {
        throw error(errc::transport, "remote backend: unparseable reply from " + path + ": " + e.what());
    }
    if (res->status == 400) {
        const auto code = reply.at("error").at("code").get<std::string>();
        const auto message = reply.at("error").value("message", std::string());
        if (code == "DIM_MISMATCH") {
            throw error(errc::dim_mismatch, message);
        }
        if (code == "LAYER_RANGE") {
            throw error(errc::layer_range, message);
        }
        throw error(errc::bad_request, message);
    }
    if (res->status != 200) {
        throw error(errc::transport, "remote backend: HTTP " + std::to_string(res->status) + " from " + path);
    }
    return reply;
}

generation_result remote_backend::generate(const transcript & t, const sampling_params & params,
                                           const std::optional<steering_spec> & steering,
                                           std::string_view assistant_prefix) const {
    params.validate();
    if (steering) {
        check_steering(*this, *steering);
    }
    const auto reply = post("/v1/generate", wire::generate_request(t, params, steering, assistant_prefix));
    generation_result out;
    try {
        // text_base64 carries the exact bytes when the text is not valid UTF-8
        out.text = reply.contains("text_base64") ? base64_decode(reply["text_base64"].get<std::string>())
                                                 : reply.at("text").get<std::string>();
        out.n_tokens = reply.at("n_tokens").get<int>();
        const auto finished = reply.at("finished").get<std::string>();
        out.finished = finished == "max_tokens" ? finish_reason::max_tokens : finish_reason::stop;
    } catch (const nlohmann::json::exception & e) {
        throw error(errc::transport, std::string("remote backend: malformed generate reply: ") + e.what());
    }
    return out;
}

activation_vector remote_backend::capture_prompt_activation(const transcript & t, int layer) const {
    check_layer(*this, layer);
    const auto reply = post("/v1/activation", wire::activation_request(t, layer));
    activation_vector out;
    out.layer = layer;
    try {
        for (const auto & v : reply.at("vector")) {
            out.values.push_back(static_cast<float>(v.get<double>()));
        }
        if (reply.at("dim").get<size_t>() != out.values.size()) {
            throw error(errc::transport, "remote backend: dim does not match vector length");
        }
    } catch (const nlohmann::json::exception & e) {
        throw error(errc::transport, std::string("remote backend: malformed activation reply: ") + e.what());
    }
    return out;
}

std::vector<double> remote_backend::next_token_distribution(const transcript &, const sampling_params &) const {
    throw error(errc::unsupported, "remote backend: next-token distributions are not part of the protocol");
}

// ---------------------------------------------------------------------------

reference_server::reference_server(const backend & model) : model_(model), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

reference_server::~reference_server() {
    stop();
}

namespace {

void reply_error(httplib::Response & res, errc code, const std::string & message) {
    res.status = 400;
    res.set_content(wire::error_body(code, message).dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response & res, Fn && fn) {
    try {
        fn();
    } catch (const error & e) {
        reply_error(res, e.code(), e.what());
    } catch (const nlohmann::json::exception & e) {
        reply_error(res, errc::bad_request, e.what());
    } catch (const std::exception & e) {
        res.status = 500;
        res.set_content(wire::error_body(errc::bad_request, e.what()).dump(), "application/json");
    }
}

} // namespace

void reference_server::install_routes() {
    server_->Post("/v1/generate", [this](const httplib::Request & req, httplib::Response & res) {
        guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body);
            auto [t, prefix] = wire::messages_from_json(body.at("messages"));
            sampling_params params;
            params.temperature = body.at("temperature").get<double>();
            params.max_new_tokens = body.at("max_new_tokens").get<int>();
            params.seed = body.at("seed").get<uint64_t>();
            std::optional<steering_spec> steering;
            if (body.contains("steering") && !body["steering"].is_null()) {
                const auto & s = body["steering"];
                steering_spec spec;
                spec.layer = s.at("layer").get<int>();
                spec.multiplier = s.at("multiplier").get<double>();
                for (const auto & v : s.at("vector")) {
                    spec.vector.values.push_back(static_cast<float>(v.get<double>()));
                }
                spec.vector.layer = spec.layer;
                steering = std::move(spec);
            }
            params.validate();
            const auto out = model_.generate(t, params, steering, prefix);
            nlohmann::json reply = {
                {"text", out.text},
                {"n_tokens", out.n_tokens},
                {"finished", to_string(out.finished)},
            };
            // byte-level models can emit invalid UTF-8: "text" gets U+FFFD
            // replacements and the exact bytes travel in "text_base64"
            if (!is_valid_utf8(out.text)) {
                reply["text_base64"] = base64_encode(out.text);
            }
            res.set_content(reply.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json");
        });
    });
    server_->Post("/v1/activation", [this](const httplib::Request & req, httplib::Response & res) {
        guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body);
            auto [t, prefix] = wire::messages_from_json(body.at("messages"));
            if (!prefix.empty()) {
                throw error(errc::bad_request, "activation requests end with a user message");
            }
            const auto v = model_.capture_prompt_activation(t, body.at("layer").get<int>());
            nlohmann::json reply = {{"vector", v.values}, {"dim", v.values.size()}};
            res.set_content(reply.dump(), "application/json");
        });
    });
}

int reference_server::start(const std::string & host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ <= 0) {
        throw error(errc::transport, "reference server: cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void reference_server::listen(const std::string & host, int port) {
    port_ = port;
    if (!server_->listen(host, port)) {
        throw error(errc::transport, "reference server: cannot listen on " + host + ":" + std::to_string(port));
    }
}

void reference_server::stop() {
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

} // namespace east
