#pragma once

// JSON-over-HTTP model protocol.
//
//   POST /v1/generate
//     {messages:[{role,text}], temperature, max_new_tokens, seed,
//      steering:{layer, multiplier, vector:[...]} | null}
//     -> {text, n_tokens, finished:"stop"|"max_tokens"}
//        (+ text_base64 with the exact bytes when text is not valid UTF-8)
//   POST /v1/activation
//     {messages:[...], layer} -> {vector:[...], dim}
//   errors: HTTP 400 {error:{code:"DIM_MISMATCH"|"LAYER_RANGE"|"BAD_REQUEST", message}}
//
// A trailing assistant message in `messages` is a forced completion prefix.

#include "east/backend.hpp"
#include "east/error.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace east {

namespace wire {

nlohmann::json messages_to_json(const transcript & t, std::string_view assistant_prefix = {});
// returns the transcript and the forced assistant prefix (possibly empty)
std::pair<transcript, std::string> messages_from_json(const nlohmann::json & messages);

nlohmann::json generate_request(const transcript & t, const sampling_params & params,
                                const std::optional<steering_spec> & steering, std::string_view assistant_prefix);
nlohmann::json activation_request(const transcript & t, int layer);

nlohmann::json error_body(errc code, const std::string & message);
std::string_view wire_code(errc code);

} // namespace wire

struct remote_config {
    std::string endpoint = "http://127.0.0.1:8080";
    int n_layers = 0;      // 0 = validated by the server
    size_t hidden = 0;     // 0 = validated by the server
    double timeout_s = 600.0;
};

class remote_backend final : public backend {
public:
    explicit remote_backend(remote_config config);

    std::string id() const override { return "remote(" + config_.endpoint + ")"; }
    int n_layers() const override { return config_.n_layers; }
    size_t hidden_dim() const override { return config_.hidden; }

    generation_result generate(const transcript & t, const sampling_params & params,
                               const std::optional<steering_spec> & steering,
                               std::string_view assistant_prefix = {}) const override;

    activation_vector capture_prompt_activation(const transcript & t, int layer) const override;

    // not part of the protocol; throws error(unsupported)
    std::vector<double> next_token_distribution(const transcript & t, const sampling_params & params) const override;

private:
    nlohmann::json post(const std::string & path, const nlohmann::json & body) const;

    remote_config config_;
};

// Loopback server wrapping any local backend (normally the toy transformer).
// Requests are independent; the wrapped backend is only used through const
// calls.
class reference_server {
public:
    explicit reference_server(const backend & model);
    ~reference_server();

    reference_server(const reference_server &) = delete;
    reference_server & operator=(const reference_server &) = delete;

    // binds (port 0 = any free port) and serves on a background thread
    int start(const std::string & host = "127.0.0.1", int port = 0);
    // binds and serves on the calling thread until stop()
    void listen(const std::string & host, int port);
    void stop();
    int port() const { return port_; }

private:
    void install_routes();

    const backend & model_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<int> port_{0};
};

} // namespace east
