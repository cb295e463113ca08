#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace east {

enum class errc {
    invalid_config,
    arm_out_of_range,
    horizon_exceeded,
    malformed_utf8,
    dim_mismatch,
    layer_range,
    bad_request,
    transport,
    all_invalid,
    all_zero_entropy,
    empty_dataset,
    bad_magic,
    version_mismatch,
    truncated,
    io,
    unsupported,
};

// stable machine-readable name, also used on the wire
std::string_view errc_name(errc code);

class error : public std::runtime_error {
public:
    error(errc code, const std::string & what) : std::runtime_error(what), code_(code) {}

    errc code() const noexcept { return code_; }

private:
    errc code_;
};

} // namespace east
