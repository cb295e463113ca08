#include "east/error.hpp"

namespace east {

std::string_view errc_name(errc code) {
    switch (code) {
        case errc::invalid_config:   return "INVALID_CONFIG";
        case errc::arm_out_of_range: return "ARM_OUT_OF_RANGE";
        case errc::horizon_exceeded: return "HORIZON_EXCEEDED";
        case errc::malformed_utf8:   return "MALFORMED_UTF8";
        case errc::dim_mismatch:     return "DIM_MISMATCH";
        case errc::layer_range:      return "LAYER_RANGE";
        case errc::bad_request:      return "BAD_REQUEST";
        case errc::transport:        return "TRANSPORT";
        case errc::all_invalid:      return "ALL_INVALID";
        case errc::all_zero_entropy: return "ALL_ZERO_ENTROPY";
        case errc::empty_dataset:    return "EMPTY_DATASET";
        case errc::bad_magic:        return "BAD_MAGIC";
        case errc::version_mismatch: return "VERSION_MISMATCH";
        case errc::truncated:        return "TRUNCATED";
        case errc::io:               return "IO";
        case errc::unsupported:      return "UNSUPPORTED";
    }
    return "UNKNOWN";
}

} // namespace east
