#pragma once

#include <string>
#include <string_view>

namespace east {

// RFC 4648 standard alphabet with padding
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

} // namespace east
