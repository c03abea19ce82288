#pragma once

#include <string>
#include <string_view>

namespace scrap {

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Lower-case hex HMAC-SHA-256 of `data` keyed with `key`.
std::string hmac_sha256_hex(std::string_view key, std::string_view data);

}  // namespace scrap
