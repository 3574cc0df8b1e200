#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace promptgate::text {

bool is_valid_utf8(std::string_view s);

/// Decodes one code point starting at pos and advances pos. Invalid bytes
/// decode as U+FFFD and advance by one.
char32_t next_code_point(std::string_view s, std::size_t& pos);

void append_utf8(std::string& out, char32_t cp);

std::string_view trim(std::string_view s);

/// ASCII-only lowercase.
std::string ascii_lower(std::string_view s);

}  // namespace promptgate::text
