#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xlemb {

// Collapses runs of Unicode whitespace into single ASCII spaces and trims
// both ends. Invalid UTF-8 bytes are passed through as opaque characters.
std::string normalize_whitespace(std::string_view text);

// True for code points with the Unicode White_Space property.
bool is_unicode_space(char32_t cp);

// Splits a word into UTF-8 code-point chunks (each element is the byte
// sequence of one code point). Throws DataError on malformed UTF-8.
std::vector<std::string> utf8_chars(std::string_view word);

std::vector<std::string> split_on_spaces(std::string_view line);

// Whole-file and line-oriented IO. read_lines strips trailing '\n' and '\r'.
std::vector<std::string> read_lines(const std::string& path);
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace xlemb
