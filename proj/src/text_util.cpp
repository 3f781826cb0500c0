#include "xlemb/text_util.hpp"

#include <fstream>
#include <sstream>

#include "xlemb/common.hpp"

namespace xlemb {

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case U'\t': case U'\n': case 0x0b: case 0x0c: case U'\r': case U' ':
    case 0x85: case 0xa0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202f: case 0x205f: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200a;
  }
}

namespace {

// Decodes one code point starting at text[i]. Returns its byte length, or 0
// if the bytes are not well-formed UTF-8.
std::size_t decode_utf8(std::string_view text, std::size_t i, char32_t& cp) {
  unsigned char b0 = static_cast<unsigned char>(text[i]);
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  auto cont = [&](std::size_t k) {
    return i + k < text.size() &&
           (static_cast<unsigned char>(text[i + k]) & 0xc0) == 0x80;
  };
  auto tail = [&](std::size_t k) {
    return static_cast<char32_t>(static_cast<unsigned char>(text[i + k]) & 0x3f);
  };
  if ((b0 & 0xe0) == 0xc0) {
    if (!cont(1)) return 0;
    cp = (static_cast<char32_t>(b0 & 0x1f) << 6) | tail(1);
    return cp >= 0x80 ? 2 : 0;  // reject overlong
  }
  if ((b0 & 0xf0) == 0xe0) {
    if (!cont(1) || !cont(2)) return 0;
    cp = (static_cast<char32_t>(b0 & 0x0f) << 12) | (tail(1) << 6) | tail(2);
    if (cp < 0x800 || (cp >= 0xd800 && cp <= 0xdfff)) return 0;
    return 3;
  }
  if ((b0 & 0xf8) == 0xf0) {
    if (!cont(1) || !cont(2) || !cont(3)) return 0;
    cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (tail(1) << 12) |
         (tail(2) << 6) | tail(3);
    return (cp >= 0x10000 && cp <= 0x10ffff) ? 4 : 0;
  }
  return 0;
}

}  // namespace

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  std::size_t i = 0;
  while (i < text.size()) {
    char32_t cp = 0;
    std::size_t len = decode_utf8(text, i, cp);
    if (len == 0) {
      // Malformed byte: treat as an ordinary character so normalization
      // never fails on arbitrary input.
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(text[i]);
      ++i;
      continue;
    }
    if (is_unicode_space(cp)) {
      pending_space = true;
    } else {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.append(text.substr(i, len));
    }
    i += len;
  }
  return out;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < word.size()) {
    char32_t cp = 0;
    std::size_t len = decode_utf8(word, i, cp);
    if (len == 0) {
      throw DataError("malformed UTF-8 at byte offset " + std::to_string(i));
    }
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

std::vector<std::string> split_on_spaces(std::string_view line) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < line.size()) {
    std::size_t end = line.find(' ', start);
    if (end == std::string_view::npos) end = line.size();
    if (end > start) words.emplace_back(line.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace xlemb
