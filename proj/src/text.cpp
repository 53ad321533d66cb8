// SPDX-License-Identifier: Apache-2.0
#include "stamp/text.hpp"

#include <cctype>

#include "stamp/common.hpp"

namespace stamp {

namespace {

bool is_space(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return u < 0x80 && std::isspace(u);
}

bool is_punct(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

bool is_digit(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return u < 0x80 && std::isdigit(u);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  const size_t n = text.size();
  for (size_t i = 0; i < n; ++i) {
    char c = text[i];
    if (is_space(c)) {
      flush();
      continue;
    }
    if (is_punct(c)) {
      // keep numeric separators intact: digit [.,-] digit
      bool numeric_sep = (c == '.' || c == ',' || c == '-') && i > 0 &&
                         i + 1 < n && is_digit(text[i - 1]) &&
                         is_digit(text[i + 1]);
      if (!numeric_sep) {
        flush();
        out.push_back(std::string(1, c));
        continue;
      }
    }
    cur.push_back(ascii_lower(c));
  }
  flush();
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace stamp
