// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace stamp {

// Lowercases, splits on whitespace, and breaks ASCII punctuation into
// standalone tokens. '.' ',' '-' stay attached when sandwiched between
// digits so numbers like "3.5" or "1,200" survive as single tokens.
// Bytes >= 0x80 are treated as word characters (UTF-8 pass-through).
std::vector<std::string> tokenize(const std::string& text);

// Joins tokens with single spaces. tokenize(join(tokenize(s))) == tokenize(s).
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace stamp
