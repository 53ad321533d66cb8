// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace stamp {

// Reserved token emitted for cells whose text tokenizes to nothing.
inline const std::string kEmptyToken = "<empty>";

struct Cell {
  std::string raw;                  // original text, verbatim
  std::vector<std::string> tokens;  // lowercased tokens, never empty
};

// A single table: the grounding context for parsing and execution.
// Raw strings keep original casing for serialization and execution;
// token lists feed the encoders.
struct Table {
  std::string id;
  std::vector<std::string> header_raw;
  std::vector<std::vector<std::string>> header_tokens;
  std::vector<std::vector<Cell>> rows;  // n_rows x n_cols

  int n_cols() const { return static_cast<int>(header_raw.size()); }
  int n_rows() const { return static_cast<int>(rows.size()); }

  // True when every cell of the column parses as a number.
  bool column_all_numeric(int col) const;
};

// Builds a Table from raw strings; tokenizes headers and cells, substitutes
// kEmptyToken for blank cells. Throws DataError on ragged rows or an empty
// header.
Table make_table(const std::string& id,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

}  // namespace stamp
