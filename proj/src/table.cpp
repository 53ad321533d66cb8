// SPDX-License-Identifier: Apache-2.0
#include "stamp/table.hpp"

#include "stamp/common.hpp"
#include "stamp/text.hpp"

namespace stamp {

bool Table::column_all_numeric(int col) const {
  for (const auto& row : rows)
    if (!parse_number(row[col].raw)) return false;
  return true;
}

Table make_table(const std::string& id,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  if (header.empty())
    throw DataError("table '" + id + "': header must have at least one column");
  Table t;
  t.id = id;
  t.header_raw = header;
  for (const auto& name : header) {
    auto toks = tokenize(name);
    if (toks.empty()) toks.push_back(kEmptyToken);
    t.header_tokens.push_back(std::move(toks));
  }
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw DataError("table '" + id + "': row " + std::to_string(r) +
                      " has " + std::to_string(rows[r].size()) +
                      " cells, expected " + std::to_string(header.size()));
    std::vector<Cell> cells;
    cells.reserve(rows[r].size());
    for (const auto& raw : rows[r]) {
      Cell c;
      c.raw = raw;
      c.tokens = tokenize(raw);
      if (c.tokens.empty()) c.tokens.push_back(kEmptyToken);
      cells.push_back(std::move(c));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace stamp
