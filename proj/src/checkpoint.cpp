// SPDX-License-Identifier: Apache-2.0
#include "stamp/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "stamp/common.hpp"

namespace stamp {

namespace {
constexpr const char* kMagic = "stamp-checkpoint 1";
}

const Mat* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out << kMagic << "\n";
    out << "config " << c.config.size() << "\n";
    for (const auto& [k, v] : c.config) out << k << " " << v << "\n";
    out << "vocab-words " << c.words.size() << "\n";
    for (const auto& w : c.words) out << w << "\n";
    out << "vocab-ngrams " << c.ngrams.size() << "\n";
    for (const auto& g : c.ngrams) out << g << "\n";
    for (const auto& [name, m] : c.tensors) {
      out << "tensor " << name << " " << m.rows << " " << m.cols << "\n";
      for (int r = 0; r < m.rows; ++r) {
        for (int col = 0; col < m.cols; ++col) {
          if (col) out << " ";
          out << format_double(m.at(r, col));
        }
        out << "\n";
      }
    }
    out << "end\n";
    if (!out) throw DataError("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot rename " + tmp + " to " + path);
  }
}

namespace {

std::string next_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw DataError("unexpected end of checkpoint " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

size_t parse_count(const std::string& s, const std::string& path) {
  try {
    size_t pos = 0;
    long long n = std::stoll(s, &pos);
    if (pos != s.size() || n < 0) throw std::invalid_argument(s);
    return static_cast<size_t>(n);
  } catch (const std::exception&) {
    throw DataError("bad count '" + s + "' in checkpoint " + path);
  }
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  if (next_line(in, path) != kMagic)
    throw DataError("unknown checkpoint format in " + path);

  Checkpoint c;
  std::string line = next_line(in, path);
  std::istringstream head(line);
  std::string word, count;
  head >> word >> count;
  if (word != "config")
    throw DataError("expected config section in " + path);
  size_t n_config = parse_count(count, path);
  for (size_t i = 0; i < n_config; ++i) {
    line = next_line(in, path);
    size_t sp = line.find(' ');
    if (sp == std::string::npos)
      throw DataError("bad config line '" + line + "' in " + path);
    c.config[line.substr(0, sp)] = line.substr(sp + 1);
  }

  auto read_list = [&](const char* header, std::vector<std::string>& out) {
    line = next_line(in, path);
    std::istringstream h(line);
    std::string w, cnt;
    h >> w >> cnt;
    if (w != header)
      throw DataError(std::string("expected ") + header + " section in " +
                      path);
    size_t n = parse_count(cnt, path);
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(next_line(in, path));
  };
  read_list("vocab-words", c.words);
  read_list("vocab-ngrams", c.ngrams);

  while (true) {
    line = next_line(in, path);
    if (line == "end") break;
    std::istringstream h(line);
    std::string kind, name, rows_s, cols_s;
    h >> kind >> name >> rows_s >> cols_s;
    if (kind != "tensor" || name.empty())
      throw DataError("bad tensor header '" + line + "' in " + path);
    int rows = static_cast<int>(parse_count(rows_s, path));
    int cols = static_cast<int>(parse_count(cols_s, path));
    if (rows <= 0 || cols <= 0)
      throw DataError("bad tensor shape for " + name + " in " + path);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      std::istringstream row(next_line(in, path));
      for (int col = 0; col < cols; ++col) {
        std::string v;
        if (!(row >> v))
          throw DataError("short tensor row for " + name + " in " + path);
        auto x = parse_number(v);
        if (!x)
          throw DataError("bad tensor value '" + v + "' for " + name +
                          " in " + path);
        m.at(r, col) = *x;
      }
    }
    c.tensors.emplace_back(name, std::move(m));
  }
  return c;
}

}  // namespace stamp
