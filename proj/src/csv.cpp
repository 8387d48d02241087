#include "qmcmc/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "qmcmc/error.hpp"

namespace qmcmc::csv {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  if (s == "nan") return NAN;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw Error("not a number: '" + s + "'");
  return v;
}

std::string join(const Row& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  return line;
}

Row split(const std::string& line) {
  Row out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t Table::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + " is empty");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r = split(line);
    if (r.size() != t.header.size()) throw Error(path.string() + ": ragged row '" + line + "'");
    t.rows.push_back(std::move(r));
  }
  return t;
}

BlockWriter::BlockWriter(const std::filesystem::path& path, Row header, std::vector<std::size_t> key_columns,
                         const Accept& accept)
    : path_(path), header_(std::move(header)), key_columns_(std::move(key_columns)) {
  std::vector<std::string> kept_lines;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // A trailing line without a newline was cut off mid-write.
    if (auto last = content.rfind('\n'); last != std::string::npos) {
      content.resize(last + 1);
    } else {
      content.clear();
    }
    std::istringstream lines(content);
    std::string line;
    if (std::getline(lines, line) && split(line) != header_) {
      throw ConfigError(path_.string() + " exists with a different header");
    }
    std::vector<std::pair<std::string, std::vector<std::string>>> blocks;
    while (std::getline(lines, line)) {
      Row r = split(line);
      if (r.size() != header_.size()) break;
      std::string key = key_of(r);
      if (blocks.empty() || blocks.back().first != key) blocks.emplace_back(key, std::vector<std::string>{});
      blocks.back().second.push_back(line);
    }
    for (auto& [key, block] : blocks) {
      if (!accept(key, block.size())) break;
      done_.push_back(key);
      kept_lines.insert(kept_lines.end(), block.begin(), block.end());
    }
  }
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot write " + path_.string());
  out_ << join(header_) << '\n';
  for (const auto& l : kept_lines) out_ << l << '\n';
  rows_ = kept_lines.size();
  out_.flush();
  std::sort(done_.begin(), done_.end());
}

std::string BlockWriter::key_of(const Row& row) const {
  std::string key;
  for (std::size_t c : key_columns_) {
    if (!key.empty()) key += '|';
    key += row.at(c);
  }
  return key;
}

bool BlockWriter::has(const std::string& key) const {
  return std::binary_search(done_.begin(), done_.end(), key);
}

void BlockWriter::write_block(const std::vector<Row>& rows) {
  std::string text;
  for (const auto& r : rows) {
    if (r.size() != header_.size()) throw Error("row width does not match " + path_.string());
    text += join(r);
    text += '\n';
  }
  out_ << text;
  out_.flush();
  rows_ += rows.size();
}

}  // namespace qmcmc::csv
