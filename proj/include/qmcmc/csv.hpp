#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace qmcmc::csv {

using Row = std::vector<std::string>;

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for non-finite values.
std::string number(double v);
double parse_number(const std::string& s);

std::string join(const Row& fields);
Row split(const std::string& line);

struct Table {
  Row header;
  std::vector<Row> rows;

  std::size_t column(const std::string& name) const;
};

/// Reads a whole file. Throws Error on a missing file or ragged rows.
Table read(const std::filesystem::path& path);

/// Append-only table whose rows are grouped into blocks by a key. Opening an
/// existing file keeps only blocks the caller accepts as complete and rewrites
/// the file without the rest, so an interrupted sweep resumes cleanly.
class BlockWriter {
 public:
  using Accept = std::function<bool(const std::string& key, std::size_t rows)>;

  BlockWriter(const std::filesystem::path& path, Row header, std::vector<std::size_t> key_columns,
              const Accept& accept);

  bool has(const std::string& key) const;
  void write_block(const std::vector<Row>& rows);
  std::size_t row_count() const { return rows_; }
  const std::filesystem::path& path() const { return path_; }
  std::string key_of(const Row& row) const;

 private:
  std::filesystem::path path_;
  Row header_;
  std::vector<std::size_t> key_columns_;
  std::vector<std::string> done_;
  std::ofstream out_;
  std::size_t rows_ = 0;
};

}  // namespace qmcmc::csv
