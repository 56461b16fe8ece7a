#pragma once

#include <string>
#include <vector>

#include "iomarket/types.hpp"

namespace iomarket::csv {

// Doubles are emitted with 9 significant digits; the same value always
// formats to the same bytes, which is what the determinism contract needs.
std::string fmt(double x);

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  class RowBuilder {
   public:
    explicit RowBuilder(Table& t) : t_(t) {}
    RowBuilder& col(double x) { cells_.push_back(fmt(x)); return *this; }
    RowBuilder& col(int x) { cells_.push_back(std::to_string(x)); return *this; }
    RowBuilder& col(std::uint64_t x) { cells_.push_back(std::to_string(x)); return *this; }
    RowBuilder& col(const std::string& s) { cells_.push_back(s); return *this; }
    RowBuilder& col(const char* s) { cells_.emplace_back(s); return *this; }
    ~RowBuilder() { t_.push_row(std::move(cells_)); }
    RowBuilder(const RowBuilder&) = delete;
    RowBuilder& operator=(const RowBuilder&) = delete;

   private:
    Table& t_;
    std::vector<std::string> cells_;
  };

  RowBuilder row() { return RowBuilder(*this); }
  void push_row(std::vector<std::string> cells);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string to_string() const;
  void write(const std::string& path) const;  // IoError on failure

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Documented output schemas, addressed by id. Unknown ids throw IoError.
Table make_table(const std::string& schema_id);
std::vector<std::string> schema_header(const std::string& schema_id);
std::vector<std::string> known_schemas();

}  // namespace iomarket::csv
