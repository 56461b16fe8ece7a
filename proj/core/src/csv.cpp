#include "iomarket/csv.hpp"

#include <cstdio>
#include <fstream>

namespace iomarket::csv {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

void Table::push_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size())
    throw IoError("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                  std::to_string(header_.size()));
  rows_.push_back(std::move(cells));
}

std::string Table::to_string() const {
  std::string out;
  auto append_line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  append_line(header_);
  for (const auto& r : rows_) append_line(r);
  return out;
}

void Table::write(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const std::string body = to_string();
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!os) throw IoError("short write to " + path);
}

namespace {

struct Schema {
  const char* id;
  std::vector<std::string> header;
};

const std::vector<Schema>& registry() {
  static const std::vector<Schema> schemas = {
      {"prices", {"msp", "mu", "price"}},
      {"allocation", {"mu", "msp", "participating", "f_cycles", "b_hz", "v"}},
      {"msp_utilities", {"msp", "utility"}},
      {"mu_utilities", {"mu", "utility"}},
      {"utility_trace", {"episode", "msp", "utility"}},
      {"benchmark_iom", {"scheme", "msp", "uniform_price", "total_iom", "utility"}},
      {"benchmark_time", {"scheme", "msp", "time_to_target_s"}},
      {"events", {"time_s", "kind", "mu", "msp", "round"}},
      {"accuracy", {"msp", "round", "time_s", "accuracy"}},
      {"aoi", {"mu", "msp", "avg_aoi_s", "closed_form_s"}},
      {"summary", {"key", "value"}},
      {"checks", {"check", "status", "detail"}},
  };
  return schemas;
}

}  // namespace

std::vector<std::string> schema_header(const std::string& schema_id) {
  for (const Schema& s : registry())
    if (schema_id == s.id) return s.header;
  throw IoError("unknown csv schema: " + schema_id);
}

Table make_table(const std::string& schema_id) { return Table(schema_header(schema_id)); }

std::vector<std::string> known_schemas() {
  std::vector<std::string> ids;
  for (const Schema& s : registry()) ids.emplace_back(s.id);
  return ids;
}

}  // namespace iomarket::csv
