#include "parastab/field_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

namespace parastab {

std::string format_number(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

void write_field_csv(std::ostream& out, const SpaceTimeField& field, const TimeWindow& window) {
  out << "h=" << format_number(field.domain().spacing()) << ",k=" << format_number(field.axis().step)
      << ",T=" << format_number(window.final_time()) << ",delta0=" << format_number(window.delta0())
      << ",delta1=" << format_number(window.delta1()) << '\n';
  for (std::size_t n = 0; n < field.levels(); ++n) {
    const auto row = field.snapshot(n);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ',';
      out << format_number(row[i]);
    }
    out << '\n';
  }
}

namespace {

double parse_number(std::string_view text) {
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    throw ValidationError("csv", "malformed number '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

FieldCsv read_field_csv(std::istream& in) {
  FieldCsv csv;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv", "missing header");

  std::stringstream header(line);
  std::string item;
  int seen = 0;
  while (std::getline(header, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("csv", "malformed header entry '" + item + "'");
    const std::string key = item.substr(0, eq);
    const double value = parse_number(std::string_view(item).substr(eq + 1));
    if (key == "h") csv.h = value;
    else if (key == "k") csv.k = value;
    else if (key == "T") csv.T = value;
    else if (key == "delta0") csv.delta0 = value;
    else if (key == "delta1") csv.delta1 = value;
    else throw ValidationError("csv", "unknown header key '" + key + "'");
    ++seen;
  }
  if (seen != 5) throw ValidationError("csv", "header must carry h, k, T, delta0, delta1");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t columns = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      csv.values.push_back(parse_number(rest.substr(0, comma)));
      ++columns;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (csv.rows == 0) csv.columns = columns;
    else if (columns != csv.columns) throw ValidationError("csv", "ragged rows");
    ++csv.rows;
  }
  return csv;
}

}  // namespace parastab
