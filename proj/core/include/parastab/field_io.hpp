#pragma once

// CSV exchange of space-time fields and shortest round-trip number text.

#include <iosfwd>
#include <string>

#include "parastab/grid.hpp"

namespace parastab {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

/// Header `h=..,k=..,T=..,delta0=..,delta1=..`, then one row per time level.
void write_field_csv(std::ostream& out, const SpaceTimeField& field, const TimeWindow& window);

struct FieldCsv {
  double h = 0.0;
  double k = 0.0;
  double T = 0.0;
  double delta0 = 0.0;
  double delta1 = 0.0;
  std::size_t rows = 0;
  std::size_t columns = 0;
  std::vector<double> values;  // row-major
};

FieldCsv read_field_csv(std::istream& in);

}  // namespace parastab
