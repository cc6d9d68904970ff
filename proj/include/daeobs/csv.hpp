#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace daeobs {

/// Shortest "%.17g"-style rendering, locale independent.
std::string format_g17(double v);

void write_csv_row(std::ostream& out, std::span<const double> values);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a numeric CSV with one header line; lines starting with '#' are
/// skipped. Throws ParseError with line/column on malformed input.
CsvTable read_csv(std::istream& in);

}  // namespace daeobs
