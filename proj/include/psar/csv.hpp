#pragma once

#include "psar/common.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace psar {

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// Splits one CSV line on commas; no quoting.
std::vector<std::string_view> split_csv_line(std::string_view line);

double parse_double(std::string_view field);
Index parse_index(std::string_view field);

struct DataTable {
  Vector y;
  Matrix x;
};

/// Header node_id,y,x1,...,xp with node ids 0..n-1 in order.
void write_data_csv(std::ostream& out, const Vector& y, const Matrix& x);
/// Rows may come in any order; node ids must cover 0..n-1 exactly once.
DataTable read_data_csv(std::istream& in);

}  // namespace psar
