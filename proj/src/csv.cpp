#include "psar/csv.hpp"

#include <array>
#include <charconv>
#include <istream>
#include <ostream>

namespace psar {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_double(std::string_view field) {
  field = trim(field);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw Error(ErrorKind::IoError, "not a number: '" + std::string(field) + "'");
  }
  return v;
}

Index parse_index(std::string_view field) {
  field = trim(field);
  long long v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw Error(ErrorKind::IoError, "not an integer: '" + std::string(field) + "'");
  }
  return static_cast<Index>(v);
}

void write_data_csv(std::ostream& out, const Vector& y, const Matrix& x) {
  out << "node_id,y";
  for (Index j = 0; j < x.cols(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (Index i = 0; i < y.size(); ++i) {
    out << i << ',' << format_double(y[i]);
    for (Index j = 0; j < x.cols(); ++j) out << ',' << format_double(x(i, j));
    out << '\n';
  }
}

DataTable read_data_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoError, "empty data file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || trim(header[0]) != "node_id" || trim(header[1]) != "y") {
    throw Error(ErrorKind::IoError, "data header must start with 'node_id,y' and name at least one covariate");
  }
  const Index p = static_cast<Index>(header.size()) - 2;
  std::vector<std::pair<Index, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != p + 2) {
      throw Error(ErrorKind::IoError, "row " + std::to_string(rows.size() + 1) + " has the wrong field count");
    }
    std::vector<double> vals(p + 1);
    for (Index k = 0; k <= p; ++k) vals[k] = parse_double(fields[k + 1]);
    rows.emplace_back(parse_index(fields[0]), std::move(vals));
  }
  const Index n = static_cast<Index>(rows.size());
  DataTable t{Vector(n), Matrix(n, p)};
  std::vector<bool> seen(n, false);
  for (const auto& [id, vals] : rows) {
    if (id < 0 || id >= n || seen[id]) {
      throw Error(ErrorKind::IoError, "node ids must be 0..n-1 without repeats (got " + std::to_string(id) + ")");
    }
    seen[id] = true;
    t.y[id] = vals[0];
    for (Index j = 0; j < p; ++j) t.x(id, j) = vals[j + 1];
  }
  return t;
}

}  // namespace psar
