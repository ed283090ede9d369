#include <charconv>
#include <optional>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <unordered_map>

#include "fdboot/curves.hpp"
#include "fdboot/format.hpp"

namespace fdboot {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

double parse_value(std::string_view field, std::size_t line_no, std::size_t column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw ParseError("row " + std::to_string(line_no) + ", column " + std::to_string(column) +
                     ": cannot parse '" + std::string(field) + "' as a number");
  }
  if (!std::isfinite(value)) {
    throw ParseError("row " + std::to_string(line_no) + ", column " + std::to_string(column) +
                     ": non-finite value");
  }
  return value;
}

}  // namespace

FunctionalDataset load_dataset(std::istream& in) {
  std::optional<Eigen::VectorXd> grid_points;
  std::vector<std::string> labels;
  std::unordered_map<std::string, std::size_t> label_index;
  std::vector<std::vector<std::vector<double>>> rows_by_group;
  Eigen::Index width = -1;

  std::string raw;
  std::size_t line_no = 0;
  bool seen_data = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (line.empty()) continue;

    if (line.starts_with("#grid")) {
      if (grid_points) throw ParseError("row " + std::to_string(line_no) + ": duplicate grid row");
      if (seen_data) {
        throw ParseError("row " + std::to_string(line_no) + ": grid row must precede data rows");
      }
      const auto fields = split_fields(line);
      if (fields.front() != "#grid") {
        throw ParseError("row " + std::to_string(line_no) + ": malformed grid row");
      }
      Eigen::VectorXd t(static_cast<Eigen::Index>(fields.size() - 1));
      for (std::size_t c = 1; c < fields.size(); ++c) {
        t[static_cast<Eigen::Index>(c - 1)] = parse_value(fields[c], line_no, c);
      }
      width = t.size();
      grid_points = std::move(t);
      continue;
    }
    if (line.front() == '#') continue;

    const auto fields = split_fields(line);
    const auto n_values = static_cast<Eigen::Index>(fields.size() - 1);
    if (width < 0) width = n_values;
    if (n_values != width || n_values == 0) {
      throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " values, found " + std::to_string(n_values));
    }
    const std::string label(fields.front());
    if (label.empty()) throw ParseError("row " + std::to_string(line_no) + ": empty group label");

    std::vector<double> values(static_cast<std::size_t>(n_values));
    for (std::size_t c = 1; c < fields.size(); ++c) {
      values[c - 1] = parse_value(fields[c], line_no, c);
    }
    auto [it, inserted] = label_index.try_emplace(label, labels.size());
    if (inserted) {
      labels.push_back(label);
      rows_by_group.emplace_back();
    }
    rows_by_group[it->second].push_back(std::move(values));
    seen_data = true;
  }

  if (labels.size() < 2) {
    throw ValidationError("K >= 2 required, found " + std::to_string(labels.size()) +
                          " group label(s)");
  }

  Grid grid = grid_points ? Grid(std::move(*grid_points)) : Grid::uniform(width);

  std::vector<Eigen::MatrixXd> groups;
  groups.reserve(rows_by_group.size());
  for (const auto& rows : rows_by_group) {
    Eigen::MatrixXd g(static_cast<Eigen::Index>(rows.size()), width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      g.row(static_cast<Eigen::Index>(r)) =
          Eigen::Map<const Eigen::RowVectorXd>(rows[r].data(), width);
    }
    groups.push_back(std::move(g));
  }
  return FunctionalDataset(std::move(grid), std::move(groups), std::move(labels));
}

FunctionalDataset load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  return load_dataset(in);
}

void save_dataset(const FunctionalDataset& data, std::ostream& out,
                  const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "#grid";
  for (Eigen::Index i = 0; i < data.grid_size(); ++i) {
    out << ',' << format_double(data.grid().points()[i]);
  }
  out << '\n';
  for (std::size_t g = 0; g < data.group_count(); ++g) {
    const auto& curves = data.group(g);
    for (Eigen::Index j = 0; j < curves.rows(); ++j) {
      out << data.labels()[g];
      for (Eigen::Index i = 0; i < curves.cols(); ++i) out << ',' << format_double(curves(j, i));
      out << '\n';
    }
  }
}

void save_dataset_file(const FunctionalDataset& data, const std::string& path,
                       const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write dataset file '" + path + "'");
  save_dataset(data, out, comments);
}

}  // namespace fdboot
