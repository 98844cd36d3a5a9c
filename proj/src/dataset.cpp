#include "deelbo/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "deelbo/rng.hpp"

namespace deelbo {

RegressionData generate_toy_regression(int n, double noise_var,
                                       std::uint64_t seed, double interval_lo,
                                       double interval_hi) {
  if (n < 2)
    throw std::invalid_argument("generate_toy_regression: need N >= 2");
  if (noise_var < 0.0)
    throw std::invalid_argument("generate_toy_regression: noise_var >= 0");
  if (!(interval_lo < interval_hi))
    throw std::invalid_argument("generate_toy_regression: empty interval");
  Rng rng(seed);
  RegressionData data;
  data.X.resize(n, 1);
  data.y.resize(n);
  const double noise_std = std::sqrt(noise_var);
  for (int i = 0; i < n; ++i) {
    const double x =
        interval_lo + (interval_hi - interval_lo) * rng.uniform01();
    data.X(i, 0) = x;
    data.y[i] = std::sin(3.0 * x) + noise_std * rng.normal();
  }
  return data;
}

ClassificationData generate_toy_classification(int n, int num_classes,
                                               std::uint64_t seed,
                                               double spread, double radius,
                                               double angle_offset) {
  if (num_classes < 2)
    throw std::invalid_argument("generate_toy_classification: C >= 2");
  if (n < 2 * num_classes)
    throw std::invalid_argument("generate_toy_classification: need N >= 2C");
  Rng rng(seed);
  ClassificationData data;
  data.X.resize(n, 2);
  data.labels.resize(n);
  data.num_classes = num_classes;
  // Stratified counts: the first (n mod C) classes get one extra.
  int row = 0;
  for (int c = 0; c < num_classes; ++c) {
    const int count = n / num_classes + (c < n % num_classes ? 1 : 0);
    const double angle = 2.0 * M_PI * c / num_classes + angle_offset;
    const double mx = radius * std::cos(angle);
    const double my = radius * std::sin(angle);
    for (int i = 0; i < count; ++i, ++row) {
      data.X(row, 0) = mx + spread * rng.normal();
      data.X(row, 1) = my + spread * rng.normal();
      data.labels[row] = c + 1;
    }
  }
  return data;
}

namespace {

void append_number(std::ostringstream& out, double value) {
  out.precision(17);
  out << value;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, int line_number) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("csv line " + std::to_string(line_number) +
                                ": non-numeric cell '" + cell + "'");
  }
  while (used < cell.size() &&
         (cell[used] == ' ' || cell[used] == '\r' || cell[used] == '\t'))
    ++used;
  if (used != cell.size())
    throw std::invalid_argument("csv line " + std::to_string(line_number) +
                                ": trailing junk in cell '" + cell + "'");
  if (!std::isfinite(value))
    throw std::invalid_argument("csv line " + std::to_string(line_number) +
                                ": non-finite value");
  return value;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

RawTable parse_table(const std::string& text) {
  RawTable table;
  std::istringstream stream(text);
  std::string line;
  int line_number = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (line_number == 1) {
      table.header = cells;
      continue;
    }
    if (cells.size() != table.header.size())
      throw std::invalid_argument(
          "csv line " + std::to_string(line_number) + ": expected " +
          std::to_string(table.header.size()) + " cells, got " +
          std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) row.push_back(parse_cell(cell, line_number));
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty())
    throw std::invalid_argument("csv: missing header");
  if (table.rows.empty()) throw std::invalid_argument("csv: no data rows");
  return table;
}

}  // namespace

std::string regression_to_csv(const RegressionData& data) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < data.X.cols(); ++j)
    out << "x_" << (j + 1) << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
      append_number(out, data.X(i, j));
      out << ',';
    }
    append_number(out, data.y[i]);
    out << '\n';
  }
  return out.str();
}

std::string classification_to_csv(const ClassificationData& data) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < data.X.cols(); ++j)
    out << "x_" << (j + 1) << ',';
  out << "label\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
      append_number(out, data.X(i, j));
      out << ',';
    }
    out << data.labels[i] << '\n';
  }
  return out.str();
}

RegressionData parse_regression_csv(const std::string& text) {
  const RawTable table = parse_table(text);
  if (table.header.back() != "y")
    throw std::invalid_argument("csv: last column must be 'y'");
  const Eigen::Index h = static_cast<Eigen::Index>(table.header.size()) - 1;
  if (h < 1) throw std::invalid_argument("csv: need at least one feature");
  RegressionData data;
  data.X.resize(static_cast<Eigen::Index>(table.rows.size()), h);
  data.y.resize(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (Eigen::Index j = 0; j < h; ++j) data.X(i, j) = table.rows[i][j];
    data.y[static_cast<Eigen::Index>(i)] = table.rows[i][h];
  }
  return data;
}

ClassificationData parse_classification_csv(const std::string& text) {
  const RawTable table = parse_table(text);
  if (table.header.back() != "label")
    throw std::invalid_argument("csv: last column must be 'label'");
  const Eigen::Index h = static_cast<Eigen::Index>(table.header.size()) - 1;
  if (h < 1) throw std::invalid_argument("csv: need at least one feature");
  ClassificationData data;
  data.X.resize(static_cast<Eigen::Index>(table.rows.size()), h);
  data.labels.resize(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (Eigen::Index j = 0; j < h; ++j) data.X(i, j) = table.rows[i][j];
    const double raw = table.rows[i][h];
    const int label = static_cast<int>(raw);
    if (static_cast<double>(label) != raw || label < 1)
      throw std::invalid_argument("csv line " + std::to_string(i + 2) +
                                  ": label must be an integer >= 1");
    data.labels[static_cast<Eigen::Index>(i)] = label;
  }
  data.num_classes = data.labels.maxCoeff();
  return data;
}

RegressionData read_regression_csv(const std::string& path) {
  return parse_regression_csv(read_text_file(path));
}

ClassificationData read_classification_csv(const std::string& path) {
  return parse_classification_csv(read_text_file(path));
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace deelbo
