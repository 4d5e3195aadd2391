#include "qrdual/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qrdual/errors.hpp"

namespace qrdual {

void Dataset::validate() const {
  if (response.size() < 1) throw DataError("dataset: need at least one sample");
  if (features.rows() != response.size()) {
    throw DataError("dataset: feature rows and response length disagree");
  }
  if (!response.allFinite() || !features.allFinite()) {
    throw DataError("dataset: non-finite entry");
  }
  for (const auto& s : feature_scaling) {
    if (!(s.scale > 0.0)) throw DataError("dataset: non-positive feature scale");
  }
  if (!(response_scaling.scale > 0.0)) {
    throw DataError("dataset: non-positive response scale");
  }
}

double Dataset::response_scale_hint() const {
  const auto n = static_cast<double>(response.size());
  const double mean = response.mean();
  if (response.size() < 2) return std::max(1.0, std::abs(mean));
  const double var = (response.array() - mean).square().sum() / (n - 1.0);
  const double sd = std::sqrt(std::max(var, 0.0));
  return sd > 0.0 ? sd : std::max(1.0, std::abs(mean));
}

Dataset make_dataset(Matrix features, Vector response) {
  Dataset d;
  d.features = std::move(features);
  d.response = std::move(response);
  d.validate();
  return d;
}

namespace {

ColumnScaling column_scaling(const Eigen::Ref<const Vector>& col) {
  const auto n = static_cast<double>(col.size());
  ColumnScaling s;
  s.mean = col.mean();
  if (col.size() >= 2) {
    const double var = (col.array() - s.mean).square().sum() / (n - 1.0);
    if (var > 0.0) s.scale = std::sqrt(var);
  }
  return s;
}

}  // namespace

Dataset normalize(const Dataset& data) {
  data.validate();
  Dataset out = data;
  out.feature_scaling.resize(data.n_features());
  for (Eigen::Index j = 0; j < data.n_features(); ++j) {
    const ColumnScaling s = column_scaling(data.features.col(j));
    out.feature_scaling[j] = s;
    out.features.col(j) = (data.features.col(j).array() - s.mean) / s.scale;
  }
  const ColumnScaling sy = column_scaling(data.response);
  out.response_scaling = sy;
  out.response = (data.response.array() - sy.mean) / sy.scale;
  out.normalized = true;
  return out;
}

Dataset denormalize(const Dataset& data) {
  if (!data.normalized) return data;
  Dataset out = data;
  for (Eigen::Index j = 0; j < data.n_features(); ++j) {
    const ColumnScaling& s = data.feature_scaling[j];
    out.features.col(j) = data.features.col(j).array() * s.scale + s.mean;
  }
  out.response =
      data.response.array() * data.response_scaling.scale + data.response_scaling.mean;
  out.normalized = false;
  out.feature_scaling.clear();
  out.response_scaling = ColumnScaling{};
  return out;
}

Dataset apply_normalization(const Dataset& data,
                            const std::vector<ColumnScaling>& feature_scaling,
                            const ColumnScaling& response_scaling) {
  data.validate();
  if (static_cast<Eigen::Index>(feature_scaling.size()) != data.n_features()) {
    throw DataError("apply_normalization: scaling size mismatch");
  }
  Dataset out = data;
  for (Eigen::Index j = 0; j < data.n_features(); ++j) {
    const ColumnScaling& s = feature_scaling[j];
    if (!(s.scale > 0.0)) throw DataError("apply_normalization: non-positive scale");
    out.features.col(j) = (data.features.col(j).array() - s.mean) / s.scale;
  }
  out.response = (data.response.array() - response_scaling.mean) / response_scaling.scale;
  out.normalized = true;
  out.feature_scaling = feature_scaling;
  out.response_scaling = response_scaling;
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim whitespace and a possible trailing carriage return.
    auto begin = cell.find_first_not_of(" \t\r");
    auto end = cell.find_last_not_of(" \t\r");
    cells.push_back(begin == std::string::npos ? std::string()
                                               : cell.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  if (cell.empty()) {
    throw DataError("csv: missing value at row " + std::to_string(row) + ", column " + col);
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw DataError("csv: non-numeric value '" + cell + "' at row " + std::to_string(row) +
                    ", column " + col);
  }
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty file '" + path + "'");
  CsvTable table;
  table.header = split_csv_line(line);
  if (table.header.empty()) throw DataError("csv: empty header in '" + path + "'");
  std::size_t row_index = 1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.header.size()) {
      throw DataError("csv: row " + std::to_string(row_index) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(table.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      row[j] = parse_cell(cells[j], row_index, table.header[j]);
    }
    table.rows.push_back(std::move(row));
    ++row_index;
  }
  if (table.rows.empty()) throw DataError("csv: no data rows in '" + path + "'");
  return table;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& response_column) {
  CsvTable table = read_csv(path);
  auto it = std::find(table.header.begin(), table.header.end(), response_column);
  if (it == table.header.end()) {
    throw DataError("csv: response column '" + response_column + "' not found");
  }
  const auto resp_idx = static_cast<std::size_t>(it - table.header.begin());
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto d = static_cast<Eigen::Index>(table.header.size() - 1);

  Dataset data;
  data.features.resize(n, d);
  data.response.resize(n);
  data.response_name = response_column;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j != resp_idx) data.feature_names.push_back(table.header[j]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (j == resp_idx) {
        data.response(i) = table.rows[i][j];
      } else {
        data.features(i, k++) = table.rows[i][j];
      }
    }
  }
  data.validate();
  return data;
}

Matrix load_csv_features(const std::string& path, const std::vector<std::string>& columns) {
  CsvTable table = read_csv(path);
  std::vector<std::size_t> idx;
  for (const auto& name : columns) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw DataError("csv: column '" + name + "' not found");
    idx.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  Matrix out(static_cast<Eigen::Index>(table.rows.size()),
             static_cast<Eigen::Index>(columns.size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = table.rows[i][idx[j]];
    }
  }
  return out;
}

}  // namespace qrdual
