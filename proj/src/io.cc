#include "prefagg/io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace prefagg {
namespace {

std::string RecordError(std::size_t index, const std::string& what) {
  return "record " + std::to_string(index) + ": " + what;
}

const Json& Require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    Fail(ErrorCode::kValidation, where + ": missing field '" + key + "'");
  }
  return j.at(key);
}

double RequireNumber(const Json& j, const char* key, const std::string& where) {
  const Json& v = Require(j, key, where);
  if (!v.is_number()) Fail(ErrorCode::kValidation, where + ": field '" + key + "' is not a number");
  return v.get<double>();
}

std::int64_t RequireInteger(const Json& j, const char* key, const std::string& where) {
  const Json& v = Require(j, key, where);
  if (!v.is_number_integer()) {
    Fail(ErrorCode::kValidation, where + ": field '" + key + "' is not an integer");
  }
  return v.get<std::int64_t>();
}

Json VectorToJson(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vec VectorFromJson(const Json& j, const std::string& where) {
  if (!j.is_array()) Fail(ErrorCode::kValidation, where + " is not an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) Fail(ErrorCode::kValidation, where + " has a non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

bool ParseDouble(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

Json ParseJson(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    Fail(ErrorCode::kParse, source + ": parse error at byte " + std::to_string(e.byte) +
                                ": " + e.what());
  }
}

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kInput, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Json ReadJsonFile(const std::string& path) { return ParseJson(ReadTextFile(path), path); }

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kInput, "cannot write '" + path + "'");
  out << text;
  if (!out) Fail(ErrorCode::kInput, "write failed for '" + path + "'");
}

Json MatrixToJson(const Mat& m) {
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat MatrixFromJson(const Json& j, const std::string& what) {
  const auto rows = RequireInteger(j, "rows", what);
  const auto cols = RequireInteger(j, "cols", what);
  const Json& data = Require(j, "data", what);
  if (rows < 0 || cols < 0 || !data.is_array() ||
      data.size() != static_cast<std::size_t>(rows * cols)) {
    Fail(ErrorCode::kValidation, what + ": data length does not match rows x cols");
  }
  Mat m(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      const Json& v = data[static_cast<std::size_t>(r * cols + c)];
      if (!v.is_number()) Fail(ErrorCode::kValidation, what + ": non-numeric matrix entry");
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

Json DatasetToJson(const Dataset& dataset) {
  const auto& h = dataset.header;
  Json records = Json::array();
  for (const auto& rec : dataset.records) {
    records.push_back({{"user", rec.user},
                       {"feat0", VectorToJson(rec.feat0)},
                       {"feat1", VectorToJson(rec.feat1)},
                       {"o", rec.outcome}});
  }
  return {{"header",
           {{"N", h.num_users},
            {"d", h.dim},
            {"k", h.rank},
            {"B", h.bound},
            {"R_max", h.r_max},
            {"seed", h.seed}}},
          {"records", std::move(records)}};
}

Dataset DatasetFromJson(const Json& j) {
  Dataset dataset;
  const Json& header = Require(j, "header", "dataset");
  auto& h = dataset.header;
  h.num_users = static_cast<int>(RequireInteger(header, "N", "header"));
  h.dim = static_cast<int>(RequireInteger(header, "d", "header"));
  h.rank = static_cast<int>(RequireInteger(header, "k", "header"));
  h.bound = RequireNumber(header, "B", "header");
  h.r_max = RequireNumber(header, "R_max", "header");
  const Json& seed = Require(header, "seed", "header");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
    Fail(ErrorCode::kValidation, "header: field 'seed' is not an integer");
  }
  h.seed = seed.get<std::uint64_t>();
  if (h.num_users < 1 || h.dim < 1 || h.rank < 1 || h.rank > h.dim || !(h.bound > 0) ||
      !(h.r_max > 0)) {
    Fail(ErrorCode::kValidation, "header: dimensions or bounds out of range");
  }

  const Json& records = Require(j, "records", "dataset");
  if (!records.is_array()) Fail(ErrorCode::kValidation, "dataset: 'records' is not an array");
  dataset.records.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const std::string where = "record " + std::to_string(r);
    const Json& rec = records[r];
    ComparisonDatum datum;
    const auto user = RequireInteger(rec, "user", where);
    if (user < 0 || user >= h.num_users) {
      Fail(ErrorCode::kValidation, RecordError(r, "user " + std::to_string(user) + " out of range"));
    }
    datum.user = static_cast<int>(user);
    const auto outcome = RequireInteger(rec, "o", where);
    if (outcome != 0 && outcome != 1) {
      Fail(ErrorCode::kValidation,
           RecordError(r, "outcome o=" + std::to_string(outcome) + " outside {0,1}"));
    }
    datum.outcome = static_cast<int>(outcome);
    datum.feat0 = VectorFromJson(Require(rec, "feat0", where), where + " feat0");
    datum.feat1 = VectorFromJson(Require(rec, "feat1", where), where + " feat1");
    if (datum.feat0.size() != h.dim || datum.feat1.size() != h.dim) {
      Fail(ErrorCode::kValidation, RecordError(r, "feature length differs from d"));
    }
    if (!datum.feat0.allFinite() || !datum.feat1.allFinite()) {
      Fail(ErrorCode::kValidation, RecordError(r, "non-finite feature"));
    }
    dataset.records.push_back(std::move(datum));
  }
  return dataset;
}

void SaveDataset(const Dataset& dataset, const std::string& path) {
  WriteTextFile(path, DatasetToJson(dataset).dump() + "\n");
}

Dataset LoadDataset(const std::string& path) { return DatasetFromJson(ReadJsonFile(path)); }

Json ModelToJson(const RewardModel& model) {
  return {{"omega", MatrixToJson(model.omega)},
          {"thetas", MatrixToJson(model.thetas)},
          {"B", model.bound},
          {"R_max", model.r_max}};
}

RewardModel ModelFromJson(const Json& j) {
  RewardModel model;
  model.omega = MatrixFromJson(Require(j, "omega", "model"), "model omega");
  model.thetas = MatrixFromJson(Require(j, "thetas", "model"), "model thetas");
  model.bound = RequireNumber(j, "B", "model");
  model.r_max = RequireNumber(j, "R_max", "model");
  model.Validate();
  return model;
}

Json EstimateToJson(const EstimateFile& file) {
  const Estimate& e = file.estimate;
  Json designs = Json::array();
  for (const auto& d : e.designs) designs.push_back(MatrixToJson(d));
  return {{"omega_hat", MatrixToJson(e.omega_hat)},
          {"thetas_hat", MatrixToJson(e.thetas_hat)},
          {"designs", std::move(designs)},
          {"log_likelihood", e.log_likelihood},
          {"grad_norm", e.grad_norm},
          {"iterations", e.iterations},
          {"converged", e.converged},
          {"best_restart", e.best_restart},
          {"lambda", file.lambda},
          {"radius", file.radius},
          {"B", file.bound},
          {"R_max", file.r_max},
          {"N_p", file.per_user}};
}

EstimateFile EstimateFromJson(const Json& j) {
  EstimateFile file;
  Estimate& e = file.estimate;
  e.omega_hat = MatrixFromJson(Require(j, "omega_hat", "estimate"), "omega_hat");
  e.thetas_hat = MatrixFromJson(Require(j, "thetas_hat", "estimate"), "thetas_hat");
  const Json& designs = Require(j, "designs", "estimate");
  if (!designs.is_array()) Fail(ErrorCode::kValidation, "estimate: 'designs' is not an array");
  for (std::size_t i = 0; i < designs.size(); ++i) {
    e.designs.push_back(MatrixFromJson(designs[i], "design " + std::to_string(i)));
  }
  if (e.omega_hat.rows() != e.thetas_hat.rows() ||
      e.designs.size() != static_cast<std::size_t>(e.thetas_hat.cols())) {
    Fail(ErrorCode::kValidation, "estimate: inconsistent dimensions");
  }
  e.log_likelihood = RequireNumber(j, "log_likelihood", "estimate");
  e.grad_norm = RequireNumber(j, "grad_norm", "estimate");
  e.iterations = static_cast<int>(RequireInteger(j, "iterations", "estimate"));
  e.converged = Require(j, "converged", "estimate").get<bool>();
  e.best_restart = static_cast<int>(RequireInteger(j, "best_restart", "estimate"));
  file.lambda = RequireNumber(j, "lambda", "estimate");
  file.radius = RequireNumber(j, "radius", "estimate");
  file.bound = RequireNumber(j, "B", "estimate");
  file.r_max = RequireNumber(j, "R_max", "estimate");
  file.per_user = static_cast<int>(RequireInteger(j, "N_p", "estimate"));
  return file;
}

std::string FormatDouble(double x) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), x);
  if (ec != std::errc()) Fail(ErrorCode::kNumerical, "cannot format number");
  return std::string(buffer, ptr);
}

Mat ParseCsvMatrix(const std::string& text, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = SplitFields(line);
    std::vector<double> values;
    values.reserve(fields.size());
    int numeric = 0;
    for (const auto& f : fields) {
      double v = 0.0;
      if (ParseDouble(f, v)) ++numeric;
      values.push_back(v);
    }
    if (numeric == 0 && header_allowed) {
      header_allowed = false;
      continue;  // column names
    }
    header_allowed = false;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!ParseDouble(fields[c], v) || !std::isfinite(v)) {
        Fail(ErrorCode::kParse, source + ": line " + std::to_string(line_no) + ", field " +
                                    std::to_string(c + 1) + ": not a finite number");
      }
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      Fail(ErrorCode::kParse, source + ": line " + std::to_string(line_no) + " has " +
                                  std::to_string(values.size()) + " fields, expected " +
                                  std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) Fail(ErrorCode::kParse, source + ": no data rows");
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

Mat ReadCsvMatrix(const std::string& path) { return ParseCsvMatrix(ReadTextFile(path), path); }

std::string FormatCsvMatrix(const Mat& m, const std::vector<std::string>& header) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c > 0) out += ',';
    out += header[c];
  }
  if (!header.empty()) out += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ',';
      out += FormatDouble(m(r, c));
    }
    out += '\n';
  }
  return out;
}

void WriteCsvMatrix(const std::string& path, const Mat& m,
                    const std::vector<std::string>& header) {
  WriteTextFile(path, FormatCsvMatrix(m, header));
}

TrajectoryCatalog ReadCatalogCsv(const std::string& path) {
  return {ReadCsvMatrix(path).transpose()};
}

void WriteCatalogCsv(const std::string& path, const TrajectoryCatalog& catalog) {
  WriteCsvMatrix(path, catalog.features.transpose());
}

OpinionProfile ReadOpinionsCsv(const std::string& path) {
  OpinionProfile profile{ReadCsvMatrix(path)};
  profile.Validate();
  return profile;
}

std::string FormatFitLogCsv(const std::vector<FitLogEntry>& log) {
  std::string out = "iter,objective,grad_norm\n";
  for (const auto& e : log) {
    out += std::to_string(e.iter) + ',' + FormatDouble(e.objective) + ',' +
           FormatDouble(e.grad_norm) + '\n';
  }
  return out;
}

}  // namespace prefagg
