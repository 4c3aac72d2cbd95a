#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "prefagg/aggregate.h"
#include "prefagg/common.h"
#include "prefagg/mle.h"
#include "prefagg/population.h"
#include "prefagg/reward_model.h"

namespace prefagg {

using Json = nlohmann::json;

// Parses JSON text; malformed input raises kParse naming the byte offset.
Json ParseJson(const std::string& text, const std::string& source);
Json ReadJsonFile(const std::string& path);
std::string ReadTextFile(const std::string& path);
void WriteTextFile(const std::string& path, const std::string& text);

// Matrices as {"rows": r, "cols": c, "data": [row-major values]}.
Json MatrixToJson(const Mat& m);
Mat MatrixFromJson(const Json& j, const std::string& what);

Json DatasetToJson(const Dataset& dataset);
// Validation errors cite the offending record index.
Dataset DatasetFromJson(const Json& j);
void SaveDataset(const Dataset& dataset, const std::string& path);
Dataset LoadDataset(const std::string& path);

Json ModelToJson(const RewardModel& model);
RewardModel ModelFromJson(const Json& j);

// The estimate plus the pieces needed to rebuild confidence ellipsoids.
struct EstimateFile {
  Estimate estimate;
  double lambda = 0.01;
  double radius = 0.0;     // population confidence radius
  double bound = 1.0;
  double r_max = 1.0;
  int per_user = 0;
};

Json EstimateToJson(const EstimateFile& file);
EstimateFile EstimateFromJson(const Json& j);

// Shortest decimal text that reads back to the same double.
std::string FormatDouble(double x);

// Numeric CSV without a header. Rows must all have the same length; errors
// name the line and field.
Mat ReadCsvMatrix(const std::string& path);
Mat ParseCsvMatrix(const std::string& text, const std::string& source);
std::string FormatCsvMatrix(const Mat& m, const std::vector<std::string>& header = {});
void WriteCsvMatrix(const std::string& path, const Mat& m,
                    const std::vector<std::string>& header = {});

// One row per trajectory; the catalog stores trajectories as columns.
TrajectoryCatalog ReadCatalogCsv(const std::string& path);
void WriteCatalogCsv(const std::string& path, const TrajectoryCatalog& catalog);

OpinionProfile ReadOpinionsCsv(const std::string& path);

std::string FormatFitLogCsv(const std::vector<FitLogEntry>& log);

}  // namespace prefagg
