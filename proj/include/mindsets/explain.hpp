#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/matrix.hpp"

namespace mindsets {

/// Maps a feature matrix to per-row class probabilities.
using ProbabilityFn = std::function<Matrix(const Matrix&)>;

enum class ImportanceMetric { Accuracy, Auc };

std::string_view to_string(ImportanceMetric m) noexcept;
ImportanceMetric parse_importance_metric(std::string_view text);

struct FeatureImportance {
  std::string name;
  double mean = 0.0;
  double std = 0.0;  ///< population std over repeats
  int repeats = 0;
};

struct ImportanceReport {
  std::vector<FeatureImportance> features;  ///< input column order
  ImportanceMetric metric = ImportanceMetric::Accuracy;
  double baseline = 0.0;
};

void to_json(nlohmann::json& j, const ImportanceReport& r);

/// importance(f) = baseline - mean metric over `repeats` seeded shuffles of column f.
/// Throws DimMismatch, InvalidArgument.
ImportanceReport permutation_importance(const ProbabilityFn& model, const Matrix& x, std::span<const int> labels,
                                        std::span<const std::string> names, ImportanceMetric metric, int repeats,
                                        std::uint64_t seed);

/// Row order produced for column `column`, repeat `repeat`.
std::vector<std::size_t> permutation_order(std::size_t rows, std::uint64_t seed, std::size_t column, int repeat);

struct ParsedFeature {
  bool radiomics = false;
  int structure = 0;
  std::string feature;
  int month = 0;
};

/// "s<label>_<feature>_m<month>" -> radiomics; names not starting with
/// s<digits>_ are multi-omics. Throws UnparseableName for s<digits>_ names
/// without a month suffix.
ParsedFeature parse_feature_name(const std::string& name);

inline constexpr const char* kMultiOmicsGroup = "multi-omics";

struct GroupedImportance {
  std::map<std::string, double> by_timepoint;  ///< "m0", "m3", ... and "multi-omics"
  std::map<std::string, double> by_structure;  ///< "s<label>" and "multi-omics"
  double total = 0.0;
};

void to_json(nlohmann::json& j, const GroupedImportance& g);

GroupedImportance group_by_timepoint(const ImportanceReport& report);

}  // namespace mindsets
