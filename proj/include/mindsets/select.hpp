#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/matrix.hpp"

namespace mindsets {

struct MiResult {
  double value = 0.0;     ///< nats
  bool degenerate = false;  ///< x had a single distinct value
};

/// Plug-in mutual information between x and class labels y. Continuous x is
/// binned by equal frequency (tied values share the bin of their first rank);
/// categorical x uses its raw codes. Throws LengthMismatch, SingleClass.
MiResult mutual_information(std::span<const double> x, std::span<const int> y, int bins = 10,
                            bool categorical = false);

/// Pearson correlation, 0 when either column is constant. Throws LengthMismatch.
double correlation(std::span<const double> a, std::span<const double> b);

struct DroppedFeature {
  std::string feature;
  std::string reason;
  std::string rival;
};

struct SelectionResult {
  std::vector<std::string> kept;  ///< descending MI, ties by name
  std::vector<DroppedFeature> dropped;
  std::map<std::string, double> scores;
  double corr_threshold = 0.7;
  int mi_bins = 10;
};

void to_json(nlohmann::json& j, const SelectionResult& r);
void from_json(const nlohmann::json& j, SelectionResult& r);

struct SelectOptions {
  double corr_threshold = 0.7;
  int mi_bins = 10;
};

/// Correlated-pair elimination keeping the member more informative about the
/// target. `categorical` may be empty (all continuous).
SelectionResult sulov_select(const Matrix& x, std::span<const int> labels, std::span<const std::string> names,
                             const std::vector<bool>& categorical = {}, const SelectOptions& options = {});

std::vector<std::string> truncate_top_k(const SelectionResult& result, std::size_t k);

}  // namespace mindsets
