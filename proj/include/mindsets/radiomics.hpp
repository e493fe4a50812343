#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/volume_io.hpp"

namespace mindsets {

/// ROI intensities mapped to gray levels 1..bin_count by equal-width bins over
/// [min, max]. A constant ROI maps every voxel to level 1.
struct DiscretizedRoi {
  RegionOfInterest roi;
  int bin_count;
  std::vector<int> bins;      ///< parallel to roi.voxels()
  std::vector<double> edges;  ///< bin_count + 1 ascending edges
};

DiscretizedRoi discretize(const RegionOfInterest& roi, int bin_count);

/// Ordered (name, value) pairs; names unique, values finite.
class FeatureMap {
 public:
  void add(std::string name, double value);
  void append(const FeatureMap& other);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  /// Throws InvalidArgument when absent.
  double at(std::string_view name) const;
  std::optional<double> find(std::string_view name) const;

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  const std::vector<std::pair<std::string, double>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

enum class TextureKind { GLCM, GLRLM, GLSZM, GLDM, NGTDM };

std::string_view to_string(TextureKind kind) noexcept;

/// Raw (unnormalized) texture counts, gray levels on rows (level g at row g-1).
///  GLCM : Ng x Ng co-occurrence counts, symmetric.
///  GLRLM: Ng x Lmax, column j-1 counts runs of length j (all 13 directions summed).
///  GLSZM: Ng x Zmax, column j-1 counts 26-connected zones of size j.
///  GLDM : Ng x 27, column j-1 counts voxels with j-1 dependent neighbours.
///  NGTDM: Ng x 2, column 0 = n_i, column 1 = s_i.
struct TextureMatrix {
  TextureKind kind;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> counts;
  /// Total mass: pairs (GLCM), runs, zones, voxels (GLDM) or counted voxels (NGTDM).
  double total = 0.0;
  /// Gray-level count of the discretization the matrix came from.
  int bin_count = 0;

  double at(std::size_t r, std::size_t c) const noexcept { return counts[r * cols + c]; }
  /// counts / total (all zeros when total == 0). Not meaningful for NGTDM.
  std::vector<double> normalized() const;
};

/// 13 unique neighbour offsets of the 26-neighbourhood (one of each +/- pair).
std::span<const Index3> unique_directions() noexcept;

FeatureMap first_order_features(const RegionOfInterest& roi, int bin_count);
FeatureMap shape_features(const RegionOfInterest& roi);

TextureMatrix glcm_matrix(const DiscretizedRoi& d, int distance = 1);
FeatureMap glcm_features(const TextureMatrix& m);

TextureMatrix glrlm_matrix(const DiscretizedRoi& d);
/// Runs along a single direction only.
TextureMatrix glrlm_matrix(const DiscretizedRoi& d, const Index3& direction);
FeatureMap glrlm_features(const TextureMatrix& m);
FeatureMap glrlm_features(const DiscretizedRoi& d);

TextureMatrix glszm_matrix(const DiscretizedRoi& d);
FeatureMap glszm_features(const TextureMatrix& m);
FeatureMap glszm_features(const DiscretizedRoi& d);

TextureMatrix gldm_matrix(const DiscretizedRoi& d, double alpha = 0.0);
FeatureMap gldm_features(const TextureMatrix& m);
FeatureMap gldm_features(const DiscretizedRoi& d, double alpha = 0.0);

TextureMatrix ngtdm_matrix(const DiscretizedRoi& d);
FeatureMap ngtdm_features(const TextureMatrix& m);
FeatureMap ngtdm_features(const DiscretizedRoi& d);

/// NGTDM coarseness reported when sum(p_i * s_i) is zero.
inline constexpr double kCoarsenessCap = 1e6;

enum class FeatureFamily { Shape, FirstOrder, GLCM, GLRLM, GLSZM, GLDM, NGTDM };

std::string_view to_string(FeatureFamily family) noexcept;
FeatureFamily parse_family(std::string_view name);

struct RadiomicsConfig {
  int bin_count = 32;
  double gldm_alpha = 0.0;
  std::vector<FeatureFamily> enabled_families = {FeatureFamily::Shape, FeatureFamily::FirstOrder, FeatureFamily::GLCM,
                                                 FeatureFamily::GLRLM, FeatureFamily::GLSZM, FeatureFamily::GLDM,
                                                 FeatureFamily::NGTDM};

  bool enabled(FeatureFamily f) const noexcept;
  void validate() const;
};

void to_json(nlohmann::json& j, const RadiomicsConfig& c);
void from_json(const nlohmann::json& j, RadiomicsConfig& c);

/// Feature names for the enabled families, in catalog order.
std::vector<std::string> feature_catalog(const RadiomicsConfig& config = {});

/// Every enabled family for one ROI, in catalog order.
FeatureMap extract_roi_features(const RegionOfInterest& roi, const RadiomicsConfig& config);

/// Per-structure feature rows for one scan, sorted by label.
struct RadiomicsFragment {
  std::vector<std::int32_t> labels;
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> values;  ///< one row per label

  bool empty() const noexcept { return labels.empty(); }
  /// ("s<label>_<feature>", value) pairs, label-major.
  std::vector<std::pair<std::string, double>> flatten() const;
};

/// Extracts every label in mask.label_set(). jobs > 1 spreads labels over
/// threads; output is identical for any job count.
RadiomicsFragment extract_all(const Volume3D& volume, const LabelMask& mask, const RadiomicsConfig& config,
                              int jobs = 1);

/// CSV with header "label,<feature names>" and one row per label.
void write_fragment_csv(const RadiomicsFragment& fragment, const std::filesystem::path& path,
                        const std::vector<std::string>& comments = {});
RadiomicsFragment read_fragment_csv(const std::filesystem::path& path);

}  // namespace mindsets
