#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mindsets {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;
using Index3 = std::array<int, 3>;

inline std::size_t voxel_count(const Dims& d) noexcept { return d[0] * d[1] * d[2]; }

/// Scalar voxel grid, x-fastest. Immutable once constructed.
class Volume3D {
 public:
  /// Throws CorruptHeader on zero dims, non-positive spacing or a payload of
  /// the wrong length; NonFiniteData on NaN/Inf intensities.
  Volume3D(Dims dims, Spacing spacing, std::vector<double> data);

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::span<const double> data() const noexcept { return data_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return i + dims_[0] * (j + dims_[1] * k);
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const noexcept { return data_[index(i, j, k)]; }

  double voxel_volume() const noexcept { return spacing_[0] * spacing_[1] * spacing_[2]; }

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<double> data_;
};

/// Integer label grid aligned with a Volume3D.
class LabelMask {
 public:
  LabelMask(Dims dims, std::vector<std::int32_t> labels);

  const Dims& dims() const noexcept { return dims_; }
  std::span<const std::int32_t> labels() const noexcept { return labels_; }
  /// Sorted distinct nonzero labels.
  std::span<const std::int32_t> label_set() const noexcept { return label_set_; }
  bool contains(std::int32_t label) const noexcept;

  std::int32_t at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return labels_[i + dims_[0] * (j + dims_[1] * k)];
  }

 private:
  Dims dims_;
  std::vector<std::int32_t> labels_;
  std::vector<std::int32_t> label_set_;
};

/// Voxels of one labeled structure. Coordinates are grid indices (i, j, k),
/// kept in lexicographic (k, j, i) order by extract_roi.
class RegionOfInterest {
 public:
  /// Throws EmptyRoi when voxels is empty, InvalidArgument on duplicate
  /// coordinates or mismatched lengths.
  RegionOfInterest(std::int32_t label, std::vector<Index3> voxels, std::vector<double> intensities,
                   Spacing spacing = {1.0, 1.0, 1.0});

  std::int32_t label() const noexcept { return label_; }
  std::span<const Index3> voxels() const noexcept { return voxels_; }
  std::span<const double> intensities() const noexcept { return intensities_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return voxels_.size(); }
  double voxel_volume() const noexcept { return spacing_[0] * spacing_[1] * spacing_[2]; }

 private:
  std::int32_t label_;
  std::vector<Index3> voxels_;
  std::vector<double> intensities_;
  Spacing spacing_;
};

/// Loads a NIfTI-1 single file (.nii / .nii.gz) or the raw format
/// (<name>.vol.json + <name>.vol.bin). scl_slope/scl_inter are applied.
Volume3D load_volume(const std::filesystem::path& path);

/// As load_volume, then every value must be a non-negative integer within 1e-6.
LabelMask load_mask(const std::filesystem::path& path);

/// Converts a loaded volume into a mask; throws NonIntegerLabels.
LabelMask mask_from_volume(const Volume3D& volume);

/// Throws DimsMismatch or LabelAbsent.
RegionOfInterest extract_roi(const Volume3D& volume, const LabelMask& mask, std::int32_t label);

/// Writes <stem>.vol.json and <stem>.vol.bin (little-endian f64). `path` may
/// name either file or the bare stem.
void write_raw_volume(const Volume3D& volume, const std::filesystem::path& path);
void write_raw_mask(const LabelMask& mask, const std::filesystem::path& path, Spacing spacing = {1, 1, 1});

enum class NiftiType : std::int16_t { U8 = 2, I16 = 4, I32 = 8, F32 = 16, F64 = 64 };

/// Writes a single-file NIfTI-1 (gzip-compressed if the name ends in .gz).
/// Stored values are (x - inter) / slope converted to the requested type.
void write_nifti(const Volume3D& volume, const std::filesystem::path& path, NiftiType type = NiftiType::F64,
                 double slope = 1.0, double inter = 0.0);

/// Path of the JSON sidecar for a raw volume named by any of its two files or its stem.
std::filesystem::path raw_header_path(const std::filesystem::path& path);

}  // namespace mindsets
