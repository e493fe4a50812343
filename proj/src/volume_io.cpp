#include "mindsets/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "mindsets/error.hpp"

namespace mindsets {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::int32_t kNiftiHeaderSize = 348;
constexpr const char* kRawFormatTag = "mindsets-raw-volume";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::uint8_t> read_all_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof(buf));
    if (n < 0) {
      gzclose(f);
      throw Error(Errc::CorruptHeader, "decompression failed for " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

template <typename T>
T read_le(const std::uint8_t* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::vector<std::uint8_t>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

void check_finite(std::span<const double> data, const fs::path& path) {
  for (double v : data) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteData, "non-finite voxel value in " + path.string());
  }
}

Volume3D parse_nifti(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  if (bytes.size() < static_cast<std::size_t>(kNiftiHeaderSize)) {
    throw Error(Errc::UnsupportedFormat, "file too short for a NIfTI-1 header: " + path.string());
  }
  bool swap = false;
  const auto sizeof_hdr = read_le<std::int32_t>(bytes.data(), false);
  if (sizeof_hdr != kNiftiHeaderSize) {
    if (read_le<std::int32_t>(bytes.data(), true) != kNiftiHeaderSize)
      throw Error(Errc::UnsupportedFormat, "sizeof_hdr is not 348 in " + path.string());
    swap = true;
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw Error(Errc::UnsupportedFormat, "magic is not \"n+1\" (single-file NIfTI-1) in " + path.string());
  }
  const auto ndim = read_le<std::int16_t>(bytes.data() + 40, swap);
  if (ndim < 1 || ndim > 7) throw Error(Errc::CorruptHeader, "dim[0] out of range in " + path.string());
  Dims dims{1, 1, 1};
  for (int d = 0; d < 3; ++d) {
    if (d >= ndim) break;
    const auto n = read_le<std::int16_t>(bytes.data() + 42 + 2 * d, swap);
    if (n <= 0) throw Error(Errc::CorruptHeader, "non-positive dimension in " + path.string());
    dims[static_cast<std::size_t>(d)] = static_cast<std::size_t>(n);
  }
  Spacing spacing{1, 1, 1};
  for (int d = 0; d < 3; ++d) {
    if (d >= ndim) break;
    const double s = read_le<float>(bytes.data() + 80 + 4 * d, swap);
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(Errc::CorruptHeader, "non-positive voxel spacing in " + path.string());
    spacing[static_cast<std::size_t>(d)] = s;
  }
  const auto datatype = read_le<std::int16_t>(bytes.data() + 70, swap);
  const double vox_offset = read_le<float>(bytes.data() + 108, swap);
  double slope = read_le<float>(bytes.data() + 112, swap);
  double inter = read_le<float>(bytes.data() + 116, swap);
  if (slope == 0.0 || !std::isfinite(slope)) slope = 1.0;
  if (!std::isfinite(inter)) inter = 0.0;
  if (!(vox_offset >= kNiftiHeaderSize)) throw Error(Errc::CorruptHeader, "vox_offset < 348 in " + path.string());

  std::size_t width = 0;
  switch (static_cast<NiftiType>(datatype)) {
    case NiftiType::U8: width = 1; break;
    case NiftiType::I16: width = 2; break;
    case NiftiType::I32: width = 4; break;
    case NiftiType::F32: width = 4; break;
    case NiftiType::F64: width = 8; break;
    default:
      throw Error(Errc::UnsupportedFormat,
                  "unsupported NIfTI datatype " + std::to_string(datatype) + " in " + path.string());
  }
  const std::size_t n = voxel_count(dims);
  const auto offset = static_cast<std::size_t>(vox_offset);
  if (bytes.size() < offset + n * width) {
    throw Error(Errc::CorruptHeader, "voxel payload shorter than header promises in " + path.string());
  }
  std::vector<double> data(n);
  const std::uint8_t* p = bytes.data() + offset;
  for (std::size_t i = 0; i < n; ++i, p += width) {
    double raw = 0.0;
    switch (static_cast<NiftiType>(datatype)) {
      case NiftiType::U8: raw = *p; break;
      case NiftiType::I16: raw = read_le<std::int16_t>(p, swap); break;
      case NiftiType::I32: raw = read_le<std::int32_t>(p, swap); break;
      case NiftiType::F32: raw = read_le<float>(p, swap); break;
      case NiftiType::F64: raw = read_le<double>(p, swap); break;
    }
    data[i] = raw * slope + inter;
  }
  check_finite(data, path);
  return Volume3D(dims, spacing, std::move(data));
}

fs::path stem_of(const fs::path& path) {
  std::string s = path.string();
  for (std::string_view suffix : {".vol.json", ".vol.bin"}) {
    if (ends_with(s, suffix)) return s.substr(0, s.size() - suffix.size());
  }
  return path;
}

Volume3D load_raw(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw Error(Errc::Io, "cannot open " + header_path.string());
  json header;
  try {
    header = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::UnsupportedFormat, "invalid JSON header " + header_path.string() + ": " + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kRawFormatTag) {
    throw Error(Errc::UnsupportedFormat, "not a raw volume header: " + header_path.string());
  }
  if (header.value("dtype", "") != "f64" || header.value("byte_order", "little") != "little") {
    throw Error(Errc::UnsupportedFormat, "raw volumes must be little-endian f64: " + header_path.string());
  }
  Dims dims{};
  Spacing spacing{};
  try {
    const auto& d = header.at("dims");
    const auto& s = header.at("spacing");
    if (d.size() != 3 || s.size() != 3) throw Error(Errc::CorruptHeader, "dims/spacing must have 3 entries");
    for (std::size_t a = 0; a < 3; ++a) {
      const auto n = d[a].get<std::int64_t>();
      if (n <= 0) throw Error(Errc::CorruptHeader, "non-positive dimension in " + header_path.string());
      dims[a] = static_cast<std::size_t>(n);
      spacing[a] = s[a].get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptHeader, "malformed dims/spacing in " + header_path.string() + ": " + e.what());
  }
  const fs::path payload = header_path.parent_path() / header.value("payload", stem_of(header_path).filename().string() + ".vol.bin");
  const auto bytes = read_all(payload);
  const std::size_t n = voxel_count(dims);
  if (bytes.size() < n * 8) throw Error(Errc::CorruptHeader, "payload shorter than header promises: " + payload.string());
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = read_le<double>(bytes.data() + 8 * i, std::endian::native != std::endian::little);
  check_finite(data, payload);
  if (!(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0)) {
    throw Error(Errc::CorruptHeader, "non-positive spacing in " + header_path.string());
  }
  return Volume3D(dims, spacing, std::move(data));
}

}  // namespace

Volume3D::Volume3D(Dims dims, Spacing spacing, std::vector<double> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  if (dims_[0] == 0 || dims_[1] == 0 || dims_[2] == 0) throw Error(Errc::CorruptHeader, "volume dims must be positive");
  for (double s : spacing_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(Errc::CorruptHeader, "volume spacing must be positive and finite");
  }
  if (data_.size() != voxel_count(dims_)) throw Error(Errc::CorruptHeader, "volume data length does not match dims");
  for (double v : data_) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteData, "volume contains NaN or Inf");
  }
}

LabelMask::LabelMask(Dims dims, std::vector<std::int32_t> labels) : dims_(dims), labels_(std::move(labels)) {
  if (dims_[0] == 0 || dims_[1] == 0 || dims_[2] == 0) throw Error(Errc::CorruptHeader, "mask dims must be positive");
  if (labels_.size() != voxel_count(dims_)) throw Error(Errc::CorruptHeader, "mask length does not match dims");
  for (auto l : labels_) {
    if (l < 0) throw Error(Errc::NonIntegerLabels, "mask labels must be non-negative");
    if (l != 0) label_set_.push_back(l);
  }
  std::sort(label_set_.begin(), label_set_.end());
  label_set_.erase(std::unique(label_set_.begin(), label_set_.end()), label_set_.end());
}

bool LabelMask::contains(std::int32_t label) const noexcept {
  return std::binary_search(label_set_.begin(), label_set_.end(), label);
}

RegionOfInterest::RegionOfInterest(std::int32_t label, std::vector<Index3> voxels, std::vector<double> intensities,
                                   Spacing spacing)
    : label_(label), voxels_(std::move(voxels)), intensities_(std::move(intensities)), spacing_(spacing) {
  if (voxels_.empty()) throw Error(Errc::EmptyRoi, "region of interest has no voxels");
  if (voxels_.size() != intensities_.size()) {
    throw Error(Errc::InvalidArgument, "ROI coordinate and intensity counts differ");
  }
  auto sorted = voxels_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(Errc::InvalidArgument, "ROI contains duplicate voxel coordinates");
  }
  for (double v : intensities_) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteData, "ROI intensity is not finite");
  }
  for (double s : spacing_) {
    if (!(s > 0.0)) throw Error(Errc::InvalidArgument, "ROI spacing must be positive");
  }
}

fs::path raw_header_path(const fs::path& path) { return fs::path(stem_of(path).string() + ".vol.json"); }

Volume3D load_volume(const fs::path& path) {
  const std::string s = path.string();
  if (ends_with(s, ".vol.json") || ends_with(s, ".vol.bin")) return load_raw(raw_header_path(path));
  if (!fs::exists(path)) throw Error(Errc::Io, "no such file: " + s);
  const auto bytes = read_all_gz(path);
  if (!bytes.empty() && bytes[0] == '{') return load_raw(path);
  return parse_nifti(bytes, path);
}

LabelMask mask_from_volume(const Volume3D& volume) {
  std::vector<std::int32_t> labels(volume.data().size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = volume.data()[i];
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-6) {
      throw Error(Errc::NonIntegerLabels, "mask value " + std::to_string(v) + " is not an integer");
    }
    if (r < 0 || r > std::numeric_limits<std::int32_t>::max()) {
      throw Error(Errc::NonIntegerLabels, "mask value " + std::to_string(v) + " is not a non-negative label");
    }
    labels[i] = static_cast<std::int32_t>(r);
  }
  return LabelMask(volume.dims(), std::move(labels));
}

LabelMask load_mask(const fs::path& path) {
  try {
    return mask_from_volume(load_volume(path));
  } catch (const Error& e) {
    if (e.code() == Errc::NonIntegerLabels) throw Error(Errc::NonIntegerLabels, std::string(e.what()) + " in " + path.string());
    throw;
  }
}

RegionOfInterest extract_roi(const Volume3D& volume, const LabelMask& mask, std::int32_t label) {
  if (volume.dims() != mask.dims()) throw Error(Errc::DimsMismatch, "volume and mask dims differ");
  if (!mask.contains(label)) throw Error(Errc::LabelAbsent, "label " + std::to_string(label) + " not in mask");
  std::vector<Index3> voxels;
  std::vector<double> intensities;
  const auto& d = volume.dims();
  const auto labels = mask.labels();
  const auto data = volume.data();
  std::size_t idx = 0;
  for (std::size_t k = 0; k < d[2]; ++k) {
    for (std::size_t j = 0; j < d[1]; ++j) {
      for (std::size_t i = 0; i < d[0]; ++i, ++idx) {
        if (labels[idx] == label) {
          voxels.push_back({static_cast<int>(i), static_cast<int>(j), static_cast<int>(k)});
          intensities.push_back(data[idx]);
        }
      }
    }
  }
  return RegionOfInterest(label, std::move(voxels), std::move(intensities), volume.spacing());
}

void write_raw_volume(const Volume3D& volume, const fs::path& path) {
  const fs::path stem = stem_of(path);
  const fs::path header_path = stem.string() + ".vol.json";
  const fs::path payload_path = stem.string() + ".vol.bin";
  json header = {
      {"format", kRawFormatTag},
      {"version", 1},
      {"dims", {volume.dims()[0], volume.dims()[1], volume.dims()[2]}},
      {"spacing", {volume.spacing()[0], volume.spacing()[1], volume.spacing()[2]}},
      {"dtype", "f64"},
      {"byte_order", "little"},
      {"payload", payload_path.filename().string()},
  };
  {
    std::ofstream out(header_path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + header_path.string());
    out << header.dump(2) << '\n';
  }
  std::vector<std::uint8_t> bytes(volume.data().size() * 8);
  for (std::size_t i = 0; i < volume.data().size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(volume.data()[i]);
    for (int b = 0; b < 8; ++b) bytes[8 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  std::ofstream out(payload_path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + payload_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + payload_path.string());
}

void write_raw_mask(const LabelMask& mask, const fs::path& path, Spacing spacing) {
  std::vector<double> data(mask.labels().begin(), mask.labels().end());
  write_raw_volume(Volume3D(mask.dims(), spacing, std::move(data)), path);
}

void write_nifti(const Volume3D& volume, const fs::path& path, NiftiType type, double slope, double inter) {
  if (slope == 0.0) throw Error(Errc::InvalidArgument, "slope must be nonzero");
  std::vector<std::uint8_t> buf(352, 0);
  put<std::int32_t>(buf, 0, kNiftiHeaderSize);
  put<std::int16_t>(buf, 40, 3);
  for (int d = 0; d < 3; ++d) {
    put<std::int16_t>(buf, 42 + 2 * static_cast<std::size_t>(d), static_cast<std::int16_t>(volume.dims()[static_cast<std::size_t>(d)]));
    put<float>(buf, 80 + 4 * static_cast<std::size_t>(d), static_cast<float>(volume.spacing()[static_cast<std::size_t>(d)]));
  }
  for (int d = 3; d < 7; ++d) put<std::int16_t>(buf, 42 + 2 * static_cast<std::size_t>(d), 1);
  put<float>(buf, 76, 1.0f);
  std::size_t width = 0;
  switch (type) {
    case NiftiType::U8: width = 1; break;
    case NiftiType::I16: width = 2; break;
    case NiftiType::I32: width = 4; break;
    case NiftiType::F32: width = 4; break;
    case NiftiType::F64: width = 8; break;
  }
  put<std::int16_t>(buf, 70, static_cast<std::int16_t>(type));
  put<std::int16_t>(buf, 72, static_cast<std::int16_t>(width * 8));
  put<float>(buf, 108, 352.0f);
  put<float>(buf, 112, static_cast<float>(slope));
  put<float>(buf, 116, static_cast<float>(inter));
  std::memcpy(buf.data() + 344, "n+1\0", 4);

  buf.resize(352 + volume.data().size() * width);
  std::uint8_t* p = buf.data() + 352;
  for (double v : volume.data()) {
    const double stored = (v - inter) / slope;
    switch (type) {
      case NiftiType::U8: *p = static_cast<std::uint8_t>(std::lround(stored)); break;
      case NiftiType::I16: { auto x = static_cast<std::int16_t>(std::lround(stored)); std::memcpy(p, &x, 2); break; }
      case NiftiType::I32: { auto x = static_cast<std::int32_t>(std::lround(stored)); std::memcpy(p, &x, 4); break; }
      case NiftiType::F32: { auto x = static_cast<float>(stored); std::memcpy(p, &x, 4); break; }
      case NiftiType::F64: std::memcpy(p, &stored, 8); break;
    }
    p += width;
  }

  if (ends_with(path.string(), ".gz")) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (f == nullptr) throw Error(Errc::Io, "cannot write " + path.string());
    const int n = gzwrite(f, buf.data(), static_cast<unsigned>(buf.size()));
    gzclose(f);
    if (n != static_cast<int>(buf.size())) throw Error(Errc::Io, "write failed for " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
}

}  // namespace mindsets
