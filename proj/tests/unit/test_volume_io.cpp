#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "mindsets/rng.hpp"
#include "mindsets/volume_io.hpp"

using namespace mindsets;
namespace fs = std::filesystem;

namespace {

template <typename T>
void put(std::vector<char>& buf, std::size_t at, T value) {
  std::memcpy(buf.data() + at, &value, sizeof(T));
}

// Hand-built little-endian NIfTI-1 single file with int16 payload.
void write_int16_nifti(const fs::path& path, std::array<std::int16_t, 3> dims, const std::vector<std::int16_t>& values,
                       float slope, float inter) {
  std::vector<char> buf(352, 0);
  put<std::int32_t>(buf, 0, 348);
  put<std::int16_t>(buf, 40, 3);
  for (int k = 0; k < 3; ++k) put<std::int16_t>(buf, 42 + 2 * k, dims[k]);
  for (int k = 3; k < 8; ++k) put<std::int16_t>(buf, 42 + 2 * k, 1);
  put<std::int16_t>(buf, 70, 4);
  put<std::int16_t>(buf, 72, 16);
  for (int k = 0; k < 8; ++k) put<float>(buf, 76 + 4 * k, 1.0f);
  put<float>(buf, 108, 352.0f);
  put<float>(buf, 112, slope);
  put<float>(buf, 116, inter);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  for (auto v : values) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf.insert(buf.end(), p, p + 2);
  }
  std::ofstream(path, std::ios::binary).write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

TEST_SUITE("volume_io") {
  TEST_CASE("nifti payload is read with identity scaling") {
    const auto dir = testing::scratch_dir("vio_identity");
    write_int16_nifti(dir / "v.nii", {2, 2, 2}, std::vector<std::int16_t>(8, 7), 1.0f, 0.0f);
    const auto v = load_volume(dir / "v.nii");
    CHECK(v.dims() == Dims{2, 2, 2});
    for (double x : v.data()) CHECK(x == 7.0);
  }

  TEST_CASE("nifti slope and intercept are applied") {
    const auto dir = testing::scratch_dir("vio_affine");
    write_int16_nifti(dir / "v.nii", {2, 2, 2}, std::vector<std::int16_t>(8, 7), 2.0f, 1.0f);
    const auto v = load_volume(dir / "v.nii");
    for (double x : v.data()) CHECK(x == 15.0);
  }

  TEST_CASE("zero slope is treated as one") {
    const auto dir = testing::scratch_dir("vio_zero_slope");
    write_int16_nifti(dir / "v.nii", {2, 1, 1}, {3, 4}, 0.0f, 0.0f);
    const auto v = load_volume(dir / "v.nii");
    CHECK(v.data()[0] == 3.0);
    CHECK(v.data()[1] == 4.0);
  }

  TEST_CASE("zero dimension is a corrupt header") {
    const auto dir = testing::scratch_dir("vio_zero_dim");
    write_int16_nifti(dir / "v.nii", {0, 4, 4}, {}, 1.0f, 0.0f);
    CHECK(testing::error_code([&] { load_volume(dir / "v.nii"); }) == Errc::CorruptHeader);
  }

  TEST_CASE("short payload is a corrupt header") {
    const auto dir = testing::scratch_dir("vio_short");
    write_int16_nifti(dir / "v.nii", {2, 2, 2}, {1, 2, 3}, 1.0f, 0.0f);
    CHECK(testing::error_code([&] { load_volume(dir / "v.nii"); }) == Errc::CorruptHeader);
  }

  TEST_CASE("unknown magic is an unsupported format") {
    const auto dir = testing::scratch_dir("vio_magic");
    std::ofstream(dir / "junk.nii", std::ios::binary) << std::string(400, 'x');
    CHECK(testing::error_code([&] { load_volume(dir / "junk.nii"); }) == Errc::UnsupportedFormat);
  }

  TEST_CASE("nifti writer round trips through gzip and every datatype") {
    const auto dir = testing::scratch_dir("vio_nifti_rt");
    const Volume3D v({3, 2, 2}, {0.5, 1.0, 2.0}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    for (auto type : {NiftiType::U8, NiftiType::I16, NiftiType::I32, NiftiType::F32, NiftiType::F64}) {
      for (const char* name : {"a.nii", "a.nii.gz"}) {
        write_nifti(v, dir / name, type);
        const auto back = load_volume(dir / name);
        CHECK(back.dims() == v.dims());
        CHECK(back.spacing() == v.spacing());
        CHECK(std::equal(back.data().begin(), back.data().end(), v.data().begin()));
      }
    }
  }

  TEST_CASE("raw format round trip is bit exact") {
    const auto dir = testing::scratch_dir("vio_raw_rt");
    SplitMix64 rng(3);
    std::vector<double> data(5 * 4 * 3);
    for (auto& x : data) x = rng.normal(0.0, 1e3);
    const Volume3D v({5, 4, 3}, {0.7, 1.1, 2.5}, data);
    write_raw_volume(v, dir / "v");
    const auto back = load_volume(dir / "v.vol.json");
    CHECK(back.dims() == v.dims());
    CHECK(back.spacing() == v.spacing());
    CHECK(std::memcmp(back.data().data(), v.data().data(), data.size() * sizeof(double)) == 0);
  }

  TEST_CASE("non finite intensities are rejected") {
    CHECK(testing::error_code([] { Volume3D({2, 1, 1}, {1, 1, 1}, {1.0, std::nan("")}); }) == Errc::NonFiniteData);
  }

  TEST_CASE("mask label set") {
    const LabelMask m({3, 1, 1}, {0, 17, 3});
    CHECK(std::vector<std::int32_t>(m.label_set().begin(), m.label_set().end()) == std::vector<std::int32_t>{3, 17});
    const LabelMask empty({2, 1, 1}, {0, 0});
    CHECK(empty.label_set().empty());
  }

  TEST_CASE("fractional labels are rejected") {
    const auto dir = testing::scratch_dir("vio_frac");
    write_raw_volume(Volume3D({2, 1, 1}, {1, 1, 1}, {1.0, 2.5}), dir / "m");
    CHECK(testing::error_code([&] { load_mask(dir / "m.vol.json"); }) == Errc::NonIntegerLabels);
  }

  TEST_CASE("mask round trip") {
    const auto dir = testing::scratch_dir("vio_mask_rt");
    const LabelMask m({2, 2, 1}, {0, 3, 17, 3});
    write_raw_mask(m, dir / "m");
    const auto back = load_mask(dir / "m.vol.bin");
    CHECK(std::equal(back.labels().begin(), back.labels().end(), m.labels().begin()));
  }

  TEST_CASE("single voxel roi") {
    std::vector<double> vol(8, 0.0);
    vol[0] = 9.0;
    std::vector<std::int32_t> lab(8, 0);
    lab[0] = 1;
    const auto roi = extract_roi(Volume3D({2, 2, 2}, {1, 1, 1}, vol), LabelMask({2, 2, 2}, lab), 1);
    REQUIRE(roi.size() == 1);
    CHECK(roi.voxels()[0] == Index3{0, 0, 0});
    CHECK(roi.intensities()[0] == 9.0);
  }

  TEST_CASE("absent label and mismatched dims") {
    const Volume3D v({2, 2, 2}, {1, 1, 1}, std::vector<double>(8, 1.0));
    const LabelMask m({2, 2, 2}, std::vector<std::int32_t>(8, 1));
    CHECK(testing::error_code([&] { extract_roi(v, m, 5); }) == Errc::LabelAbsent);
    const LabelMask other({2, 2, 1}, std::vector<std::int32_t>(4, 1));
    CHECK(testing::error_code([&] { extract_roi(v, other, 1); }) == Errc::DimsMismatch);
  }

  TEST_CASE("full block roi is in k, j, i order") {
    std::vector<double> vol(8);
    for (std::size_t n = 0; n < 8; ++n) vol[n] = static_cast<double>(n);
    const auto roi =
        extract_roi(Volume3D({2, 2, 2}, {1, 1, 1}, vol), LabelMask({2, 2, 2}, std::vector<std::int32_t>(8, 1)), 1);
    const std::vector<Index3> expected = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0},
                                          {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
    CHECK(std::vector<Index3>(roi.voxels().begin(), roi.voxels().end()) == expected);
    for (std::size_t n = 0; n < 8; ++n) CHECK(roi.intensities()[n] == static_cast<double>(n));
  }

  TEST_CASE("roi voxel counts match a naive scan on random masks") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const Dims d{1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(8)};
      std::vector<std::int32_t> lab(voxel_count(d));
      for (auto& l : lab) l = static_cast<std::int32_t>(rng.below(4));
      const LabelMask m(d, lab);
      const Volume3D v(d, {1, 1, 1}, std::vector<double>(lab.size(), 1.0));
      for (auto label : m.label_set()) {
        const auto expected = static_cast<std::size_t>(std::count(lab.begin(), lab.end(), label));
        CHECK(extract_roi(v, m, label).size() == expected);
      }
    }
  }

  TEST_CASE("roi construction rejects empty and duplicate voxels") {
    CHECK(testing::error_code([] { RegionOfInterest(1, {}, {}); }) == Errc::EmptyRoi);
    CHECK(testing::error_code([] { RegionOfInterest(1, {{0, 0, 0}, {0, 0, 0}}, {1, 2}); }) == Errc::InvalidArgument);
  }
}
