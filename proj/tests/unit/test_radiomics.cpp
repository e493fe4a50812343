#include <doctest.h>

#include <cmath>
#include <numbers>

#include "../oracle/oracle.hpp"
#include "helpers.hpp"
#include "mindsets/radiomics.hpp"
#include "mindsets/rng.hpp"

using namespace mindsets;

namespace {

RegionOfInterest line_roi(const std::vector<double>& values, int axis = 1) {
  std::vector<Index3> vox;
  for (std::size_t n = 0; n < values.size(); ++n) {
    Index3 v{0, 0, 0};
    v[static_cast<std::size_t>(axis)] = static_cast<int>(n);
    vox.push_back(v);
  }
  return RegionOfInterest(1, vox, values);
}

RegionOfInterest box_roi(int a, int b, int c, double value = 1.0, Spacing sp = {1, 1, 1}) {
  std::vector<Index3> vox;
  for (int k = 0; k < c; ++k)
    for (int j = 0; j < b; ++j)
      for (int i = 0; i < a; ++i) vox.push_back({i, j, k});
  return RegionOfInterest(1, vox, std::vector<double>(vox.size(), value), sp);
}

std::vector<int> bins_of(const RegionOfInterest& roi, int ng) { return discretize(roi, ng).bins; }

double mass(const TextureMatrix& m, std::size_t r, std::size_t c) { return m.normalized()[r * m.cols + c]; }

}  // namespace

TEST_SUITE("radiomics") {
  TEST_CASE("discretization edges") {
    CHECK(bins_of(line_roi({0, 10}), 2) == std::vector<int>{1, 2});
    CHECK(bins_of(line_roi({4, 4, 4}), 8) == std::vector<int>{1, 1, 1});
    CHECK(bins_of(line_roi({0, 1, 2, 3}), 2) == std::vector<int>{1, 1, 2, 2});
  }

  TEST_CASE("first order on a constant roi") {
    const auto f = first_order_features(line_roi({5, 5, 5, 5}), 4);
    CHECK(f.at("firstorder_mean") == 5.0);
    CHECK(f.at("firstorder_variance") == 0.0);
    CHECK(f.at("firstorder_entropy") == 0.0);
    CHECK(f.at("firstorder_uniformity") == 1.0);
    CHECK(f.at("firstorder_range") == 0.0);
    CHECK(f.at("firstorder_skewness") == 0.0);
    CHECK(f.at("firstorder_kurtosis") == 0.0);
  }

  TEST_CASE("first order hand arithmetic") {
    const auto f = first_order_features(line_roi({1, 2, 3, 4}), 4);
    CHECK(f.at("firstorder_mean") == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(f.at("firstorder_variance") == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(f.at("firstorder_root_mean_squared") == doctest::Approx(std::sqrt(7.5)).epsilon(1e-15));
    CHECK(f.at("firstorder_median") == doctest::Approx(2.5));
    CHECK(f.at("firstorder_percentile_10") == doctest::Approx(1.3));
    CHECK(f.at("firstorder_interquartile_range") == doctest::Approx(1.5));
    const auto g = first_order_features(line_roi({0, 0, 1, 1}), 2);
    CHECK(g.at("firstorder_entropy") == doctest::Approx(1.0));
    CHECK(g.at("firstorder_uniformity") == doctest::Approx(0.5));
  }

  TEST_CASE("total energy scales with voxel volume") {
    const RegionOfInterest roi(1, {{0, 0, 0}, {1, 0, 0}}, {2.0, 3.0}, {2.0, 1.0, 0.5});
    const auto f = first_order_features(roi, 4);
    CHECK(f.at("firstorder_energy") == 13.0);
    CHECK(f.at("firstorder_total_energy") == 13.0);
  }

  TEST_CASE("shape of a single voxel") {
    const auto f = shape_features(box_roi(1, 1, 1));
    CHECK(f.at("shape_volume") == 1.0);
    CHECK(f.at("shape_surface_area") == 6.0);
    CHECK(f.at("shape_elongation") == 1.0);
    CHECK(f.at("shape_flatness") == 1.0);
    CHECK(f.at("shape_maximum_3d_diameter") == 0.0);
  }

  TEST_CASE("shape of a 2x2x2 block") {
    const auto f = shape_features(box_roi(2, 2, 2));
    CHECK(f.at("shape_volume") == 8.0);
    CHECK(f.at("shape_surface_area") == 24.0);
    CHECK(f.at("shape_sphericity") == doctest::Approx(0.80600).epsilon(1e-5));
    CHECK(f.at("shape_sphericity") == doctest::Approx(std::cbrt(std::numbers::pi) * std::pow(48.0, 2.0 / 3.0) / 24.0));
    CHECK(f.at("shape_maximum_3d_diameter") == doctest::Approx(std::sqrt(3.0)));
    CHECK(f.at("shape_elongation") == doctest::Approx(1.0));
  }

  TEST_CASE("box surface area is closed form") {
    SplitMix64 rng(5);
    for (int t = 0; t < 30; ++t) {
      const int a = 1 + static_cast<int>(rng.below(6)), b = 1 + static_cast<int>(rng.below(6)),
                c = 1 + static_cast<int>(rng.below(6));
      const auto f = shape_features(box_roi(a, b, c));
      CHECK(f.at("shape_surface_area") == 2.0 * (a * b + b * c + c * a));
      CHECK(f.at("shape_volume") == a * b * c);
    }
  }

  TEST_CASE("anisotropic spacing scales faces per axis") {
    const auto f = shape_features(box_roi(1, 1, 1, 1.0, {2.0, 3.0, 5.0}));
    CHECK(f.at("shape_volume") == 30.0);
    CHECK(f.at("shape_surface_area") == 2.0 * (6.0 + 15.0 + 10.0));
  }

  TEST_CASE("planar roi has exactly zero least axis") {
    const auto f = shape_features(box_roi(3, 2, 1));
    CHECK(f.at("shape_least_axis_length") == 0.0);
    CHECK(f.at("shape_flatness") == 0.0);
  }

  TEST_CASE("glcm of a single pair") {
    const auto d = discretize(line_roi({1, 2}), 2);
    const auto m = glcm_matrix(d);
    CHECK(mass(m, 0, 1) == 0.5);
    CHECK(mass(m, 1, 0) == 0.5);
    CHECK(mass(m, 0, 0) == 0.0);
    CHECK(mass(m, 1, 1) == 0.0);
  }

  TEST_CASE("glcm of a constant block") {
    const auto m = glcm_matrix(discretize(box_roi(2, 2, 2, 3.0), 4));
    CHECK(mass(m, 0, 0) == 1.0);
    CHECK(glcm_features(m).at("glcm_contrast") == 0.0);
  }

  TEST_CASE("glcm of a single voxel is empty with zero features") {
    const auto m = glcm_matrix(discretize(box_roi(1, 1, 1), 2));
    CHECK(m.total == 0.0);
    for (const auto& [name, v] : glcm_features(m)) CHECK(v == 0.0);
  }

  TEST_CASE("glcm feature fixtures") {
    TextureMatrix diag{TextureKind::GLCM, 2, 2, {1, 0, 0, 1}, 2, 2};
    auto f = glcm_features(diag);
    CHECK(f.at("glcm_contrast") == 0.0);
    CHECK(f.at("glcm_joint_energy") == 0.5);
    TextureMatrix uniform{TextureKind::GLCM, 2, 2, {1, 1, 1, 1}, 4, 2};
    f = glcm_features(uniform);
    CHECK(f.at("glcm_joint_entropy") == doctest::Approx(2.0));
    CHECK(f.at("glcm_maximum_probability") == 0.25);
    TextureMatrix corner{TextureKind::GLCM, 2, 2, {3, 0, 0, 0}, 3, 2};
    CHECK(glcm_features(corner).at("glcm_joint_entropy") == 0.0);
  }

  TEST_CASE("wrong matrix kind is rejected") {
    TextureMatrix m{TextureKind::GLRLM, 1, 1, {1}, 1, 1};
    CHECK(testing::error_code([&] { glcm_features(m); }) == Errc::WrongMatrixKind);
  }

  TEST_CASE("run length along a line") {
    const auto d = discretize(line_roi({1, 1, 1, 1}), 2);
    const auto m = glrlm_matrix(d, Index3{0, 1, 0});
    CHECK(m.cols == 4);
    CHECK(m.at(0, 3) == 1.0);
    CHECK(m.total == 1.0);
    CHECK(glrlm_features(m).at("glrlm_rp") == 0.25);
    const auto alt = glrlm_matrix(discretize(line_roi({1, 2, 1, 2}), 2), Index3{0, 1, 0});
    CHECK(alt.cols == 1);
    CHECK(alt.total == 4.0);
  }

  TEST_CASE("single voxel has one run per direction") {
    const auto m = glrlm_matrix(discretize(box_roi(1, 1, 1), 2));
    CHECK(m.cols == 1);
    CHECK(m.at(0, 0) == 13.0);
  }

  TEST_CASE("size zones") {
    auto m = glszm_matrix(discretize(box_roi(2, 2, 2), 2));
    CHECK(m.total == 1.0);
    CHECK(m.at(0, 7) == 1.0);
    CHECK(glszm_features(m).at("glszm_zp") == 0.125);
    const RegionOfInterest diag(1, {{0, 0, 0}, {1, 1, 1}}, {5.0, 5.0});
    m = glszm_matrix(discretize(diag, 2));
    CHECK(m.total == 1.0);
    CHECK(m.at(0, 1) == 1.0);
    const auto gap = glszm_matrix(discretize(line_roi({1, 9, 1}), 2));
    CHECK(gap.total == 3.0);
    CHECK(gap.cols == 1);
  }

  TEST_CASE("dependence counts") {
    auto m = gldm_matrix(discretize(box_roi(1, 1, 1), 2));
    CHECK(m.at(0, 0) == 1.0);
    m = gldm_matrix(discretize(box_roi(2, 2, 2), 2));
    CHECK(m.at(0, 7) == 8.0);
    m = gldm_matrix(discretize(line_roi({1, 2, 3, 4}), 4), 10.0);
    CHECK(m.at(0, 1) == 1.0);
    CHECK(m.at(1, 2) == 1.0);
    CHECK(m.at(2, 2) == 1.0);
    CHECK(m.at(3, 1) == 1.0);
  }

  TEST_CASE("neighbourhood tone differences") {
    auto m = ngtdm_matrix(discretize(line_roi({1, 2}), 2));
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.at(0, 1) == 1.0);
    CHECK(m.at(1, 1) == 1.0);
    m = ngtdm_matrix(discretize(box_roi(2, 2, 2, 4.0), 3));
    CHECK(m.at(0, 1) == 0.0);
    CHECK(ngtdm_features(m).at("ngtdm_coarseness") == kCoarsenessCap);
    m = ngtdm_matrix(discretize(box_roi(1, 1, 1), 2));
    CHECK(m.total == 0.0);
    const auto f = ngtdm_features(m);
    CHECK(f.at("ngtdm_coarseness") == kCoarsenessCap);
    CHECK(f.at("ngtdm_contrast") == 0.0);
  }

  TEST_CASE("catalog has a fixed order and size") {
    const auto cat = feature_catalog();
    CHECK(cat.size() == 109);
    CHECK(cat.front() == "shape_volume");
    CHECK(cat.back() == "ngtdm_strength");
    RadiomicsConfig only_shape;
    only_shape.enabled_families = {FeatureFamily::Shape};
    CHECK(feature_catalog(only_shape).size() == 16);
  }

  TEST_CASE("features agree with the independent oracle on random rois") {
    SplitMix64 rng(101);
    for (int trial = 0; trial < 40; ++trial) {
      oracle::Roi o;
      std::vector<Index3> vox;
      for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j)
          for (int i = 0; i < 3; ++i)
            if (rng.bernoulli(0.6)) {
              vox.push_back({i, j, k});
              o.voxels.push_back({i, j, k});
              o.intensities.push_back(static_cast<double>(rng.below(6)));
            }
      if (vox.empty()) continue;
      const int ng = 1 + static_cast<int>(rng.below(4));
      RadiomicsConfig cfg;
      cfg.bin_count = ng;
      const auto lib = extract_roi_features(RegionOfInterest(1, vox, o.intensities), cfg);
      const auto ref = oracle::all_features(o, ng, 0.0);
      REQUIRE(lib.size() == ref.size());
      for (const auto& [name, value] : lib) {
        INFO(name);
        CHECK(oracle::close(value, ref.at(name)));
      }
    }
  }

  TEST_CASE("extract_all equals per-label extraction and ignores job count") {
    std::vector<double> vol(4 * 4 * 2);
    std::vector<std::int32_t> lab(vol.size(), 0);
    SplitMix64 rng(9);
    for (std::size_t n = 0; n < vol.size(); ++n) {
      vol[n] = rng.uniform(0, 10);
      lab[n] = static_cast<std::int32_t>(rng.below(3));
    }
    const Volume3D v({4, 4, 2}, {1, 1, 1}, vol);
    const LabelMask m({4, 4, 2}, lab);
    RadiomicsConfig cfg;
    cfg.bin_count = 4;
    const auto one = extract_all(v, m, cfg, 1);
    const auto many = extract_all(v, m, cfg, 3);
    CHECK(one.labels == many.labels);
    CHECK(one.values == many.values);
    for (std::size_t r = 0; r < one.labels.size(); ++r) {
      const auto f = extract_roi_features(extract_roi(v, m, one.labels[r]), cfg);
      for (std::size_t c = 0; c < f.size(); ++c) CHECK(one.values[r][c] == f.entries()[c].second);
    }
    const auto empty = extract_all(v, LabelMask({4, 4, 2}, std::vector<std::int32_t>(vol.size(), 0)), cfg);
    CHECK(empty.empty());
  }

  TEST_CASE("fragment csv round trip") {
    const auto dir = testing::scratch_dir("rad_fragment");
    std::vector<double> vol(27);
    for (std::size_t n = 0; n < vol.size(); ++n) vol[n] = static_cast<double>(n % 7) * 1.1;
    std::vector<std::int32_t> lab(27, 2);
    lab[0] = 5;
    lab[1] = 5;
    const auto frag = extract_all(Volume3D({3, 3, 3}, {1, 1, 1}, vol), LabelMask({3, 3, 3}, lab), {});
    write_fragment_csv(frag, dir / "f.csv", {"note"});
    const auto back = read_fragment_csv(dir / "f.csv");
    CHECK(back.labels == frag.labels);
    CHECK(back.feature_names == frag.feature_names);
    CHECK(back.values == frag.values);
    CHECK(frag.flatten().front().first == "s2_shape_volume");
  }
}
