#include "mindsets/radiomics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>
#include <atomic>

#include <Eigen/Dense>

#include "mindsets/csv.hpp"
#include "mindsets/error.hpp"

namespace mindsets {

namespace {

constexpr std::array<Index3, 13> kDirections = {{
    {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
    {1, 1, 0}, {1, -1, 0}, {1, 0, 1}, {1, 0, -1}, {0, 1, 1}, {0, 1, -1},
    {1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {1, -1, -1},
}};

constexpr std::array<Index3, 6> kFaces = {{
    {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1},
}};

std::array<Index3, 26> make_neighbourhood() {
  std::array<Index3, 26> out{};
  std::size_t n = 0;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dx != 0 || dy != 0 || dz != 0) out[n++] = {dx, dy, dz};
  return out;
}

const std::array<Index3, 26> kNeighbourhood = make_neighbourhood();

/// Dense bounding-box lookup: 0 outside the ROI, otherwise the voxel's value
/// (gray level, or 1 for plain membership).
class RoiGrid {
 public:
  RoiGrid(std::span<const Index3> voxels, std::span<const int> values) {
    lo_ = voxels[0];
    Index3 hi = voxels[0];
    for (const auto& v : voxels) {
      for (std::size_t a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], v[a]);
        hi[a] = std::max(hi[a], v[a]);
      }
    }
    for (std::size_t a = 0; a < 3; ++a) ext_[a] = hi[a] - lo_[a] + 1;
    cells_.assign(static_cast<std::size_t>(ext_[0]) * static_cast<std::size_t>(ext_[1]) * static_cast<std::size_t>(ext_[2]), 0);
    for (std::size_t n = 0; n < voxels.size(); ++n) cells_[offset(voxels[n])] = values.empty() ? 1 : values[n];
  }

  int get(const Index3& v) const noexcept {
    const int i = v[0] - lo_[0], j = v[1] - lo_[1], k = v[2] - lo_[2];
    if (i < 0 || j < 0 || k < 0 || i >= ext_[0] || j >= ext_[1] || k >= ext_[2]) return 0;
    return cells_[offset(v)];
  }

  std::size_t offset(const Index3& v) const noexcept {
    return static_cast<std::size_t>(v[0] - lo_[0]) +
           static_cast<std::size_t>(ext_[0]) *
               (static_cast<std::size_t>(v[1] - lo_[1]) + static_cast<std::size_t>(ext_[1]) * static_cast<std::size_t>(v[2] - lo_[2]));
  }

  std::size_t cell_count() const noexcept { return cells_.size(); }

 private:
  Index3 lo_{};
  std::array<int, 3> ext_{};
  std::vector<int> cells_;
};

Index3 add(const Index3& a, const Index3& b, int scale = 1) noexcept {
  return {a[0] + scale * b[0], a[1] + scale * b[1], a[2] + scale * b[2]};
}

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double plogp_sum(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

void require_kind(const TextureMatrix& m, TextureKind kind) {
  if (m.kind != kind) {
    throw Error(Errc::WrongMatrixKind,
                "expected " + std::string(to_string(kind)) + " matrix, got " + std::string(to_string(m.kind)));
  }
}

/// Features shared by the run-length, size-zone and dependence matrices: all are
/// gray level (rows, i = 1..Ng) by a size index (columns, j = 1..).
struct SizeMatrixStats {
  double short_emphasis = 0, long_emphasis = 0, gln = 0, glnn = 0, sn = 0, snn = 0, percentage = 0, glv = 0,
         sv = 0, entropy = 0, lgl = 0, hgl = 0, s_lgl = 0, s_hgl = 0, l_lgl = 0, l_hgl = 0;
};

SizeMatrixStats size_matrix_stats(const TextureMatrix& m) {
  SizeMatrixStats s;
  const double total = m.total;
  if (total <= 0.0) return s;
  std::vector<double> row_sum(m.rows, 0.0), col_sum(m.cols, 0.0);
  double weighted = 0.0;  // sum j * count: voxels covered
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double v = m.at(r, c);
      row_sum[r] += v;
      col_sum[c] += v;
      weighted += static_cast<double>(c + 1) * v;
    }
  }
  double mu_i = 0.0, mu_j = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) mu_i += static_cast<double>(r + 1) * row_sum[r] / total;
  for (std::size_t c = 0; c < m.cols; ++c) mu_j += static_cast<double>(c + 1) * col_sum[c] / total;
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double i = static_cast<double>(r + 1);
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double p = m.at(r, c) / total;
      if (p == 0.0) continue;
      const double j = static_cast<double>(c + 1);
      s.short_emphasis += p / (j * j);
      s.long_emphasis += p * j * j;
      s.glv += p * (i - mu_i) * (i - mu_i);
      s.sv += p * (j - mu_j) * (j - mu_j);
      s.entropy -= p * std::log2(p);
      s.lgl += p / (i * i);
      s.hgl += p * i * i;
      s.s_lgl += p / (i * i * j * j);
      s.s_hgl += p * i * i / (j * j);
      s.l_lgl += p * j * j / (i * i);
      s.l_hgl += p * i * i * j * j;
    }
  }
  for (double v : row_sum) {
    s.gln += v * v / total;
    s.glnn += (v / total) * (v / total);
  }
  for (double v : col_sum) {
    s.sn += v * v / total;
    s.snn += (v / total) * (v / total);
  }
  s.percentage = weighted > 0.0 ? total / weighted : 0.0;
  return s;
}

}  // namespace

std::span<const Index3> unique_directions() noexcept { return kDirections; }

std::string_view to_string(TextureKind kind) noexcept {
  switch (kind) {
    case TextureKind::GLCM: return "GLCM";
    case TextureKind::GLRLM: return "GLRLM";
    case TextureKind::GLSZM: return "GLSZM";
    case TextureKind::GLDM: return "GLDM";
    case TextureKind::NGTDM: return "NGTDM";
  }
  return "?";
}

std::vector<double> TextureMatrix::normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  if (total > 0.0)
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] / total;
  return out;
}

// ---------------------------------------------------------------------------
// FeatureMap

void FeatureMap::add(std::string name, double value) {
  if (!std::isfinite(value)) throw Error(Errc::NonFiniteData, "feature " + name + " is not finite");
  if (find(name)) throw Error(Errc::InvalidArgument, "duplicate feature name " + name);
  entries_.emplace_back(std::move(name), value);
}

void FeatureMap::append(const FeatureMap& other) {
  for (const auto& [name, value] : other) add(name, value);
}

std::optional<double> FeatureMap::find(std::string_view name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  return std::nullopt;
}

double FeatureMap::at(std::string_view name) const {
  if (auto v = find(name)) return *v;
  throw Error(Errc::InvalidArgument, "no feature named " + std::string(name));
}

// ---------------------------------------------------------------------------
// Discretization and first order

DiscretizedRoi discretize(const RegionOfInterest& roi, int bin_count) {
  if (bin_count < 1) throw Error(Errc::InvalidArgument, "bin_count must be >= 1");
  const auto values = roi.intensities();
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn_it, hi = *mx_it;
  DiscretizedRoi d{roi, bin_count, std::vector<int>(values.size(), 1), std::vector<double>(static_cast<std::size_t>(bin_count) + 1)};
  if (hi == lo) {
    for (int i = 0; i <= bin_count; ++i) d.edges[static_cast<std::size_t>(i)] = lo + i;
    return d;
  }
  const double width = (hi - lo) / bin_count;
  for (int i = 0; i <= bin_count; ++i) d.edges[static_cast<std::size_t>(i)] = lo + i * width;
  d.edges.back() = hi;
  for (std::size_t n = 0; n < values.size(); ++n) {
    const int b = static_cast<int>(std::floor((values[n] - lo) / width)) + 1;
    d.bins[n] = std::clamp(b, 1, bin_count);
  }
  return d;
}

FeatureMap first_order_features(const RegionOfInterest& roi, int bin_count) {
  const auto x = roi.intensities();
  const double n = static_cast<double>(x.size());
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());

  double sum = 0.0, energy = 0.0;
  for (double v : x) {
    sum += v;
    energy += v * v;
  }
  const double mean = sum / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    mad += std::abs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  mad /= n;

  const double p10 = percentile(sorted, 0.10);
  const double p90 = percentile(sorted, 0.90);
  double rsum = 0.0, rcount = 0.0;
  for (double v : x) {
    if (v >= p10 && v <= p90) {
      rsum += v;
      rcount += 1.0;
    }
  }
  double rmad = 0.0;
  if (rcount > 0.0) {
    const double rmean = rsum / rcount;
    for (double v : x)
      if (v >= p10 && v <= p90) rmad += std::abs(v - rmean);
    rmad /= rcount;
  }

  const auto d = discretize(roi, bin_count);
  std::vector<double> hist(static_cast<std::size_t>(bin_count), 0.0);
  for (int b : d.bins) hist[static_cast<std::size_t>(b - 1)] += 1.0;
  double uniformity = 0.0;
  for (auto& h : hist) {
    h /= n;
    uniformity += h * h;
  }

  FeatureMap f;
  f.add("firstorder_energy", energy);
  f.add("firstorder_total_energy", energy * roi.voxel_volume());
  f.add("firstorder_entropy", plogp_sum(hist));
  f.add("firstorder_minimum", sorted.front());
  f.add("firstorder_percentile_10", p10);
  f.add("firstorder_percentile_90", p90);
  f.add("firstorder_maximum", sorted.back());
  f.add("firstorder_mean", mean);
  f.add("firstorder_median", percentile(sorted, 0.5));
  f.add("firstorder_interquartile_range", percentile(sorted, 0.75) - percentile(sorted, 0.25));
  f.add("firstorder_range", sorted.back() - sorted.front());
  f.add("firstorder_mean_absolute_deviation", mad);
  f.add("firstorder_robust_mean_absolute_deviation", rmad);
  f.add("firstorder_root_mean_squared", std::sqrt(energy / n));
  f.add("firstorder_standard_deviation", std::sqrt(m2));
  f.add("firstorder_skewness", m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0);
  f.add("firstorder_kurtosis", m2 > 0.0 ? m4 / (m2 * m2) : 0.0);
  f.add("firstorder_variance", m2);
  f.add("firstorder_uniformity", uniformity);
  return f;
}

// ---------------------------------------------------------------------------
// Shape

FeatureMap shape_features(const RegionOfInterest& roi) {
  const auto voxels = roi.voxels();
  const auto& sp = roi.spacing();
  const RoiGrid grid(voxels, {});
  const std::array<double, 3> face_area = {sp[1] * sp[2], sp[0] * sp[2], sp[0] * sp[1]};

  double area = 0.0;
  std::vector<Index3> boundary;
  for (const auto& v : voxels) {
    bool exposed = false;
    for (std::size_t f = 0; f < kFaces.size(); ++f) {
      if (grid.get(add(v, kFaces[f])) == 0) {
        area += face_area[f / 2];
        exposed = true;
      }
    }
    if (exposed) boundary.push_back(v);
  }
  const double volume = static_cast<double>(voxels.size()) * roi.voxel_volume();

  // Extreme points of the voxel-centre set lie on voxels with an exposed face,
  // so the diameters only need boundary pairs.
  double d3 = 0.0, d_slice = 0.0, d_column = 0.0, d_row = 0.0;
  for (std::size_t a = 0; a < boundary.size(); ++a) {
    for (std::size_t b = a + 1; b < boundary.size(); ++b) {
      const double dx = (boundary[a][0] - boundary[b][0]) * sp[0];
      const double dy = (boundary[a][1] - boundary[b][1]) * sp[1];
      const double dz = (boundary[a][2] - boundary[b][2]) * sp[2];
      const double dist2 = dx * dx + dy * dy + dz * dz;
      d3 = std::max(d3, dist2);
      if (boundary[a][2] == boundary[b][2]) d_slice = std::max(d_slice, dist2);
      if (boundary[a][1] == boundary[b][1]) d_column = std::max(d_column, dist2);
      if (boundary[a][0] == boundary[b][0]) d_row = std::max(d_row, dist2);
    }
  }

  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& v : voxels) mean += Eigen::Vector3d(v[0] * sp[0], v[1] * sp[1], v[2] * sp[2]);
  mean /= static_cast<double>(voxels.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& v : voxels) {
    const Eigen::Vector3d d = Eigen::Vector3d(v[0] * sp[0], v[1] * sp[1], v[2] * sp[2]) - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(voxels.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov, Eigen::EigenvaluesOnly);
  // Lattice covariances are often exactly rank deficient; solver noise there is snapped to zero.
  const double major = std::max(solver.eigenvalues()[2], 0.0);
  const auto snap = [major](double v) { return v <= 1e-12 * major ? 0.0 : v; };
  const double least = snap(solver.eigenvalues()[0]);
  const double minor = snap(solver.eigenvalues()[1]);

  const double sphericity = std::cbrt(std::numbers::pi) * std::pow(6.0 * volume, 2.0 / 3.0) / area;

  FeatureMap f;
  f.add("shape_volume", volume);
  f.add("shape_surface_area", area);
  f.add("shape_surface_volume_ratio", area / volume);
  f.add("shape_sphericity", sphericity);
  f.add("shape_compactness1", volume / (std::sqrt(std::numbers::pi) * std::pow(area, 1.5)));
  f.add("shape_compactness2", 36.0 * std::numbers::pi * volume * volume / (area * area * area));
  f.add("shape_spherical_disproportion", 1.0 / sphericity);
  f.add("shape_maximum_3d_diameter", std::sqrt(d3));
  f.add("shape_maximum_2d_diameter_slice", std::sqrt(d_slice));
  f.add("shape_maximum_2d_diameter_column", std::sqrt(d_column));
  f.add("shape_maximum_2d_diameter_row", std::sqrt(d_row));
  f.add("shape_major_axis_length", 4.0 * std::sqrt(major));
  f.add("shape_minor_axis_length", 4.0 * std::sqrt(minor));
  f.add("shape_least_axis_length", 4.0 * std::sqrt(least));
  f.add("shape_elongation", major > 0.0 ? std::sqrt(minor / major) : 1.0);
  f.add("shape_flatness", major > 0.0 ? std::sqrt(least / major) : 1.0);
  return f;
}

// ---------------------------------------------------------------------------
// GLCM

TextureMatrix glcm_matrix(const DiscretizedRoi& d, int distance) {
  if (distance < 1) throw Error(Errc::InvalidArgument, "GLCM distance must be >= 1");
  const auto ng = static_cast<std::size_t>(d.bin_count);
  TextureMatrix m{TextureKind::GLCM, ng, ng, std::vector<double>(ng * ng, 0.0), 0.0, d.bin_count};
  const RoiGrid grid(d.roi.voxels(), d.bins);
  const auto voxels = d.roi.voxels();
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const auto a = static_cast<std::size_t>(d.bins[n] - 1);
    for (const auto& dir : kDirections) {
      const int other = grid.get(add(voxels[n], dir, distance));
      if (other == 0) continue;
      const auto b = static_cast<std::size_t>(other - 1);
      m.counts[a * ng + b] += 1.0;
      m.counts[b * ng + a] += 1.0;
      m.total += 2.0;
    }
  }
  return m;
}

FeatureMap glcm_features(const TextureMatrix& m) {
  require_kind(m, TextureKind::GLCM);
  const std::size_t ng = m.rows;
  const double ngd = static_cast<double>(m.bin_count > 0 ? m.bin_count : static_cast<int>(ng));
  static constexpr const char* kNames[] = {
      "glcm_autocorrelation", "glcm_joint_average", "glcm_cluster_prominence", "glcm_cluster_shade",
      "glcm_cluster_tendency", "glcm_contrast", "glcm_correlation", "glcm_difference_average",
      "glcm_difference_entropy", "glcm_difference_variance", "glcm_joint_energy", "glcm_joint_entropy",
      "glcm_imc1", "glcm_imc2", "glcm_idm", "glcm_idmn", "glcm_id", "glcm_idn", "glcm_inverse_variance",
      "glcm_maximum_probability", "glcm_sum_average", "glcm_sum_entropy", "glcm_sum_squares",
  };
  FeatureMap f;
  if (m.total <= 0.0) {
    for (const char* name : kNames) f.add(name, 0.0);
    return f;
  }
  const auto p = m.normalized();
  auto P = [&](std::size_t i, std::size_t j) { return p[i * ng + j]; };

  std::vector<double> px(ng, 0.0), py(ng, 0.0), psum(2 * ng + 1, 0.0), pdiff(ng, 0.0);
  for (std::size_t i = 0; i < ng; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      const double v = P(i, j);
      px[i] += v;
      py[j] += v;
      psum[i + j + 2] += v;
      pdiff[i > j ? i - j : j - i] += v;
    }
  }
  double mux = 0.0, muy = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    mux += static_cast<double>(i + 1) * px[i];
    muy += static_cast<double>(i + 1) * py[i];
  }
  double varx = 0.0, vary = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    varx += (static_cast<double>(i + 1) - mux) * (static_cast<double>(i + 1) - mux) * px[i];
    vary += (static_cast<double>(i + 1) - muy) * (static_cast<double>(i + 1) - muy) * py[i];
  }

  double autocorr = 0, prominence = 0, shade = 0, tendency = 0, contrast = 0, energy = 0, idm = 0, idmn = 0,
         id = 0, idn = 0, maxp = 0, sum_squares = 0, hxy1 = 0, hxy2 = 0, covariance = 0;
  for (std::size_t a = 0; a < ng; ++a) {
    const double i = static_cast<double>(a + 1);
    for (std::size_t b = 0; b < ng; ++b) {
      const double j = static_cast<double>(b + 1);
      const double v = P(a, b);
      const double pxy = px[a] * py[b];
      if (pxy > 0.0) {
        hxy1 -= v * std::log2(pxy);
        hxy2 -= pxy * std::log2(pxy);
      }
      if (v == 0.0) continue;
      const double s = i + j - mux - muy;
      autocorr += v * i * j;
      covariance += v * (i - mux) * (j - muy);
      prominence += v * s * s * s * s;
      shade += v * s * s * s;
      tendency += v * s * s;
      contrast += v * (i - j) * (i - j);
      energy += v * v;
      idm += v / (1.0 + (i - j) * (i - j));
      idmn += v / (1.0 + (i - j) * (i - j) / (ngd * ngd));
      id += v / (1.0 + std::abs(i - j));
      idn += v / (1.0 + std::abs(i - j) / ngd);
      maxp = std::max(maxp, v);
      sum_squares += v * (i - mux) * (i - mux);
    }
  }
  const double hxy = plogp_sum(p);
  const double hx = plogp_sum(px);
  const double hy = plogp_sum(py);

  double diff_avg = 0.0, inv_var = 0.0;
  for (std::size_t k = 0; k < ng; ++k) {
    diff_avg += static_cast<double>(k) * pdiff[k];
    if (k > 0) inv_var += pdiff[k] / static_cast<double>(k * k);
  }
  double diff_var = 0.0;
  for (std::size_t k = 0; k < ng; ++k) diff_var += (static_cast<double>(k) - diff_avg) * (static_cast<double>(k) - diff_avg) * pdiff[k];
  double sum_avg = 0.0;
  for (std::size_t k = 2; k <= 2 * ng; ++k) sum_avg += static_cast<double>(k) * psum[k];

  const double sd = std::sqrt(varx * vary);
  const double correlation = sd > 0.0 ? covariance / sd : 0.0;
  const double hmax = std::max(hx, hy);
  const double imc1 = hmax > 0.0 ? (hxy - hxy1) / hmax : 0.0;
  const double imc2 = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - hxy))));

  f.add(kNames[0], autocorr);
  f.add(kNames[1], mux);
  f.add(kNames[2], prominence);
  f.add(kNames[3], shade);
  f.add(kNames[4], tendency);
  f.add(kNames[5], contrast);
  f.add(kNames[6], correlation);
  f.add(kNames[7], diff_avg);
  f.add(kNames[8], plogp_sum(pdiff));
  f.add(kNames[9], diff_var);
  f.add(kNames[10], energy);
  f.add(kNames[11], hxy);
  f.add(kNames[12], imc1);
  f.add(kNames[13], imc2);
  f.add(kNames[14], idm);
  f.add(kNames[15], idmn);
  f.add(kNames[16], id);
  f.add(kNames[17], idn);
  f.add(kNames[18], inv_var);
  f.add(kNames[19], maxp);
  f.add(kNames[20], sum_avg);
  f.add(kNames[21], plogp_sum(psum));
  f.add(kNames[22], sum_squares);
  return f;
}

// ---------------------------------------------------------------------------
// GLRLM / GLSZM / GLDM

namespace {

TextureMatrix trim_columns(TextureKind kind, int ng, std::size_t cols, const std::vector<double>& counts,
                           std::size_t used_cols) {
  TextureMatrix m{kind, static_cast<std::size_t>(ng), used_cols, {}, 0.0, ng};
  m.counts.assign(m.rows * used_cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < used_cols; ++c) {
      m.counts[r * used_cols + c] = counts[r * cols + c];
      m.total += counts[r * cols + c];
    }
  }
  return m;
}

}  // namespace

namespace {

void accumulate_runs(const DiscretizedRoi& d, const RoiGrid& grid, const Index3& dir, std::vector<double>& counts,
                     std::size_t cols, std::size_t& longest) {
  const auto voxels = d.roi.voxels();
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const int level = d.bins[n];
    if (grid.get(add(voxels[n], dir, -1)) == level) continue;  // not a run start
    std::size_t length = 1;
    Index3 q = add(voxels[n], dir);
    while (grid.get(q) == level) {
      ++length;
      q = add(q, dir);
    }
    counts[static_cast<std::size_t>(level - 1) * cols + (length - 1)] += 1.0;
    longest = std::max(longest, length);
  }
}

}  // namespace

TextureMatrix glrlm_matrix(const DiscretizedRoi& d, const Index3& direction) {
  const RoiGrid grid(d.roi.voxels(), d.bins);
  const std::size_t cols = d.roi.size();  // no run can be longer than the ROI
  std::vector<double> counts(static_cast<std::size_t>(d.bin_count) * cols, 0.0);
  std::size_t longest = 0;
  accumulate_runs(d, grid, direction, counts, cols, longest);
  return trim_columns(TextureKind::GLRLM, d.bin_count, cols, counts, longest);
}

TextureMatrix glrlm_matrix(const DiscretizedRoi& d) {
  const RoiGrid grid(d.roi.voxels(), d.bins);
  const std::size_t cols = d.roi.size();
  std::vector<double> counts(static_cast<std::size_t>(d.bin_count) * cols, 0.0);
  std::size_t longest = 0;
  for (const auto& dir : kDirections) accumulate_runs(d, grid, dir, counts, cols, longest);
  return trim_columns(TextureKind::GLRLM, d.bin_count, cols, counts, longest);
}

FeatureMap glrlm_features(const TextureMatrix& m) {
  require_kind(m, TextureKind::GLRLM);
  const auto s = size_matrix_stats(m);
  FeatureMap f;
  f.add("glrlm_sre", s.short_emphasis);
  f.add("glrlm_lre", s.long_emphasis);
  f.add("glrlm_gln", s.gln);
  f.add("glrlm_glnn", s.glnn);
  f.add("glrlm_rln", s.sn);
  f.add("glrlm_rlnn", s.snn);
  f.add("glrlm_rp", s.percentage);
  f.add("glrlm_glv", s.glv);
  f.add("glrlm_rv", s.sv);
  f.add("glrlm_re", s.entropy);
  f.add("glrlm_lglre", s.lgl);
  f.add("glrlm_hglre", s.hgl);
  f.add("glrlm_srlgle", s.s_lgl);
  f.add("glrlm_srhgle", s.s_hgl);
  f.add("glrlm_lrlgle", s.l_lgl);
  f.add("glrlm_lrhgle", s.l_hgl);
  return f;
}

FeatureMap glrlm_features(const DiscretizedRoi& d) { return glrlm_features(glrlm_matrix(d)); }

TextureMatrix glszm_matrix(const DiscretizedRoi& d) {
  const auto voxels = d.roi.voxels();
  const RoiGrid grid(voxels, d.bins);
  const std::size_t cols = voxels.size();
  std::vector<double> counts(static_cast<std::size_t>(d.bin_count) * cols, 0.0);
  std::vector<char> visited(grid.cell_count(), 0);
  std::vector<Index3> stack;
  std::size_t largest = 0;
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    if (visited[grid.offset(voxels[n])]) continue;
    const int level = d.bins[n];
    std::size_t size = 0;
    stack.assign(1, voxels[n]);
    visited[grid.offset(voxels[n])] = 1;
    while (!stack.empty()) {
      const Index3 v = stack.back();
      stack.pop_back();
      ++size;
      for (const auto& off : kNeighbourhood) {
        const Index3 q = add(v, off);
        if (grid.get(q) != level || visited[grid.offset(q)]) continue;
        visited[grid.offset(q)] = 1;
        stack.push_back(q);
      }
    }
    counts[static_cast<std::size_t>(level - 1) * cols + (size - 1)] += 1.0;
    largest = std::max(largest, size);
  }
  return trim_columns(TextureKind::GLSZM, d.bin_count, cols, counts, largest);
}

FeatureMap glszm_features(const TextureMatrix& m) {
  require_kind(m, TextureKind::GLSZM);
  const auto s = size_matrix_stats(m);
  FeatureMap f;
  f.add("glszm_sae", s.short_emphasis);
  f.add("glszm_lae", s.long_emphasis);
  f.add("glszm_gln", s.gln);
  f.add("glszm_glnn", s.glnn);
  f.add("glszm_szn", s.sn);
  f.add("glszm_sznn", s.snn);
  f.add("glszm_zp", s.percentage);
  f.add("glszm_glv", s.glv);
  f.add("glszm_zv", s.sv);
  f.add("glszm_ze", s.entropy);
  f.add("glszm_lglze", s.lgl);
  f.add("glszm_hglze", s.hgl);
  f.add("glszm_salgle", s.s_lgl);
  f.add("glszm_sahgle", s.s_hgl);
  f.add("glszm_lalgle", s.l_lgl);
  f.add("glszm_lahgle", s.l_hgl);
  return f;
}

FeatureMap glszm_features(const DiscretizedRoi& d) { return glszm_features(glszm_matrix(d)); }

TextureMatrix gldm_matrix(const DiscretizedRoi& d, double alpha) {
  if (!(alpha >= 0.0)) throw Error(Errc::InvalidArgument, "GLDM alpha must be non-negative");
  const auto voxels = d.roi.voxels();
  const RoiGrid grid(voxels, d.bins);
  constexpr std::size_t cols = 27;
  TextureMatrix m{TextureKind::GLDM, static_cast<std::size_t>(d.bin_count), cols, {}, 0.0, d.bin_count};
  m.counts.assign(m.rows * cols, 0.0);
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const int level = d.bins[n];
    std::size_t dependent = 0;
    for (const auto& off : kNeighbourhood) {
      const int other = grid.get(add(voxels[n], off));
      if (other != 0 && std::abs(other - level) <= alpha) ++dependent;
    }
    m.counts[static_cast<std::size_t>(level - 1) * cols + dependent] += 1.0;
    m.total += 1.0;
  }
  return m;
}

FeatureMap gldm_features(const TextureMatrix& m) {
  require_kind(m, TextureKind::GLDM);
  const auto s = size_matrix_stats(m);
  FeatureMap f;
  f.add("gldm_sde", s.short_emphasis);
  f.add("gldm_lde", s.long_emphasis);
  f.add("gldm_gln", s.gln);
  f.add("gldm_dn", s.sn);
  f.add("gldm_dnn", s.snn);
  f.add("gldm_glv", s.glv);
  f.add("gldm_dv", s.sv);
  f.add("gldm_de", s.entropy);
  f.add("gldm_lgle", s.lgl);
  f.add("gldm_hgle", s.hgl);
  f.add("gldm_sdlgle", s.s_lgl);
  f.add("gldm_sdhgle", s.s_hgl);
  f.add("gldm_ldlgle", s.l_lgl);
  f.add("gldm_ldhgle", s.l_hgl);
  return f;
}

FeatureMap gldm_features(const DiscretizedRoi& d, double alpha) { return gldm_features(gldm_matrix(d, alpha)); }

// ---------------------------------------------------------------------------
// NGTDM

TextureMatrix ngtdm_matrix(const DiscretizedRoi& d) {
  const auto voxels = d.roi.voxels();
  const RoiGrid grid(voxels, d.bins);
  TextureMatrix m{TextureKind::NGTDM, static_cast<std::size_t>(d.bin_count), 2, {}, 0.0, d.bin_count};
  m.counts.assign(m.rows * 2, 0.0);
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    double sum = 0.0;
    int count = 0;
    for (const auto& off : kNeighbourhood) {
      const int other = grid.get(add(voxels[n], off));
      if (other == 0) continue;
      sum += other;
      ++count;
    }
    if (count == 0) continue;
    const auto row = static_cast<std::size_t>(d.bins[n] - 1);
    m.counts[row * 2] += 1.0;
    m.counts[row * 2 + 1] += std::abs(d.bins[n] - sum / count);
    m.total += 1.0;
  }
  return m;
}

FeatureMap ngtdm_features(const TextureMatrix& m) {
  require_kind(m, TextureKind::NGTDM);
  FeatureMap f;
  const double nvp = m.total;
  if (nvp <= 0.0) {
    f.add("ngtdm_coarseness", kCoarsenessCap);
    f.add("ngtdm_contrast", 0.0);
    f.add("ngtdm_busyness", 0.0);
    f.add("ngtdm_complexity", 0.0);
    f.add("ngtdm_strength", 0.0);
    return f;
  }
  struct Level {
    double i, p, s;
  };
  std::vector<Level> levels;
  double s_total = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double n = m.at(r, 0);
    s_total += m.at(r, 1);
    if (n > 0.0) levels.push_back({static_cast<double>(r + 1), n / nvp, m.at(r, 1)});
  }
  const double ngp = static_cast<double>(levels.size());
  double ps = 0.0;
  for (const auto& l : levels) ps += l.p * l.s;

  double contrast_sum = 0.0, busy_den = 0.0, complexity = 0.0, strength_num = 0.0;
  for (const auto& a : levels) {
    for (const auto& b : levels) {
      const double diff = a.i - b.i;
      contrast_sum += a.p * b.p * diff * diff;
      busy_den += std::abs(a.i * a.p - b.i * b.p);
      complexity += std::abs(diff) * (a.p * a.s + b.p * b.s) / (a.p + b.p);
      strength_num += (a.p + b.p) * diff * diff;
    }
  }
  const double coarseness = ps > 0.0 ? std::min(1.0 / ps, kCoarsenessCap) : kCoarsenessCap;
  const double contrast = ngp > 1.0 ? contrast_sum / (ngp * (ngp - 1.0)) * s_total / nvp : 0.0;
  f.add("ngtdm_coarseness", coarseness);
  f.add("ngtdm_contrast", contrast);
  f.add("ngtdm_busyness", busy_den > 0.0 ? ps / busy_den : 0.0);
  f.add("ngtdm_complexity", complexity / nvp);
  f.add("ngtdm_strength", s_total > 0.0 ? strength_num / s_total : 0.0);
  return f;
}

FeatureMap ngtdm_features(const DiscretizedRoi& d) { return ngtdm_features(ngtdm_matrix(d)); }

// ---------------------------------------------------------------------------
// Catalog and extraction

std::string_view to_string(FeatureFamily family) noexcept {
  switch (family) {
    case FeatureFamily::Shape: return "shape";
    case FeatureFamily::FirstOrder: return "firstorder";
    case FeatureFamily::GLCM: return "glcm";
    case FeatureFamily::GLRLM: return "glrlm";
    case FeatureFamily::GLSZM: return "glszm";
    case FeatureFamily::GLDM: return "gldm";
    case FeatureFamily::NGTDM: return "ngtdm";
  }
  return "?";
}

FeatureFamily parse_family(std::string_view name) {
  for (auto f : {FeatureFamily::Shape, FeatureFamily::FirstOrder, FeatureFamily::GLCM, FeatureFamily::GLRLM,
                 FeatureFamily::GLSZM, FeatureFamily::GLDM, FeatureFamily::NGTDM}) {
    if (to_string(f) == name) return f;
  }
  throw Error(Errc::InvalidArgument, "unknown feature family " + std::string(name));
}

bool RadiomicsConfig::enabled(FeatureFamily f) const noexcept {
  return std::find(enabled_families.begin(), enabled_families.end(), f) != enabled_families.end();
}

void RadiomicsConfig::validate() const {
  if (bin_count < 1) throw Error(Errc::InvalidArgument, "bin_count must be >= 1");
  if (!(gldm_alpha >= 0.0)) throw Error(Errc::InvalidArgument, "gldm_alpha must be >= 0");
}

void to_json(nlohmann::json& j, const RadiomicsConfig& c) {
  auto families = nlohmann::json::array();
  for (auto f : c.enabled_families) families.push_back(std::string(to_string(f)));
  j = {{"bin_count", c.bin_count}, {"gldm_alpha", c.gldm_alpha}, {"enabled_families", families}};
}

void from_json(const nlohmann::json& j, RadiomicsConfig& c) {
  c = RadiomicsConfig{};
  c.bin_count = j.value("bin_count", c.bin_count);
  c.gldm_alpha = j.value("gldm_alpha", c.gldm_alpha);
  if (j.contains("enabled_families")) {
    c.enabled_families.clear();
    for (const auto& f : j.at("enabled_families")) c.enabled_families.push_back(parse_family(f.get<std::string>()));
  }
  c.validate();
}

FeatureMap extract_roi_features(const RegionOfInterest& roi, const RadiomicsConfig& config) {
  const auto d = discretize(roi, config.bin_count);
  FeatureMap f;
  // Catalog order is fixed regardless of the order families are listed in the config.
  if (config.enabled(FeatureFamily::Shape)) f.append(shape_features(roi));
  if (config.enabled(FeatureFamily::FirstOrder)) f.append(first_order_features(roi, config.bin_count));
  if (config.enabled(FeatureFamily::GLCM)) f.append(glcm_features(glcm_matrix(d, 1)));
  if (config.enabled(FeatureFamily::GLRLM)) f.append(glrlm_features(d));
  if (config.enabled(FeatureFamily::GLSZM)) f.append(glszm_features(d));
  if (config.enabled(FeatureFamily::GLDM)) f.append(gldm_features(d, config.gldm_alpha));
  if (config.enabled(FeatureFamily::NGTDM)) f.append(ngtdm_features(d));
  return f;
}

std::vector<std::string> feature_catalog(const RadiomicsConfig& config) {
  // A 2x1x1 ROI with two gray levels exercises every family.
  const RegionOfInterest probe(1, {{0, 0, 0}, {1, 0, 0}}, {0.0, 1.0});
  std::vector<std::string> names;
  for (const auto& [name, value] : extract_roi_features(probe, config)) names.push_back(name);
  return names;
}

std::vector<std::pair<std::string, double>> RadiomicsFragment::flatten() const {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(labels.size() * feature_names.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const std::string prefix = "s" + std::to_string(labels[r]) + "_";
    for (std::size_t c = 0; c < feature_names.size(); ++c) out.emplace_back(prefix + feature_names[c], values[r][c]);
  }
  return out;
}

RadiomicsFragment extract_all(const Volume3D& volume, const LabelMask& mask, const RadiomicsConfig& config, int jobs) {
  config.validate();
  if (volume.dims() != mask.dims()) throw Error(Errc::DimsMismatch, "volume and mask dims differ");
  RadiomicsFragment out;
  out.labels.assign(mask.label_set().begin(), mask.label_set().end());
  out.feature_names = feature_catalog(config);
  out.values.assign(out.labels.size(), {});
  if (out.labels.empty()) return out;

  auto work = [&](std::size_t n) {
    const auto features = extract_roi_features(extract_roi(volume, mask, out.labels[n]), config);
    std::vector<double> row;
    row.reserve(features.size());
    for (const auto& [name, value] : features) row.push_back(value);
    out.values[n] = std::move(row);
  };

  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, static_cast<int>(out.labels.size())));
  if (workers == 1) {
    for (std::size_t n = 0; n < out.labels.size(); ++n) work(n);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t n = next++; n < out.labels.size(); n = next++) work(n);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void write_fragment_csv(const RadiomicsFragment& fragment, const std::filesystem::path& path,
                        const std::vector<std::string>& comments) {
  csv::Document doc;
  doc.comments = comments;
  doc.header.push_back("label");
  doc.header.insert(doc.header.end(), fragment.feature_names.begin(), fragment.feature_names.end());
  for (std::size_t r = 0; r < fragment.labels.size(); ++r) {
    csv::Row row{std::to_string(fragment.labels[r])};
    for (double v : fragment.values[r]) row.push_back(csv::format_double(v));
    doc.rows.push_back(std::move(row));
  }
  csv::write(path, doc);
}

RadiomicsFragment read_fragment_csv(const std::filesystem::path& path) {
  const auto doc = csv::read(path);
  if (doc.header.empty() || doc.header[0] != "label") {
    throw Error(Errc::UnsupportedFormat, "radiomics fragment must start with a label column: " + path.string());
  }
  RadiomicsFragment out;
  out.feature_names.assign(doc.header.begin() + 1, doc.header.end());
  for (const auto& row : doc.rows) {
    out.labels.push_back(std::stoi(row[0]));
    std::vector<double> values;
    for (std::size_t c = 1; c < row.size(); ++c) {
      double v = 0.0;
      const auto* first = row[c].data();
      const auto [ptr, ec] = std::from_chars(first, first + row[c].size(), v);
      if (ec != std::errc{} || ptr != first + row[c].size()) {
        throw Error(Errc::UnsupportedFormat, "bad number '" + row[c] + "' in " + path.string());
      }
      values.push_back(v);
    }
    out.values.push_back(std::move(values));
  }
  return out;
}

}  // namespace mindsets
