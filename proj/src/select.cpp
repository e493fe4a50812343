#include "mindsets/select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "mindsets/error.hpp"

namespace mindsets {

using nlohmann::json;

namespace {

// Dense codes 0..k-1 for arbitrary integer values, ordered by value.
std::vector<int> dense_codes(std::span<const int> v, int& count) {
  std::vector<int> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> out(v.size());
  for (std::size_t n = 0; n < v.size(); ++n)
    out[n] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), v[n]) - sorted.begin());
  count = static_cast<int>(sorted.size());
  return out;
}

std::vector<int> equal_frequency_bins(std::span<const double> x, int bins, int& count) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<int> raw(n);
  std::size_t first_rank = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (r > 0 && x[order[r]] != x[order[r - 1]]) first_rank = r;
    raw[order[r]] = static_cast<int>(first_rank * static_cast<std::size_t>(bins) / n);
  }
  return dense_codes(raw, count);
}

}  // namespace

MiResult mutual_information(std::span<const double> x, std::span<const int> y, int bins, bool categorical) {
  if (x.size() != y.size()) throw Error(Errc::LengthMismatch, "x and y differ in length");
  if (bins < 1) throw Error(Errc::InvalidArgument, "bins must be >= 1");
  int ny = 0;
  const auto yc = dense_codes(y, ny);
  if (ny < 2) throw Error(Errc::SingleClass, "mutual information needs at least two classes");
  for (double v : x)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteData, "non-finite value in mutual information input");

  int nx = 0;
  std::vector<int> xc;
  if (categorical) {
    std::vector<int> codes(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) codes[n] = static_cast<int>(std::lround(x[n]));
    xc = dense_codes(codes, nx);
  } else {
    xc = equal_frequency_bins(x, bins, nx);
  }
  MiResult out;
  if (nx < 2) {
    out.degenerate = true;
    return out;
  }
  std::vector<double> joint(static_cast<std::size_t>(nx * ny), 0.0), px(nx, 0.0), py(ny, 0.0);
  const double w = 1.0 / static_cast<double>(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    joint[static_cast<std::size_t>(xc[n] * ny + yc[n])] += w;
    px[xc[n]] += w;
    py[yc[n]] += w;
  }
  double mi = 0.0;
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < ny; ++b) {
      const double p = joint[static_cast<std::size_t>(a * ny + b)];
      if (p > 0.0) mi += p * std::log(p / (px[a] * py[b]));
    }
  out.value = std::max(mi, 0.0);
  return out;
}

double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, "correlation inputs differ in length");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

SelectionResult sulov_select(const Matrix& x, std::span<const int> labels, std::span<const std::string> names,
                             const std::vector<bool>& categorical, const SelectOptions& options) {
  const std::size_t d = x.cols();
  if (names.size() != d) throw Error(Errc::LengthMismatch, "feature names do not match matrix columns");
  if (!categorical.empty() && categorical.size() != d)
    throw Error(Errc::LengthMismatch, "categorical flags do not match matrix columns");
  if (labels.size() != x.rows()) throw Error(Errc::LengthMismatch, "labels do not match matrix rows");
  if (d == 0) throw Error(Errc::InvalidArgument, "selection needs at least one feature");
  {
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != d) throw Error(Errc::InvalidArgument, "duplicate feature names");
  }

  SelectionResult result;
  result.corr_threshold = options.corr_threshold;
  result.mi_bins = options.mi_bins;

  std::vector<std::vector<double>> cols(d);
  std::vector<double> mi(d);
  for (std::size_t c = 0; c < d; ++c) {
    cols[c] = x.column(c);
    mi[c] = mutual_information(cols[c], labels, options.mi_bins, !categorical.empty() && categorical[c]).value;
    result.scores[names[c]] = mi[c];
  }
  std::vector<double> corr(d * d, 0.0);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a + 1; b < d; ++b) corr[a * d + b] = corr[b * d + a] = std::fabs(correlation(cols[a], cols[b]));

  // true when a beats b
  auto wins = [&](std::size_t a, std::size_t b) {
    if (mi[a] != mi[b]) return mi[a] > mi[b];
    return names[a] < names[b];
  };

  std::vector<bool> alive(d, true);
  for (;;) {
    std::vector<bool> doomed(d, false);
    std::vector<std::ptrdiff_t> rival(d, -1);
    bool any = false;
    for (std::size_t a = 0; a < d; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < d; ++b) {
        if (!alive[b] || !(corr[a * d + b] > options.corr_threshold)) continue;
        const std::size_t loser = wins(a, b) ? b : a;
        const std::size_t winner = loser == a ? b : a;
        doomed[loser] = true;
        any = true;
        const auto prev = rival[loser];
        if (prev < 0 || corr[loser * d + winner] > corr[loser * d + static_cast<std::size_t>(prev)])
          rival[loser] = static_cast<std::ptrdiff_t>(winner);
      }
    }
    if (!any) break;
    for (std::size_t c = 0; c < d; ++c) {
      if (!doomed[c]) continue;
      alive[c] = false;
      const auto r = static_cast<std::size_t>(rival[c]);
      char buf[64];
      std::snprintf(buf, sizeof buf, "|r|=%.6f > %.6g", corr[c * d + r], options.corr_threshold);
      result.dropped.push_back({names[c], buf, names[r]});
    }
  }

  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < d; ++c)
    if (alive[c]) kept.push_back(c);
  std::sort(kept.begin(), kept.end(), wins);
  for (auto c : kept) result.kept.push_back(names[c]);
  return result;
}

std::vector<std::string> truncate_top_k(const SelectionResult& result, std::size_t k) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be >= 1");
  const auto n = std::min(k, result.kept.size());
  return {result.kept.begin(), result.kept.begin() + static_cast<std::ptrdiff_t>(n)};
}

void to_json(json& j, const SelectionResult& r) {
  j = json{{"kept", r.kept}, {"dropped", json::array()}, {"scores", r.scores},
           {"corr_threshold", r.corr_threshold}, {"mi_bins", r.mi_bins}};
  for (const auto& d : r.dropped) j["dropped"].push_back({{"feature", d.feature}, {"reason", d.reason}, {"rival", d.rival}});
}

void from_json(const json& j, SelectionResult& r) {
  r = SelectionResult{};
  r.kept = j.at("kept").get<std::vector<std::string>>();
  for (const auto& d : j.at("dropped"))
    r.dropped.push_back({d.at("feature").get<std::string>(), d.value("reason", ""), d.value("rival", "")});
  r.scores = j.at("scores").get<std::map<std::string, double>>();
  r.corr_threshold = j.value("corr_threshold", 0.7);
  r.mi_bins = j.value("mi_bins", 10);
}

}  // namespace mindsets
