#include "mindsets/explain.hpp"

#include <cmath>
#include <numeric>
#include <regex>

#include "mindsets/error.hpp"
#include "mindsets/eval.hpp"
#include "mindsets/rng.hpp"

namespace mindsets {

using nlohmann::json;

std::string_view to_string(ImportanceMetric m) noexcept { return m == ImportanceMetric::Auc ? "auc" : "accuracy"; }

ImportanceMetric parse_importance_metric(std::string_view text) {
  if (text == "accuracy") return ImportanceMetric::Accuracy;
  if (text == "auc") return ImportanceMetric::Auc;
  throw Error(Errc::InvalidArgument, "unknown importance metric '" + std::string(text) + "'");
}

void to_json(json& j, const ImportanceReport& r) {
  j = json{{"metric", std::string(to_string(r.metric))}, {"baseline", r.baseline}, {"features", json::array()}};
  for (const auto& f : r.features)
    j["features"].push_back({{"name", f.name}, {"mean", f.mean}, {"std", f.std}, {"repeats", f.repeats}});
}

std::vector<std::size_t> permutation_order(std::size_t rows, std::uint64_t seed, std::size_t column, int repeat) {
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(derive_seed(derive_seed(seed, column), static_cast<std::uint64_t>(repeat)));
  shuffle(std::span<std::size_t>(order), rng);
  return order;
}

namespace {

double score(const Matrix& probs, std::span<const int> labels, ImportanceMetric metric) {
  if (metric == ImportanceMetric::Auc) return roc_auc_ovr(probs, labels);
  const auto pred = argmax_rows(probs);
  double correct = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) correct += pred[r] == labels[r] ? 1.0 : 0.0;
  return correct / static_cast<double>(labels.size());
}

}  // namespace

ImportanceReport permutation_importance(const ProbabilityFn& model, const Matrix& x, std::span<const int> labels,
                                        std::span<const std::string> names, ImportanceMetric metric, int repeats,
                                        std::uint64_t seed) {
  if (repeats < 1) throw Error(Errc::InvalidArgument, "repeats must be >= 1");
  if (names.size() != x.cols()) throw Error(Errc::DimMismatch, "feature names do not match matrix columns");
  if (labels.size() != x.rows()) throw Error(Errc::DimMismatch, "labels do not match matrix rows");
  if (x.rows() == 0) throw Error(Errc::InvalidArgument, "no rows");
  const auto check = [&](const Matrix& p) {
    if (p.rows() != x.rows()) throw Error(Errc::DimMismatch, "model returned the wrong number of rows");
    return p;
  };
  ImportanceReport report;
  report.metric = metric;
  report.baseline = score(check(model(x)), labels, metric);
  Matrix shuffled = x;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    std::vector<double> values(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      const auto order = permutation_order(x.rows(), seed, c, r);
      for (std::size_t i = 0; i < x.rows(); ++i) shuffled(i, c) = x(order[i], c);
      values[static_cast<std::size_t>(r)] = report.baseline - score(check(model(shuffled)), labels, metric);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) shuffled(i, c) = x(i, c);
    FeatureImportance fi;
    fi.name = names[c];
    fi.repeats = repeats;
    fi.mean = std::accumulate(values.begin(), values.end(), 0.0) / repeats;
    double ss = 0.0;
    for (double v : values) ss += (v - fi.mean) * (v - fi.mean);
    fi.std = std::sqrt(ss / repeats);
    report.features.push_back(std::move(fi));
  }
  return report;
}

ParsedFeature parse_feature_name(const std::string& name) {
  static const std::regex radiomic(R"(^s(\d+)_(.+)_m(\d+)$)");
  static const std::regex prefix(R"(^s\d+_.*)");
  std::smatch m;
  if (std::regex_match(name, m, radiomic)) return {true, std::stoi(m[1].str()), m[2].str(), std::stoi(m[3].str())};
  if (std::regex_match(name, prefix))
    throw Error(Errc::UnparseableName, "radiomics feature '" + name + "' lacks a _m<month> suffix");
  return {false, 0, name, 0};
}

void to_json(json& j, const GroupedImportance& g) {
  j = json{{"by_timepoint", g.by_timepoint}, {"by_structure", g.by_structure}, {"total", g.total}};
}

GroupedImportance group_by_timepoint(const ImportanceReport& report) {
  GroupedImportance g;
  for (const auto& f : report.features) {
    const auto p = parse_feature_name(f.name);
    const std::string tp = p.radiomics ? "m" + std::to_string(p.month) : kMultiOmicsGroup;
    const std::string st = p.radiomics ? "s" + std::to_string(p.structure) : kMultiOmicsGroup;
    g.by_timepoint[tp] += f.mean;
    g.by_structure[st] += f.mean;
    g.total += f.mean;
  }
  return g;
}

}  // namespace mindsets
