#include "mindsets/eval.hpp"

#include <algorithm>
#include <numeric>
#include <regex>
#include <set>

#include "mindsets/digest.hpp"
#include "mindsets/error.hpp"
#include "mindsets/rng.hpp"

namespace mindsets {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::vector<std::string>> FoldPlan::folds() const {
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(k));
  for (const auto& [id, f] : assignments) out[static_cast<std::size_t>(f)].push_back(id);
  return out;
}

std::string FoldPlan::digest() const {
  std::string text = "k=" + std::to_string(k) + "\n";
  for (const auto& [id, f] : assignments) text += id + ":" + std::to_string(f) + "\n";
  return hex64(fnv1a64(text));
}

FoldPlan group_kfold(std::span<const std::string> patient_ids, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::InvalidArgument, "k must be >= 2");
  std::vector<std::string> ids(patient_ids.begin(), patient_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < static_cast<std::size_t>(k))
    throw Error(Errc::TooFewGroups, std::to_string(ids.size()) + " patients cannot fill " + std::to_string(k) + " folds");
  SplitMix64 rng(seed);
  shuffle(std::span<std::string>(ids), rng);
  FoldPlan plan;
  plan.k = k;
  for (std::size_t n = 0; n < ids.size(); ++n) plan.assignments[ids[n]] = static_cast<int>(n % static_cast<std::size_t>(k));
  return plan;
}

void to_json(json& j, const MetricSet& m) {
  j = json{{"accuracy", m.accuracy}, {"f1", m.f1}, {"recall", m.recall}, {"precision", m.precision}, {"auc", m.auc}};
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(Errc::LengthMismatch, "scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(Errc::InvalidArgument, "binary labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = labels.size(), n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(Errc::SingleClass, "AUC needs both label values");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;  // sum of 1-based midranks of positives
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double roc_auc_ovr(const Matrix& scores, std::span<const int> labels) {
  if (scores.rows() != labels.size()) throw Error(Errc::LengthMismatch, "scores and labels differ in length");
  double total = 0.0;
  int defined = 0;
  std::vector<int> binary(labels.size());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t pos = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) pos += (binary[r] = labels[r] == static_cast<int>(c) ? 1 : 0);
    if (pos == 0 || pos == labels.size()) continue;
    total += roc_auc(scores.column(c), binary);
    ++defined;
    if (scores.cols() == 2) break;  // the second column gives the same value
  }
  return defined == 0 ? 0.5 : total / defined;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(scores.rows(), 0);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

MetricSet metrics(std::span<const int> predicted, std::span<const int> truth, const Matrix& scores) {
  if (predicted.size() != truth.size() || scores.rows() != truth.size())
    throw Error(Errc::LengthMismatch, "predictions, truth and scores differ in length");
  if (truth.empty()) throw Error(Errc::InvalidArgument, "no rows to score");
  const std::size_t C = scores.cols();
  std::vector<double> tp(C, 0.0), fp(C, 0.0), fn(C, 0.0);
  double correct = 0.0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    const int p = predicted[n], t = truth[n];
    if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= C || static_cast<std::size_t>(t) >= C)
      throw Error(Errc::InvalidArgument, "class index out of range");
    if (p == t) {
      correct += 1.0;
      tp[static_cast<std::size_t>(p)] += 1.0;
    } else {
      fp[static_cast<std::size_t>(p)] += 1.0;
      fn[static_cast<std::size_t>(t)] += 1.0;
    }
  }
  auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  MetricSet m;
  m.accuracy = correct / static_cast<double>(truth.size());
  for (std::size_t c = 0; c < C; ++c) {
    const double p = ratio(tp[c], tp[c] + fp[c]);
    const double r = ratio(tp[c], tp[c] + fn[c]);
    m.precision += p;
    m.recall += r;
    m.f1 += ratio(2.0 * p * r, p + r);
  }
  m.precision /= static_cast<double>(C);
  m.recall /= static_cast<double>(C);
  m.f1 /= static_cast<double>(C);
  m.auc = roc_auc_ovr(scores, truth);
  return m;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ClassFilter f) noexcept {
  switch (f) {
    case ClassFilter::AdVsCtl: return "AD_vs_CTL";
    case ClassFilter::AdVsMci: return "AD_vs_MCI";
    case ClassFilter::MciVsCtl: return "MCI_vs_CTL";
    case ClassFilter::AdVsVad: return "AD_vs_VaD";
    case ClassFilter::All4: return "all4";
  }
  return "?";
}
std::string_view to_string(Modality m) noexcept { return m == Modality::MriOnly ? "mri" : "multiomics"; }
std::string_view to_string(Timepoints t) noexcept { return t == Timepoints::Month0 ? "month0" : "all"; }

ClassFilter parse_class_filter(std::string_view text) {
  for (auto f : {ClassFilter::AdVsCtl, ClassFilter::AdVsMci, ClassFilter::MciVsCtl, ClassFilter::AdVsVad, ClassFilter::All4})
    if (to_string(f) == text) return f;
  throw Error(Errc::InvalidSpec, "unknown class filter '" + std::string(text) + "'");
}
Modality parse_modality(std::string_view text) {
  if (text == "mri") return Modality::MriOnly;
  if (text == "multiomics") return Modality::MultiOmics;
  throw Error(Errc::InvalidSpec, "unknown modality '" + std::string(text) + "'");
}
Timepoints parse_timepoints(std::string_view text) {
  if (text == "month0") return Timepoints::Month0;
  if (text == "all") return Timepoints::AllVisits;
  throw Error(Errc::InvalidSpec, "unknown timepoints '" + std::string(text) + "'");
}

std::vector<Diagnosis> classes_of(ClassFilter f) {
  using D = Diagnosis;
  switch (f) {
    case ClassFilter::AdVsCtl: return {D::AD, D::CTL};
    case ClassFilter::AdVsMci: return {D::AD, D::MCI};
    case ClassFilter::MciVsCtl: return {D::MCI, D::CTL};
    case ClassFilter::AdVsVad: return {D::AD, D::VaD};
    case ClassFilter::All4: return {D::AD, D::VaD, D::MCI, D::CTL};
  }
  return {};
}

std::string ExperimentSpec::name() const {
  return std::string(to_string(class_filter)) + "." + std::string(to_string(modality)) + "." +
         std::string(to_string(timepoints)) + (dfg_enabled ? ".dfg" : ".nodfg");
}

void to_json(json& j, const ExperimentSpec& s) {
  j = json{{"class_filter", std::string(to_string(s.class_filter))},
           {"modality", std::string(to_string(s.modality))},
           {"timepoints", std::string(to_string(s.timepoints))},
           {"dfg_enabled", s.dfg_enabled},
           {"seed", s.seed}};
}

void from_json(const json& j, ExperimentSpec& s) {
  try {
    s = ExperimentSpec{};
    s.class_filter = parse_class_filter(j.at("class_filter").get<std::string>());
    s.modality = parse_modality(j.value("modality", "multiomics"));
    s.timepoints = parse_timepoints(j.value("timepoints", "all"));
    s.dfg_enabled = j.value("dfg_enabled", true);
    s.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("malformed experiment spec: ") + e.what());
  }
}

void to_json(json& j, const PipelineOptions& o) {
  j = json{{"folds", o.folds},
           {"layout", std::string(to_string(o.layout))},
           {"corr_threshold", o.select.corr_threshold},
           {"mi_bins", o.select.mi_bins},
           {"top_k", o.top_k},
           {"dfg", o.dfg}};
}

void from_json(const json& j, PipelineOptions& o) {
  try {
    PipelineOptions d;
    d.folds = j.value("folds", d.folds);
    d.layout = parse_layout(j.value("layout", std::string(to_string(d.layout))));
    d.select.corr_threshold = j.value("corr_threshold", d.select.corr_threshold);
    d.select.mi_bins = j.value("mi_bins", d.select.mi_bins);
    d.top_k = j.value("top_k", d.top_k);
    if (j.contains("dfg")) d.dfg = j.at("dfg").get<DfgConfig>();
    if (d.folds < 2) throw Error(Errc::InvalidSpec, "folds must be >= 2");
    if (d.top_k < 1) throw Error(Errc::InvalidSpec, "top_k must be >= 1");
    if (!(d.select.corr_threshold > 0.0 && d.select.corr_threshold <= 1.0))
      throw Error(Errc::InvalidSpec, "corr_threshold must be in (0, 1]");
    if (d.select.mi_bins < 2) throw Error(Errc::InvalidSpec, "mi_bins must be >= 2");
    o = d;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("malformed pipeline options: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

fs::path fragment_path(const fs::path& dir, const std::string& patient_id, int month) {
  return dir / (patient_id + "_m" + std::to_string(month) + ".csv");
}

std::vector<VisitFragment> load_fragment_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::Io, "no fragment directory " + dir.string());
  static const std::regex pattern(R"(^(.+)_m(\d+)\.csv$)");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<VisitFragment> out;
  for (const auto& f : files) {
    std::smatch m;
    const std::string name = f.filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    out.push_back({m[1].str(), std::stoi(m[2].str()), read_fragment_csv(f)});
  }
  return out;
}

FeatureTable build_table(const CohortData& cohort, const ExperimentSpec& spec, Layout layout) {
  const auto classes = classes_of(spec.class_filter);
  std::vector<PatientRecord> records;
  std::set<std::string> ids;
  for (const auto& r : cohort.records) {
    if (std::find(classes.begin(), classes.end(), r.diagnosis) == classes.end()) continue;
    records.push_back(r);
    ids.insert(r.patient_id);
  }
  std::vector<VisitFragment> fragments;
  std::set<int> visits;
  for (const auto& r : records) visits.insert(r.visit_month);
  for (const auto& f : cohort.fragments) {
    if (!ids.contains(f.patient_id)) continue;
    fragments.push_back(f);
    visits.insert(f.visit_month);
  }
  FuseOptions options;
  options.layout = layout;
  options.include_clinical = spec.modality == Modality::MultiOmics;
  options.visits = spec.timepoints == Timepoints::Month0 ? std::vector<int>{0} : std::vector<int>(visits.begin(), visits.end());
  return fuse(fragments, records, cohort.schema, options);
}

PreparedData TrainedPipeline::prepare(const FeatureTable& table) const {
  auto full = apply_preprocess(table, preprocess, false);
  std::vector<std::size_t> idx;
  for (const auto& f : features) {
    const auto it = std::find(full.feature_names.begin(), full.feature_names.end(), f);
    idx.push_back(static_cast<std::size_t>(it - full.feature_names.begin()));
  }
  PreparedData out;
  out.x = full.x.select_cols(idx);
  out.labels = std::move(full.labels);
  out.groups = std::move(full.groups);
  out.visits = std::move(full.visits);
  for (auto i : idx) {
    out.feature_names.push_back(full.feature_names[i]);
    out.kinds.push_back(full.kinds[i]);
  }
  return out;
}

Matrix TrainedPipeline::predict_proba(const FeatureTable& table) const { return model.predict_proba(prepare(table).x); }

json pipeline_to_json(const TrainedPipeline& p) {
  return json{{"format", "mindsets-pipeline"}, {"version", 1},          {"preprocess", p.preprocess},
              {"selection", p.selection},     {"features", p.features}, {"model", model_to_json(p.model)},
              {"train_log", p.log}};
}

TrainedPipeline pipeline_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "mindsets-pipeline")
      throw Error(Errc::InvalidArgument, "not a pipeline file");
    if (j.at("version").get<int>() != 1) throw Error(Errc::VersionMismatch, "unsupported pipeline version");
    TrainedPipeline p;
    p.preprocess = j.at("preprocess").get<PreprocessState>();
    p.selection = j.at("selection").get<SelectionResult>();
    p.features = j.at("features").get<std::vector<std::string>>();
    p.model = model_from_json(j.at("model"));
    if (p.model.input_dim() != p.features.size())
      throw Error(Errc::DimMismatch, "model width does not match the selected features");
    for (const auto& f : p.features) {
      if (std::none_of(p.preprocess.columns.begin(), p.preprocess.columns.end(),
                       [&](const ColumnState& c) { return c.name == f; }))
        throw Error(Errc::InvalidArgument, "selected feature " + f + " is not a preprocessed column");
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed pipeline JSON: ") + e.what());
  }
}

TrainedPipeline fit_pipeline(const FeatureTable& table, const std::vector<bool>& train_rows,
                             const PipelineOptions& options, std::uint64_t seed, bool dfg_enabled) {
  TrainedPipeline p;
  p.preprocess = fit_preprocess(table, train_rows);
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < train_rows.size(); ++r)
    if (train_rows[r]) idx.push_back(r);
  const auto prep = apply_preprocess(table.select_rows(idx), p.preprocess, true);
  std::vector<bool> categorical(prep.kinds.size());
  for (std::size_t c = 0; c < categorical.size(); ++c) categorical[c] = prep.kinds[c] == ColumnKind::Categorical;
  p.selection = sulov_select(prep.x, prep.labels, prep.feature_names, categorical, options.select);
  p.features = truncate_top_k(p.selection, options.top_k);
  std::vector<std::size_t> cols;
  for (const auto& f : p.features)
    cols.push_back(static_cast<std::size_t>(std::find(prep.feature_names.begin(), prep.feature_names.end(), f) -
                                            prep.feature_names.begin()));
  auto cfg = options.dfg;
  cfg.n_classes = static_cast<int>(p.preprocess.classes.size());
  cfg.seed = seed;
  cfg.dfg_enabled = dfg_enabled;
  auto trained = train(prep.x.select_cols(cols), prep.labels, prep.groups, cfg);
  p.model = std::move(trained.model);
  p.log = std::move(trained.log);
  return p;
}

MetricSet mean_metrics(std::span<const FoldReport> folds) {
  MetricSet m;
  if (folds.empty()) return m;
  for (const auto& f : folds) {
    m.accuracy += f.metrics.accuracy;
    m.f1 += f.metrics.f1;
    m.recall += f.metrics.recall;
    m.precision += f.metrics.precision;
    m.auc += f.metrics.auc;
  }
  const double n = static_cast<double>(folds.size());
  m.accuracy /= n;
  m.f1 /= n;
  m.recall /= n;
  m.precision /= n;
  m.auc /= n;
  return m;
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"spec", r.spec},
           {"name", r.spec.name()},
           {"config_digest", r.config_digest},
           {"fold_plan_digest", r.fold_plan_digest},
           {"averaging", "macro"},
           {"classes", r.classes},
           {"n_patients", r.n_patients},
           {"n_rows", r.n_rows},
           {"mean", r.mean},
           {"folds", json::array()}};
  for (const auto& f : r.folds) {
    j["folds"].push_back({{"fold", f.fold},
                          {"metrics", f.metrics},
                          {"train_rows", f.train_rows},
                          {"test_rows", f.test_rows},
                          {"n_features", f.n_features},
                          {"stopped_epoch", f.stopped_epoch},
                          {"best_epoch", f.best_epoch}});
  }
}

EvalReport run_experiment(const CohortData& cohort, const ExperimentSpec& spec, const PipelineOptions& options) {
  const auto table = build_table(cohort, spec, options.layout);
  std::set<Diagnosis> present;
  for (const auto& r : table.rows()) present.insert(r.diagnosis);
  for (auto c : classes_of(spec.class_filter)) {
    if (!present.contains(c))
      throw Error(Errc::ClassAbsent, "cohort has no " + std::string(to_string(c)) + " patients for " + spec.name());
  }
  const auto ids = table.patient_ids();
  const auto plan = group_kfold(ids, options.folds, spec.seed);

  EvalReport report;
  report.spec = spec;
  report.fold_plan_digest = plan.digest();
  report.config_digest = config_digest(json{{"spec", spec}, {"options", options}});
  report.n_patients = ids.size();
  report.n_rows = table.row_count();
  for (auto c : classes_of(spec.class_filter)) report.classes.emplace_back(to_string(c));
  std::sort(report.classes.begin(), report.classes.end(), [](const std::string& a, const std::string& b) {
    return parse_diagnosis(a) < parse_diagnosis(b);
  });

  for (int f = 0; f < plan.k; ++f) {
    std::vector<bool> train_rows(table.row_count());
    std::vector<std::size_t> test_idx;
    for (std::size_t r = 0; r < table.row_count(); ++r) {
      train_rows[r] = plan.assignments.at(table.rows()[r].patient_id) != f;
      if (!train_rows[r]) test_idx.push_back(r);
    }
    const auto pipeline = fit_pipeline(table, train_rows, options, derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(f)),
                                       spec.dfg_enabled);
    const auto test = table.select_rows(test_idx);
    const auto prep = pipeline.prepare(test);
    const auto probs = pipeline.model.predict_proba(prep.x);
    FoldReport fr;
    fr.fold = f;
    fr.metrics = metrics(argmax_rows(probs), prep.labels, probs);
    fr.train_rows = table.row_count() - test_idx.size();
    fr.test_rows = test_idx.size();
    fr.n_features = pipeline.features.size();
    fr.stopped_epoch = pipeline.log.stopped_epoch;
    fr.best_epoch = pipeline.log.best_epoch;
    report.folds.push_back(fr);
  }
  report.mean = mean_metrics(report.folds);
  return report;
}

}  // namespace mindsets
