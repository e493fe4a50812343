#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/dfg.hpp"
#include "mindsets/matrix.hpp"
#include "mindsets/select.hpp"
#include "mindsets/tabular.hpp"

namespace mindsets {

struct FoldPlan {
  int k = 5;
  std::map<std::string, int> assignments;  ///< patient -> fold

  std::vector<std::vector<std::string>> folds() const;
  std::string digest() const;
};

/// Distinct ids sorted, shuffled by seed, dealt round-robin. Throws TooFewGroups.
FoldPlan group_kfold(std::span<const std::string> patient_ids, int k, std::uint64_t seed);

struct MetricSet {
  double accuracy = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double auc = 0.0;
};

void to_json(nlohmann::json& j, const MetricSet& m);

/// Mann-Whitney form with ties counted half. Labels are 0/1. Throws SingleClass, LengthMismatch.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Macro one-vs-rest over the columns of `scores`; classes absent from (or
/// filling) `labels` are skipped; 0.5 when no class is defined.
double roc_auc_ovr(const Matrix& scores, std::span<const int> labels);

/// Macro precision/recall/F1 over scores.cols() classes with 0/0 = 0.
MetricSet metrics(std::span<const int> predicted, std::span<const int> truth, const Matrix& scores);

/// Row-wise argmax, first maximum wins.
std::vector<int> argmax_rows(const Matrix& scores);

enum class ClassFilter { AdVsCtl, AdVsMci, MciVsCtl, AdVsVad, All4 };
enum class Modality { MriOnly, MultiOmics };
enum class Timepoints { Month0, AllVisits };

std::string_view to_string(ClassFilter f) noexcept;
std::string_view to_string(Modality m) noexcept;
std::string_view to_string(Timepoints t) noexcept;
ClassFilter parse_class_filter(std::string_view text);
Modality parse_modality(std::string_view text);
Timepoints parse_timepoints(std::string_view text);
std::vector<Diagnosis> classes_of(ClassFilter f);

struct ExperimentSpec {
  ClassFilter class_filter = ClassFilter::AdVsCtl;
  Modality modality = Modality::MultiOmics;
  Timepoints timepoints = Timepoints::AllVisits;
  bool dfg_enabled = true;
  std::uint64_t seed = 0;

  std::string name() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

struct PipelineOptions {
  int folds = 5;
  Layout layout = Layout::WideAllVisits;
  SelectOptions select;
  std::size_t top_k = 100;
  DfgConfig dfg;
};

void to_json(nlohmann::json& j, const PipelineOptions& o);
void from_json(const nlohmann::json& j, PipelineOptions& o);

struct CohortData {
  CohortSchema schema;
  std::vector<PatientRecord> records;
  std::vector<VisitFragment> fragments;
};

/// Fragments named <patient>_m<month>.csv.
std::vector<VisitFragment> load_fragment_dir(const std::filesystem::path& dir);
std::filesystem::path fragment_path(const std::filesystem::path& dir, const std::string& patient_id, int month);

/// Class filter, modality and timepoints applied; fused with `layout`.
FeatureTable build_table(const CohortData& cohort, const ExperimentSpec& spec, Layout layout);

struct TrainedPipeline {
  PreprocessState preprocess;
  SelectionResult selection;
  std::vector<std::string> features;
  DfgModel model;
  TrainLog log;

  /// Global-statistics imputation, selected columns only.
  PreparedData prepare(const FeatureTable& table) const;
  Matrix predict_proba(const FeatureTable& table) const;
};

nlohmann::json pipeline_to_json(const TrainedPipeline& p);
TrainedPipeline pipeline_from_json(const nlohmann::json& j);

/// Preprocess (class-conditional imputation on the training rows), select,
/// and train on the rows flagged in train_rows.
TrainedPipeline fit_pipeline(const FeatureTable& table, const std::vector<bool>& train_rows,
                             const PipelineOptions& options, std::uint64_t seed, bool dfg_enabled);

struct FoldReport {
  int fold = 0;
  MetricSet metrics;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::size_t n_features = 0;
  int stopped_epoch = 0;
  int best_epoch = 0;
};

struct EvalReport {
  ExperimentSpec spec;
  std::vector<FoldReport> folds;
  MetricSet mean;
  std::string fold_plan_digest;
  std::string config_digest;
  std::size_t n_patients = 0;
  std::size_t n_rows = 0;
  std::vector<std::string> classes;
};

void to_json(nlohmann::json& j, const EvalReport& r);

MetricSet mean_metrics(std::span<const FoldReport> folds);

EvalReport run_experiment(const CohortData& cohort, const ExperimentSpec& spec, const PipelineOptions& options);

}  // namespace mindsets
