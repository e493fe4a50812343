#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/matrix.hpp"
#include "mindsets/radiomics.hpp"

namespace mindsets {

enum class Diagnosis { AD = 0, VaD = 1, MCI = 2, CTL = 3 };

inline constexpr std::array<Diagnosis, 4> kAllDiagnoses = {Diagnosis::AD, Diagnosis::VaD, Diagnosis::MCI,
                                                           Diagnosis::CTL};

std::string_view to_string(Diagnosis d) noexcept;
Diagnosis parse_diagnosis(std::string_view text);

/// Visit months a longitudinal cohort may contain.
inline constexpr std::array<int, 3> kVisitMonths = {0, 3, 12};

enum class ColumnKind { Continuous, Categorical };

std::string_view to_string(ColumnKind k) noexcept;

/// Missing, a finite scalar, or a category token.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& c) noexcept { return std::holds_alternative<std::monostate>(c); }

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  /// radiomics, clinical, genotype or cognitive.
  std::string group = "clinical";
};

/// Column kinds of a cohort CSV, from its JSON sidecar:
///   {"columns": [{"name": "age", "kind": "continuous", "group": "clinical"}, ...]}
struct CohortSchema {
  std::vector<ColumnSpec> columns;
  const ColumnSpec* find(std::string_view name) const noexcept;
};

CohortSchema load_schema(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const CohortSchema& s);
void from_json(const nlohmann::json& j, CohortSchema& s);

/// One (patient, visit) row of the clinical cohort.
struct PatientRecord {
  std::string patient_id;
  int visit_month = 0;
  Diagnosis diagnosis = Diagnosis::CTL;
  /// Clinical and genotype values keyed by schema column name.
  std::map<std::string, Cell> fields;
  std::optional<int> mmse_memory;      ///< 0..6
  std::optional<int> mmse_processing;  ///< 0..24
};

/// Reads a cohort CSV. Required columns: patient_id, visit_month, diagnosis.
/// Other columns are typed by the schema (undeclared columns are an error);
/// an `mmse_items` column holding 30 characters of 0/1 is split into memory
/// and processing sub-scores. Empty cells are missing.
std::vector<PatientRecord> load_cohort_csv(const std::filesystem::path& path, const CohortSchema& schema);
void write_cohort_csv(const std::filesystem::path& path, std::span<const PatientRecord> records,
                      const CohortSchema& schema, const std::vector<std::string>& comments = {});

/// Checks per-patient diagnosis consistency and MMSE sub-score ranges.
void validate_records(std::span<const PatientRecord> records);

struct MmseSplit {
  int memory = 0;
  int processing = 0;
};

/// 1-based MMSE item numbers scored as memory: registration (11-13) and recall (19-21).
inline constexpr std::array<int, 6> kMmseMemoryItems = {11, 12, 13, 19, 20, 21};

/// Splits 30 binary item marks into (memory, processing). Throws WrongItemCount.
MmseSplit split_mmse(std::span<const int> items);

struct TableRow {
  std::string patient_id;
  int visit_month = 0;  ///< -1 for wide rows spanning all visits
  Diagnosis diagnosis = Diagnosis::CTL;
  std::vector<Cell> cells;
};

/// Named-column table keyed by (patient, visit) with diagnosis labels.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(std::vector<ColumnSpec> columns, std::vector<TableRow> rows);

  const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
  const std::vector<TableRow>& rows() const noexcept { return rows_; }
  std::size_t row_count() const noexcept { return rows_.size(); }
  std::size_t column_count() const noexcept { return columns_.size(); }

  std::optional<std::size_t> column_index(std::string_view name) const;
  const Cell& cell(std::size_t row, std::size_t col) const { return rows_[row].cells[col]; }

  /// Rows whose diagnosis is in `classes`, original order kept.
  FeatureTable filter_classes(std::span<const Diagnosis> classes) const;
  /// Keeps the named columns in the given order.
  FeatureTable select_columns(std::span<const std::string> names) const;
  FeatureTable select_rows(std::span<const std::size_t> rows) const;

  std::vector<std::string> patient_ids() const;  ///< distinct, sorted

 private:
  std::vector<ColumnSpec> columns_;
  std::vector<TableRow> rows_;
};

/// Writes the table with leading patient_id, visit_month, diagnosis columns.
void write_table_csv(const FeatureTable& table, const std::filesystem::path& path,
                     const std::vector<std::string>& comments = {});

struct VisitFragment {
  std::string patient_id;
  int visit_month = 0;
  RadiomicsFragment fragment;
};

enum class Layout { PerVisit, WideAllVisits };

std::string_view to_string(Layout l) noexcept;
Layout parse_layout(std::string_view text);

struct FuseOptions {
  Layout layout = Layout::WideAllVisits;
  /// Visits whose radiomics columns appear in the wide layout (suffix _m<month>),
  /// and the visits kept in the per-visit layout.
  std::vector<int> visits = {0, 3, 12};
  bool include_clinical = true;
  bool include_radiomics = true;
};

/// Joins radiomics fragments with the clinical cohort.
///  PerVisit: one row per (patient, visit) with a record or fragment; radiomics
///            columns carry no suffix.
///  WideAllVisits: one row per patient; radiomics columns suffixed _m0/_m3/_m12.
/// Clinical values come from the matching visit when recorded, else from the
/// patient's earliest visit. Throws UnknownPatient, DuplicateFragment.
FeatureTable fuse(std::span<const VisitFragment> fragments, std::span<const PatientRecord> records,
                  const CohortSchema& schema, const FuseOptions& options = {});

struct ColumnState {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  double mean = 0.0;
  double std = 1.0;
  std::vector<std::string> tokens;  ///< sorted; code = index
  Cell global_fill;
  std::vector<Cell> class_fill;  ///< parallel to PreprocessState::classes
};

struct PreprocessState {
  std::vector<Diagnosis> classes;  ///< sorted; label = index
  std::vector<ColumnState> columns;

  int class_index(Diagnosis d) const noexcept;
};

void to_json(nlohmann::json& j, const PreprocessState& s);
void from_json(const nlohmann::json& j, PreprocessState& s);

/// Fits encoders, scaling and imputation on the rows flagged in train_rows only.
/// Throws EmptyTrainSet, ClassAbsent (a class of the table has no train row).
PreprocessState fit_preprocess(const FeatureTable& table, const std::vector<bool>& train_rows);

struct PreparedData {
  Matrix x;
  std::vector<int> labels;  ///< class index, -1 when the row's class is unknown to the state
  std::vector<std::string> groups;
  std::vector<int> visits;
  std::vector<std::string> feature_names;
  std::vector<ColumnKind> kinds;
};

/// Encodes categorical columns (unseen token -> -1), standardizes continuous
/// ones and fills missing cells from the row's class statistics when
/// allow_class_imputation, otherwise from the global train statistics.
PreparedData apply_preprocess(const FeatureTable& table, const PreprocessState& state, bool allow_class_imputation);

}  // namespace mindsets
