#include "mindsets/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "mindsets/csv.hpp"
#include "mindsets/error.hpp"

namespace mindsets {

using nlohmann::json;

namespace {

double parse_number(const std::string& text, const std::string& context) {
  double v = 0.0;
  const auto* first = text.data();
  const auto [ptr, ec] = std::from_chars(first, first + text.size(), v);
  if (ec != std::errc{} || ptr != first + text.size() || !std::isfinite(v)) {
    throw Error(Errc::InvalidArgument, "cannot parse '" + text + "' as a finite number (" + context + ")");
  }
  return v;
}

int parse_int(const std::string& text, const std::string& context) {
  int v = 0;
  const auto* first = text.data();
  const auto [ptr, ec] = std::from_chars(first, first + text.size(), v);
  if (ec != std::errc{} || ptr != first + text.size()) {
    throw Error(Errc::InvalidArgument, "cannot parse '" + text + "' as an integer (" + context + ")");
  }
  return v;
}

std::string cell_text(const Cell& c) {
  if (std::holds_alternative<double>(c)) return csv::format_double(std::get<double>(c));
  if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
  return {};
}

std::string mode_of(const std::map<std::string, int>& counts) {
  std::string best;
  int best_count = 0;
  for (const auto& [token, count] : counts) {  // lexicographic order: first maximum wins ties
    if (count > best_count) {
      best = token;
      best_count = count;
    }
  }
  return best;
}

void cell_to_json(json& j, const Cell& c) {
  if (std::holds_alternative<double>(c)) j = std::get<double>(c);
  else if (std::holds_alternative<std::string>(c)) j = std::get<std::string>(c);
  else j = nullptr;
}

Cell cell_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  return std::monostate{};
}

}  // namespace

std::string_view to_string(Diagnosis d) noexcept {
  switch (d) {
    case Diagnosis::AD: return "AD";
    case Diagnosis::VaD: return "VaD";
    case Diagnosis::MCI: return "MCI";
    case Diagnosis::CTL: return "CTL";
  }
  return "?";
}

Diagnosis parse_diagnosis(std::string_view text) {
  for (auto d : kAllDiagnoses)
    if (to_string(d) == text) return d;
  throw Error(Errc::InvalidArgument, "unknown diagnosis '" + std::string(text) + "' (expected AD, VaD, MCI or CTL)");
}

std::string_view to_string(ColumnKind k) noexcept { return k == ColumnKind::Continuous ? "continuous" : "categorical"; }

std::string_view to_string(Layout l) noexcept { return l == Layout::PerVisit ? "per_visit" : "wide_all_visits"; }

Layout parse_layout(std::string_view text) {
  if (text == "per_visit") return Layout::PerVisit;
  if (text == "wide_all_visits" || text == "wide") return Layout::WideAllVisits;
  throw Error(Errc::InvalidArgument, "unknown layout '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Schema and cohort CSV

const ColumnSpec* CohortSchema::find(std::string_view name) const noexcept {
  for (const auto& c : columns)
    if (c.name == name) return &c;
  return nullptr;
}

void to_json(json& j, const CohortSchema& s) {
  j = json{{"columns", json::array()}};
  for (const auto& c : s.columns) {
    j["columns"].push_back({{"name", c.name}, {"kind", std::string(to_string(c.kind))}, {"group", c.group}});
  }
}

void from_json(const json& j, CohortSchema& s) {
  s.columns.clear();
  for (const auto& c : j.at("columns")) {
    ColumnSpec spec;
    spec.name = c.at("name").get<std::string>();
    const auto kind = c.at("kind").get<std::string>();
    if (kind == "continuous") spec.kind = ColumnKind::Continuous;
    else if (kind == "categorical") spec.kind = ColumnKind::Categorical;
    else throw Error(Errc::InvalidArgument, "unknown column kind '" + kind + "' for " + spec.name);
    spec.group = c.value("group", "clinical");
    if (s.find(spec.name)) throw Error(Errc::InvalidArgument, "duplicate schema column " + spec.name);
    s.columns.push_back(std::move(spec));
  }
}

CohortSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return json::parse(in).get<CohortSchema>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, "invalid schema " + path.string() + ": " + e.what());
  }
}

MmseSplit split_mmse(std::span<const int> items) {
  if (items.size() != 30) {
    throw Error(Errc::WrongItemCount, "MMSE needs 30 item marks, got " + std::to_string(items.size()));
  }
  MmseSplit out;
  for (std::size_t n = 0; n < items.size(); ++n) {
    if (items[n] != 0 && items[n] != 1) throw Error(Errc::InvalidArgument, "MMSE item marks must be 0 or 1");
    const int item = static_cast<int>(n) + 1;
    const bool memory = std::find(kMmseMemoryItems.begin(), kMmseMemoryItems.end(), item) != kMmseMemoryItems.end();
    (memory ? out.memory : out.processing) += items[n];
  }
  return out;
}

void validate_records(std::span<const PatientRecord> records) {
  std::map<std::string, Diagnosis> seen;
  std::set<std::pair<std::string, int>> visits;
  for (const auto& r : records) {
    if (r.patient_id.empty()) throw Error(Errc::InvalidArgument, "record without patient_id");
    auto [it, inserted] = seen.emplace(r.patient_id, r.diagnosis);
    if (!inserted && it->second != r.diagnosis) {
      throw Error(Errc::InvalidArgument, "diagnosis changes across visits for patient " + r.patient_id);
    }
    if (!visits.emplace(r.patient_id, r.visit_month).second) {
      throw Error(Errc::InvalidArgument, "duplicate record for patient " + r.patient_id + " month " +
                                             std::to_string(r.visit_month));
    }
    if (r.mmse_memory && (*r.mmse_memory < 0 || *r.mmse_memory > 6))
      throw Error(Errc::InvalidArgument, "mmse_memory out of 0..6 for patient " + r.patient_id);
    if (r.mmse_processing && (*r.mmse_processing < 0 || *r.mmse_processing > 24))
      throw Error(Errc::InvalidArgument, "mmse_processing out of 0..24 for patient " + r.patient_id);
    if (r.mmse_memory.value_or(0) + r.mmse_processing.value_or(0) > 30)
      throw Error(Errc::InvalidArgument, "MMSE sub-scores exceed 30 for patient " + r.patient_id);
  }
}

std::vector<PatientRecord> load_cohort_csv(const std::filesystem::path& path, const CohortSchema& schema) {
  const auto doc = csv::read(path);
  auto find_col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < doc.header.size(); ++c)
      if (doc.header[c] == name) return c;
    return std::nullopt;
  };
  const auto pid_col = find_col("patient_id");
  const auto visit_col = find_col("visit_month");
  const auto dx_col = find_col("diagnosis");
  if (!pid_col || !visit_col || !dx_col) {
    throw Error(Errc::InvalidArgument, path.string() + " must have patient_id, visit_month and diagnosis columns");
  }
  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    const auto& name = doc.header[c];
    if (c == *pid_col || c == *visit_col || c == *dx_col || name == "mmse_items" || name == "mmse_memory" ||
        name == "mmse_processing")
      continue;
    if (!schema.find(name)) throw Error(Errc::InvalidArgument, "column '" + name + "' of " + path.string() + " is not in the schema");
  }

  std::vector<PatientRecord> records;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    const std::string context = path.filename().string() + " row " + std::to_string(r + 2);
    PatientRecord rec;
    rec.patient_id = row[*pid_col];
    rec.visit_month = parse_int(row[*visit_col], context);
    rec.diagnosis = parse_diagnosis(row[*dx_col]);
    for (std::size_t c = 0; c < doc.header.size(); ++c) {
      if (c == *pid_col || c == *visit_col || c == *dx_col) continue;
      const auto& name = doc.header[c];
      const auto& text = row[c];
      if (text.empty()) {
        if (schema.find(name)) rec.fields[name] = std::monostate{};
        continue;
      }
      if (name == "mmse_items") {
        std::vector<int> items;
        for (char ch : text) {
          if (ch != '0' && ch != '1') throw Error(Errc::InvalidArgument, "mmse_items must be 0/1 characters (" + context + ")");
          items.push_back(ch - '0');
        }
        const auto split = split_mmse(items);
        rec.mmse_memory = split.memory;
        rec.mmse_processing = split.processing;
      } else if (name == "mmse_memory") {
        rec.mmse_memory = parse_int(text, context);
      } else if (name == "mmse_processing") {
        rec.mmse_processing = parse_int(text, context);
      } else if (schema.find(name)->kind == ColumnKind::Continuous) {
        rec.fields[name] = parse_number(text, context + " column " + name);
      } else {
        rec.fields[name] = text;
      }
    }
    records.push_back(std::move(rec));
  }
  validate_records(records);
  return records;
}

void write_cohort_csv(const std::filesystem::path& path, std::span<const PatientRecord> records,
                      const CohortSchema& schema, const std::vector<std::string>& comments) {
  csv::Document doc;
  doc.comments = comments;
  doc.header = {"patient_id", "visit_month", "diagnosis"};
  for (const auto& c : schema.columns) doc.header.push_back(c.name);
  const bool has_mmse = std::any_of(records.begin(), records.end(),
                                    [](const PatientRecord& r) { return r.mmse_memory || r.mmse_processing; });
  if (has_mmse) {
    doc.header.push_back("mmse_memory");
    doc.header.push_back("mmse_processing");
  }
  for (const auto& r : records) {
    csv::Row row{r.patient_id, std::to_string(r.visit_month), std::string(to_string(r.diagnosis))};
    for (const auto& c : schema.columns) {
      const auto it = r.fields.find(c.name);
      row.push_back(it == r.fields.end() ? std::string{} : cell_text(it->second));
    }
    if (has_mmse) {
      row.push_back(r.mmse_memory ? std::to_string(*r.mmse_memory) : std::string{});
      row.push_back(r.mmse_processing ? std::to_string(*r.mmse_processing) : std::string{});
    }
    doc.rows.push_back(std::move(row));
  }
  csv::write(path, doc);
}

// ---------------------------------------------------------------------------
// FeatureTable

FeatureTable::FeatureTable(std::vector<ColumnSpec> columns, std::vector<TableRow> rows)
    : columns_(std::move(columns)), rows_(std::move(rows)) {
  std::set<std::string> names;
  for (const auto& c : columns_) {
    if (!names.insert(c.name).second) throw Error(Errc::InvalidArgument, "duplicate column name " + c.name);
  }
  for (const auto& r : rows_) {
    if (r.patient_id.empty()) throw Error(Errc::InvalidArgument, "table row without patient_id");
    if (r.cells.size() != columns_.size()) throw Error(Errc::InvalidArgument, "table row width does not match columns");
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      const auto& cell = r.cells[c];
      if (columns_[c].kind == ColumnKind::Continuous) {
        if (std::holds_alternative<std::string>(cell))
          throw Error(Errc::InvalidArgument, "token in continuous column " + columns_[c].name);
        if (std::holds_alternative<double>(cell) && !std::isfinite(std::get<double>(cell)))
          throw Error(Errc::NonFiniteData, "non-finite value in column " + columns_[c].name);
      } else if (std::holds_alternative<double>(cell)) {
        throw Error(Errc::InvalidArgument, "number in categorical column " + columns_[c].name);
      }
    }
  }
}

std::optional<std::size_t> FeatureTable::column_index(std::string_view name) const {
  for (std::size_t c = 0; c < columns_.size(); ++c)
    if (columns_[c].name == name) return c;
  return std::nullopt;
}

FeatureTable FeatureTable::filter_classes(std::span<const Diagnosis> classes) const {
  std::vector<TableRow> rows;
  for (const auto& r : rows_)
    if (std::find(classes.begin(), classes.end(), r.diagnosis) != classes.end()) rows.push_back(r);
  return FeatureTable(columns_, std::move(rows));
}

FeatureTable FeatureTable::select_columns(std::span<const std::string> names) const {
  std::vector<std::size_t> idx;
  std::vector<ColumnSpec> cols;
  for (const auto& n : names) {
    const auto c = column_index(n);
    if (!c) throw Error(Errc::InvalidArgument, "no column named " + n);
    idx.push_back(*c);
    cols.push_back(columns_[*c]);
  }
  std::vector<TableRow> rows;
  rows.reserve(rows_.size());
  for (const auto& r : rows_) {
    TableRow out{r.patient_id, r.visit_month, r.diagnosis, {}};
    out.cells.reserve(idx.size());
    for (auto c : idx) out.cells.push_back(r.cells[c]);
    rows.push_back(std::move(out));
  }
  return FeatureTable(std::move(cols), std::move(rows));
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> rows) const {
  std::vector<TableRow> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(rows_.at(r));
  return FeatureTable(columns_, std::move(out));
}

std::vector<std::string> FeatureTable::patient_ids() const {
  std::set<std::string> ids;
  for (const auto& r : rows_) ids.insert(r.patient_id);
  return {ids.begin(), ids.end()};
}

void write_table_csv(const FeatureTable& table, const std::filesystem::path& path,
                     const std::vector<std::string>& comments) {
  csv::Document doc;
  doc.comments = comments;
  doc.header = {"patient_id", "visit_month", "diagnosis"};
  for (const auto& c : table.columns()) doc.header.push_back(c.name);
  for (const auto& r : table.rows()) {
    csv::Row row{r.patient_id, std::to_string(r.visit_month), std::string(to_string(r.diagnosis))};
    for (const auto& c : r.cells) row.push_back(cell_text(c));
    doc.rows.push_back(std::move(row));
  }
  csv::write(path, doc);
}

// ---------------------------------------------------------------------------
// Fusion

FeatureTable fuse(std::span<const VisitFragment> fragments, std::span<const PatientRecord> records,
                  const CohortSchema& schema, const FuseOptions& options) {
  validate_records(records);
  std::map<std::string, std::vector<const PatientRecord*>> by_patient;
  for (const auto& r : records) by_patient[r.patient_id].push_back(&r);
  for (auto& [id, recs] : by_patient) {
    std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) { return a->visit_month < b->visit_month; });
  }

  std::map<std::pair<std::string, int>, const VisitFragment*> frag_index;
  std::set<std::int32_t> labels;
  std::vector<std::string> feature_names;
  for (const auto& f : fragments) {
    if (!by_patient.contains(f.patient_id)) throw Error(Errc::UnknownPatient, "fragment for unknown patient " + f.patient_id);
    if (!frag_index.emplace(std::make_pair(f.patient_id, f.visit_month), &f).second) {
      throw Error(Errc::DuplicateFragment,
                  "two fragments for patient " + f.patient_id + " month " + std::to_string(f.visit_month));
    }
    if (f.fragment.empty()) continue;
    if (feature_names.empty()) feature_names = f.fragment.feature_names;
    else if (feature_names != f.fragment.feature_names)
      throw Error(Errc::InvalidArgument, "fragments disagree on the feature catalog");
    labels.insert(f.fragment.labels.begin(), f.fragment.labels.end());
  }
  const bool wide = options.layout == Layout::WideAllVisits;
  auto visit_wanted = [&](int month) {
    return std::find(options.visits.begin(), options.visits.end(), month) != options.visits.end();
  };

  // Radiomics base names, label-major then catalog order.
  std::vector<std::string> base_names;
  if (options.include_radiomics) {
    for (auto label : labels)
      for (const auto& f : feature_names) base_names.push_back("s" + std::to_string(label) + "_" + f);
  }
  std::map<std::string, std::size_t> base_index;
  for (std::size_t n = 0; n < base_names.size(); ++n) base_index[base_names[n]] = n;

  std::vector<ColumnSpec> columns;
  if (wide) {
    for (int month : options.visits)
      for (const auto& n : base_names) columns.push_back({n + "_m" + std::to_string(month), ColumnKind::Continuous, "radiomics"});
  } else {
    for (const auto& n : base_names) columns.push_back({n, ColumnKind::Continuous, "radiomics"});
  }
  const std::size_t n_radiomics = columns.size();
  const bool has_mmse = options.include_clinical &&
                        std::any_of(records.begin(), records.end(),
                                    [](const PatientRecord& r) { return r.mmse_memory || r.mmse_processing; });
  if (options.include_clinical) {
    for (const auto& c : schema.columns) columns.push_back(c);
    if (has_mmse) {
      columns.push_back({"mmse_memory", ColumnKind::Continuous, "cognitive"});
      columns.push_back({"mmse_processing", ColumnKind::Continuous, "cognitive"});
    }
  }

  auto put_radiomics = [&](TableRow& row, const VisitFragment& f, std::size_t block) {
    const auto& frag = f.fragment;
    for (std::size_t r = 0; r < frag.labels.size(); ++r) {
      const std::string prefix = "s" + std::to_string(frag.labels[r]) + "_";
      for (std::size_t c = 0; c < frag.feature_names.size(); ++c) {
        const auto it = base_index.find(prefix + frag.feature_names[c]);
        row.cells[block * base_names.size() + it->second] = frag.values[r][c];
      }
    }
  };
  auto put_clinical = [&](TableRow& row, const PatientRecord& rec) {
    if (!options.include_clinical) return;
    std::size_t c = n_radiomics;
    for (const auto& spec : schema.columns) {
      const auto it = rec.fields.find(spec.name);
      if (it != rec.fields.end()) row.cells[c] = it->second;
      ++c;
    }
    if (has_mmse) {
      if (rec.mmse_memory) row.cells[c] = static_cast<double>(*rec.mmse_memory);
      if (rec.mmse_processing) row.cells[c + 1] = static_cast<double>(*rec.mmse_processing);
    }
  };

  std::vector<TableRow> rows;
  if (wide) {
    for (const auto& [id, recs] : by_patient) {
      TableRow row{id, -1, recs.front()->diagnosis, std::vector<Cell>(columns.size())};
      if (options.include_radiomics) {
        for (std::size_t v = 0; v < options.visits.size(); ++v) {
          const auto it = frag_index.find({id, options.visits[v]});
          if (it != frag_index.end()) put_radiomics(row, *it->second, v);
        }
      }
      put_clinical(row, *recs.front());
      rows.push_back(std::move(row));
    }
  } else {
    std::set<std::pair<std::string, int>> keys;
    for (const auto& r : records)
      if (visit_wanted(r.visit_month)) keys.emplace(r.patient_id, r.visit_month);
    for (const auto& [key, f] : frag_index)
      if (visit_wanted(key.second)) keys.insert(key);
    for (const auto& [id, month] : keys) {
      const auto& recs = by_patient.at(id);
      TableRow row{id, month, recs.front()->diagnosis, std::vector<Cell>(columns.size())};
      if (options.include_radiomics) {
        const auto it = frag_index.find({id, month});
        if (it != frag_index.end()) put_radiomics(row, *it->second, 0);
      }
      const PatientRecord* rec = recs.front();
      for (const auto* r : recs)
        if (r->visit_month == month) rec = r;
      put_clinical(row, *rec);
      rows.push_back(std::move(row));
    }
  }
  return FeatureTable(std::move(columns), std::move(rows));
}

// ---------------------------------------------------------------------------
// Preprocessing

int PreprocessState::class_index(Diagnosis d) const noexcept {
  const auto it = std::find(classes.begin(), classes.end(), d);
  return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

void to_json(json& j, const PreprocessState& s) {
  j = json{{"classes", json::array()}, {"columns", json::array()}};
  for (auto c : s.classes) j["classes"].push_back(std::string(to_string(c)));
  for (const auto& c : s.columns) {
    json col{{"name", c.name}, {"kind", std::string(to_string(c.kind))}, {"mean", c.mean}, {"std", c.std},
             {"tokens", c.tokens}};
    cell_to_json(col["global_fill"], c.global_fill);
    col["class_fill"] = json::array();
    for (const auto& f : c.class_fill) {
      json v;
      cell_to_json(v, f);
      col["class_fill"].push_back(v);
    }
    j["columns"].push_back(std::move(col));
  }
}

void from_json(const json& j, PreprocessState& s) {
  s = PreprocessState{};
  for (const auto& c : j.at("classes")) s.classes.push_back(parse_diagnosis(c.get<std::string>()));
  for (const auto& c : j.at("columns")) {
    ColumnState col;
    col.name = c.at("name").get<std::string>();
    col.kind = c.at("kind").get<std::string>() == "categorical" ? ColumnKind::Categorical : ColumnKind::Continuous;
    col.mean = c.at("mean").get<double>();
    col.std = c.at("std").get<double>();
    col.tokens = c.at("tokens").get<std::vector<std::string>>();
    col.global_fill = cell_from_json(c.at("global_fill"));
    for (const auto& f : c.at("class_fill")) col.class_fill.push_back(cell_from_json(f));
    s.columns.push_back(std::move(col));
  }
}

PreprocessState fit_preprocess(const FeatureTable& table, const std::vector<bool>& train_rows) {
  if (train_rows.size() != table.row_count()) {
    throw Error(Errc::LengthMismatch, "train_rows has " + std::to_string(train_rows.size()) + " entries for " +
                                          std::to_string(table.row_count()) + " rows");
  }
  PreprocessState state;
  std::set<Diagnosis> all_classes, train_classes;
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    all_classes.insert(table.rows()[r].diagnosis);
    if (train_rows[r]) train_classes.insert(table.rows()[r].diagnosis);
  }
  if (train_classes.empty()) throw Error(Errc::EmptyTrainSet, "no training rows");
  for (auto c : all_classes) {
    if (!train_classes.contains(c)) throw Error(Errc::ClassAbsent, "class " + std::string(to_string(c)) + " has no training rows");
  }
  state.classes.assign(all_classes.begin(), all_classes.end());
  const std::size_t n_classes = state.classes.size();

  for (std::size_t c = 0; c < table.column_count(); ++c) {
    const auto& spec = table.columns()[c];
    ColumnState col;
    col.name = spec.name;
    col.kind = spec.kind;
    col.class_fill.assign(n_classes, std::monostate{});
    if (spec.kind == ColumnKind::Continuous) {
      double sum = 0.0;
      std::size_t count = 0;
      std::vector<double> class_sum(n_classes, 0.0);
      std::vector<std::size_t> class_count(n_classes, 0);
      for (std::size_t r = 0; r < table.row_count(); ++r) {
        if (!train_rows[r]) continue;
        const auto& cell = table.cell(r, c);
        if (!std::holds_alternative<double>(cell)) continue;
        const double v = std::get<double>(cell);
        const auto k = static_cast<std::size_t>(state.class_index(table.rows()[r].diagnosis));
        sum += v;
        ++count;
        class_sum[k] += v;
        ++class_count[k];
      }
      if (count > 0) {
        col.mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t r = 0; r < table.row_count(); ++r) {
          if (!train_rows[r] || !std::holds_alternative<double>(table.cell(r, c))) continue;
          const double d = std::get<double>(table.cell(r, c)) - col.mean;
          ss += d * d;
        }
        col.std = std::sqrt(ss / static_cast<double>(count));
        if (!(col.std > 0.0)) col.std = 1.0;
        col.global_fill = col.mean;
      }
      for (std::size_t k = 0; k < n_classes; ++k) {
        col.class_fill[k] = class_count[k] > 0 ? Cell{class_sum[k] / static_cast<double>(class_count[k])} : col.global_fill;
      }
    } else {
      std::map<std::string, int> counts;
      std::vector<std::map<std::string, int>> class_counts(n_classes);
      for (std::size_t r = 0; r < table.row_count(); ++r) {
        if (!train_rows[r]) continue;
        const auto& cell = table.cell(r, c);
        if (!std::holds_alternative<std::string>(cell)) continue;
        const auto& token = std::get<std::string>(cell);
        ++counts[token];
        ++class_counts[static_cast<std::size_t>(state.class_index(table.rows()[r].diagnosis))][token];
      }
      for (const auto& [token, n] : counts) col.tokens.push_back(token);
      if (!counts.empty()) col.global_fill = mode_of(counts);
      for (std::size_t k = 0; k < n_classes; ++k) {
        col.class_fill[k] = class_counts[k].empty() ? col.global_fill : Cell{mode_of(class_counts[k])};
      }
    }
    state.columns.push_back(std::move(col));
  }
  return state;
}

PreparedData apply_preprocess(const FeatureTable& table, const PreprocessState& state, bool allow_class_imputation) {
  std::vector<std::size_t> source(state.columns.size());
  for (std::size_t c = 0; c < state.columns.size(); ++c) {
    const auto idx = table.column_index(state.columns[c].name);
    if (!idx) throw Error(Errc::DimMismatch, "table lacks fitted column " + state.columns[c].name);
    if (table.columns()[*idx].kind != state.columns[c].kind)
      throw Error(Errc::DimMismatch, "column kind changed for " + state.columns[c].name);
    source[c] = *idx;
  }
  PreparedData out;
  out.x = Matrix(table.row_count(), state.columns.size());
  for (const auto& col : state.columns) {
    out.feature_names.push_back(col.name);
    out.kinds.push_back(col.kind);
  }
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    const auto& row = table.rows()[r];
    const int k = state.class_index(row.diagnosis);
    out.labels.push_back(k);
    out.groups.push_back(row.patient_id);
    out.visits.push_back(row.visit_month);
    for (std::size_t c = 0; c < state.columns.size(); ++c) {
      const auto& col = state.columns[c];
      const Cell* cell = &row.cells[source[c]];
      if (is_missing(*cell)) cell = (allow_class_imputation && k >= 0) ? &col.class_fill[static_cast<std::size_t>(k)] : &col.global_fill;
      double value = 0.0;
      if (col.kind == ColumnKind::Continuous) {
        const double raw = std::holds_alternative<double>(*cell) ? std::get<double>(*cell) : col.mean;
        value = (raw - col.mean) / col.std;
      } else if (std::holds_alternative<std::string>(*cell)) {
        const auto& token = std::get<std::string>(*cell);
        const auto it = std::lower_bound(col.tokens.begin(), col.tokens.end(), token);
        value = (it != col.tokens.end() && *it == token) ? static_cast<double>(it - col.tokens.begin()) : -1.0;
      } else {
        value = -1.0;
      }
      out.x(r, c) = value;
    }
  }
  return out;
}

}  // namespace mindsets
