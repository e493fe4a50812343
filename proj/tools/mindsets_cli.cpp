// mindsets command line: synth, extract, preprocess, select, train, run, importance, monitor.
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mindsets/csv.hpp"
#include "mindsets/digest.hpp"
#include "mindsets/error.hpp"
#include "mindsets/eval.hpp"
#include "mindsets/explain.hpp"
#include "mindsets/monitor.hpp"
#include "mindsets/radiomics.hpp"
#include "mindsets/rng.hpp"
#include "mindsets/synth.hpp"
#include "mindsets/volume_io.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace mindsets;

namespace {

struct CliError {
  int code;
  std::string message;
};

int exit_code(Errc e) {
  switch (e) {
    case Errc::UnknownPatient:
    case Errc::DuplicateFragment:
    case Errc::ClassAbsent:
    case Errc::TooFewGroups:
    case Errc::SingleClass:
    case Errc::SingleClassTrainSet:
    case Errc::EmptyTrainSet:
    case Errc::DimMismatch:
    case Errc::LengthMismatch:
      return 3;
    case Errc::MissingTimepoint:
    case Errc::NoVisits:
      return 4;
    default:
      return 2;
  }
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
  std::string data;
};

struct Selection {
  std::string class_filter;
  std::string modality;
  std::string timepoints;
  std::string layout;
  bool no_dfg = false;
};

void note(const std::string& msg) { std::cerr << msg << '\n'; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Effective configuration: the file (or {}) with command line overrides folded in.
json effective_config(const Common& c) {
  json cfg = c.config.empty() ? json::object() : read_json(c.config);
  if (!cfg.is_object()) throw Error(Errc::InvalidSpec, "config must be a JSON object");
  if (c.seed) cfg["seed"] = *c.seed;
  return cfg;
}

std::string comment_digest(const std::string& digest) { return "config_digest=" + digest; }

fs::path require_dir(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(Errc::InvalidArgument, std::string(flag) + " is required");
  return fs::path(value);
}

std::uint64_t config_seed(const json& cfg) { return cfg.value("seed", std::uint64_t{0}); }

PipelineOptions pipeline_options(const json& cfg) {
  return cfg.contains("pipeline") ? cfg.at("pipeline").get<PipelineOptions>() : PipelineOptions{};
}

RadiomicsConfig radiomics_config(const json& cfg) {
  return cfg.contains("radiomics") ? cfg.at("radiomics").get<RadiomicsConfig>() : RadiomicsConfig{};
}

CohortData load_data(const fs::path& dir) {
  CohortData d;
  d.schema = load_schema(dir / "cohort.schema.json");
  d.records = load_cohort_csv(dir / "cohort.csv", d.schema);
  if (fs::is_directory(dir / "fragments")) d.fragments = load_fragment_dir(dir / "fragments");
  return d;
}

ExperimentSpec single_spec(const json& cfg, const Selection& sel) {
  json base = cfg.contains("train") ? cfg.at("train") : json::object();
  if (!base.contains("class_filter")) base["class_filter"] = "all4";
  if (!base.contains("seed")) base["seed"] = config_seed(cfg);
  if (!sel.class_filter.empty()) base["class_filter"] = sel.class_filter;
  if (!sel.modality.empty()) base["modality"] = sel.modality;
  if (!sel.timepoints.empty()) base["timepoints"] = sel.timepoints;
  if (sel.no_dfg) base["dfg_enabled"] = false;
  return base.get<ExperimentSpec>();
}

PipelineOptions single_options(const json& cfg, const Selection& sel) {
  auto o = pipeline_options(cfg);
  if (!sel.layout.empty()) o.layout = parse_layout(sel.layout);
  return o;
}

std::vector<ExperimentSpec> experiment_list(const json& cfg) {
  std::vector<ExperimentSpec> out;
  const auto seed = config_seed(cfg);
  if (cfg.contains("experiments")) {
    for (auto e : cfg.at("experiments")) {
      if (!e.contains("seed")) e["seed"] = seed;
      out.push_back(e.get<ExperimentSpec>());
    }
  }
  if (cfg.contains("matrix")) {
    const auto& m = cfg.at("matrix");
    const auto filters = m.value("class_filters", std::vector<std::string>{});
    const auto modalities = m.value("modalities", std::vector<std::string>{"multiomics", "mri"});
    const auto timepoints = m.value("timepoints", std::vector<std::string>{"all", "month0"});
    const auto dfg = m.value("dfg", std::vector<bool>{true});
    for (const auto& f : filters)
      for (const auto& mo : modalities)
        for (const auto& t : timepoints)
          for (bool d : dfg) {
            ExperimentSpec s;
            s.class_filter = parse_class_filter(f);
            s.modality = parse_modality(mo);
            s.timepoints = parse_timepoints(t);
            s.dfg_enabled = d;
            s.seed = seed;
            out.push_back(s);
          }
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& c) {
  json cfg = c.config.empty() ? json::object() : read_json(c.config);
  json spec_json = cfg.contains("synth") ? cfg.at("synth") : cfg;
  if (c.seed) spec_json["seed"] = *c.seed;
  const auto spec = spec_json.get<SynthSpec>();
  const auto out = require_dir(c.out, "--out");
  note("synth: writing cohort to " + out.string());
  const auto result = generate_cohort(spec, out);
  json summary{{"command", "synth"},
               {"out", out.string()},
               {"files", result.files.size()},
               {"spec_digest", result.manifest.at("spec_digest")},
               {"manifest_digest", file_digest((out / "manifest.json").string())}};
  std::cout << summary.dump() << '\n';
  return 0;
}

std::string scan_stem(const std::string& name) {
  for (const char* ext : {".vol.json", ".nii.gz", ".nii"}) {
    const std::string e = ext;
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0)
      return name.substr(0, name.size() - e.size());
  }
  return {};
}

int cmd_extract(const Common& c) {
  const json cfg = effective_config(c);
  const auto rcfg = radiomics_config(cfg);
  const auto digest = config_digest(cfg);
  const auto data = require_dir(c.data, "--data");
  const fs::path out = c.out.empty() ? data / "fragments" : fs::path(c.out);
  const auto vol_dir = data / "volumes", mask_dir = data / "masks";
  if (!fs::is_directory(vol_dir)) throw Error(Errc::Io, "no volumes directory: " + vol_dir.string());

  std::vector<std::pair<fs::path, fs::path>> jobs;
  std::vector<std::string> stems;
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(vol_dir))
    if (e.is_regular_file()) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    const auto stem = scan_stem(p.filename().string());
    if (stem.empty()) continue;
    const auto mask = mask_dir / p.filename();
    if (!fs::exists(mask)) throw Error(Errc::Io, "missing mask file " + mask.string() + " for " + p.string());
    jobs.emplace_back(p, mask);
    stems.push_back(stem);
  }
  fs::create_directories(out);

  std::atomic<std::size_t> next{0}, done{0};
  std::vector<std::optional<Error>> errors(jobs.size());
  auto worker = [&] {
    for (;;) {
      const std::size_t n = next.fetch_add(1);
      if (n >= jobs.size()) return;
      try {
        const auto vol = load_volume(jobs[n].first);
        const auto mask = load_mask(jobs[n].second);
        const auto frag = extract_all(vol, mask, rcfg, 1);
        write_fragment_csv(frag, out / (stems[n] + ".csv"),
                           {comment_digest(digest), "source=" + jobs[n].first.filename().string()});
      } catch (const Error& e) {
        errors[n] = Error(e.code(), jobs[n].first.string() + ": " + e.what());
      }
      const auto k = done.fetch_add(1) + 1;
      if (k % 25 == 0 || k == jobs.size()) note("extract: " + std::to_string(k) + "/" + std::to_string(jobs.size()));
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < std::max(1, c.jobs); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) throw *e;
  std::cout << json{{"command", "extract"}, {"fragments", jobs.size()}, {"out", out.string()}, {"config_digest", digest}}.dump()
            << '\n';
  return 0;
}

FeatureTable selected_table(const json& cfg, const Common& c, const Selection& sel, ExperimentSpec& spec,
                            PipelineOptions& options) {
  spec = single_spec(cfg, sel);
  options = single_options(cfg, sel);
  const auto data = load_data(require_dir(c.data, "--data"));
  return build_table(data, spec, options.layout);
}

int cmd_preprocess(const Common& c, const Selection& sel) {
  const json cfg = effective_config(c);
  const auto digest = config_digest(cfg);
  ExperimentSpec spec;
  PipelineOptions options;
  const auto table = selected_table(cfg, c, sel, spec, options);
  const auto out = require_dir(c.out, "--out");
  fs::create_directories(out);
  const auto state = fit_preprocess(table, std::vector<bool>(table.row_count(), true));
  write_table_csv(table, out / "table.csv", {comment_digest(digest)});
  write_json(out / "preprocess_state.json", {{"config_digest", digest}, {"spec", spec}, {"state", state}});
  std::cout << json{{"command", "preprocess"}, {"rows", table.row_count()}, {"columns", table.column_count()},
                    {"config_digest", digest}}.dump()
            << '\n';
  return 0;
}

int cmd_select(const Common& c, const Selection& sel) {
  const json cfg = effective_config(c);
  const auto digest = config_digest(cfg);
  ExperimentSpec spec;
  PipelineOptions options;
  const auto table = selected_table(cfg, c, sel, spec, options);
  const auto out = require_dir(c.out, "--out");
  const auto state = fit_preprocess(table, std::vector<bool>(table.row_count(), true));
  const auto prep = apply_preprocess(table, state, true);
  std::vector<bool> categorical(prep.kinds.size());
  for (std::size_t k = 0; k < categorical.size(); ++k) categorical[k] = prep.kinds[k] == ColumnKind::Categorical;
  const auto result = sulov_select(prep.x, prep.labels, prep.feature_names, categorical, options.select);
  const auto top = truncate_top_k(result, options.top_k);
  write_json(out / "selection.json", {{"config_digest", digest}, {"spec", spec}, {"selection", result}, {"top_k", top}});
  std::cout << json{{"command", "select"}, {"input", prep.feature_names.size()}, {"kept", result.kept.size()},
                    {"top_k", top.size()}, {"config_digest", digest}}.dump()
            << '\n';
  return 0;
}

json bundle_json(const TrainedPipeline& p, const ExperimentSpec& spec, const PipelineOptions& options,
                 const std::string& digest) {
  return {{"format", "mindsets-model-bundle"}, {"version", 1},         {"config_digest", digest},
          {"spec", spec},                      {"options", options},   {"pipeline", pipeline_to_json(p)}};
}

struct Bundle {
  ExperimentSpec spec;
  PipelineOptions options;
  TrainedPipeline pipeline;
};

Bundle load_bundle(const fs::path& path) {
  const auto j = read_json(path);
  try {
    if (j.at("format").get<std::string>() != "mindsets-model-bundle")
      throw Error(Errc::InvalidArgument, path.string() + " is not a model bundle");
    if (j.at("version").get<int>() != 1) throw Error(Errc::VersionMismatch, "unsupported bundle version in " + path.string());
    return {j.at("spec").get<ExperimentSpec>(), j.at("options").get<PipelineOptions>(), pipeline_from_json(j.at("pipeline"))};
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, "malformed bundle " + path.string() + ": " + e.what());
  }
}

int cmd_train(const Common& c, const Selection& sel) {
  const json cfg = effective_config(c);
  const auto digest = config_digest(cfg);
  ExperimentSpec spec;
  PipelineOptions options;
  const auto table = selected_table(cfg, c, sel, spec, options);
  const auto out = require_dir(c.out, "--out");
  note("train: " + spec.name() + " on " + std::to_string(table.row_count()) + " rows");
  const auto p = fit_pipeline(table, std::vector<bool>(table.row_count(), true), options, spec.seed, spec.dfg_enabled);
  write_json(out / "model.json", bundle_json(p, spec, options, digest));
  std::cout << json{{"command", "train"}, {"spec", spec.name()}, {"features", p.features.size()},
                    {"stopped_epoch", p.log.stopped_epoch}, {"best_epoch", p.log.best_epoch}, {"config_digest", digest}}.dump()
            << '\n';
  return 0;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

double metric_of(const MetricSet& m, const std::string& name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "f1") return m.f1;
  if (name == "recall") return m.recall;
  if (name == "precision") return m.precision;
  return m.auc;
}

int cmd_run(const Common& c) {
  const json cfg = effective_config(c);
  const auto digest = config_digest(cfg);
  const auto specs = experiment_list(cfg);
  if (specs.empty()) throw CliError{3, "config lists no experiments"};
  const auto options = pipeline_options(cfg);
  const auto data = load_data(require_dir(c.data, "--data"));
  const auto out = require_dir(c.out, "--out");
  fs::create_directories(out / "reports");

  std::vector<EvalReport> reports;
  for (const auto& spec : specs) {
    note("run: " + spec.name());
    auto r = run_experiment(data, spec, options);
    json j = r;
    j["run_config_digest"] = digest;
    write_json(out / "reports" / (spec.name() + ".json"), j);
    note("run: " + spec.name() + " accuracy " + fmt(r.mean.accuracy));
    reports.push_back(std::move(r));
  }

  // Metric table: one row per (class filter, metric), one column per scenario, DFG-enabled runs.
  const std::vector<std::string> metric_names = {"accuracy", "f1", "recall", "precision", "auc"};
  std::vector<std::string> scenarios;
  std::vector<std::string> filters;
  std::map<std::pair<std::string, std::string>, const EvalReport*> cell;
  for (const auto& r : reports) {
    const std::string f(to_string(r.spec.class_filter));
    const std::string s = std::string(to_string(r.spec.modality)) + "_" + std::string(to_string(r.spec.timepoints));
    if (std::find(filters.begin(), filters.end(), f) == filters.end()) filters.push_back(f);
    if (std::find(scenarios.begin(), scenarios.end(), s) == scenarios.end()) scenarios.push_back(s);
    const bool prefer = r.spec.dfg_enabled;
    auto& slot = cell[{f, s}];
    if (!slot || (prefer && !slot->spec.dfg_enabled)) slot = &r;
  }
  csv::Document table;
  table.comments = {comment_digest(digest)};
  table.header = {"class_filter", "metric"};
  for (const auto& s : scenarios) table.header.push_back(s);
  for (const auto& f : filters)
    for (const auto& m : metric_names) {
      csv::Row row{f, m};
      for (const auto& s : scenarios) {
        const auto it = cell.find({f, s});
        row.push_back(it == cell.end() ? std::string{} : csv::format_double(metric_of(it->second->mean, m)));
      }
      table.rows.push_back(std::move(row));
    }
  csv::write(out / "results.csv", table);

  // With/without DFG comparison.
  csv::Document cmp;
  cmp.comments = {comment_digest(digest)};
  cmp.header = {"class_filter", "modality", "timepoints", "accuracy_dfg", "accuracy_no_dfg", "delta"};
  for (const auto& a : reports) {
    if (!a.spec.dfg_enabled) continue;
    for (const auto& b : reports) {
      if (b.spec.dfg_enabled || b.spec.class_filter != a.spec.class_filter || b.spec.modality != a.spec.modality ||
          b.spec.timepoints != a.spec.timepoints)
        continue;
      cmp.rows.push_back({std::string(to_string(a.spec.class_filter)), std::string(to_string(a.spec.modality)),
                          std::string(to_string(a.spec.timepoints)), csv::format_double(a.mean.accuracy),
                          csv::format_double(b.mean.accuracy), csv::format_double(a.mean.accuracy - b.mean.accuracy)});
    }
  }
  if (!cmp.rows.empty()) csv::write(out / "dfg_comparison.csv", cmp);

  json summary{{"config_digest", digest}, {"experiments", json::array()}};
  for (const auto& r : reports) summary["experiments"].push_back({{"name", r.spec.name()}, {"mean", r.mean}});
  write_json(out / "summary.json", summary);

  // Aligned text table on stdout.
  std::size_t w0 = 12;
  for (const auto& f : filters) w0 = std::max(w0, f.size() + 2);
  std::printf("%-*s%-11s", static_cast<int>(w0), "class_filter", "metric");
  for (const auto& s : scenarios) std::printf("%18s", s.c_str());
  std::printf("\n");
  for (const auto& row : table.rows) {
    std::printf("%-*s%-11s", static_cast<int>(w0), row[0].c_str(), row[1].c_str());
    for (std::size_t k = 2; k < row.size(); ++k) {
      if (row[k].empty()) std::printf("%18s", "-");
      else std::printf("%18s", fmt(std::stod(row[k])).c_str());
    }
    std::printf("\n");
  }
  return 0;
}

int cmd_importance(const Common& c, const std::string& model_path, const std::string& metric_flag, int repeats_flag) {
  const json cfg = effective_config(c);
  const auto digest = config_digest(cfg);
  const auto bundle = load_bundle(require_dir(model_path, "--model"));
  const auto data = load_data(require_dir(c.data, "--data"));
  const auto table = build_table(data, bundle.spec, bundle.options.layout);
  const auto prep = bundle.pipeline.prepare(table);
  const json icfg = cfg.value("importance", json::object());
  const auto metric = parse_importance_metric(metric_flag.empty() ? icfg.value("metric", "accuracy") : metric_flag);
  const int repeats = repeats_flag > 0 ? repeats_flag : icfg.value("repeats", 5);
  const auto& model = bundle.pipeline.model;
  const ProbabilityFn fn = [&](const Matrix& m) { return model.predict_proba(m); };
  ImportanceReport report;
  json per_visit = json::array();
  if (bundle.options.layout == Layout::PerVisit) {
    // Rows of one visit share a timepoint, so each visit is scored on its own and its features tagged with the month.
    std::map<int, std::vector<std::size_t>> by_month;
    for (std::size_t r = 0; r < prep.visits.size(); ++r) by_month[prep.visits[r]].push_back(r);
    report.metric = metric;
    double baseline = 0.0;
    for (const auto& [month, rows] : by_month) {
      std::vector<int> labels;
      for (auto r : rows) labels.push_back(prep.labels[r]);
      auto part = permutation_importance(fn, prep.x.select_rows(rows), labels, prep.feature_names, metric, repeats,
                                         derive_seed(config_seed(cfg), static_cast<std::uint64_t>(month)));
      per_visit.push_back({{"visit_month", month}, {"rows", rows.size()}, {"baseline", part.baseline}});
      baseline += part.baseline * static_cast<double>(rows.size());
      for (auto& f : part.features) {
        f.name += "_m" + std::to_string(month);
        report.features.push_back(std::move(f));
      }
    }
    report.baseline = prep.x.rows() == 0 ? 0.0 : baseline / static_cast<double>(prep.x.rows());
  } else {
    report = permutation_importance(fn, prep.x, prep.labels, prep.feature_names, metric, repeats, config_seed(cfg));
  }
  const auto grouped = group_by_timepoint(report);
  const auto out = require_dir(c.out, "--out");
  write_json(out / "importance.json", {{"config_digest", digest}, {"spec", bundle.spec}, {"report", report}, {"grouped", grouped}, {"per_visit", per_visit}});
  csv::Document plot;
  plot.comments = {comment_digest(digest)};
  plot.header = {"feature", "timepoint", "structure", "importance", "std"};
  for (const auto& f : report.features) {
    const auto p = parse_feature_name(f.name);
    plot.rows.push_back({f.name, p.radiomics ? "m" + std::to_string(p.month) : kMultiOmicsGroup,
                         p.radiomics ? "s" + std::to_string(p.structure) : kMultiOmicsGroup, csv::format_double(f.mean),
                         csv::format_double(f.std)});
  }
  csv::write(out / "importance.csv", plot);
  std::cout << json{{"command", "importance"}, {"baseline", report.baseline}, {"by_timepoint", grouped.by_timepoint},
                    {"config_digest", digest}}.dump()
            << '\n';
  return 0;
}

int cmd_monitor(const Common& c, const std::string& model_path, const std::string& trajectories_path,
                const std::string& mean_over) {
  const json cfg = effective_config(c);
  const auto digest = config_digest(cfg);
  const json mcfg = cfg.value("monitor", json::object());
  const auto horizons = mcfg.value("horizons", std::vector<int>{3, 12});
  const std::string mode_text = mean_over.empty() ? mcfg.value("mean_over", "decreasers") : mean_over;
  DecreaseMean mode;
  if (mode_text == "decreasers") mode = DecreaseMean::Decreasers;
  else if (mode_text == "all_patients") mode = DecreaseMean::AllPatients;
  else throw Error(Errc::InvalidSpec, "mean_over must be decreasers or all_patients");
  const auto target_dx = parse_diagnosis(mcfg.value("target", "MCI"));

  std::map<std::string, std::string> arm_of;
  std::map<std::string, std::vector<TrajectoryPoint>> points;
  int target = 0;
  if (!trajectories_path.empty()) {
    const auto doc = csv::read(trajectories_path);
    const std::vector<std::string> expected = {"patient_id", "arm", "visit_month", "probability"};
    if (doc.header != expected)
      throw Error(Errc::InvalidArgument, trajectories_path + " must have columns patient_id,arm,visit_month,probability");
    for (const auto& row : doc.rows) {
      const double p = std::stod(row[3]);
      arm_of[row[0]] = row[1];
      points[row[0]].push_back({std::stoi(row[2]), {p, 1.0 - p}});
    }
  } else {
    const auto bundle = load_bundle(require_dir(model_path, "--model or --trajectories"));
    if (bundle.options.layout != Layout::PerVisit)
      throw Error(Errc::InvalidArgument, "monitoring needs a model trained with the per_visit layout");
    target = bundle.pipeline.preprocess.class_index(target_dx);
    if (target < 0) throw Error(Errc::ClassAbsent, "model was not trained on " + std::string(to_string(target_dx)));
    const auto dir = require_dir(c.data, "--data");
    const auto data = load_data(dir);
    const auto arms = csv::read(dir / "arms.csv");
    for (const auto& row : arms.rows) arm_of[row.at(0)] = row.at(1);
    std::set<int> visits;
    for (const auto& r : data.records) visits.insert(r.visit_month);
    FuseOptions fo;
    fo.layout = Layout::PerVisit;
    fo.visits.assign(visits.begin(), visits.end());
    fo.include_clinical = bundle.spec.modality == Modality::MultiOmics;
    const auto table = fuse(data.fragments, data.records, data.schema, fo);
    const auto probs = bundle.pipeline.predict_proba(table);
    for (std::size_t r = 0; r < table.row_count(); ++r) {
      const auto row = probs.row(r);
      points[table.rows()[r].patient_id].push_back({table.rows()[r].visit_month, {row.begin(), row.end()}});
    }
  }

  std::vector<Trajectory> treated, control;
  csv::Document traj;
  traj.comments = {comment_digest(digest)};
  traj.header = {"patient_id", "arm", "visit_month", "probability"};
  for (auto& [id, pts] : points) {
    const auto it = arm_of.find(id);
    if (it == arm_of.end()) throw Error(Errc::UnknownPatient, "patient " + id + " has no arm assignment");
    auto t = trajectory_from_points(id, std::move(pts), target);
    for (const auto& p : t.points)
      traj.rows.push_back({id, it->second, std::to_string(p.visit_month),
                           csv::format_double(p.probabilities[static_cast<std::size_t>(target)])});
    if (it->second == "treated") treated.push_back(std::move(t));
    else if (it->second == "control") control.push_back(std::move(t));
    else throw Error(Errc::InvalidArgument, "unknown arm '" + it->second + "' for " + id);
  }
  json reports = json::array();
  for (int h : horizons) reports.push_back(cohort_report(treated, control, target, h, mode));
  const auto out = require_dir(c.out, "--out");
  write_json(out / "monitor_report.json",
             {{"config_digest", digest}, {"target", std::string(to_string(target_dx))}, {"reports", reports}});
  csv::write(out / "trajectories.csv", traj);
  std::cout << json{{"command", "monitor"}, {"reports", reports}, {"config_digest", digest}}.dump() << '\n';
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool needs_data) {
  sub->add_option("--config", c.config, "Configuration JSON");
  sub->add_option("--seed", c.seed, "Seed override");
  sub->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "Output directory");
  if (needs_data) sub->add_option("--data", c.data, "Cohort directory (cohort.csv, cohort.schema.json, fragments/)");
}

void add_selection(CLI::App* sub, Selection& s) {
  sub->add_option("--class-filter", s.class_filter, "AD_vs_CTL, AD_vs_MCI, MCI_vs_CTL, AD_vs_VaD or all4");
  sub->add_option("--modality", s.modality, "mri or multiomics");
  sub->add_option("--timepoints", s.timepoints, "month0 or all");
  sub->add_option("--layout", s.layout, "per_visit or wide_all_visits");
  sub->add_flag("--no-dfg", s.no_dfg, "Train without the feature generator");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dementia subtyping pipeline: radiomics, multi-omics fusion, deep feature generation"};
  app.require_subcommand(1);
  Common common;
  Selection selection;
  std::string model_path, trajectories_path, metric, mean_over;
  int repeats = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  add_common(synth, common, false);
  auto* extract = app.add_subcommand("extract", "Extract radiomics fragments from volume/mask pairs");
  add_common(extract, common, true);
  auto* preprocess = app.add_subcommand("preprocess", "Fuse tables and fit preprocessing on all rows");
  add_common(preprocess, common, true);
  add_selection(preprocess, selection);
  auto* select = app.add_subcommand("select", "Run the correlated-feature selector on all rows");
  add_common(select, common, true);
  add_selection(select, selection);
  auto* train = app.add_subcommand("train", "Fit the full pipeline on all rows and save a model bundle");
  add_common(train, common, true);
  add_selection(train, selection);
  auto* run = app.add_subcommand("run", "Cross-validate every configured experiment");
  add_common(run, common, true);
  auto* importance = app.add_subcommand("importance", "Permutation importance of a trained model");
  add_common(importance, common, true);
  importance->add_option("--model", model_path, "Model bundle JSON")->required();
  importance->add_option("--metric", metric, "accuracy or auc");
  importance->add_option("--repeats", repeats, "Shuffles per feature");
  auto* monitor = app.add_subcommand("monitor", "Treated vs control probability trajectories");
  add_common(monitor, common, true);
  monitor->add_option("--model", model_path, "Model bundle JSON (per_visit layout)");
  monitor->add_option("--trajectories", trajectories_path, "Precomputed trajectories CSV instead of a model");
  monitor->add_option("--mean-over", mean_over, "decreasers or all_patients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(common);
    if (*extract) return cmd_extract(common);
    if (*preprocess) return cmd_preprocess(common, selection);
    if (*select) return cmd_select(common, selection);
    if (*train) return cmd_train(common, selection);
    if (*run) return cmd_run(common);
    if (*importance) return cmd_importance(common, model_path, metric, repeats);
    if (*monitor) return cmd_monitor(common, model_path, trajectories_path, mean_over);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
