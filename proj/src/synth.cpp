#include "mindsets/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>

#include "mindsets/csv.hpp"
#include "mindsets/digest.hpp"
#include "mindsets/error.hpp"
#include "mindsets/rng.hpp"

namespace mindsets {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kQuantum = 1024.0;

double round_to(double v, double step) { return std::round(v / step) * step; }

ClassEffect lerp(const ClassEffect& a, const ClassEffect& b, double t) {
  return {a.size + (b.size - a.size) * t, a.noise + (b.noise - a.noise) * t};
}

TabularEffect lerp(const TabularEffect& a, const TabularEffect& b, double t) {
  return {a.clinical_shift + (b.clinical_shift - a.clinical_shift) * t,
          a.memory_deficit + (b.memory_deficit - a.memory_deficit) * t,
          a.processing_deficit + (b.processing_deficit - a.processing_deficit) * t,
          a.vascular_risk + (b.vascular_risk - a.vascular_risk) * t};
}

std::string padded_id(const std::string& prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix.c_str(), n);
  return buf;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Per-patient latent draws shared by all visits.
struct Latent {
  double size_z = 0.0;
  double age_z = 0.0;
  double education_z = 0.0;
  double hachinski_z = 0.0;
  bool female = false;
  double allele_u[4] = {0, 0, 0, 0};
};

Latent draw_latent(std::uint64_t patient_seed) {
  SplitMix64 rng(derive_seed(patient_seed, 1));
  Latent l;
  l.size_z = rng.normal();
  l.age_z = rng.normal();
  l.education_z = rng.normal();
  l.hachinski_z = rng.normal();
  l.female = rng.bernoulli(0.5);
  for (auto& u : l.allele_u) u = rng.uniform();
  return l;
}

std::string apoe_genotype(const Latent& l, double clinical_shift) {
  const double p_e4 = std::clamp(0.15 + 0.35 * clinical_shift, 0.0, 0.9);
  auto allele = [&](double u_e4, double u_e2) -> std::string {
    if (u_e4 < p_e4) return "e4";
    return u_e2 < 0.08 ? "e2" : "e3";
  };
  auto a = allele(l.allele_u[0], l.allele_u[1]);
  auto b = allele(l.allele_u[2], l.allele_u[3]);
  if (b < a) std::swap(a, b);
  return a + "/" + b;
}

struct Emitter {
  const SynthSpec& spec;
  fs::path root;
  CohortSchema schema = synth_schema();
  csv::Document cohort;
  std::vector<std::string> files;

  Emitter(const SynthSpec& s, fs::path r) : spec(s), root(std::move(r)) {
    fs::create_directories(root / "volumes");
    fs::create_directories(root / "masks");
    cohort.header = {"patient_id", "visit_month", "diagnosis"};
    for (const auto& c : schema.columns) cohort.header.push_back(c.name);
    cohort.header.push_back("mmse_items");
  }

  // Writes every visit of one patient; returns the size factor used.
  double patient(const std::string& id, Diagnosis dx, std::uint64_t seed,
                 const std::function<ClassEffect(int)>& class_at, const std::function<TabularEffect(int)>& tab_at) {
    const Latent l = draw_latent(seed);
    const double jitter = 1.0 + spec.size_jitter * l.size_z;
    const auto baseline_tab = tab_at(spec.visits.front());
    const std::string apoe = apoe_genotype(l, baseline_tab.clinical_shift);
    for (int month : spec.visits) {
      const auto effect = class_at(month);
      const auto tab = tab_at(month);
      auto [vol, mask] = synth_volume(spec, seed, month, effect, effect.size * jitter);
      const std::string stem = id + "_m" + std::to_string(month);
      write_raw_volume(vol, root / "volumes" / (stem + ".vol.json"));
      write_raw_mask(mask, root / "masks" / (stem + ".vol.json"));
      for (const char* dir : {"volumes/", "masks/"}) {
        files.push_back(dir + stem + ".vol.json");
        files.push_back(dir + stem + ".vol.bin");
      }

      SplitMix64 rng(derive_seed(seed, 5000 + static_cast<std::uint64_t>(month)));
      const double age = round_to(72.0 + 6.0 * l.age_z + 4.0 * tab.clinical_shift + month / 12.0, 0.1);
      const double education = std::max(0.0, std::round(14.0 + 3.0 * l.education_z - 1.5 * tab.clinical_shift));
      const double hachinski = std::max(0.0, std::round(2.0 + 1.2 * l.hachinski_z + 4.0 * tab.vascular_risk));
      const double p_memory = std::clamp(0.95 - tab.memory_deficit, 0.02, 0.98);
      const double p_processing = std::clamp(0.97 - tab.processing_deficit, 0.02, 0.98);
      std::string items(30, '0');
      for (int item = 1; item <= 30; ++item) {
        const bool memory =
            std::find(kMmseMemoryItems.begin(), kMmseMemoryItems.end(), item) != kMmseMemoryItems.end();
        items[static_cast<std::size_t>(item - 1)] = rng.bernoulli(memory ? p_memory : p_processing) ? '1' : '0';
      }
      char age_text[32];
      std::snprintf(age_text, sizeof age_text, "%.1f", age);
      csv::Row row{id, std::to_string(month), std::string(to_string(dx)),
                   age_text, csv::format_double(education), csv::format_double(hachinski),
                   l.female ? "F" : "M", apoe, items};
      for (std::size_t c = 3; c < row.size(); ++c)
        if (rng.bernoulli(spec.missing_rate)) row[c].clear();
      cohort.rows.push_back(std::move(row));
    }
    return jitter;
  }

  void finish_tables() {
    csv::write(root / "cohort.csv", cohort);
    files.push_back("cohort.csv");
    write_json_file(root / "cohort.schema.json", json(schema));
    files.push_back("cohort.schema.json");
  }

  json file_list(const std::string& prefix = "") const {
    std::vector<std::string> sorted = files;
    std::sort(sorted.begin(), sorted.end());
    json out = json::array();
    for (const auto& f : sorted) out.push_back({{"path", prefix + f}, {"digest", file_digest((root / f).string())}});
    return out;
  }
};

}  // namespace

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidSpec, "invalid synth spec: " + what); };
  for (auto d : kAllDiagnoses) {
    const auto it = n_patients.find(d);
    if (it == n_patients.end() || it->second < 1) fail("n_patients for " + std::string(to_string(d)) + " must be >= 1");
    const auto ce = class_effect.find(d);
    if (ce == class_effect.end()) fail("class_effect missing for " + std::string(to_string(d)));
    if (!(ce->second.size > 0.0) || !(ce->second.noise > 0.0)) fail("class_effect multipliers must be > 0");
    if (!tabular_effect.contains(d)) fail("tabular_effect missing for " + std::string(to_string(d)));
  }
  if (visits.empty()) fail("visits must not be empty");
  std::set<int> seen;
  for (int v : visits) {
    if (std::find(kVisitMonths.begin(), kVisitMonths.end(), v) == kVisitMonths.end()) fail("visits must be drawn from {0, 3, 12}");
    if (!seen.insert(v).second) fail("duplicate visit");
  }
  if (!std::is_sorted(visits.begin(), visits.end())) fail("visits must be increasing");
  if (grid_size < 8 || grid_size > 256) fail("grid_size must be in [8, 256]");
  if (n_structures < 1 || n_structures > 64) fail("n_structures must be in [1, 64]");
  if (!(size_jitter >= 0.0 && size_jitter < 0.3)) fail("size_jitter must be in [0, 0.3)");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) fail("missing_rate must be in [0, 1)");
  if (treatment.n_treated < 0 || treatment.n_control < 0) fail("treatment counts must be >= 0");
  if (!(treatment.drift >= 0.0) || !std::isfinite(treatment.drift)) fail("treatment drift must be >= 0");
  if (!(treatment.responder_fraction >= 0.0 && treatment.responder_fraction <= 1.0))
    fail("responder_fraction must be in [0, 1]");
}

void to_json(json& j, const SynthSpec& s) {
  json n = json::object(), ce = json::object(), te = json::object();
  for (const auto& [d, v] : s.n_patients) n[std::string(to_string(d))] = v;
  for (const auto& [d, v] : s.class_effect) ce[std::string(to_string(d))] = {{"size", v.size}, {"noise", v.noise}};
  for (const auto& [d, v] : s.tabular_effect)
    te[std::string(to_string(d))] = {{"clinical_shift", v.clinical_shift},
                                     {"memory_deficit", v.memory_deficit},
                                     {"processing_deficit", v.processing_deficit},
                                     {"vascular_risk", v.vascular_risk}};
  j = json{{"n_patients", n},
           {"visits", s.visits},
           {"grid_size", s.grid_size},
           {"n_structures", s.n_structures},
           {"class_effect", ce},
           {"tabular_effect", te},
           {"treatment",
            {{"n_treated", s.treatment.n_treated},
             {"n_control", s.treatment.n_control},
             {"drift", s.treatment.drift},
             {"responder_fraction", s.treatment.responder_fraction}}},
           {"size_jitter", s.size_jitter},
           {"missing_rate", s.missing_rate},
           {"seed", s.seed}};
}

void from_json(const json& j, SynthSpec& s) {
  static const std::set<std::string> known = {"n_patients", "visits", "grid_size", "n_structures", "class_effect",
                                              "tabular_effect", "treatment", "size_jitter", "missing_rate", "seed"};
  try {
    if (!j.is_object()) throw Error(Errc::InvalidSpec, "synth spec must be a JSON object");
    for (const auto& [key, value] : j.items())
      if (!known.contains(key)) throw Error(Errc::InvalidSpec, "unknown synth spec key '" + key + "'");
    SynthSpec d = strong_spec();
    if (j.contains("n_patients"))
      for (const auto& [k, v] : j.at("n_patients").items()) d.n_patients[parse_diagnosis(k)] = v.get<int>();
    d.visits = j.value("visits", d.visits);
    d.grid_size = j.value("grid_size", d.grid_size);
    d.n_structures = j.value("n_structures", d.n_structures);
    if (j.contains("class_effect"))
      for (const auto& [k, v] : j.at("class_effect").items()) {
        auto& e = d.class_effect[parse_diagnosis(k)];
        e.size = v.value("size", e.size);
        e.noise = v.value("noise", e.noise);
      }
    if (j.contains("tabular_effect"))
      for (const auto& [k, v] : j.at("tabular_effect").items()) {
        auto& e = d.tabular_effect[parse_diagnosis(k)];
        e.clinical_shift = v.value("clinical_shift", e.clinical_shift);
        e.memory_deficit = v.value("memory_deficit", e.memory_deficit);
        e.processing_deficit = v.value("processing_deficit", e.processing_deficit);
        e.vascular_risk = v.value("vascular_risk", e.vascular_risk);
      }
    if (j.contains("treatment")) {
      const auto& t = j.at("treatment");
      d.treatment.n_treated = t.value("n_treated", d.treatment.n_treated);
      d.treatment.n_control = t.value("n_control", d.treatment.n_control);
      d.treatment.drift = t.value("drift", d.treatment.drift);
      d.treatment.responder_fraction = t.value("responder_fraction", d.treatment.responder_fraction);
    }
    d.size_jitter = j.value("size_jitter", d.size_jitter);
    d.missing_rate = j.value("missing_rate", d.missing_rate);
    d.seed = j.value("seed", d.seed);
    d.validate();
    s = d;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("malformed synth spec: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::InvalidSpec) throw;
    throw Error(Errc::InvalidSpec, e.what());
  }
}

SynthSpec strong_spec() {
  SynthSpec s;
  s.class_effect = {{Diagnosis::AD, {0.75, 1.6}},
                    {Diagnosis::VaD, {0.92, 1.3}},
                    {Diagnosis::MCI, {0.88, 1.15}},
                    {Diagnosis::CTL, {1.0, 1.0}}};
  s.tabular_effect = {{Diagnosis::AD, {1.0, 0.55, 0.2, 0.2}},
                      {Diagnosis::VaD, {0.6, 0.2, 0.4, 1.0}},
                      {Diagnosis::MCI, {0.4, 0.25, 0.1, 0.2}},
                      {Diagnosis::CTL, {0.0, 0.0, 0.0, 0.0}}};
  s.treatment = {20, 20, 0.5, 0.75};
  return s;
}

SynthSpec null_spec() {
  SynthSpec s = strong_spec();
  for (auto& [d, e] : s.class_effect) e = {1.0, 1.0};
  for (auto& [d, e] : s.tabular_effect) e = {};
  return s;
}

CohortSchema synth_schema() {
  return {{{"age", ColumnKind::Continuous, "clinical"},
           {"education", ColumnKind::Continuous, "clinical"},
           {"hachinski", ColumnKind::Continuous, "clinical"},
           {"sex", ColumnKind::Categorical, "clinical"},
           {"apoe", ColumnKind::Categorical, "genetic"}}};
}

double treatment_progress(const TreatmentSpec& t, bool responder, int month) {
  if (!responder) return 0.0;
  return std::clamp(t.drift * month / 12.0, 0.0, 1.0);
}

double oracle_probability(double progress) { return std::round((0.95 - 0.9 * progress) * kQuantum) / kQuantum; }

std::pair<Volume3D, LabelMask> synth_volume(const SynthSpec& spec, std::uint64_t patient_seed, int month,
                                            const ClassEffect& effect, double size_factor) {
  const auto G = static_cast<std::size_t>(spec.grid_size);
  int k = 1;
  while (k * k * k < spec.n_structures) ++k;
  const double cell = static_cast<double>(G) / k;
  SplitMix64 rng(derive_seed(patient_seed, 1000 + static_cast<std::uint64_t>(month)));
  std::vector<std::int32_t> labels(G * G * G, 0);
  constexpr double aspect[3] = {1.0, 0.85, 0.7};
  for (int n = 0; n < spec.n_structures; ++n) {
    const int cell_idx[3] = {n % k, (n / k) % k, n / (k * k)};
    double center[3], radius[3];
    for (int a = 0; a < 3; ++a) {
      center[a] = cell_idx[a] * cell + (cell - 1.0) / 2.0 + rng.normal(0.0, 0.25);
      radius[a] = std::min(0.38 * cell * aspect[(a + n) % 3] * size_factor, 0.48 * cell);
    }
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::floor(center[a] - radius[a])));
      hi[a] = std::min(static_cast<int>(G) - 1, static_cast<int>(std::ceil(center[a] + radius[a])));
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const double dx = (x - center[0]) / radius[0], dy = (y - center[1]) / radius[1], dz = (z - center[2]) / radius[2];
          if (dx * dx + dy * dy + dz * dz <= 1.0)
            labels[(static_cast<std::size_t>(z) * G + static_cast<std::size_t>(y)) * G + static_cast<std::size_t>(x)] = n + 1;
        }
    const auto cx = static_cast<std::size_t>(std::clamp(std::lround(center[0]), 0L, static_cast<long>(G) - 1));
    const auto cy = static_cast<std::size_t>(std::clamp(std::lround(center[1]), 0L, static_cast<long>(G) - 1));
    const auto cz = static_cast<std::size_t>(std::clamp(std::lround(center[2]), 0L, static_cast<long>(G) - 1));
    labels[(cz * G + cy) * G + cx] = n + 1;
  }
  std::vector<double> data(labels.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int l = labels[i];
    data[i] = l == 0 ? 40.0 + rng.normal(0.0, 3.0) : 100.0 + 15.0 * (l - 1) + rng.normal(0.0, 6.0 * effect.noise);
  }
  const Dims dims{G, G, G};
  return {Volume3D(dims, {1.0, 1.0, 1.0}, std::move(data)), LabelMask(dims, std::move(labels))};
}

SynthResult generate_treated_pair(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  for (int v : kVisitMonths)
    if (std::find(spec.visits.begin(), spec.visits.end(), v) == spec.visits.end())
      throw Error(Errc::InvalidSpec, "treated pair needs visits 0, 3 and 12");
  if (spec.treatment.n_treated < 1 || spec.treatment.n_control < 1)
    throw Error(Errc::InvalidSpec, "treated pair needs n_treated >= 1 and n_control >= 1");

  Emitter em(spec, out_dir);
  const auto mci = spec.class_effect.at(Diagnosis::MCI), ctl = spec.class_effect.at(Diagnosis::CTL);
  const auto mci_tab = spec.tabular_effect.at(Diagnosis::MCI), ctl_tab = spec.tabular_effect.at(Diagnosis::CTL);
  const std::uint64_t base = derive_seed(spec.seed, 0xA11);

  std::vector<ArmPatient> patients;
  csv::Document arms{{"patient_id", "arm", "responder"}, {}, {}};
  csv::Document oracle{{"patient_id", "arm", "visit_month", "probability"}, {}, {}};
  const int total = spec.treatment.n_treated + spec.treatment.n_control;
  for (int n = 0; n < total; ++n) {
    const bool treated = n < spec.treatment.n_treated;
    ArmPatient p;
    p.arm = treated ? "treated" : "control";
    p.patient_id = treated ? padded_id("TRT", static_cast<std::size_t>(n + 1))
                           : padded_id("CON", static_cast<std::size_t>(n - spec.treatment.n_treated + 1));
    const std::uint64_t seed = derive_seed(base, static_cast<std::uint64_t>(n));
    SplitMix64 arm_rng(derive_seed(seed, 7));
    p.responder = treated && arm_rng.bernoulli(spec.treatment.responder_fraction);
    auto t_at = [&](int month) { return treatment_progress(spec.treatment, p.responder, month); };
    em.patient(p.patient_id, Diagnosis::MCI, seed, [&](int m) { return lerp(mci, ctl, t_at(m)); },
               [&](int m) { return lerp(mci_tab, ctl_tab, t_at(m)); });
    arms.rows.push_back({p.patient_id, p.arm, p.responder ? "1" : "0"});
    for (int month : spec.visits) {
      p.oracle_probability[month] = oracle_probability(t_at(month));
      oracle.rows.push_back({p.patient_id, p.arm, std::to_string(month), csv::format_double(p.oracle_probability[month])});
    }
    patients.push_back(std::move(p));
  }
  em.finish_tables();
  csv::write(out_dir / "arms.csv", arms);
  em.files.push_back("arms.csv");
  csv::write(out_dir / "oracle_trajectories.csv", oracle);
  em.files.push_back("oracle_trajectories.csv");

  json people = json::array();
  for (const auto& p : patients) {
    json probs = json::object(), dec = json::object();
    for (const auto& [m, v] : p.oracle_probability) probs[std::to_string(m)] = v;
    for (const auto& [m, v] : p.oracle_probability)
      if (m > 0) dec[std::to_string(m)] = p.oracle_probability.at(0) > v;
    people.push_back({{"patient_id", p.patient_id}, {"arm", p.arm}, {"responder", p.responder},
                      {"oracle_probability", probs}, {"decreasing", dec}});
  }
  SynthResult result;
  result.manifest = {{"format", "mindsets-synth-manifest"},
                     {"version", 1},
                     {"kind", "treated_pair"},
                     {"generator", "splitmix64"},
                     {"spec", spec},
                     {"spec_digest", config_digest(json(spec))},
                     {"target_class", "MCI"},
                     {"oracle", "probability = round((0.95 - 0.9 t) * 1024) / 1024, t = clamp(drift * month / 12, 0, 1) for responders, 0 otherwise"},
                     {"patients", people},
                     {"files", em.file_list()}};
  write_json_file(out_dir / "manifest.json", result.manifest);
  result.files = em.files;
  result.files.push_back("manifest.json");
  std::sort(result.files.begin(), result.files.end());
  return result;
}

SynthResult generate_cohort(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  Emitter em(spec, out_dir);
  json people = json::array();
  std::size_t index = 0;
  for (auto dx : kAllDiagnoses) {
    const auto effect = spec.class_effect.at(dx);
    const auto tab = spec.tabular_effect.at(dx);
    for (int n = 0; n < spec.n_patients.at(dx); ++n) {
      ++index;
      const std::string id = padded_id("P", index);
      const std::uint64_t seed = derive_seed(spec.seed, index);
      const double jitter = em.patient(id, dx, seed, [&](int) { return effect; }, [&](int) { return tab; });
      people.push_back({{"patient_id", id}, {"diagnosis", std::string(to_string(dx))}, {"size_factor", effect.size * jitter},
                        {"noise", effect.noise}});
    }
  }
  em.finish_tables();

  SynthResult result;
  json files = em.file_list();
  json treated = nullptr;
  if (spec.treatment.n_treated > 0 && spec.treatment.n_control > 0) {
    const auto pair = generate_treated_pair(spec, out_dir / "treated_pair");
    for (const auto& f : pair.files) {
      files.push_back({{"path", "treated_pair/" + f}, {"digest", file_digest((out_dir / "treated_pair" / f).string())}});
      em.files.push_back("treated_pair/" + f);
    }
    treated = pair.manifest;
    treated.erase("files");
    treated.erase("spec");
  }
  result.manifest = {{"format", "mindsets-synth-manifest"},
                     {"version", 1},
                     {"kind", "cohort"},
                     {"generator", "splitmix64"},
                     {"spec", spec},
                     {"spec_digest", config_digest(json(spec))},
                     {"grid", {{"size", spec.grid_size}, {"n_structures", spec.n_structures}, {"base_radius_fraction", 0.38},
                               {"background_mean", 40.0}, {"background_sd", 3.0}, {"structure_mean", "100 + 15 * (label - 1)"},
                               {"structure_sd", "6 * noise"}}},
                     {"patients", people},
                     {"treated_pair", treated},
                     {"files", files}};
  write_json_file(out_dir / "manifest.json", result.manifest);
  result.files = em.files;
  result.files.push_back("manifest.json");
  std::sort(result.files.begin(), result.files.end());
  return result;
}

}  // namespace mindsets
