#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/tabular.hpp"
#include "mindsets/volume_io.hpp"

namespace mindsets {

struct ClassEffect {
  double size = 1.0;   ///< structure radius multiplier
  double noise = 1.0;  ///< intensity noise multiplier
};

struct TabularEffect {
  double clinical_shift = 0.0;
  double memory_deficit = 0.0;
  double processing_deficit = 0.0;
  double vascular_risk = 0.0;
};

struct TreatmentSpec {
  int n_treated = 0;
  int n_control = 0;
  double drift = 0.5;  ///< fraction of the MCI->CTL gap closed per 12 months by responders
  double responder_fraction = 0.75;
};

struct SynthSpec {
  std::map<Diagnosis, int> n_patients = {
      {Diagnosis::AD, 12}, {Diagnosis::VaD, 12}, {Diagnosis::MCI, 12}, {Diagnosis::CTL, 12}};
  std::vector<int> visits = {0, 3, 12};
  int grid_size = 24;
  int n_structures = 4;
  std::map<Diagnosis, ClassEffect> class_effect;
  std::map<Diagnosis, TabularEffect> tabular_effect;
  TreatmentSpec treatment;
  double size_jitter = 0.05;
  double missing_rate = 0.05;
  std::uint64_t seed = 1;

  /// Throws InvalidSpec.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
/// Missing keys take the strong-separation defaults. Throws InvalidSpec.
void from_json(const nlohmann::json& j, SynthSpec& s);

/// Class effects of the strong-separation preset.
SynthSpec strong_spec();
/// Same counts with every class effect 1 and every tabular effect 0.
SynthSpec null_spec();

/// Schema of the generated cohort CSV.
CohortSchema synth_schema();

struct ArmPatient {
  std::string patient_id;
  std::string arm;  ///< "treated" or "control"
  bool responder = false;
  std::map<int, double> oracle_probability;  ///< month -> MCI probability of a perfect classifier
};

/// Effect fraction t in [0, 1] moving a patient from MCI toward CTL at `month`.
double treatment_progress(const TreatmentSpec& t, bool responder, int month);

/// Oracle MCI probability, quantized to multiples of 1/1024.
double oracle_probability(double progress);

struct SynthResult {
  nlohmann::json manifest;
  std::vector<std::string> files;  ///< relative to the output directory
};

/// Writes volumes/, masks/, cohort.csv, cohort.schema.json, manifest.json and,
/// when treatment counts are positive, treated_pair/.
SynthResult generate_cohort(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Treated and control MCI sub-cohorts under `out_dir`. Requires visits {0,3,12}.
SynthResult generate_treated_pair(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// In-memory volume and mask for one patient visit.
std::pair<Volume3D, LabelMask> synth_volume(const SynthSpec& spec, std::uint64_t patient_seed, int month,
                                            const ClassEffect& effect, double size_factor);

}  // namespace mindsets
