#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/explain.hpp"
#include "mindsets/matrix.hpp"

namespace mindsets {

struct TrajectoryPoint {
  int visit_month = 0;
  std::vector<double> probabilities;
};

struct Trajectory {
  std::string patient_id;
  std::vector<TrajectoryPoint> points;  ///< strictly increasing months
  int target_class = 0;

  const TrajectoryPoint* at(int month) const noexcept;
};

/// One probability row per visit; rows need not be sorted. Throws NoVisits,
/// InvalidArgument (repeated month).
Trajectory trajectory(const ProbabilityFn& model, const std::string& patient_id, std::span<const int> visit_months,
                      const Matrix& rows, int target_class);

/// Builds a trajectory from already computed probability vectors.
Trajectory trajectory_from_points(const std::string& patient_id, std::vector<TrajectoryPoint> points, int target_class);

enum class DecreaseMean { Decreasers, AllPatients };

struct ArmSummary {
  std::size_t n = 0;
  std::size_t n_decreased = 0;
  double mean_decrease_pct = 0.0;
};

struct CohortTreatmentReport {
  int horizon_months = 0;
  int target_class = 0;
  DecreaseMean mode = DecreaseMean::Decreasers;
  ArmSummary treated;
  ArmSummary control;
};

void to_json(nlohmann::json& j, const CohortTreatmentReport& r);

/// P0(target) - P_horizon(target); throws MissingTimepoint.
double decrease(const Trajectory& t, int horizon);

/// Decreased iff the decrease is strictly positive. Throws MissingTimepoint.
CohortTreatmentReport cohort_report(std::span<const Trajectory> treated, std::span<const Trajectory> control,
                                    int target_class, int horizon, DecreaseMean mode = DecreaseMean::Decreasers);

}  // namespace mindsets
