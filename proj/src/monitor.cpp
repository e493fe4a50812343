#include "mindsets/monitor.hpp"

#include <algorithm>
#include <cmath>

#include "mindsets/error.hpp"

namespace mindsets {

using nlohmann::json;

const TrajectoryPoint* Trajectory::at(int month) const noexcept {
  for (const auto& p : points)
    if (p.visit_month == month) return &p;
  return nullptr;
}

Trajectory trajectory_from_points(const std::string& patient_id, std::vector<TrajectoryPoint> points, int target_class) {
  if (points.empty()) throw Error(Errc::NoVisits, "patient " + patient_id + " has no visits");
  std::stable_sort(points.begin(), points.end(),
                   [](const TrajectoryPoint& a, const TrajectoryPoint& b) { return a.visit_month < b.visit_month; });
  for (std::size_t n = 0; n < points.size(); ++n) {
    if (n > 0 && points[n].visit_month == points[n - 1].visit_month)
      throw Error(Errc::InvalidArgument, "patient " + patient_id + " has two rows for month " +
                                             std::to_string(points[n].visit_month));
    const auto& p = points[n].probabilities;
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= p.size())
      throw Error(Errc::InvalidArgument, "target class out of range");
    double total = 0.0;
    for (double v : p) total += v;
    if (std::fabs(total - 1.0) > 1e-9)
      throw Error(Errc::InvalidArgument, "probabilities of " + patient_id + " do not sum to 1");
  }
  return {patient_id, std::move(points), target_class};
}

Trajectory trajectory(const ProbabilityFn& model, const std::string& patient_id, std::span<const int> visit_months,
                      const Matrix& rows, int target_class) {
  if (visit_months.empty() || rows.rows() == 0) throw Error(Errc::NoVisits, "patient " + patient_id + " has no visits");
  if (visit_months.size() != rows.rows()) throw Error(Errc::LengthMismatch, "one month per row is required");
  const auto probs = model(rows);
  if (probs.rows() != rows.rows()) throw Error(Errc::DimMismatch, "model returned the wrong number of rows");
  std::vector<TrajectoryPoint> points;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto p = probs.row(r);
    points.push_back({visit_months[r], {p.begin(), p.end()}});
  }
  return trajectory_from_points(patient_id, std::move(points), target_class);
}

double decrease(const Trajectory& t, int horizon) {
  const auto* p0 = t.at(0);
  const auto* ph = t.at(horizon);
  if (!p0 || !ph)
    throw Error(Errc::MissingTimepoint, "patient " + t.patient_id + " lacks month " + std::to_string(p0 ? horizon : 0));
  const auto k = static_cast<std::size_t>(t.target_class);
  return p0->probabilities[k] - ph->probabilities[k];
}

namespace {

ArmSummary summarize(std::span<const Trajectory> arm, int target_class, int horizon, DecreaseMean mode) {
  std::vector<double> drops;
  ArmSummary s;
  s.n = arm.size();
  for (const auto& t : arm) {
    if (t.target_class != target_class)
      throw Error(Errc::InvalidArgument, "trajectory of " + t.patient_id + " tracks a different class");
    drops.push_back(decrease(t, horizon));
  }
  // Sorted summation keeps the result independent of list order.
  std::sort(drops.begin(), drops.end());
  double sum = 0.0;
  for (double d : drops) {
    if (d > 0.0) {
      ++s.n_decreased;
      sum += d;
    } else if (mode == DecreaseMean::AllPatients) {
      sum += d;
    }
  }
  const std::size_t denom = mode == DecreaseMean::Decreasers ? s.n_decreased : s.n;
  s.mean_decrease_pct = denom == 0 ? 0.0 : 100.0 * (sum / static_cast<double>(denom));
  return s;
}

}  // namespace

CohortTreatmentReport cohort_report(std::span<const Trajectory> treated, std::span<const Trajectory> control,
                                    int target_class, int horizon, DecreaseMean mode) {
  CohortTreatmentReport r;
  r.horizon_months = horizon;
  r.target_class = target_class;
  r.mode = mode;
  r.treated = summarize(treated, target_class, horizon, mode);
  r.control = summarize(control, target_class, horizon, mode);
  return r;
}

void to_json(json& j, const CohortTreatmentReport& r) {
  auto arm = [](const ArmSummary& s) {
    return json{{"n", s.n}, {"n_decreased", s.n_decreased}, {"mean_decrease_pct", s.mean_decrease_pct}};
  };
  j = json{{"horizon_months", r.horizon_months},
           {"target_class", r.target_class},
           {"mean_over", r.mode == DecreaseMean::Decreasers ? "decreasers" : "all_patients"},
           {"treated", arm(r.treated)},
           {"control", arm(r.control)}};
}

}  // namespace mindsets
