#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mindsets/matrix.hpp"

namespace mindsets {

struct DfgConfig {
  int n_filters = 14;
  int kernel_h = 7;
  int kernel_w = 7;
  int pool_width = 2;
  std::vector<int> hidden_sizes = {64};
  int max_epochs = 500;
  int patience = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  int n_classes = 2;
  bool dfg_enabled = true;

  /// Throws InvalidSpec.
  void validate() const;
};

void to_json(nlohmann::json& j, const DfgConfig& c);
void from_json(const nlohmann::json& j, DfgConfig& c);

/// Same configuration with the generator branch removed (classifier sees raw features only).
DfgConfig ablate_dfg(DfgConfig config);

/// ceil(sqrt(d))
std::size_t grid_side(std::size_t d);

/// Row-major S x S grid, zero padded.
std::vector<double> reshape_to_grid(std::span<const double> x);

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> generated;
  std::vector<double> probabilities;
};

/// -log(max(p[cls], 1e-12))
double cross_entropy(std::span<const double> probabilities, int cls);

class DfgModel {
 public:
  DfgModel() = default;
  /// All parameters zero.
  DfgModel(DfgConfig config, std::size_t input_dim);

  /// He-uniform weights, zero biases.
  void initialize(std::uint64_t seed);

  const DfgConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t grid_side() const noexcept { return side_; }
  std::size_t pooled_side() const noexcept { return pooled_; }
  /// 0 when the generator is disabled.
  std::size_t generated_dim() const noexcept;
  std::size_t classifier_input_dim() const noexcept { return input_dim_ + generated_dim(); }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  const ParamBlock& block(std::string_view name) const;

  /// Throws DimMismatch.
  ForwardResult forward(std::span<const double> x) const;
  Matrix predict_proba(const Matrix& x) const;

  /// Mean cross-entropy over `rows` of x; writes the gradient of that mean into grad.
  double loss_and_gradient(const Matrix& x, std::span<const int> labels, std::span<const std::size_t> rows,
                           std::span<double> grad) const;
  double mean_loss(const Matrix& x, std::span<const int> labels, std::span<const std::size_t> rows) const;

 private:
  struct Workspace;
  double sample_pass(std::span<const double> x, int label, Workspace& ws, std::span<double> grad) const;

  DfgConfig config_;
  std::size_t input_dim_ = 0;
  std::size_t side_ = 0;
  std::size_t pooled_ = 0;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
};

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int stopped_epoch = 0;
  int best_epoch = 0;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
};

void to_json(nlohmann::json& j, const TrainLog& log);

/// Patience counter over a loss sequence; improvement means strictly lower.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Returns true when training should stop after this epoch.
  bool update(int epoch, double loss);
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  bool improved() const noexcept { return improved_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  bool improved_ = false;
};

struct TrainResult {
  DfgModel model;
  TrainLog log;
};

/// Labels are class indices in [0, n_classes). Groups are patient ids used for
/// the internal validation split. Throws SingleClassTrainSet, LengthMismatch.
TrainResult train(const Matrix& x, std::span<const int> labels, std::span<const std::string> groups,
                  const DfgConfig& config);

nlohmann::json model_to_json(const DfgModel& model);
/// Throws VersionMismatch, InvalidArgument.
DfgModel model_from_json(const nlohmann::json& j);

}  // namespace mindsets
