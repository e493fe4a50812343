#include "mindsets/dfg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "mindsets/digest.hpp"
#include "mindsets/error.hpp"
#include "mindsets/rng.hpp"

namespace mindsets {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "mindsets-dfg-model";
constexpr int kModelVersion = 1;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

void DfgConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidSpec, "invalid DFG config: " + what); };
  if (n_filters < 1) fail("n_filters must be >= 1");
  if (kernel_h < 1 || kernel_w < 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0) fail("kernel dims must be odd and positive");
  if (pool_width < 1) fail("pool_width must be >= 1");
  for (int h : hidden_sizes)
    if (h < 1) fail("hidden sizes must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) fail("validation_fraction must be in [0, 1)");
  if (n_classes < 2) fail("n_classes must be >= 2");
}

void to_json(json& j, const DfgConfig& c) {
  j = json{{"n_filters", c.n_filters},
           {"kernel", {c.kernel_h, c.kernel_w}},
           {"pool_width", c.pool_width},
           {"hidden_sizes", c.hidden_sizes},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"validation_fraction", c.validation_fraction},
           {"seed", c.seed},
           {"n_classes", c.n_classes},
           {"dfg_enabled", c.dfg_enabled}};
}

void from_json(const json& j, DfgConfig& c) {
  DfgConfig d;
  d.n_filters = j.value("n_filters", d.n_filters);
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    if (!k.is_array() || k.size() != 2) throw Error(Errc::InvalidSpec, "kernel must be a two-element array");
    d.kernel_h = k[0].get<int>();
    d.kernel_w = k[1].get<int>();
  }
  d.pool_width = j.value("pool_width", d.pool_width);
  d.hidden_sizes = j.value("hidden_sizes", d.hidden_sizes);
  d.max_epochs = j.value("max_epochs", d.max_epochs);
  d.patience = j.value("patience", d.patience);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.learning_rate = j.value("learning_rate", d.learning_rate);
  d.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  d.seed = j.value("seed", d.seed);
  d.n_classes = j.value("n_classes", d.n_classes);
  d.dfg_enabled = j.value("dfg_enabled", d.dfg_enabled);
  c = d;
}

DfgConfig ablate_dfg(DfgConfig config) {
  config.dfg_enabled = false;
  return config;
}

std::size_t grid_side(std::size_t d) {
  if (d == 0) return 0;
  auto s = static_cast<std::size_t>(std::sqrt(static_cast<double>(d)));
  while (s * s < d) ++s;
  while (s > 1 && (s - 1) * (s - 1) >= d) --s;
  return s;
}

std::vector<double> reshape_to_grid(std::span<const double> x) {
  if (x.empty()) throw Error(Errc::InvalidArgument, "cannot reshape an empty vector");
  const auto s = grid_side(x.size());
  std::vector<double> grid(s * s, 0.0);
  std::copy(x.begin(), x.end(), grid.begin());
  return grid;
}

double cross_entropy(std::span<const double> probabilities, int cls) {
  if (cls < 0 || static_cast<std::size_t>(cls) >= probabilities.size())
    throw Error(Errc::InvalidArgument, "class index out of range");
  return -std::log(std::max(probabilities[static_cast<std::size_t>(cls)], 1e-12));
}

// ---------------------------------------------------------------------------

struct DfgModel::Workspace {
  std::vector<double> grid;
  std::vector<double> conv;  // pre-activation, F x S x S
  std::vector<std::size_t> argmax;  // F x P x P, flat conv index
  std::vector<std::vector<double>> act;  // act[0] classifier input; act[l] hidden outputs; back() logits
  std::vector<double> probs;
  std::vector<double> delta, delta_prev;
};

DfgModel::DfgModel(DfgConfig config, std::size_t input_dim) : config_(std::move(config)), input_dim_(input_dim) {
  config_.validate();
  if (input_dim_ == 0) throw Error(Errc::InvalidArgument, "input_dim must be >= 1");
  side_ = mindsets::grid_side(input_dim_);
  pooled_ = ceil_div(side_, static_cast<std::size_t>(config_.pool_width));
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t size) {
    blocks_.push_back({std::move(name), offset, size});
    offset += size;
  };
  const auto f = static_cast<std::size_t>(config_.n_filters);
  add("conv_weight", f * static_cast<std::size_t>(config_.kernel_h * config_.kernel_w));
  add("conv_bias", f);
  std::size_t in = classifier_input_dim();
  for (std::size_t l = 0; l < config_.hidden_sizes.size(); ++l) {
    const auto out = static_cast<std::size_t>(config_.hidden_sizes[l]);
    add("dense" + std::to_string(l) + "_weight", out * in);
    add("dense" + std::to_string(l) + "_bias", out);
    in = out;
  }
  add("output_weight", static_cast<std::size_t>(config_.n_classes) * in);
  add("output_bias", static_cast<std::size_t>(config_.n_classes));
  params_.assign(offset, 0.0);
}

std::size_t DfgModel::generated_dim() const noexcept {
  return config_.dfg_enabled ? static_cast<std::size_t>(config_.n_filters) * pooled_ * pooled_ : 0;
}

const ParamBlock& DfgModel::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw Error(Errc::InvalidArgument, "no parameter block " + std::string(name));
}

void DfgModel::initialize(std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::fill(params_.begin(), params_.end(), 0.0);
  const auto& cw = blocks_[0];
  const double conv_limit = std::sqrt(6.0 / static_cast<double>(config_.kernel_h * config_.kernel_w));
  for (std::size_t n = 0; n < cw.size; ++n) params_[cw.offset + n] = rng.uniform(-conv_limit, conv_limit);
  std::size_t in = classifier_input_dim();
  for (std::size_t b = 2; b < blocks_.size(); b += 2) {
    const auto& w = blocks_[b];
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (std::size_t n = 0; n < w.size; ++n) params_[w.offset + n] = rng.uniform(-limit, limit);
    in = blocks_[b + 1].size;
  }
}

double DfgModel::sample_pass(std::span<const double> x, int label, Workspace& ws, std::span<double> grad) const {
  const std::size_t S = side_, P = pooled_;
  const std::size_t D = input_dim_, G = generated_dim();
  const int kh = config_.kernel_h, kw = config_.kernel_w;
  const int ph = kh / 2, pw = kw / 2;
  const auto F = static_cast<std::size_t>(config_.n_filters);
  const auto pool = static_cast<std::size_t>(config_.pool_width);
  const double* cw = params_.data() + blocks_[0].offset;
  const double* cb = params_.data() + blocks_[1].offset;
  const std::size_t n_layers = config_.hidden_sizes.size() + 1;

  ws.act.resize(n_layers + 1);
  auto& input = ws.act[0];
  input.assign(D + G, 0.0);
  std::copy(x.begin(), x.end(), input.begin());

  if (G > 0) {
    ws.grid.assign(S * S, 0.0);
    std::copy(x.begin(), x.end(), ws.grid.begin());
    ws.conv.assign(F * S * S, 0.0);
    ws.argmax.assign(F * P * P, 0);
    const auto Si = static_cast<int>(S);
    for (std::size_t f = 0; f < F; ++f) {
      const double* w = cw + f * static_cast<std::size_t>(kh * kw);
      for (int r = 0; r < Si; ++r)
        for (int c = 0; c < Si; ++c) {
          double s = cb[f];
          for (int u = 0; u < kh; ++u) {
            const int gr = r + u - ph;
            if (gr < 0 || gr >= Si) continue;
            for (int v = 0; v < kw; ++v) {
              const int gc = c + v - pw;
              if (gc < 0 || gc >= Si) continue;
              s += w[u * kw + v] * ws.grid[static_cast<std::size_t>(gr * Si + gc)];
            }
          }
          ws.conv[f * S * S + static_cast<std::size_t>(r * Si + c)] = s;
        }
      for (std::size_t pr = 0; pr < P; ++pr)
        for (std::size_t pc = 0; pc < P; ++pc) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = 0;
          for (std::size_t r = pr * pool; r < std::min(S, pr * pool + pool); ++r)
            for (std::size_t c = pc * pool; c < std::min(S, pc * pool + pool); ++c) {
              const std::size_t idx = f * S * S + r * S + c;
              const double v = std::max(ws.conv[idx], 0.0);
              if (v > best) {
                best = v;
                arg = idx;
              }
            }
          ws.argmax[f * P * P + pr * P + pc] = arg;
          input[D + f * P * P + pr * P + pc] = best;
        }
    }
  }

  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& wb = blocks_[2 + 2 * l];
    const auto& bb = blocks_[3 + 2 * l];
    const auto& a = ws.act[l];
    const std::size_t in = a.size(), out = bb.size;
    auto& z = ws.act[l + 1];
    z.assign(out, 0.0);
    const double* W = params_.data() + wb.offset;
    const double* B = params_.data() + bb.offset;
    for (std::size_t o = 0; o < out; ++o) {
      double s = B[o];
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = (l + 1 < n_layers) ? std::max(s, 0.0) : s;
    }
  }

  const auto& logits = ws.act.back();
  const auto C = logits.size();
  ws.probs.assign(C, 0.0);
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < C; ++k) total += (ws.probs[k] = std::exp(logits[k] - m));
  for (auto& p : ws.probs) p /= total;
  if (label < 0) return 0.0;
  const double loss = cross_entropy(ws.probs, label);
  if (grad.empty()) return loss;

  // Backward. delta holds dL/dz for the current layer.
  ws.delta = ws.probs;
  ws.delta[static_cast<std::size_t>(label)] -= 1.0;
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& wb = blocks_[2 + 2 * l];
    const auto& bb = blocks_[3 + 2 * l];
    const auto& a = ws.act[l];
    const std::size_t in = a.size(), out = bb.size;
    const double* W = params_.data() + wb.offset;
    double* gW = grad.data() + wb.offset;
    double* gB = grad.data() + bb.offset;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = ws.delta[o];
      gB[o] += d;
      if (d == 0.0) continue;
      double* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
    }
    const bool need_prev = l > 0 || G > 0;
    if (!need_prev) break;
    const std::size_t first = l > 0 ? 0 : D;  // only the generated part of the raw input needs a delta
    ws.delta_prev.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = ws.delta[o];
      if (d == 0.0) continue;
      const double* row = W + o * in;
      for (std::size_t i = first; i < in; ++i) ws.delta_prev[i] += d * row[i];
    }
    if (l > 0)
      for (std::size_t i = 0; i < in; ++i)
        if (!(a[i] > 0.0)) ws.delta_prev[i] = 0.0;
    std::swap(ws.delta, ws.delta_prev);
  }

  if (G > 0) {
    double* gw = grad.data() + blocks_[0].offset;
    double* gb = grad.data() + blocks_[1].offset;
    const auto Si = static_cast<int>(S);
    for (std::size_t g = 0; g < G; ++g) {
      const double d = ws.delta[D + g];
      if (d == 0.0) continue;
      const std::size_t idx = ws.argmax[g];
      if (!(ws.conv[idx] > 0.0)) continue;
      const std::size_t f = idx / (S * S);
      const int r = static_cast<int>((idx % (S * S)) / S), c = static_cast<int>(idx % S);
      gb[f] += d;
      double* w = gw + f * static_cast<std::size_t>(kh * kw);
      for (int u = 0; u < kh; ++u) {
        const int gr = r + u - ph;
        if (gr < 0 || gr >= Si) continue;
        for (int v = 0; v < kw; ++v) {
          const int gc = c + v - pw;
          if (gc < 0 || gc >= Si) continue;
          w[u * kw + v] += d * ws.grid[static_cast<std::size_t>(gr * Si + gc)];
        }
      }
    }
  }
  return loss;
}

ForwardResult DfgModel::forward(std::span<const double> x) const {
  if (x.size() != input_dim_)
    throw Error(Errc::DimMismatch, "input has " + std::to_string(x.size()) + " features, model expects " +
                                       std::to_string(input_dim_));
  Workspace ws;
  sample_pass(x, -1, ws, {});
  ForwardResult out;
  out.logits = ws.act.back();
  out.generated.assign(ws.act[0].begin() + static_cast<std::ptrdiff_t>(input_dim_), ws.act[0].end());
  out.probabilities = ws.probs;
  return out;
}

Matrix DfgModel::predict_proba(const Matrix& x) const {
  if (x.cols() != input_dim_)
    throw Error(Errc::DimMismatch, "matrix has " + std::to_string(x.cols()) + " columns, model expects " +
                                       std::to_string(input_dim_));
  Matrix out(x.rows(), static_cast<std::size_t>(config_.n_classes));
  Workspace ws;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    sample_pass(x.row(r), -1, ws, {});
    std::copy(ws.probs.begin(), ws.probs.end(), out.row(r).begin());
  }
  return out;
}

double DfgModel::loss_and_gradient(const Matrix& x, std::span<const int> labels, std::span<const std::size_t> rows,
                                   std::span<double> grad) const {
  if (grad.size() != params_.size()) throw Error(Errc::DimMismatch, "gradient buffer has the wrong size");
  if (rows.empty()) throw Error(Errc::InvalidArgument, "empty batch");
  if (x.cols() != input_dim_) throw Error(Errc::DimMismatch, "matrix width does not match the model");
  std::fill(grad.begin(), grad.end(), 0.0);
  Workspace ws;
  double total = 0.0;
  for (auto r : rows) total += sample_pass(x.row(r), labels[r], ws, grad);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto& g : grad) g *= inv;
  return total * inv;
}

double DfgModel::mean_loss(const Matrix& x, std::span<const int> labels, std::span<const std::size_t> rows) const {
  if (rows.empty()) throw Error(Errc::InvalidArgument, "empty batch");
  if (x.cols() != input_dim_) throw Error(Errc::DimMismatch, "matrix width does not match the model");
  Workspace ws;
  double total = 0.0;
  for (auto r : rows) total += sample_pass(x.row(r), labels[r], ws, {});
  return total / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw Error(Errc::InvalidArgument, "patience must be >= 1");
}

bool EarlyStopping::update(int epoch, double loss) {
  improved_ = best_epoch_ == 0 || loss < best_loss_;
  if (improved_) {
    best_epoch_ = epoch;
    best_loss_ = loss;
  }
  return epoch - best_epoch_ >= patience_;
}

void to_json(json& j, const TrainLog& log) {
  j = json{{"stopped_epoch", log.stopped_epoch}, {"best_epoch", log.best_epoch}, {"train_rows", log.train_rows},
           {"validation_rows", log.validation_rows}, {"epochs", json::array()}};
  for (const auto& e : log.epochs)
    j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_loss", e.validation_loss}});
}

TrainResult train(const Matrix& x, std::span<const int> labels, std::span<const std::string> groups,
                  const DfgConfig& config) {
  config.validate();
  const std::size_t n = x.rows();
  if (labels.size() != n || groups.size() != n) throw Error(Errc::LengthMismatch, "labels/groups do not match rows");
  std::set<int> classes;
  for (int y : labels) {
    if (y < 0 || y >= config.n_classes) throw Error(Errc::InvalidArgument, "label out of range for n_classes");
    classes.insert(y);
  }
  if (classes.size() < 2) throw Error(Errc::SingleClassTrainSet, "training set holds a single class");

  // Canonical row order so the result does not depend on input row order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (groups[a] != groups[b]) return groups[a] < groups[b];
    const auto ra = x.row(a), rb = x.row(b);
    if (!std::equal(ra.begin(), ra.end(), rb.begin()))
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    return labels[a] < labels[b];
  });

  std::vector<std::string> ids(groups.begin(), groups.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  SplitMix64 split_rng(derive_seed(config.seed, 1));
  shuffle(std::span<std::string>(ids), split_rng);
  std::size_t n_val = 0;
  if (ids.size() >= 2 && config.validation_fraction > 0.0) {
    n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(ids.size()) + 0.5));
    n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
  }
  const std::set<std::string> val_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_rows, val_rows;
  for (auto r : order) (val_ids.contains(groups[r]) ? val_rows : train_rows).push_back(r);
  {
    std::set<int> train_classes;
    for (auto r : train_rows) train_classes.insert(labels[r]);
    if (train_classes.size() < 2) {  // split starved the fitting part; train on everything
      train_rows = order;
      val_rows.clear();
    }
  }

  TrainResult result{DfgModel(config, x.cols()), {}};
  auto& model = result.model;
  model.initialize(derive_seed(config.seed, 2));
  auto params = model.parameters();
  std::vector<double> grad(params.size()), m1(params.size(), 0.0), m2(params.size(), 0.0);
  std::vector<double> best(params.begin(), params.end());
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  EarlyStopping stopper(config.patience);
  result.log.train_rows = train_rows.size();
  result.log.validation_rows = val_rows.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<std::size_t> epoch_order = train_rows;
    SplitMix64 rng(derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::size_t>(epoch_order), rng);
    for (std::size_t start = 0; start < epoch_order.size(); start += batch) {
      const std::size_t stop = std::min(epoch_order.size(), start + batch);
      model.loss_and_gradient(x, labels, std::span(epoch_order).subspan(start, stop - start), grad);
      b1t *= beta1;
      b2t *= beta2;
      for (std::size_t p = 0; p < params.size(); ++p) {
        m1[p] = beta1 * m1[p] + (1.0 - beta1) * grad[p];
        m2[p] = beta2 * m2[p] + (1.0 - beta2) * grad[p] * grad[p];
        const double mhat = m1[p] / (1.0 - b1t), vhat = m2[p] / (1.0 - b2t);
        params[p] -= config.learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = model.mean_loss(x, labels, train_rows);
    rec.validation_loss = val_rows.empty() ? rec.train_loss : model.mean_loss(x, labels, val_rows);
    result.log.epochs.push_back(rec);
    const bool stop = stopper.update(epoch, rec.validation_loss);
    if (stopper.improved()) best.assign(params.begin(), params.end());
    result.log.stopped_epoch = epoch;
    if (stop) break;
  }
  result.log.best_epoch = stopper.best_epoch();
  std::copy(best.begin(), best.end(), params.begin());
  return result;
}

json model_to_json(const DfgModel& model) {
  json j{{"format", kModelFormat}, {"version", kModelVersion}, {"config", model.config()},
         {"input_dim", model.input_dim()}};
  j["parameters"] = {{"encoding", "base64-f64le"}, {"count", model.parameters().size()},
                     {"data", encode_f64(model.parameters())}};
  return j;
}

DfgModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw Error(Errc::InvalidArgument, "not a DFG model file");
    const int version = j.at("version").get<int>();
    if (version != kModelVersion)
      throw Error(Errc::VersionMismatch, "model version " + std::to_string(version) + ", expected " +
                                             std::to_string(kModelVersion));
    DfgModel model(j.at("config").get<DfgConfig>(), j.at("input_dim").get<std::size_t>());
    const auto values = decode_f64(j.at("parameters").at("data").get<std::string>());
    if (values.size() != model.parameters().size() || j.at("parameters").at("count").get<std::size_t>() != values.size())
      throw Error(Errc::InvalidArgument, "parameter count does not match the architecture");
    for (double v : values)
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteData, "non-finite model parameter");
    std::copy(values.begin(), values.end(), model.parameters().begin());
    return model;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace mindsets
