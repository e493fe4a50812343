#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "mindsets/dfg.hpp"
#include "mindsets/eval.hpp"
#include "mindsets/rng.hpp"

using namespace mindsets;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

DfgConfig small_config(int classes) {
  DfgConfig c;
  c.n_filters = 3;
  c.hidden_sizes = {6, 5};
  c.n_classes = classes;
  return c;
}

}  // namespace

TEST_SUITE("dfg") {
  TEST_CASE("grid reshape") {
    CHECK(grid_side(100) == 10);
    CHECK(grid_side(90) == 10);
    CHECK(grid_side(1) == 1);
    std::vector<double> x(90);
    std::iota(x.begin(), x.end(), 1.0);
    const auto g = reshape_to_grid(x);
    REQUIRE(g.size() == 100);
    CHECK(g[89] == 90.0);
    for (std::size_t i = 90; i < 100; ++i) CHECK(g[i] == 0.0);
    CHECK(reshape_to_grid(std::vector<double>{4.0}) == std::vector<double>{4.0});
  }

  TEST_CASE("config validation") {
    DfgConfig c;
    c.kernel_h = 6;
    CHECK(testing::error_code([&] { c.validate(); }) == Errc::InvalidSpec);
    c = DfgConfig{};
    c.patience = 0;
    CHECK(testing::error_code([&] { c.validate(); }) == Errc::InvalidSpec);
    c = DfgConfig{};
    c.n_filters = 0;
    CHECK(testing::error_code([&] { c.validate(); }) == Errc::InvalidSpec);
  }

  TEST_CASE("zero parameters give uniform probabilities") {
    for (int k : {2, 4}) {
      DfgConfig c;
      c.n_classes = k;
      const DfgModel m(c, 20);
      const auto out = m.forward(random_matrix(1, 20, 1).row(0));
      for (double l : out.logits) CHECK(l == 0.0);
      for (double p : out.probabilities) CHECK(p == doctest::Approx(1.0 / k).epsilon(1e-15));
    }
  }

  TEST_CASE("shape arithmetic") {
    DfgModel m(DfgConfig{}, 100);
    CHECK(m.grid_side() == 10);
    CHECK(m.pooled_side() == 5);
    CHECK(m.generated_dim() == 350);
    CHECK(m.classifier_input_dim() == 450);
    m.initialize(1);
    CHECK(m.forward(random_matrix(1, 100, 2).row(0)).generated.size() == 350);
    DfgModel odd(DfgConfig{}, 50);
    CHECK(odd.grid_side() == 8);
    CHECK(odd.generated_dim() == 14 * 16);
    DfgModel seven(DfgConfig{}, 49);
    CHECK(seven.pooled_side() == 4);
    const DfgModel ablated(ablate_dfg(DfgConfig{}), 100);
    CHECK(ablated.generated_dim() == 0);
    CHECK(ablated.classifier_input_dim() == 100);
  }

  TEST_CASE("dimension mismatch") {
    const DfgModel m(DfgConfig{}, 10);
    CHECK(testing::error_code([&] { m.forward(std::vector<double>(9, 0.0)); }) == Errc::DimMismatch);
    CHECK(testing::error_code([&] { m.predict_proba(Matrix(2, 11)); }) == Errc::DimMismatch);
  }

  TEST_CASE("softmax normalization") {
    DfgModel m(small_config(4), 30);
    m.initialize(9);
    for (auto& p : m.parameters()) p *= 5.0;
    const auto x = random_matrix(50, 30, 3);
    for (std::size_t r = 0; r < 50; ++r) {
      const auto p = m.forward(x.row(r)).probabilities;
      CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("cross entropy values") {
    CHECK(cross_entropy(std::vector<double>{0.0, 1.0}, 1) == 0.0);
    CHECK(cross_entropy(std::vector<double>(4, 0.25), 2) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(cross_entropy(std::vector<double>{0.5, 0.5}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(cross_entropy(std::vector<double>{1.0, 0.0}, 1) == doctest::Approx(-std::log(1e-12)));
  }

  TEST_CASE("output bias gradient at zero init") {
    const std::size_t d = 12;
    DfgConfig c;
    c.n_classes = 4;
    const DfgModel m(c, d);
    const auto x = random_matrix(8, d, 5);
    const std::vector<int> labels = {0, 1, 2, 3, 0, 0, 1, 2};
    std::vector<std::size_t> rows(8);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> grad(m.parameters().size());
    const double loss = m.loss_and_gradient(x, labels, rows, grad);
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    const auto& b = m.block("output_bias");
    const std::array<double, 4> counts = {3, 2, 2, 1};
    for (std::size_t k = 0; k < 4; ++k) CHECK(grad[b.offset + k] == doctest::Approx(0.25 - counts[k] / 8.0).epsilon(1e-14));
  }

  TEST_CASE("filter cells over padding only have zero gradient") {
    DfgModel m(small_config(2), 1);
    m.initialize(4);
    const auto x = random_matrix(6, 1, 6);
    const std::vector<int> labels = {0, 1, 0, 1, 1, 0};
    std::vector<std::size_t> rows(6);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> grad(m.parameters().size());
    m.loss_and_gradient(x, labels, rows, grad);
    const auto& w = m.block("conv_weight");
    const std::size_t cells = 49;
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t cell = 0; cell < cells; ++cell)
        if (cell != 24) CHECK(grad[w.offset + f * cells + cell] == 0.0);
  }

  TEST_CASE("analytic gradient matches central differences") {
    const std::size_t d = 10;
    DfgModel m(small_config(3), d);
    m.initialize(21);
    const auto x = random_matrix(7, d, 22);
    const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 2};
    std::vector<std::size_t> rows(7);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> grad(m.parameters().size());
    m.loss_and_gradient(x, labels, rows, grad);
    SplitMix64 rng(23);
    const double h = 1e-5;
    for (const auto& block : m.blocks()) {
      for (int s = 0; s < 30; ++s) {
        const std::size_t i = block.offset + rng.below(block.size);
        const double saved = m.parameters()[i];
        m.parameters()[i] = saved + h;
        const double up = m.mean_loss(x, labels, rows);
        m.parameters()[i] = saved - h;
        const double down = m.mean_loss(x, labels, rows);
        m.parameters()[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double err = std::abs(numeric - grad[i]);
        CHECK_MESSAGE((err <= 1e-4 * std::max(std::abs(numeric), std::abs(grad[i])) || err < 1e-9),
                      block.name << "[" << i - block.offset << "] analytic " << grad[i] << " numeric " << numeric);
      }
    }
  }

  TEST_CASE("early stopping on a worsening sequence") {
    EarlyStopping stop(5);
    int stopped = 0;
    for (int epoch = 1; epoch <= 20; ++epoch)
      if (stop.update(epoch, static_cast<double>(epoch))) {
        stopped = epoch;
        break;
      }
    CHECK(stopped == 6);
    CHECK(stop.best_epoch() == 1);
  }

  TEST_CASE("separable blobs are learned") {
    SplitMix64 rng(31);
    const std::size_t n = 80, d = 8;
    Matrix x(n, d);
    std::vector<int> labels(n);
    std::vector<std::string> groups(n);
    for (std::size_t r = 0; r < n; ++r) {
      labels[r] = static_cast<int>(r % 2);
      groups[r] = "g" + std::to_string(r);
      for (std::size_t c = 0; c < d; ++c) x(r, c) = rng.normal(labels[r] ? 2.0 : -2.0, 1.0);
    }
    DfgConfig c;
    c.seed = 3;
    const auto result = train(x, labels, groups, c);
    const auto pred = argmax_rows(result.model.predict_proba(x));
    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r) correct += pred[r] == labels[r];
    CHECK(static_cast<double>(correct) / n >= 0.99);
    CHECK(result.log.stopped_epoch - result.log.best_epoch <= c.patience);
    CHECK(result.log.stopped_epoch <= c.max_epochs);
  }

  TEST_CASE("training is deterministic and rejects single class data") {
    const auto x = random_matrix(30, 6, 41);
    std::vector<int> labels(30);
    std::vector<std::string> groups(30);
    for (std::size_t r = 0; r < 30; ++r) {
      labels[r] = static_cast<int>(r % 2);
      groups[r] = "p" + std::to_string(r / 2);
    }
    DfgConfig c = small_config(2);
    c.max_epochs = 30;
    c.seed = 8;
    const auto a = train(x, labels, groups, c);
    const auto b = train(x, labels, groups, c);
    CHECK(nlohmann::json(a.log).dump() == nlohmann::json(b.log).dump());
    CHECK(std::equal(a.model.parameters().begin(), a.model.parameters().end(), b.model.parameters().begin()));
    const std::vector<int> ones(30, 1);
    CHECK(testing::error_code([&] { train(x, ones, groups, c); }) == Errc::SingleClassTrainSet);
  }

  TEST_CASE("predict proba agrees with forward and is row equivariant") {
    DfgModel m(small_config(2), 9);
    m.initialize(5);
    const auto x = random_matrix(5, 9, 6);
    const auto p = m.predict_proba(x);
    for (std::size_t r = 0; r < 5; ++r) CHECK(vec(p.row(r)) == m.forward(x.row(r)).probabilities);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    const auto q = m.predict_proba(x.select_rows(perm));
    for (std::size_t r = 0; r < 5; ++r) CHECK(vec(q.row(r)) == vec(p.row(perm[r])));
    const std::vector<std::size_t> same = {2, 2, 2};
    const auto s = m.predict_proba(x.select_rows(same));
    CHECK(vec(s.row(0)) == vec(s.row(1)));
    CHECK(vec(s.row(1)) == vec(s.row(2)));
  }

  TEST_CASE("ablated model ignores convolution parameters") {
    DfgModel m(ablate_dfg(small_config(2)), 16);
    m.initialize(2);
    const auto x = random_matrix(1, 16, 3);
    const auto before = m.forward(x.row(0)).probabilities;
    if (const auto it = std::find_if(m.blocks().begin(), m.blocks().end(),
                                     [](const ParamBlock& b) { return b.name == "conv_weight"; });
        it != m.blocks().end())
      for (std::size_t i = 0; i < it->size; ++i) m.parameters()[it->offset + i] += 1.0;
    CHECK(m.forward(x.row(0)).probabilities == before);
  }

  TEST_CASE("model json round trip and version check") {
    DfgModel m(small_config(4), 11);
    m.initialize(77);
    const auto j = model_to_json(m);
    const auto back = model_from_json(j);
    REQUIRE(back.parameters().size() == m.parameters().size());
    CHECK(std::equal(back.parameters().begin(), back.parameters().end(), m.parameters().begin()));
    CHECK(back.input_dim() == 11);
    auto bad = j;
    bad["version"] = 999;
    CHECK(testing::error_code([&] { model_from_json(bad); }) == Errc::VersionMismatch);
  }
}
