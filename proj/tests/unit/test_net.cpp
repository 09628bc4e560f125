#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "../common/oracles.hpp"
#include "traffic/model_io.hpp"
#include "traffic/net.hpp"

using namespace traffic;

namespace {

std::vector<std::vector<double>> random_states(int n, int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> states;
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(static_cast<size_t>(dim));
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    states.push_back(std::move(s));
  }
  return states;
}

MaskedBatch make_batch(const std::vector<std::vector<double>>& states, uint64_t seed) {
  Rng rng(seed);
  MaskedBatch b;
  for (const auto& s : states) {
    b.states.push_back(s.data());
    b.actions.push_back(static_cast<int>(rng.uniform_int(0, 4)));
    b.targets.push_back(rng.uniform(-1.0, 2.0));
  }
  return b;
}

}  // namespace

TEST_CASE("zero network outputs zero q-values") {
  const QNetwork net = QNetwork::zeros(NetSpec{4, 1, 3, 5});
  const auto q = net.forward(std::vector<double>{1.0, -2.0, 3.0, 4.0});
  REQUIRE(q.size() == 5);
  for (double v : q) CHECK(v == 0.0);
}

TEST_CASE("identity output layer passes the first five inputs through") {
  QNetwork net = QNetwork::zeros(NetSpec{5, 0, 0, 5});
  auto& layer = net.layers_mut()[0];
  for (int j = 0; j < 5; ++j) layer.w[static_cast<size_t>(j * 5 + j)] = 1.0;
  const std::vector<double> x{0.5, -1.5, 2.0, 0.0, 7.0};
  CHECK(net.forward(x) == x);
}

TEST_CASE("forward agrees with a naive reimplementation") {
  const QNetwork net(NetSpec{7, 2, 9, 5}, 99);
  for (const auto& x : random_states(20, 7, 123)) {
    const auto got = net.forward(x);
    const auto want = oracles::naive_forward(net, x);
    for (size_t i = 0; i < got.size(); ++i) {
      const double scale = std::max(1.0, std::fabs(want[i]));
      REQUIRE(std::fabs(got[i] - want[i]) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("forward rejects wrong input dimensions") {
  const QNetwork net(NetSpec{7, 1, 4, 5}, 1);
  CHECK_THROWS_AS(net.forward(std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
  const QNetwork net(NetSpec{6, 2, 8, 5}, 4242);
  const auto states = random_states(4, 6, 77);
  const auto batch = make_batch(states, 78);
  REQUIRE(oracles::min_kink_margin(net, batch) > 1e-3);  // keep clear of relu kinks
  const auto check = oracles::finite_difference_check(net, batch);
  INFO("checked " << check.params << " parameters");
  CHECK(check.max_rel_err <= 1e-4);
}

TEST_CASE("zero learning rate reports the loss but leaves weights alone") {
  QNetwork net(NetSpec{4, 1, 6, 5}, 5);
  const QNetwork before = net;
  const auto states = random_states(3, 4, 6);
  Workspace ws = net.make_workspace();
  GradBuffers g = net.make_grad_buffers();
  const double loss = net.train_masked(make_batch(states, 7), SgdHyper{0.0, 0.9, 0.01}, ws, g);
  CHECK(loss > 0.0);
  CHECK(net.same_weights(before));
}

TEST_CASE("perfect predictions leave only the decay update") {
  QNetwork net(NetSpec{3, 1, 4, 5}, 8);
  const auto states = random_states(2, 3, 9);
  MaskedBatch batch;
  Workspace ws = net.make_workspace();
  for (const auto& s : states) {
    batch.states.push_back(s.data());
    batch.actions.push_back(2);
    batch.targets.push_back(net.forward(s)[2]);  // q already equals the target
  }
  const QNetwork before = net;
  GradBuffers g = net.make_grad_buffers();
  const double lr = 0.5, l2 = 0.01;
  const double loss = net.train_masked(batch, SgdHyper{lr, 0.0, l2}, ws, g);
  CHECK(loss == 0.0);
  for (size_t l = 0; l < net.layers().size(); ++l) {
    for (size_t i = 0; i < net.layers()[l].w.size(); ++i) {
      const double want = before.layers()[l].w[i] * (1.0 - lr * l2);
      REQUIRE(net.layers()[l].w[i] == Catch::Approx(want).margin(1e-15));
    }
    CHECK(net.layers()[l].b == before.layers()[l].b);  // no decay on biases
  }
}

TEST_CASE("non-finite loss raises a divergence error") {
  QNetwork net(NetSpec{3, 0, 0, 5}, 1);
  net.layers_mut()[0].w[0] = std::numeric_limits<double>::infinity();
  const std::vector<double> s{1.0, 0.0, 0.0};
  MaskedBatch batch;
  batch.states.push_back(s.data());
  batch.actions.push_back(0);
  batch.targets.push_back(0.0);
  Workspace ws = net.make_workspace();
  GradBuffers g = net.make_grad_buffers();
  CHECK_THROWS_AS(net.train_masked(batch, SgdHyper{0.1, 0.0, 0.0}, ws, g), DivergenceError);
  CHECK_FALSE(net.finite());
}

TEST_CASE("model serialization round-trips byte-exactly") {
  const QNetwork net(NetSpec{11, 3, 6, 5}, 31337);
  const std::string bytes = serialize_model(net, 42);
  const LoadedModel loaded = deserialize_model(bytes, "mem");
  CHECK(loaded.training_seed == 42);
  CHECK(loaded.net.same_weights(net));
  CHECK(serialize_model(loaded.net, loaded.training_seed) == bytes);

  // q-values of the reloaded model are bit-identical
  for (const auto& x : random_states(5, 11, 1)) REQUIRE(loaded.net.forward(x) == net.forward(x));
}

TEST_CASE("corrupt or mismatched model files are rejected") {
  const QNetwork net(NetSpec{4, 1, 3, 5}, 2);
  std::string bytes = serialize_model(net, 7);

  SECTION("truncated") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserialize_model(bytes, "mem"), ModelFormatError);
  }
  SECTION("trailing bytes") {
    bytes.push_back('\0');
    CHECK_THROWS_AS(deserialize_model(bytes, "mem"), ModelFormatError);
  }
  SECTION("wrong magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(deserialize_model(bytes, "mem"), ModelFormatError);
  }
  SECTION("future version") {
    bytes[4] = 2;  // little-endian version field
    try {
      deserialize_model(bytes, "mem");
      FAIL("expected ModelFormatError");
    } catch (const ModelFormatError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
}
