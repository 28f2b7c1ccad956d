#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "hmlab/encoder.hpp"
#include "oracles.hpp"

using namespace hmlab;

namespace {

Tensor fixed_input() {
  return Tensor::matrix({{0.1, 0.2, 0.3, 0.4}, {0.9, 0.1, 0.5, 0.2}});
}

EncoderConfig small_config() { return {4, {8}, 3, 42}; }

}  // namespace

TEST_CASE("embeddings lie on the unit sphere") {
  const EncoderModel model = EncoderModel::initialize({});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor x(Shape{20, 16});
  for (double& v : x.storage()) v = u(rng);
  const Tensor e = model.embed_values(x);
  REQUIRE(e.cols() == 32);
  for (std::size_t r = 0; r < e.rows(); ++r) {
    double s = 0.0;
    for (double v : e.row(r)) s += v * v;
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("identity model passes unit-norm inputs through") {
  const EncoderModel model = EncoderModel::identity(3);
  const Tensor x = Tensor::matrix({{0.6, 0.0, 0.8}, {0.0, 1.0, 0.0}});
  const Tensor e = model.embed_values(x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(e[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("wrong input width is rejected") {
  const EncoderModel model = EncoderModel::initialize(small_config());
  CHECK_THROWS_AS(model.embed_values(Tensor(Shape{2, 5}, 0.5)), ShapeError);
}

TEST_CASE("fixed seed and input give the golden embedding") {
  const EncoderModel model = EncoderModel::initialize(small_config());
  const Tensor e = model.embed_values(fixed_input());
  // Captured from the first verified build; any change to initialization or
  // the forward pass shows up here.
  const std::vector<double> golden = {-0x1.4a6dd373b2814p-1, -0x1.b1f8866b8d92dp-3, -0x1.77c0a96231534p-1,
                                      -0x1.ba3c8643b404cp-1, -0x1.ff8d4348fde96p-4, -0x1.f3edaed1c77eap-2};
  REQUIRE(e.numel() == golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) CHECK(e[i] == golden[i]);
  CHECK(EncoderModel::initialize(small_config()).embed_values(fixed_input()) == e);
}

TEST_CASE("tape forward pass matches the value-only pass") {
  const EncoderModel model = EncoderModel::initialize(small_config());
  grad::Tape tape;
  const grad::Node out = embed(tape, model.bind(tape, true), tape.constant(fixed_input()));
  CHECK(tape.value(out) == model.embed_values(fixed_input()));
}

TEST_CASE("parameter gradients match finite differences") {
  EncoderModel model = EncoderModel::initialize(small_config());
  const Tensor x = fixed_input();
  const Tensor target = Tensor::matrix({{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}});
  auto loss_of = [&](const EncoderModel& m, grad::Tape& tape, BoundEncoder& bound) {
    bound = m.bind(tape, true);
    const grad::Node e = embed(tape, bound, tape.constant(x));
    return grad::sum(tape, grad::square(tape, grad::sub(tape, e, tape.constant(target))));
  };
  grad::Tape tape;
  BoundEncoder bound;
  tape.backward(loss_of(model, tape, bound));
  const std::vector<Tensor> grads = parameter_grads(tape, bound);
  const double h = 1e-6;
  auto params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->numel(); ++i) {
      const double keep = (*params[p])[i];
      auto value = [&](double v) {
        (*params[p])[i] = v;
        grad::Tape t;
        BoundEncoder b;
        return t.value(loss_of(model, t, b)).item();
      };
      const double fd = (value(keep + h) - value(keep - h)) / (2 * h);
      (*params[p])[i] = keep;
      CHECK(grads[p][i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("Adam first step on a constant unit gradient moves by lr") {
  EncoderModel model = EncoderModel::identity(1);
  AdamState adam(model, AdamConfig{0.001});
  const double before = model.layers()[0].weights[0];
  adam.step(model, std::vector<Tensor>{Tensor(Shape{1, 1}, 1.0), Tensor(Shape{1}, 0.0)});
  CHECK(model.layers()[0].weights[0] - before == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(adam.steps() == 1);
}

TEST_CASE("Adam with zero gradients leaves parameters unchanged and decays moments") {
  EncoderModel model = EncoderModel::initialize(small_config());
  const EncoderModel before = model;
  AdamState adam(model);
  std::vector<Tensor> grads;
  for (const Tensor* p : model.parameters()) grads.emplace_back(p->shape(), 1.0);
  adam.step(model, grads);
  const double m1 = adam.first_moments()[0][0];
  const EncoderModel after_one = model;
  for (Tensor& g : grads) g = Tensor(g.shape(), 0.0);
  adam.step(model, grads);
  CHECK(adam.first_moments()[0][0] == doctest::Approx(0.9 * m1));
  // The decayed first moment still moves parameters; the claim is about the
  // gradient itself contributing nothing.
  EncoderModel fresh = before;
  AdamState fresh_adam(fresh);
  for (Tensor& g : grads) g = Tensor(g.shape(), 0.0);
  fresh_adam.step(fresh, grads);
  CHECK(fresh == before);
  CHECK_FALSE(after_one == before);
}

TEST_CASE("Adam rejects mismatched gradients") {
  EncoderModel model = EncoderModel::initialize(small_config());
  AdamState adam(model);
  CHECK_THROWS_AS(adam.step(model, std::vector<Tensor>{Tensor(Shape{1})}), ShapeError);
}

TEST_CASE("checkpoint round trip is exact") {
  const EncoderModel model = EncoderModel::initialize(small_config());
  const auto path = std::filesystem::temp_directory_path() / "hmlab_ckpt_test.json";
  save_checkpoint(model, path);
  const EncoderModel loaded = load_checkpoint(path);
  CHECK(loaded == model);
  std::filesystem::remove(path);
}
