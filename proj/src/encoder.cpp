#include "hmlab/encoder.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace hmlab {

EncoderModel EncoderModel::initialize(const EncoderConfig& config) {
  if (config.input_dim == 0 || config.embedding_dim == 0) throw ConfigError("encoder dimensions must be positive");
  EncoderModel model;
  model.config_ = config;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> dims{config.input_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.embedding_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    if (out == 0) throw ConfigError("encoder hidden width must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Tensor(Shape{in, out}), Tensor(Shape{out})};
    for (double& w : layer.weights.storage()) w = dist(rng);
    for (double& b : layer.bias.storage()) b = dist(rng);
    model.layers_.push_back(std::move(layer));
  }
  return model;
}

EncoderModel EncoderModel::identity(std::size_t dim) {
  EncoderModel model;
  model.config_ = EncoderConfig{dim, {}, dim, 0};
  DenseLayer layer{Tensor(Shape{dim, dim}), Tensor(Shape{dim})};
  for (std::size_t i = 0; i < dim; ++i) layer.weights.at(i, i) = 1.0;
  model.layers_.push_back(std::move(layer));
  return model;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.numel() + l.bias.numel();
  return n;
}

std::vector<Tensor*> EncoderModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> EncoderModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

BoundEncoder EncoderModel::bind(grad::Tape& tape, bool trainable) const {
  BoundEncoder bound;
  bound.input_dim = config_.input_dim;
  for (const Tensor* p : parameters()) bound.params.push_back(tape.leaf(*p, trainable));
  return bound;
}

Tensor EncoderModel::embed_values(const Tensor& inputs) const {
  grad::Tape tape;
  const BoundEncoder bound = bind(tape, false);
  const grad::Node x = tape.constant(inputs);
  return tape.value(embed(tape, bound, x));
}

grad::Node embed(grad::Tape& tape, const BoundEncoder& encoder, grad::Node inputs) {
  const Tensor& x = tape.value(inputs);
  if (x.rank() != 2 || x.cols() != encoder.input_dim) {
    throw ShapeError("embed: expected [B x " + std::to_string(encoder.input_dim) + "] inputs, got " +
                     to_string(x.shape()));
  }
  grad::Node h = inputs;
  const std::size_t layer_count = encoder.params.size() / 2;
  for (std::size_t l = 0; l < layer_count; ++l) {
    h = grad::add_bias(tape, grad::matmul(tape, h, encoder.params[2 * l]), encoder.params[2 * l + 1]);
    if (l + 1 < layer_count) h = grad::relu(tape, h);
  }
  return grad::l2_normalize_rows(tape, h);
}

std::vector<Tensor> parameter_grads(const grad::Tape& tape, const BoundEncoder& encoder) {
  std::vector<Tensor> out;
  out.reserve(encoder.params.size());
  for (grad::Node p : encoder.params) out.push_back(tape.grad(p));
  return out;
}

AdamState::AdamState(const EncoderModel& model, AdamConfig config) : config_(config) {
  for (const Tensor* p : model.parameters()) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

void AdamState::step(EncoderModel& model, std::span<const Tensor> grads) {
  auto params = model.parameters();
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->shape()) {
      throw ShapeError("adam_step: gradient " + to_string(grads[i].shape()) + " vs parameter " +
                       to_string(params[i]->shape()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double g = grads[i][j];
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

nlohmann::json to_json(const EncoderModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers()) {
    layers.push_back({{"in", l.weights.rows()},
                      {"out", l.weights.cols()},
                      {"weights", l.weights.storage()},
                      {"bias", l.bias.storage()}});
  }
  const auto& c = model.config();
  return {{"config",
           {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"embedding_dim", c.embedding_dim}, {"seed", c.seed}}},
          {"layers", layers}};
}

EncoderModel encoder_from_json(const nlohmann::json& j) {
  EncoderConfig config;
  const auto& c = j.at("config");
  config.input_dim = c.at("input_dim").get<std::size_t>();
  config.hidden = c.at("hidden").get<std::vector<std::size_t>>();
  config.embedding_dim = c.at("embedding_dim").get<std::size_t>();
  config.seed = c.at("seed").get<std::uint64_t>();
  EncoderModel model = EncoderModel::initialize(config);
  auto params = model.parameters();
  const auto& layers = j.at("layers");
  if (layers.size() * 2 != params.size()) throw ConfigError("checkpoint layer count does not match its config");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].at("weights").get<std::vector<double>>();
    auto b = layers[l].at("bias").get<std::vector<double>>();
    *params[2 * l] = Tensor(params[2 * l]->shape(), std::move(w));
    *params[2 * l + 1] = Tensor(params[2 * l + 1]->shape(), std::move(b));
  }
  return model;
}

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << to_json(model).dump(1) << '\n';
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return encoder_from_json(nlohmann::json::parse(in));
}

}  // namespace hmlab
