#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hmlab/gradcore.hpp"
#include "hmlab/tensor.hpp"
#include "json.hpp"

namespace hmlab {

struct EncoderConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embedding_dim = 32;
  std::uint64_t seed = 0;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct DenseLayer {
  Tensor weights;  // [in x out]
  Tensor bias;     // [out]

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Parameters of an encoder recorded on a particular tape.
struct BoundEncoder {
  std::vector<grad::Node> params;  // weights0, bias0, weights1, bias1, ...
  std::size_t input_dim = 0;
};

/// MLP with ReLU between dense layers and an L2-normalization head, so every
/// embedding lies on the unit hypersphere.
class EncoderModel {
 public:
  static EncoderModel initialize(const EncoderConfig& config);
  /// Single dense layer with identity weights and zero bias (dim -> dim).
  static EncoderModel identity(std::size_t dim);

  const EncoderConfig& config() const { return config_; }
  std::size_t input_dim() const { return config_.input_dim; }
  std::size_t embedding_dim() const { return config_.embedding_dim; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const;
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  /// Records all parameters on the tape; trainable=false makes them constants.
  BoundEncoder bind(grad::Tape& tape, bool trainable) const;

  /// Tape-free forward pass (values only), for sampling and evaluation.
  Tensor embed_values(const Tensor& inputs) const;

  friend bool operator==(const EncoderModel&, const EncoderModel&) = default;

 private:
  EncoderConfig config_;
  std::vector<DenseLayer> layers_;
};

/// Forward pass on the tape: [B x n] inputs -> [B x D] unit-norm rows.
/// Throws ShapeError on wrong input width.
grad::Node embed(grad::Tape& tape, const BoundEncoder& encoder, grad::Node inputs);

/// Gradients of the last backward root w.r.t. each bound parameter, in parameter order.
std::vector<Tensor> parameter_grads(const grad::Tape& tape, const BoundEncoder& encoder);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState(const EncoderModel& model, AdamConfig config = {});

  /// One bias-corrected Adam update. Throws ShapeError on gradient/parameter mismatch.
  void step(EncoderModel& model, std::span<const Tensor> grads);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

// Checkpoints are JSON: {"config": {...}, "layers": [{"in", "out", "weights", "bias"}]}.
nlohmann::json to_json(const EncoderModel& model);
EncoderModel encoder_from_json(const nlohmann::json& j);
void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace hmlab
