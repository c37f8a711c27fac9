#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "joinrl/common.hpp"
#include "joinrl/env.hpp"

namespace joinrl {

/// Per-layer parameter block mirroring Mlp shapes; also holds gradients and
/// optimizer moments.
struct ParamBlock {
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

/// Fully connected net: rectified-linear hidden layers, identity output.
/// All arithmetic in double precision.
class Mlp {
 public:
  Mlp() = default;
  /// sizes = [input, hidden..., output]; weights drawn uniformly from
  /// +-1/sqrt(fan_in), biases zero.
  Mlp(std::vector<std::size_t> sizes, std::uint64_t seed);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return layers_.size(); }
  std::vector<ParamBlock>& layers() { return layers_; }
  const std::vector<ParamBlock>& layers() const { return layers_; }

  std::vector<double> forward(std::span<const double> input) const;

  /// Pre-activations and activations of every layer, for backward().
  struct Trace {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;  // per layer
    std::vector<std::vector<double>> act;  // per layer (post-ReLU / identity)
    const std::vector<double>& output() const { return act.back(); }
  };
  Trace forward_trace(std::span<const double> input) const;

  /// Accumulates dLoss/dparams into `grads` given dLoss/doutput.
  void backward(const Trace& trace, std::span<const double> output_grad,
                std::vector<ParamBlock>& grads) const;

  std::vector<ParamBlock> zero_grads() const;

  bool same_architecture(const Mlp& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<ParamBlock> layers_;
};

/// Adaptive-moment gradient descent. step() rejects non-finite gradients.
class Adam {
 public:
  explicit Adam(const Mlp& net, double learning_rate = 1e-4, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  void step(Mlp& net, const std::vector<ParamBlock>& grads);
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<ParamBlock> m_, v_;
};

// ---------------------------------------------------------------------------
// Action masking
// ---------------------------------------------------------------------------

enum class MaskMode {
  /// Invalid entries replaced by a large negative sentinel; safe for argmax
  /// and softmax selection whatever the sign of the valid values.
  Sentinel,
  /// Invalid entries forced to zero. Zero outranks any negative valid value
  /// under argmax, so callers must guard selection themselves.
  ZeroLiteral,
};

inline constexpr double kMaskSentinel = -1e9;

struct MaskedOutput {
  std::vector<double> raw;
  ActionMask mask;
  std::vector<double> masked;
};

/// Requires at least one valid entry.
MaskedOutput apply_mask(std::span<const double> raw, const ActionMask& mask,
                        MaskMode mode = MaskMode::Sentinel);

/// Argmax over valid entries only.
std::size_t masked_argmax(std::span<const double> values, const ActionMask& mask);

/// Softmax over valid entries; invalid entries get probability zero.
std::vector<double> masked_softmax(std::span<const double> logits, const ActionMask& mask);

// ---------------------------------------------------------------------------
// Weight files: "JRLW" magic, version, layer sizes, raw little-endian
// doubles in layer order (weights row-major, then biases).
// ---------------------------------------------------------------------------

void save_weights(const Mlp& net, const std::filesystem::path& path);
Mlp load_weights(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_weights(const Mlp& net);
Mlp deserialize_weights(std::span<const std::uint8_t> bytes);

}  // namespace joinrl
