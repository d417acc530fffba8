#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dsr/feature_map.hpp"

namespace dsr {

/// conv: 3x3, stride 1, zero "same" padding, ReLU. pool: 2x2 max, stride 2.
struct LayerSpec {
  enum class Kind : std::uint8_t { conv = 0, pool = 1 };
  Kind kind = Kind::conv;
  int out_channels = 0;  // conv only

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct FcnConfig {
  int input_channels = 3;
  std::vector<LayerSpec> layers;

  /// conv(8)-pool-conv(16)-pool-conv(16).
  static FcnConfig desk_default(int input_channels = 3);

  /// Parses "c8,p,c16,p,c16".
  static FcnConfig parse(const std::string& layers, int input_channels);
  std::string to_string() const;

  int pool_count() const;
  int output_channels() const;
  /// Output spatial size for an input of the given size (floor division per pool).
  std::pair<Index, Index> output_size(Index width, Index height) const;
  void validate() const;

  friend bool operator==(const FcnConfig&, const FcnConfig&) = default;
};

struct ConvParams {
  Matrix<double> weights;  // out x (9 * in); column (ky*3 + kx) * in + c
  Vector<double> bias;
};

struct FcnParams {
  FcnConfig config;
  std::vector<ConvParams> convs;  // one per conv layer, in order

  void validate() const;
  Index parameter_count() const;
};

/// He (fan-in) initialization with zero biases.
FcnParams init_params(const FcnConfig& config, std::uint64_t seed);

/// Activations kept by the forward pass for backpropagation.
struct ForwardTrace {
  struct Layer {
    Index in_width = 0, in_height = 0;
    Matrix<double> columns;               // conv: im2col of the input
    Matrix<double> pre_activation;        // conv
    std::vector<Index> argmax;            // pool: source cell per output element
    Index in_channels = 0;
  };
  std::vector<Layer> layers;
};

/// Throws std::invalid_argument when the input is too small for the pool
/// stack or its channel count differs from the config.
FeatureMapd fcn_forward(const FeatureMapd& input, const FcnParams& params, ForwardTrace* trace = nullptr);

struct FcnGradients {
  std::vector<ConvParams> convs;

  static FcnGradients zeros_like(const FcnParams& params);
  FcnGradients& operator+=(const FcnGradients& other);
};

/// Gradients of a scalar loss w.r.t. the parameters given dL/d(output map)
/// in the d x (w*h) layout. Optionally returns dL/d(input).
FcnGradients fcn_backward(const ForwardTrace& trace, const FcnParams& params, const Matrix<double>& output_grad,
                          Matrix<double>* input_grad = nullptr);

/// params -= lr * grads
void sgd_update(FcnParams& params, const FcnGradients& grads, double lr);

// Checkpoint: "FCNP", u16 version (1), u16 input channels, u32 layer count,
// then per layer a u8 kind; conv layers carry two shape-prefixed tensors
// (u32 rank, u32 dims..., float32 values): weights [out][in][3][3] and
// bias [out]. Little-endian throughout.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const FcnParams& params);
void save_checkpoint(const std::filesystem::path& path, const FcnParams& params);
FcnParams load_checkpoint(std::istream& in);
FcnParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dsr
