#pragma once

// Convolutional building blocks and the three image networks: encoder,
// decoder (used twice, auxiliary and main) and conditional discriminator.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "peerstyle/adam.hpp"
#include "peerstyle/tensor.hpp"

namespace peerstyle {

struct NetConfig {
  std::size_t image_channels = 3;
  std::size_t base_width = 16;
  std::size_t content_channels = 16;
  std::size_t style_local_channels = 16;
  std::size_t style_global_channels = 16;
  std::size_t n_resnet_blocks = 2;
  /// Stride-2 conv-IN-ReLU blocks in the global style transform before pooling.
  std::size_t gst_blocks = 2;
  std::size_t k_neighbors = 3;
  double attention_dropout = 0.2;
  double discriminator_noise_sigma = 0.1;
  double init_std = 0.02;
  double norm_eps = 1e-5;

  std::size_t latent_channels() const {
    return content_channels + style_local_channels + style_global_channels;
  }

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  /// 768-channel latent (256/256/256), K = 5.
  static NetConfig full();
  /// 16/16/16 latent, K = 3, narrow convolutions.
  static NetConfig desk();

  bool operator==(const NetConfig&) const = default;
};

/// Encoder output split into content, per-pixel style and per-map style.
struct LatentCode {
  Tensor content;       // [B, Cc, h, w]
  Tensor style_local;   // [B, Cs, h, w]
  Tensor style_global;  // [B, Cg, 1, 1]

  std::pair<Tensor, Tensor> style() const { return {style_local, style_global}; }
  std::size_t batch() const { return content.size(0); }
  LatentCode detach() const { return {content.detach(), style_local.detach(), style_global.detach()}; }
};

enum class Activation { none, relu, leaky_relu, tanh };

class Conv2d {
 public:
  Conv2d() = default;
  /// Without `with_bias` the bias is a fixed zero vector and is not a parameter.
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t padding, bool transposed, bool with_bias, double init_std, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool transposed = false;
  bool with_bias = true;
};

class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(std::size_t channels, double eps);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor scale;
  Tensor shift;
  double eps = 1e-5;
};

/// conv -> optional IN -> activation. A normalized conv carries no bias.
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(Conv2d conv, bool normalize, Activation activation, double eps);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Conv2d conv;
  bool normalize = true;
  InstanceNorm norm;
  Activation activation = Activation::relu;
};

/// x + (conv-IN-ReLU-conv-IN)(x)
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t channels, const NetConfig& config, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  ConvBlock first;
  ConvBlock second;
};

/// Reduces the global-style tail of the encoder to one value per feature map.
class GlobalStyleTransform {
 public:
  GlobalStyleTransform() = default;
  GlobalStyleTransform(const NetConfig& config, std::mt19937_64& rng);

  /// [B, Cg, h, w] -> [B, Cg, 1, 1]
  Tensor forward(const Tensor& style_tail) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  std::vector<ConvBlock> blocks;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const NetConfig& config, std::mt19937_64& rng);

  /// image [B, 3, H, W] with H, W divisible by 4.
  LatentCode forward(const Tensor& image) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  NetConfig config;
  ConvBlock ingress;
  ConvBlock down1;
  ConvBlock down2;
  std::vector<ResidualBlock> residual;
  GlobalStyleTransform global_style;
};

/// Concatenates content, local style and the broadcast global style over channels.
Tensor assemble_decoder_input(const LatentCode& z);

class Decoder {
 public:
  Decoder() = default;
  Decoder(const NetConfig& config, std::mt19937_64& rng);

  /// Image [B, 3, 4h, 4w] in [-1, 1].
  Tensor forward(const LatentCode& z) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  NetConfig config;
  std::vector<ResidualBlock> residual;
  ConvBlock up1;
  ConvBlock up2;
  ConvBlock egress;
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const NetConfig& config, std::mt19937_64& rng);

  /// Scores [B, 1, H/4, W/4] for `candidate` conditioned on a style exemplar.
  /// In training mode each input receives independent N(0, sigma^2) noise.
  Tensor forward(const Tensor& candidate, const Tensor& condition, std::mt19937_64& rng, bool training) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  NetConfig config;
  ConvBlock layer1;
  ConvBlock layer2;
  ConvBlock layer3;
  Conv2d head;
};

}  // namespace peerstyle
