#include "peerstyle/nn.hpp"

#include <stdexcept>

#include "peerstyle/ops.hpp"

namespace peerstyle {

namespace {

Tensor normal_tensor(Shape shape, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std_dev);
  std::vector<double> values(numel_of(shape));
  for (double& v : values) v = dist(rng);
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

Tensor trainable(Shape shape, double fill) {
  Tensor t(std::move(shape), fill);
  t.set_requires_grad(true);
  return t;
}

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, 0.2);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

ConvBlock block(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad,
                bool transposed, bool normalize, Activation act, const NetConfig& c, std::mt19937_64& rng) {
  return ConvBlock(Conv2d(in, out, kernel, stride, pad, transposed, !normalize, c.init_std, rng), normalize, act,
                   c.norm_eps);
}

}  // namespace

void NetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("NetConfig: " + msg); };
  if (image_channels == 0) fail("image_channels must be positive");
  if (base_width == 0) fail("base_width must be positive");
  if (content_channels == 0 || style_local_channels == 0 || style_global_channels == 0) {
    fail("latent channel extents must be positive");
  }
  if (content_channels != style_local_channels || content_channels != style_global_channels) {
    fail("content, style_local and style_global channel extents must be equal");
  }
  if (k_neighbors < 1) fail("k_neighbors must be >= 1");
  if (!(attention_dropout >= 0.0 && attention_dropout < 1.0)) fail("attention_dropout must lie in [0, 1)");
  if (!(discriminator_noise_sigma >= 0.0)) fail("discriminator_noise_sigma must be >= 0");
  if (!(init_std > 0.0)) fail("init_std must be positive");
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
}

NetConfig NetConfig::full() {
  NetConfig c;
  c.base_width = 64;
  c.content_channels = c.style_local_channels = c.style_global_channels = 256;
  c.n_resnet_blocks = 6;
  c.k_neighbors = 5;
  return c;
}

NetConfig NetConfig::desk() { return NetConfig{}; }

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride_,
               std::size_t padding_, bool transposed_, bool with_bias_, double init_std, std::mt19937_64& rng)
    : stride(stride_), padding(padding_), transposed(transposed_), with_bias(with_bias_) {
  const Shape w = transposed ? Shape{in_channels, out_channels, kernel, kernel}
                             : Shape{out_channels, in_channels, kernel, kernel};
  weight = normal_tensor(w, init_std, rng);
  bias = with_bias ? trainable({out_channels}, 0.0) : Tensor(Shape{out_channels}, 0.0);
}

Tensor Conv2d::forward(const Tensor& x) const {
  return transposed ? conv2d_transpose(x, weight, bias, stride, padding) : conv2d(x, weight, bias, stride, padding);
}

void Conv2d::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (with_bias) out.push_back({prefix + ".bias", bias});
}

InstanceNorm::InstanceNorm(std::size_t channels, double eps_)
    : scale(trainable({channels}, 1.0)), shift(trainable({channels}, 0.0)), eps(eps_) {}

Tensor InstanceNorm::forward(const Tensor& x) const { return instance_norm(x, scale, shift, eps); }

void InstanceNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".scale", scale});
  out.push_back({prefix + ".shift", shift});
}

ConvBlock::ConvBlock(Conv2d conv_, bool normalize_, Activation activation_, double eps)
    : conv(std::move(conv_)), normalize(normalize_), activation(activation_) {
  if (normalize) norm = InstanceNorm(conv.bias.numel(), eps);
}

Tensor ConvBlock::forward(const Tensor& x) const {
  Tensor y = conv.forward(x);
  if (normalize) y = norm.forward(y);
  return activate(y, activation);
}

void ConvBlock::collect(const std::string& prefix, ParameterList& out) const {
  conv.collect(prefix + ".conv", out);
  if (normalize) norm.collect(prefix + ".norm", out);
}

ResidualBlock::ResidualBlock(std::size_t channels, const NetConfig& c, std::mt19937_64& rng)
    : first(block(channels, channels, 3, 1, 1, false, true, Activation::relu, c, rng)),
      second(block(channels, channels, 3, 1, 1, false, true, Activation::none, c, rng)) {}

Tensor ResidualBlock::forward(const Tensor& x) const { return x + second.forward(first.forward(x)); }

void ResidualBlock::collect(const std::string& prefix, ParameterList& out) const {
  first.collect(prefix + ".first", out);
  second.collect(prefix + ".second", out);
}

GlobalStyleTransform::GlobalStyleTransform(const NetConfig& c, std::mt19937_64& rng) {
  const std::size_t ch = c.style_global_channels;
  for (std::size_t i = 0; i < c.gst_blocks; ++i) {
    blocks.push_back(block(ch, ch, 3, 2, 1, false, true, Activation::relu, c, rng));
  }
}

Tensor GlobalStyleTransform::forward(const Tensor& style_tail) const {
  if (style_tail.dim() != 4 || style_tail.size(2) == 0 || style_tail.size(3) == 0) {
    throw ShapeError("global_style_transform: expected [B, C, h, w] with h, w >= 1, got " +
                     to_string(style_tail.shape()));
  }
  Tensor y = style_tail;
  for (const ConvBlock& b : blocks) y = b.forward(y);
  return mean_axis(mean_axis(y, 3), 2);
}

void GlobalStyleTransform::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out);
}

Encoder::Encoder(const NetConfig& c, std::mt19937_64& rng) : config(c) {
  c.validate();
  const std::size_t w = c.base_width;
  ingress = block(c.image_channels, w, 7, 1, 3, false, true, Activation::relu, c, rng);
  down1 = block(w, 2 * w, 3, 2, 1, false, true, Activation::relu, c, rng);
  down2 = block(2 * w, c.latent_channels(), 3, 2, 1, false, true, Activation::relu, c, rng);
  for (std::size_t i = 0; i < c.n_resnet_blocks; ++i) residual.emplace_back(c.latent_channels(), c, rng);
  global_style = GlobalStyleTransform(c, rng);
}

LatentCode Encoder::forward(const Tensor& image) const {
  if (image.dim() != 4 || image.size(1) != config.image_channels) {
    throw ShapeError("encode: expected [B, " + std::to_string(config.image_channels) + ", H, W], got " +
                     to_string(image.shape()));
  }
  if (image.size(2) % 4 != 0 || image.size(3) % 4 != 0 || image.size(2) == 0 || image.size(3) == 0) {
    throw ShapeError("encode: spatial extent " + to_string(image.shape()) + " not divisible by 4");
  }
  Tensor y = down2.forward(down1.forward(ingress.forward(image)));
  for (const ResidualBlock& r : residual) y = r.forward(y);
  const std::size_t cc = config.content_channels;
  const std::size_t cs = config.style_local_channels;
  LatentCode z;
  z.content = slice(y, 1, 0, cc);
  z.style_local = slice(y, 1, cc, cc + cs);
  z.style_global = global_style.forward(slice(y, 1, cc + cs, config.latent_channels()));
  return z;
}

void Encoder::collect(const std::string& prefix, ParameterList& out) const {
  ingress.collect(prefix + ".ingress", out);
  down1.collect(prefix + ".down1", out);
  down2.collect(prefix + ".down2", out);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i].collect(prefix + ".res" + std::to_string(i), out);
  global_style.collect(prefix + ".gst", out);
}

Tensor assemble_decoder_input(const LatentCode& z) {
  const Shape& cs = z.content.shape();
  const Shape& ls = z.style_local.shape();
  const Shape& gs = z.style_global.shape();
  if (cs.size() != 4 || ls.size() != 4 || gs.size() != 4 || cs[0] != ls[0] || cs[2] != ls[2] || cs[3] != ls[3] ||
      gs[0] != cs[0] || gs[2] != 1 || gs[3] != 1) {
    throw ShapeError("decode: malformed latent code content " + to_string(cs) + ", style_local " + to_string(ls) +
                     ", style_global " + to_string(gs));
  }
  const Tensor global = broadcast_to(z.style_global, {gs[0], gs[1], cs[2], cs[3]});
  return concat({z.content, z.style_local, global}, 1);
}

Decoder::Decoder(const NetConfig& c, std::mt19937_64& rng) : config(c) {
  c.validate();
  const std::size_t w = c.base_width;
  for (std::size_t i = 0; i < c.n_resnet_blocks; ++i) residual.emplace_back(c.latent_channels(), c, rng);
  up1 = block(c.latent_channels(), 2 * w, 4, 2, 1, true, true, Activation::relu, c, rng);
  up2 = block(2 * w, w, 4, 2, 1, true, true, Activation::relu, c, rng);
  egress = block(w, c.image_channels, 7, 1, 3, false, false, Activation::tanh, c, rng);
}

Tensor Decoder::forward(const LatentCode& z) const {
  Tensor y = assemble_decoder_input(z);
  if (y.size(1) != config.latent_channels()) {
    throw ShapeError("decode: latent has " + std::to_string(y.size(1)) + " channels, decoder expects " +
                     std::to_string(config.latent_channels()));
  }
  for (const ResidualBlock& r : residual) y = r.forward(y);
  return egress.forward(up2.forward(up1.forward(y)));
}

void Decoder::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i].collect(prefix + ".res" + std::to_string(i), out);
  up1.collect(prefix + ".up1", out);
  up2.collect(prefix + ".up2", out);
  egress.collect(prefix + ".egress", out);
}

Discriminator::Discriminator(const NetConfig& c, std::mt19937_64& rng) : config(c) {
  c.validate();
  const std::size_t w = c.base_width;
  layer1 = block(2 * c.image_channels, w, 4, 2, 1, false, false, Activation::leaky_relu, c, rng);
  layer2 = block(w, 2 * w, 4, 2, 1, false, true, Activation::leaky_relu, c, rng);
  layer3 = block(2 * w, 2 * w, 3, 1, 1, false, true, Activation::leaky_relu, c, rng);
  head = Conv2d(2 * w, 1, 3, 1, 1, false, true, c.init_std, rng);
}

Tensor Discriminator::forward(const Tensor& candidate, const Tensor& condition, std::mt19937_64& rng,
                              bool training) const {
  if (candidate.shape() != condition.shape()) {
    throw ShapeError("discriminate: candidate " + to_string(candidate.shape()) + " and condition " +
                     to_string(condition.shape()) + " differ");
  }
  Tensor a = candidate;
  Tensor b = condition;
  if (training && config.discriminator_noise_sigma > 0.0) {
    a = add_gaussian_noise(a, config.discriminator_noise_sigma, rng);
    b = add_gaussian_noise(b, config.discriminator_noise_sigma, rng);
  }
  Tensor y = concat({a, b}, 1);
  return head.forward(layer3.forward(layer2.forward(layer1.forward(y))));
}

void Discriminator::collect(const std::string& prefix, ParameterList& out) const {
  layer1.collect(prefix + ".layer1", out);
  layer2.collect(prefix + ".layer2", out);
  layer3.collect(prefix + ".layer3", out);
  head.collect(prefix + ".head", out);
}

}  // namespace peerstyle
