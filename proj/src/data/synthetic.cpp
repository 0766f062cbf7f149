#include <algorithm>
#include <cmath>
#include <numbers>

#include "peerstyle/data.hpp"

namespace peerstyle {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPixelNoise = 0.03;

using Color = std::array<double, 3>;

void fill_mix(std::vector<double>& out, std::size_t size, const std::vector<double>& t, const Color& a,
              const Color& b) {
  const std::size_t n = size * size;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = a[c] * (1.0 - t[i]) + b[c] * t[i];
}

void scene(std::vector<double>& out, std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = size * size;
  const double s = static_cast<double>(size);
  const Color top{u(rng), u(rng), u(rng)}, bottom{u(rng), u(rng), u(rng)};
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double t = static_cast<double>(y) / (s - 1.0);
      for (std::size_t c = 0; c < 3; ++c) out[c * n + y * size + x] = top[c] * (1 - t) + bottom[c] * t;
    }
  const int shapes = 2 + static_cast<int>(rng() % 3);
  for (int k = 0; k < shapes; ++k) {
    const Color color{u(rng), u(rng), u(rng)};
    const double cx = unit(rng) * s, cy = unit(rng) * s;
    const double rx = (0.1 + 0.25 * unit(rng)) * s, ry = (0.1 + 0.25 * unit(rng)) * s;
    const bool round = rng() % 2 == 0;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx, dy = (static_cast<double>(y) + 0.5 - cy) / ry;
        const bool inside = round ? dx * dx + dy * dy <= 1.0 : std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0;
        if (inside)
          for (std::size_t c = 0; c < 3; ++c) out[c * n + y * size + x] = color[c];
      }
  }
}

}  // namespace

const char* family_name(TextureFamily f) {
  switch (f) {
    case TextureFamily::stripes: return "stripes";
    case TextureFamily::checker: return "checker";
    case TextureFamily::blotch: return "blotch";
    case TextureFamily::scene: return "scene";
  }
  return "?";
}

TextureFamily parse_family(const std::string& name) {
  for (TextureFamily f : {TextureFamily::stripes, TextureFamily::checker, TextureFamily::blotch, TextureFamily::scene}) {
    if (name == family_name(f)) return f;
  }
  throw std::invalid_argument("unknown texture family '" + name + "' (stripes, checker, blotch, scene)");
}

ImageSample synth_style(const SyntheticClass& cls, std::size_t size, std::mt19937_64& rng) {
  if (size == 0) throw std::invalid_argument("synth_style: size must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, kPixelNoise);
  const std::size_t n = size * size;
  const double s = static_cast<double>(size);
  std::vector<double> out(3 * n);
  std::vector<double> t(n);
  const double freq = cls.frequency * (0.9 + 0.2 * unit(rng));
  switch (cls.family) {
    case TextureFamily::stripes: {
      const double angle = cls.angle + 0.2 * (unit(rng) - 0.5);
      const double phase = kTwoPi * unit(rng);
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double u = (static_cast<double>(x) * ca + static_cast<double>(y) * sa) / s;
          t[y * size + x] = 0.5 + 0.5 * std::sin(kTwoPi * freq * u + phase);
        }
      fill_mix(out, size, t, cls.palette[0], cls.palette[1]);
      break;
    }
    case TextureFamily::checker: {
      const double px = kTwoPi * unit(rng), py = kTwoPi * unit(rng);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double v = std::sin(kTwoPi * freq * static_cast<double>(x) / s + px) *
                           std::sin(kTwoPi * freq * static_cast<double>(y) / s + py);
          t[y * size + x] = 0.5 + 0.5 * std::tanh(6.0 * v);
        }
      fill_mix(out, size, t, cls.palette[0], cls.palette[1]);
      break;
    }
    case TextureFamily::blotch: {
      const int blobs = std::max(1, static_cast<int>(std::lround(freq * freq / 2.0)));
      const double sigma = s / (2.5 * freq);
      std::vector<std::array<double, 2>> centers(static_cast<std::size_t>(blobs));
      for (auto& c : centers) c = {unit(rng) * s, unit(rng) * s};
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          double v = 0.0;
          for (const auto& c : centers) {
            const double dx = static_cast<double>(x) - c[0], dy = static_cast<double>(y) - c[1];
            v += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          }
          t[y * size + x] = std::min(1.0, v);
        }
      fill_mix(out, size, t, cls.palette[0], cls.palette[1]);
      break;
    }
    case TextureFamily::scene: scene(out, size, rng); break;
  }
  for (double& v : out) v = std::clamp(v + noise(rng), -1.0, 1.0);
  return {Tensor(Shape{3, size, size}, std::move(out)), -1, std::string("synthetic:") + cls.name};
}

DatasetSpec DatasetSpec::synthetic_default(std::size_t n_styles, std::size_t crop) {
  static const SyntheticClass base[] = {
      {"stripes", TextureFamily::stripes, 4.0, std::numbers::pi / 4, {{{0.9, 0.3, -0.6}, {-0.7, -0.5, 0.2}}}},
      {"checker", TextureFamily::checker, 3.0, 0.0, {{{-0.8, 0.6, 0.7}, {0.7, 0.8, -0.2}}}},
      {"blotch", TextureFamily::blotch, 5.0, 0.0, {{{0.2, -0.8, 0.8}, {0.9, 0.9, 0.6}}}},
  };
  DatasetSpec spec;
  spec.mode = Mode::synthetic;
  spec.crop_size = crop;
  for (std::size_t i = 0; i < n_styles; ++i) {
    SyntheticClass c = base[i % 3];
    if (i >= 3) {
      // Further classes reuse a family at another frequency with a rotated palette.
      c.name += std::to_string(i / 3);
      c.frequency += 1.5 * static_cast<double>(i / 3);
      for (auto& color : c.palette) std::rotate(color.begin(), color.begin() + static_cast<long>(i / 3 % 3), color.end());
    }
    spec.styles.push_back(c);
  }
  spec.content = {"scenes", TextureFamily::scene, 1.0, 0.0, {}};
  return spec;
}

void DatasetSpec::validate() const {
  if (crop_size == 0 || crop_size % 4 != 0) throw std::invalid_argument("dataset: crop_size must be a positive multiple of 4");
  if (num_styles() < 1) throw std::invalid_argument("dataset: at least one style class is required");
  if (mode == Mode::synthetic) {
    for (const auto& s : styles) {
      if (!(s.frequency > 0.0)) throw std::invalid_argument("dataset: class '" + s.name + "' needs a positive frequency");
    }
  } else if (content_dir.empty()) {
    throw std::invalid_argument("dataset: folders mode needs content_dir");
  }
}

}  // namespace peerstyle
