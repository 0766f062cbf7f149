#pragma once

// Image files, cropping and the procedural style classes used for desk-scale
// training.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "peerstyle/tensor.hpp"

namespace peerstyle {

class ImageError : public std::runtime_error {
 public:
  ImageError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct ImageSample {
  Tensor pixels;  // [3, H, W] in [-1, 1]
  int class_id = -1;
  std::string source;
};

/// PNG or binary PPM (P6), chosen by extension. 8-bit RGB, gray and alpha
/// PNGs are accepted; alpha is dropped. Extents must be divisible by 4
/// unless `require_divisible` is false.
ImageSample load_image(const std::filesystem::path& path, bool require_divisible = true);
/// pixels [3, H, W] or [1, 3, H, W]; values clamped to [-1, 1] then quantized.
void save_image(const Tensor& pixels, const std::filesystem::path& path);

inline double to_unit(std::uint8_t v) { return v / 127.5 - 1.0; }
std::uint8_t to_byte(double v);

/// Bilinear resize of a [3, H, W] image (pixel-center aligned).
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);
/// Uniform placement of a size x size window; smaller images are first
/// resized so their short side equals `size`.
ImageSample random_crop(const ImageSample& sample, std::size_t size, std::mt19937_64& rng);

enum class TextureFamily { stripes, checker, blotch, scene };

const char* family_name(TextureFamily f);
TextureFamily parse_family(const std::string& name);

struct SyntheticClass {
  std::string name;
  TextureFamily family = TextureFamily::stripes;
  double frequency = 4.0;  // cycles (or blobs) across the image
  double angle = 0.0;      // radians, stripes only
  std::array<std::array<double, 3>, 2> palette{};  // two RGB colors in [-1, 1]
  bool operator==(const SyntheticClass&) const = default;
};

/// One procedurally textured [3, size, size] image. Phase, small frequency
/// and angle jitter, and pixel noise come from `rng`.
ImageSample synth_style(const SyntheticClass& cls, std::size_t size, std::mt19937_64& rng);

struct DatasetSpec {
  enum class Mode { synthetic, folders };
  Mode mode = Mode::synthetic;
  std::vector<SyntheticClass> styles;
  SyntheticClass content;
  std::vector<std::string> style_dirs;
  std::string content_dir;
  std::size_t crop_size = 32;

  /// Three style families (stripes, checker, blotch) and geometric scenes.
  static DatasetSpec synthetic_default(std::size_t n_styles = 3, std::size_t crop = 32);
  std::size_t num_styles() const { return mode == Mode::synthetic ? styles.size() : style_dirs.size(); }
  /// Throws std::invalid_argument on the first violated constraint.
  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

/// x_i, x_i2 from the content class (id 0); x_t, x_t2 from style class
/// `style_class` in 1..S.
struct StepBatch {
  Tensor x_i, x_i2, x_t, x_t2;  // [B, 3, size, size]
  int style_class = 0;
};

class Dataset {
 public:
  explicit Dataset(DatasetSpec spec);

  const DatasetSpec& spec() const { return spec_; }
  std::size_t num_styles() const { return spec_.num_styles(); }
  ImageSample sample_content(std::mt19937_64& rng) const;
  ImageSample sample_style(std::size_t style, std::mt19937_64& rng) const;
  /// Class 0 is content; 1..S are styles.
  ImageSample sample_class(int class_id, std::mt19937_64& rng) const;
  /// One style class per batch, uniform over the S classes.
  StepBatch sample_batch(std::size_t batch_size, std::mt19937_64& rng) const;

 private:
  DatasetSpec spec_;
  std::vector<std::vector<ImageSample>> style_images_;
  std::vector<ImageSample> content_images_;
};

/// Stacks [3, H, W] images into [B, 3, H, W].
Tensor stack_images(const std::vector<Tensor>& images);

}  // namespace peerstyle
