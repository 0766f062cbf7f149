#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "peerstyle/data.hpp"

namespace peerstyle {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// Interleaved RGB bytes -> [3, H, W]
Tensor planar_from_rgb(const std::vector<std::uint8_t>& rgb, std::size_t h, std::size_t w) {
  std::vector<double> out(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * h * w + i] = to_unit(rgb[3 * i + c]);
  return Tensor(Shape{3, h, w}, std::move(out));
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, std::size_t& h, std::size_t& w) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) throw ImageError(path, image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageError(path, msg);
  }
  h = image.height;
  w = image.width;
  return rgb;
}

// Next whitespace-separated header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::vector<std::uint8_t> read_ppm(const std::filesystem::path& path, std::size_t& h, std::size_t& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(path, "cannot open");
  if (ppm_token(in) != "P6") throw ImageError(path, "not a binary PPM (P6)");
  std::size_t maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw ImageError(path, "malformed PPM header");
  }
  if (maxval != 255) throw ImageError(path, "only 8-bit PPM is supported");
  if (w == 0 || h == 0) throw ImageError(path, "empty image");
  std::vector<std::uint8_t> rgb(3 * w * h);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) throw ImageError(path, "truncated pixel data");
  return rgb;
}

}  // namespace

std::uint8_t to_byte(double v) {
  const double clamped = std::clamp(v, -1.0, 1.0);
  return static_cast<std::uint8_t>(std::lround((clamped + 1.0) * 127.5));
}

ImageSample load_image(const std::filesystem::path& path, bool require_divisible) {
  if (!std::filesystem::exists(path)) throw ImageError(path, "no such file");
  const std::string ext = lower_extension(path);
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> rgb;
  if (ext == ".png") {
    rgb = read_png(path, h, w);
  } else if (ext == ".ppm") {
    rgb = read_ppm(path, h, w);
  } else {
    throw ImageError(path, "unsupported format '" + ext + "' (expected .png or .ppm)");
  }
  if (require_divisible && (h % 4 != 0 || w % 4 != 0)) {
    throw ImageError(path, std::to_string(w) + "x" + std::to_string(h) + " is not divisible by 4");
  }
  return {planar_from_rgb(rgb, h, w), -1, path.string()};
}

void save_image(const Tensor& pixels, const std::filesystem::path& path) {
  Tensor img = pixels;
  if (img.dim() == 4 && img.size(0) == 1) img = Tensor(Shape{img.size(1), img.size(2), img.size(3)},
                                                       std::vector<double>(img.data().begin(), img.data().end()));
  if (img.dim() != 3 || img.size(0) != 3) throw ImageError(path, "expected a [3, H, W] image, got " + to_string(pixels.shape()));
  const std::size_t h = img.size(1), w = img.size(2);
  std::vector<std::uint8_t> rgb(3 * h * w);
  const auto d = img.data();
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) rgb[3 * i + c] = to_byte(d[c * h * w + i]);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
      throw ImageError(path, image.message);
    }
  } else if (ext == ".ppm") {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n" << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw ImageError(path, "write failed");
  } else {
    throw ImageError(path, "unsupported format '" + ext + "' (expected .png or .ppm)");
  }
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.dim() != 3 || height == 0 || width == 0) {
    throw ShapeError("resize_bilinear: expected [C, H, W] and a positive target, got " + to_string(image.shape()));
  }
  const std::size_t C = image.size(0), H = image.size(1), W = image.size(2);
  const auto src = image.data();
  std::vector<double> out(C * height * width);
  const double sy = static_cast<double>(H) / static_cast<double>(height);
  const double sx = static_cast<double>(W) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, H - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, W - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = src.data() + c * H * W;
        const double top = p[y0 * W + x0] * (1 - tx) + p[y0 * W + x1] * tx;
        const double bottom = p[y1 * W + x0] * (1 - tx) + p[y1 * W + x1] * tx;
        out[(c * height + y) * width + x] = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return Tensor(Shape{C, height, width}, std::move(out));
}

ImageSample random_crop(const ImageSample& sample, std::size_t size, std::mt19937_64& rng) {
  if (size == 0 || size % 4 != 0) throw std::invalid_argument("random_crop: size must be a positive multiple of 4");
  Tensor img = sample.pixels;
  std::size_t H = img.size(1), W = img.size(2);
  if (H < size || W < size) {
    const double scale = static_cast<double>(size) / static_cast<double>(std::min(H, W));
    H = std::max(size, static_cast<std::size_t>(std::lround(H * scale)));
    W = std::max(size, static_cast<std::size_t>(std::lround(W * scale)));
    img = resize_bilinear(img, H, W);
  }
  const std::size_t oy = std::uniform_int_distribution<std::size_t>(0, H - size)(rng);
  const std::size_t ox = std::uniform_int_distribution<std::size_t>(0, W - size)(rng);
  const std::size_t C = img.size(0);
  std::vector<double> out(C * size * size);
  const auto src = img.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < size; ++y)
      std::copy_n(src.data() + (c * H + oy + y) * W + ox, size, out.data() + (c * size + y) * size);
  return {Tensor(Shape{C, size, size}, std::move(out)), sample.class_id, sample.source};
}

}  // namespace peerstyle
