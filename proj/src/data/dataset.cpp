#include <algorithm>

#include "peerstyle/data.hpp"

namespace peerstyle {

namespace {

std::vector<ImageSample> load_folder(const std::string& dir, int class_id) {
  if (!std::filesystem::is_directory(dir)) throw ImageError(dir, "not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && (ext == ".png" || ext == ".ppm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ImageError(dir, "no .png or .ppm images");
  std::vector<ImageSample> out;
  for (const auto& f : files) {
    ImageSample s = load_image(f, false);
    s.class_id = class_id;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const Shape one = images.front().shape();
  std::vector<double> out;
  out.reserve(images.size() * images.front().numel());
  for (const Tensor& t : images) {
    if (t.shape() != one) throw ShapeError("stack_images: mixed shapes " + to_string(one) + " and " + to_string(t.shape()));
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  Shape shape{images.size()};
  shape.insert(shape.end(), one.begin(), one.end());
  return Tensor(std::move(shape), std::move(out));
}

Dataset::Dataset(DatasetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.mode == DatasetSpec::Mode::folders) {
    content_images_ = load_folder(spec_.content_dir, 0);
    for (std::size_t i = 0; i < spec_.style_dirs.size(); ++i) {
      style_images_.push_back(load_folder(spec_.style_dirs[i], static_cast<int>(i + 1)));
    }
  }
}

ImageSample Dataset::sample_content(std::mt19937_64& rng) const { return sample_class(0, rng); }

ImageSample Dataset::sample_style(std::size_t style, std::mt19937_64& rng) const {
  return sample_class(static_cast<int>(style) + 1, rng);
}

ImageSample Dataset::sample_class(int class_id, std::mt19937_64& rng) const {
  if (class_id < 0 || static_cast<std::size_t>(class_id) > num_styles()) {
    throw std::out_of_range("dataset: class id " + std::to_string(class_id) + " out of range");
  }
  ImageSample s;
  if (spec_.mode == DatasetSpec::Mode::synthetic) {
    const SyntheticClass& cls = class_id == 0 ? spec_.content : spec_.styles[static_cast<std::size_t>(class_id) - 1];
    s = synth_style(cls, spec_.crop_size, rng);
  } else {
    const auto& pool = class_id == 0 ? content_images_ : style_images_[static_cast<std::size_t>(class_id) - 1];
    const auto pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    s = random_crop(pool[pick], spec_.crop_size, rng);
  }
  s.class_id = class_id;
  return s;
}

StepBatch Dataset::sample_batch(std::size_t batch_size, std::mt19937_64& rng) const {
  if (batch_size == 0) throw std::invalid_argument("sample_batch: batch_size must be positive");
  StepBatch b;
  b.style_class = static_cast<int>(std::uniform_int_distribution<std::size_t>(1, num_styles())(rng));
  std::vector<Tensor> xi, xi2, xt, xt2;
  for (std::size_t k = 0; k < batch_size; ++k) {
    xi.push_back(sample_class(0, rng).pixels);
    xi2.push_back(sample_class(0, rng).pixels);
    xt.push_back(sample_class(b.style_class, rng).pixels);
    xt2.push_back(sample_class(b.style_class, rng).pixels);
  }
  b.x_i = stack_images(xi);
  b.x_i2 = stack_images(xi2);
  b.x_t = stack_images(xt);
  b.x_t2 = stack_images(xt2);
  return b;
}

}  // namespace peerstyle
