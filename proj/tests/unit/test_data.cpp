#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "peerstyle/data.hpp"
#include "test_util.hpp"

using namespace peerstyle;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "peerstyle_test_data";
  fs::create_directories(dir);
  return dir / name;
}

std::array<double, 3> channel_means(const Tensor& img) {
  const std::size_t n = img.size(1) * img.size(2);
  std::array<double, 3> m{};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) m[c] += img.data()[c * n + i];
    m[c] /= static_cast<double>(n);
  }
  return m;
}

}  // namespace

TEST_CASE("save -> load round trip stays within one quantization step") {
  std::mt19937_64 rng(1);
  const Tensor img = testing::random_tensor({3, 8, 12}, rng);
  for (const char* ext : {".png", ".ppm"}) {
    const fs::path path = scratch(std::string("roundtrip") + ext);
    save_image(img, path);
    const ImageSample back = load_image(path);
    REQUIRE(back.pixels.shape() == img.shape());
    CHECK(testing::max_abs_diff(back.pixels.data(), img.data()) <= 1.0 / 255.0 + 1e-12);
  }
}

TEST_CASE("pixel mapping endpoints") {
  CHECK(to_unit(0) == -1.0);
  CHECK(to_unit(255) == 1.0);
  CHECK(to_byte(-1.0) == 0);
  CHECK(to_byte(1.0) == 255);
  CHECK(to_byte(7.0) == 255);
  const fs::path path = scratch("black.png");
  save_image(Tensor(Shape{3, 4, 4}, -1.0), path);
  const ImageSample black = load_image(path);
  for (double v : black.pixels.data()) CHECK(v == -1.0);
}

TEST_CASE("load_image errors") {
  const fs::path odd = scratch("odd.ppm");
  {
    std::ofstream out(odd, std::ios::binary);
    out << "P6\n# comment\n31 32\n255\n" << std::string(31 * 32 * 3, '\0');
  }
  CHECK_THROWS_WITH_AS(load_image(odd), doctest::Contains("divisible"), ImageError);
  CHECK(load_image(odd, false).pixels.shape() == Shape{3, 32, 31});
  CHECK_THROWS_AS(load_image(scratch("missing.png")), ImageError);
  const fs::path junk = scratch("junk.png");
  std::ofstream(junk) << "not an image";
  CHECK_THROWS_AS(load_image(junk), ImageError);
  const fs::path txt = scratch("image.txt");
  std::ofstream(txt) << "x";
  CHECK_THROWS_WITH_AS(load_image(txt), doctest::Contains("unsupported"), ImageError);
  const fs::path truncated = scratch("short.ppm");
  std::ofstream(truncated, std::ios::binary) << "P6 4 4 255\n" << std::string(10, 'a');
  CHECK_THROWS_WITH_AS(load_image(truncated), doctest::Contains("truncated"), ImageError);
}

TEST_CASE("random_crop") {
  std::mt19937_64 rng(2);
  const ImageSample big{testing::random_tensor({3, 40, 48}, rng), 2, "x"};
  SUBCASE("full-size crop is the identity") {
    const ImageSample same{testing::random_tensor({3, 32, 32}, rng), 1, "y"};
    const ImageSample c = random_crop(same, 32, rng);
    CHECK(testing::max_abs_diff(c.pixels.data(), same.pixels.data()) == 0.0);
  }
  SUBCASE("shape and seed determinism") {
    std::mt19937_64 r1(7), r2(7);
    const ImageSample a = random_crop(big, 16, r1), b = random_crop(big, 16, r2);
    CHECK(a.pixels.shape() == Shape{3, 16, 16});
    CHECK(a.class_id == 2);
    CHECK(testing::max_abs_diff(a.pixels.data(), b.pixels.data()) == 0.0);
  }
  SUBCASE("small images are upscaled first") {
    const ImageSample small{testing::random_tensor({3, 8, 12}, rng), 0, "z"};
    CHECK(random_crop(small, 16, rng).pixels.shape() == Shape{3, 16, 16});
  }
}

TEST_CASE("resize_bilinear keeps constants and interpolates") {
  const Tensor c(Shape{3, 5, 7}, 0.25);
  const Tensor resized = resize_bilinear(c, 9, 4);
  for (double v : resized.data()) CHECK(v == doctest::Approx(0.25));
  const Tensor ramp(Shape{1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor up = resize_bilinear(ramp, 1, 4);
  CHECK(up.data()[0] == 0.0);
  CHECK(up.data()[1] == doctest::Approx(0.25));
  CHECK(up.data()[2] == doctest::Approx(0.75));
  CHECK(up.data()[3] == 1.0);
}

TEST_CASE("synthetic classes") {
  const DatasetSpec spec = DatasetSpec::synthetic_default();
  REQUIRE(spec.styles.size() == 3);
  SUBCASE("same parameters and seed give the same image") {
    for (const auto& cls : spec.styles) {
      std::mt19937_64 r1(3), r2(3);
      const ImageSample a = synth_style(cls, 32, r1), b = synth_style(cls, 32, r2);
      CHECK(testing::max_abs_diff(a.pixels.data(), b.pixels.data()) == 0.0);
    }
  }
  SUBCASE("values stay in range") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20; ++i) {
      std::vector<SyntheticClass> all = spec.styles;
      all.push_back(spec.content);
      for (const auto& cls : all) {
        const ImageSample s = synth_style(cls, 32, rng);
        for (double v : s.pixels.data()) REQUIRE((v >= -1.0 && v <= 1.0));
      }
    }
  }
  SUBCASE("class mean channel statistics differ by at least 0.2") {
    std::mt19937_64 rng(5);
    std::vector<std::array<double, 3>> means;
    for (const auto& cls : spec.styles) {
      std::array<double, 3> m{};
      for (int i = 0; i < 100; ++i) {
        const auto s = channel_means(synth_style(cls, 32, rng).pixels);
        for (int c = 0; c < 3; ++c) m[c] += s[c] / 100.0;
      }
      means.push_back(m);
    }
    for (std::size_t a = 0; a < means.size(); ++a)
      for (std::size_t b = a + 1; b < means.size(); ++b) {
        double gap = 0.0;
        for (int c = 0; c < 3; ++c) gap = std::max(gap, std::fabs(means[a][c] - means[b][c]));
        INFO(spec.styles[a].name << " vs " << spec.styles[b].name);
        CHECK(gap >= 0.2);
      }
  }
  SUBCASE("families parse by name") {
    CHECK(parse_family("blotch") == TextureFamily::blotch);
    CHECK_THROWS_AS(parse_family("plaid"), std::invalid_argument);
  }
}

TEST_CASE("sample_batch") {
  Dataset data(DatasetSpec::synthetic_default(3, 16));
  SUBCASE("class contract over 1000 draws") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 1000; ++i) {
      const StepBatch b = data.sample_batch(1, rng);
      REQUIRE(b.style_class >= 1);
      REQUIRE(b.style_class <= 3);
      REQUIRE(b.x_t.shape() == Shape{1, 3, 16, 16});
    }
  }
  SUBCASE("seed determinism") {
    std::mt19937_64 r1(8), r2(8);
    const StepBatch a = data.sample_batch(2, r1), b = data.sample_batch(2, r2);
    CHECK(a.style_class == b.style_class);
    CHECK(testing::max_abs_diff(a.x_t2.data(), b.x_t2.data()) == 0.0);
    CHECK(a.x_i.shape() == Shape{2, 3, 16, 16});
  }
  SUBCASE("one style class is always used") {
    Dataset single(DatasetSpec::synthetic_default(1, 16));
    std::mt19937_64 rng(9);
    for (int i = 0; i < 50; ++i) CHECK(single.sample_batch(1, rng).style_class == 1);
  }
  SUBCASE("style classes are drawn uniformly") {
    std::random_device rd;
    std::mt19937_64 rng(rd());
    Dataset tiny(DatasetSpec::synthetic_default(3, 4));
    std::array<double, 3> counts{};
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(tiny.sample_batch(1, rng).style_class - 1)] += 1;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - draws / 3.0) * (c - draws / 3.0) / (draws / 3.0);
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(2), chi2));
    CHECK(p > 0.01);
  }
}

TEST_CASE("folders mode") {
  std::mt19937_64 rng(10);
  const fs::path root = scratch("folders");
  fs::remove_all(root);
  for (const char* d : {"content", "a", "b"}) {
    fs::create_directories(root / d);
    for (int i = 0; i < 2; ++i) save_image(testing::random_tensor({3, 20, 24}, rng), root / d / ("img" + std::to_string(i) + ".png"));
  }
  DatasetSpec spec;
  spec.mode = DatasetSpec::Mode::folders;
  spec.content_dir = (root / "content").string();
  spec.style_dirs = {(root / "a").string(), (root / "b").string()};
  spec.crop_size = 16;
  Dataset data(spec);
  const StepBatch b = data.sample_batch(2, rng);
  CHECK(b.x_i.shape() == Shape{2, 3, 16, 16});
  CHECK(data.num_styles() == 2);
  spec.style_dirs.push_back((root / "missing").string());
  CHECK_THROWS_AS(Dataset{spec}, ImageError);
}
