#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "peerstyle/cli.hpp"
#include "peerstyle/config.hpp"
#include "peerstyle/data.hpp"
#include "peerstyle/gradcheck_suite.hpp"
#include "peerstyle/ops.hpp"

using namespace peerstyle;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "peerstyle_test_cli";
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const std::string& name, const std::string& extra = "") {
  const fs::path p = scratch() / name;
  std::ofstream(p) << "photos_per_epoch: 8\nepochs: 4\ndecay_start_epoch: 2\nlog_every: 5\n"
                      "data:\n  crop_size: 16\n"
                   << extra;
  return p;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string last_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line, last;
  while (std::getline(in, line)) last = line;
  return last;
}

fs::path save_test_image(const std::string& name, std::size_t size, int cls) {
  Dataset data(DatasetSpec::synthetic_default(3, size));
  std::mt19937_64 rng(5);
  const fs::path p = scratch() / name;
  save_image(data.sample_class(cls, rng).pixels, p);
  return p;
}

}  // namespace

TEST_CASE("train writes a log row per step, a manifest and a checkpoint") {
  const fs::path out = scratch() / "run10";
  fs::remove_all(out);
  const fs::path cfg = write_config("small.yaml");
  const Run r = cli_run({"train", "--config", cfg.string(), "--seed", "3", "--steps", "10", "--out", out.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(line_count(out / "log.csv") == 11);
  CHECK(last_line(out / "log.csv").rfind("10,2,", 0) == 0);
  CHECK(fs::exists(out / "checkpoint.ckpt"));
  CHECK(r.out.find("step 5/10") != std::string::npos);

  // The manifest's config block reproduces the resolved configuration.
  std::ifstream in(out / "manifest.yaml");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("seed: 3") != std::string::npos);
  const std::size_t at = text.find("config:\n");
  REQUIRE(at != std::string::npos);
  std::string block;
  std::istringstream lines(text.substr(at + 8));
  for (std::string line; std::getline(lines, line);) block += line.substr(2) + "\n";
  TrainConfig expected = load_train_config(cfg);
  expected.seed = 3;
  expected.max_steps = 10;
  CHECK(parse_train_config(block) == expected);
}

TEST_CASE("resume continues step numbering and matches an uninterrupted run") {
  const fs::path cfg = write_config("resume.yaml");
  const fs::path full = scratch() / "full", part = scratch() / "part";
  fs::remove_all(full);
  fs::remove_all(part);
  REQUIRE(cli_run({"train", "--config", cfg.string(), "--steps", "6", "--out", full.string()}).code == 0);
  REQUIRE(cli_run({"train", "--config", cfg.string(), "--steps", "3", "--out", part.string()}).code == 0);
  const Run r = cli_run({"train", "--config", cfg.string(), "--steps", "6", "--out", part.string(), "--resume",
                         (part / "checkpoint.ckpt").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(line_count(part / "log.csv") == 7);
  CHECK(last_line(part / "log.csv") == last_line(full / "log.csv"));
}

TEST_CASE("configuration errors exit with code 2") {
  const fs::path bad = write_config("bad.yaml", "net:\n  k_neighbours: 3\n");
  const Run r = cli_run({"train", "--config", bad.string(), "--out", (scratch() / "bad").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("k_neighbours") != std::string::npos);
  const fs::path invalid = write_config("invalid.yaml", "batch_size: 0\n");
  CHECK(cli_run({"train", "--config", invalid.string(), "--out", (scratch() / "bad").string()}).code == 2);
  CHECK(cli_run({"train", "--config", (scratch() / "none.yaml").string(), "--out", "x"}).code == 2);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(cli_run({}).code == 1);
  CHECK(cli_run({"paint"}).code == 1);
  CHECK(cli_run({"train"}).code == 1);
  CHECK(cli_run({"train", "--out", "x", "--steps", "many"}).code == 1);
  const Run r = cli_run({"gradcheck", "--scope", "everything"});
  CHECK(r.code == 1);
  CHECK(r.err.find("everything") != std::string::npos);
  CHECK(cli_run({"--help"}).code == 0);
}

TEST_CASE("stylize and reconstruct from one checkpoint") {
  const fs::path cfg = write_config("infer.yaml");
  const fs::path run = scratch() / "infer";
  fs::remove_all(run);
  REQUIRE(cli_run({"train", "--config", cfg.string(), "--steps", "2", "--out", run.string()}).code == 0);
  const std::string ckpt = (run / "checkpoint.ckpt").string();
  const fs::path c32 = save_test_image("c32.png", 32, 0), s32 = save_test_image("s32.png", 32, 2),
                 c64 = save_test_image("c64.png", 64, 0);

  for (const fs::path& content : {c32, c64}) {
    const fs::path out = scratch() / ("styled_" + content.filename().string());
    const Run r = cli_run({"stylize", "--checkpoint", ckpt, "--content", content.string(), "--style", s32.string(),
                           "--out", out.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(load_image(out).pixels.shape() == load_image(content).pixels.shape());
  }

  const fs::path both = scratch() / "both.png";
  REQUIRE(cli_run({"reconstruct", "--checkpoint", ckpt, "--image", c32.string(), "--out", both.string(),
                   "--zero-content", "--zero-style"})
              .code == 0);
  CHECK(load_image(both).pixels.shape() == Shape{3, 32, 32});

  const fs::path plain = scratch() / "plain.png", styled = scratch() / "self.png";
  REQUIRE(cli_run({"reconstruct", "--checkpoint", ckpt, "--image", c32.string(), "--out", plain.string()}).code == 0);
  REQUIRE(cli_run({"stylize", "--checkpoint", ckpt, "--content", c32.string(), "--style", c32.string(), "--out",
                   styled.string()})
              .code == 0);
  CHECK(load_image(plain).pixels.at({1, 7, 9}) == load_image(styled).pixels.at({1, 7, 9}));

  const fs::path other = write_config("other.yaml", "net:\n  base_width: 8\n");
  const Run mismatch = cli_run({"stylize", "--config", other.string(), "--checkpoint", ckpt, "--content", c32.string(),
                                "--style", s32.string(), "--out", (scratch() / "m.png").string()});
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("differs") != std::string::npos);

  const Run missing = cli_run({"stylize", "--checkpoint", (scratch() / "nope.ckpt").string(), "--content",
                               c32.string(), "--style", s32.string(), "--out", (scratch() / "m.png").string()});
  CHECK(missing.code == 3);

  const fs::path odd = scratch() / "odd.ppm";
  std::ofstream(odd, std::ios::binary) << "P6\n30 32\n255\n" << std::string(30 * 32 * 3, '\x40');
  CHECK(cli_run({"reconstruct", "--checkpoint", ckpt, "--image", odd.string(), "--out", (scratch() / "o.png").string()})
            .code == 3);
}

TEST_CASE("eval-separation reports both views") {
  const fs::path cfg = write_config("eval.yaml");
  const Run r = cli_run({"eval-separation", "--config", cfg.string(), "--per-class", "2"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("all classes:") != std::string::npos);
  CHECK(r.out.find("styles only:") != std::string::npos);
}

TEST_CASE("gradcheck command passes every scope") {
  const Run r = cli_run({"gradcheck", "--scope", "op", "--scope", "network", "--scope", "loss"});
  INFO(r.out);
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("a deliberately broken backward fails the suite") {
  // y = x^3 whose backward claims 2x (the derivative of x^2).
  Tensor x(Shape{4}, std::vector<double>{0.3, -0.7, 1.1, 0.5});
  auto broken_cube = [](const Tensor& in) {
    std::vector<double> out;
    for (double v : in.data()) out.push_back(v * v * v);
    return detail::make_result(
        in.shape(), std::move(out), {in},
        [](detail::Node& self) {
          double* g = detail::input_grad(self, 0);
          const auto& xs = self.parents[0]->data;
          for (std::size_t i = 0; i < xs.size(); ++i) g[i] += self.grad[i] * 2.0 * xs[i];
        },
        "broken_cube");
  };
  std::vector<GradCheckItem> items = gradcheck_items(GradScope::op, 1);
  items.push_back({"broken_cube", [=](const GradCheckOptions& o) {
                     return check_gradients("broken_cube", [&] { return sum(broken_cube(x)); }, {{"x", x}}, o);
                   }});
  std::ostringstream log;
  const SuiteReport report = run_gradcheck_suite(items, log);
  CHECK_FALSE(report.passed());
  CHECK(log.str().find("FAIL broken_cube") != std::string::npos);
  CHECK(report.results.back().max_rel_error > 0.1);

  // The same defect is not hidden by the non-smooth classifier.
  GradCheckOptions lenient;
  lenient.skip_nonsmooth = true;
  const GradCheckResult r = check_gradients("broken_cube", [&] { return sum(broken_cube(x)); }, {{"x", x}}, lenient);
  CHECK_FALSE(r.passed);
  CHECK(r.nonsmooth == 0);
}

TEST_CASE("the non-smooth classifier flags a kink at the probe point") {
  Tensor x(Shape{3}, std::vector<double>{0.0, 2e-5, 0.8});
  GradCheckOptions strict, lenient;
  lenient.skip_nonsmooth = true;
  lenient.max_nonsmooth_fraction = 0.7;
  CHECK_FALSE(check_gradients("relu", [&] { return sum(relu(x)); }, {{"x", x}}, strict).passed);
  const GradCheckResult r = check_gradients("relu", [&] { return sum(relu(x)); }, {{"x", x}}, lenient);
  CHECK(r.passed);
  CHECK(r.nonsmooth == 2);
  lenient.max_nonsmooth_fraction = 0.5;
  CHECK_FALSE(check_gradients("relu", [&] { return sum(relu(x)); }, {{"x", x}}, lenient).passed);
}
