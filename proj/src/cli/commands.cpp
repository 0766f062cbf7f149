#include "peerstyle/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "peerstyle/config.hpp"
#include "peerstyle/data.hpp"
#include "peerstyle/gradcheck_suite.hpp"
#include "peerstyle/ops.hpp"
#include "peerstyle/training.hpp"

#ifndef PEERSTYLE_VERSION
#define PEERSTYLE_VERSION "unknown"
#endif

namespace peerstyle::cli {

namespace fs = std::filesystem;

namespace {

// Error with an exit code attached, thrown by the command bodies.
struct Failure {
  int code;
  std::string message;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
};

TrainConfig resolve_config(const Common& common) {
  TrainConfig c;
  if (!common.config_path.empty()) c = load_train_config(common.config_path);
  if (common.seed) c.seed = *common.seed;
  return c;
}

Tensor batch_of_one(const Tensor& image) {
  return reshape(image, {1, image.size(0), image.size(1), image.size(2)});
}

LoadedModel open_checkpoint(const std::string& path, const Common& common) {
  LoadedModel m = load_model(path);
  if (!common.config_path.empty()) {
    const TrainConfig expected = load_train_config(common.config_path);
    if (!(expected.net == m.config.net)) {
      throw CheckpointError(CheckpointError::Kind::config_mismatch,
                            path + ": network configuration differs from " + common.config_path);
    }
  }
  return m;
}

std::mt19937_64 command_rng(const Common& common, std::uint64_t fallback) {
  return RngStreams(common.seed.value_or(fallback)).eval;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_manifest(const fs::path& path, const TrainConfig& config, const std::string& resumed_from,
                    std::size_t start_step, const std::vector<std::string>& args) {
  std::ofstream out(path, std::ios::trunc);
  out << "# Resolved run description; `config` alone reproduces the run.\n";
  out << "code_version: " << code_version() << '\n';
  out << "written_at: " << timestamp() << '\n';
  out << "seed: " << config.seed << '\n';
  out << "resumed_from: \"" << resumed_from << "\"\n";
  out << "start_step: " << start_step << '\n';
  out << "command_line: [";
  for (std::size_t i = 0; i < args.size(); ++i) out << (i ? ", " : "") << '"' << args[i] << '"';
  out << "]\n";
  out << "config:\n";
  std::istringstream yaml(to_yaml(config));
  for (std::string line; std::getline(yaml, line);) out << "  " << line << '\n';
  if (!out) throw Failure{kRuntime, path.string() + ": cannot write manifest"};
}

std::string log_header() { return "step,epoch,lr," + csv_header() + ",grand_total"; }

int train(const Common& common, const std::string& out_dir, const std::string& resume, std::optional<std::size_t> steps,
          const std::vector<std::string>& args, std::ostream& out) {
  TrainConfig config = resolve_config(common);
  if (steps) config.max_steps = *steps;
  config.validate();

  Trainer trainer(config);
  if (!resume.empty()) trainer.load_checkpoint(resume);
  const std::size_t start = trainer.step_index();
  const std::size_t total = config.total_steps();

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_manifest(dir / "manifest.yaml", config, resume, start, args);

  const fs::path log_path = dir / "log.csv";
  const bool append = start > 0 && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw Failure{kRuntime, log_path.string() + ": cannot open log"};
  if (!append) log << log_header() << '\n';

  const auto t0 = std::chrono::steady_clock::now();
  while (trainer.step_index() < total) {
    const std::size_t epoch = trainer.epoch();
    const double lr = trainer.current_learning_rate();
    const LossReport r = trainer.step();
    const std::size_t step = trainer.step_index();
    char prefix[96];
    std::snprintf(prefix, sizeof prefix, "%zu,%zu,%.17g,", step, epoch, lr);
    char grand[32];
    std::snprintf(grand, sizeof grand, ",%.17g", r.grand_total());
    log << prefix << csv_row(r) << grand << '\n';

    if (step % config.log_every == 0 || step == total) {
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char line[192];
      std::snprintf(line, sizeof line, "step %zu/%zu epoch %zu lr %.3g aux %.4g (idt %.4g) main %.4g disc %.4g [%.1fs]",
                    step, total, epoch, lr, r.aux_total, r.aux_idt, r.main_total, r.disc_total, sec);
      out << line << std::endl;
    }
    if (config.checkpoint_every != 0 && step % config.checkpoint_every == 0 && step != total) {
      trainer.save_checkpoint(dir / "checkpoints" / ("step_" + std::to_string(step) + ".ckpt"));
    }
  }
  log.flush();
  trainer.save_checkpoint(dir / "checkpoint.ckpt");
  out << "wrote " << (dir / "checkpoint.ckpt").string() << std::endl;
  return kOk;
}

int stylize_cmd(const Common& common, const std::string& ckpt, const std::string& content, const std::string& style,
                const std::string& out_path, std::ostream& out) {
  const LoadedModel m = open_checkpoint(ckpt, common);
  auto rng = command_rng(common, m.config.seed);
  const Tensor c = batch_of_one(load_image(content).pixels);
  const Tensor s = batch_of_one(load_image(style).pixels);
  save_image(stylize(m.model, c, s, rng), out_path);
  out << "wrote " << out_path << std::endl;
  return kOk;
}

int reconstruct_cmd(const Common& common, const std::string& ckpt, const std::string& image, const std::string& out_path,
                    bool zero_content, bool zero_style, std::ostream& out) {
  const LoadedModel m = open_checkpoint(ckpt, common);
  auto rng = command_rng(common, m.config.seed);
  const ZeroPart zero = zero_content && zero_style ? ZeroPart::both
                        : zero_content             ? ZeroPart::content
                        : zero_style               ? ZeroPart::style
                                                   : ZeroPart::none;
  save_image(reconstruct(m.model, batch_of_one(load_image(image).pixels), zero, rng), out_path);
  out << "wrote " << out_path << std::endl;
  return kOk;
}

int gradcheck_cmd(const Common& common, const std::vector<std::string>& scopes, std::ostream& out) {
  std::vector<GradScope> parsed;
  for (const auto& s : scopes) {
    try {
      parsed.push_back(parse_scope(s));
    } catch (const std::invalid_argument& e) {
      throw Failure{kUsage, e.what()};
    }
  }
  bool ok = true;
  for (GradScope scope : parsed) {
    out << "[" << scope_name(scope) << "]\n";
    const SuiteReport r = run_gradcheck_suite(gradcheck_items(scope, common.seed.value_or(1)), out);
    ok = ok && r.passed();
  }
  out << (ok ? "all gradient checks passed" : "gradient check FAILED") << std::endl;
  return ok ? kOk : kRuntime;
}

int eval_cmd(const Common& common, const std::string& ckpt, std::size_t per_class, std::ostream& out) {
  TrainConfig config;
  Model untrained;
  const Model* model = nullptr;
  std::optional<LoadedModel> loaded;
  if (!ckpt.empty()) {
    loaded = open_checkpoint(ckpt, common);
    config = loaded->config;
    if (!common.config_path.empty()) config.data = load_train_config(common.config_path).data;
    model = &loaded->model;
  } else {
    config = resolve_config(common);
    RngStreams streams(config.seed);
    untrained = Model(config.net, streams.init);
    model = &untrained;
  }
  if (per_class == 0) per_class = config.eval_samples_per_class;
  const Dataset data(config.data);
  auto rng = command_rng(common, config.seed);
  auto rng2 = rng;
  const SeparationStats all = eval_style_separation(*model, data, per_class, rng);
  const SeparationStats styles = eval_style_separation(*model, data, per_class, rng2, true);
  char line[160];
  std::snprintf(line, sizeof line, "all classes:  intra %.6g inter %.6g ratio %.4f\n", all.intra, all.inter, all.ratio());
  out << line;
  std::snprintf(line, sizeof line, "styles only:  intra %.6g inter %.6g ratio %.4f\n", styles.intra, styles.inter,
                styles.ratio());
  out << line << std::flush;
  return kOk;
}

}  // namespace

std::string code_version() { return PEERSTYLE_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage peer-regularized style transfer at desk scale", "peerstyle"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "YAML training configuration");
    sub->add_option("--seed", common.seed, "Master seed (overrides the config)");
  };

  std::string out_dir, resume, ckpt, content, style, image, out_path;
  std::optional<std::size_t> steps;
  bool zero_content = false, zero_style = false;
  std::vector<std::string> scopes;
  std::size_t per_class = 0;

  auto* train_cmd = app.add_subcommand("train", "Run the alternating training loop");
  add_common(train_cmd);
  train_cmd->add_option("--out", out_dir, "Output directory (log, manifest, checkpoints)")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");
  train_cmd->add_option("--steps", steps, "Stop after this many steps in total");

  auto* stylize_sub = app.add_subcommand("stylize", "Render a content image in the style of another");
  add_common(stylize_sub);
  stylize_sub->add_option("--checkpoint", ckpt)->required();
  stylize_sub->add_option("--content", content)->required();
  stylize_sub->add_option("--style", style)->required();
  stylize_sub->add_option("--out", out_path)->required();

  auto* recon_sub = app.add_subcommand("reconstruct", "Self-transfer, optionally zeroing part of the code");
  add_common(recon_sub);
  recon_sub->add_option("--checkpoint", ckpt)->required();
  recon_sub->add_option("--image", image)->required();
  recon_sub->add_option("--out", out_path)->required();
  recon_sub->add_flag("--zero-content", zero_content, "Zero the content part before decoding");
  recon_sub->add_flag("--zero-style", zero_style, "Zero the style part before decoding");

  auto* grad_sub = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(grad_sub);
  grad_sub->add_option("--scope", scopes, "op, network or loss (repeatable)")->required();

  auto* eval_sub = app.add_subcommand("eval-separation", "Intra/inter-class style code distances");
  add_common(eval_sub);
  eval_sub->add_option("--checkpoint", ckpt, "Trained checkpoint (omit for an untrained network)");
  eval_sub->add_option("--per-class", per_class, "Samples per class");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (*train_cmd) return train(common, out_dir, resume, steps, args, out);
    if (*stylize_sub) return stylize_cmd(common, ckpt, content, style, out_path, out);
    if (*recon_sub) return reconstruct_cmd(common, ckpt, image, out_path, zero_content, zero_style, out);
    if (*grad_sub) return gradcheck_cmd(common, scopes, out);
    if (*eval_sub) return eval_cmd(common, ckpt, per_class, out);
  } catch (const Failure& f) {
    err << (f.code == kUsage ? "usage error: " : "error: ") << f.message << '\n';
    return f.code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return e.kind() == CheckpointError::Kind::config_mismatch ? kConfig : kRuntime;
  } catch (const ImageError& e) {
    err << "image error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace peerstyle::cli
