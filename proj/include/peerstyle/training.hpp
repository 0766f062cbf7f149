#pragma once

// Alternating optimization of the auxiliary decoder path, the main decoder
// path and the discriminator, with seeding, schedule and checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

#include "peerstyle/adam.hpp"
#include "peerstyle/data.hpp"
#include "peerstyle/losses.hpp"
#include "peerstyle/model.hpp"

namespace peerstyle {

struct TrainConfig {
  double learning_rate = 4e-4;
  std::size_t batch_size = 2;
  std::size_t epochs = 200;
  std::size_t decay_start_epoch = 50;
  double lambda_idt = 25.0;
  double margin_mu = 1.0;
  std::size_t photos_per_epoch = 6144;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Stop after this many steps in total (0: run every epoch).
  std::size_t max_steps = 0;
  std::size_t log_every = 10;
  /// Save every N steps in addition to the end of the run (0: end only).
  std::size_t checkpoint_every = 0;
  std::size_t eval_samples_per_class = 8;
  NetConfig net = NetConfig::desk();
  DatasetSpec data = DatasetSpec::synthetic_default();

  /// Throws std::invalid_argument on the first violated constraint.
  void validate() const;
  std::size_t steps_per_epoch() const;
  std::size_t total_steps() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Base rate before `decay_start_epoch`, then linear to zero at `epochs`.
double lr_schedule(double epoch, const TrainConfig& config);

/// Independent generators derived from one master seed.
struct RngStreams {
  explicit RngStreams(std::uint64_t seed = 0);
  std::mt19937_64 init, data, dropout, noise, eval;

  std::string serialize() const;
  void deserialize(const std::string& state);
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  /// One full step on a freshly sampled batch.
  LossReport step();
  /// Auxiliary, main and discriminator sub-steps in that order.
  /// Throws NumericError naming the first non-finite loss component.
  LossReport step(const StepBatch& batch);

  // Sub-steps, exposed for the freeze contract. Each fills its part of `report`.
  void aux_step(const StepBatch& batch, LossReport& report);
  /// Returns the detached stylized batch for the discriminator step.
  Tensor main_step(const StepBatch& batch, LossReport& report);
  void disc_step(const StepBatch& batch, const Tensor& fake, LossReport& report);

  /// Completed steps.
  std::size_t step_index() const { return step_; }
  std::size_t epoch() const { return step_ / config_.steps_per_epoch(); }
  double current_learning_rate() const;

  const TrainConfig& config() const { return config_; }
  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const Dataset& dataset() const { return dataset_; }
  RngStreams& rng() { return rng_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores parameters, optimizer moments, step counter and RNG states.
  /// The checkpoint's configuration must equal this trainer's except for
  /// max_steps, log_every and checkpoint_every.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  void apply_schedule();
  void check_finite(const LossReport& report) const;

  TrainConfig config_;
  Dataset dataset_;
  RngStreams rng_;
  Model model_;
  Adam aux_opt_;
  Adam main_opt_;
  Adam disc_opt_;
  std::size_t step_ = 0;
};

struct SeparationStats {
  double intra = 0.0;
  double inter = 0.0;
  double ratio() const { return inter / intra; }
};

/// Mean style distance between eval-mode codes of same-class pairs and of
/// different-class pairs, over `per_class` fresh samples of every class
/// (content and styles). With `styles_only` the content class is left out.
SeparationStats eval_style_separation(const Model& model, const Dataset& data, std::size_t per_class,
                                      std::mt19937_64& rng, bool styles_only = false);

/// Eval-mode stylization: encode both, recombine, decode with the main decoder.
Tensor stylize(const Model& model, const Tensor& content, const Tensor& style, std::mt19937_64& rng);

enum class ZeroPart { none, content, style, both };
/// Self-transfer of `image`, optionally zeroing part of the recombined code
/// before decoding.
Tensor reconstruct(const Model& model, const Tensor& image, ZeroPart zero, std::mt19937_64& rng);

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, corrupt, version, config_mismatch };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model-only view of a checkpoint, for inference.
struct LoadedModel {
  TrainConfig config;
  Model model;
  std::size_t step = 0;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace peerstyle
