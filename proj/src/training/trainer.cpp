#include <algorithm>
#include <cmath>
#include <sstream>

#include "peerstyle/ops.hpp"
#include "peerstyle/training.hpp"

namespace peerstyle {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

Tensor cat(const std::vector<Tensor>& parts) { return parts.size() == 1 ? parts[0] : concat(parts, 0); }

LatentCode cat(const std::vector<LatentCode>& codes) {
  std::vector<Tensor> c, s, g;
  for (const auto& z : codes) {
    c.push_back(z.content);
    s.push_back(z.style_local);
    g.push_back(z.style_global);
  }
  return {cat(c), cat(s), cat(g)};
}

// Splits along the batch axis into `parts` equal chunks.
std::vector<Tensor> split(const Tensor& t, std::size_t parts) {
  const std::size_t n = t.size(0) / parts;
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < parts; ++i) out.push_back(parts == 1 ? t : slice(t, 0, i * n, (i + 1) * n));
  return out;
}

std::vector<LatentCode> split(const LatentCode& z, std::size_t parts) {
  const auto c = split(z.content, parts), s = split(z.style_local, parts), g = split(z.style_global, parts);
  std::vector<LatentCode> out;
  for (std::size_t i = 0; i < parts; ++i) out.push_back({c[i], s[i], g[i]});
  return out;
}

void freeze_all_but(const Model& m, std::initializer_list<ParamGroup> trainable) {
  for (ParamGroup g : kAllGroups) {
    m.set_trainable(g, std::find(trainable.begin(), trainable.end(), g) != trainable.end());
  }
}

void thaw_all(const Model& m) {
  for (ParamGroup g : kAllGroups) m.set_trainable(g, true);
}

AdamConfig adam_config(const TrainConfig& c) {
  return {c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_epsilon};
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (epochs == 0) fail("epochs must be positive");
  if (decay_start_epoch > epochs) fail("decay_start_epoch must not exceed epochs");
  if (!(lambda_idt > 0.0)) fail("lambda_idt must be positive");
  if (!(margin_mu > 0.0)) fail("margin_mu must be positive");
  if (photos_per_epoch == 0) fail("photos_per_epoch must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be positive");
  if (log_every == 0) fail("log_every must be positive");
  if (eval_samples_per_class < 2) fail("eval_samples_per_class must be at least 2");
  net.validate();
  data.validate();
}

std::size_t TrainConfig::steps_per_epoch() const { return (photos_per_epoch + batch_size - 1) / batch_size; }

std::size_t TrainConfig::total_steps() const {
  const std::size_t all = epochs * steps_per_epoch();
  return max_steps == 0 ? all : std::min(all, max_steps);
}

double lr_schedule(double epoch, const TrainConfig& c) {
  const double start = static_cast<double>(c.decay_start_epoch), end = static_cast<double>(c.epochs);
  if (epoch < start) return c.learning_rate;
  if (epoch >= end) return 0.0;
  return c.learning_rate * (end - epoch) / (end - start);
}

RngStreams::RngStreams(std::uint64_t seed)
    : init(stream(seed, 1)), data(stream(seed, 2)), dropout(stream(seed, 3)), noise(stream(seed, 4)),
      eval(stream(seed, 5)) {}

std::string RngStreams::serialize() const {
  std::ostringstream out;
  out << init << '\n' << data << '\n' << dropout << '\n' << noise << '\n' << eval;
  return out.str();
}

void RngStreams::deserialize(const std::string& state) {
  std::istringstream in(state);
  in >> init >> data >> dropout >> noise >> eval;
  if (!in) throw std::invalid_argument("rng state: malformed");
}

Trainer::Trainer(TrainConfig config)
    : config_((config.validate(), std::move(config))),
      dataset_(config_.data),
      rng_(config_.seed),
      model_(config_.net, rng_.init),
      aux_opt_(model_.parameters({ParamGroup::encoder, ParamGroup::aux_decoder}), adam_config(config_)),
      main_opt_(model_.parameters({ParamGroup::main_decoder, ParamGroup::tpfr}), adam_config(config_)),
      disc_opt_(model_.parameters(ParamGroup::discriminator), adam_config(config_)) {}

double Trainer::current_learning_rate() const { return lr_schedule(static_cast<double>(epoch()), config_); }

void Trainer::apply_schedule() {
  const double lr = current_learning_rate();
  aux_opt_.set_learning_rate(lr);
  main_opt_.set_learning_rate(lr);
  disc_opt_.set_learning_rate(lr);
}

void Trainer::check_finite(const LossReport& report) const {
  if (auto bad = report.first_non_finite()) {
    throw NumericError("non-finite loss component '" + *bad + "' at step " + std::to_string(step_ + 1));
  }
}

void Trainer::aux_step(const StepBatch& b, LossReport& r) {
  const Model& m = model_;
  freeze_all_but(m, {ParamGroup::encoder, ParamGroup::aux_decoder});
  const auto z = split(m.encoder.forward(cat({b.x_i, b.x_i2, b.x_t, b.x_t2})), 4);
  const LatentCode &zi = z[0], &zi2 = z[1], &zt = z[2], &zt2 = z[3];

  // Content cycle through the frozen main path: T(z_i, z_t) and T(z_i, z_i) in one batch.
  const LatentCode mixed = m.tpfr.forward(cat({zi, zi}), cat({zt, zi}), rng_.dropout, true);
  const auto reencoded = split(m.encoder.forward(m.main_decoder.forward(mixed)), 2);
  const Tensor z_cont = content_cycle_loss(zi, reencoded[0], reencoded[1]);

  const StyleMetric metric = style_metric_loss(zi, zi2, zt, zt2, config_.margin_mu);

  const auto recon = split(m.aux_decoder.forward(cat({zi, zt})), 2);
  const Tensor idt = identity_loss(recon[0], b.x_i, recon[1], b.x_t);
  const auto cycled = split(m.encoder.forward(cat(recon)), 2);
  const Tensor z_cycle = latent_cycle_loss(zi, cycled[0], zt, cycled[1]);

  const Tensor total = z_cont + metric.total + z_cycle + idt * config_.lambda_idt;
  r.z_cont = z_cont.item();
  r.z_style_pos = metric.positive.item();
  r.z_style_neg = metric.negative.item();
  r.z_style = metric.total.item();
  r.aux_idt = idt.item();
  r.aux_z_cycle = z_cycle.item();
  r.aux_total = total.item();
  check_finite(r);
  backward(total);
  aux_opt_.step();
}

Tensor Trainer::main_step(const StepBatch& b, LossReport& r) {
  const Model& m = model_;
  freeze_all_but(m, {ParamGroup::main_decoder, ParamGroup::tpfr});
  std::vector<LatentCode> z;
  {
    NoGradGuard guard;
    z = split(m.encoder.forward(cat({b.x_i, b.x_t})), 2);
  }
  const LatentCode &zi = z[0], &zt = z[1];
  // T(z_i, z_t), T(z_i, z_i), T(z_t, z_t)
  const LatentCode mixed = m.tpfr.forward(cat({zi, zi, zt}), cat({zt, zi, zt}), rng_.dropout, true);
  const auto images = split(m.main_decoder.forward(mixed), 3);
  const Tensor& fake = images[0];

  const Tensor z_transf = transfer_cycle_loss(zi, zt, m.encoder.forward(fake));
  const Tensor idt = identity_loss(images[1], b.x_i, images[2], b.x_t);
  const auto scores =
      split(m.discriminator.forward(cat({b.x_t, fake}), cat({b.x_t2, b.x_t}), rng_.noise, true), 2);
  const Tensor gen = ragan_gen_loss(scores[0], scores[1]);

  const Tensor total = gen + z_transf + idt * config_.lambda_idt;
  r.gen = gen.item();
  r.z_transf = z_transf.item();
  r.main_idt = idt.item();
  r.main_total = total.item();
  check_finite(r);
  backward(total);
  main_opt_.step();
  return fake.detach();
}

void Trainer::disc_step(const StepBatch& b, const Tensor& fake, LossReport& r) {
  const Model& m = model_;
  freeze_all_but(m, {ParamGroup::discriminator});
  const auto scores =
      split(m.discriminator.forward(cat({b.x_t, fake}), cat({b.x_t2, b.x_t}), rng_.noise, true), 2);
  const Tensor loss = ragan_disc_loss(scores[0], scores[1]);
  r.disc_total = loss.item();
  check_finite(r);
  backward(loss);
  disc_opt_.step();
}

LossReport Trainer::step(const StepBatch& batch) {
  apply_schedule();
  LossReport r;
  try {
    aux_step(batch, r);
    const Tensor fake = main_step(batch, r);
    disc_step(batch, fake, r);
  } catch (...) {
    thaw_all(model_);
    throw;
  }
  thaw_all(model_);
  ++step_;
  return r;
}

LossReport Trainer::step() { return step(dataset_.sample_batch(config_.batch_size, rng_.data)); }

SeparationStats eval_style_separation(const Model& model, const Dataset& data, std::size_t per_class,
                                      std::mt19937_64& rng, bool styles_only) {
  if (per_class < 2) throw std::invalid_argument("eval_style_separation: need at least 2 samples per class");
  NoGradGuard guard;
  std::vector<LatentCode> codes;
  std::vector<int> labels;
  for (int c = styles_only ? 1 : 0; c <= static_cast<int>(data.num_styles()); ++c) {
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < per_class; ++i) images.push_back(data.sample_class(c, rng).pixels);
    const auto z = split(model.encoder.forward(stack_images(images)), per_class);
    codes.insert(codes.end(), z.begin(), z.end());
    labels.insert(labels.end(), per_class, c);
  }
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < codes.size(); ++a)
    for (std::size_t b = a + 1; b < codes.size(); ++b) {
      const double d = style_distance(codes[a], codes[b]).item();
      if (labels[a] == labels[b]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  SeparationStats s;
  s.intra = intra / static_cast<double>(n_intra);
  s.inter = n_inter ? inter / static_cast<double>(n_inter) : 0.0;
  return s;
}

Tensor stylize(const Model& model, const Tensor& content, const Tensor& style, std::mt19937_64& rng) {
  NoGradGuard guard;
  const LatentCode zc = model.encoder.forward(content);
  const LatentCode zs = model.encoder.forward(style);
  return model.main_decoder.forward(model.tpfr.forward(zc, zs, rng, false));
}

Tensor reconstruct(const Model& model, const Tensor& image, ZeroPart zero, std::mt19937_64& rng) {
  NoGradGuard guard;
  const LatentCode z = model.encoder.forward(image);
  LatentCode out = model.tpfr.forward(z, z, rng, false);
  if (zero == ZeroPart::content || zero == ZeroPart::both) out.content = Tensor(out.content.shape(), 0.0);
  if (zero == ZeroPart::style || zero == ZeroPart::both) {
    out.style_local = Tensor(out.style_local.shape(), 0.0);
    out.style_global = Tensor(out.style_global.shape(), 0.0);
  }
  return model.main_decoder.forward(out);
}

}  // namespace peerstyle
