#include "peerstyle/losses.hpp"

#include <cmath>
#include <cstdio>

#include "peerstyle/ops.hpp"

namespace peerstyle {

Tensor smooth_l1(const Tensor& z1, const Tensor& z2) {
  if (z1.shape() != z2.shape()) {
    throw ShapeError("smooth_l1: shapes " + to_string(z1.shape()) + " and " + to_string(z2.shape()) + " differ");
  }
  if (z1.dim() != 4) throw ShapeError("smooth_l1: expected [B, N, H, W], got " + to_string(z1.shape()));
  const Tensor d = abs(z1 - z2);
  const Tensor m = min_with_scalar(d, 1.0);
  const Tensor rho = square(m) * 0.5 + (d - m);
  return div_scalar(sum(rho), static_cast<double>(z1.size(0) * z1.size(2) * z1.size(3)));
}

Tensor content_distance(const LatentCode& a, const LatentCode& b) { return smooth_l1(a.content, b.content); }

Tensor style_distance(const LatentCode& a, const LatentCode& b) {
  return smooth_l1(a.style_local, b.style_local) + smooth_l1(a.style_global, b.style_global);
}

Tensor latent_distance(const LatentCode& a, const LatentCode& b) {
  return content_distance(a, b) + style_distance(a, b);
}

Tensor content_cycle_loss(const LatentCode& z_i, const LatentCode& transferred, const LatentCode& self_transferred) {
  return content_distance(transferred, z_i) + content_distance(self_transferred, z_i);
}

StyleMetric style_metric_loss(const LatentCode& i1, const LatentCode& i2, const LatentCode& t1, const LatentCode& t2,
                              double margin) {
  StyleMetric m;
  m.positive = style_distance(i1, i2) + style_distance(t1, t2);
  m.negative = style_distance(i1, t1) + style_distance(i2, t2);
  m.total = m.positive + relu(add_scalar(neg(m.negative), margin));
  return m;
}

Tensor identity_loss(const Tensor& recon_i, const Tensor& x_i, const Tensor& recon_t, const Tensor& x_t) {
  return smooth_l1(recon_i, x_i) + smooth_l1(recon_t, x_t);
}

Tensor latent_cycle_loss(const LatentCode& z_i, const LatentCode& cycled_i, const LatentCode& z_t,
                         const LatentCode& cycled_t) {
  return latent_distance(cycled_i, z_i) + latent_distance(cycled_t, z_t);
}

Tensor transfer_cycle_loss(const LatentCode& z_i, const LatentCode& z_t, const LatentCode& transferred) {
  return content_distance(transferred, z_i) + style_distance(transferred, z_t);
}

namespace {

Tensor ragan(const Tensor& real, const Tensor& fake, double offset, const char* name) {
  if (real.numel() == 0 || fake.numel() == 0) throw ShapeError(std::string(name) + ": empty score map");
  const Tensor real_mean = mean(real);
  const Tensor fake_mean = mean(fake);
  return mean(square(add_scalar(real - fake_mean, offset))) + mean(square(add_scalar(real_mean - fake, offset)));
}

}  // namespace

Tensor ragan_gen_loss(const Tensor& real_scores, const Tensor& fake_scores) {
  return ragan(real_scores, fake_scores, 1.0, "ragan_gen_loss");
}

Tensor ragan_disc_loss(const Tensor& real_scores, const Tensor& fake_scores) {
  return ragan(real_scores, fake_scores, -1.0, "ragan_disc_loss");
}

std::array<double, 12> LossReport::values() const {
  return {z_cont, z_style_pos, z_style_neg, z_style, aux_idt,    aux_z_cycle,
          aux_total, gen,      z_transf,    main_idt, main_total, disc_total};
}

std::optional<std::string> LossReport::first_non_finite() const {
  const auto v = values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return std::string(field_names[i]);
  }
  return std::nullopt;
}

double aux_total(double z_cont, double z_style, double aux_z_cycle, double aux_idt, double lambda) {
  return z_cont + z_style + aux_z_cycle + lambda * aux_idt;
}

double main_total(double gen, double z_transf, double main_idt, double lambda) {
  return gen + z_transf + lambda * main_idt;
}

std::string csv_header() {
  std::string out;
  for (std::size_t i = 0; i < LossReport::field_names.size(); ++i) {
    if (i) out += ',';
    out += LossReport::field_names[i];
  }
  return out;
}

std::string csv_row(const LossReport& report) {
  std::string out;
  char buf[32];
  const auto v = report.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += ',';
    out += buf;
  }
  return out;
}

}  // namespace peerstyle
