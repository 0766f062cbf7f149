#pragma once

// Training objectives. Every loss takes already-computed images, codes or
// discriminator maps, so the caller decides where gradients are blocked.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "peerstyle/nn.hpp"
#include "peerstyle/tensor.hpp"

namespace peerstyle {

/// (1 / (B W H)) * sum of rho(z1 - z2) over all entries, with
/// rho(d) = 0.5 d^2 for |d| < 1 and |d| - 0.5 otherwise. Inputs are 4-D;
/// channels are summed, not averaged.
Tensor smooth_l1(const Tensor& z1, const Tensor& z2);

Tensor content_distance(const LatentCode& a, const LatentCode& b);
/// Local and global parts are compared separately and summed.
Tensor style_distance(const LatentCode& a, const LatentCode& b);
Tensor latent_distance(const LatentCode& a, const LatentCode& b);

/// f[E(D(T(z_i, z_t)))_C - (z_i)_C] + f[E(D(T(z_i, z_i)))_C - (z_i)_C]
Tensor content_cycle_loss(const LatentCode& z_i, const LatentCode& transferred, const LatentCode& self_transferred);

struct StyleMetric {
  Tensor positive;
  Tensor negative;
  Tensor total;  // positive + max(0, margin - negative)
};

/// i1, i2 share a class; t1, t2 share another.
StyleMetric style_metric_loss(const LatentCode& i1, const LatentCode& i2, const LatentCode& t1, const LatentCode& t2,
                              double margin);

/// f[recon_i - x_i] + f[recon_t - x_t]
Tensor identity_loss(const Tensor& recon_i, const Tensor& x_i, const Tensor& recon_t, const Tensor& x_t);

/// f[E(D~(z_i)) - z_i] + f[E(D~(z_t)) - z_t] over whole codes.
Tensor latent_cycle_loss(const LatentCode& z_i, const LatentCode& cycled_i, const LatentCode& z_t,
                         const LatentCode& cycled_t);

/// f[E(x_f)_C - (z_i)_C] + f[E(x_f)_S - (z_t)_S]
Tensor transfer_cycle_loss(const LatentCode& z_i, const LatentCode& z_t, const LatentCode& transferred);

/// Relativistic average least-squares objectives; expectations run over
/// batch and map positions jointly.
Tensor ragan_gen_loss(const Tensor& real_scores, const Tensor& fake_scores);
Tensor ragan_disc_loss(const Tensor& real_scores, const Tensor& fake_scores);

struct LossReport {
  double z_cont = 0.0;
  double z_style_pos = 0.0;
  double z_style_neg = 0.0;
  double z_style = 0.0;
  double aux_idt = 0.0;
  double aux_z_cycle = 0.0;
  double aux_total = 0.0;
  double gen = 0.0;
  double z_transf = 0.0;
  double main_idt = 0.0;
  double main_total = 0.0;
  double disc_total = 0.0;

  static constexpr std::array<std::string_view, 12> field_names{
      "z_cont", "z_style_pos", "z_style_neg", "z_style", "aux_idt",    "aux_z_cycle",
      "aux_total", "gen",     "z_transf",    "main_idt", "main_total", "disc_total"};

  std::array<double, 12> values() const;
  double grand_total() const { return disc_total + main_total + aux_total; }
  /// Name of the first non-finite field, if any.
  std::optional<std::string> first_non_finite() const;
  bool operator==(const LossReport&) const = default;
};

double aux_total(double z_cont, double z_style, double aux_z_cycle, double aux_idt, double lambda);
double main_total(double gen, double z_transf, double main_idt, double lambda);

/// Comma-separated field names / values in `field_names` order, %.17g.
std::string csv_header();
std::string csv_row(const LossReport& report);

}  // namespace peerstyle
