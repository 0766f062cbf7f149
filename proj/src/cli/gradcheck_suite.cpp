#include "peerstyle/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <random>
#include <stdexcept>

#include "peerstyle/losses.hpp"
#include "peerstyle/nn.hpp"
#include "peerstyle/ops.hpp"
#include "peerstyle/tpfr.hpp"

namespace peerstyle {

namespace {

using Rng = std::mt19937_64;

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = dist(rng);
  Tensor t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

Tensor probe(const Shape& shape, Rng& rng) {
  Tensor t = uniform(shape, rng);
  t.set_requires_grad(false);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Moves values within `gap` of a kink to the kink plus 2 * gap.
void avoid(Tensor t, std::initializer_list<double> kinks, double gap = 1e-2) {
  for (double& v : t.mutable_data())
    for (double k : kinks)
      if (std::fabs(v - k) < gap) v = k + 2 * gap;
}

// Weights drawn O(1): instance norm is invariant to the scale of the conv
// before it, so the 0.02 init scale would inflate the truncation error.
void randomize(const ParameterList& params, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (double& v : t.mutable_data()) v = dist(rng);
  }
}

GradCheckItem item(std::string name, std::function<Tensor()> loss, ParameterList inputs,
                   std::size_t max_entries = 0, bool piecewise = false) {
  auto fn = std::make_shared<std::function<Tensor()>>(std::move(loss));
  return {name, [name, fn, inputs, max_entries, piecewise](const GradCheckOptions& o) {
            GradCheckOptions opts = o;
            opts.skip_nonsmooth = opts.skip_nonsmooth || piecewise;
            if (max_entries != 0 && (opts.max_entries_per_input == 0 || opts.max_entries_per_input > max_entries)) {
              opts.max_entries_per_input = max_entries;
            }
            return check_gradients(name, *fn, inputs, opts);
          }};
}

std::vector<GradCheckItem> op_items(Rng& rng) {
  std::vector<GradCheckItem> out;
  const Shape s{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 2, 5)};
  Tensor x = uniform(s, rng), y = uniform(s, rng), pos = uniform(s, rng, 0.5, 2.0), row = uniform({s[2]}, rng);
  avoid(x, {0.0, -0.2, 0.4});
  const ParameterList xy{{"x", x}, {"y", y}}, xpos{{"x", x}, {"pos", pos}};
  auto weighted = [&rng](const Shape& shape) { return probe(shape, rng); };
  const Tensor w = weighted(s);
  const Tensor w_t{weighted({s[2], s[0], s[1]})};
  const Tensor w_axis{weighted({s[0], 1, 1})};

  out.push_back(item("relu", [=] { return sum(relu(x) * w); }, {{"x", x}}));
  out.push_back(item("leaky_relu", [=] { return sum(leaky_relu(x, 0.2) * w); }, {{"x", x}}));
  out.push_back(item("tanh", [=] { return sum(tanh(x) * w); }, {{"x", x}}));
  out.push_back(item("exp", [=] { return sum(exp(x) * w); }, {{"x", x}}));
  out.push_back(item("sqrt", [=] { return sum(sqrt(pos) * w); }, {{"pos", pos}}));
  out.push_back(item("square", [=] { return sum(square(x) * w); }, {{"x", x}}));
  out.push_back(item("abs", [=] { return sum(abs(x) * w); }, {{"x", x}}));
  out.push_back(item("neg", [=] { return sum(neg(x) * w); }, {{"x", x}}));
  out.push_back(item("add_scalar/mul_scalar/div_scalar",
                     [=] { return sum(div_scalar(add_scalar(mul_scalar(x, 1.7), -0.3), 1.3) * w); }, {{"x", x}}));
  out.push_back(item("max_with_scalar/min_with_scalar",
                     [=] { return sum(min_with_scalar(max_with_scalar(x, -0.2), 0.4) * w); }, {{"x", x}}));
  out.push_back(item("add/sub/mul/div", [=] { return sum((x + y) * (x - y) / pos * w); },
                     {{"x", x}, {"y", y}, {"pos", pos}}));
  out.push_back(item("broadcast binary", [=] { return sum((x * row + row / (row * row + 1.0)) * w); },
                     {{"x", x}, {"row", row}}));
  out.push_back(item("sum/mean", [=] { return mean(square(x)) + sum(x * y); }, xy));
  out.push_back(item("sum_axis/mean_axis", [=] { return sum(sum_axis(x, 1) * mean_axis(y, 2) * w_axis); }, xy));
  const Tensor w_cat = weighted({s[0], s[1], 2 * s[2] - 1});
  out.push_back(item("concat/slice", [=] { return sum(concat({slice(x, 2, 1, s[2]), y}, 2) * w_cat); }, xy));
  const Tensor w_flat = weighted({numel_of(s)});
  out.push_back(item("broadcast_to/reshape", [=] { return sum(reshape(broadcast_to(row, s), {numel_of(s)}) * w_flat); },
                     {{"row", row}}));
  out.push_back(item("permute", [=] { return sum(permute(x, {2, 0, 1}) * w_t); }, {{"x", x}}));

  const std::size_t B = pick(rng, 1, 2), C = pick(rng, 1, 3), O = pick(rng, 1, 3), H = pick(rng, 4, 7), W = pick(rng, 4, 7);
  Tensor img = uniform({B, C, H, W}, rng);
  Tensor k3 = uniform({O, C, 3, 3}, rng), bias = uniform({O}, rng);
  const Tensor w_conv = weighted(conv2d(img, k3, bias, 2, 1).shape());
  out.push_back(item("conv2d", [=] { return sum(conv2d(img, k3, bias, 2, 1) * w_conv); },
                     {{"input", img}, {"weight", k3}, {"bias", bias}}));
  Tensor k4 = uniform({C, O, 4, 4}, rng);
  const Tensor w_convt = weighted(conv2d_transpose(img, k4, bias, 2, 1).shape());
  out.push_back(item("conv2d_transpose", [=] { return sum(conv2d_transpose(img, k4, bias, 2, 1) * w_convt); },
                     {{"input", img}, {"weight", k4}, {"bias", bias}}));
  Tensor scale = uniform({C}, rng, 0.5, 1.5), shift = uniform({C}, rng);
  const Tensor w_img = weighted(img.shape());
  out.push_back(item("instance_norm", [=] { return sum(instance_norm(img, scale, shift, 1e-5) * w_img); },
                     {{"input", img}, {"scale", scale}, {"shift", shift}}));
  Tensor lw = uniform({O, W}, rng), lb = uniform({O}, rng);
  const Tensor w_lin = weighted({B, C, H, O});
  out.push_back(item("linear", [=] { return sum(linear(img, lw, lb) * w_lin); },
                     {{"x", img}, {"weight", lw}, {"bias", lb}}));
  std::vector<std::int64_t> index(B * 3 * 2);
  for (auto& i : index) i = static_cast<std::int64_t>(pick(rng, 0, H * W - 1));
  const Tensor w_gather = weighted({B, 3, 2, C});
  out.push_back(item("gather_pixels", [=] { return sum(gather_pixels(img, index, 3, 2) * w_gather); },
                     {{"x", img}}));
  const Rng mask_state = rng;
  out.push_back(item("dropout", [=] {
    Rng local = mask_state;
    return sum(dropout(x, 0.3, true, local) * w);
  }, {{"x", x}}));
  out.push_back(item("add_gaussian_noise", [=] {
    Rng local = mask_state;
    return sum(add_gaussian_noise(x, 0.1, local) * w);
  }, {{"x", x}}));
  return out;
}

// Narrow widths: with thousands of ReLU units a 1e-4 step straddles some kink
// on most probes, which spoils central differences without any backward error.
NetConfig narrow_net(Rng& rng) {
  NetConfig c;
  c.base_width = pick(rng, 2, 3);
  c.content_channels = c.style_local_channels = c.style_global_channels = pick(rng, 2, 3);
  c.n_resnet_blocks = pick(rng, 1, 2);
  c.gst_blocks = pick(rng, 1, 2);
  c.k_neighbors = pick(rng, 2, 4);
  return c;
}

LatentCode random_code(std::size_t b, const NetConfig& c, std::size_t h, std::size_t w, Rng& rng) {
  return {uniform({b, c.content_channels, h, w}, rng), uniform({b, c.style_local_channels, h, w}, rng),
          uniform({b, c.style_global_channels, 1, 1}, rng)};
}

ParameterList code_params(const std::string& prefix, const LatentCode& z) {
  return {{prefix + ".content", z.content}, {prefix + ".style_local", z.style_local},
          {prefix + ".style_global", z.style_global}};
}

Tensor weighted_code(const LatentCode& z, const LatentCode& w) {
  return sum(z.content * w.content) + sum(z.style_local * w.style_local) + sum(z.style_global * w.style_global);
}

LatentCode probe_code(const LatentCode& like, Rng& rng) {
  return {probe(like.content.shape(), rng), probe(like.style_local.shape(), rng),
          probe(like.style_global.shape(), rng)};
}

std::vector<GradCheckItem> network_items(Rng& rng) {
  constexpr std::size_t kEntries = 24;
  std::vector<GradCheckItem> out;
  const NetConfig c = narrow_net(rng);
  const std::size_t H = 4 * pick(rng, 2, 4), W = 4 * pick(rng, 2, 4);

  auto enc = std::make_shared<Encoder>(c, rng);
  Tensor x = uniform({2, 3, H, W}, rng);
  ParameterList p{{"x", x}};
  enc->collect("encoder", p);
  randomize(p, rng);
  LatentCode we;
  {
    NoGradGuard guard;
    we = probe_code(enc->forward(x), rng);
  }
  out.push_back(item("encoder", [=] { return weighted_code(enc->forward(x), we); }, p, kEntries, true));

  for (const char* name : {"aux_decoder", "main_decoder"}) {
    auto dec = std::make_shared<Decoder>(c, rng);
    const LatentCode z = random_code(2, c, H / 4, W / 4, rng);
    ParameterList q = code_params("z", z);
    dec->collect(name, q);
    randomize(q, rng);
    const Tensor wd = probe({2, 3, H, W}, rng);
    out.push_back(item(name, [=] { return sum(dec->forward(z) * wd); }, q, kEntries, true));
  }

  NetConfig dc = c;
  dc.discriminator_noise_sigma = 0.0;
  auto disc = std::make_shared<Discriminator>(dc, rng);
  Tensor a = uniform({2, 3, H, W}, rng), b = uniform({2, 3, H, W}, rng);
  ParameterList r{{"candidate", a}, {"condition", b}};
  disc->collect("discriminator", r);
  randomize(r, rng);
  const Tensor wdisc = probe({2, 1, H / 4, W / 4}, rng);
  out.push_back(item("discriminator", [=] {
    Rng unused;
    return sum(disc->forward(a, b, unused, true) * wdisc);
  }, r, kEntries, true));

  auto tpfr = std::make_shared<Tpfr>(c, rng);
  const LatentCode zi = random_code(2, c, 3, 3, rng), zt = random_code(2, c, 3, 3, rng);
  ParameterList t = code_params("z_i", zi);
  for (auto& q : code_params("z_t", zt)) t.push_back(q);
  tpfr->collect("tpfr", t);
  randomize(t, rng);
  const LatentCode wt = probe_code(zi, rng);
  out.push_back(item("tpfr", [=] {
    Rng unused;
    return weighted_code(tpfr->forward(zi, zt, unused, false), wt);
  }, t, 0, true));
  return out;
}

std::vector<GradCheckItem> loss_items(Rng& rng) {
  std::vector<GradCheckItem> out;
  NetConfig c;
  c.content_channels = pick(rng, 2, 4);
  c.style_local_channels = c.content_channels;
  c.style_global_channels = c.content_channels;
  const std::size_t h = pick(rng, 2, 3), w = pick(rng, 2, 3);
  std::vector<LatentCode> z;
  for (int i = 0; i < 4; ++i) {
    z.push_back(random_code(2, c, h, w, rng));
    for (Tensor* t : {&z.back().content, &z.back().style_local, &z.back().style_global}) {
      // Quantized with distinct offsets so no difference sits near |d| = 0 or 1.
      for (double& v : t->mutable_data()) v = 2.0 * std::round(v * 8.0) / 8.0 + 0.013 * i;
    }
  }
  ParameterList codes;
  for (int i = 0; i < 4; ++i)
    for (auto& q : code_params("z" + std::to_string(i), z[i])) codes.push_back(q);
  const Shape img{2, 3, 4 * h, 4 * w};
  Tensor xi = uniform(img, rng, -3, 3), ri = uniform(img, rng, -3, 3), xt = uniform(img, rng, -3, 3),
         rt = uniform(img, rng, -3, 3);
  const ParameterList images{{"recon_i", ri}, {"x_i", xi}, {"recon_t", rt}, {"x_t", xt}};
  Tensor real = uniform({2, 1, h, w}, rng, -2, 2), fake = uniform({2, 1, h, w}, rng, -2, 2);
  const ParameterList scores{{"real", real}, {"fake", fake}};

  out.push_back(item("smooth_l1", [=] { return smooth_l1(ri, xi); }, images));
  out.push_back(item("identity", [=] { return identity_loss(ri, xi, rt, xt); }, images));
  out.push_back(item("content_cycle", [=] { return content_cycle_loss(z[0], z[1], z[2]); }, codes));
  // A wide margin keeps the hinge active for every draw.
  out.push_back(item("style_metric", [=] { return style_metric_loss(z[0], z[1], z[2], z[3], 100.0).total; }, codes));
  out.push_back(item("latent_cycle", [=] { return latent_cycle_loss(z[0], z[1], z[2], z[3]); }, codes));
  out.push_back(item("transfer_cycle", [=] { return transfer_cycle_loss(z[0], z[1], z[2]); }, codes));
  out.push_back(item("ragan_gen", [=] { return ragan_gen_loss(real, fake); }, scores));
  out.push_back(item("ragan_disc", [=] { return ragan_disc_loss(real, fake); }, scores));
  return out;
}

}  // namespace

GradScope parse_scope(const std::string& name) {
  if (name == "op") return GradScope::op;
  if (name == "network") return GradScope::network;
  if (name == "loss") return GradScope::loss;
  throw std::invalid_argument("unknown gradcheck scope '" + name + "' (expected op, network or loss)");
}

const char* scope_name(GradScope scope) {
  switch (scope) {
    case GradScope::op: return "op";
    case GradScope::network: return "network";
    case GradScope::loss: return "loss";
  }
  return "?";
}

std::vector<GradCheckItem> gradcheck_items(GradScope scope, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(scope)};
  Rng rng(seq);
  switch (scope) {
    case GradScope::op: return op_items(rng);
    case GradScope::network: return network_items(rng);
    case GradScope::loss: return loss_items(rng);
  }
  return {};
}

bool SuiteReport::passed() const {
  return !results.empty() && std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

double SuiteReport::worst() const {
  double w = 0.0;
  for (const auto& r : results) w = std::max(w, r.max_rel_error);
  return w;
}

SuiteReport run_gradcheck_suite(const std::vector<GradCheckItem>& items, std::ostream& log,
                                const GradCheckOptions& options) {
  SuiteReport report;
  for (const auto& it : items) {
    GradCheckResult r = it.run(options);
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-34s max rel error %.3e over %zu entries", r.passed ? "ok" : "FAIL",
                  r.name.c_str(), r.max_rel_error, r.entries_checked);
    log << line;
    if (r.nonsmooth != 0) log << ", " << r.nonsmooth << " non-smooth";
    if (!r.passed) log << " (worst " << r.worst_entry << ")";
    log << '\n';
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace peerstyle
