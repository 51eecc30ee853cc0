#include "ganmem/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ganmem/rng.hpp"

namespace ganmem {

using ad::Var;

void ArchConfig::validate() const {
  if (noise_dim < 1) throw std::invalid_argument("ArchConfig: noise_dim must be >= 1");
  if (n_blocks < 1) throw std::invalid_argument("ArchConfig: n_blocks must be >= 1");
  if (static_cast<int>(block_channel_schedule.size()) != n_blocks)
    throw std::invalid_argument("ArchConfig: schedule size must equal n_blocks");
  for (int c : block_channel_schedule)
    if (c < 1) throw std::invalid_argument("ArchConfig: channels must be positive");
  int expected = base_resolution() << n_blocks;
  if (image_size != expected)
    throw std::invalid_argument("ArchConfig: image_size must be 4*2^n_blocks (" +
                                std::to_string(expected) + ")");
  if (channels < 1) throw std::invalid_argument("ArchConfig: channels must be >= 1");
  if (conditional && n_classes_per_task < 1)
    throw std::invalid_argument("ArchConfig: conditional needs n_classes >= 1");
}

namespace {

Layer make_fc(const std::string& path, int d_out, int d_in, bool modulated, Rng& rng) {
  Layer l;
  l.path = path;
  l.kind = LayerKind::FC;
  l.modulated = modulated;
  double std = std::sqrt(1.0 / d_in);
  l.fc.W = rng.normal_tensor({d_out, d_in}, std);
  l.fc.b = Tensor::zeros({d_out});
  return l;
}

Layer make_conv(const std::string& path, int c_out, int c_in, int k, int pad,
                bool modulated, Rng& rng) {
  Layer l;
  l.path = path;
  l.kind = LayerKind::Conv;
  l.modulated = modulated;
  l.pad = pad;
  double std = std::sqrt(2.0 / (c_in * k * k));
  l.conv.K = rng.normal_tensor({c_out, c_in, k, k}, std);
  l.conv.b = Tensor::zeros({c_out});
  return l;
}

}  // namespace

BaseModel build_models(const ArchConfig& config, uint64_t seed) {
  config.validate();
  BaseModel m;
  m.config = config;
  const auto& ch = config.block_channel_schedule;
  int nb = config.n_blocks;
  auto out_ch = [&](int blk) { return blk + 1 < nb ? ch[blk + 1] : ch[nb - 1]; };

  uint64_t salt = 0;
  auto layer_rng = [&]() { return Rng(Rng::mix(seed, salt++)); };

  {  // generator
    Rng r = layer_rng();
    m.gen.push_back(make_fc("G/fc", ch[0] * 16, config.noise_dim, true, r));
    for (int b = 0; b < nb; ++b) {
      int ci = ch[b], co = out_ch(b);
      std::string p = "G/B" + std::to_string(b);
      Rng r0 = layer_rng(), r1 = layer_rng(), rs = layer_rng();
      m.gen.push_back(make_conv(p + "/L0", co, ci, 3, 1, true, r0));
      m.gen.push_back(make_conv(p + "/L1", co, co, 3, 1, true, r1));
      m.gen.push_back(make_conv(p + "/sc", co, ci, 1, 0, true, rs));
    }
    Rng ro = layer_rng();
    m.gen.push_back(make_conv("G/out", config.channels, ch[nb - 1], 3, 1, false, ro));
  }
  {  // discriminator: channel schedule reversed
    std::vector<int> dch(ch.rbegin(), ch.rend());
    auto d_out_ch = [&](int blk) { return blk + 1 < nb ? dch[blk + 1] : dch[nb - 1]; };
    Rng ri = layer_rng();
    m.disc.push_back(make_conv("D/in", dch[0], config.channels, 3, 1, true, ri));
    for (int b = 0; b < nb; ++b) {
      int ci = dch[b], co = d_out_ch(b);
      std::string p = "D/B" + std::to_string(b);
      Rng r0 = layer_rng(), r1 = layer_rng(), rs = layer_rng();
      m.disc.push_back(make_conv(p + "/L0", co, ci, 3, 1, true, r0));
      m.disc.push_back(make_conv(p + "/L1", co, co, 3, 1, true, r1));
      m.disc.push_back(make_conv(p + "/sc", co, ci, 1, 0, true, rs));
    }
    int flat = dch[nb - 1] * 16;
    Rng rh = layer_rng(), rf = layer_rng();
    m.disc.push_back(make_fc("D/fc", dch[nb - 1], flat, true, rh));
    m.disc.push_back(make_fc("D/fc_out", 1, dch[nb - 1], false, rf));
  }
  compute_stats(m);
  return m;
}

void compute_stats(BaseModel& base) {
  auto fill = [](std::vector<Layer>& layers) {
    for (auto& l : layers) {
      if (!l.modulated) continue;
      if (l.kind == LayerKind::FC)
        l.stats = row_stats(l.fc);
      else
        l.stats = kernel_stats(l.conv);
    }
  };
  fill(base.gen);
  fill(base.disc);
}

const Layer* BaseModel::find_layer(const std::string& path) const {
  for (const auto& l : gen)
    if (l.path == path) return &l;
  for (const auto& l : disc)
    if (l.path == path) return &l;
  return nullptr;
}

std::vector<const Layer*> BaseModel::modulated_layers() const {
  std::vector<const Layer*> out;
  for (const auto& l : gen)
    if (l.modulated) out.push_back(&l);
  for (const auto& l : disc)
    if (l.modulated) out.push_back(&l);
  return out;
}

uint64_t BaseModel::weights_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* layers : {&gen, &disc}) {
    for (const auto& l : *layers) {
      if (l.kind == LayerKind::FC) {
        h = tensor_hash(l.fc.W, h);
        h = tensor_hash(l.fc.b, h);
      } else {
        h = tensor_hash(l.conv.K, h);
        h = tensor_hash(l.conv.b, h);
      }
    }
  }
  return h;
}

uint64_t BaseModel::arch_fingerprint() const {
  const auto& c = config;
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](int64_t v) { h = fnv1a64(&v, sizeof(v), h); };
  mix(c.noise_dim);
  mix(c.image_size);
  mix(c.channels);
  mix(c.n_blocks);
  for (int v : c.block_channel_schedule) mix(v);
  mix(c.conditional ? 1 : 0);
  mix(c.n_classes_per_task);
  return h;
}

// --- Variable binding -----------------------------------------------------

namespace {

Var modulated_fc_weight(const Layer& l, const FCStyleVars& s, Ablation ab) {
  int d_in = l.fc.W.dim(1);
  Var c, off;
  if (ab == Ablation::NoNorm) {
    c = s.gamma;
    off = s.beta;
  } else {
    Var sigma = ad::constant(l.stats.std);
    Var mu = ad::constant(l.stats.mean);
    c = ad::div(s.gamma, sigma);
    off = ad::sub(s.beta, ad::mul(c, mu));
  }
  Var w = ad::mul_const(ad::broadcast_row(c, d_in), l.fc.W);
  return ad::add(w, ad::broadcast_row(off, d_in));
}

Var modulated_conv_weight(const Layer& l, const ConvStyleVars& s, Ablation ab) {
  int k1 = l.conv.K.dim(2), k2 = l.conv.K.dim(3);
  Var c, off;
  if (ab == Ablation::NoNorm) {
    c = s.Gamma;
    off = s.B;
  } else {
    Var S = ad::constant(l.stats.std);
    Var M = ad::constant(l.stats.mean);
    c = ad::div(s.Gamma, S);
    off = ad::sub(s.B, ad::mul(c, M));
  }
  Var w = ad::mul_const(ad::broadcast_kernel(c, k1, k2), l.conv.K);
  return ad::add(w, ad::broadcast_kernel(off, k1, k2));
}

}  // namespace

ModelVars bind_modulated(const std::vector<Layer>& layers, const StyleVarSet& style,
                         Ablation ablation) {
  ModelVars vars;
  vars.reserve(layers.size());
  for (const auto& l : layers) {
    LayerVars lv;
    if (!l.modulated) {
      if (l.kind == LayerKind::FC) {
        lv.weight = ad::constant(l.fc.W);
        lv.bias = ad::constant(l.fc.b);
      } else {
        lv.weight = ad::constant(l.conv.K);
        lv.bias = ad::constant(l.conv.b);
      }
    } else if (l.kind == LayerKind::FC) {
      auto it = style.fc.find(l.path);
      if (it == style.fc.end())
        throw std::invalid_argument("bind_modulated: missing FC style for " + l.path);
      lv.weight = modulated_fc_weight(l, it->second, ablation);
      lv.bias = ad::constant(l.fc.b);
      if (ablation != Ablation::NoBias) lv.b_fc = it->second.b_fc;
    } else {
      auto it = style.conv.find(l.path);
      if (it == style.conv.end())
        throw std::invalid_argument("bind_modulated: missing Conv style for " + l.path);
      lv.weight = modulated_conv_weight(l, it->second, ablation);
      lv.bias = ablation == Ablation::NoBias
                    ? ad::constant(l.conv.b)
                    : ad::add(ad::constant(l.conv.b), it->second.b_conv);
    }
    vars.push_back(std::move(lv));
  }
  return vars;
}

ModelVars bind_frozen(const std::vector<Layer>& layers) {
  ModelVars vars;
  for (const auto& l : layers) {
    LayerVars lv;
    if (l.kind == LayerKind::FC) {
      lv.weight = ad::constant(l.fc.W);
      lv.bias = ad::constant(l.fc.b);
    } else {
      lv.weight = ad::constant(l.conv.K);
      lv.bias = ad::constant(l.conv.b);
    }
    vars.push_back(std::move(lv));
  }
  return vars;
}

ModelVars bind_trainable(const std::vector<Layer>& layers,
                         std::vector<Var>* params_out) {
  ModelVars vars;
  for (const auto& l : layers) {
    LayerVars lv;
    if (l.kind == LayerKind::FC) {
      lv.weight = ad::leaf(l.fc.W);
      lv.bias = ad::leaf(l.fc.b);
    } else {
      lv.weight = ad::leaf(l.conv.K);
      lv.bias = ad::leaf(l.conv.b);
    }
    if (params_out) {
      params_out->push_back(lv.weight);
      params_out->push_back(lv.bias);
    }
    vars.push_back(std::move(lv));
  }
  return vars;
}

// --- Forward passes -------------------------------------------------------

namespace {

constexpr double kLReluSlope = 0.2;

Var fc_apply(const LayerVars& lv, const Var& x, const std::vector<int>& labels) {
  Var y = ad::linear(x, lv.weight, lv.bias);
  if (lv.b_fc.defined()) {
    std::vector<int> idx = labels.empty() ? std::vector<int>(x.val().dim(0), 0) : labels;
    y = ad::add(y, ad::gather_rows(lv.b_fc, idx));
  }
  return y;
}

Var conv_apply(const Layer& l, const LayerVars& lv, const Var& x) {
  Var y = ad::conv2d(x, lv.weight, l.pad);
  const auto& s = y.val().shape();
  return ad::add(y, ad::broadcast_chan(lv.bias, s[0], s[2], s[3]));
}

void check_labels(const ArchConfig& cfg, int batch, const std::vector<int>& labels) {
  if (!cfg.conditional) return;
  if (static_cast<int>(labels.size()) != batch)
    throw std::invalid_argument("forward: conditional model needs one label per sample");
  for (int y : labels)
    if (y < 0 || y >= cfg.n_classes_per_task)
      throw std::out_of_range("forward: class id out of range");
}

}  // namespace

Var generator_forward(const BaseModel& base, const ModelVars& vars, const Var& z,
                      const std::vector<int>& labels) {
  const auto& cfg = base.config;
  int n = z.val().dim(0);
  check_labels(cfg, n, labels);
  if (vars.size() != base.gen.size())
    throw std::invalid_argument("generator_forward: vars/layer count mismatch");

  int ch0 = cfg.block_channel_schedule[0];
  Var h = fc_apply(vars[0], z, labels);
  h = ad::reshape(h, {n, ch0, 4, 4});

  size_t li = 1;
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const Layer &l0 = base.gen[li], &l1 = base.gen[li + 1], &lsc = base.gen[li + 2];
    Var x = ad::upsample2x(h);
    Var y = conv_apply(l0, vars[li], ad::leaky_relu(x, kLReluSlope));
    y = conv_apply(l1, vars[li + 1], ad::leaky_relu(y, kLReluSlope));
    Var sc = conv_apply(lsc, vars[li + 2], x);
    h = ad::add(y, sc);
    li += 3;
  }
  // linear output map: any saturating map (tanh, softsign, leaky clamps)
  // invites a saturated-dither equilibrium whose dead gradient freezes style
  // training. the valid pixel range is enforced through the training loss
  // (range_penalty) rather than the architecture, so gradients never die
  return conv_apply(base.gen[li], vars[li], ad::leaky_relu(h, kLReluSlope));
}

Var discriminator_forward(const BaseModel& base, const ModelVars& vars, const Var& x,
                          const std::vector<int>& labels, Var* class_logits) {
  const auto& cfg = base.config;
  int n = x.val().dim(0);
  check_labels(cfg, n, labels);
  if (vars.size() != base.disc.size())
    throw std::invalid_argument("discriminator_forward: vars/layer count mismatch");

  Var h = conv_apply(base.disc[0], vars[0], x);
  size_t li = 1;
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const Layer &l0 = base.disc[li], &l1 = base.disc[li + 1], &lsc = base.disc[li + 2];
    Var y = conv_apply(l0, vars[li], ad::leaky_relu(h, kLReluSlope));
    y = conv_apply(l1, vars[li + 1], ad::leaky_relu(y, kLReluSlope));
    Var sc = conv_apply(lsc, vars[li + 2], h);
    h = ad::avgpool2x(ad::add(y, sc));
    li += 3;
  }
  const auto& hs = h.val().shape();
  Var flat = ad::reshape(h, {n, hs[1] * hs[2] * hs[3]});
  Var hidden = ad::leaky_relu(ad::linear(flat, vars[li].weight, vars[li].bias),
                              kLReluSlope);
  // the per-class rows of the hidden FC serve as an auxiliary classifier head;
  // conditioning the realness score itself (bias or projection) produces class
  // gradients the R1 penalty suppresses, and the class pathway never trains
  if (class_logits && vars[li].b_fc.defined())
    *class_logits = ad::matmul(hidden, ad::transpose(vars[li].b_fc));
  return fc_apply(vars[li + 1], hidden, {});
}

}  // namespace ganmem
