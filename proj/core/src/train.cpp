#include "ganmem/train.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ganmem/rng.hpp"

namespace ganmem {

using ad::Var;

void TrainHyper::validate() const {
  if (lr <= 0 || batch_size < 1 || steps < 0 || adam_beta1 < 0 || adam_beta1 >= 1 ||
      adam_beta2 < 0 || adam_beta2 >= 1 || r1_gamma < 0 || aux_ce_weight < 0)
    throw std::invalid_argument("TrainHyper: invalid values");
}

std::pair<Var, Var> gan_losses(const Var& d_real, const Var& d_fake) {
  if (!d_real.val().all_finite() || !d_fake.val().all_finite())
    throw std::invalid_argument("gan_losses: non-finite scores");
  Var loss_d = ad::add(ad::mean(ad::softplus(ad::neg(d_real))),
                       ad::mean(ad::softplus(d_fake)));
  Var loss_g = ad::mean(ad::softplus(ad::neg(d_fake)));
  return {loss_d, loss_g};
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
  int n = logits.val().dim(0), k = logits.val().dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy: one label per row");
  // constant row-max shift for stability; does not change the loss value
  Tensor shift({n});
  for (int i = 0; i < n; ++i) {
    double mx = logits.val().at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, logits.val().at(i, j));
    shift[i] = mx;
  }
  Var z = ad::sub(logits, ad::broadcast_row(ad::constant(shift), k));
  Var lse = ad::log_v(ad::rowsum(ad::exp_v(z)));  // [n]
  Tensor onehot({n, k});
  for (int i = 0; i < n; ++i) onehot.at(i, labels[static_cast<size_t>(i)]) = 1.0;
  Var picked = ad::rowsum(ad::mul_const(z, onehot));  // [n]
  return ad::scale(ad::sum(ad::sub(lse, picked)), 1.0 / n);
}

Var range_penalty(const Var& images, double weight) {
  Var over = ad::leaky_relu(ad::add_scalar(ad::abs_v(images), -1.0), 0.0);
  return ad::scale(ad::mean(ad::mul(over, over)), weight);
}

Var r1_term(const Var& x, const Var& d, double gamma) {
  Var gx = ad::grad(ad::sum(d), {x})[0];
  Var sq = ad::sum(ad::mul(gx, gx));
  double n = static_cast<double>(x.val().dim(0));
  return ad::scale(sq, 0.5 * gamma / n);
}

Var r1_penalty(const BaseModel& base, const ModelVars& dvars, const Tensor& x_real,
               const std::vector<int>& labels, double gamma) {
  Var x = ad::leaf(x_real);
  Var d = discriminator_forward(base, dvars, x, labels);
  return r1_term(x, d, gamma);
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("Adam: params/grads size mismatch");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(Tensor::zeros(p->shape()));
      v_.emplace_back(Tensor::zeros(p->shape()));
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) throw std::invalid_argument("Adam: grad shape mismatch");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t k = 0; k < p.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      p[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

StyleVarSet style_to_vars(StyleSet& style, std::vector<Var>* leaves,
                          std::vector<Tensor*>* params) {
  StyleVarSet vars;
  auto track = [&](Var v, Tensor* t) {
    if (leaves) leaves->push_back(v);
    if (params) params->push_back(t);
    return v;
  };
  for (auto& [path, s] : style.fc) {
    FCStyleVars fv;
    fv.gamma = track(ad::leaf(s.gamma), &s.gamma);
    fv.beta = track(ad::leaf(s.beta), &s.beta);
    fv.b_fc = track(ad::leaf(s.b_fc), &s.b_fc);
    vars.fc.emplace(path, fv);
  }
  for (auto& [path, s] : style.conv) {
    ConvStyleVars cv;
    cv.Gamma = track(ad::leaf(s.Gamma), &s.Gamma);
    cv.B = track(ad::leaf(s.B), &s.B);
    cv.b_conv = track(ad::leaf(s.b_conv), &s.b_conv);
    vars.conv.emplace(path, cv);
  }
  return vars;
}

StyleVarSet style_to_const_vars(const StyleSet& style) {
  StyleVarSet vars;
  for (const auto& [path, s] : style.fc)
    vars.fc.emplace(path, FCStyleVars{ad::constant(s.gamma), ad::constant(s.beta),
                                      ad::constant(s.b_fc)});
  for (const auto& [path, s] : style.conv)
    vars.conv.emplace(path, ConvStyleVars{ad::constant(s.Gamma), ad::constant(s.B),
                                          ad::constant(s.b_conv)});
  return vars;
}

namespace {

std::vector<Tensor> grad_values(const Var& loss, const std::vector<Var>& leaves) {
  auto gs = ad::grad(loss, leaves);
  std::vector<Tensor> out;
  out.reserve(gs.size());
  for (auto& g : gs) out.push_back(g.val());
  return out;
}

struct BatchDraw {
  std::vector<int> idx;
  std::vector<int> labels;
};

BatchDraw draw_batch(const Dataset& data, int batch, Rng& rng) {
  BatchDraw b;
  for (int i = 0; i < batch; ++i) {
    int k = rng.uniform_int(data.size());
    b.idx.push_back(k);
    b.labels.push_back(data.labels[static_cast<size_t>(k)]);
  }
  return b;
}

std::vector<int> draw_labels(int batch, int n_classes, Rng& rng) {
  std::vector<int> out;
  for (int i = 0; i < batch; ++i) out.push_back(rng.uniform_int(n_classes));
  return out;
}

void check_loss_finite(double v, int step) {
  if (!std::isfinite(v))
    throw std::runtime_error("training diverged: non-finite loss at step " +
                             std::to_string(step));
}

}  // namespace

TrainResult train_task(const BaseModel& base, const Dataset& data,
                       const TrainHyper& hyper, int task_id, Ablation ablation,
                       const FidCallback& fid_cb) {
  hyper.validate();
  if (data.size() == 0) throw std::invalid_argument("train_task: empty dataset");
  const bool cond = base.config.conditional;
  if (cond && data.n_classes != base.config.n_classes_per_task)
    throw std::invalid_argument("train_task: dataset class count mismatch");

  uint64_t base_hash = base.weights_hash();
  TrainResult res;
  res.style = make_new_style(base, task_id, cond ? base.config.n_classes_per_task : 1);

  Adam adam_g(hyper.lr, hyper.adam_beta1, hyper.adam_beta2);
  Adam adam_d(hyper.lr, hyper.adam_beta1, hyper.adam_beta2);
  int zd = base.config.noise_dim;

  for (int step = 0; step < hyper.steps; ++step) {
    Rng rng(Rng::mix(hyper.seed, (static_cast<uint64_t>(task_id) << 40) | step));

    // --- discriminator step
    {
      std::vector<Var> leaves;
      std::vector<Tensor*> params;
      StyleVarSet svars = style_to_vars(res.style, &leaves, &params);
      // split: generator styles stay constant in the D step
      StyleVarSet gconst = style_to_const_vars(res.style);
      ModelVars gv = bind_modulated(base.gen, gconst, ablation);
      ModelVars dv = bind_modulated(base.disc, svars, ablation);

      BatchDraw rb = draw_batch(data, hyper.batch_size, rng);
      Tensor x_real = data.batch(rb.idx);
      std::vector<int> fake_labels =
          cond ? draw_labels(hyper.batch_size, data.n_classes, rng) : std::vector<int>{};
      Var z = ad::constant(rng.normal_tensor({hyper.batch_size, zd}));
      Var x_fake = ad::detach(generator_forward(base, gv, z, fake_labels));

      std::vector<int> real_labels = cond ? rb.labels : std::vector<int>{};
      Var aux_real;
      Var d_real = discriminator_forward(base, dv, ad::constant(x_real), real_labels,
                                         cond ? &aux_real : nullptr);
      Var d_fake = discriminator_forward(base, dv, x_fake, fake_labels);
      auto [loss_d, loss_g_unused] = gan_losses(d_real, d_fake);
      Var r1 = r1_penalty(base, dv, x_real, real_labels, hyper.r1_gamma);
      Var total = ad::add(loss_d, r1);
      // auxiliary class head trains on real data only
      if (cond)
        total = ad::add(total, ad::scale(cross_entropy(aux_real, real_labels),
                                         hyper.aux_ce_weight));

      // only D-side leaves are in the graph; G-side grads come back zero
      auto gs = grad_values(total, leaves);
      adam_d.step(params, gs);

      MetricsRecord rec;
      rec.step = step;
      rec.loss_d = total.val()[0] - r1.val()[0];
      rec.r1 = r1.val()[0];
      check_loss_finite(rec.loss_d, step);
      res.log.push_back(rec);
    }

    // --- generator step
    {
      std::vector<Var> leaves;
      std::vector<Tensor*> params;
      StyleVarSet svars = style_to_vars(res.style, &leaves, &params);
      StyleVarSet dconst = style_to_const_vars(res.style);
      ModelVars gv = bind_modulated(base.gen, svars, ablation);
      ModelVars dv = bind_modulated(base.disc, dconst, ablation);

      std::vector<int> fake_labels =
          cond ? draw_labels(hyper.batch_size, data.n_classes, rng) : std::vector<int>{};
      Var z = ad::constant(rng.normal_tensor({hyper.batch_size, zd}));
      Var x_fake = generator_forward(base, gv, z, fake_labels);
      Var aux_fake;
      Var d_fake = discriminator_forward(base, dv, x_fake, fake_labels,
                                         cond ? &aux_fake : nullptr);
      Var loss_g = ad::mean(ad::softplus(ad::neg(d_fake)));
      loss_g = ad::add(loss_g, range_penalty(x_fake, kPixelRangeWeight));
      // the generator is rewarded for samples the class head recognizes
      if (cond)
        loss_g = ad::add(loss_g, ad::scale(cross_entropy(aux_fake, fake_labels),
                                           hyper.aux_ce_weight));
      auto gs = grad_values(loss_g, leaves);
      adam_g.step(params, gs);

      res.log.back().loss_g = loss_g.val()[0];
      check_loss_finite(res.log.back().loss_g, step);
    }

    if (fid_cb && hyper.fid_every > 0 &&
        (step % hyper.fid_every == hyper.fid_every - 1 || step == hyper.steps - 1)) {
      std::vector<int> labels;
      if (cond) {
        Rng lr(Rng::mix(hyper.seed, 0xf1d));
        labels = draw_labels(128, data.n_classes, lr);
      }
      Tensor imgs = sample_images(base, res.style, 128, Rng::mix(hyper.seed, 0xf1d),
                                  labels);
      res.log.back().fid = fid_cb(imgs);
    }
  }

  if (base.weights_hash() != base_hash)
    throw std::logic_error("train_task: frozen base weights changed");
  return res;
}

FinetuneResult finetune_all(const BaseModel& base, const Dataset& data,
                            const TrainHyper& hyper, const FidCallback& fid_cb) {
  hyper.validate();
  if (data.size() == 0) throw std::invalid_argument("finetune_all: empty dataset");
  FinetuneResult res;
  res.model = base;  // copy; the caller's base is untouched
  BaseModel& m = res.model;
  const bool cond = m.config.conditional;
  int zd = m.config.noise_dim;

  Adam adam_g(hyper.lr, hyper.adam_beta1, hyper.adam_beta2);
  Adam adam_d(hyper.lr, hyper.adam_beta1, hyper.adam_beta2);

  auto collect = [](std::vector<Layer>& layers, std::vector<Var>& leaves,
                    std::vector<Tensor*>& params) {
    ModelVars vars;
    for (auto& l : layers) {
      LayerVars lv;
      Tensor& w = l.kind == LayerKind::FC ? l.fc.W : l.conv.K;
      Tensor& b = l.kind == LayerKind::FC ? l.fc.b : l.conv.b;
      lv.weight = ad::leaf(w);
      lv.bias = ad::leaf(b);
      leaves.push_back(lv.weight);
      params.push_back(&w);
      leaves.push_back(lv.bias);
      params.push_back(&b);
      vars.push_back(std::move(lv));
    }
    return vars;
  };

  for (int step = 0; step < hyper.steps; ++step) {
    Rng rng(Rng::mix(hyper.seed, 0xf17e0000ull | static_cast<uint64_t>(step)));
    {
      std::vector<Var> leaves;
      std::vector<Tensor*> params;
      ModelVars dv = collect(m.disc, leaves, params);
      ModelVars gv = bind_frozen(m.gen);

      BatchDraw rb = draw_batch(data, hyper.batch_size, rng);
      Tensor x_real = data.batch(rb.idx);
      std::vector<int> rl = cond ? rb.labels : std::vector<int>{};
      std::vector<int> fl =
          cond ? draw_labels(hyper.batch_size, data.n_classes, rng) : std::vector<int>{};
      Var z = ad::constant(rng.normal_tensor({hyper.batch_size, zd}));
      Var x_fake = ad::detach(generator_forward(m, gv, z, fl));
      Var d_real = discriminator_forward(m, dv, ad::constant(x_real), rl);
      Var d_fake = discriminator_forward(m, dv, x_fake, fl);
      auto [loss_d, _] = gan_losses(d_real, d_fake);
      Var r1 = r1_penalty(m, dv, x_real, rl, hyper.r1_gamma);
      Var total = ad::add(loss_d, r1);
      auto gs = grad_values(total, leaves);
      adam_d.step(params, gs);

      MetricsRecord rec;
      rec.step = step;
      rec.loss_d = loss_d.val()[0];
      rec.r1 = r1.val()[0];
      check_loss_finite(rec.loss_d, step);
      res.log.push_back(rec);
    }
    {
      std::vector<Var> leaves;
      std::vector<Tensor*> params;
      ModelVars gv = collect(m.gen, leaves, params);
      ModelVars dv = bind_frozen(m.disc);
      std::vector<int> fl =
          cond ? draw_labels(hyper.batch_size, data.n_classes, rng) : std::vector<int>{};
      Var z = ad::constant(rng.normal_tensor({hyper.batch_size, zd}));
      Var x_fake = generator_forward(m, gv, z, fl);
      Var d_fake = discriminator_forward(m, dv, x_fake, fl);
      Var loss_g = ad::mean(ad::softplus(ad::neg(d_fake)));
      loss_g = ad::add(loss_g, range_penalty(x_fake, kPixelRangeWeight));
      auto gs = grad_values(loss_g, leaves);
      adam_g.step(params, gs);
      res.log.back().loss_g = loss_g.val()[0];
      check_loss_finite(res.log.back().loss_g, step);
    }
    if (fid_cb && hyper.fid_every > 0 &&
        (step % hyper.fid_every == hyper.fid_every - 1 || step == hyper.steps - 1)) {
      Rng srng(Rng::mix(hyper.seed, 0xf1d));
      std::vector<int> labels;
      if (cond) labels = draw_labels(128, data.n_classes, srng);
      ModelVars gv = bind_frozen(m.gen);
      Var z = ad::constant(srng.normal_tensor({128, zd}));
      Var imgs = generator_forward(m, gv, z, labels);
      res.log.back().fid = fid_cb(imgs.val());
    }
  }
  // recompute stats so the fine-tuned model remains a valid (new) base
  compute_stats(res.model);
  return res;
}

Tensor sample_images(const BaseModel& base, const StyleSet& style, int n,
                     uint64_t seed, const std::vector<int>& labels) {
  Rng rng(Rng::mix(seed, 0x5a3f7e));
  Var z = ad::constant(rng.normal_tensor({n, base.config.noise_dim}));
  StyleVarSet svars = style_to_const_vars(style);
  ModelVars gv = bind_modulated(base.gen, svars);
  Var imgs = generator_forward(base, gv, z, labels);
  // emitted samples are pixel data: clip the leaky tails of the generator's
  // output map to the same [-1,1] range the real datasets occupy
  Tensor out = imgs.val();
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = out[i] < -1.0 ? -1.0 : (out[i] > 1.0 ? 1.0 : out[i]);
  return out;
}

int64_t style_param_count(const BaseModel& base, int class_count) {
  int64_t n = 0;
  for (const Layer* l : base.modulated_layers()) {
    if (l->kind == LayerKind::FC)
      n += 2ll * l->d_out() + static_cast<int64_t>(class_count) * l->d_out();
    else
      n += 2ll * l->d_out() * l->d_in() + l->d_out();
  }
  return n;
}

int64_t full_param_count(const BaseModel& base) {
  int64_t n = 0;
  for (const auto* layers : {&base.gen, &base.disc})
    for (const auto& l : *layers)
      n += l.kind == LayerKind::FC ? l.fc.W.size() + l.fc.b.size()
                                   : l.conv.K.size() + l.conv.b.size();
  return n;
}

std::string metrics_to_ndjson(const std::vector<MetricsRecord>& log) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& r : log) {
    os << "{\"step\":" << r.step << ",\"loss_d\":" << r.loss_d
       << ",\"loss_g\":" << r.loss_g << ",\"r1\":" << r.r1;
    if (r.fid >= 0) os << ",\"fid\":" << r.fid;
    os << "}\n";
  }
  return os.str();
}

}  // namespace ganmem
