#include "ganmem/compress.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

#include "ganmem/rng.hpp"

namespace ganmem {

using ad::Var;
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

int block_index(const std::string& path) {
  auto pos = path.find("/B");
  if (pos == std::string::npos) return -1;
  size_t i = pos + 2;
  int blk = 0;
  bool any = false;
  while (i < path.size() && path[i] >= '0' && path[i] <= '9') {
    blk = blk * 10 + (path[i] - '0');
    ++i;
    any = true;
  }
  return any ? blk : -1;
}

}  // namespace

void EnergyPolicy::validate() const {
  for (const auto& [blk, x] : block_energy)
    if (blk < 0 || x <= 0.0 || x > 100.0)
      throw std::invalid_argument("EnergyPolicy: X must be in (0,100]");
  if (reg_weight < 0) throw std::invalid_argument("EnergyPolicy: negative weight");
}

double EnergyPolicy::energy_for(const std::string& layer_path, bool is_disc) const {
  if (is_disc && !compress_discriminator) return -1.0;
  int blk = block_index(layer_path);
  if (blk < 0) return -1.0;
  auto it = block_energy.find(blk);
  return it == block_energy.end() ? -1.0 : it->second;
}

uint64_t KnowledgeBase::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [key, e] : entries) {
    h = fnv1a64(key.data(), key.size(), h);
    if (e.L.size()) h = tensor_hash(e.L, h);
    if (e.R.size()) h = tensor_hash(e.R, h);
  }
  return h;
}

Tensor reconstruct(const KnowledgeBase& kb, const std::string& key,
                   const MatrixFactor& f) {
  int co = f.U.dim(0), ci = f.V.dim(0);
  EMat acc = EMat::Zero(co, ci);
  int k = f.kb_snapshot;
  if (k > 0) {
    auto it = kb.entries.find(key);
    if (it == kb.entries.end() || it->second.width() < k || f.lambda.size() != k)
      throw std::invalid_argument("reconstruct: snapshot/coefficient mismatch for " +
                                  key);
    Eigen::Map<const EMat> L(it->second.L.data(), co, it->second.width());
    Eigen::Map<const EMat> R(it->second.R.data(), ci, it->second.width());
    Eigen::Map<const Eigen::VectorXd> lam(f.lambda.data(), k);
    acc += L.leftCols(k) * lam.asDiagonal() * R.leftCols(k).transpose();
  } else if (f.lambda.size() != 0) {
    throw std::invalid_argument("reconstruct: coefficients without snapshot");
  }
  int r = static_cast<int>(f.s.size());
  if (r > 0) {
    Eigen::Map<const EMat> U(f.U.data(), co, r);
    Eigen::Map<const EMat> V(f.V.data(), ci, r);
    Eigen::Map<const Eigen::VectorXd> s(f.s.data(), r);
    acc += U * s.asDiagonal() * V.transpose();
  }
  Tensor out({co, ci});
  Eigen::Map<EMat>(out.data(), co, ci) = acc;
  if (!out.all_finite()) throw std::runtime_error("reconstruct: non-finite result");
  return out;
}

StyleSet materialize(const BaseModel& base, const KnowledgeBase& kb,
                     const CompressedStyle& cs) {
  (void)base;
  StyleSet s = cs.dense;
  s.task_id = cs.task_id;
  s.class_count = cs.class_count;
  s.arch_fingerprint = cs.arch_fingerprint;
  for (const auto& [key, f] : cs.factors) {
    auto slash = key.rfind('/');
    std::string path = key.substr(0, slash);
    std::string which = key.substr(slash + 1);
    auto it = s.conv.find(path);
    if (it == s.conv.end())
      throw std::invalid_argument("materialize: unknown layer " + path);
    if (which == "Gamma")
      it->second.Gamma = reconstruct(kb, key, f);
    else if (which == "B")
      it->second.B = reconstruct(kb, key, f);
    else
      throw std::invalid_argument("materialize: bad key " + key);
  }
  return s;
}

Tensor sparsity_weights(int length, int task_index) {
  Tensor eta({length});
  if (task_index <= 1) {
    for (int j = 0; j < length; ++j) eta[j] = 1.0;
  } else {
    for (int j = 0; j < length; ++j) {
      double x = 10.0 * static_cast<double>(j) / static_cast<double>(length);
      eta[j] = 0.1 + 1.0 / (1.0 + std::exp(-x));
    }
  }
  return eta;
}

double sparsity_penalty(const Tensor& s, int task_index, double reg_weight) {
  Tensor eta = sparsity_weights(static_cast<int>(s.size()), task_index);
  double acc = 0.0;
  for (int64_t j = 0; j < s.size(); ++j) acc += eta[j] * std::fabs(s[j]);
  return reg_weight * acc;
}

Var sparsity_penalty_var(const Var& s, int task_index, double reg_weight) {
  Tensor eta = sparsity_weights(static_cast<int>(s.val().size()), task_index);
  return ad::scale(ad::sum(ad::mul_const(ad::abs_v(s), eta)), reg_weight);
}

SvdTriple full_svd(const Tensor& m) {
  if (m.rank() != 2 || !m.all_finite())
    throw std::invalid_argument("svd: need finite rank-2 matrix");
  int co = m.dim(0), ci = m.dim(1);
  Eigen::Map<const EMat> M(m.data(), co, ci);
  Eigen::JacobiSVD<EMat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  int r = static_cast<int>(svd.singularValues().size());
  SvdTriple t{Tensor({co, r}), Tensor({r}), Tensor({ci, r})};
  Eigen::Map<EMat>(t.U.data(), co, r) = svd.matrixU();
  Eigen::Map<EMat>(t.V.data(), ci, r) = svd.matrixV();
  for (int i = 0; i < r; ++i) t.s[i] = svd.singularValues()[i];
  return t;
}

SvdTriple energy_truncate(const Tensor& m, double x_percent) {
  if (x_percent <= 0.0 || x_percent > 100.0)
    throw std::invalid_argument("energy_truncate: X must be in (0,100]");
  SvdTriple full = full_svd(m);
  int n = static_cast<int>(full.s.size());
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += full.s[i] * full.s[i];
  int keep = n;
  if (total > 0.0) {
    double target = total * x_percent / 100.0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += full.s[i] * full.s[i];
      if (acc >= target) {
        keep = i + 1;
        break;
      }
    }
  } else {
    keep = 0;  // zero matrix carries no energy
  }
  int co = m.dim(0), ci = m.dim(1);
  SvdTriple out{Tensor({co, keep}), Tensor({keep}), Tensor({ci, keep})};
  for (int i = 0; i < co; ++i)
    for (int j = 0; j < keep; ++j) out.U.at(i, j) = full.U.at(i, j);
  for (int i = 0; i < ci; ++i)
    for (int j = 0; j < keep; ++j) out.V.at(i, j) = full.V.at(i, j);
  for (int j = 0; j < keep; ++j) out.s[j] = full.s[j];
  return out;
}

void kb_update(KnowledgeBase& kb, const std::string& key, const Tensor& u_hat,
               const Tensor& v_hat) {
  if (u_hat.rank() != 2 || v_hat.rank() != 2 || u_hat.dim(1) != v_hat.dim(1))
    throw std::invalid_argument("kb_update: bad factor shapes");
  auto& e = kb.entries[key];
  if (e.L.size() == 0 && e.L.rank() == 0) {
    e.L = u_hat;
    e.R = v_hat;
    return;
  }
  if (e.L.dim(0) != u_hat.dim(0) || e.R.dim(0) != v_hat.dim(0))
    throw std::invalid_argument("kb_update: dimension mismatch for " + key);
  int co = e.L.dim(0), ci = e.R.dim(0);
  int k0 = e.L.dim(1), r = u_hat.dim(1);
  Tensor L({co, k0 + r}), R({ci, k0 + r});
  for (int i = 0; i < co; ++i) {
    for (int j = 0; j < k0; ++j) L.at(i, j) = e.L.at(i, j);
    for (int j = 0; j < r; ++j) L.at(i, k0 + j) = u_hat.at(i, j);
  }
  for (int i = 0; i < ci; ++i) {
    for (int j = 0; j < k0; ++j) R.at(i, j) = e.R.at(i, j);
    for (int j = 0; j < r; ++j) R.at(i, k0 + j) = v_hat.at(i, j);
  }
  e.L = std::move(L);
  e.R = std::move(R);
}

// --- factorized training --------------------------------------------------

namespace {

struct FactorParam {
  std::string key;
  std::string path;
  bool is_gamma = false;
  bool is_disc = false;
  int co = 0, ci = 0, r = 0;
  int kb_snapshot = 0;
  Tensor lambda, U, s, V;

  MatrixFactor current() const { return MatrixFactor{lambda, U, s, V, kb_snapshot}; }

  // Factorized expression; registers the four leaves with the caller.
  Var bind(const KnowledgeBase& kb, std::vector<Var>* leaves,
           std::vector<Tensor*>* params, Var* s_leaf) {
    Var lam = ad::leaf(lambda), u = ad::leaf(U), sv = ad::leaf(s), v = ad::leaf(V);
    leaves->insert(leaves->end(), {lam, u, sv, v});
    params->insert(params->end(), {&lambda, &U, &s, &V});
    if (s_leaf) *s_leaf = sv;
    Var e = ad::matmul(ad::scale_cols(u, sv), ad::transpose(v));
    if (kb_snapshot > 0) {
      const auto& entry = kb.entries.at(key);
      Tensor Lsnap({co, kb_snapshot}), Rsnap_t({kb_snapshot, ci});
      for (int i = 0; i < co; ++i)
        for (int j = 0; j < kb_snapshot; ++j) Lsnap.at(i, j) = entry.L.at(i, j);
      for (int i = 0; i < ci; ++i)
        for (int j = 0; j < kb_snapshot; ++j) Rsnap_t.at(j, i) = entry.R.at(i, j);
      Var kb_term = ad::matmul(ad::scale_cols(ad::constant(Lsnap), lam),
                               ad::constant(Rsnap_t));
      e = ad::add(e, kb_term);
    }
    return e;
  }
};

// Start the residual at the neutral style value (all-ones for Gamma, zero
// for B) plus a small random component so U/V receive gradient signal.
void init_factor(FactorParam& fp, uint64_t seed) {
  Rng rng(Rng::mix(seed, fnv1a64(fp.key.data(), fp.key.size())));
  fp.lambda = Tensor::zeros({fp.kb_snapshot});
  fp.U = rng.normal_tensor({fp.co, fp.r}, std::sqrt(1.0 / fp.co));
  fp.V = rng.normal_tensor({fp.ci, fp.r}, std::sqrt(1.0 / fp.ci));
  fp.s = Tensor::full({fp.r}, 1e-3);
  if (fp.is_gamma) {
    // first component carries the all-ones neutral scale exactly
    double su = 1.0 / std::sqrt(static_cast<double>(fp.co));
    double sv = 1.0 / std::sqrt(static_cast<double>(fp.ci));
    for (int i = 0; i < fp.co; ++i) fp.U.at(i, 0) = su;
    for (int i = 0; i < fp.ci; ++i) fp.V.at(i, 0) = sv;
    fp.s[0] = std::sqrt(static_cast<double>(fp.co) * fp.ci);
  }
}

}  // namespace

CompressResult train_task_compressed(const BaseModel& base, const Dataset& data,
                                     const TrainHyper& hyper, int task_id,
                                     KnowledgeBase& kb, const EnergyPolicy& policy,
                                     const FidCallback& fid_cb) {
  hyper.validate();
  policy.validate();
  if (data.size() == 0)
    throw std::invalid_argument("train_task_compressed: empty dataset");
  const bool cond = base.config.conditional;
  uint64_t base_hash = base.weights_hash();
  int task_ordinal = kb.n_tasks() + 1;  // eta rule counts compressed tasks

  CompressResult res;
  res.style.task_id = task_id;
  res.style.class_count = cond ? base.config.n_classes_per_task : 1;
  res.style.arch_fingerprint = base.arch_fingerprint();
  res.style.dense = make_new_style(base, task_id, res.style.class_count);

  std::vector<FactorParam> factors;
  for (const Layer* l : base.modulated_layers()) {
    if (l->kind != LayerKind::Conv) continue;
    bool is_disc = l->path.rfind("D/", 0) == 0;
    if (policy.energy_for(l->path, is_disc) < 0) continue;
    for (bool is_gamma : {true, false}) {
      FactorParam fp;
      fp.key = l->path + (is_gamma ? "/Gamma" : "/B");
      fp.path = l->path;
      fp.is_gamma = is_gamma;
      fp.is_disc = is_disc;
      fp.co = l->d_out();
      fp.ci = l->d_in();
      fp.r = std::min(fp.co, fp.ci);
      auto it = kb.entries.find(fp.key);
      fp.kb_snapshot = it == kb.entries.end() ? 0 : it->second.width();
      init_factor(fp, hyper.seed);
      factors.push_back(std::move(fp));
    }
  }

  Adam adam_g(hyper.lr, hyper.adam_beta1, hyper.adam_beta2);
  Adam adam_d(hyper.lr, hyper.adam_beta1, hyper.adam_beta2);
  int zd = base.config.noise_dim;

  // Bind one side's parameters as leaves, the other side's as constants, and
  // swap covered matrices for their factorized expressions.
  auto bind_side = [&](bool disc_side, std::vector<Var>* leaves,
                       std::vector<Tensor*>* params, std::vector<Var>* s_leaves) {
    StyleVarSet svars;
    for (auto& [path, s] : res.style.dense.fc) {
      bool is_disc = path.rfind("D/", 0) == 0;
      FCStyleVars fv;
      if (is_disc == disc_side) {
        fv.gamma = ad::leaf(s.gamma);
        fv.beta = ad::leaf(s.beta);
        fv.b_fc = ad::leaf(s.b_fc);
        leaves->insert(leaves->end(), {fv.gamma, fv.beta, fv.b_fc});
        params->insert(params->end(), {&s.gamma, &s.beta, &s.b_fc});
      } else {
        fv = FCStyleVars{ad::constant(s.gamma), ad::constant(s.beta),
                         ad::constant(s.b_fc)};
      }
      svars.fc.emplace(path, fv);
    }
    for (auto& [path, s] : res.style.dense.conv) {
      bool is_disc = path.rfind("D/", 0) == 0;
      ConvStyleVars cv;
      if (is_disc == disc_side) {
        cv.Gamma = ad::leaf(s.Gamma);
        cv.B = ad::leaf(s.B);
        cv.b_conv = ad::leaf(s.b_conv);
        leaves->insert(leaves->end(), {cv.Gamma, cv.B, cv.b_conv});
        params->insert(params->end(), {&s.Gamma, &s.B, &s.b_conv});
      } else {
        cv = ConvStyleVars{ad::constant(s.Gamma), ad::constant(s.B),
                           ad::constant(s.b_conv)};
      }
      svars.conv.emplace(path, cv);
    }
    for (auto& fp : factors) {
      auto& cv = svars.conv.at(fp.path);
      if (fp.is_disc != disc_side) {
        Tensor m = reconstruct(kb, fp.key, fp.current());
        (fp.is_gamma ? cv.Gamma : cv.B) = ad::constant(m);
        continue;
      }
      Var s_leaf;
      Var e = fp.bind(kb, leaves, params, &s_leaf);
      (fp.is_gamma ? cv.Gamma : cv.B) = e;
      if (s_leaves) s_leaves->push_back(s_leaf);
    }
    return svars;
  };

  auto current_style = [&]() {
    StyleSet s = res.style.dense;
    for (auto& fp : factors) {
      Tensor m = reconstruct(kb, fp.key, fp.current());
      auto& cv = s.conv.at(fp.path);
      (fp.is_gamma ? cv.Gamma : cv.B) = m;
    }
    return s;
  };

  for (int step = 0; step < hyper.steps; ++step) {
    Rng rng(Rng::mix(hyper.seed, (static_cast<uint64_t>(task_id) << 40) | step));

    {  // D step
      std::vector<Var> leaves, s_leaves;
      std::vector<Tensor*> params;
      StyleVarSet svars = bind_side(true, &leaves, &params, &s_leaves);
      ModelVars gv = bind_modulated(base.gen, svars);
      ModelVars dv = bind_modulated(base.disc, svars);

      std::vector<int> ridx, rl, fl;
      for (int i = 0; i < hyper.batch_size; ++i) {
        int k = rng.uniform_int(data.size());
        ridx.push_back(k);
        if (cond) rl.push_back(data.labels[static_cast<size_t>(k)]);
      }
      if (cond)
        for (int i = 0; i < hyper.batch_size; ++i)
          fl.push_back(rng.uniform_int(data.n_classes));
      Tensor x_real = data.batch(ridx);
      Var z = ad::constant(rng.normal_tensor({hyper.batch_size, zd}));
      Var x_fake = ad::detach(generator_forward(base, gv, z, fl));
      Var aux_real;
      Var d_real = discriminator_forward(base, dv, ad::constant(x_real), rl,
                                         cond ? &aux_real : nullptr);
      Var d_fake = discriminator_forward(base, dv, x_fake, fl);
      auto [loss_d, lg] = gan_losses(d_real, d_fake);
      (void)lg;
      Var r1 = r1_penalty(base, dv, x_real, rl, hyper.r1_gamma);
      Var total = ad::add(loss_d, r1);
      if (cond)
        total = ad::add(total, ad::scale(cross_entropy(aux_real, rl),
                                         hyper.aux_ce_weight));
      for (const Var& sv : s_leaves)
        total = ad::add(total, sparsity_penalty_var(sv, task_ordinal, policy.reg_weight));
      auto gs = ad::grad(total, leaves);
      std::vector<Tensor> gt;
      for (auto& g : gs) gt.push_back(g.val());
      adam_d.step(params, gt);

      MetricsRecord rec;
      rec.step = step;
      rec.loss_d = loss_d.val()[0];
      rec.r1 = r1.val()[0];
      if (!std::isfinite(rec.loss_d))
        throw std::runtime_error("compressed training diverged at step " +
                                 std::to_string(step));
      res.log.push_back(rec);
    }

    {  // G step
      std::vector<Var> leaves, s_leaves;
      std::vector<Tensor*> params;
      StyleVarSet svars = bind_side(false, &leaves, &params, &s_leaves);
      ModelVars gv = bind_modulated(base.gen, svars);
      ModelVars dv = bind_modulated(base.disc, svars);

      std::vector<int> fl;
      if (cond)
        for (int i = 0; i < hyper.batch_size; ++i)
          fl.push_back(rng.uniform_int(data.n_classes));
      Var z = ad::constant(rng.normal_tensor({hyper.batch_size, zd}));
      Var x_fake = generator_forward(base, gv, z, fl);
      Var aux_fake;
      Var d_fake = discriminator_forward(base, dv, x_fake, fl,
                                         cond ? &aux_fake : nullptr);
      Var loss_g = ad::mean(ad::softplus(ad::neg(d_fake)));
      loss_g = ad::add(loss_g, range_penalty(x_fake, kPixelRangeWeight));
      if (cond)
        loss_g = ad::add(loss_g, ad::scale(cross_entropy(aux_fake, fl),
                                           hyper.aux_ce_weight));
      Var total = loss_g;
      for (const Var& sv : s_leaves)
        total = ad::add(total, sparsity_penalty_var(sv, task_ordinal, policy.reg_weight));
      auto gs = ad::grad(total, leaves);
      std::vector<Tensor> gt;
      for (auto& g : gs) gt.push_back(g.val());
      adam_g.step(params, gt);
      res.log.back().loss_g = loss_g.val()[0];
      if (!std::isfinite(res.log.back().loss_g))
        throw std::runtime_error("compressed training diverged at step " +
                                 std::to_string(step));
    }

    if (fid_cb && hyper.fid_every > 0 &&
        (step % hyper.fid_every == hyper.fid_every - 1 || step == hyper.steps - 1)) {
      std::vector<int> labels;
      if (cond) {
        Rng lr(Rng::mix(hyper.seed, 0xf1d));
        for (int i = 0; i < 128; ++i) labels.push_back(lr.uniform_int(data.n_classes));
      }
      Tensor imgs = sample_images(base, current_style(), 128,
                                  Rng::mix(hyper.seed, 0xf1d), labels);
      res.log.back().fid = fid_cb(imgs);
    }
  }

  // truncate realized residuals, store factors, grow the knowledge base
  std::map<std::string, int> snapshot_widths;
  for (auto& fp : factors) {
    double x = policy.energy_for(fp.path, fp.is_disc);
    Tensor e_dense({fp.co, fp.ci});
    {
      Eigen::Map<const EMat> U(fp.U.data(), fp.co, fp.r);
      Eigen::Map<const EMat> V(fp.V.data(), fp.ci, fp.r);
      Eigen::Map<const Eigen::VectorXd> s(fp.s.data(), fp.r);
      Eigen::Map<EMat>(e_dense.data(), fp.co, fp.ci) =
          U * s.asDiagonal() * V.transpose();
    }
    SvdTriple tr = energy_truncate(e_dense, x);
    snapshot_widths[fp.key] = fp.kb_snapshot;
    MatrixFactor stored{fp.lambda, tr.U, tr.s, tr.V, fp.kb_snapshot};
    res.style.factors[fp.key] = stored;
    res.naive_matrix_params += static_cast<int64_t>(fp.co) * fp.ci;
    res.compressed_matrix_params += stored.param_count();
    kb_update(kb, fp.key, tr.U, tr.V);
  }
  kb.snapshots[task_id] = snapshot_widths;

  res.materialized = materialize(base, kb, res.style);

  if (base.weights_hash() != base_hash)
    throw std::logic_error("train_task_compressed: frozen base changed");
  return res;
}

}  // namespace ganmem
