// Acceptance gate: one pass/fail line per release criterion. Exit status is
// the number of failed criteria. Scale is chosen so the whole gate fits a
// desktop CPU budget; every threshold is checked against an independent
// oracle or a closed form, not against the implementation under test.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ganmem/checkpoint.hpp"
#include "ganmem/eval.hpp"
#include "ganmem/image_io.hpp"
#include "ganmem/replay.hpp"

using namespace ganmem;
namespace fs = std::filesystem;

namespace {

// ---- fixture scale -------------------------------------------------------

constexpr int kImageSize = 8;           // generation fixture resolution
constexpr int kPretrainSteps = 4000;
constexpr int kTaskSteps = 3500;
constexpr int kBatch = 16;
constexpr int kRealPerTask = 128;
constexpr int kSamplesPerTask = 64;
constexpr int kNTasks = 4;
// the pinned per-task default (1e-4) is meant for long production runs; the
// gate uses a faster schedule so real convergence fits the runtime budgets
constexpr double kFixtureLr = 1e-3;

ArchConfig gen_arch() {
  ArchConfig c;
  c.image_size = kImageSize;
  c.n_blocks = 1;
  c.block_channel_schedule = {32};
  c.noise_dim = 16;
  return c;
}

ArchConfig tiny_arch() {
  ArchConfig c;
  c.image_size = 8;
  c.n_blocks = 1;
  c.block_channel_schedule = {16};
  c.noise_dim = 8;
  return c;
}

uint64_t task_seed(int task) { return Rng::mix(4242, task); }

// Shared fixture: pretrained base plus a naive (dense-style) sequential run
// over four related tasks. Used by criteria 4, 5, 8 and 9.
struct GenFixture {
  BaseModel base;
  Embedder emb;
  std::vector<Dataset> data;          // per task, index 0 = task 1
  std::vector<StyleSet> styles;       // naive run
  std::vector<uint64_t> hashes_after; // 64-sample hash right after each task
  std::vector<double> fid_identity;
  std::vector<double> fid_naive;

  GenFixture() : emb(make_embedder(kImageSize, 3, 1234)) {
    ToyTaskSpec src;
    src.task_index = 0;
    src.n_images = kRealPerTask;
    src.image_size = kImageSize;
    Dataset source = make_toy_dataset(src);
    BaseModel fresh = build_models(gen_arch(), 20260823);
    TrainHyper pre;
    pre.steps = kPretrainSteps;
    pre.batch_size = kBatch;
    pre.seed = 77;
    pre.lr = kFixtureLr;
    base = finetune_all(fresh, source, pre).model;

    for (int t = 1; t <= kNTasks; ++t) {
      ToyTaskSpec spec;
      spec.task_index = t;
      spec.n_images = kRealPerTask;
      spec.image_size = kImageSize;
      data.push_back(make_toy_dataset(spec));

      StyleSet fresh_style = make_new_style(base, t);
      Tensor before = sample_images(base, fresh_style, kSamplesPerTask, 555 + t);
      fid_identity.push_back(fid_surrogate(emb, data.back().images, before));

      TrainHyper h;
      h.steps = kTaskSteps;
      h.batch_size = kBatch;
      h.seed = task_seed(t);
      h.lr = kFixtureLr;
      styles.push_back(train_task(base, data.back(), h, t).style);
      Tensor after = sample_images(base, styles.back(), kSamplesPerTask, 777 + t);
      hashes_after.push_back(tensor_hash(after));
      fid_naive.push_back(fid_surrogate(emb, data.back().images, after));
    }
  }
};

GenFixture& fixture() {
  static GenFixture f;
  return f;
}

// ---- criteria ------------------------------------------------------------

bool c1_identity_recovery(std::string& msg) {
  Rng rng(1);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    int dout = 3 + rng.uniform_int(18), din = 2 + rng.uniform_int(29);
    FCLayer fc{rng.normal_tensor({dout, din}), rng.normal_tensor({dout})};
    LayerStats st = row_stats(fc);
    FCLayer back = mfilm_modulate(fc, st, init_source_fc_style(st));
    for (int64_t j = 0; j < fc.W.size(); ++j)
      worst = std::max(worst, std::fabs(back.W[j] - fc.W[j]));
    for (int64_t j = 0; j < fc.b.size(); ++j)
      worst = std::max(worst, std::fabs(back.b[j] - fc.b[j]));
  }
  for (int i = 0; i < 50; ++i) {
    int co = 1 + rng.uniform_int(8), ci = 1 + rng.uniform_int(8);
    int k = 1 + rng.uniform_int(5);
    ConvLayer cv{rng.normal_tensor({co, ci, k, k}), rng.normal_tensor({co})};
    LayerStats st = kernel_stats(cv);
    ConvLayer back = madafm_modulate(cv, st, init_source_conv_style(st));
    for (int64_t j = 0; j < cv.K.size(); ++j)
      worst = std::max(worst, std::fabs(back.K[j] - cv.K[j]));
  }
  // single-precision storage: round the weights to float first
  double worst_rel_f32 = 0;
  for (int i = 0; i < 20; ++i) {
    FCLayer fc{rng.normal_tensor({6, 9}), Tensor({6})};
    for (int64_t j = 0; j < fc.W.size(); ++j)
      fc.W[j] = static_cast<double>(static_cast<float>(fc.W[j]));
    LayerStats st = row_stats(fc);
    FCLayer back = mfilm_modulate(fc, st, init_source_fc_style(st));
    for (int64_t j = 0; j < fc.W.size(); ++j) {
      float got = static_cast<float>(back.W[j]);
      float want = static_cast<float>(fc.W[j]);
      double denom = std::max(1e-12, std::fabs(static_cast<double>(want)));
      worst_rel_f32 = std::max(
          worst_rel_f32, std::fabs(static_cast<double>(got - want)) / denom);
    }
  }
  std::ostringstream os;
  os << "max abs err " << worst << ", f32 rel err " << worst_rel_f32;
  msg = os.str();
  return worst == 0.0 && worst_rel_f32 <= 1e-6;
}

bool c2_normalization(std::string& msg) {
  Rng rng(2);
  double worst_mean = 0, worst_std = 0;
  for (int i = 0; i < 50; ++i) {
    int dout = 2 + rng.uniform_int(20), din = 3 + rng.uniform_int(30);
    FCLayer fc{rng.normal_tensor({dout, din}, 2.0), Tensor({dout})};
    Tensor nw = normalize_fc(fc.W, row_stats(fc));
    for (int r = 0; r < dout; ++r) {
      long double m = 0;
      for (int c = 0; c < din; ++c) m += nw.at(r, c);
      m /= din;
      long double v = 0;
      for (int c = 0; c < din; ++c)
        v += (nw.at(r, c) - m) * (nw.at(r, c) - m);
      worst_mean = std::max<double>(worst_mean, std::fabs(static_cast<double>(m)));
      worst_std = std::max<double>(
          worst_std, std::fabs(std::sqrt(static_cast<double>(v / din)) - 1.0));
    }
  }
  for (int i = 0; i < 50; ++i) {
    int co = 1 + rng.uniform_int(6), ci = 1 + rng.uniform_int(6);
    int k = 2 + rng.uniform_int(4);
    ConvLayer cv{rng.normal_tensor({co, ci, k, k}, 2.0), Tensor({co})};
    Tensor nk = normalize_conv(cv.K, kernel_stats(cv));
    int64_t area = static_cast<int64_t>(k) * k;
    for (int a = 0; a < co; ++a)
      for (int b = 0; b < ci; ++b) {
        long double m = 0;
        const double* p = nk.data() + ((int64_t)a * ci + b) * area;
        for (int64_t q = 0; q < area; ++q) m += p[q];
        m /= area;
        long double v = 0;
        for (int64_t q = 0; q < area; ++q) v += (p[q] - m) * (p[q] - m);
        worst_mean = std::max<double>(worst_mean, std::fabs(static_cast<double>(m)));
        worst_std = std::max<double>(
            worst_std, std::fabs(std::sqrt(static_cast<double>(v / area)) - 1.0));
      }
  }
  std::ostringstream os;
  os << "worst mean " << worst_mean << ", worst std dev " << worst_std;
  msg = os.str();
  return worst_mean <= 1e-10 && worst_std <= 1e-10;
}

bool c3_gradients(std::string& msg) {
  ArchConfig arch = tiny_arch();
  arch.conditional = true;  // exercise the class rows and the class head too
  arch.n_classes_per_task = 2;
  BaseModel m = build_models(arch, 3);
  Rng rng(4);
  // smooth random inputs: piecewise-constant images put pre-activations
  // exactly on the leaky-relu kink, where central differences average the
  // two slopes and disagree with any one-sided subgradient
  Tensor xr = rng.normal_tensor({2, 3, 8, 8}, 0.5);
  Tensor z = rng.normal_tensor({2, m.config.noise_dim});
  std::vector<int> labels{0, 1};
  StyleSet style = make_new_style(m, 1, 2);

  // all dense style parameters, one leaf at a time through the full loss
  struct Slot {
    std::string path;
    int field;  // 0..2 for fc gamma/beta/b_fc, conv Gamma/B/b_conv
    bool is_fc;
  };
  std::vector<Slot> slots;
  for (const auto& [path, _] : style.fc)
    for (int f = 0; f < 3; ++f) slots.push_back({path, f, true});
  for (const auto& [path, _] : style.conv)
    for (int f = 0; f < 3; ++f) slots.push_back({path, f, false});

  auto loss_of = [&](const StyleVarSet& sv) {
    ModelVars gv = bind_modulated(m.gen, sv);
    ModelVars dv = bind_modulated(m.disc, sv);
    ad::Var fake = generator_forward(m, gv, ad::constant(z), labels);
    ad::Var aux;
    ad::Var dr = discriminator_forward(m, dv, ad::constant(xr), labels, &aux);
    ad::Var df = discriminator_forward(m, dv, fake, labels);
    auto [ld, lg] = gan_losses(dr, df);
    return ad::add(ad::add(ld, lg), cross_entropy(aux, labels));
  };
  auto base_vars = [&](const StyleSet& s) {
    StyleVarSet sv;
    for (const auto& [path, f] : s.fc)
      sv.fc[path] = {ad::constant(f.gamma), ad::constant(f.beta),
                     ad::constant(f.b_fc)};
    for (const auto& [path, c] : s.conv)
      sv.conv[path] = {ad::constant(c.Gamma), ad::constant(c.B),
                       ad::constant(c.b_conv)};
    return sv;
  };

  double worst = 0;
  std::string worst_slot;
  for (const Slot& sl : slots) {
    testutil::FdProblem p;
    if (sl.is_fc) {
      const FCStyle& f = style.fc.at(sl.path);
      p.params = {sl.field == 0 ? f.gamma : sl.field == 1 ? f.beta : f.b_fc};
    } else {
      const ConvStyle& c = style.conv.at(sl.path);
      p.params = {sl.field == 0 ? c.Gamma : sl.field == 1 ? c.B : c.b_conv};
    }
    p.make = [&](const std::vector<ad::Var>& v) {
      StyleVarSet sv = base_vars(style);
      if (sl.is_fc) {
        auto& e = sv.fc.at(sl.path);
        (sl.field == 0 ? e.gamma : sl.field == 1 ? e.beta : e.b_fc) = v[0];
      } else {
        auto& e = sv.conv.at(sl.path);
        (sl.field == 0 ? e.Gamma : sl.field == 1 ? e.B : e.b_conv) = v[0];
      }
      return loss_of(sv);
    };
    // two step sizes: degenerate-std layers carry ~1e8 scale factors whose
    // rounding noise dominates central differences at small h
    double err = std::min(testutil::fd_max_rel_err(p, 1e-5, 4),
                          testutil::fd_max_rel_err(p, 1e-4, 4));
    if (err > worst) {
      worst = err;
      worst_slot = sl.path;
    }
  }

  // factorized parameterization of one conv matrix: lambda, U, s, V
  {
    const std::string key = "G/B0/L0";
    const ConvStyle& cs = style.conv.at(key);
    int co = cs.Gamma.dim(0), ci = cs.Gamma.dim(1);
    Rng frng(5);
    Tensor L = frng.normal_tensor({co, 2}), R = frng.normal_tensor({ci, 2});
    testutil::FdProblem p;
    p.params = {frng.normal_tensor({2}), frng.normal_tensor({co, 3}),
                Tensor({3}, {0.7, -0.9, 0.4}), frng.normal_tensor({ci, 3})};
    p.make = [&](const std::vector<ad::Var>& v) {
      ad::Var gamma = ad::add(
          ad::matmul(ad::scale_cols(ad::constant(L), v[0]),
                     ad::transpose(ad::constant(R))),
          ad::matmul(ad::scale_cols(v[1], v[2]), ad::transpose(v[3])));
      StyleVarSet sv = base_vars(style);
      sv.conv.at(key).Gamma = gamma;
      return ad::add(loss_of(sv), sparsity_penalty_var(v[2], 2, 0.01));
    };
    double err = testutil::fd_max_rel_err(p, 1e-5, 6);
    if (err > worst) {
      worst = err;
      worst_slot = key + " factors";
    }
  }
  std::ostringstream os;
  os << "max rel err " << worst << " (" << worst_slot << ")";
  msg = os.str();
  return worst < 1e-4;
}

bool c4_no_forgetting(std::string& msg) {
  GenFixture& f = fixture();
  // regenerate every task's fixed-seed samples after the whole stream
  bool bitwise = true;
  ForgettingTable table;
  for (int t = 0; t < kNTasks; ++t) {
    Tensor again = sample_images(f.base, f.styles[t], kSamplesPerTask, 777 + t + 1);
    if (tensor_hash(again) != f.hashes_after[t]) bitwise = false;
    std::vector<double> row;
    for (int k = 0; k <= t; ++k) {
      Tensor s = sample_images(f.base, f.styles[k], kSamplesPerTask, 777 + k + 1);
      row.push_back(fid_surrogate(f.emb, f.data[k].images, s));
    }
    table.add_round(std::move(row));
  }
  bool constant = true;
  for (int k = 0; k < kNTasks; ++k)
    if (!table.row_constant(k, 0.0)) constant = false;
  msg = bitwise ? "64-sample regeneration bitwise identical, report rows constant"
                : "sample hash drifted across tasks";
  return bitwise && constant;
}

bool c5_generation_improves(std::string& msg) {
  GenFixture& f = fixture();
  std::ostringstream os;
  bool ok = true;
  for (int t = 0; t < kNTasks; ++t) {
    os << (t ? ", " : "") << "task " << t + 1 << ": " << f.fid_naive[t] << " vs "
       << f.fid_identity[t];
    if (!(f.fid_naive[t] < 0.5 * f.fid_identity[t])) ok = false;
  }
  msg = os.str();
  return ok;
}

bool c6_r1_closed_form(std::string& msg) {
  Rng rng(6);
  Tensor w = rng.normal_tensor({1, 8});
  Tensor x = rng.normal_tensor({5, 8});
  ad::Var xv = ad::leaf(x);
  ad::Var d = ad::linear(xv, ad::constant(w), ad::constant(Tensor({1})));
  double pen = r1_term(xv, d, 10.0).val()[0];
  double wn = 0;
  for (int64_t i = 0; i < w.size(); ++i) wn += w[i] * w[i];
  double r1_err = std::fabs(pen - 5.0 * wn);

  Tensor zeros({4});
  auto [ld, lg] = gan_losses(ad::constant(zeros), ad::constant(zeros));
  double loss_err = std::fabs(ld.val()[0] - 2 * std::log(2.0));
  (void)lg;
  std::ostringstream os;
  os << "R1 err " << r1_err << ", symmetric-point err " << loss_err;
  msg = os.str();
  return r1_err < 1e-10 && loss_err < 1e-12;
}

bool c7_energy_truncation(std::string& msg) {
  const double xs[] = {30, 50, 80, 90, 95, 100};
  Rng rng(7);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    int r = 1 + rng.uniform_int(50), c = 1 + rng.uniform_int(50);
    Tensor m = rng.normal_tensor({r, c});
    SvdTriple full = full_svd(m);
    long double total = 0;
    for (int64_t q = 0; q < full.s.size(); ++q)
      total += static_cast<long double>(full.s[q]) * full.s[q];
    double x = xs[i % 6];
    int oracle = static_cast<int>(full.s.size());
    long double acc = 0;
    for (int64_t q = 0; q < full.s.size(); ++q) {
      acc += static_cast<long double>(full.s[q]) * full.s[q];
      if (acc >= total * x / 100.0) {
        oracle = static_cast<int>(q) + 1;
        break;
      }
    }
    SvdTriple t = energy_truncate(m, x);
    if (static_cast<int>(t.s.size()) != oracle) {
      msg = "kept rank not minimal at x=" + std::to_string(x);
      return false;
    }
    long double err = 0;
    int k = static_cast<int>(t.s.size());
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < c; ++b) {
        double v = 0;
        for (int q = 0; q < k; ++q) v += t.U.at(a, q) * t.s[q] * t.V.at(b, q);
        err += (m.at(a, b) - v) * (m.at(a, b) - v);
      }
    if (err > (1.0 - x / 100.0) * total + 1e-9) {
      msg = "Frobenius bound violated at x=" + std::to_string(x);
      return false;
    }
    ++checked;
  }
  msg = std::to_string(checked) + " matrices, rank minimal and bound holds";
  return true;
}

bool c8_compression_trend(std::string& msg) {
  GenFixture& f = fixture();
  KnowledgeBase kb;
  EnergyPolicy policy;
  std::vector<double> ratio, fid_c;
  for (int t = 1; t <= kNTasks; ++t) {
    TrainHyper h;
    h.steps = kTaskSteps;  // equal steps and seeds to the naive run
    h.batch_size = kBatch;
    h.seed = task_seed(t);
    h.lr = kFixtureLr;
    auto r = train_task_compressed(f.base, f.data[t - 1], h, t, kb, policy);
    ratio.push_back(static_cast<double>(r.compressed_matrix_params) /
                    static_cast<double>(r.naive_matrix_params));
    Tensor s = sample_images(f.base, r.materialized, kSamplesPerTask, 777 + t);
    fid_c.push_back(fid_surrogate(f.emb, f.data[t - 1].images, s));
  }
  std::ostringstream os;
  os << "ratios";
  for (double r : ratio) os << " " << r;
  os << "; fid compressed/naive";
  for (int t = 0; t < kNTasks; ++t)
    os << " " << fid_c[t] << "/" << f.fid_naive[t];
  msg = os.str();
  if (!(ratio[0] < 0.60)) return false;
  for (int t = 1; t < kNTasks; ++t)
    if (!(ratio[t] < ratio[t - 1])) return false;
  for (int t = 0; t < kNTasks; ++t)
    if (!(fid_c[t] <= 1.25 * f.fid_naive[t])) return false;
  return true;
}

bool c9_interpolation(std::string& msg) {
  GenFixture& f = fixture();
  TaskRegistry reg(f.base);
  reg.register_task(f.styles[0]);
  reg.register_task(f.styles[1]);
  bool end0 = reg.interpolate(1, 2, 0.0).hash() == f.styles[0].hash();
  StyleSet at1 = reg.interpolate(1, 2, 1.0);
  at1.task_id = f.styles[1].task_id;
  bool end1 = at1.hash() == f.styles[1].hash();
  StyleSet mid = reg.interpolate(1, 2, 0.5);
  double worst = 0;
  for (const auto& [path, s] : mid.conv) {
    const Tensor& a = f.styles[0].conv.at(path).Gamma;
    const Tensor& b = f.styles[1].conv.at(path).Gamma;
    for (int64_t i = 0; i < s.Gamma.size(); ++i)
      worst = std::max(worst, std::fabs(s.Gamma[i] - 0.5 * (a[i] + b[i])));
  }
  std::ostringstream os;
  os << "endpoints " << (end0 && end1 ? "bit-exact" : "DRIFTED")
     << ", midpoint err " << worst;
  msg = os.str();
  return end0 && end1 && worst <= 1e-12;
}

bool c10_lifelong_trend(std::string& msg) {
  ArchConfig arch = tiny_arch();
  arch.block_channel_schedule = {32};
  arch.conditional = true;
  arch.n_classes_per_task = 3;
  ToyTaskSpec src;
  src.task_index = 0;
  src.n_classes = 3;
  src.n_images = 96;
  src.image_size = 8;
  BaseModel fresh = build_models(arch, 515);
  TrainHyper pre;
  pre.steps = 120;
  pre.batch_size = kBatch;
  pre.seed = 88;
  BaseModel base = finetune_all(fresh, make_toy_dataset(src), pre).model;

  ToyStreamSpec stream_spec;
  stream_spec.n_tasks = 4;
  stream_spec.n_classes = 3;
  stream_spec.train_per_class = 48;
  stream_spec.test_per_class = 24;
  stream_spec.image_size = 8;
  auto stream = make_toy_stream(stream_spec);

  LifelongConfig cfg;
  cfg.cls.image_size = 8;
  cfg.cls.n_classes_total = 12;
  cfg.cls.steps_per_task = 500;
  cfg.cls.batch_per_task = 16;
  cfg.gan.steps = 300;
  cfg.gan.batch_size = kBatch;
  cfg.gan.seed = 99;

  LifelongResult replay = run_lifelong(base, stream, cfg, LifelongMode::Replay);
  LifelongResult naive = run_lifelong(base, stream, cfg, LifelongMode::Naive);
  LifelongResult joint = run_lifelong(base, stream, cfg, LifelongMode::Joint);
  if (replay.aborted || naive.aborted || joint.aborted) {
    msg = "a run aborted";
    return false;
  }
  double r = replay.all_seen.back(), n = naive.all_seen.back(),
         j = joint.all_seen.back();
  std::ostringstream os;
  os << "final all-seen accuracy replay " << r << ", naive " << n << ", joint "
     << j;
  msg = os.str();
  return r >= 2.0 * n && r >= j - 0.15;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(GANMEM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

bool file_bytes_equal(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string sa((std::istreambuf_iterator<char>(fa)), {});
  std::string sb((std::istreambuf_iterator<char>(fb)), {});
  return !sa.empty() && sa == sb;
}

bool c11_determinism(std::string& msg) {
  fs::path work = fs::temp_directory_path() / "ganmem_acceptance_c11";
  fs::remove_all(work);
  fs::create_directories(work);
  std::string a = (work / "a").string(), b = (work / "b").string();
  std::string flags =
      " --seed 5 --steps 3 --batch 4 --images 16"
      " --image-size 8 --blocks 1 --channels-schedule 16 --noise-dim 8";
  if (run_cli("pretrain-base --out " + a + flags) != 0 ||
      run_cli("pretrain-base --out " + b + flags) != 0) {
    msg = "pretrain-base failed";
    return false;
  }
  if (run_cli("train-task --ckpt " + a + " --steps 3 --images 16 --seed 6") != 0 ||
      run_cli("train-task --ckpt " + b + " --steps 3 --images 16 --seed 6") != 0) {
    msg = "train-task failed";
    return false;
  }
  bool cmd_det = checkpoint_dir_hash(a) == checkpoint_dir_hash(b);

  // save -> load -> save byte-identity (the CLI directory also holds metrics
  // and audit files, so compare two library-written generations)
  std::string c = (work / "c").string(), d = (work / "d").string();
  save_checkpoint(c, load_checkpoint(a));
  save_checkpoint(d, load_checkpoint(c));
  bool roundtrip = checkpoint_dir_hash(c) == checkpoint_dir_hash(d);

  std::string s1 = (work / "s1").string(), s2 = (work / "s2").string();
  bool samples = run_cli("sample --ckpt " + a + " --out " + s1 +
                         " --task 1 --n 4 --seed 9") == 0 &&
                 run_cli("sample --ckpt " + a + " --out " + s2 +
                         " --task 1 --n 4 --seed 9") == 0 &&
                 file_bytes_equal(fs::path(s1) / "grid.ppm",
                                  fs::path(s2) / "grid.ppm");
  fs::remove_all(work);
  std::ostringstream os;
  os << "command determinism " << (cmd_det ? "ok" : "FAILED") << ", round-trip "
     << (roundtrip ? "ok" : "FAILED") << ", sampling "
     << (samples ? "ok" : "FAILED");
  msg = os.str();
  return cmd_det && roundtrip && samples;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  std::vector<Criterion> cs = {
      {"identity recovery", c1_identity_recovery},
      {"normalization", c2_normalization},
      {"gradient correctness", c3_gradients},
      {"no forgetting (bitwise)", c4_no_forgetting},
      {"generation improves", c5_generation_improves},
      {"R1 closed forms", c6_r1_closed_form},
      {"energy truncation", c7_energy_truncation},
      {"compression trend", c8_compression_trend},
      {"interpolation", c9_interpolation},
      {"lifelong classification trend", c10_lifelong_trend},
      {"checkpoint and command determinism", c11_determinism},
  };
  int failures = 0;
  for (size_t i = 0; i < cs.size(); ++i) {
    auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = cs[i].fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    std::printf("[%2zu] %-36s %s (%.1fs) %s\n", i + 1, cs[i].name,
                ok ? "PASS" : "FAIL", secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
