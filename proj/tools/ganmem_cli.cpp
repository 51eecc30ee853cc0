// Command-line surface for the generative-memory library: pretrain a base
// model, append per-task styles (optionally factorized), sample/interpolate,
// run the lifelong classification harness, and evaluate checkpoints.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ganmem/checkpoint.hpp"
#include "ganmem/compress.hpp"
#include "ganmem/data.hpp"
#include "ganmem/eval.hpp"
#include "ganmem/image_io.hpp"
#include "ganmem/registry.hpp"
#include "ganmem/replay.hpp"
#include "ganmem/rng.hpp"
#include "ganmem/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ganmem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitMissing = 4;
constexpr uint64_t kEmbedderSeed = 1234;  // committed; never retrained

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Checkpoint load_ckpt_checked(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "manifest.json"))
    throw MissingArtifact("no checkpoint at " + dir);
  return load_checkpoint(dir);
}

void write_audit(const std::string& dir, const std::string& cmd, const json& cfg) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / (cmd + "_config.json"));
  f << cfg.dump(2) << "\n";
}

// Registry over every task in the checkpoint, compressed ones materialized.
TaskRegistry build_registry(const Checkpoint& cp) {
  TaskRegistry reg(cp.base);
  std::map<int, StyleSet> all = cp.styles;
  for (const auto& [id, cs] : cp.compressed)
    all[id] = materialize(cp.base, cp.kb, cs);
  for (const auto& [id, s] : all) reg.register_task(s);
  return reg;
}

GroupMask parse_groups(const std::string& s) {
  if (s == "all") return GroupMask::all();
  GroupMask m = GroupMask::none();
  if (s == "none") return m;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "scales")
      m.scales = true;
    else if (tok == "shifts")
      m.shifts = true;
    else if (tok == "biases")
      m.biases = true;
    else
      throw std::invalid_argument("unknown group: " + tok);
  }
  return m;
}

BlockMask parse_blocks(const std::string& s, int n_blocks) {
  if (s == "all") return BlockMask::all();
  BlockMask m = BlockMask::none(n_blocks);
  if (s == "none") return m;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "fc") {
      m.fc = true;
    } else {
      int b = std::stoi(tok);
      if (b < 0 || b >= n_blocks)
        throw std::invalid_argument("block out of range: " + tok);
      m.blocks[static_cast<size_t>(b)] = true;
    }
  }
  return m;
}

Dataset task_dataset(const ArchConfig& cfg, int task, int n_images,
                     uint64_t data_seed) {
  ToyTaskSpec spec;
  spec.task_index = task;
  spec.n_classes = cfg.conditional ? cfg.n_classes_per_task : 1;
  spec.n_images = n_images;
  spec.image_size = cfg.image_size;
  spec.seed = data_seed;
  return make_toy_dataset(spec);
}

std::vector<int> sample_labels(const ArchConfig& cfg, int n) {
  std::vector<int> labels;
  if (cfg.conditional)
    for (int i = 0; i < n; ++i) labels.push_back(i % cfg.n_classes_per_task);
  return labels;
}

int run(int argc, char** argv) {
  CLI::App app{"Lifelong generative memory on a frozen base GAN"};
  app.require_subcommand(1);

  // --- pretrain-base ---
  auto* pre = app.add_subcommand("pretrain-base",
                                 "Train the source base model on the toy source domain");
  std::string pre_out;
  uint64_t pre_seed = 1, pre_data_seed = 7;
  int pre_steps = 300, pre_batch = 16, pre_images = 192;
  ArchConfig arch;
  pre->add_option("--out", pre_out, "checkpoint directory")->required();
  pre->add_option("--seed", pre_seed);
  pre->add_option("--data-seed", pre_data_seed);
  pre->add_option("--steps", pre_steps);
  pre->add_option("--batch", pre_batch);
  pre->add_option("--images", pre_images, "source dataset size");
  pre->add_option("--image-size", arch.image_size);
  pre->add_option("--blocks", arch.n_blocks);
  pre->add_option("--channels-schedule", arch.block_channel_schedule);
  pre->add_option("--noise-dim", arch.noise_dim);
  pre->add_flag("--conditional", arch.conditional);
  pre->add_option("--classes", arch.n_classes_per_task, "classes per task");

  // --- train-task ---
  auto* tt = app.add_subcommand("train-task", "Learn one task's style parameters");
  std::string tt_ckpt, tt_ablation = "None";
  int tt_task = -1, tt_steps = 200, tt_images = 192;
  uint64_t tt_seed = 2, tt_data_seed = 7;
  bool tt_compressed = false;
  tt->add_option("--ckpt", tt_ckpt)->required();
  tt->add_option("--task", tt_task, "task index (default: next)");
  tt->add_option("--steps", tt_steps);
  tt->add_option("--images", tt_images);
  tt->add_option("--seed", tt_seed);
  tt->add_option("--data-seed", tt_data_seed);
  tt->add_flag("--compressed", tt_compressed, "factorized styles via the knowledge base");
  tt->add_option("--ablation", tt_ablation)
      ->check(CLI::IsMember({"None", "NoNorm", "NoBias"}));

  // --- sample ---
  auto* sm = app.add_subcommand("sample", "Generate images from a stored style");
  std::string sm_ckpt, sm_out, sm_groups = "all", sm_blocks = "all";
  int sm_task = 1, sm_n = 16;
  uint64_t sm_seed = 3;
  std::vector<double> sm_interp;
  sm->add_option("--ckpt", sm_ckpt)->required();
  sm->add_option("--out", sm_out)->required();
  sm->add_option("--task", sm_task);
  sm->add_option("--n", sm_n);
  sm->add_option("--seed", sm_seed);
  sm->add_option("--interpolate", sm_interp,
                 "task_a task_b lambda: blend two styles")
      ->expected(3);
  sm->add_option("--groups", sm_groups, "all|none|scales,shifts,biases");
  sm->add_option("--blocks", sm_blocks, "all|none|fc,0,1,...");

  // --- lifelong-classify ---
  auto* lc = app.add_subcommand("lifelong-classify",
                                "Class-incremental classification over a task stream");
  std::string lc_out, lc_mode = "replay", lc_ckpt;
  int lc_tasks = 4, lc_classes = 3, lc_gan_steps = 150, lc_cls_steps = 300;
  int lc_train_per_class = 64, lc_test_per_class = 32, lc_batch = 8;
  uint64_t lc_seed = 5, lc_data_seed = 7;
  ArchConfig lc_arch;
  lc->add_option("--out", lc_out)->required();
  lc->add_option("--image-size", lc_arch.image_size);
  lc->add_option("--blocks", lc_arch.n_blocks);
  lc->add_option("--channels-schedule", lc_arch.block_channel_schedule);
  lc->add_option("--noise-dim", lc_arch.noise_dim);
  lc->add_option("--mode", lc_mode)->check(CLI::IsMember({"replay", "naive", "joint"}));
  lc->add_option("--ckpt", lc_ckpt, "conditional base checkpoint (replay mode)");
  lc->add_option("--tasks", lc_tasks);
  lc->add_option("--classes", lc_classes);
  lc->add_option("--gan-steps", lc_gan_steps);
  lc->add_option("--cls-steps", lc_cls_steps);
  lc->add_option("--train-per-class", lc_train_per_class);
  lc->add_option("--test-per-class", lc_test_per_class);
  lc->add_option("--batch", lc_batch, "per-task batch n; batches have n*t samples");
  lc->add_option("--seed", lc_seed);
  lc->add_option("--data-seed", lc_data_seed);

  // --- evaluate ---
  auto* ev = app.add_subcommand("evaluate", "Generation metrics and reports");
  std::string ev_ckpt, ev_out;
  int ev_samples = 128, ev_images = 192;
  uint64_t ev_seed = 9, ev_data_seed = 7;
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--samples", ev_samples);
  ev->add_option("--images", ev_images, "real images per task for the metric");
  ev->add_option("--seed", ev_seed);
  ev->add_option("--data-seed", ev_data_seed);

  // --- plot ---
  auto* pl = app.add_subcommand("plot", "Render metric records to figures");
  std::string pl_metrics, pl_accuracy, pl_out;
  pl->add_option("--metrics", pl_metrics, "training metrics record file (NDJSON)");
  pl->add_option("--accuracy", pl_accuracy, "accuracy table (TSV)");
  pl->add_option("--out", pl_out, "output file prefix")->required();

  CLI11_PARSE(app, argc, argv);

  if (pre->parsed()) {
    arch.validate();
    TrainHyper hyper;
    hyper.steps = pre_steps;
    hyper.batch_size = pre_batch;
    hyper.seed = pre_seed;
    Dataset data = task_dataset(arch, 0, pre_images, pre_data_seed);
    BaseModel init = build_models(arch, pre_seed);
    auto ft = finetune_all(init, data, hyper);
    Checkpoint cp;
    cp.config = arch;
    cp.hyper = hyper;
    cp.base = std::move(ft.model);
    save_checkpoint(pre_out, cp);
    std::ofstream log(fs::path(pre_out) / "pretrain_metrics.ndjson");
    log << metrics_to_ndjson(ft.log);
    json audit;
    audit["command"] = "pretrain-base";
    audit["arch"] = {{"image_size", arch.image_size},
                     {"n_blocks", arch.n_blocks},
                     {"noise_dim", arch.noise_dim},
                     {"conditional", arch.conditional},
                     {"classes", arch.n_classes_per_task}};
    audit["seed"] = pre_seed;
    audit["data_seed"] = pre_data_seed;
    audit["steps"] = pre_steps;
    audit["batch"] = pre_batch;
    audit["images"] = pre_images;
    audit["workers"] = data_workers();
    write_audit(pre_out, "pretrain-base", audit);
    std::cout << "pretrained base written to " << pre_out << " (loss_d "
              << ft.log.back().loss_d << ", loss_g " << ft.log.back().loss_g
              << ")\n";
    return 0;
  }

  if (tt->parsed()) {
    Checkpoint cp = load_ckpt_checked(tt_ckpt);
    int task = tt_task;
    if (task < 0) {
      task = 1;
      while (cp.styles.count(task) || cp.compressed.count(task)) ++task;
    }
    if (cp.styles.count(task) || cp.compressed.count(task))
      throw std::invalid_argument("task " + std::to_string(task) +
                                  " already present in checkpoint");
    TrainHyper hyper = cp.hyper;
    hyper.steps = tt_steps;
    hyper.seed = tt_seed;
    Dataset data = task_dataset(cp.config, task, tt_images, tt_data_seed);
    int64_t naive_total = style_param_count(
        cp.base, cp.config.conditional ? cp.config.n_classes_per_task : 1);
    std::vector<MetricsRecord> log;
    if (tt_compressed) {
      EnergyPolicy policy;
      auto res = train_task_compressed(cp.base, data, hyper, task, cp.kb, policy);
      log = res.log;
      cp.compressed[task] = res.style;
      int64_t total = naive_total - res.naive_matrix_params + res.compressed_matrix_params;
      std::printf("task %d: matrix params %lld / %lld naive (%.1f%%), style total %lld / %lld\n",
                  task, static_cast<long long>(res.compressed_matrix_params),
                  static_cast<long long>(res.naive_matrix_params),
                  100.0 * res.compressed_matrix_params / res.naive_matrix_params,
                  static_cast<long long>(total), static_cast<long long>(naive_total));
    } else {
      Ablation ab = tt_ablation == "NoNorm"   ? Ablation::NoNorm
                    : tt_ablation == "NoBias" ? Ablation::NoBias
                                              : Ablation::None;
      auto res = train_task(cp.base, data, hyper, task, ab);
      log = res.log;
      cp.styles[task] = res.style;
      std::printf("task %d: style params %lld vs full model %lld (%.2f%%)\n", task,
                  static_cast<long long>(naive_total),
                  static_cast<long long>(full_param_count(cp.base)),
                  100.0 * naive_total / full_param_count(cp.base));
    }
    save_checkpoint(tt_ckpt, cp);
    std::ofstream lf(fs::path(tt_ckpt) /
                     ("task" + std::to_string(task) + "_metrics.ndjson"));
    lf << metrics_to_ndjson(log);
    json audit;
    audit["command"] = "train-task";
    audit["task"] = task;
    audit["steps"] = tt_steps;
    audit["seed"] = tt_seed;
    audit["data_seed"] = tt_data_seed;
    audit["compressed"] = tt_compressed;
    audit["ablation"] = tt_ablation;
    write_audit(tt_ckpt, "train-task", audit);
    return 0;
  }

  if (sm->parsed()) {
    Checkpoint cp = load_ckpt_checked(sm_ckpt);
    TaskRegistry reg = build_registry(cp);
    StyleSet style;
    if (!sm_interp.empty()) {
      int a = static_cast<int>(sm_interp[0]), b = static_cast<int>(sm_interp[1]);
      if (!reg.has(a) || !reg.has(b))
        throw MissingArtifact("interpolation endpoint task not in checkpoint");
      style = reg.interpolate(a, b, sm_interp[2]);
    } else {
      if (!reg.has(sm_task))
        throw MissingArtifact("task " + std::to_string(sm_task) + " not in checkpoint");
      style = reg.compose(sm_task, parse_groups(sm_groups),
                          parse_blocks(sm_blocks, cp.config.n_blocks));
    }
    Tensor imgs = sample_images(cp.base, style, sm_n, sm_seed,
                                sample_labels(cp.config, sm_n));
    fs::create_directories(sm_out);
    int64_t chw = static_cast<int64_t>(imgs.dim(1)) * imgs.dim(2) * imgs.dim(3);
    for (int i = 0; i < sm_n; ++i) {
      Tensor one({imgs.dim(1), imgs.dim(2), imgs.dim(3)});
      for (int64_t j = 0; j < chw; ++j) one[j] = imgs[i * chw + j];
      char name[32];
      std::snprintf(name, sizeof name, "sample_%03d.ppm", i);
      write_ppm((fs::path(sm_out) / name).string(), one);
    }
    write_image_grid((fs::path(sm_out) / "grid.ppm").string(), imgs, 8);
    json audit;
    audit["command"] = "sample";
    audit["task"] = sm_task;
    audit["n"] = sm_n;
    audit["seed"] = sm_seed;
    audit["groups"] = sm_groups;
    audit["blocks"] = sm_blocks;
    if (!sm_interp.empty()) audit["interpolate"] = sm_interp;
    write_audit(sm_out, "sample", audit);
    return 0;
  }

  if (lc->parsed()) {
    ToyStreamSpec sspec;
    sspec.n_tasks = lc_tasks;
    sspec.n_classes = lc_classes;
    sspec.train_per_class = lc_train_per_class;
    sspec.test_per_class = lc_test_per_class;
    sspec.seed = lc_data_seed;
    sspec.image_size = lc_arch.image_size;

    BaseModel base;
    if (!lc_ckpt.empty()) {
      Checkpoint cp = load_ckpt_checked(lc_ckpt);
      base = std::move(cp.base);
      sspec.image_size = base.config.image_size;
    } else {
      ArchConfig cfg = lc_arch;
      cfg.conditional = true;
      cfg.n_classes_per_task = lc_classes;
      Dataset src = task_dataset(cfg, 0, lc_classes * lc_train_per_class, lc_data_seed);
      TrainHyper ph;
      ph.steps = lc_gan_steps;
      ph.seed = lc_seed;
      base = finetune_all(build_models(cfg, lc_seed), src, ph).model;
    }
    if (!base.config.conditional && lc_mode == "replay")
      throw std::invalid_argument("replay mode needs a conditional base checkpoint");
    auto stream = make_toy_stream(sspec);

    LifelongConfig cfg;
    cfg.cls.n_classes_total = lc_tasks * lc_classes;
    cfg.cls.image_size = base.config.image_size;
    cfg.cls.steps_per_task = lc_cls_steps;
    cfg.cls.batch_per_task = lc_batch;
    cfg.cls.seed = Rng::mix(lc_seed, 0xc15);
    cfg.gan.steps = lc_gan_steps;
    cfg.gan.seed = lc_seed;
    LifelongMode mode = lc_mode == "replay"  ? LifelongMode::Replay
                        : lc_mode == "naive" ? LifelongMode::Naive
                                             : LifelongMode::Joint;
    LifelongResult res = run_lifelong(base, stream, cfg, mode);

    fs::create_directories(lc_out);
    std::ofstream tab(fs::path(lc_out) / ("accuracy_" + lc_mode + ".tsv"));
    tab << res.to_text();
    std::ofstream rec(fs::path(lc_out) / ("accuracy_" + lc_mode + ".ndjson"));
    for (size_t t = 0; t < res.acc.size(); ++t) {
      json line;
      line["after_task"] = t + 1;
      line["per_task"] = res.acc[t];
      line["all_seen"] = res.all_seen[t];
      rec << line.dump() << "\n";
    }
    json audit;
    audit["command"] = "lifelong-classify";
    audit["mode"] = lc_mode;
    audit["tasks"] = lc_tasks;
    audit["classes"] = lc_classes;
    audit["gan_steps"] = lc_gan_steps;
    audit["cls_steps"] = lc_cls_steps;
    audit["batch"] = lc_batch;
    audit["seed"] = lc_seed;
    audit["data_seed"] = lc_data_seed;
    write_audit(lc_out, "lifelong-classify", audit);
    if (res.aborted) {
      std::cerr << "training diverged; accuracy matrix is partial\n";
      return kExitNumeric;
    }
    std::cout << res.to_text();
    return 0;
  }

  if (ev->parsed()) {
    Checkpoint cp = load_ckpt_checked(ev_ckpt);
    TaskRegistry reg = build_registry(cp);
    Embedder emb = make_embedder(cp.config.image_size, cp.config.channels,
                                 kEmbedderSeed);
    fs::create_directories(ev_out);

    std::vector<int> ids;
    for (int id : reg.task_ids())
      if (id != 0) ids.push_back(id);

    // all parameters are frozen after training, so re-evaluating task k after
    // any later task gives bitwise-identical samples; compute each row once
    std::vector<double> fid(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
      Dataset real = task_dataset(cp.config, ids[i], ev_images, ev_data_seed);
      Tensor fake = sample_images(cp.base, reg.get(ids[i]), ev_samples, ev_seed,
                                  sample_labels(cp.config, ev_samples));
      fid[i] = fid_surrogate(emb, real.images, fake);
    }
    ForgettingTable table;
    for (size_t t = 0; t < ids.size(); ++t)
      table.add_round(std::vector<double>(fid.begin(), fid.begin() + t + 1));
    std::ofstream ff(fs::path(ev_out) / "forgetting_fid.tsv");
    ff << table.to_text();

    std::ofstream sp(fs::path(ev_out) / "singular_spectra.tsv");
    for (size_t i = 0; i < ids.size(); ++i) {
      auto spectra = singular_spectrum_report(reg.get(ids[i]));
      for (const auto& [key, vals] : spectra) {
        sp << "task" << ids[i] << "\t" << key;
        for (double v : vals) sp << "\t" << v;
        sp << "\n";
      }
    }
    json audit;
    audit["command"] = "evaluate";
    audit["samples"] = ev_samples;
    audit["seed"] = ev_seed;
    audit["data_seed"] = ev_data_seed;
    audit["embedder_seed"] = kEmbedderSeed;
    audit["note"] =
        "random-feature Fréchet surrogate; values are not comparable to "
        "Inception-based FID";
    write_audit(ev_out, "evaluate", audit);
    std::cout << table.to_text();
    return 0;
  }

  if (pl->parsed()) {
    if (pl_metrics.empty() && pl_accuracy.empty())
      throw std::invalid_argument("plot: need --metrics and/or --accuracy");
    if (!pl_metrics.empty()) {
      if (!fs::exists(pl_metrics)) throw MissingArtifact("no such file: " + pl_metrics);
      std::ifstream f(pl_metrics);
      Curve ld{"loss_d", {}, {}}, lg{"loss_g", {}, {}}, fid{"fid", {}, {}};
      std::string line;
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        double step = j.at("step");
        ld.xs.push_back(step);
        ld.ys.push_back(j.at("loss_d"));
        lg.xs.push_back(step);
        lg.ys.push_back(j.at("loss_g"));
        double fv = j.value("fid", -1.0);
        if (fv >= 0) {
          fid.xs.push_back(step);
          fid.ys.push_back(fv);
        }
      }
      write_curve_plot(pl_out + "_losses.ppm", {ld, lg});
      if (!fid.xs.empty()) write_curve_plot(pl_out + "_fid.ppm", {fid});
    }
    if (!pl_accuracy.empty()) {
      if (!fs::exists(pl_accuracy))
        throw MissingArtifact("no such file: " + pl_accuracy);
      std::ifstream f(pl_accuracy);
      std::string header;
      std::getline(f, header);
      std::vector<Curve> curves;
      std::string line;
      while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, '\t');
        double t = std::stod(cell);
        size_t col = 0;
        while (std::getline(ss, cell, '\t')) {
          if (curves.size() <= col) curves.push_back({"col" + std::to_string(col), {}, {}});
          if (cell != "-") {
            curves[col].xs.push_back(t);
            curves[col].ys.push_back(std::stod(cell));
          }
          ++col;
        }
      }
      write_curve_plot(pl_out + "_accuracy.ppm", curves);
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissing;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
