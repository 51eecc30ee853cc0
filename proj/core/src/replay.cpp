#include "ganmem/replay.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ganmem/rng.hpp"

namespace ganmem {

using ad::Var;

void ClassifierConfig::validate() const {
  if (image_size < 8 || (image_size & (image_size - 1)) != 0)
    throw std::invalid_argument("classifier: image_size must be a power of two >= 8");
  if (n_classes_total < 2 || batch_per_task < 1 || steps_per_task < 0 || lr <= 0)
    throw std::invalid_argument("classifier: bad config");
}

Classifier make_classifier(const ClassifierConfig& cfg, uint64_t seed) {
  cfg.validate();
  Classifier c;
  c.config = cfg;
  int ci = cfg.channels, co = 16, size = cfg.image_size, salt = 0;
  while (size > 4) {
    Rng rng(Rng::mix(seed, 0xc1a55ull + salt++));
    c.kernels.push_back(rng.normal_tensor({co, ci, 3, 3}, std::sqrt(2.0 / (ci * 9))));
    ci = co;
    co = std::min(64, co * 2);
    size /= 2;
  }
  Rng rng(Rng::mix(seed, 0xc1a55ull + 0xff));
  int flat = ci * size * size;
  c.fc_w = rng.normal_tensor({cfg.n_classes_total, flat}, std::sqrt(1.0 / flat));
  c.fc_b = Tensor::zeros({cfg.n_classes_total});
  return c;
}

namespace {

Var classifier_logits(Classifier& c, const Tensor& images, std::vector<Var>* leaves,
                      std::vector<Tensor*>* params) {
  auto wrap = [&](Tensor& t) {
    if (!leaves) return ad::constant(t);
    Var v = ad::leaf(t);
    leaves->push_back(v);
    params->push_back(&t);
    return v;
  };
  Var x = ad::constant(images);
  for (auto& k : c.kernels) {
    x = ad::conv2d(x, wrap(k), 1);
    x = ad::leaky_relu(x, 0.2);
    x = ad::avgpool2x(x);
  }
  int n = images.dim(0);
  x = ad::reshape(x, {n, c.fc_w.dim(1)});
  return ad::linear(x, wrap(c.fc_w), wrap(c.fc_b));
}

}  // namespace

std::vector<int> classify(const Classifier& c, const Tensor& images,
                          int n_seen_classes) {
  Classifier& mc = const_cast<Classifier&>(c);
  Tensor logits = classifier_logits(mc, images, nullptr, nullptr).val();
  std::vector<int> out(static_cast<size_t>(images.dim(0)));
  for (int i = 0; i < images.dim(0); ++i) {
    int best = 0;
    for (int j = 1; j < n_seen_classes; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double accuracy(const Classifier& c, const Dataset& data, int label_offset,
                int n_seen_classes) {
  if (data.size() == 0) return 0.0;
  int correct = 0;
  const int chunk = 64;
  for (int start = 0; start < data.size(); start += chunk) {
    std::vector<int> idx;
    for (int i = start; i < std::min(data.size(), start + chunk); ++i)
      idx.push_back(i);
    auto pred = classify(c, data.batch(idx), n_seen_classes);
    for (size_t i = 0; i < idx.size(); ++i)
      if (pred[i] == data.labels[static_cast<size_t>(idx[i])] + label_offset)
        ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

LabeledBatch build_replay_batch(const BaseModel& cond_base,
                                const std::vector<StyleSet>& prior_styles,
                                const std::vector<int>& class_offsets,
                                int n_classes_per_task, int n, uint64_t seed) {
  if (prior_styles.size() != class_offsets.size())
    throw std::invalid_argument("build_replay_batch: styles/offsets mismatch");
  if (n < 1) throw std::invalid_argument("build_replay_batch: n must be >= 1");
  LabeledBatch out;
  if (prior_styles.empty()) {
    out.images = Tensor({0, cond_base.config.channels, cond_base.config.image_size,
                         cond_base.config.image_size});
    return out;
  }
  int c = cond_base.config.channels, hw = cond_base.config.image_size;
  int total = n * static_cast<int>(prior_styles.size());
  out.images = Tensor({total, c, hw, hw});
  int64_t chw = static_cast<int64_t>(c) * hw * hw;
  for (size_t t = 0; t < prior_styles.size(); ++t) {
    // label first, then image conditioned on it
    Rng rng(Rng::mix(seed, 0x9e91ull + t));
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(rng.uniform_int(n_classes_per_task));
    Tensor imgs = sample_images(cond_base, prior_styles[t], n,
                                Rng::mix(seed, 0x1319ull + t), labels);
    double* dst = out.images.data() + static_cast<int64_t>(t) * n * chw;
    for (int64_t j = 0; j < n * chw; ++j) dst[j] = imgs[j];
    for (int i = 0; i < n; ++i) out.labels.push_back(labels[i] + class_offsets[t]);
  }
  return out;
}

std::string LifelongResult::to_text() const {
  std::ostringstream os;
  os << "after_task";
  for (size_t k = 0; k < acc.size(); ++k) os << "\ttask" << k + 1;
  os << "\tall_seen\n";
  for (size_t t = 0; t < acc.size(); ++t) {
    os << t + 1;
    for (size_t k = 0; k < acc.size(); ++k) {
      if (k < acc[t].size())
        os << "\t" << acc[t][k];
      else
        os << "\t-";
    }
    os << "\t" << all_seen[t] << "\n";
  }
  return os.str();
}

LifelongResult run_lifelong(const BaseModel& cond_base,
                            const std::vector<TaskData>& stream,
                            const LifelongConfig& cfg, LifelongMode mode) {
  cfg.cls.validate();
  if (mode == LifelongMode::Replay) {
    if (!cond_base.config.conditional)
      throw std::invalid_argument("run_lifelong: replay mode needs a conditional base");
    cfg.gan.validate();
  }
  LifelongResult res;
  Classifier cls = make_classifier(cfg.cls, cfg.cls.seed);
  Adam adam(cfg.cls.lr, 0.9, 0.999);
  uint64_t base_hash = cond_base.weights_hash();
  int n = cfg.cls.batch_per_task;

  std::vector<int> offsets;
  for (size_t t = 0; t < stream.size(); ++t) {
    int tasks_seen = static_cast<int>(t) + 1;
    const TaskData& cur = stream[t];
    int n_seen = cur.class_offset + cur.train.n_classes;
    if (n_seen > cfg.cls.n_classes_total)
      throw std::invalid_argument("run_lifelong: n_classes_total too small");

    if (mode == LifelongMode::Replay) {
      TrainHyper h = cfg.gan;
      h.seed = Rng::mix(cfg.gan.seed, 0x5a5aull + t);
      try {
        auto tr = train_task(cond_base, cur.train, h, tasks_seen);
        res.styles.push_back(std::move(tr.style));
      } catch (const std::runtime_error&) {
        res.aborted = true;
        return res;
      }
      if (cond_base.weights_hash() != base_hash)
        throw std::logic_error("run_lifelong: frozen base changed");
    }

    for (int step = 0; step < cfg.cls.steps_per_task; ++step) {
      Rng rng(Rng::mix(cfg.cls.seed, (static_cast<uint64_t>(t) << 32) | step));
      Tensor images;
      std::vector<int> labels;
      if (mode == LifelongMode::Joint) {
        // n*t samples drawn uniformly over everything seen so far
        images = Tensor({n * tasks_seen, cfg.cls.channels, cfg.cls.image_size,
                         cfg.cls.image_size});
        int64_t chw = static_cast<int64_t>(cfg.cls.channels) * cfg.cls.image_size *
                      cfg.cls.image_size;
        for (int i = 0; i < n * tasks_seen; ++i) {
          int src = rng.uniform_int(tasks_seen);
          int k = rng.uniform_int(stream[static_cast<size_t>(src)].train.size());
          Tensor one = stream[static_cast<size_t>(src)].train.batch({k});
          double* dst = images.data() + i * chw;
          for (int64_t j = 0; j < chw; ++j) dst[j] = one[j];
          labels.push_back(stream[static_cast<size_t>(src)].train.labels[static_cast<size_t>(k)] +
                           stream[static_cast<size_t>(src)].class_offset);
        }
      } else {
        int n_real = mode == LifelongMode::Naive ? n * tasks_seen : n;
        std::vector<int> idx;
        for (int i = 0; i < n_real; ++i) idx.push_back(rng.uniform_int(cur.train.size()));
        Tensor real = cur.train.batch(idx);
        std::vector<int> real_labels;
        for (int i : idx)
          real_labels.push_back(cur.train.labels[static_cast<size_t>(i)] +
                                cur.class_offset);
        if (mode == LifelongMode::Naive || t == 0) {
          images = std::move(real);
          labels = std::move(real_labels);
        } else {
          std::vector<StyleSet> prior(res.styles.begin(), res.styles.end() - 1);
          LabeledBatch rb = build_replay_batch(
              cond_base, prior, offsets, cur.train.n_classes, n,
              Rng::mix(cfg.cls.seed, (static_cast<uint64_t>(t) << 20) | step));
          int total = n_real + rb.images.dim(0);
          int64_t chw = static_cast<int64_t>(cfg.cls.channels) *
                        cfg.cls.image_size * cfg.cls.image_size;
          images = Tensor({total, cfg.cls.channels, cfg.cls.image_size,
                           cfg.cls.image_size});
          for (int64_t j = 0; j < n_real * chw; ++j) images[j] = real[j];
          for (int64_t j = 0; j < rb.images.size(); ++j)
            images[n_real * chw + j] = rb.images[j];
          labels = real_labels;
          labels.insert(labels.end(), rb.labels.begin(), rb.labels.end());
        }
      }

      std::vector<Var> leaves;
      std::vector<Tensor*> params;
      Var logits = classifier_logits(cls, images, &leaves, &params);
      Var loss = cross_entropy(logits, labels);
      if (!std::isfinite(loss.val()[0])) {
        res.aborted = true;
        return res;
      }
      auto gs = ad::grad(loss, leaves);
      std::vector<Tensor> gt;
      for (auto& g : gs) gt.push_back(g.val());
      adam.step(params, gt);
    }

    offsets.push_back(cur.class_offset);

    std::vector<double> row;
    double corr = 0, tot = 0;
    for (size_t k = 0; k <= t; ++k) {
      double a = accuracy(cls, stream[k].test, stream[k].class_offset, n_seen);
      row.push_back(a);
      corr += a * stream[k].test.size();
      tot += stream[k].test.size();
    }
    res.acc.push_back(std::move(row));
    res.all_seen.push_back(tot > 0 ? corr / tot : 0.0);
  }
  return res;
}

}  // namespace ganmem
