#include "ganmem/data.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ganmem/rng.hpp"

namespace ganmem {

int data_workers() {
  const char* env = std::getenv("GANMEM_NUM_WORKERS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

Tensor Dataset::batch(const std::vector<int>& idx) const {
  int c = images.dim(1), h = images.dim(2), w = images.dim(3);
  int64_t chw = static_cast<int64_t>(c) * h * w;
  Tensor out({static_cast<int>(idx.size()), c, h, w});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= size()) throw std::out_of_range("batch index");
    const double* src = images.data() + idx[i] * chw;
    double* dst = out.data() + static_cast<int64_t>(i) * chw;
    for (int64_t k = 0; k < chw; ++k) dst[k] = src[k];
  }
  return out;
}

namespace {

struct Rgb {
  double r, g, b;
};

// Related palettes: hue is driven mostly by the class index with a small
// per-task shift, so the same class slot looks similar from task to task.
// Consecutive tasks therefore interfere (and share compressible structure)
// while staying separable through the shift, the shape cycle and the accent.
// Task 0 is neutral gray.
Rgb palette(int task, int cls) {
  if (task == 0) return {0.0, 0.0, 0.0};
  double hue = std::fmod(0.137 + 0.31 * cls + 0.043 * task, 1.0);
  double h6 = hue * 6.0;
  auto comp = [&](double shift) {
    double x = std::fmod(h6 + shift, 6.0);
    double v = std::fabs(x - 3.0) - 1.0;
    return std::min(1.0, std::max(0.0, v));
  };
  // +-0.6 amplitude keeps the colors well inside tanh's responsive range;
  // saturated targets stall generator training
  return {comp(0.0) * 1.2 - 0.6, comp(4.0) * 1.2 - 0.6, comp(2.0) * 1.2 - 0.6};
}

void draw_image(Tensor& out, int64_t offset, int hw, int task, int cls, Rng& rng) {
  Rgb bg = palette(task, cls);
  Rgb fg = palette(task == 0 ? 0 : task + 13, cls + 1);
  int shape = (task + cls) % 3;
  double cx = rng.uniform(0.3, 0.7), cy = rng.uniform(0.3, 0.7);
  double radius = rng.uniform(0.15, 0.3);
  double phase = rng.uniform(0.0, 1.0);
  double jitter = rng.uniform(-0.12, 0.12);

  double* r = out.data() + offset;
  double* g = r + static_cast<int64_t>(hw) * hw;
  double* b = g + static_cast<int64_t>(hw) * hw;
  for (int i = 0; i < hw; ++i) {
    for (int j = 0; j < hw; ++j) {
      double y = (i + 0.5) / hw, x = (j + 0.5) / hw;
      double vr, vg, vb;
      if (task == 0) {
        // source domain: soft gray radial blob
        double d = std::hypot(x - cx, y - cy);
        double v = std::exp(-d * d / (2.0 * radius * radius)) * 1.4 - 0.7 + jitter;
        vr = vg = vb = v;
      } else {
        double grad = 0.3 * (y - 0.5);
        vr = bg.r + grad + jitter;
        vg = bg.g + grad + jitter;
        vb = bg.b + grad + jitter;
        bool inside = false;
        switch (shape) {
          case 0:  // disk
            inside = std::hypot(x - cx, y - cy) < radius;
            break;
          case 1:  // square
            inside = std::fabs(x - cx) < radius && std::fabs(y - cy) < radius;
            break;
          default:  // stripes
            inside = std::fmod(x * 4.0 + phase, 1.0) < 0.5;
            break;
        }
        if (inside) {
          vr = fg.r - jitter;
          vg = fg.g - jitter;
          vb = fg.b - jitter;
        }
      }
      int64_t p = static_cast<int64_t>(i) * hw + j;
      auto clamp = [](double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); };
      r[p] = clamp(vr);
      g[p] = clamp(vg);
      b[p] = clamp(vb);
    }
  }
}

}  // namespace

Dataset make_toy_dataset(const ToyTaskSpec& spec) {
  if (spec.n_images < 1 || spec.n_classes < 1 || spec.image_size < 4)
    throw std::invalid_argument("make_toy_dataset: invalid spec");
  Dataset d;
  d.n_classes = spec.n_classes;
  d.images = Tensor({spec.n_images, 3, spec.image_size, spec.image_size});
  d.labels.resize(static_cast<size_t>(spec.n_images));
  int64_t chw = 3ll * spec.image_size * spec.image_size;
  auto render = [&](int lo, int hi) {
    for (int n = lo; n < hi; ++n) {
      int cls = n % spec.n_classes;
      d.labels[static_cast<size_t>(n)] = cls;
      Rng rng(Rng::mix(spec.seed, (static_cast<uint64_t>(spec.task_index) << 32) | n));
      draw_image(d.images, static_cast<int64_t>(n) * chw, spec.image_size,
                 spec.task_index, cls, rng);
    }
  };
  // each image has its own seeded stream, so splitting across workers keeps
  // the output bitwise identical
  int workers = data_workers();
  if (workers <= 1 || spec.n_images < 2 * workers) {
    render(0, spec.n_images);
  } else {
    std::vector<std::thread> pool;
    int per = (spec.n_images + workers - 1) / workers;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(render, w * per, std::min(spec.n_images, (w + 1) * per));
    for (auto& t : pool) t.join();
  }
  return d;
}

std::vector<TaskData> make_toy_stream(const ToyStreamSpec& spec) {
  std::vector<TaskData> stream;
  for (int t = 1; t <= spec.n_tasks; ++t) {
    TaskData td;
    td.class_offset = (t - 1) * spec.n_classes;
    ToyTaskSpec tr{t, spec.n_classes, spec.n_classes * spec.train_per_class,
                   spec.image_size, spec.seed};
    ToyTaskSpec te{t, spec.n_classes, spec.n_classes * spec.test_per_class,
                   spec.image_size, Rng::mix(spec.seed, 0x7e57)};
    td.train = make_toy_dataset(tr);
    td.test = make_toy_dataset(te);
    stream.push_back(std::move(td));
  }
  return stream;
}

}  // namespace ganmem
