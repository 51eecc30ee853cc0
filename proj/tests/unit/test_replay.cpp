#include "doctest.h"

#include <set>

#include "helpers.hpp"
#include "ganmem/replay.hpp"

using namespace ganmem;

namespace {

ArchConfig cond_arch() {
  ArchConfig c;
  c.image_size = 8;
  c.n_blocks = 1;
  c.block_channel_schedule = {16};
  c.noise_dim = 8;
  c.conditional = true;
  c.n_classes_per_task = 2;
  return c;
}

ClassifierConfig small_cls() {
  ClassifierConfig cfg;
  cfg.image_size = 8;
  cfg.n_classes_total = 8;
  cfg.steps_per_task = 8;
  cfg.batch_per_task = 4;
  return cfg;
}

std::vector<TaskData> small_stream(int n_tasks) {
  ToyStreamSpec spec;
  spec.n_tasks = n_tasks;
  spec.n_classes = 2;
  spec.train_per_class = 8;
  spec.test_per_class = 4;
  spec.image_size = 8;
  return make_toy_stream(spec);
}

}  // namespace

TEST_CASE("classifier config validation") {
  ClassifierConfig cfg = small_cls();
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_cls();
  cfg.image_size = 12;  // not a power of two
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_cls();
  cfg.n_classes_total = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("classifier construction is deterministic") {
  ClassifierConfig cfg = small_cls();
  Classifier a = make_classifier(cfg, 5);
  Classifier b = make_classifier(cfg, 5);
  CHECK(testutil::same_bits(a.fc_w, b.fc_w));
  CHECK(a.kernels.size() == b.kernels.size());
  for (size_t i = 0; i < a.kernels.size(); ++i)
    CHECK(testutil::same_bits(a.kernels[i], b.kernels[i]));
  Classifier c = make_classifier(cfg, 6);
  CHECK_FALSE(testutil::same_bits(a.fc_w, c.fc_w));
}

TEST_CASE("classify stays within the seen classes") {
  Classifier c = make_classifier(small_cls(), 7);
  Rng rng(1);
  Tensor imgs = rng.normal_tensor({5, 3, 8, 8}, 0.4);
  std::vector<int> p1 = classify(c, imgs, 1);
  for (int v : p1) CHECK(v == 0);
  std::vector<int> p3 = classify(c, imgs, 3);
  CHECK(p3.size() == 5);
  for (int v : p3) {
    CHECK(v >= 0);
    CHECK(v < 3);
  }
  // restricting the classes can only change picks to smaller indices
  std::vector<int> p2 = classify(c, imgs, 2);
  for (size_t i = 0; i < p3.size(); ++i)
    if (p3[i] < 2) CHECK(p2[i] == p3[i]);
}

TEST_CASE("accuracy with a single visible class is trivially perfect") {
  Classifier c = make_classifier(small_cls(), 8);
  ToyTaskSpec spec;
  spec.task_index = 1;
  spec.n_images = 6;
  spec.image_size = 8;
  Dataset d = make_toy_dataset(spec);  // all labels 0
  CHECK(accuracy(c, d, 0, 1) == doctest::Approx(1.0));
}

TEST_CASE("replay batch with no priors is empty") {
  BaseModel m = build_models(cond_arch(), 10);
  LabeledBatch b = build_replay_batch(m, {}, {}, 2, 4, 1);
  CHECK(b.images.dim(0) == 0);
  CHECK(b.labels.empty());
}

TEST_CASE("replay batch counts and label ranges") {
  BaseModel m = build_models(cond_arch(), 11);
  StyleSet s1 = make_new_style(m, 1, 2);
  StyleSet s2 = make_new_style(m, 2, 2);
  LabeledBatch b = build_replay_batch(m, {s1, s2}, {0, 2}, 2, 4, 99);
  CHECK(b.images.dim(0) == 8);  // n per prior task
  CHECK(b.labels.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(b.labels[i] >= 0);
    CHECK(b.labels[i] < 2);
  }
  for (int i = 4; i < 8; ++i) {
    CHECK(b.labels[i] >= 2);
    CHECK(b.labels[i] < 4);
  }
  CHECK(b.images.all_finite());

  LabeledBatch again = build_replay_batch(m, {s1, s2}, {0, 2}, 2, 4, 99);
  CHECK(testutil::same_bits(b.images, again.images));
  CHECK(b.labels == again.labels);
  LabeledBatch other = build_replay_batch(m, {s1, s2}, {0, 2}, 2, 4, 100);
  CHECK_FALSE(testutil::same_bits(b.images, other.images));

  CHECK_THROWS_AS(build_replay_batch(m, {s1}, {0, 2}, 2, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_replay_batch(m, {s1}, {0}, 2, 0, 1), std::invalid_argument);
}

TEST_CASE("naive and joint runs produce a lower-triangular accuracy matrix") {
  BaseModel m = build_models(cond_arch(), 12);
  auto stream = small_stream(3);
  LifelongConfig cfg;
  cfg.cls = small_cls();
  for (LifelongMode mode : {LifelongMode::Naive, LifelongMode::Joint}) {
    LifelongResult r = run_lifelong(m, stream, cfg, mode);
    CHECK_FALSE(r.aborted);
    CHECK(r.acc.size() == 3);
    for (size_t t = 0; t < 3; ++t) {
      CHECK(r.acc[t].size() == t + 1);
      for (double a : r.acc[t]) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
      }
    }
    CHECK(r.all_seen.size() == 3);
    CHECK(r.styles.empty());  // memory only trains in replay mode
    std::string txt = r.to_text();
    CHECK(txt.find('\t') != std::string::npos);
  }
}

TEST_CASE("replay run trains one style per task and freezes the base") {
  BaseModel m = build_models(cond_arch(), 13);
  uint64_t before = m.weights_hash();
  auto stream = small_stream(2);
  LifelongConfig cfg;
  cfg.cls = small_cls();
  cfg.cls.steps_per_task = 4;
  cfg.gan.steps = 2;
  cfg.gan.batch_size = 4;
  cfg.gan.seed = 21;
  LifelongResult r = run_lifelong(m, stream, cfg, LifelongMode::Replay);
  CHECK_FALSE(r.aborted);
  CHECK(m.weights_hash() == before);
  CHECK(r.styles.size() == 2);
  CHECK(r.styles[0].class_count == 2);
  CHECK(r.acc.size() == 2);

  LifelongResult r2 = run_lifelong(m, stream, cfg, LifelongMode::Replay);
  CHECK(r2.acc == r.acc);  // fully deterministic
}

TEST_CASE("replay mode requires a conditional base") {
  ArchConfig plain = cond_arch();
  plain.conditional = false;
  plain.n_classes_per_task = 1;
  BaseModel m = build_models(plain, 14);
  LifelongConfig cfg;
  cfg.cls = small_cls();
  CHECK_THROWS_AS(run_lifelong(m, small_stream(2), cfg, LifelongMode::Replay),
                  std::invalid_argument);
}

TEST_CASE("class budget is enforced") {
  BaseModel m = build_models(cond_arch(), 15);
  LifelongConfig cfg;
  cfg.cls = small_cls();
  cfg.cls.n_classes_total = 3;  // stream needs 4
  CHECK_THROWS_AS(run_lifelong(m, small_stream(2), cfg, LifelongMode::Naive),
                  std::invalid_argument);
}
