#pragma once

#include <vector>

#include "ganmem/train.hpp"

namespace ganmem {

// Class-incremental classification over a task stream, with generative replay
// from the conditional memory standing in for inaccessible past data.

struct ClassifierConfig {
  int image_size = 32;
  int channels = 3;
  int n_classes_total = 12;  // across the whole stream
  double lr = 1e-4;
  int steps_per_task = 300;
  int batch_per_task = 16;  // n; the batch at task t has n*t samples
  uint64_t seed = 11;

  void validate() const;
};

// Small conv net trained from scratch; all parameters trainable.
struct Classifier {
  ClassifierConfig config;
  std::vector<Tensor> kernels;  // 3x3 conv stack, avg-pooled to 4x4
  Tensor fc_w, fc_b;
};

Classifier make_classifier(const ClassifierConfig& cfg, uint64_t seed);

// argmax over the first n_seen_classes logits.
std::vector<int> classify(const Classifier& c, const Tensor& images,
                          int n_seen_classes);
double accuracy(const Classifier& c, const Dataset& data, int label_offset,
                int n_seen_classes);

struct LabeledBatch {
  Tensor images;
  std::vector<int> labels;  // global class indices
};

// n generated samples per prior task, labels uniform over that task's classes,
// then images sampled conditioned on the label. No real images involved.
LabeledBatch build_replay_batch(const BaseModel& cond_base,
                                const std::vector<StyleSet>& prior_styles,
                                const std::vector<int>& class_offsets,
                                int n_classes_per_task, int n, uint64_t seed);

enum class LifelongMode { Replay, Naive, Joint };

struct LifelongConfig {
  ClassifierConfig cls;
  TrainHyper gan;  // conditional memory training; Replay mode only
};

struct LifelongResult {
  // acc[t][k] = test accuracy on task k after finishing task t (k <= t)
  std::vector<std::vector<double>> acc;
  std::vector<double> all_seen;   // accuracy over all seen test sets, per round
  std::vector<StyleSet> styles;   // Replay mode: one per completed task
  bool aborted = false;           // training diverged; matrix is partial

  std::string to_text() const;
};

// Sequential pass over the stream. Replay mode trains the conditional memory
// on each task first, then the classifier on real-plus-replayed batches; the
// base and prior styles are never written.
LifelongResult run_lifelong(const BaseModel& cond_base,
                            const std::vector<TaskData>& stream,
                            const LifelongConfig& cfg, LifelongMode mode);

}  // namespace ganmem
