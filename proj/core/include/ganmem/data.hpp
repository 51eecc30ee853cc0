#pragma once

#include <cstdint>
#include <vector>

#include "ganmem/tensor.hpp"

namespace ganmem {

// Labeled image dataset, images in [-1,1], NCHW.
struct Dataset {
  Tensor images;            // [N, C, H, W]
  std::vector<int> labels;  // size N; all zero when unconditional
  int n_classes = 1;

  int size() const { return images.rank() == 4 ? images.dim(0) : 0; }
  Tensor batch(const std::vector<int>& idx) const;
};

// Seeded procedural image family. Task index selects a colour palette and
// shape family; class index (within a task) selects shape and accent colour.
// Task 0 is the neutral "source" domain used to pretrain the base model.
struct ToyTaskSpec {
  int task_index = 0;
  int n_classes = 1;
  int n_images = 256;
  int image_size = 32;
  uint64_t seed = 1;
};

Dataset make_toy_dataset(const ToyTaskSpec& spec);

// Worker count for dataset generation, from GANMEM_NUM_WORKERS (default 1).
int data_workers();

// Train/test splits for the lifelong classification stream.
struct ToyStreamSpec {
  int n_tasks = 4;
  int n_classes = 3;
  int train_per_class = 64;
  int test_per_class = 32;
  int image_size = 32;
  uint64_t seed = 7;
};

struct TaskData {
  Dataset train;
  Dataset test;
  int class_offset = 0;  // global index of this task's first class
};

std::vector<TaskData> make_toy_stream(const ToyStreamSpec& spec);

}  // namespace ganmem
