#pragma once

#include <map>
#include <string>

#include "ganmem/compress.hpp"
#include "ganmem/registry.hpp"
#include "ganmem/train.hpp"

namespace ganmem {

// On-disk experiment container: one directory per experiment, accumulating
// the frozen base, every task's style, and the knowledge base. The manifest
// carries all structure (shapes, task list, hyperparameters); blobs are raw
// row-major little-endian float32 with no header. Save -> load -> save is
// byte-identical.

struct Checkpoint {
  int format_version = 1;
  ArchConfig config;
  TrainHyper hyper;
  BaseModel base;
  std::map<int, StyleSet> styles;            // task_id >= 1
  std::map<int, CompressedStyle> compressed; // factorized tasks, same id space
  KnowledgeBase kb;
};

void save_checkpoint(const std::string& dir, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& dir);

// FNV-1a over every file (relative path + contents), for round-trip checks.
uint64_t checkpoint_dir_hash(const std::string& dir);

}  // namespace ganmem
