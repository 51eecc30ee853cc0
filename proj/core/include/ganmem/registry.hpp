#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ganmem/model.hpp"
#include "ganmem/modulation.hpp"

namespace ganmem {

// One task's trainable modulation parameters, keyed by layer path. Covers
// exactly the modulated layers of the bound architecture.
struct StyleSet {
  int task_id = -1;
  int class_count = 1;
  uint64_t arch_fingerprint = 0;
  std::map<std::string, FCStyle> fc;
  std::map<std::string, ConvStyle> conv;

  uint64_t hash() const;
  bool finite() const;
};

// Fresh neutral style (scales 1, shifts 0, biases 0) for a new task.
StyleSet make_new_style(const BaseModel& base, int task_id, int class_count = 1);
// Source identity style {gamma=sigma, beta=mu, 0, Gamma=S, B=M, 0}.
StyleSet make_source_style(const BaseModel& base, int class_count = 1);

struct GroupMask {
  bool scales = true;
  bool shifts = true;
  bool biases = true;
  static GroupMask all() { return {true, true, true}; }
  static GroupMask none() { return {false, false, false}; }
};

struct BlockMask {
  // flag per block plus the FC head; layer paths are matched by block tag.
  bool fc = true;
  std::vector<bool> blocks;  // indexed by block number; empty = all on

  static BlockMask all() { return {}; }
  static BlockMask none(int n_blocks) {
    BlockMask m;
    m.fc = false;
    m.blocks.assign(static_cast<size_t>(n_blocks), false);
    return m;
  }
  bool covers(const std::string& layer_path) const;
};

// Ordered, append-only store of per-task styles. Task 0 is always the source
// identity style. Entries are immutable once registered.
class TaskRegistry {
 public:
  explicit TaskRegistry(const BaseModel& base);

  void register_task(const StyleSet& style);
  const StyleSet& get(int task_id) const;
  bool has(int task_id) const;
  std::vector<int> task_ids() const;
  uint64_t hash_excluding(int task_id) const;
  uint64_t arch_fingerprint() const { return fingerprint_; }

  // Per-layer, per-group selection between the task's style and the source
  // identity style: a parameter comes from the task iff its group is on and
  // its layer's block is on; otherwise from the source.
  StyleSet compose(int task_id, const GroupMask& groups, const BlockMask& blocks) const;

  // (1-lambda)*style_a + lambda*style_b elementwise; lambda in [0,1].
  StyleSet interpolate(int task_a, int task_b, double lambda) const;

 private:
  const BaseModel* base_;
  uint64_t fingerprint_;
  std::map<int, StyleSet> tasks_;
};

}  // namespace ganmem
