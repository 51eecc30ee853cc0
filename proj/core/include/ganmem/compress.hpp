#pragma once

#include <map>
#include <string>
#include <vector>

#include "ganmem/train.hpp"

namespace ganmem {

// Low-rank factorized training of the Gamma/B style matrices through a
// shared, append-only knowledge base:
//   Gamma_t = L_kb Diag(lambda_t) R_kb^T + E_t,  E_t = U Diag(s) V^T.
// After training, E_t is SVD-truncated to X% matrix energy and the retained
// singular vectors are appended to the knowledge base.

struct EnergyPolicy {
  // percent of matrix energy kept per block; blocks absent here (and all FC
  // and vector parameters) are trained naively
  std::map<int, double> block_energy = {{0, 80.0}, {1, 80.0}, {2, 90.0}, {3, 95.0}};
  double reg_weight = 0.01;
  bool compress_discriminator = true;

  // < 0 when the block is not compressed
  double energy_for(const std::string& layer_path, bool is_disc) const;
  void validate() const;
};

struct KnowledgeBase {
  struct Entry {
    Tensor L;  // [C_out, k]
    Tensor R;  // [C_in, k]
    int width() const { return L.size() ? L.dim(1) : 0; }
  };
  // keyed by "<layer_path>/<Gamma|B>"
  std::map<std::string, Entry> entries;
  // per compressed task: KB width per key at that task's training start
  std::map<int, std::map<std::string, int>> snapshots;

  int n_tasks() const { return static_cast<int>(snapshots.size()); }
  uint64_t hash() const;
};

// One factorized matrix: coefficients on the KB snapshot plus the retained
// residual factors.
struct MatrixFactor {
  Tensor lambda;  // [k_snapshot]
  Tensor U;       // [C_out, r]
  Tensor s;       // [r]
  Tensor V;       // [C_in, r]
  int kb_snapshot = 0;

  int64_t param_count() const {
    return lambda.size() + U.size() + s.size() + V.size();
  }
};

struct CompressedStyle {
  int task_id = -1;
  int class_count = 1;
  uint64_t arch_fingerprint = 0;
  // vector parameters and uncovered Gamma/B, stored densely
  StyleSet dense;
  // covered layers, keyed like the knowledge base
  std::map<std::string, MatrixFactor> factors;
};

// Gamma_t = L[:, :k] Diag(lambda) R[:, :k]^T + U Diag(s) V^T using the task's
// recorded snapshot width k.
Tensor reconstruct(const KnowledgeBase& kb, const std::string& key,
                   const MatrixFactor& f);

// Materialize a registrable StyleSet (covered matrices reconstructed).
StyleSet materialize(const BaseModel& base, const KnowledgeBase& kb,
                     const CompressedStyle& cs);

// r * || eta ⊙ s ||_1 with eta = 1 for the first task and
// eta_j = 0.1 + logistic(10*j/J), j = 0..J-1, for later tasks.
double sparsity_penalty(const Tensor& s, int task_index, double reg_weight);
ad::Var sparsity_penalty_var(const ad::Var& s, int task_index, double reg_weight);
Tensor sparsity_weights(int length, int task_index);

struct SvdTriple {
  Tensor U, s, V;  // descending singular values
};

// Keep the smallest prefix of singular values whose cumulative squared sum
// reaches (X/100) of the total; X = 100 keeps everything.
SvdTriple energy_truncate(const Tensor& m, double x_percent);
SvdTriple full_svd(const Tensor& m);

// Append retained columns; existing columns are never modified.
void kb_update(KnowledgeBase& kb, const std::string& key, const Tensor& u_hat,
               const Tensor& v_hat);

struct CompressResult {
  CompressedStyle style;
  StyleSet materialized;
  std::vector<MetricsRecord> log;
  int64_t naive_matrix_params = 0;       // 2*C_out*C_in over covered layers
  int64_t compressed_matrix_params = 0;  // stored coefficients over covered layers
};

// The gan-engine loop with covered Gamma/B replaced by their factorized
// parameterization and the sparsity penalty added to each side's loss.
// Grows `kb` on success.
CompressResult train_task_compressed(const BaseModel& base, const Dataset& data,
                                     const TrainHyper& hyper, int task_id,
                                     KnowledgeBase& kb, const EnergyPolicy& policy,
                                     const FidCallback& fid_cb = nullptr);

}  // namespace ganmem
