#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ganmem/data.hpp"
#include "ganmem/model.hpp"
#include "ganmem/registry.hpp"

namespace ganmem {

struct TrainHyper {
  double lr = 1e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.99;
  double r1_gamma = 10.0;
  // weight of the class-head cross-entropy terms in conditional training; the
  // realness score is label-independent, so this is the only pressure tying a
  // requested label to the matching style of image
  double aux_ce_weight = 1.0;
  int batch_size = 16;
  int steps = 200;
  uint64_t seed = 0;
  int fid_every = 0;  // 0 disables periodic FID logging

  void validate() const;
};

// Non-saturating logistic losses on pre-sigmoid scores.
//   loss_D = mean softplus(-d_real) + mean softplus(d_fake)
//   loss_G = mean softplus(-d_fake)
std::pair<ad::Var, ad::Var> gan_losses(const ad::Var& d_real, const ad::Var& d_fake);

// Mean softmax cross entropy of logits [n, k] against integer labels.
ad::Var cross_entropy(const ad::Var& logits, const std::vector<int>& labels);

// weight * mean(max(0, |x| - 1)^2): trains generated pixels into the valid
// [-1,1] range without a saturating output map. Zero (no gradient) in range.
ad::Var range_penalty(const ad::Var& images, double weight);
inline constexpr double kPixelRangeWeight = 10.0;

// (gamma/2) * E_batch ||grad_x D(x)||^2, differentiable w.r.t. the
// discriminator parameters inside `dvars`.
ad::Var r1_penalty(const BaseModel& base, const ModelVars& dvars, const Tensor& x_real,
                   const std::vector<int>& labels, double gamma);
// Same penalty from an already-built score graph; `x` must be the leaf the
// scores were computed from (first tensor dimension is the batch).
ad::Var r1_term(const ad::Var& x, const ad::Var& d, double gamma);

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

 private:
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct MetricsRecord {
  int step = 0;
  double loss_d = 0, loss_g = 0, r1 = 0;
  double fid = -1;  // < 0 when not evaluated at this step
};

// Bind a StyleSet's tensors as leaf variables; `params` receives pointers to
// the style tensors in the same order as `leaves`, for optimizer write-back.
StyleVarSet style_to_vars(StyleSet& style, std::vector<ad::Var>* leaves,
                          std::vector<Tensor*>* params);
StyleVarSet style_to_const_vars(const StyleSet& style);

using FidCallback = std::function<double(const Tensor& images)>;

struct TrainResult {
  StyleSet style;
  std::vector<MetricsRecord> log;
};

// Train only the style parameters of a new task on `data`; the base model is
// never written (asserted via weight hash).
TrainResult train_task(const BaseModel& base, const Dataset& data,
                       const TrainHyper& hyper, int task_id,
                       Ablation ablation = Ablation::None,
                       const FidCallback& fid_cb = nullptr);

struct FinetuneResult {
  BaseModel model;
  std::vector<MetricsRecord> log;
};

// Baseline: fine-tune every parameter of a copy of the base.
FinetuneResult finetune_all(const BaseModel& base, const Dataset& data,
                            const TrainHyper& hyper,
                            const FidCallback& fid_cb = nullptr);

// Deterministic sampling from a registered style.
Tensor sample_images(const BaseModel& base, const StyleSet& style, int n,
                     uint64_t seed, const std::vector<int>& labels = {});

int64_t style_param_count(const BaseModel& base, int class_count = 1);
int64_t full_param_count(const BaseModel& base);

// NDJSON line per record: {"step":..,"loss_d":..,"loss_g":..,"r1":..,"fid":..}
std::string metrics_to_ndjson(const std::vector<MetricsRecord>& log);

}  // namespace ganmem
